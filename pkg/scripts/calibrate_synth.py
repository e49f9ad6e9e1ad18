"""Sweep the synthetic generator and report median test accuracy per system.

Used to pick the settings of the ordering check in the acceptance suite:
each single view should land around 45-60% and the fused systems above it.

    python3 scripts/calibrate_synth.py --noise-p 3.5 --noise-a 2.5 --seeds 5
"""
import argparse
import time

import numpy as np

from didvsm.classifier import TrainConfig
from didvsm.corpus import SynthConfig, synth_two_view
from didvsm.systems import SYSTEM_NAMES, SystemSettings, accuracies, compare_systems


def split(n_per_class, classes, n_train):
    idx = np.arange(n_per_class * classes).reshape(classes, n_per_class)
    return idx[:, :n_train].ravel(), idx[:, n_train:].ravel()


def run(args, seed):
    cfg = SynthConfig(class_sep=args.class_sep, private_sep=args.private_sep)
    d, xp, xa = synth_two_view(args.n_per_class, args.classes, args.shared_dim,
                               args.noise_p, args.noise_a, seed, cfg)
    y = d.label_indices()
    tr, te = split(args.n_per_class, args.classes, args.n_train)
    s = SystemSettings(cca_c=args.cca_c, train=TrainConfig(batch=10, seed=seed))
    res = compare_systems(xp[tr], xa[tr], y[tr], xp[te], xa[te], s, tuple(range(args.classes)))
    return accuracies(res, y[te])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-per-class", type=int, default=260)
    ap.add_argument("--n-train", type=int, default=200)
    ap.add_argument("--classes", type=int, default=5)
    ap.add_argument("--shared-dim", type=int, default=4)
    ap.add_argument("--noise-p", type=float, nargs="+", default=[3.5])
    ap.add_argument("--noise-a", type=float, nargs="+", default=[2.5])
    ap.add_argument("--class-sep", type=float, default=0.8)
    ap.add_argument("--private-sep", type=float, default=1.5)
    ap.add_argument("--cca-c", type=int, default=6)
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()

    base = args
    for npn in base.noise_p:
        for nan in base.noise_a:
            args = argparse.Namespace(**{**vars(base), "noise_p": npn, "noise_a": nan})
            t0 = time.perf_counter()
            accs = [run(args, seed) for seed in range(args.seeds)]
            med = {k: float(np.median([a[k] for a in accs])) for k in SYSTEM_NAMES}
            print(f"noise_p={npn} noise_a={nan} ({time.perf_counter() - t0:.1f}s)")
            for k in SYSTEM_NAMES:
                print(f"  {k:<20} {med[k]:.3f}")


if __name__ == "__main__":
    main()
