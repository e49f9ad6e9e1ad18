"""The seven DID systems compared by the pipeline, computed in memory.

Given phonotactic and acoustic views for a train and a test split this
builds: each view alone, the CCA representation, the LDA+WCCN versions of
the CCA and acoustic spaces, their concatenation, and score-level fusion of
the two single-view classifiers.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import classifier, discriminant, fusion
from .classifier import TrainConfig

SYSTEM_NAMES = (
    "X_P",
    "X_A",
    "Z_C",
    "Z_C+LDA+WCCN (A)",
    "X_A+LDA+WCCN (B)",
    "A+B",
    "score(X_P,X_A)",
)


@dataclass(frozen=True)
class SystemSettings:
    cca_c: int = 300
    cca_ridge: float = 1e-6
    lda_m: int = None
    lda_ridge: float = 1e-6
    wccn_ridge: float = 1e-6
    order: str = "lda_wccn"
    train: TrainConfig = field(default_factory=TrainConfig)
    score_weights: tuple = (0.5, 0.5)
    score_space: str = "prob"


def feature_spaces(xp_tr, xa_tr, y_tr, xp_te, xa_te, s: SystemSettings):
    """Train/test matrices for every feature-level system, plus fitted models."""
    cca = fusion.fit_cca(xp_tr, xa_tr, s.cca_c, s.cca_ridge)
    zc_tr = fusion.transform(cca, xp_tr, xa_tr)
    zc_te = fusion.transform(cca, xp_te, xa_te)
    lda_z, wccn_z = discriminant.fit_lda_wccn(zc_tr, y_tr, s.lda_m, s.lda_ridge, s.wccn_ridge, s.order)
    lda_a, wccn_a = discriminant.fit_lda_wccn(xa_tr, y_tr, s.lda_m, s.lda_ridge, s.wccn_ridge, s.order)
    a_tr = discriminant.apply_lda_wccn(lda_z, wccn_z, zc_tr, s.order)
    a_te = discriminant.apply_lda_wccn(lda_z, wccn_z, zc_te, s.order)
    b_tr = discriminant.apply_lda_wccn(lda_a, wccn_a, xa_tr, s.order)
    b_te = discriminant.apply_lda_wccn(lda_a, wccn_a, xa_te, s.order)
    spaces = {
        SYSTEM_NAMES[0]: (xp_tr, xp_te),
        SYSTEM_NAMES[1]: (xa_tr, xa_te),
        SYSTEM_NAMES[2]: (zc_tr, zc_te),
        SYSTEM_NAMES[3]: (a_tr, a_te),
        SYSTEM_NAMES[4]: (b_tr, b_te),
        SYSTEM_NAMES[5]: (np.hstack([a_tr, b_tr]), np.hstack([a_te, b_te])),
    }
    models = {"cca": cca, "lda_zc": lda_z, "wccn_zc": wccn_z, "lda_xa": lda_a, "wccn_xa": wccn_a}
    return spaces, models


def compare_systems(xp_tr, xa_tr, y_tr, xp_te, xa_te, s: SystemSettings, label_set):
    """Return ``{system: (dim, test posteriors)}`` for all seven systems."""
    spaces, _ = feature_spaces(xp_tr, xa_tr, y_tr, xp_te, xa_te, s)
    out = {}
    for name, (tr, te) in spaces.items():
        model = classifier.train_softmax(tr, y_tr, s.train, label_set)
        out[name] = (tr.shape[1], classifier.predict_proba(model, te))
    fused = classifier.score_fuse([out["X_P"][1], out["X_A"][1]], s.score_weights, s.score_space)
    out[SYSTEM_NAMES[6]] = (xp_tr.shape[1] + xa_tr.shape[1], fused)
    return out


def accuracies(results, y_te) -> dict:
    y_te = np.asarray(y_te)
    return {name: float(np.mean(classifier.predict_index(p) == y_te)) for name, (_, p) in results.items()}
