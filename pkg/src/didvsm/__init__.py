"""Vector space models for spoken dialect identification.

Phonotactic (n-gram counts + truncated SVD) and acoustic (GMM-UBM + i-vector)
views of each utterance, fused by canonical correlation analysis, refined by
LDA and WCCN, and classified with an elastic-net softmax back-end.
"""
__version__ = "0.1.0"
