"""Variational Bayesian phase estimation with rotations and one-axis twists.

Two exact simulation engines are provided: a symmetric-subspace engine for
noiseless protocols (:mod:`collective`) and a tensor-network engine for
correlated dephasing and noisy twists (:mod:`tensornet`, backed by the
permutation-invariant operator algebra in :mod:`pinv`).
"""

__version__ = "0.1.0"
