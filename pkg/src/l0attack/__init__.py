"""Sparse adversarial perturbations for time-series classifiers.

Smooth L0 penalty with an adaptive sharpness schedule, wrapped around PGD and
CW attacks, plus the metrics used to compare it against L1/L2/no penalty.
"""

__version__ = "0.1.0"
