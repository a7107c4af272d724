"""Positive-unlabeled detection of automated traffic.

Tooling to train classifiers when only part of one class is labeled:
selection-bias-aware estimators, a class-weighted SVM baseline, a bias
injection benchmark over an intrusion-detection corpus, and a web-log
sessionizer feeding the same models.
"""

__version__ = "0.1.0"

from .errors import ConfigError, DataError

__all__ = ["ConfigError", "DataError", "__version__"]
