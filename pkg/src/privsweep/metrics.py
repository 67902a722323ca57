"""Scalar report metrics.

utility_loss compares a noised model against its noise-free twin; it can
legitimately go negative when noise happens to help (ensembling, implicit
regularization) and is recorded as-is rather than clamped at zero.
"""

from __future__ import annotations

from .attack import AttackOutcome
from .errors import ParameterError, UndefinedMetricError


def utility_loss(acc_private: float, acc_nonprivate: float) -> float:
    """Relative accuracy drop: 1 - acc_private / acc_nonprivate."""
    for name, value in (("acc_private", acc_private), ("acc_nonprivate", acc_nonprivate)):
        if not 0.0 <= value <= 1.0:
            raise ParameterError(f"{name} must be a fraction in [0, 1], got {value}")
    if acc_nonprivate == 0.0:
        raise UndefinedMetricError(
            "utility loss is undefined when the noise-free model scores zero"
        )
    return 1.0 - acc_private / acc_nonprivate


def privacy_leakage(outcome: AttackOutcome) -> float:
    """Attack advantage over guessing: true positive rate minus false
    positive rate. Zero means the attack learned nothing; negative values
    (worse than guessing) are reported as-is."""
    return outcome.tpr - outcome.fpr


def true_revealed(outcome: AttackOutcome) -> int:
    """How many training-set members the attack correctly flagged."""
    return outcome.true_positives
