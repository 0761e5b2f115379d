"""Binary confusion counts and the derived classification metrics.

Class 1 is the positive class throughout. Zero-denominator metrics are
reported as 0.0 and flagged by name in MetricReport.degenerate rather than
raising, so callers can render honest tables for degenerate predictors.
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass
class MetricReport:
    recall: float
    precision: float
    f1: float
    accuracy: float
    epochs_to_converge: int | None = None
    degenerate: tuple = ()

    def as_dict(self) -> dict:
        return {
            "recall": self.recall,
            "precision": self.precision,
            "f1": self.f1,
            "accuracy": self.accuracy,
            "epochs_to_converge": self.epochs_to_converge,
            "degenerate": list(self.degenerate),
        }


def accumulate(counts: ConfusionCounts, predicted: int, actual: int) -> ConfusionCounts:
    """Fold one (predicted, actual) pair into the counts; classes are 0/1."""
    if predicted not in (0, 1) or actual not in (0, 1):
        raise ValueError(f"class labels must be 0 or 1, got predicted={predicted} actual={actual}")
    if actual == 1:
        if predicted == 1:
            return ConfusionCounts(counts.tp + 1, counts.tn, counts.fp, counts.fn)
        return ConfusionCounts(counts.tp, counts.tn, counts.fp, counts.fn + 1)
    if predicted == 1:
        return ConfusionCounts(counts.tp, counts.tn, counts.fp + 1, counts.fn)
    return ConfusionCounts(counts.tp, counts.tn + 1, counts.fp, counts.fn)


def count_batch(counts: ConfusionCounts, predicted, actual) -> ConfusionCounts:
    """Accumulate aligned sequences of predictions and labels."""
    if len(predicted) != len(actual):
        raise ValueError(f"prediction/label length mismatch: {len(predicted)} vs {len(actual)}")
    for p, a in zip(predicted, actual):
        counts = accumulate(counts, int(p), int(a))
    return counts


def compute_metrics(counts: ConfusionCounts, epochs_to_converge: int | None = None) -> MetricReport:
    """Recall, precision, F1, accuracy from the counts.

    recall    = TP / (TP + FN)
    precision = TP / (TP + FP)
    f1        = 2 * precision * recall / (precision + recall)
    accuracy  = (TP + TN) / total
    """
    if counts.total <= 0:
        raise ValueError("metrics need at least one counted sample")
    degenerate = []

    if counts.tp + counts.fn > 0:
        recall = counts.tp / (counts.tp + counts.fn)
    else:
        recall = 0.0
        degenerate.append("recall")
    if counts.tp + counts.fp > 0:
        precision = counts.tp / (counts.tp + counts.fp)
    else:
        precision = 0.0
        degenerate.append("precision")
    if precision + recall > 0:
        f1 = 2.0 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        degenerate.append("f1")
    accuracy = (counts.tp + counts.tn) / counts.total

    return MetricReport(
        recall=recall,
        precision=precision,
        f1=f1,
        accuracy=accuracy,
        epochs_to_converge=epochs_to_converge,
        degenerate=tuple(degenerate),
    )
