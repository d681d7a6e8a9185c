"""Confusion-matrix based accuracy measures."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EvalError


def confusion_matrix(truth, pred, classes: int) -> np.ndarray:
    """Counts with rows indexed by true class and columns by predicted class (zero-based)."""
    truth = np.asarray(truth, dtype=np.int64).ravel()
    pred = np.asarray(pred, dtype=np.int64).ravel()
    if truth.shape != pred.shape:
        raise EvalError(f"{truth.size} labels but {pred.size} predictions")
    if truth.size == 0:
        raise EvalError("cannot evaluate an empty test set")
    for name, v in (("label", truth), ("prediction", pred)):
        if v.min() < 0 or v.max() >= classes:
            raise EvalError(f"{name} outside [0, {classes}): {v.min()}..{v.max()}")
    cm = np.zeros((classes, classes), dtype=np.int64)
    np.add.at(cm, (truth, pred), 1)
    return cm


def overall_accuracy(cm: np.ndarray) -> float:
    return float(np.trace(cm) / cm.sum())


def per_class_accuracy(cm: np.ndarray) -> np.ndarray:
    """Recall per class; NaN for classes with no test pixels."""
    support = cm.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(support > 0, np.diag(cm) / np.maximum(support, 1), np.nan)


def average_accuracy(cm: np.ndarray) -> float:
    """Mean recall over the classes that occur in the test set."""
    return float(np.nanmean(per_class_accuracy(cm)))


def kappa(cm: np.ndarray) -> float:
    n = cm.sum()
    p_o = np.trace(cm) / n
    p_e = float(cm.sum(axis=0) @ cm.sum(axis=1)) / (n * n)
    if p_e == 1.0:
        # every pixel in one class and always predicted as such
        return 1.0 if p_o == 1.0 else 0.0
    return float((p_o - p_e) / (1.0 - p_e))


@dataclass
class EvalReport:
    confusion: np.ndarray
    per_class_acc: np.ndarray
    oa: float
    aa: float
    kappa: float

    @classmethod
    def from_confusion(cls, cm) -> "EvalReport":
        cm = np.asarray(cm, dtype=np.int64)
        if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
            raise EvalError(f"confusion matrix must be square, got shape {cm.shape}")
        if (cm < 0).any():
            raise EvalError("confusion matrix has negative counts")
        if cm.sum() == 0:
            raise EvalError("cannot evaluate an empty test set")
        return cls(cm, per_class_accuracy(cm), overall_accuracy(cm),
                   average_accuracy(cm), kappa(cm))

    @classmethod
    def from_predictions(cls, truth, pred, classes: int) -> "EvalReport":
        return cls.from_confusion(confusion_matrix(truth, pred, classes))


@dataclass
class SessionSummary:
    """Per-session reports and their arithmetic means."""

    sessions: list[EvalReport] = field(default_factory=list)

    def _values(self, attr):
        if not self.sessions:
            raise EvalError("no sessions to summarise")
        return np.array([getattr(r, attr) for r in self.sessions])

    @property
    def oa(self) -> float:
        return float(self._values("oa").mean())

    @property
    def aa(self) -> float:
        return float(self._values("aa").mean())

    @property
    def kappa(self) -> float:
        return float(self._values("kappa").mean())

    @property
    def per_class_acc(self) -> np.ndarray:
        return self._values("per_class_acc").mean(axis=0)

    @property
    def confusion(self) -> np.ndarray:
        """Counts summed over sessions."""
        return self._values("confusion").sum(axis=0)
