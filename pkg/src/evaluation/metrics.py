import numpy as np
from sklearn.metrics import confusion_matrix

from app.exceptions import ValidationException, EmptyMatrix


class ConfusionMatrix:
    """ counts[true][pred] over evaluated windows """
    def __init__(self, counts):
        self.counts = np.asarray(counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise ValidationException('counts', 'confusion matrix must be square')
        if (self.counts < 0).any():
            raise ValidationException('counts', 'confusion matrix counts must be non-negative')
        self.n_classes = self.counts.shape[0]

    @classmethod
    def from_predictions(cls, y_true, y_pred, n_classes: int) -> 'ConfusionMatrix':
        return cls(confusion_matrix(np.asarray(y_true), np.asarray(y_pred), labels=list(range(n_classes))))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def json(self) -> dict:
        return {'n_classes': self.n_classes, 'counts': self.counts.tolist()}


def per_class_f1(cm: ConfusionMatrix) -> np.ndarray:
    """ 2PR/(P+R) per class, written as 2tp/(2tp+fp+fn); 0 when the class never occurs nor is predicted """
    tp = np.diag(cm.counts).astype(np.float64)
    fp = cm.counts.sum(axis=0) - tp
    fn = cm.counts.sum(axis=1) - tp
    denominator = 2 * tp + fp + fn
    return np.divide(2 * tp, denominator, out=np.zeros_like(tp), where=denominator > 0)


def macro_f1(cm: ConfusionMatrix) -> float:
    """ unweighted mean of per-class F1, zero-support classes included as 0 """
    if cm.total == 0:
        raise EmptyMatrix('cannot score an empty confusion matrix')
    return float(per_class_f1(cm).mean())


def macro_f1_score(y_true, y_pred, n_classes: int) -> float:
    return macro_f1(ConfusionMatrix.from_predictions(y_true, y_pred, n_classes))
