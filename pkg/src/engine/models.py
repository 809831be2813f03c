import math
from typing import Optional


# trace column for each monitored base
BASE_COLUMNS = {
    'TRAIN_LOSS': 'train_loss',
    'VAL_LOSS': 'val_loss',
    'TRAIN_METRIC': 'train_f1',
    'VAL_METRIC': 'val_f1',
}
TRACE_COLUMNS = ['epoch', 'train_loss', 'val_loss', 'train_f1', 'val_f1', 'lr', 'checkpoint', 'diverged']

STOP_MAX_EPOCH = 'max_epoch'
STOP_EARLY = 'early_stopping'
STOP_DIVERGED = 'diverged'


class EpochRecord:
    """ what one epoch of training produced """
    def __init__(self, data: dict):
        self.epoch: int = int(data.get('epoch'))
        self.train_loss: float = float(data.get('train_loss', math.nan))
        self.val_loss: float = float(data.get('val_loss', math.nan))
        self.train_f1: float = float(data.get('train_f1', math.nan))
        self.val_f1: float = float(data.get('val_f1', math.nan))
        self.lr: float = float(data.get('lr', math.nan))
        self.checkpoint: bool = bool(data.get('checkpoint', False))
        self.diverged: bool = bool(data.get('diverged', False))

    def monitored(self, base: str) -> float:
        return getattr(self, BASE_COLUMNS[base])

    def json(self) -> dict:
        return {column: getattr(self, column) for column in TRACE_COLUMNS}


class TrainingTrace:
    """ per-epoch log of one training run, ordered by epoch """
    def __init__(self, records: Optional[list[EpochRecord]] = None, selected_epoch: Optional[int] = None,
                 stop_reason: Optional[str] = None):
        self.records: list[EpochRecord] = list(records or [])
        self.selected_epoch = selected_epoch
        self.stop_reason = stop_reason

    def append(self, record: EpochRecord):
        if self.records and record.epoch != self.records[-1].epoch + 1:
            raise ValueError(f'epoch {record.epoch} does not follow {self.records[-1].epoch}')
        self.records.append(record)

    @property
    def diverged(self) -> bool:
        return any(record.diverged for record in self.records)

    def completed(self) -> list[EpochRecord]:
        """ epochs that finished with a full evaluation """
        return [record for record in self.records if not record.diverged]

    def column(self, name: str) -> list[float]:
        return [getattr(record, name) for record in self.records]

    def record(self, epoch: int) -> EpochRecord:
        return next(record for record in self.records if record.epoch == epoch)

    def __len__(self) -> int:
        return len(self.records)

    def json(self) -> dict:
        return {
            'records': [record.json() for record in self.records],
            'selected_epoch': self.selected_epoch,
            'stop_reason': self.stop_reason,
        }


def is_improvement(value: Optional[float], best: Optional[float], minimize: bool, epsilon: float) -> bool:
    """ better than best by more than epsilon; nan never improves, anything beats no best """
    if value is None or math.isnan(value):
        return False
    if best is None:
        return True
    if minimize:
        return value < best - epsilon
    return value > best + epsilon
