import numpy as np

from protocol.models import is_loss_base

from engine.models import TrainingTrace


def select_model(trace: TrainingTrace, base: str) -> int:
    """ epoch whose parameters become the final model; ties go to the earliest epoch """
    records = trace.completed()
    if not records:
        return 0

    if base == 'LAST':
        return records[-1].epoch

    values = np.array([record.monitored(base) for record in records], dtype=np.float64)
    if is_loss_base(base):
        index = int(np.argmin(np.where(np.isnan(values), np.inf, values)))
    else:
        index = int(np.argmax(np.where(np.isnan(values), -np.inf, values)))
    return records[index].epoch
