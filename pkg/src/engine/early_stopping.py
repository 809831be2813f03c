from typing import Optional

from protocol.models import IMPROVEMENT_EPSILON, is_loss_base

from engine.models import is_improvement


class EarlyStopState:
    """ patience counter over one monitored base """
    def __init__(self, base: str, patience: int, epsilon: float = IMPROVEMENT_EPSILON):
        self.base = base
        self.patience = patience
        self.epsilon = epsilon
        self.minimize = is_loss_base(base)
        self.best_value: Optional[float] = None
        self.best_epoch: Optional[int] = None
        self.epochs_since_best = 0
        self.stopped = False

    def improved(self, value: Optional[float]) -> bool:
        return is_improvement(value, self.best_value, self.minimize, self.epsilon)


def early_stop_update(state: EarlyStopState, monitored_value: float, epoch: int) -> EarlyStopState:
    """ records one epoch; stopped is set once patience epochs pass without improvement """
    if state.stopped:
        return state

    if state.improved(monitored_value):
        state.best_value = monitored_value
        state.best_epoch = epoch
        state.epochs_since_best = 0
    else:
        state.epochs_since_best += 1
        if state.epochs_since_best >= state.patience:
            state.stopped = True

    return state
