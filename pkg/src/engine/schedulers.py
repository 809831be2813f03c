import math
from typing import Optional

import torch
from torch.optim.lr_scheduler import LambdaLR, ReduceLROnPlateau

from protocol.models import TrainingProtocol, IMPROVEMENT_EPSILON, is_loss_base


LR_FLOOR = 1e-8


def step_lr(epoch: int, lr0: float, step_size: int, gamma: float) -> float:
    return lr0 * gamma ** (epoch // step_size)


def cosine_lr(epoch: int, lr0: float, t_max: int, eta_min: float = 0.0) -> float:
    t = min(epoch, t_max)
    return eta_min + 0.5 * (lr0 - eta_min) * (1 + math.cos(math.pi * t / t_max))


def cosine_restart_lr(epoch: int, lr0: float, t_restart: int, eta_min: float = 0.0) -> float:
    return cosine_lr(epoch % t_restart, lr0, t_restart, eta_min)


def restart_period(max_epoch: int) -> int:
    """ three cosine cycles per run """
    return math.ceil(max_epoch / 3)


class SchedulerState:
    """ learning-rate schedule attached to an optimizer; epoch_counter counts completed epochs.
    without an optimizer the schedule drives a parameterless holder, which is enough to read the rates """
    def __init__(self, kind: str, lr0: float, step_size: int = 10, gamma: float = 0.1, patience: int = 10,
                 base: str = 'VAL_LOSS', t_max: Optional[int] = None, t_restart: Optional[int] = None,
                 eta_min: float = 0.0, epsilon: float = IMPROVEMENT_EPSILON,
                 optimizer: Optional[torch.optim.Optimizer] = None):
        self.kind = kind
        self.lr0 = lr0
        self.epoch_counter = 0
        self.step_size = step_size
        self.gamma = gamma
        self.patience = patience
        self.base = base
        self.minimize = is_loss_base(base)
        self.reductions = 0
        self.t_max = t_max
        self.t_restart = t_restart
        self.eta_min = eta_min
        self.epsilon = epsilon

        if optimizer is None:
            optimizer = torch.optim.SGD([torch.zeros(1, requires_grad=True)], lr=lr0)
        for group in optimizer.param_groups:
            group['lr'] = lr0
        self.optimizer = optimizer
        self.scheduler = self._build()

    def _build(self):
        if self.kind == 'NONE':
            return None
        if self.kind == 'LR_PLATEAU':
            # torch reduces once the bad-epoch count exceeds its patience
            return ReduceLROnPlateau(self.optimizer, mode='min' if self.minimize else 'max', factor=self.gamma,
                                     patience=self.patience - 1, threshold=self.epsilon, threshold_mode='abs',
                                     min_lr=LR_FLOOR, eps=0.0)
        if self.kind == 'STEP':
            factor = lambda t: step_lr(t, self.lr0, self.step_size, self.gamma) / self.lr0
        elif self.kind == 'COS':
            factor = lambda t: cosine_lr(t, self.lr0, self.t_max, self.eta_min) / self.lr0
        elif self.kind == 'COS_RESTART':
            factor = lambda t: cosine_restart_lr(t, self.lr0, self.t_restart, self.eta_min) / self.lr0
        else:
            raise ValueError(f'unknown scheduler {self.kind}')
        return LambdaLR(self.optimizer, factor)

    @classmethod
    def for_protocol(cls, protocol: TrainingProtocol,
                     optimizer: Optional[torch.optim.Optimizer] = None) -> 'SchedulerState':
        return cls(protocol.scheduler, protocol.learning_rate,
                   step_size=protocol.scheduler_step_size, gamma=protocol.scheduler_gamma,
                   patience=protocol.scheduler_patience, base=protocol.scheduler_base,
                   t_max=protocol.max_epoch, t_restart=restart_period(protocol.max_epoch),
                   optimizer=optimizer)

    @property
    def current_lr(self) -> float:
        return self.optimizer.param_groups[0]['lr']


def scheduler_epoch_end(state: SchedulerState, monitored_value: Optional[float] = None) -> float:
    """ advances the schedule by one completed epoch and returns the learning rate for the next one """
    state.epoch_counter += 1
    before = state.current_lr

    if isinstance(state.scheduler, ReduceLROnPlateau):
        state.scheduler.step(math.nan if monitored_value is None else float(monitored_value))
        if state.current_lr < before:
            state.reductions += 1
    elif state.scheduler is not None:
        state.scheduler.step()

    for group in state.optimizer.param_groups:
        group['lr'] = max(group['lr'], LR_FLOOR)
    return state.current_lr
