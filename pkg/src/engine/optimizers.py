from typing import Optional

import torch

from app.exceptions import NonFiniteUpdate, ValidationException, ShapeError


# update rules, all with weight decay added to the gradient as an L2 term
OPTIMIZERS = {
    'SGD': torch.optim.SGD,
    'ADAM': torch.optim.Adam,
    'ADADELTA': torch.optim.Adadelta,
    'RMSPROP': torch.optim.RMSprop,
    'ADAGRAD': torch.optim.Adagrad,
}


class OptimizerState:
    """ optimizer kind plus the running moments torch keeps for it """
    def __init__(self, kind: str, params: list[torch.Tensor], lr: float, weight_decay: float):
        if kind not in OPTIMIZERS:
            raise ValidationException('optimizer', f'options: {list(OPTIMIZERS)}')
        self.kind = kind
        self.params = list(params)
        self.optimizer = OPTIMIZERS[kind](self.params, lr=lr, weight_decay=weight_decay)
        self.steps = 0

    def set_lr(self, lr: float):
        for group in self.optimizer.param_groups:
            group['lr'] = lr

    @property
    def lr(self) -> float:
        return self.optimizer.param_groups[0]['lr']


def optimizer_step(kind: str, params: list[torch.Tensor], grads: list[torch.Tensor], lr: float,
                   weight_decay: float, state: Optional[OptimizerState] = None
                   ) -> tuple[list[torch.Tensor], OptimizerState]:
    """ applies one update of the given kind in place and returns the parameters with the carried state """
    params = list(params)
    grads = list(grads)
    if len(params) != len(grads):
        raise ShapeError('grads', f'{len(grads)} gradients for {len(params)} parameters')
    for param, grad in zip(params, grads):
        if param.shape != grad.shape:
            raise ShapeError('grads', f'gradient shape {tuple(grad.shape)} does not match {tuple(param.shape)}')

    if state is None:
        state = OptimizerState(kind, params, lr, weight_decay)
    elif state.kind != kind:
        raise ValidationException('optimizer', f'state belongs to {state.kind}, not {kind}')

    for group in state.optimizer.param_groups:
        group['lr'] = lr
        group['weight_decay'] = weight_decay
    for param, grad in zip(params, grads):
        param.grad = grad

    state.optimizer.step()
    state.steps += 1

    with torch.no_grad():
        if not all(torch.isfinite(param).all() for param in params):
            raise NonFiniteUpdate(f'{kind} step {state.steps} produced non-finite parameters')

    return params, state
