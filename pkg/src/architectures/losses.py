import torch
import torch.nn as nn
import torch.nn.functional as F

from app.exceptions import NumericalError, LabelError, ValidationException


def cross_entropy(scores: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """ mean over the batch of -log softmax(score)[label] """
    return F.cross_entropy(scores, labels, reduction='mean')


LOSSES = {
    'CROSS_ENTROPY': cross_entropy,
}


def loss_and_grads(model: nn.Module, x: torch.Tensor, y: torch.Tensor,
                   loss: str = 'CROSS_ENTROPY') -> tuple[float, list[torch.Tensor]]:
    """ evaluates the batch loss and leaves its gradients on every parameter.
    the model's train/eval mode is left as the caller set it """
    if loss not in LOSSES:
        raise ValidationException('loss', f'options: {list(LOSSES)}')

    n_classes = model.spec.n_classes if hasattr(model, 'spec') else None
    if y.numel() and (int(y.min()) < 0 or (n_classes is not None and int(y.max()) >= n_classes)):
        raise LabelError(f'batch labels must be within [0, {n_classes})')

    model.zero_grad(set_to_none=True)
    value = LOSSES[loss](model(x), y)
    if not torch.isfinite(value):
        raise NumericalError(f'{loss.lower()} loss is {value.item()}')
    value.backward()

    grads = [p.grad if p.grad is not None else torch.zeros_like(p) for p in model.parameters()]
    return value.item(), grads

