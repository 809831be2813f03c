import json
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from app.exceptions import SchemaError, BadRequestException
from app.storage import atomic_write

from architectures.models import ModelSpec
from architectures.networks import build_model


# checkpoint.npz layout:
#   __spec__   utf-8 json of the ModelSpec
#   __meta__   utf-8 json with epoch and format version
#   <name>     one float64 array per state_dict entry, named as in the state_dict
CHECKPOINT_FORMAT = 1


class Checkpoint:
    """ parameters of a model at one epoch, detached from the live model """
    def __init__(self, spec: ModelSpec, epoch: int, state: dict[str, torch.Tensor]):
        self.spec = spec
        self.epoch = epoch
        self.state = {name: tensor.detach().clone() for name, tensor in state.items()}

    @classmethod
    def capture(cls, model: nn.Module, epoch: int) -> 'Checkpoint':
        return cls(model.spec, epoch, model.state_dict())

    def restore(self, model: nn.Module) -> nn.Module:
        model.load_state_dict(self.state)
        return model

    def build(self) -> nn.Module:
        model = build_model(self.spec, seed=0)
        return self.restore(model)


def _text(value: str) -> np.ndarray:
    return np.frombuffer(value.encode('utf-8'), dtype=np.uint8)


def save_checkpoint(checkpoint: Checkpoint, path: Path | str) -> Path:
    arrays = {name: tensor.cpu().to(torch.float64).numpy() for name, tensor in checkpoint.state.items()}
    arrays['__spec__'] = _text(json.dumps(checkpoint.spec.json()))
    arrays['__meta__'] = _text(json.dumps({'epoch': checkpoint.epoch, 'format': CHECKPOINT_FORMAT}))
    with atomic_write(path, mode='wb') as handle:
        np.savez(handle, **arrays)
    return Path(path)


def load_checkpoint(path: Path | str) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise BadRequestException(f'no such checkpoint {path}')

    with np.load(path) as archive:
        if '__spec__' not in archive.files or '__meta__' not in archive.files:
            raise SchemaError(f'{path.name} is not a harbench checkpoint')
        spec = ModelSpec(json.loads(archive['__spec__'].tobytes().decode('utf-8')))
        meta = json.loads(archive['__meta__'].tobytes().decode('utf-8'))
        template = build_model(spec, seed=0).state_dict()
        state = {}
        for name, tensor in template.items():
            if name not in archive.files:
                raise SchemaError(f'{path.name} is missing parameter {name}')
            state[name] = torch.from_numpy(archive[name]).to(tensor.dtype).reshape(tensor.shape)

    return Checkpoint(spec, int(meta['epoch']), state)
