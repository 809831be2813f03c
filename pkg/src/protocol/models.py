import json
import logging
import math
from typing import Any, Optional

from app.exceptions import ValidationException, RangeError, InconsistencyError
from app.str_tools import isBlank, parse_bool, split_list


# settings
PROTOCOL_OPTIMIZER_OPTIONS = ['SGD', 'ADAM', 'ADADELTA', 'RMSPROP', 'ADAGRAD']
PROTOCOL_SCHEDULER_OPTIONS = ['NONE', 'STEP', 'LR_PLATEAU', 'COS', 'COS_RESTART']
PROTOCOL_MONITOR_OPTIONS = ['TRAIN_LOSS', 'VAL_LOSS', 'TRAIN_METRIC', 'VAL_METRIC']
PROTOCOL_SELECTION_OPTIONS = ['LAST'] + PROTOCOL_MONITOR_OPTIONS
PROTOCOL_LOSS_OPTIONS = ['CROSS_ENTROPY']

PROTOCOL_LEARNING_RATE_RANGE = (1e-5, 1e-1)
PROTOCOL_WEIGHT_DECAY_RANGE = (1e-8, 1e-1)
PROTOCOL_BATCH_SIZE_RANGE = (16, 512)
PROTOCOL_MAX_EPOCH_RANGE = (10, 1500)
PROTOCOL_PATIENCE_RANGE = (1, 100)

# absolute improvement threshold shared by scheduler and early stopping
IMPROVEMENT_EPSILON = 1e-4

SCHEDULER_DEFAULTS = {
    'scheduler_base': 'VAL_LOSS',
    'scheduler_patience': 10,
    'scheduler_step_size': 10,
    'scheduler_gamma': 0.1,
}

# training factors, in document order
TRAINING_FIELDS = [
    'optimizer', 'learning_rate', 'weight_decay',
    'scheduler', 'scheduler_base', 'scheduler_patience', 'scheduler_step_size', 'scheduler_gamma',
    'batch_size', 'max_epoch',
    'early_stopping', 'early_stopping_base', 'early_stopping_patience',
    'model_selection_base', 'loss', 'seed',
]
# descriptive declarations; procedure and seeds record how a results directory was produced
CONTEXT_FIELDS = ['dataset', 'model', 'preprocessing', 'validation', 'notes', 'procedure', 'seeds']
PROTOCOL_FIELDS = TRAINING_FIELDS + CONTEXT_FIELDS

REQUIRED_FIELDS = [
    'optimizer', 'learning_rate', 'weight_decay', 'scheduler',
    'batch_size', 'max_epoch', 'early_stopping', 'model_selection_base',
]


def is_loss_base(base: str) -> bool:
    """ loss bases improve downwards, metric bases upwards """
    return base in ('TRAIN_LOSS', 'VAL_LOSS')


def _as_float(field: str, value: Any) -> float:
    if isinstance(value, bool):
        raise ValidationException(field, 'must be a number')
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise ValidationException(field, 'must be a number')
    if not math.isfinite(number):
        raise ValidationException(field, 'must be finite')
    return number


def _as_int(field: str, value: Any) -> int:
    number = _as_float(field, value)
    if number != int(number):
        raise ValidationException(field, 'must be an integer')
    return int(number)


def _ensure_option(field: str, value: Any, options: list[str]) -> str:
    option = str(value).strip().upper()
    if option not in options:
        raise ValidationException(field, f'options: {options}')
    return option


def _ensure_range(field: str, value, allowed: tuple):
    low, high = allowed
    if not low <= value <= high:
        raise RangeError(field, [low, high])


class TrainingProtocol:
    """ complete declarative record of one training procedure.
    construction parses and validates; instances are never mutated afterwards,
    use replace() to derive a variant """

    def __init__(self, data: dict):
        self.optimizer: str = data.get('optimizer')
        self.learning_rate: float = data.get('learning_rate')
        self.weight_decay: float = data.get('weight_decay')
        self.scheduler: str = data.get('scheduler')
        self.scheduler_base: Optional[str] = data.get('scheduler_base')
        self.scheduler_patience: Optional[int] = data.get('scheduler_patience')
        self.scheduler_step_size: Optional[int] = data.get('scheduler_step_size')
        self.scheduler_gamma: Optional[float] = data.get('scheduler_gamma')
        self.batch_size: int = data.get('batch_size')
        self.max_epoch: int = data.get('max_epoch')
        self.early_stopping: bool = data.get('early_stopping')
        self.early_stopping_base: Optional[str] = data.get('early_stopping_base')
        self.early_stopping_patience: Optional[int] = data.get('early_stopping_patience')
        self.model_selection_base: str = data.get('model_selection_base')
        self.loss: str = data.get('loss')
        self.seed: int = data.get('seed')

        self.dataset: Optional[str] = data.get('dataset')
        self.model: Optional[str] = data.get('model')
        self.preprocessing: Optional[str] = data.get('preprocessing')
        self.validation: Optional[str] = data.get('validation')
        self.notes: Optional[str] = data.get('notes')
        self.procedure: Optional[str] = data.get('procedure')
        self.seeds: Optional[str] = data.get('seeds')

        unknown = sorted(key for key in data.keys() if key not in PROTOCOL_FIELDS)
        if unknown:
            logging.warning(f'ignoring unknown protocol keys {unknown}')

        # do field validations
        self.validate()

    def validate(self) -> 'TrainingProtocol':
        """ checks every factor range and fills scheduler defaults, idempotent """
        for field in REQUIRED_FIELDS:
            if isBlank(getattr(self, field)):
                raise ValidationException(field=field, error='required')

        self.optimizer = _ensure_option('optimizer', self.optimizer, PROTOCOL_OPTIMIZER_OPTIONS)

        self.learning_rate = _as_float('learning_rate', self.learning_rate)
        _ensure_range('learning_rate', self.learning_rate, PROTOCOL_LEARNING_RATE_RANGE)

        self.weight_decay = _as_float('weight_decay', self.weight_decay)
        if self.weight_decay != 0:
            # zero disables weight decay, anything else must sit inside the range
            _ensure_range('weight_decay', self.weight_decay, PROTOCOL_WEIGHT_DECAY_RANGE)

        self.scheduler = _ensure_option('scheduler', self.scheduler, PROTOCOL_SCHEDULER_OPTIONS)
        for field, default in SCHEDULER_DEFAULTS.items():
            if isBlank(getattr(self, field)):
                setattr(self, field, default)
        self.scheduler_base = _ensure_option('scheduler_base', self.scheduler_base, PROTOCOL_MONITOR_OPTIONS)
        self.scheduler_patience = _as_int('scheduler_patience', self.scheduler_patience)
        _ensure_range('scheduler_patience', self.scheduler_patience, PROTOCOL_PATIENCE_RANGE)
        self.scheduler_step_size = _as_int('scheduler_step_size', self.scheduler_step_size)
        if self.scheduler_step_size < 1:
            raise RangeError('scheduler_step_size', [1, PROTOCOL_MAX_EPOCH_RANGE[1]])
        self.scheduler_gamma = _as_float('scheduler_gamma', self.scheduler_gamma)
        if not 0 < self.scheduler_gamma < 1:
            raise RangeError('scheduler_gamma', '(0, 1)')

        self.batch_size = _as_int('batch_size', self.batch_size)
        _ensure_range('batch_size', self.batch_size, PROTOCOL_BATCH_SIZE_RANGE)
        self.max_epoch = _as_int('max_epoch', self.max_epoch)
        _ensure_range('max_epoch', self.max_epoch, PROTOCOL_MAX_EPOCH_RANGE)

        try:
            self.early_stopping = parse_bool(self.early_stopping)
        except ValueError:
            raise ValidationException('early_stopping', 'options: [yes, no]')
        if self.early_stopping:
            if isBlank(self.early_stopping_base):
                raise InconsistencyError('early_stopping_base', 'required when early_stopping is enabled')
            if isBlank(self.early_stopping_patience):
                raise InconsistencyError('early_stopping_patience', 'required when early_stopping is enabled')
        # when disabled the base and patience are ignored, but still checked if declared
        if not isBlank(self.early_stopping_base):
            self.early_stopping_base = _ensure_option('early_stopping_base', self.early_stopping_base,
                                                      PROTOCOL_MONITOR_OPTIONS)
        else:
            self.early_stopping_base = None
        if not isBlank(self.early_stopping_patience):
            self.early_stopping_patience = _as_int('early_stopping_patience', self.early_stopping_patience)
            _ensure_range('early_stopping_patience', self.early_stopping_patience, PROTOCOL_PATIENCE_RANGE)
        else:
            self.early_stopping_patience = None

        self.model_selection_base = _ensure_option('model_selection_base', self.model_selection_base,
                                                   PROTOCOL_SELECTION_OPTIONS)

        self.loss = _ensure_option('loss', 'CROSS_ENTROPY' if isBlank(self.loss) else self.loss,
                                   PROTOCOL_LOSS_OPTIONS)
        self.seed = 0 if isBlank(self.seed) else _as_int('seed', self.seed)
        if self.seed < 0:
            raise RangeError('seed', [0, 'inf'])

        if isinstance(self.seeds, (list, tuple)):
            self.seeds = ','.join(str(seed) for seed in self.seeds)
        for field in CONTEXT_FIELDS:
            value = getattr(self, field)
            setattr(self, field, None if isBlank(value) else str(value))
        if self.seeds is not None:
            seeds = [_as_int('seeds', seed) for seed in split_list(self.seeds)]
            if not seeds or min(seeds) < 0:
                raise ValidationException('seeds', 'must be comma separated non-negative integers')
            self.seeds = ','.join(str(seed) for seed in seeds)

        return self

    def seed_list(self) -> Optional[list[int]]:
        """ seeds recorded by the study that wrote this document, None when it recorded none """
        if self.seeds is None:
            return None
        return [int(seed) for seed in split_list(self.seeds)]

    def replace(self, **changes) -> 'TrainingProtocol':
        """ returns a validated copy with the given fields changed """
        unknown = [key for key in changes if key not in PROTOCOL_FIELDS]
        if unknown:
            raise ValidationException(unknown[0], 'not a protocol field')
        return TrainingProtocol({**self.json(), **changes})

    def json(self) -> dict:
        """ document form, declared fields only, in document order """
        document = {}
        for field in PROTOCOL_FIELDS:
            value = getattr(self, field)
            if value is not None:
                document[field] = value
        return document

    def monitors(self) -> set[str]:
        """ bases this protocol reads from the per-epoch trace """
        bases = {self.model_selection_base}
        if self.scheduler == 'LR_PLATEAU':
            bases.add(self.scheduler_base)
        if self.early_stopping:
            bases.add(self.early_stopping_base)
        return bases - {'LAST'}

    def __eq__(self, other) -> bool:
        return isinstance(other, TrainingProtocol) and self.json() == other.json()

    def __hash__(self) -> int:
        return hash(json.dumps(self.json(), sort_keys=True))

    def __repr__(self) -> str:
        return f'TrainingProtocol({self.json()})'
