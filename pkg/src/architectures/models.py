from app.exceptions import ValidationException, ShapeError


ARCH_OPTIONS = ['MCNN', 'CNNLSTM', 'TRANSFORMER']

# desk-scale defaults per width/depth knob
SPEC_DEFAULTS = {
    'filters': 64,
    'kernel_size': 5,
    'conv_blocks': None,
    'hidden_size': 128,
    'd_model': 64,
    'n_heads': 4,
    'ff_size': 128,
    'encoder_blocks': 2,
    'dropout': 0.1,
}
CONV_BLOCK_DEFAULTS = {'MCNN': 3, 'CNNLSTM': 2, 'TRANSFORMER': 0}


class ModelSpec:
    """ architecture plus input/output shape, enough to rebuild a network """
    def __init__(self, data: dict):
        self.arch: str = str(data.get('arch') or '').strip().upper()
        self.window_length: int = data.get('window_length')
        self.n_channels: int = data.get('n_channels')
        self.n_classes: int = data.get('n_classes')

        for knob, default in SPEC_DEFAULTS.items():
            setattr(self, knob, data.get(knob, default))
        if self.conv_blocks is None:
            self.conv_blocks = CONV_BLOCK_DEFAULTS.get(self.arch)

        self.validate()

    def validate(self):
        if self.arch not in ARCH_OPTIONS:
            raise ValidationException('arch', f'options: {ARCH_OPTIONS}')

        for field in ('window_length', 'n_channels', 'n_classes', 'filters', 'kernel_size',
                      'hidden_size', 'd_model', 'n_heads', 'ff_size'):
            value = getattr(self, field)
            if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
                raise ShapeError(field, 'must be a positive integer')

        for field in ('conv_blocks', 'encoder_blocks'):
            value = getattr(self, field)
            if isinstance(value, bool) or not isinstance(value, int) or value < 0:
                raise ShapeError(field, 'must be a non-negative integer')

        if self.arch == 'TRANSFORMER' and self.d_model % self.n_heads != 0:
            raise ShapeError('d_model', f'must be divisible by n_heads={self.n_heads}')

        if not 0 <= self.dropout < 1:
            raise ValidationException('dropout', 'must be within [0, 1)')

    @property
    def input_shape(self) -> tuple[int, int]:
        return self.window_length, self.n_channels

    def json(self) -> dict:
        return {
            'arch': self.arch,
            'window_length': self.window_length,
            'n_channels': self.n_channels,
            'n_classes': self.n_classes,
            **{knob: getattr(self, knob) for knob in SPEC_DEFAULTS},
        }

    def describe(self) -> str:
        if self.arch == 'MCNN':
            return (f'MCNN: {self.conv_blocks} x [conv (kernel {self.kernel_size}, {self.filters} filters), relu, '
                    f'max-pool 2], global average pool, linear head')
        if self.arch == 'CNNLSTM':
            return (f'CNNLSTM: {self.conv_blocks} x [conv (kernel {self.kernel_size}, {self.filters} filters), relu], '
                    f'LSTM hidden {self.hidden_size} (last state), linear head')
        return (f'TRANSFORMER: linear embedding d={self.d_model}, sinusoidal positions, {self.encoder_blocks} encoder '
                f'blocks ({self.n_heads} heads, feed-forward {self.ff_size}, dropout {self.dropout}), mean pool, '
                f'linear head')

    def __eq__(self, other) -> bool:
        return isinstance(other, ModelSpec) and self.json() == other.json()
