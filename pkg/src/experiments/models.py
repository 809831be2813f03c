import re
from typing import Any

from app.exceptions import ValidationException, InconsistencyError
from protocol.models import TrainingProtocol, TRAINING_FIELDS


SWEEPABLE_FIELDS = [field for field in TRAINING_FIELDS if field != 'seed']


def differing_fields(a: TrainingProtocol, b: TrainingProtocol) -> list[str]:
    """ protocol fields whose serialized values differ """
    first, second = a.json(), b.json()
    return [field for field in dict.fromkeys([*first, *second]) if first.get(field) != second.get(field)]


def value_label(factor: str, value: Any) -> str:
    """ file-safe name for one swept value """
    text = str(value).lower() if not isinstance(value, float) else f'{value:g}'
    return f'{factor}-' + re.sub(r'[^a-z0-9.+-]', '_', text)


class SweepSpec:
    """ one factor varied over values, every other field frozen at the baseline """
    def __init__(self, baseline: TrainingProtocol, factor: str, values: list):
        self.baseline = baseline
        self.factor = str(factor or '').strip().lower()
        self.values = list(values or [])

        self.validate()

    def validate(self):
        if self.factor not in SWEEPABLE_FIELDS:
            raise ValidationException('factor', f'options: {SWEEPABLE_FIELDS}')
        if not self.values:
            raise ValidationException('values', 'at least one value is required')

        # each variant goes through full protocol validation, so range errors surface here
        self.protocols = [self.baseline.replace(**{self.factor: value}) for value in self.values]
        self.values = [getattr(protocol, self.factor) for protocol in self.protocols]
        if len(set(self.values)) != len(self.values):
            raise ValidationException('values', f'duplicate values for {self.factor}: {self.values}')

        for protocol in self.protocols:
            extra = [field for field in differing_fields(self.baseline, protocol) if field != self.factor]
            if extra:
                raise InconsistencyError('factor', f'changing {self.factor} also changed {extra}')

    def labels(self) -> list[str]:
        return [value_label(self.factor, value) for value in self.values]

    def variants(self) -> list[tuple[str, TrainingProtocol]]:
        return list(zip(self.labels(), self.protocols))

    def json(self) -> dict:
        return {'baseline': self.baseline.json(), 'factor': self.factor, 'values': self.values}
