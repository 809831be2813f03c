from typing import Optional

import numpy as np

from app.exceptions import ValidationException, SchemaError, LabelError
from app.str_tools import isBlank


# benchmark metadata: subjects, channels, window length, classes, sensors, sampling frequency
BENCHMARKS = {
    'DSADS': {'n_subjects': 8, 'n_channels': 45, 'window_length': 126, 'n_classes': 19,
              'sensor_types': ['acc', 'gyro', 'mag'], 'sampling_freq': 25},
    'HAPT': {'n_subjects': 30, 'n_channels': 6, 'window_length': 128, 'n_classes': 12,
             'sensor_types': ['acc', 'gyro'], 'sampling_freq': 50},
    'OPPO': {'n_subjects': 4, 'n_channels': 77, 'window_length': 30, 'n_classes': 18,
             'sensor_types': ['acc', 'gyro', 'mag'], 'sampling_freq': 30},
    'PAMAP2': {'n_subjects': 9, 'n_channels': 18, 'window_length': 168, 'n_classes': 12,
               'sensor_types': ['acc', 'gyro'], 'sampling_freq': 100},
    'RWHAR': {'n_subjects': 15, 'n_channels': 21, 'window_length': 128, 'n_classes': 8,
              'sensor_types': ['acc'], 'sampling_freq': 50},
}
BENCHMARK_ALIASES = {'RW': 'RWHAR'}


def benchmark_name(name: str) -> Optional[str]:
    """ canonical registry name for a dataset name, None for non-benchmark datasets """
    upper = str(name).strip().upper()
    upper = BENCHMARK_ALIASES.get(upper, upper)
    return upper if upper in BENCHMARKS else None


class DatasetMeta:
    """ dataset description as stored in meta.json """
    def __init__(self, data: dict):
        self.name: str = data.get('name')
        self.n_subjects: int = data.get('n_subjects')
        self.n_channels: int = data.get('n_channels')
        self.window_length: int = data.get('window_length')
        self.n_classes: int = data.get('n_classes')
        self.sensor_types: list[str] = sorted(set(data.get('sensor_types') or []))
        self.sampling_freq: float = data.get('sampling_freq')

        if self.name is None or isBlank(self.name):
            raise ValidationException(field='name', error='required')

        self.validate()

    @classmethod
    def for_benchmark(cls, name: str) -> 'DatasetMeta':
        canonical = benchmark_name(name)
        if canonical is None:
            raise ValidationException('name', f'not a registered benchmark, options: {list(BENCHMARKS)}')
        return cls({'name': canonical, **BENCHMARKS[canonical]})

    def validate(self):
        for field in ('n_subjects', 'n_channels', 'window_length', 'n_classes'):
            value = getattr(self, field)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value <= 0:
                raise ValidationException(field, 'must be a positive integer')
            setattr(self, field, int(value))

        if not isinstance(self.sampling_freq, (int, float)) or self.sampling_freq <= 0:
            raise ValidationException('sampling_freq', 'must be positive')

        canonical = benchmark_name(self.name)
        if canonical is not None and self.window_length != BENCHMARKS[canonical]['window_length']:
            raise ValidationException('window_length',
                                      f'{canonical} uses windows of {BENCHMARKS[canonical]["window_length"]} samples')

    def json(self) -> dict:
        return {
            'name': self.name,
            'n_subjects': self.n_subjects,
            'n_channels': self.n_channels,
            'window_length': self.window_length,
            'n_classes': self.n_classes,
            'sensor_types': self.sensor_types,
            'sampling_freq': self.sampling_freq,
        }

    def describe(self) -> str:
        sensors = ', '.join(self.sensor_types) or 'unspecified sensors'
        return (f'{self.name} ({self.n_subjects} subjects, {self.n_channels} channels, window {self.window_length}, '
                f'{self.n_classes} classes, {sensors}, {self.sampling_freq:g} Hz)')


class Recording:
    """ one subject's time series: values (timestep x channel) with a label per timestep """
    def __init__(self, subject: int, values: np.ndarray, labels: np.ndarray):
        self.subject = int(subject)
        self.values = np.asarray(values, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.int64)

        if self.values.ndim != 2:
            raise SchemaError(f'subject {subject}: values must be a timestep x channel matrix')
        if self.labels.shape != (self.values.shape[0],):
            raise SchemaError(f'subject {subject}: expected one label per timestep')

        self.values.setflags(write=False)
        self.labels.setflags(write=False)

    def __len__(self) -> int:
        return self.values.shape[0]


class SensorDataset:
    """ per-subject multichannel recordings plus their metadata, read-only once built """
    def __init__(self, meta: DatasetMeta, recordings: list[Recording]):
        self.meta = meta
        self.recordings: dict[int, Recording] = {}

        for recording in recordings:
            if recording.subject in self.recordings:
                raise SchemaError(f'duplicate subject {recording.subject}')
            self.recordings[recording.subject] = recording

        self.validate()

    def validate(self):
        if len(self.recordings) != self.meta.n_subjects:
            raise SchemaError(f'{self.meta.name} declares {self.meta.n_subjects} subjects, found {len(self.recordings)}')

        for recording in self.recordings.values():
            if recording.values.shape[1] != self.meta.n_channels:
                raise SchemaError(f'subject {recording.subject}: expected {self.meta.n_channels} channels, '
                                  f'found {recording.values.shape[1]}')
            if len(recording) and (recording.labels.min() < 0 or recording.labels.max() >= self.meta.n_classes):
                raise LabelError(f'subject {recording.subject}: labels must be within [0, {self.meta.n_classes})')

    def subjects(self) -> list[int]:
        return sorted(self.recordings.keys())


class NormalizationStats:
    """ per-channel z-score statistics """
    def __init__(self, mean: np.ndarray, std: np.ndarray):
        self.mean = np.asarray(mean, dtype=np.float64)
        # constant channels are centred but not scaled
        self.std = np.where(np.asarray(std, dtype=np.float64) > 1e-12, std, 1.0)

    @classmethod
    def from_windows(cls, windows: np.ndarray) -> 'NormalizationStats':
        return cls(windows.mean(axis=(0, 1)), windows.std(axis=(0, 1)))

    def apply(self, windows: np.ndarray) -> np.ndarray:
        return (windows - self.mean) / self.std

    def json(self) -> dict:
        return {'mean': self.mean.tolist(), 'std': self.std.tolist()}


class WindowedSplit:
    """ train, validation and test windows for one LOSO fold.
    windows are (count, window_length, n_channels) arrays, already normalized """
    def __init__(self, fold_subject: int, n_classes: int,
                 train: tuple[np.ndarray, np.ndarray, np.ndarray],
                 val: tuple[np.ndarray, np.ndarray, np.ndarray],
                 test: tuple[np.ndarray, np.ndarray, np.ndarray],
                 normalization_stats: NormalizationStats):
        self.fold_subject = fold_subject
        self.n_classes = n_classes
        self.train_x, self.train_y, self.train_subjects = train
        self.val_x, self.val_y, self.val_subjects = val
        self.test_x, self.test_y, self.test_subjects = test
        self.normalization_stats = normalization_stats

    @property
    def window_shape(self) -> tuple[int, int]:
        return self.train_x.shape[1], self.train_x.shape[2]

    def sizes(self) -> dict:
        return {'train': len(self.train_y), 'val': len(self.val_y), 'test': len(self.test_y)}
