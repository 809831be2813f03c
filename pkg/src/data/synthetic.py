import logging

import numpy as np

from app.exceptions import ValidationException

from data.models import DatasetMeta, Recording, SensorDataset


SYNTHETIC_NAME = 'synthetic'
SYNTHETIC_NOISE = 0.35


def _ensure_positive(**values):
    for field, value in values.items():
        if isinstance(value, bool) or value is None or value <= 0:
            raise ValidationException(field, 'must be positive')


def generate_synthetic(n_subjects: int, n_channels: int, n_classes: int, length: int, freq: float,
                       seed: int, window_length: int = 64) -> SensorDataset:
    """ desk-scale stand-in for a benchmark dataset.
    every class emits its own sinusoid frequency and amplitude per channel; every subject
    applies its own per-channel gain and offset, and white noise is added on top """
    _ensure_positive(n_subjects=n_subjects, n_channels=n_channels, n_classes=n_classes,
                     length=length, freq=freq, window_length=window_length)
    if seed is None or seed < 0:
        raise ValidationException('seed', 'must be a non-negative integer')
    if window_length > length:
        raise ValidationException('window_length', f'must not exceed length {length}')

    rng = np.random.default_rng(seed)

    # class signatures
    base_freq = rng.uniform(0.5, 1.5, size=n_channels)
    class_freq = base_freq[None, :] * (1.0 + 0.6 * np.arange(n_classes))[:, None]
    class_amplitude = rng.uniform(0.5, 1.5, size=(n_classes, n_channels))

    recordings = []
    t = np.arange(length) / freq
    for subject in range(n_subjects):
        gain = rng.uniform(0.7, 1.3, size=n_channels)
        offset = rng.normal(0.0, 0.3, size=n_channels)

        labels = np.empty(length, dtype=np.int64)
        values = np.empty((length, n_channels))
        start = 0
        order = []
        while start < length:
            if not order:
                order = list(rng.permutation(n_classes))
            label = int(order.pop())
            stop = min(length, start + int(rng.integers(2 * window_length, 4 * window_length + 1)))
            phase = rng.uniform(0, 2 * np.pi, size=n_channels)
            span = t[start:stop, None]
            values[start:stop] = class_amplitude[label] * np.sin(2 * np.pi * class_freq[label] * span + phase)
            labels[start:stop] = label
            start = stop

        values = gain * values + offset + rng.normal(0.0, SYNTHETIC_NOISE, size=values.shape)
        recordings.append(Recording(subject, values, labels))

    meta = DatasetMeta({
        'name': SYNTHETIC_NAME,
        'n_subjects': n_subjects,
        'n_channels': n_channels,
        'window_length': window_length,
        'n_classes': n_classes,
        'sensor_types': ['synthetic'],
        'sampling_freq': freq,
    })
    logging.info(f'generated {meta.describe()} with seed {seed}')
    return SensorDataset(meta, recordings)
