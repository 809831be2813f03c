import math
from collections import Counter
from fractions import Fraction

import numpy as np

from app.exceptions import ValidationException, WindowTooLong

from data.models import Recording


# overlap between adjacent windows
TRAIN_OVERLAP = 0.5
TEST_OVERLAP = 0.9


def window_stride(window_length: int, overlap_fraction: float) -> int:
    """ round-half-up of window_length * (1 - overlap), never below 1.
    the overlap is taken at its decimal value so 0.9 means exactly nine tenths """
    step = window_length * (1 - Fraction(str(overlap_fraction)))
    return max(1, math.floor(step + Fraction(1, 2)))


def sliding_windows(series_length: int, window_length: int, overlap_fraction: float) -> list[int]:
    """ start indices of every full window, trailing partial window discarded """
    if window_length < 1:
        raise ValidationException('window_length', 'must be a positive integer')
    if not 0 <= overlap_fraction < 1:
        raise ValidationException('overlap_fraction', 'must be within [0, 1)')
    if window_length > series_length:
        raise WindowTooLong(window_length, series_length)

    stride = window_stride(window_length, overlap_fraction)
    return list(range(0, series_length - window_length + 1, stride))


def window_label(labels) -> int:
    """ majority label; among tied labels the one seen last in the window wins """
    labels = [int(label) for label in labels]
    if not labels:
        raise ValidationException('labels', 'window has no labels')

    counts = Counter(labels)
    top = max(counts.values())
    tied = {label for label, count in counts.items() if count == top}
    for label in reversed(labels):
        if label in tied:
            return label


def segment(recording: Recording, window_length: int, overlap_fraction: float) -> tuple[np.ndarray, np.ndarray]:
    """ cuts one recording into (windows, labels); empty arrays when the recording is too short """
    n_channels = recording.values.shape[1]
    if len(recording) < window_length:
        return np.empty((0, window_length, n_channels)), np.empty((0,), dtype=np.int64)

    starts = sliding_windows(len(recording), window_length, overlap_fraction)
    windows = np.stack([recording.values[start:start + window_length] for start in starts])
    labels = np.array([window_label(recording.labels[start:start + window_length]) for start in starts],
                      dtype=np.int64)
    return windows, labels
