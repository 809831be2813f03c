import logging

import numpy as np

from app.exceptions import ValidationException, UnknownSubject, EmptyClass

from data.models import SensorDataset, WindowedSplit, NormalizationStats
from data.windowing import segment, TRAIN_OVERLAP, TEST_OVERLAP


VAL_POLICY_STRATIFIED = 'stratified'
VAL_POLICY_SUBJECT = 'subject'
VAL_POLICY_OPTIONS = [VAL_POLICY_STRATIFIED, VAL_POLICY_SUBJECT]
VAL_FRACTION = 0.2


def _windows(dataset: SensorDataset, subjects: list[int], overlap: float):
    window_length = dataset.meta.window_length
    xs, ys, owners = [], [], []
    for subject in subjects:
        x, y = segment(dataset.recordings[subject], window_length, overlap)
        xs.append(x)
        ys.append(y)
        owners.append(np.full(len(y), subject, dtype=np.int64))
    if not xs:
        return (np.empty((0, window_length, dataset.meta.n_channels)),
                np.empty((0,), dtype=np.int64), np.empty((0,), dtype=np.int64))
    return np.concatenate(xs), np.concatenate(ys), np.concatenate(owners)


def stratified_val_mask(labels: np.ndarray, fraction: float, seed: int) -> np.ndarray:
    """ marks round(fraction * n) windows of every class as validation,
    always leaving at least one window of the class for training """
    rng = np.random.default_rng(seed)
    mask = np.zeros(len(labels), dtype=bool)
    for label in np.unique(labels):
        members = np.flatnonzero(labels == label)
        n_val = min(int(np.floor(fraction * len(members) + 0.5)), len(members) - 1)
        if n_val > 0:
            mask[rng.permutation(members)[:n_val]] = True
    return mask


def make_loso_fold(dataset: SensorDataset, fold_subject: int, val_policy: str = VAL_POLICY_STRATIFIED,
                   seed: int = 0, val_fraction: float = VAL_FRACTION) -> WindowedSplit:
    """ builds the leave-one-subject-out split that tests on fold_subject """
    subjects = dataset.subjects()
    if fold_subject not in subjects:
        raise UnknownSubject(fold_subject)
    if val_policy not in VAL_POLICY_OPTIONS:
        raise ValidationException('val_policy', f'options: {VAL_POLICY_OPTIONS}')
    if not 0 < val_fraction < 1:
        raise ValidationException('val_fraction', 'must be within (0, 1)')

    others = [subject for subject in subjects if subject != fold_subject]
    test = _windows(dataset, [fold_subject], TEST_OVERLAP)

    if val_policy == VAL_POLICY_SUBJECT and len(others) > 1:
        # next subject after the test subject, wrapping around
        val_subject = next((s for s in others if s > fold_subject), others[0])
        train = _windows(dataset, [s for s in others if s != val_subject], TRAIN_OVERLAP)
        val = _windows(dataset, [val_subject], TRAIN_OVERLAP)
    else:
        pool_x, pool_y, pool_owner = _windows(dataset, others, TRAIN_OVERLAP)
        mask = stratified_val_mask(pool_y, val_fraction, seed)
        train = (pool_x[~mask], pool_y[~mask], pool_owner[~mask])
        val = (pool_x[mask], pool_y[mask], pool_owner[mask])

    absent = sorted(set(range(dataset.meta.n_classes)) - set(train[1].tolist()))
    if absent:
        raise EmptyClass(f'fold {fold_subject}: classes {absent} have no training window')

    stats = NormalizationStats.from_windows(train[0])
    split = WindowedSplit(
        fold_subject, dataset.meta.n_classes,
        train=(stats.apply(train[0]), train[1], train[2]),
        val=(stats.apply(val[0]), val[1], val[2]),
        test=(stats.apply(test[0]), test[1], test[2]),
        normalization_stats=stats,
    )
    logging.debug(f'fold {fold_subject} of {dataset.meta.name}: {split.sizes()}')
    return split


def loso_subjects(dataset: SensorDataset) -> list[int]:
    """ every subject is the test subject of exactly one fold """
    return dataset.subjects()
