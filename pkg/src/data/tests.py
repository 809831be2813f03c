import json
import tempfile
from fractions import Fraction
from pathlib import Path

import numpy as np
import pandas as pd
from django.test import SimpleTestCase

from app.exceptions import (ValidationException, SchemaError, LabelError, WindowTooLong, UnknownSubject,
                            EmptyClass)

from data.daos import load_dataset, write_dataset, convert_long_csv, subject_columns, META_FILE
from data.folds import make_loso_fold, loso_subjects, stratified_val_mask, VAL_POLICY_SUBJECT
from data.models import DatasetMeta, Recording, SensorDataset, NormalizationStats, benchmark_name
from data.synthetic import generate_synthetic
from data.windowing import sliding_windows, window_label, window_stride, segment, TRAIN_OVERLAP, TEST_OVERLAP


def block_dataset(n_subjects: int, n_channels: int, n_classes: int, window_length: int,
                  blocks_per_class: int = 2, name: str = 'blocks', seed: int = 0) -> SensorDataset:
    """ every subject cycles through all classes in blocks of one window length """
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.tile(np.arange(n_classes), blocks_per_class), window_length)
    recordings = [Recording(subject, rng.normal(subject, 1.0, size=(len(labels), n_channels)), labels)
                  for subject in range(n_subjects)]
    meta = DatasetMeta({'name': name, 'n_subjects': n_subjects, 'n_channels': n_channels,
                        'window_length': window_length, 'n_classes': n_classes, 'sampling_freq': 50})
    return SensorDataset(meta, recordings)


class WindowingTest(SimpleTestCase):

    def test_half_overlap(self):
        starts = sliding_windows(1000, 128, 0.5)
        self.assertEqual(window_stride(128, 0.5), 64)
        self.assertEqual(len(starts), 14, 'starts 0, 64, ... 832 fit in 1000 samples')
        self.assertEqual(starts[-1], 832)

    def test_ninety_percent_overlap(self):
        starts = sliding_windows(1000, 128, 0.9)
        self.assertEqual(window_stride(128, 0.9), 13, 'round(12.8) should be 13')
        self.assertEqual(len(starts), 68)

    def test_window_equals_series(self):
        self.assertEqual(sliding_windows(128, 128, 0.5), [0])

    def test_stride_rounds_half_up(self):
        self.assertEqual(window_stride(5, 0.5), 3, '2.5 should round up')
        self.assertEqual(window_stride(10, 0.99), 1, 'stride should never drop below 1')

    def test_ninety_percent_overlap_rounds_half_up(self):
        self.assertEqual(window_stride(15, 0.9), 2, '1.5 should round up')
        self.assertEqual(window_stride(25, 0.9), 3, '2.5 should round up')
        self.assertEqual(window_stride(35, TEST_OVERLAP), 4)
        self.assertEqual(len(sliding_windows(100, 25, 0.9)), 26, 'starts 0, 3, ... 75')
        for window_length in range(5, 200, 10):
            self.assertEqual(window_stride(window_length, 0.9), (window_length + 5) // 10,
                             f'window {window_length} at 0.9 overlap')

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            window_length = int(rng.integers(1, 200))
            series_length = int(rng.integers(window_length, 2000))
            overlap = float(rng.uniform(0, 0.99))
            exact = window_length * (1 - Fraction(str(overlap))) + Fraction(1, 2)
            stride = max(1, exact.numerator // exact.denominator)
            expected, start = [], 0
            while start + window_length <= series_length:
                expected.append(start)
                start += stride
            self.assertEqual(sliding_windows(series_length, window_length, overlap), expected,
                             f'({series_length}, {window_length}, {overlap}) should match enumeration')

    def test_window_too_long(self):
        try:
            sliding_windows(100, 128, 0.5)
            self.fail('should not hit this code block')
        except WindowTooLong as e:
            self.assertEqual(e.field, 'window_length')

    def test_invalid_overlap(self):
        for overlap in (-0.1, 1.0):
            with self.assertRaises(ValidationException):
                sliding_windows(1000, 128, overlap)

    def test_window_label(self):
        self.assertEqual(window_label([1, 1, 1, 2]), 1, 'strict majority')
        self.assertEqual(window_label([1, 1, 2, 2]), 2, 'tie goes to the last timestep')
        self.assertEqual(window_label([3, 3, 3, 3]), 3, 'unanimous')
        self.assertEqual(window_label([2, 2, 1, 1, 0]), 1, 'tie goes to the tied label seen last')

    def test_segment(self):
        recording = Recording(0, np.arange(20, dtype=float).reshape(10, 2), [0] * 6 + [1] * 4)
        windows, labels = segment(recording, 4, TRAIN_OVERLAP)
        self.assertEqual(windows.shape, (4, 4, 2))
        self.assertEqual(labels.tolist(), [0, 0, 1, 1], 'the window at timestep 4 is a tie won by the later label')
        self.assertEqual(windows[1, 0].tolist(), [4.0, 5.0], 'second window starts at timestep 2')


class DatasetModelTest(SimpleTestCase):

    def test_benchmark_registry(self):
        meta = DatasetMeta.for_benchmark('HAPT')
        self.assertEqual((meta.n_subjects, meta.n_channels, meta.window_length, meta.n_classes),
                         (30, 6, 128, 12))
        self.assertEqual(meta.sampling_freq, 50)

        oppo = DatasetMeta.for_benchmark('OPPO')
        self.assertEqual((oppo.n_subjects, oppo.n_channels, oppo.window_length, oppo.n_classes), (4, 77, 30, 18))
        self.assertEqual(benchmark_name('rw'), 'RWHAR', 'RW is an alias of RWHAR')

    def test_benchmark_window_length_enforced(self):
        with self.assertRaises(ValidationException):
            DatasetMeta({'name': 'HAPT', 'n_subjects': 30, 'n_channels': 6, 'window_length': 64,
                         'n_classes': 12, 'sampling_freq': 50})

    def test_label_out_of_range(self):
        meta = DatasetMeta({'name': 'tiny', 'n_subjects': 1, 'n_channels': 1, 'window_length': 2,
                            'n_classes': 2, 'sampling_freq': 1})
        with self.assertRaises(LabelError):
            SensorDataset(meta, [Recording(0, np.zeros((4, 1)), [0, 1, 2, 1])])

    def test_duplicate_subject(self):
        meta = DatasetMeta({'name': 'tiny', 'n_subjects': 2, 'n_channels': 1, 'window_length': 2,
                            'n_classes': 2, 'sampling_freq': 1})
        with self.assertRaises(SchemaError):
            SensorDataset(meta, [Recording(0, np.zeros((4, 1)), [0] * 4), Recording(0, np.zeros((4, 1)), [0] * 4)])

    def test_recordings_are_read_only(self):
        recording = Recording(0, np.zeros((4, 1)), [0] * 4)
        with self.assertRaises(ValueError):
            recording.values[0, 0] = 1.0


class SyntheticTest(SimpleTestCase):

    def test_deterministic(self):
        first = generate_synthetic(6, 3, 4, 1024, 50.0, seed=0)
        second = generate_synthetic(6, 3, 4, 1024, 50.0, seed=0)
        for subject in first.subjects():
            np.testing.assert_array_equal(first.recordings[subject].values, second.recordings[subject].values)
            np.testing.assert_array_equal(first.recordings[subject].labels, second.recordings[subject].labels)

    def test_seed_sensitive(self):
        first = generate_synthetic(6, 3, 4, 1024, 50.0, seed=0)
        second = generate_synthetic(6, 3, 4, 1024, 50.0, seed=1)
        self.assertFalse(np.array_equal(first.recordings[0].values, second.recordings[0].values))

    def test_invariants(self):
        dataset = generate_synthetic(6, 3, 4, 1024, 50.0, seed=3)
        self.assertEqual(dataset.subjects(), list(range(6)))
        for recording in dataset.recordings.values():
            self.assertEqual(recording.values.shape, (1024, 3))
            self.assertTrue(set(recording.labels.tolist()) <= set(range(4)))
            self.assertTrue(np.isfinite(recording.values).all())

    def test_rejects_non_positive(self):
        with self.assertRaises(ValidationException):
            generate_synthetic(0, 3, 4, 1024, 50.0, seed=0)


class FoldTest(SimpleTestCase):

    def setUp(self):
        self.dataset = generate_synthetic(6, 3, 4, 2048, 50.0, seed=0)

    def test_partition(self):
        subjects = loso_subjects(self.dataset)
        self.assertEqual(subjects, self.dataset.subjects(), 'each subject is tested exactly once')
        for subject in subjects:
            fold = make_loso_fold(self.dataset, subject)
            self.assertTrue((fold.test_subjects == subject).all(), 'test windows come from the fold subject')
            self.assertNotIn(subject, fold.train_subjects.tolist(), 'no training window from the fold subject')
            self.assertNotIn(subject, fold.val_subjects.tolist(), 'no validation window from the fold subject')
            self.assertEqual(fold.window_shape, (64, 3))

    def test_benchmark_fold_counts(self):
        oppo = block_dataset(4, 77, 18, 30, name='OPPO')
        self.assertEqual(len(loso_subjects(oppo)), 4)
        tested = [make_loso_fold(oppo, subject).fold_subject for subject in loso_subjects(oppo)]
        self.assertEqual(sorted(tested), [0, 1, 2, 3])

        hapt = block_dataset(30, 6, 12, 128, blocks_per_class=1, name='HAPT')
        self.assertEqual(len(loso_subjects(hapt)), 30)

        for name, n_subjects, n_channels, window_length, n_classes in (('DSADS', 8, 45, 126, 19),
                                                                       ('PAMAP2', 9, 18, 168, 12),
                                                                       ('RW', 15, 21, 128, 8)):
            dataset = block_dataset(n_subjects, n_channels, n_classes, window_length, blocks_per_class=1, name=name)
            subjects = loso_subjects(dataset)
            self.assertEqual(len(subjects), n_subjects, f'{name} should have {n_subjects} folds')
            fold = make_loso_fold(dataset, subjects[-1])
            self.assertEqual(fold.fold_subject, subjects[-1])
            self.assertEqual(fold.train_x.shape[1:], (window_length, n_channels))

    def test_overlaps(self):
        fold = make_loso_fold(self.dataset, 0)
        # 2048 samples: 63 windows at stride 32 per training subject, 331 at stride 6 for the test subject
        self.assertEqual(len(fold.test_y), len(sliding_windows(2048, 64, 0.9)))
        self.assertEqual(len(fold.train_y) + len(fold.val_y), 5 * len(sliding_windows(2048, 64, 0.5)))

    def test_deterministic(self):
        first = make_loso_fold(self.dataset, 2, seed=0)
        second = make_loso_fold(self.dataset, 2, seed=0)
        np.testing.assert_array_equal(first.train_x, second.train_x)
        np.testing.assert_array_equal(first.val_y, second.val_y)
        other = make_loso_fold(self.dataset, 2, seed=1)
        self.assertFalse(np.array_equal(first.val_x, other.val_x), 'another seed draws another validation set')

    def test_stratified_validation(self):
        labels = np.array([0] * 50 + [1] * 10 + [2] * 2 + [3])
        mask = stratified_val_mask(labels, 0.2, seed=0)
        self.assertEqual([int(mask[labels == label].sum()) for label in range(4)], [10, 2, 0, 0])

        fold = make_loso_fold(self.dataset, 0)
        pool = np.concatenate([fold.train_y, fold.val_y])
        for label in range(4):
            expected = min(int(np.floor(0.2 * (pool == label).sum() + 0.5)), (pool == label).sum() - 1)
            self.assertEqual(int((fold.val_y == label).sum()), expected)

    def test_normalization_is_train_only(self):
        fold = make_loso_fold(self.dataset, 1)
        recordings = [recording if subject != 1 else Recording(1, recording.values * 100 + 7, recording.labels)
                      for subject, recording in self.dataset.recordings.items()]
        perturbed = make_loso_fold(SensorDataset(self.dataset.meta, recordings), 1)
        np.testing.assert_array_equal(fold.normalization_stats.mean, perturbed.normalization_stats.mean)
        np.testing.assert_array_equal(fold.normalization_stats.std, perturbed.normalization_stats.std)

        self.assertTrue(np.allclose(fold.train_x.mean(axis=(0, 1)), 0, atol=1e-9), 'train windows are centred')
        self.assertTrue(np.allclose(fold.train_x.std(axis=(0, 1)), 1, atol=1e-9), 'train windows are scaled')

    def test_normalization_constant_channel(self):
        stats = NormalizationStats.from_windows(np.ones((3, 4, 2)))
        np.testing.assert_array_equal(stats.apply(np.ones((1, 4, 2))), np.zeros((1, 4, 2)))

    def test_subject_validation_policy(self):
        fold = make_loso_fold(self.dataset, 2, val_policy=VAL_POLICY_SUBJECT)
        self.assertEqual(set(fold.val_subjects.tolist()), {3}, 'the next subject validates')
        self.assertNotIn(3, fold.train_subjects.tolist())

        last = make_loso_fold(self.dataset, 5, val_policy=VAL_POLICY_SUBJECT)
        self.assertEqual(set(last.val_subjects.tolist()), {0}, 'the next subject wraps around')

    def test_unknown_subject(self):
        with self.assertRaises(UnknownSubject):
            make_loso_fold(self.dataset, 42)

    def test_empty_class(self):
        dataset = block_dataset(3, 2, 3, 8)
        recordings = [Recording(subject, recording.values, np.where(recording.labels == 2, 0, recording.labels)
                                if subject != 0 else recording.labels)
                      for subject, recording in dataset.recordings.items()]
        dataset = SensorDataset(dataset.meta, recordings)
        with self.assertRaises(EmptyClass):
            make_loso_fold(dataset, 0)


class DatasetDaoTest(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_write_then_load(self):
        dataset = generate_synthetic(3, 2, 3, 256, 25.0, seed=4, window_length=32)
        write_dataset(dataset, self.path)
        self.assertTrue((self.path / META_FILE).is_file())
        self.assertTrue((self.path / 'subj_0.csv').is_file())

        loaded = load_dataset(self.path)
        self.assertEqual(loaded.meta.json(), dataset.meta.json())
        for subject in dataset.subjects():
            np.testing.assert_allclose(loaded.recordings[subject].values, dataset.recordings[subject].values,
                                       rtol=1e-9)
            np.testing.assert_array_equal(loaded.recordings[subject].labels, dataset.recordings[subject].labels)

    def _write(self, frame: pd.DataFrame, meta: dict):
        (self.path / META_FILE).write_text(json.dumps(meta))
        frame.to_csv(self.path / 'subj_1.csv', index=False)

    def test_interpolates_missing_values(self):
        frame = pd.DataFrame({'subject': 1, 'timestep': range(5), 'ch_0': [np.nan, 1.0, np.nan, 3.0, np.nan],
                              'label': [0, 0, 1, 1, 1]})
        self._write(frame, {'name': 'gaps', 'n_subjects': 1, 'n_channels': 1, 'window_length': 2,
                            'n_classes': 2, 'sampling_freq': 10})
        values = load_dataset(self.path).recordings[1].values[:, 0]
        self.assertEqual(values.tolist(), [1.0, 1.0, 2.0, 3.0, 3.0], 'linear inside, nearest at the edges')

    def test_label_out_of_range(self):
        frame = pd.DataFrame({'subject': 1, 'timestep': range(3), 'ch_0': [0.0, 1.0, 2.0], 'label': [0, 1, 2]})
        self._write(frame, {'name': 'bad', 'n_subjects': 1, 'n_channels': 1, 'window_length': 2,
                            'n_classes': 2, 'sampling_freq': 10})
        with self.assertRaises(LabelError):
            load_dataset(self.path)

    def test_bad_columns(self):
        frame = pd.DataFrame({'subject': 1, 'timestep': range(3), 'x': [0.0, 1.0, 2.0], 'label': [0, 1, 1]})
        self._write(frame, {'name': 'bad', 'n_subjects': 1, 'n_channels': 1, 'window_length': 2,
                            'n_classes': 2, 'sampling_freq': 10})
        with self.assertRaises(SchemaError):
            load_dataset(self.path)

    def test_missing_meta(self):
        with self.assertRaises(SchemaError):
            load_dataset(self.path)

    def test_convert_long_csv(self):
        meta = DatasetMeta({'name': 'long', 'n_subjects': 2, 'n_channels': 2, 'window_length': 2,
                            'n_classes': 2, 'sampling_freq': 10})
        source = self.path / 'long.csv'
        pd.DataFrame({'user': [3, 3, 3, 5, 5], 'activity': [0, 1, 1, 0, 0],
                      'acc_x': [0.0, 1.0, 2.0, 3.0, 4.0], 'acc_y': [1.0, np.nan, 3.0, 4.0, 5.0]}).to_csv(source, index=False)

        dataset = convert_long_csv(source, meta, 'user', 'activity', ['acc_x', 'acc_y'])
        self.assertEqual(dataset.subjects(), [3, 5])
        self.assertEqual(dataset.recordings[3].values[:, 1].tolist(), [1.0, 2.0, 3.0])

        write_dataset(dataset, self.path / 'canonical')
        header = pd.read_csv(self.path / 'canonical' / 'subj_3.csv').columns.tolist()
        self.assertEqual(header, subject_columns(2))

    def long_meta(self) -> DatasetMeta:
        return DatasetMeta({'name': 'long', 'n_subjects': 2, 'n_channels': 2, 'window_length': 2,
                            'n_classes': 3, 'sampling_freq': 10})

    def test_convert_long_csv_rejects_fractional_labels(self):
        source = self.path / 'long.csv'
        pd.DataFrame({'user': [3, 3, 5], 'activity': [0, 1.5, 0],
                      'acc_x': [0.0, 1.0, 2.0], 'acc_y': [1.0, 2.0, 3.0]}).to_csv(source, index=False)
        with self.assertRaises(LabelError):
            convert_long_csv(source, self.long_meta(), 'user', 'activity', ['acc_x', 'acc_y'])

    def test_convert_long_csv_rejects_out_of_range_labels(self):
        source = self.path / 'long.csv'
        pd.DataFrame({'user': [3, 3, 5], 'activity': [0, 3, 0],
                      'acc_x': [0.0, 1.0, 2.0], 'acc_y': [1.0, 2.0, 3.0]}).to_csv(source, index=False)
        with self.assertRaises(LabelError):
            convert_long_csv(source, self.long_meta(), 'user', 'activity', ['acc_x', 'acc_y'])

    def test_convert_long_csv_rejects_empty_channel(self):
        source = self.path / 'long.csv'
        pd.DataFrame({'user': [3, 3, 5, 5], 'activity': [0, 1, 0, 2],
                      'acc_x': [0.0, 1.0, 2.0, 3.0], 'acc_y': [1.0, 2.0, np.nan, np.nan]}).to_csv(source, index=False)
        try:
            convert_long_csv(source, self.long_meta(), 'user', 'activity', ['acc_x', 'acc_y'])
            self.fail('should not hit this code block')
        except SchemaError as e:
            self.assertIn('acc_y', e.error)

    def test_convert_long_csv_orders_by_timestep(self):
        source = self.path / 'long.csv'
        pd.DataFrame({'user': [3, 3, 3, 5], 'timestep': [2, 0, 1, 0], 'activity': [2, 0, 1, 0],
                      'acc_x': [20.0, 0.0, 10.0, 5.0], 'acc_y': [2.0, 0.0, 1.0, 5.0]}).to_csv(source, index=False)
        dataset = convert_long_csv(source, self.long_meta(), 'user', 'activity', ['acc_x', 'acc_y'])
        self.assertEqual(dataset.recordings[3].labels.tolist(), [0, 1, 2])
        self.assertEqual(dataset.recordings[3].values[:, 0].tolist(), [0.0, 10.0, 20.0])
