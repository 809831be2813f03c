import math
import tempfile
from pathlib import Path
from unittest import skipUnless

import numpy as np
import pandas as pd
from django.conf import settings
from django.test import SimpleTestCase
from sklearn.metrics import f1_score

from app.exceptions import EmptyMatrix, ValidationException
from architectures.models import ModelSpec
from data.folds import make_loso_fold
from data.synthetic import generate_synthetic
from protocol.daos import load_preset

from evaluation.compare import compare
from evaluation.daos import (save_results, load_results, save_confusion, load_confusion, save_comparison,
                             RESULTS_FILE, SUMMARY_FILE, ERRORS_FILE, COMPARISON_TEXT_FILE, COMPARISON_CSV_FILE)
from evaluation.loso import run_loso, run_fold, fold_dir_name, FOLDS_DIR, CHECKPOINT_FILE
from evaluation.metrics import ConfusionMatrix, macro_f1, macro_f1_score, per_class_f1
from evaluation.models import FoldResult, ResultTable, RESULT_COLUMNS
from evaluation.reference import ReferenceTable, REFERENCE_DATASETS


def brute_force_macro_f1(counts: np.ndarray) -> float:
    scores = []
    for k in range(counts.shape[0]):
        tp = counts[k, k]
        predicted, actual = counts[:, k].sum(), counts[k, :].sum()
        precision = tp / predicted if predicted else 0.0
        recall = tp / actual if actual else 0.0
        scores.append(2 * precision * recall / (precision + recall) if precision + recall else 0.0)
    return float(np.mean(scores))


def fold_result(seed: int, subject: int, score: float, **changes) -> FoldResult:
    return FoldResult({'model': 'MCNN', 'procedure': 'comm', 'dataset': 'synthetic', 'seed': seed,
                       'subject': subject, 'macro_f1': score, **changes})


def quick_protocol():
    return load_preset('cv-baseline').replace(max_epoch=10, batch_size=32, early_stopping=False)


def quick_spec(dataset, arch: str = 'MCNN') -> ModelSpec:
    meta = dataset.meta
    return ModelSpec({'arch': arch, 'window_length': meta.window_length, 'n_channels': meta.n_channels,
                      'n_classes': meta.n_classes, 'filters': 8, 'conv_blocks': 2, 'hidden_size': 8,
                      'd_model': 8, 'n_heads': 2, 'ff_size': 16, 'encoder_blocks': 1})


class MacroF1Test(SimpleTestCase):

    def test_diagonal(self):
        self.assertEqual(macro_f1(ConfusionMatrix(np.diag([3, 7, 1, 12]))), 1.0)

    def test_balanced_confusion(self):
        self.assertAlmostEqual(macro_f1(ConfusionMatrix([[5, 5], [5, 5]])), 0.5, places=12)

    def test_zero_support_class_scores_zero(self):
        cm = ConfusionMatrix([[3, 0], [0, 0]])
        self.assertEqual(per_class_f1(cm).tolist(), [1.0, 0.0])
        self.assertEqual(macro_f1(cm), 0.5, 'the absent class stays in the average')

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n = int(rng.integers(2, 8))
            counts = rng.integers(0, 20, size=(n, n)) * (rng.random((n, n)) > 0.3)
            if counts.sum() == 0:
                counts[0, 0] = 1
            self.assertAlmostEqual(macro_f1(ConfusionMatrix(counts)), brute_force_macro_f1(counts), delta=1e-9)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(1)
        counts = rng.integers(0, 30, size=(6, 6))
        permutation = rng.permutation(6)
        permuted = counts[np.ix_(permutation, permutation)]
        self.assertAlmostEqual(macro_f1(ConfusionMatrix(counts)), macro_f1(ConfusionMatrix(permuted)), delta=1e-12)

    def test_from_predictions(self):
        rng = np.random.default_rng(2)
        y_true, y_pred = rng.integers(0, 5, size=200), rng.integers(0, 4, size=200)
        cm = ConfusionMatrix.from_predictions(y_true, y_pred, 6)
        self.assertEqual(cm.total, 200, 'every window is counted once')
        self.assertEqual(cm.counts.shape, (6, 6))
        expected = f1_score(y_true, y_pred, labels=list(range(6)), average='macro', zero_division=0)
        self.assertAlmostEqual(macro_f1_score(y_true, y_pred, 6), expected, delta=1e-12)

    def test_empty_matrix(self):
        with self.assertRaises(EmptyMatrix):
            macro_f1(ConfusionMatrix(np.zeros((3, 3), dtype=int)))

    def test_rejects_bad_counts(self):
        with self.assertRaises(ValidationException):
            ConfusionMatrix([[1, 2, 3]])
        with self.assertRaises(ValidationException):
            ConfusionMatrix([[1, -1], [0, 1]])


class ResultTableTest(SimpleTestCase):

    def test_summary(self):
        values = [0.6, 0.7, 0.9, 0.8]
        table = ResultTable([fold_result(seed, subject, values[2 * seed + subject])
                             for seed in range(2) for subject in range(2)])
        summary = table.summary()
        self.assertEqual(len(summary), 1)
        self.assertAlmostEqual(summary.loc[0, 'mean'], np.mean(values), delta=1e-12)
        self.assertAlmostEqual(summary.loc[0, 'std'], np.std(values), delta=1e-12)
        self.assertEqual(summary.loc[0, 'runs'], 4)
        self.assertAlmostEqual(table.mean('MCNN', 'comm', 'synthetic'), np.mean(values), delta=1e-12)

    def test_append_only(self):
        table = ResultTable([fold_result(0, 0, 0.5), fold_result(0, 1, 0.7)])
        before = table.frame().copy()
        table.extend([fold_result(1, 0, 0.9), fold_result(1, 1, 0.1)])
        pd.testing.assert_frame_equal(table.frame().iloc[:2], before)

        with self.assertRaises(ValidationException):
            table.add(fold_result(0, 0, 0.6))

    def test_failed_runs_do_not_score(self):
        table = ResultTable([fold_result(0, 0, 0.5), fold_result(0, 1, math.nan, error='fold 1: classes [2] absent')])
        row = table.summary().iloc[0]
        self.assertEqual(row['mean'], 0.5)
        self.assertEqual(row['failed'], 1)
        self.assertEqual(row['runs'], 2)
        self.assertEqual(len(table.failures()), 1)

    def test_means_skip_unscored_cells(self):
        table = ResultTable([fold_result(0, 0, math.nan, error='boom')])
        self.assertEqual(table.means(), {})
        self.assertIsNone(table.mean('MCNN', 'comm', 'synthetic'))


class CompareTest(SimpleTestCase):

    def test_published_table(self):
        comparison = compare(['comm', 'new'], ReferenceTable())
        row = comparison.row('MCNN', 'DSADS')
        self.assertEqual(row.values, {'comm': 0.801, 'new': 0.865})
        self.assertEqual(row.better, 'new')
        self.assertEqual(len(comparison.rows), 3 * len(REFERENCE_DATASETS))
        self.assertEqual(comparison.wins(), {'comm': 0, 'new': 15})

    def test_tie_flags_neither(self):
        table = ResultTable([fold_result(0, 0, 0.7), fold_result(0, 0, 0.7, procedure='new')])
        row = compare(['comm', 'new'], table).row('MCNN', 'synthetic')
        self.assertIsNone(row.better)
        self.assertNotIn('*', compare(['comm', 'new'], table).text().splitlines()[1])

    def test_missing_cell_is_absent(self):
        table = ResultTable([fold_result(0, 0, 0.7)])
        comparison = compare(['comm', 'new'], table)
        row = comparison.row('MCNN', 'synthetic')
        self.assertIsNone(row.values['new'], 'absent, not zero')
        self.assertIsNone(row.better)
        self.assertIn('-', comparison.text().splitlines()[1].split())
        self.assertTrue(pd.isna(comparison.frame().loc[0, 'new']))

    def test_better_is_marked(self):
        table = ResultTable([fold_result(0, 0, 0.6), fold_result(0, 0, 0.8, procedure='new')])
        comparison = compare(['comm', 'new'], table, reference=ReferenceTable())
        self.assertIn('0.800*', comparison.text())
        self.assertEqual(comparison.frame().loc[0, 'better'], 'new')
        self.assertIn('published_new', comparison.frame().columns)

    def test_needs_two_procedures(self):
        with self.assertRaises(ValidationException):
            compare(['comm'], ReferenceTable())


class EvaluationDaoTest(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_results_files(self):
        table = ResultTable([fold_result(0, 0, 0.5), fold_result(0, 1, math.nan, error='fold 1 failed'),
                             fold_result(0, 2, 0.75, diverged=True)])
        save_results(table, self.path)
        self.assertEqual(pd.read_csv(self.path / RESULTS_FILE).columns.tolist(), RESULT_COLUMNS)
        self.assertEqual(pd.read_csv(self.path / SUMMARY_FILE).loc[0, 'diverged'], 1)
        self.assertTrue((self.path / ERRORS_FILE).is_file())

        loaded = load_results(self.path)
        self.assertEqual(len(loaded), 3)
        self.assertEqual(loaded.failures()[0].error, 'fold 1 failed')
        self.assertTrue(loaded.results[2].diverged)
        self.assertEqual(loaded.means(), table.means())

    def test_no_errors_file_without_failures(self):
        save_results(ResultTable([fold_result(0, 0, 0.5)]), self.path)
        self.assertFalse((self.path / ERRORS_FILE).exists())

    def test_confusion_file(self):
        cm = ConfusionMatrix([[4, 1, 0], [0, 3, 2], [1, 0, 5]])
        loaded = load_confusion(save_confusion(cm, self.path / 'confusion.csv'))
        np.testing.assert_array_equal(loaded.counts, cm.counts)

    def test_comparison_files(self):
        save_comparison(compare(['comm', 'new'], ReferenceTable()), self.path)
        self.assertIn('MCNN', (self.path / COMPARISON_TEXT_FILE).read_text())
        frame = pd.read_csv(self.path / COMPARISON_CSV_FILE)
        self.assertEqual(frame.columns.tolist(), ['model', 'dataset', 'comm', 'new', 'better'])


class LosoTest(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.dataset = generate_synthetic(3, 3, 3, 640, 50.0, seed=0, window_length=32)
        cls.spec = quick_spec(cls.dataset)

    def test_every_subject_and_seed(self):
        with tempfile.TemporaryDirectory() as tmp:
            table = run_loso(quick_protocol(), self.dataset, self.spec, [0, 1], procedure='quick', out_dir=tmp)
            self.assertEqual([result.key[3:] for result in table],
                             [(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2)])
            fold_dir = Path(tmp) / FOLDS_DIR / fold_dir_name('MCNN', 'quick', 1, 2)
            self.assertTrue((fold_dir / 'trace.csv').is_file())
            self.assertTrue((fold_dir / CHECKPOINT_FILE).is_file())
            self.assertTrue((fold_dir / 'confusion.csv').is_file())

        scores = [result.macro_f1 for result in table]
        self.assertTrue(all(0 <= score <= 1 for score in scores))
        self.assertAlmostEqual(table.summary().loc[0, 'mean'], np.mean(scores), delta=1e-12)
        for result in table:
            self.assertEqual(result.confusion.total, len(self.held_out_labels(result.subject)))

    def test_windows_are_scored_individually(self):
        result = run_fold(quick_protocol(), self.dataset, self.spec, seed=0, subject=1)
        self.assertEqual(result.confusion.total, len(self.held_out_labels(1)), 'one prediction per 90% overlap window')

    def test_single_fold(self):
        table = run_loso(quick_protocol(), self.dataset, self.spec, [0], subjects=[0])
        self.assertEqual(len(table), 1)
        self.assertEqual(len(table.summary()), 1)

    def test_adding_a_seed_keeps_earlier_rows(self):
        table = run_loso(quick_protocol(), self.dataset, self.spec, [0], subjects=[0, 1])
        before = [result.macro_f1 for result in table]
        run_loso(quick_protocol(), self.dataset, self.spec, [1], subjects=[0, 1], table=table)
        self.assertEqual([result.macro_f1 for result in table][:2], before)
        self.assertEqual(len(table), 4)

    def test_failures_are_recorded_per_row(self):
        with self.assertLogs(level='WARNING'):
            table = run_loso(quick_protocol(), self.dataset, self.spec, [0], subjects=[0, 99])
        self.assertFalse(table.results[0].failed)
        self.assertTrue(table.results[1].failed)
        self.assertIn('99', table.results[1].error)

    def test_needs_a_seed(self):
        with self.assertRaises(ValidationException):
            run_loso(quick_protocol(), self.dataset, self.spec, [])

    def test_worker_pool_matches_serial(self):
        serial = run_loso(quick_protocol(), self.dataset, self.spec, [0], subjects=[0, 1])
        pooled = run_loso(quick_protocol(), self.dataset, self.spec, [0], subjects=[0, 1], workers=2)
        self.assertEqual([result.key for result in pooled], [result.key for result in serial],
                         'pool keeps the seed x subject order')
        self.assertEqual(pooled.failures(), [])
        for a, b in zip(pooled, serial):
            self.assertAlmostEqual(a.macro_f1, b.macro_f1, delta=1e-6)

    def held_out_labels(self, subject: int, seed: int = 0) -> np.ndarray:
        return make_loso_fold(self.dataset, subject, seed=seed).test_y

    def test_test_window_count(self):
        self.assertEqual(len(self.held_out_labels(0)), (640 - 32) // 3 + 1)


@skipUnless(getattr(settings, 'HARBENCH_SLOW_TESTS', False), 'set HARBENCH_SLOW_TESTS=yes to run')
class DirectionalStudyTest(SimpleTestCase):

    def test_new_procedure_holds_up(self):
        """ the newer procedure should not lose more than 0.02 mean macro F1 on at least two of three models """
        dataset = generate_synthetic(6, 3, 4, 2048, 50.0, seed=0, window_length=64)
        table = ResultTable()
        for arch in ('MCNN', 'CNNLSTM', 'TRANSFORMER'):
            spec = ModelSpec({'arch': arch, 'window_length': 64, 'n_channels': 3, 'n_classes': 4,
                              'filters': 16, 'hidden_size': 32, 'd_model': 32, 'ff_size': 64})
            for procedure in ('comm', 'new'):
                run_loso(load_preset(procedure), dataset, spec, [0, 1, 2], procedure=procedure, table=table)

        holds = [table.mean(arch, 'new', 'synthetic') >= table.mean(arch, 'comm', 'synthetic') - 0.02
                 for arch in ('MCNN', 'CNNLSTM', 'TRANSFORMER')]
        self.assertGreaterEqual(sum(holds), 2, compare(['comm', 'new'], table).text())
