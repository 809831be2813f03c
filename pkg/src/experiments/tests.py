import math
import tempfile
from pathlib import Path
from unittest import skipUnless

import matplotlib.pyplot as plt
import numpy as np
from django.conf import settings
from django.test import SimpleTestCase

from app.exceptions import InconsistencyError, RangeError, ValidationException
from architectures.models import ModelSpec
from data.synthetic import generate_synthetic
from engine.models import EpochRecord, TrainingTrace
from evaluation.daos import RESULTS_FILE
from evaluation.reference import ReferenceTable
from protocol.daos import load_preset, load_protocol

from experiments.models import SweepSpec, differing_fields, value_label, SWEEPABLE_FIELDS
from experiments.plots import curve_frame, curve_paths, emit_curves
from experiments.studies import run_study
from experiments.sweeps import run_sweep, PROTOCOL_FILE


def quick_baseline():
    return load_preset('cv-baseline').replace(max_epoch=10, batch_size=32, early_stopping=False)


def quick_spec(dataset, arch: str = 'MCNN') -> ModelSpec:
    meta = dataset.meta
    return ModelSpec({'arch': arch, 'window_length': meta.window_length, 'n_channels': meta.n_channels,
                      'n_classes': meta.n_classes, 'filters': 8, 'conv_blocks': 2, 'hidden_size': 8,
                      'd_model': 8, 'n_heads': 2, 'ff_size': 16, 'encoder_blocks': 1})


def loss_trace(values: list[float], diverged_at: int = None) -> TrainingTrace:
    trace = TrainingTrace()
    for epoch, value in enumerate(values, start=1):
        trace.append(EpochRecord({'epoch': epoch, 'train_loss': value, 'val_loss': value + 0.1,
                                  'lr': 1e-3, 'diverged': epoch == diverged_at}))
    return trace


class SweepSpecTest(SimpleTestCase):

    def test_only_the_factor_changes(self):
        spec = SweepSpec(quick_baseline(), 'optimizer', ['SGD', 'ADAM', 'RMSPROP'])
        for protocol in spec.protocols:
            self.assertIn(differing_fields(spec.baseline, protocol), [[], ['optimizer']])
        self.assertEqual([protocol.optimizer for protocol in spec.protocols], ['SGD', 'ADAM', 'RMSPROP'])

    def test_labels(self):
        self.assertEqual(SweepSpec(quick_baseline(), 'learning_rate', [1e-3, 1e-2]).labels(),
                         ['learning_rate-0.001', 'learning_rate-0.01'])
        self.assertEqual(SweepSpec(quick_baseline(), 'optimizer', ['adam']).labels(), ['optimizer-adam'])
        self.assertEqual(value_label('model_selection_base', 'VAL_METRIC'), 'model_selection_base-val_metric')

    def test_unknown_factor(self):
        for factor in ('momentum', 'seed', 'dataset'):
            with self.assertRaises(ValidationException, msg=f'{factor} cannot be swept'):
                SweepSpec(quick_baseline(), factor, [1])
        self.assertNotIn('seed', SWEEPABLE_FIELDS)

    def test_values_are_validated(self):
        with self.assertRaises(RangeError):
            SweepSpec(quick_baseline(), 'learning_rate', [1e-3, 1.0])
        with self.assertRaises(ValidationException):
            SweepSpec(quick_baseline(), 'learning_rate', [])

    def test_duplicates_after_normalization(self):
        with self.assertRaises(ValidationException):
            SweepSpec(quick_baseline(), 'learning_rate', ['0.001', 0.001])
        with self.assertRaises(ValidationException):
            SweepSpec(quick_baseline(), 'optimizer', ['adam', 'ADAM'])

    def test_inconsistent_value(self):
        with self.assertRaises(InconsistencyError):
            SweepSpec(quick_baseline().replace(early_stopping_base=None, early_stopping_patience=None),
                      'early_stopping', [True])

    def test_differing_fields(self):
        baseline = quick_baseline()
        self.assertEqual(differing_fields(baseline, baseline), [])
        self.assertEqual(differing_fields(baseline, baseline.replace(batch_size=64, seed=3)),
                         ['batch_size', 'seed'])


class SweepRunTest(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.dataset = generate_synthetic(3, 3, 3, 640, 50.0, seed=0, window_length=32)

    def test_one_family_per_value(self):
        spec = SweepSpec(quick_baseline(), 'learning_rate', [1e-3, 1e-2])
        with tempfile.TemporaryDirectory() as tmp:
            result = run_sweep(spec, self.dataset, quick_spec(self.dataset), [0, 1], out_dir=tmp)

            self.assertEqual(result.labels(), spec.labels())
            for label, protocol in spec.variants():
                self.assertEqual(load_protocol(Path(tmp) / label / PROTOCOL_FILE), protocol)
                self.assertTrue((Path(tmp) / label / RESULTS_FILE).is_file())

        families = result.trace_families()
        self.assertEqual([len(traces) for traces in families.values()], [2, 2])
        for label in result.labels():
            self.assertEqual([row.subject for row in result.tables[label]], [0, 0], 'first subject only')
            self.assertEqual([row.seed for row in result.tables[label]], [0, 1])
            self.assertTrue(math.isfinite(result.final_val_loss(label)))
            self.assertFalse(result.diverged(label))

    def test_full_loso(self):
        spec = SweepSpec(quick_baseline(), 'batch_size', [32])
        result = run_sweep(spec, self.dataset, quick_spec(self.dataset), [0], full_loso=True)
        self.assertEqual([row.subject for row in result.tables['batch_size-32']], [0, 1, 2])


class StudyTest(SimpleTestCase):

    def test_study_compares_procedures(self):
        dataset = generate_synthetic(3, 3, 3, 640, 50.0, seed=1, window_length=32)
        procedures = {'comm': quick_baseline(), 'new': quick_baseline().replace(optimizer='SGD')}
        specs = [quick_spec(dataset, 'MCNN'), quick_spec(dataset, 'CNNLSTM')]
        table, comparison = run_study(procedures, dataset, specs, [0], subjects=[0, 1],
                                      reference=ReferenceTable())

        self.assertEqual(len(table), 2 * 2 * 2)
        self.assertEqual([(row.model, row.dataset) for row in comparison.rows],
                         [('MCNN', 'synthetic'), ('CNNLSTM', 'synthetic')])
        for row in comparison.rows:
            self.assertIsNotNone(row.values['comm'])
            self.assertIsNotNone(row.values['new'])
            self.assertIsNone(row.reference['new'], 'no published value for synthetic data')


class CurveTest(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def families(self):
        return {
            'adam': [loss_trace([1.0, 0.6, 0.4]), loss_trace([1.2, 0.7, 0.5, 0.45])],
            'sgd': [loss_trace([1.5, 1.3, 1.2])],
        }

    def test_files(self):
        paths = emit_curves(self.families(), 'train_loss', self.path, name='optimizer')
        self.assertEqual(paths, curve_paths(self.path, 'optimizer', 'train_loss'))
        self.assertEqual([path.name for path in paths], ['optimizer_train_loss.png', 'optimizer_train_loss.svg'])
        for path in paths:
            self.assertGreater(path.stat().st_size, 0)

    def test_reruns_are_identical(self):
        first = emit_curves(self.families(), 'val_loss', self.path / 'a', name='lr')
        second = emit_curves(self.families(), 'val_loss', self.path / 'b', name='lr')
        for a, b in zip(first, second):
            self.assertEqual(a.read_bytes(), b.read_bytes(), f'{a.suffix} output should not embed timestamps')

    def test_single_trace_and_lr(self):
        paths = emit_curves({'only': [loss_trace([0.9, 0.8])]}, 'lr', self.path)
        self.assertTrue(all(path.is_file() for path in paths))

    def test_traces_are_not_mutated(self):
        families = self.families()
        before = {label: [trace.json() for trace in traces] for label, traces in families.items()}
        emit_curves(families, 'train_loss', self.path)
        self.assertEqual({label: [trace.json() for trace in traces] for label, traces in families.items()}, before)

    def test_unknown_quantity(self):
        with self.assertRaises(ValidationException):
            emit_curves(self.families(), 'accuracy', self.path)

    def test_failed_save_closes_the_figure(self):
        # a directory where the png should go makes the save fail
        curve_paths(self.path, 'blocked', 'val_loss')[0].mkdir(parents=True)
        open_figures = plt.get_fignums()
        with self.assertRaises(OSError):
            emit_curves(self.families(), 'val_loss', self.path, name='blocked')
        self.assertEqual(plt.get_fignums(), open_figures)
        self.assertEqual(sorted(path.name for path in self.path.iterdir()), ['blocked_val_loss.png'],
                         'no temporary file should be left behind')

    def test_curve_frame(self):
        frame = curve_frame([loss_trace([1.0, 0.5, 0.2], diverged_at=3), loss_trace([2.0, 1.0, 0.5, 0.25])],
                            'train_loss')
        self.assertEqual(frame.index.tolist(), [1, 2, 3, 4])
        self.assertTrue(np.isnan(frame.loc[3, 0]), 'diverged epochs are not drawn')
        self.assertTrue(np.isnan(frame.loc[4, 0]), 'shorter runs end early')
        self.assertEqual(frame.loc[4, 1], 0.25)


@skipUnless(getattr(settings, 'HARBENCH_SLOW_TESTS', False), 'set HARBENCH_SLOW_TESTS=yes to run')
class FactorSweepTest(SimpleTestCase):
    """ desk-scale versions of the optimizer and learning-rate sweeps """

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.dataset = generate_synthetic(4, 3, 4, 2048, 50.0, seed=0, window_length=64)
        cls.spec = quick_spec(cls.dataset, 'CNNLSTM')
        cls.baseline = load_preset('cv-baseline').replace(max_epoch=30, early_stopping=False)

    def test_optimizer_sweep(self):
        spec = SweepSpec(self.baseline, 'optimizer', ['SGD', 'ADAM', 'ADADELTA', 'RMSPROP', 'ADAGRAD'])
        with tempfile.TemporaryDirectory() as tmp:
            result = run_sweep(spec, self.dataset, self.spec, [0, 1, 2], out_dir=tmp)
            paths = emit_curves(result.trace_families(), 'val_loss', tmp, name='optimizer')
            self.assertTrue(all(path.is_file() for path in paths))
        self.assertLess(result.final_val_loss('optimizer-adam'), result.final_val_loss('optimizer-sgd'))

    def test_learning_rate_sweep(self):
        spec = SweepSpec(self.baseline, 'learning_rate', [1e-3, 1e-1])
        result = run_sweep(spec, self.dataset, self.spec, [0, 1, 2])
        self.assertTrue(result.diverged('learning_rate-0.1')
                        or result.final_val_loss('learning_rate-0.1') > result.final_val_loss('learning_rate-0.001'),
                        'a learning rate of 0.1 should diverge or end above 0.001')

    def test_weight_decay_sweep(self):
        spec = SweepSpec(self.baseline, 'weight_decay', [1e-4, 1e-1])
        result = run_sweep(spec, self.dataset, self.spec, [0, 1, 2])

        def jitter(label: str) -> float:
            """ mean over runs of the variance of epoch-to-epoch validation loss changes """
            return float(np.mean([np.var(np.diff([record.val_loss for record in trace.completed()]))
                                  for trace in result.traces(label)]))

        light, heavy = spec.labels()
        self.assertFalse(result.diverged(light))
        self.assertLessEqual(jitter(light), jitter(heavy), 'light weight decay should give the smoother curve')
