import math
import tempfile
from pathlib import Path
from unittest import skipUnless

import numpy as np
import torch
from django.conf import settings
from django.test import SimpleTestCase
from torch.optim.lr_scheduler import LambdaLR, ReduceLROnPlateau

from app.exceptions import ConfigError, NonFiniteUpdate, ShapeError
from architectures.models import ModelSpec
from architectures.networks import build_model
from data.folds import make_loso_fold
from data.models import WindowedSplit
from data.synthetic import generate_synthetic
from protocol.daos import load_preset

from engine.daos import save_trace, load_trace
from engine.early_stopping import EarlyStopState, early_stop_update
from engine.models import EpochRecord, TrainingTrace, STOP_EARLY, STOP_DIVERGED, STOP_MAX_EPOCH
from engine.optimizers import OptimizerState, optimizer_step
from engine.schedulers import SchedulerState, scheduler_epoch_end, cosine_lr, LR_FLOOR
from engine.selection import select_model
from engine.trainer import train_fold, evaluate


def scalar(value: float) -> torch.Tensor:
    return torch.tensor([value], dtype=torch.float64)


def trace_of(column: str, values: list[float]) -> TrainingTrace:
    trace = TrainingTrace()
    for epoch, value in enumerate(values, start=1):
        trace.append(EpochRecord({'epoch': epoch, column: value}))
    return trace


def tiny_fold(fold_subject: int = 0, seed: int = 0) -> WindowedSplit:
    dataset = generate_synthetic(4, 3, 3, 768, 50.0, seed=seed, window_length=32)
    return make_loso_fold(dataset, fold_subject, seed=seed)


def tiny_model(fold: WindowedSplit, arch: str = 'MCNN', seed: int = 0):
    window_length, n_channels = fold.window_shape
    spec = ModelSpec({'arch': arch, 'window_length': window_length, 'n_channels': n_channels,
                      'n_classes': fold.n_classes, 'filters': 8, 'conv_blocks': 2, 'hidden_size': 8,
                      'd_model': 8, 'n_heads': 2, 'ff_size': 16, 'encoder_blocks': 1})
    return build_model(spec, seed)


class OptimizerTest(SimpleTestCase):

    def test_sgd_step(self):
        params, _ = optimizer_step('SGD', [scalar(1.0)], [scalar(0.5)], lr=0.1, weight_decay=0)
        self.assertAlmostEqual(params[0].item(), 0.95, places=12)

    def test_sgd_weight_decay_is_l2_gradient(self):
        params, _ = optimizer_step('SGD', [scalar(1.0)], [scalar(0.5)], lr=0.1, weight_decay=0.1)
        self.assertAlmostEqual(params[0].item(), 1.0 - 0.1 * (0.5 + 0.1 * 1.0), places=12)

    def test_zero_gradient_fixed_point(self):
        for kind in ('SGD', 'ADAM'):
            params, _ = optimizer_step(kind, [scalar(2.0)], [scalar(0.0)], lr=0.01, weight_decay=0)
            self.assertEqual(params[0].item(), 2.0, f'{kind} should not move without gradient')

    def test_adam_matches_hand_simulation(self):
        # f(p) = 1.5 p^2, gradient 3p; default betas and eps
        lr, beta1, beta2, eps = 0.01, 0.9, 0.999, 1e-8
        param, state = scalar(1.0), None
        p, m, v = 1.0, 0.0, 0.0
        for step in range(1, 4):
            grad = 3.0 * p
            _, state = optimizer_step('ADAM', [param], [scalar(grad)], lr=lr, weight_decay=0, state=state)
            m = beta1 * m + (1 - beta1) * grad
            v = beta2 * v + (1 - beta2) * grad ** 2
            m_hat, v_hat = m / (1 - beta1 ** step), v / (1 - beta2 ** step)
            p = p - lr * m_hat / (math.sqrt(v_hat) + eps)
            self.assertAlmostEqual(param.item(), p, delta=1e-12, msg=f'step {step} should match the recurrence')
        self.assertEqual(state.steps, 3)

    def test_every_kind_steps(self):
        for kind in ('SGD', 'ADAM', 'ADADELTA', 'RMSPROP', 'ADAGRAD'):
            params, state = optimizer_step(kind, [scalar(1.0)], [scalar(1.0)], lr=0.1, weight_decay=1e-4)
            self.assertLess(params[0].item(), 1.0, f'{kind} should descend')
            self.assertEqual(state.kind, kind)

    def test_non_finite_update(self):
        with self.assertRaises(NonFiniteUpdate):
            optimizer_step('SGD', [scalar(1.0)], [scalar(math.inf)], lr=0.1, weight_decay=0)

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            optimizer_step('SGD', [scalar(1.0)], [torch.zeros(2, dtype=torch.float64)], lr=0.1, weight_decay=0)


class SchedulerTest(SimpleTestCase):

    def run_schedule(self, state: SchedulerState, epochs: int, values=None) -> list[float]:
        values = values or [None] * epochs
        return [scheduler_epoch_end(state, value) for value in values]

    def test_step(self):
        lrs = self.run_schedule(SchedulerState('STEP', 1e-3, step_size=10, gamma=0.1), 20)
        self.assertAlmostEqual(lrs[9], 1e-4, delta=1e-16, msg='lr after epoch 10')
        self.assertAlmostEqual(lrs[19], 1e-5, delta=1e-17, msg='lr after epoch 20')
        self.assertEqual(lrs[8], 1e-3)

    def test_step_closed_form(self):
        lrs = self.run_schedule(SchedulerState('STEP', 1e-2, step_size=7, gamma=0.5), 200)
        for t, lr in enumerate(lrs, start=1):
            expected = max(1e-2 * 0.5 ** (t // 7), LR_FLOOR)
            self.assertLessEqual(abs(lr - expected), 1e-9 * expected)

    def test_cosine_endpoints(self):
        self.assertEqual(cosine_lr(0, 1e-3, 100), 1e-3)
        self.assertAlmostEqual(cosine_lr(100, 1e-3, 100), 0.0, delta=1e-18)
        self.assertAlmostEqual(cosine_lr(50, 1e-3, 100), 0.5e-3, delta=1e-15)
        self.assertAlmostEqual(cosine_lr(50, 1e-3, 100, eta_min=1e-4), 0.55e-3, delta=1e-15)

    def test_cosine_closed_form(self):
        lrs = self.run_schedule(SchedulerState('COS', 1e-3, t_max=200), 200)
        for t, lr in enumerate(lrs, start=1):
            expected = max(0.5 * 1e-3 * (1 + math.cos(math.pi * t / 200)), LR_FLOOR)
            self.assertLessEqual(abs(lr - expected), 1e-9 * expected)
        self.assertTrue(all(a >= b for a, b in zip(lrs, lrs[1:])), 'cosine should never increase')
        self.assertEqual(lrs[-1], LR_FLOOR, 'the end of the cycle is floored')

    def test_cosine_restart(self):
        lrs = self.run_schedule(SchedulerState('COS_RESTART', 1e-3, t_restart=20), 200)
        for t, lr in enumerate(lrs, start=1):
            expected = max(0.5 * 1e-3 * (1 + math.cos(math.pi * (t % 20) / 20)), LR_FLOOR)
            self.assertLessEqual(abs(lr - expected), 1e-9 * expected)
            if t % 20 == 0:
                self.assertEqual(lr, 1e-3, f'epoch {t} should restart at lr0')
            elif t % 20 != 1:
                self.assertLessEqual(lr, lrs[t - 2], 'non-increasing between restarts')

    def test_restart_period_for_protocol(self):
        state = SchedulerState.for_protocol(load_preset('new').replace(scheduler='COS_RESTART', max_epoch=100))
        self.assertEqual(state.t_restart, 34, 'a third of max_epoch, rounded up')
        self.assertEqual(state.t_max, 100)

    def test_plateau_hand_simulation(self):
        state = SchedulerState('LR_PLATEAU', 1e-3, patience=2, gamma=0.1, base='VAL_LOSS')
        lrs = self.run_schedule(state, 8, [1.0, 0.9, 0.95, 0.96, 0.97, 0.5, 0.6, 0.7])
        expected = [1e-3, 1e-3, 1e-3, 1e-4, 1e-4, 1e-4, 1e-4, 1e-5]
        for lr, value in zip(lrs, expected):
            self.assertAlmostEqual(lr, value, delta=1e-15)
        self.assertEqual(state.reductions, 2)

    def test_plateau_improvement_needs_epsilon(self):
        state = SchedulerState('LR_PLATEAU', 1e-3, patience=2, gamma=0.1, base='VAL_LOSS')
        lrs = self.run_schedule(state, 3, [1.0, 1.0 - 5e-5, 1.0 - 9e-5])
        self.assertAlmostEqual(lrs[-1], 1e-4, delta=1e-15, msg='sub-epsilon gains are not improvements')

    def test_plateau_metric_base_maximizes(self):
        state = SchedulerState('LR_PLATEAU', 1e-3, patience=1, gamma=0.5, base='VAL_METRIC')
        lrs = self.run_schedule(state, 3, [0.5, 0.6, 0.55])
        self.assertEqual(lrs[:2], [1e-3, 1e-3])
        self.assertAlmostEqual(lrs[2], 5e-4, delta=1e-15)

    def test_plateau_adversarial_series(self):
        rng = np.random.default_rng(0)
        for series_index in range(50):
            patience = int(rng.integers(1, 6))
            values = list(np.cumsum(rng.normal(0, 1e-3, size=60)) + rng.choice([0.0, 1e-4, 5e-5], size=60))
            state = SchedulerState('LR_PLATEAU', 1e-2, patience=patience, gamma=0.5, base='VAL_LOSS')
            lrs = self.run_schedule(state, len(values), values)

            # independent replay
            lr, best, waited, expected = 1e-2, None, 0, []
            for value in values:
                if best is None or value < best - 1e-4:
                    best, waited = value, 0
                else:
                    waited += 1
                    if waited == patience:
                        lr, waited = lr * 0.5, 0
                expected.append(max(lr, LR_FLOOR))
            self.assertEqual(lrs, expected, f'series {series_index} should match the replay exactly')

    def test_none_keeps_lr(self):
        self.assertEqual(self.run_schedule(SchedulerState('NONE', 3e-4), 5), [3e-4] * 5)

    def test_floor(self):
        lrs = self.run_schedule(SchedulerState('STEP', 1e-3, step_size=1, gamma=0.01), 10)
        self.assertEqual(min(lrs), LR_FLOOR)

    def test_plateau_floor(self):
        state = SchedulerState('LR_PLATEAU', 1e-7, patience=1, gamma=0.01, base='VAL_LOSS')
        lrs = self.run_schedule(state, 4, [1.0, 1.0, 1.0, 1.0])
        self.assertEqual(lrs[1:], [LR_FLOOR] * 3)
        self.assertEqual(state.reductions, 1, 'the floor is not a further reduction')

    def test_drives_the_attached_optimizer(self):
        weights = torch.zeros(3, requires_grad=True)
        optimizer = OptimizerState('ADAM', [weights], 1e-3, 0.0).optimizer
        protocol = load_preset('new').replace(scheduler='STEP', scheduler_step_size=2, scheduler_gamma=0.5)
        state = SchedulerState.for_protocol(protocol, optimizer)

        self.assertIsInstance(state.scheduler, LambdaLR)
        for _ in range(4):
            lr = scheduler_epoch_end(state)
        self.assertAlmostEqual(optimizer.param_groups[0]['lr'], protocol.learning_rate * 0.25, delta=1e-15)
        self.assertEqual(lr, optimizer.param_groups[0]['lr'])

    def test_plateau_uses_torch_plateau_scheduler(self):
        weights = torch.zeros(3, requires_grad=True)
        optimizer = OptimizerState('SGD', [weights], 1e-2, 0.0).optimizer
        state = SchedulerState('LR_PLATEAU', 1e-2, patience=1, gamma=0.1, base='VAL_LOSS', optimizer=optimizer)
        self.assertIsInstance(state.scheduler, ReduceLROnPlateau)
        scheduler_epoch_end(state, 1.0)
        scheduler_epoch_end(state, 1.0)
        self.assertAlmostEqual(optimizer.param_groups[0]['lr'], 1e-3, delta=1e-15)


class EarlyStoppingTest(SimpleTestCase):

    def feed(self, state: EarlyStopState, values: list[float]) -> int:
        """ epoch at which the state stopped, 0 when it never did """
        for epoch, value in enumerate(values, start=1):
            early_stop_update(state, value, epoch)
            if state.stopped:
                return epoch
        return 0

    def test_hand_simulation(self):
        state = EarlyStopState('VAL_LOSS', patience=2)
        self.assertEqual(self.feed(state, [1.0, 0.9, 0.95, 0.96]), 4)
        self.assertEqual(state.best_epoch, 2)
        self.assertEqual(state.epochs_since_best, 2)

    def test_patience_one(self):
        self.assertEqual(self.feed(EarlyStopState('VAL_LOSS', patience=1), [0.5, 0.6]), 2)

    def test_improving_series_never_stops(self):
        values = [1.0 - 0.01 * epoch for epoch in range(60)]
        self.assertEqual(self.feed(EarlyStopState('VAL_LOSS', patience=3), values), 0)

    def test_metric_base(self):
        state = EarlyStopState('VAL_METRIC', patience=2)
        self.assertEqual(self.feed(state, [0.2, 0.5, 0.4, 0.45]), 4)
        self.assertEqual(state.best_value, 0.5)

    def test_nan_never_improves(self):
        state = EarlyStopState('VAL_LOSS', patience=2)
        self.assertEqual(self.feed(state, [1.0, math.nan, math.nan]), 3)

    def test_stops_at_best_plus_patience(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            patience = int(rng.integers(1, 10))
            values = list(rng.uniform(0, 1, size=80))
            state = EarlyStopState('VAL_LOSS', patience=patience)
            stopped_at = self.feed(state, values)
            if stopped_at:
                self.assertEqual(stopped_at, state.best_epoch + patience)
                self.assertEqual(state.epochs_since_best, patience)


class SelectionTest(SimpleTestCase):

    def test_last(self):
        self.assertEqual(select_model(trace_of('val_loss', [0.5] * 37), 'LAST'), 37)

    def test_loss_argmin_earliest_tie(self):
        self.assertEqual(select_model(trace_of('val_loss', [0.9, 0.7, 0.7, 0.8]), 'VAL_LOSS'), 2)

    def test_metric_argmax(self):
        self.assertEqual(select_model(trace_of('val_f1', [0.1, 0.4, 0.3]), 'VAL_METRIC'), 2)

    def test_train_bases(self):
        self.assertEqual(select_model(trace_of('train_loss', [0.3, 0.2, 0.25]), 'TRAIN_LOSS'), 2)
        self.assertEqual(select_model(trace_of('train_f1', [0.3, 0.2, 0.25]), 'TRAIN_METRIC'), 1)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(2)
        for _ in range(1000):
            values = [float(v) for v in rng.integers(0, 5, size=int(rng.integers(1, 30)))]
            self.assertEqual(select_model(trace_of('val_loss', values), 'VAL_LOSS'), values.index(min(values)) + 1)
            self.assertEqual(select_model(trace_of('val_f1', values), 'VAL_METRIC'), values.index(max(values)) + 1)

    def test_diverged_epochs_are_skipped(self):
        trace = trace_of('val_loss', [0.9, 0.7])
        trace.append(EpochRecord({'epoch': 3, 'diverged': True}))
        self.assertEqual(select_model(trace, 'LAST'), 2, 'the last completed epoch')
        self.assertEqual(select_model(trace, 'VAL_LOSS'), 2)

    def test_nan_is_worst(self):
        self.assertEqual(select_model(trace_of('val_loss', [math.nan, 0.8]), 'VAL_LOSS'), 2)

    def test_empty_trace(self):
        self.assertEqual(select_model(TrainingTrace(), 'VAL_LOSS'), 0)


class TraceTest(SimpleTestCase):

    def test_records_must_be_consecutive(self):
        trace = trace_of('val_loss', [0.5, 0.4])
        with self.assertRaises(ValueError):
            trace.append(EpochRecord({'epoch': 4}))

    def test_csv(self):
        trace = trace_of('val_loss', [0.5, 0.4, 0.45])
        trace.records[1].checkpoint = True
        trace.append(EpochRecord({'epoch': 4, 'lr': 1e-3, 'diverged': True}))
        trace.selected_epoch, trace.stop_reason = 2, STOP_DIVERGED

        with tempfile.TemporaryDirectory() as tmp:
            path = save_trace(trace, Path(tmp) / 'trace.csv')
            header = path.read_text().splitlines()[1]
            loaded = load_trace(path)

        self.assertEqual(header, 'epoch,train_loss,val_loss,train_f1,val_f1,lr,checkpoint,diverged,selected')
        self.assertEqual(loaded.selected_epoch, 2)
        self.assertEqual(loaded.stop_reason, STOP_DIVERGED)
        self.assertEqual(loaded.column('val_loss')[:3], [0.5, 0.4, 0.45])
        self.assertEqual(loaded.column('checkpoint'), [False, True, False, False])
        self.assertTrue(loaded.diverged)


class TrainerTest(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.fold = tiny_fold()
        cls.protocol = load_preset('cv-baseline').replace(max_epoch=12, batch_size=32, early_stopping=False)

    def test_cv_baseline_respects_cap(self):
        model = tiny_model(self.fold)
        trace, checkpoint = train_fold(load_preset('cv-baseline'), model, self.fold)
        self.assertLessEqual(len(trace), 60)
        self.assertIn(trace.stop_reason, (STOP_MAX_EPOCH, STOP_EARLY))
        self.assertEqual(checkpoint.epoch, trace.selected_epoch)

    def test_deterministic(self):
        first, _ = train_fold(self.protocol, tiny_model(self.fold), self.fold)
        second, _ = train_fold(self.protocol, tiny_model(self.fold), self.fold)
        self.assertEqual(first.json(), second.json(), 'same protocol and seed should give identical traces')

    def test_selected_checkpoint_reproduces_metric(self):
        for arch in ('MCNN', 'CNNLSTM', 'TRANSFORMER'):
            model = tiny_model(self.fold, arch)
            trace, checkpoint = train_fold(self.protocol, model, self.fold)
            record = trace.record(trace.selected_epoch)
            val_loss, val_f1 = evaluate(model, self.fold.val_x, self.fold.val_y, self.fold.n_classes)
            self.assertAlmostEqual(val_loss, record.val_loss, delta=1e-6, msg=f'{arch} selected val loss')
            self.assertAlmostEqual(val_f1, record.val_f1, delta=1e-6, msg=f'{arch} selected val F1')
            self.assertEqual(trace.selected_epoch, min(range(1, len(trace) + 1),
                                                      key=lambda epoch: trace.record(epoch).val_loss))

    def test_checkpoints_follow_selection_base(self):
        trace, _ = train_fold(self.protocol, tiny_model(self.fold), self.fold)
        flagged = [record.epoch for record in trace.records if record.checkpoint]
        self.assertEqual(flagged[0], 1, 'the first epoch always improves on nothing')
        self.assertEqual(flagged[-1], trace.selected_epoch)
        best = math.inf
        for record in trace.records:
            self.assertEqual(record.checkpoint, record.val_loss < best, f'epoch {record.epoch}')
            best = min(best, record.val_loss)

    def test_last_selection_keeps_final_epoch(self):
        trace, checkpoint = train_fold(self.protocol.replace(model_selection_base='LAST'),
                                       tiny_model(self.fold), self.fold)
        self.assertEqual(trace.selected_epoch, 12)
        self.assertEqual(checkpoint.epoch, 12)
        self.assertTrue(all(record.checkpoint for record in trace.records))

    def test_scheduler_runs_after_the_epoch(self):
        trace, _ = train_fold(self.protocol, tiny_model(self.fold), self.fold)
        lrs = trace.column('lr')
        self.assertEqual(lrs[:10], [1e-3] * 10, 'STEP decays only once ten epochs completed')
        self.assertAlmostEqual(lrs[10], 1e-4, delta=1e-16)
        self.assertEqual(trace.stop_reason, STOP_MAX_EPOCH)

    def test_early_stopping(self):
        protocol = self.protocol.replace(early_stopping=True, early_stopping_base='TRAIN_METRIC',
                                         early_stopping_patience=1, max_epoch=40)
        trace, _ = train_fold(protocol, tiny_model(self.fold), self.fold)
        if trace.stop_reason == STOP_EARLY:
            replay = EarlyStopState('TRAIN_METRIC', 1)
            for record in trace.records:
                early_stop_update(replay, record.train_f1, record.epoch)
            self.assertTrue(replay.stopped)
            self.assertEqual(len(trace), replay.best_epoch + 1)
        else:
            self.assertEqual(len(trace), 40)

    def test_divergence_keeps_best_so_far(self):
        fold = self.fold
        exploding = WindowedSplit(fold.fold_subject, fold.n_classes,
                                  train=(fold.train_x * 1e39, fold.train_y, fold.train_subjects),
                                  val=(fold.val_x, fold.val_y, fold.val_subjects),
                                  test=(fold.test_x, fold.test_y, fold.test_subjects),
                                  normalization_stats=fold.normalization_stats)
        model = tiny_model(fold)
        initial = {name: tensor.clone() for name, tensor in model.state_dict().items()}
        trace, checkpoint = train_fold(self.protocol, model, exploding)

        self.assertTrue(trace.diverged)
        self.assertEqual(trace.stop_reason, STOP_DIVERGED)
        self.assertEqual(trace.selected_epoch, 0, 'nothing completed, the initial parameters stand')
        self.assertEqual(checkpoint.epoch, 0)
        for name, tensor in model.state_dict().items():
            self.assertTrue(torch.equal(tensor, initial[name]), f'{name} should be restored')

    def test_class_absent_from_training(self):
        fold = self.fold
        keep = fold.train_y != 2
        missing = WindowedSplit(fold.fold_subject, fold.n_classes,
                                train=(fold.train_x[keep], fold.train_y[keep], fold.train_subjects[keep]),
                                val=(fold.val_x, fold.val_y, fold.val_subjects),
                                test=(fold.test_x, fold.test_y, fold.test_subjects),
                                normalization_stats=fold.normalization_stats)
        with self.assertRaises(ConfigError):
            train_fold(self.protocol, tiny_model(fold), missing)

    def test_model_fold_mismatch(self):
        other = generate_synthetic(4, 3, 5, 768, 50.0, seed=0, window_length=32)
        wrong_classes = tiny_model(make_loso_fold(other, 0))
        with self.assertRaises(ConfigError):
            train_fold(self.protocol, wrong_classes, self.fold)


@skipUnless(getattr(settings, 'HARBENCH_SLOW_TESTS', False), 'set HARBENCH_SLOW_TESTS=yes to run')
class TrainerDirectionTest(SimpleTestCase):
    """ desk-scale check that an aggressive SGD setting does not beat the ADAM preset """

    def test_sgd_large_learning_rate_against_adam(self):
        fold = make_loso_fold(generate_synthetic(4, 3, 4, 2048, 50.0, seed=0, window_length=64), 0)
        adam = load_preset('cv-baseline').replace(max_epoch=30, early_stopping=False)
        sgd = adam.replace(optimizer='SGD', learning_rate=1e-1)

        adam_trace, _ = train_fold(adam, tiny_model(fold, 'CNNLSTM'), fold)
        sgd_trace, _ = train_fold(sgd, tiny_model(fold, 'CNNLSTM'), fold)

        self.assertFalse(adam_trace.diverged)
        self.assertTrue(sgd_trace.diverged or not sgd_trace.completed()
                        or sgd_trace.completed()[-1].val_loss > adam_trace.completed()[-1].val_loss,
                        'SGD at 0.1 should diverge or end with a higher validation loss than ADAM')
