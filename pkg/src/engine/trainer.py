import logging
import math
from typing import Optional

import numpy as np
import torch
import torch.nn as nn
from torch.utils.data import DataLoader, TensorDataset

from app.exceptions import ConfigError, NumericalError, NonFiniteUpdate
from architectures.daos import Checkpoint
from architectures.losses import LOSSES, loss_and_grads
from data.models import WindowedSplit
from evaluation.metrics import macro_f1_score
from protocol.models import TrainingProtocol, is_loss_base

from engine.early_stopping import EarlyStopState, early_stop_update
from engine.models import EpochRecord, TrainingTrace, STOP_MAX_EPOCH, STOP_EARLY, STOP_DIVERGED
from engine.optimizers import OptimizerState, optimizer_step
from engine.schedulers import SchedulerState, scheduler_epoch_end
from engine.selection import select_model


EVAL_BATCH_SIZE = 512


def _inputs(x: np.ndarray) -> torch.Tensor:
    return torch.as_tensor(x, dtype=torch.float32)


def _targets(y: np.ndarray) -> torch.Tensor:
    return torch.as_tensor(y, dtype=torch.int64)


def predict(model: nn.Module, x: np.ndarray) -> np.ndarray:
    """ predicted class per window, evaluation mode """
    model.eval()
    predictions = []
    with torch.no_grad():
        for start in range(0, len(x), EVAL_BATCH_SIZE):
            predictions.append(model(_inputs(x[start:start + EVAL_BATCH_SIZE])).argmax(dim=1).numpy())
    return np.concatenate(predictions) if predictions else np.empty((0,), dtype=np.int64)


def evaluate(model: nn.Module, x: np.ndarray, y: np.ndarray, n_classes: int,
             loss: str = 'CROSS_ENTROPY') -> tuple[float, float]:
    """ mean loss and macro F1 of the model on a window set, evaluation mode """
    if len(y) == 0:
        return math.nan, math.nan

    model.eval()
    total, predictions = 0.0, []
    with torch.no_grad():
        for start in range(0, len(y), EVAL_BATCH_SIZE):
            xb = _inputs(x[start:start + EVAL_BATCH_SIZE])
            yb = _targets(y[start:start + EVAL_BATCH_SIZE])
            scores = model(xb)
            total += LOSSES[loss](scores, yb).item() * len(yb)
            predictions.append(scores.argmax(dim=1).numpy())

    return total / len(y), macro_f1_score(y, np.concatenate(predictions), n_classes)


def check_fold(protocol: TrainingProtocol, model: nn.Module, fold: WindowedSplit):
    """ raises ConfigError when the protocol cannot train this model on this fold """
    spec = model.spec
    if spec.n_classes != fold.n_classes:
        raise ConfigError(f'model predicts {spec.n_classes} classes, fold has {fold.n_classes}')
    if spec.input_shape != fold.window_shape:
        raise ConfigError(f'model expects windows {spec.input_shape}, fold has {fold.window_shape}')

    absent = sorted(set(range(fold.n_classes)) - set(fold.train_y.tolist()))
    if absent:
        raise ConfigError(f'fold {fold.fold_subject}: classes {absent} absent from training data')
    if len(fold.val_y) == 0 and protocol.monitors() & {'VAL_LOSS', 'VAL_METRIC'}:
        raise ConfigError(f'fold {fold.fold_subject}: empty validation set but the protocol monitors it')


def _better(value: float, best: Optional[float], minimize: bool) -> bool:
    # strict, no epsilon: mirrors select_model's argmin/argmax with earliest ties
    if math.isnan(value):
        return False
    if best is None:
        return True
    return value < best if minimize else value > best


def train_fold(protocol: TrainingProtocol, model: nn.Module,
               fold: WindowedSplit) -> tuple[TrainingTrace, Checkpoint]:
    """ trains model on one fold under protocol and returns the trace with the selected checkpoint.
    the model is left holding the selected parameters """
    check_fold(protocol, model, fold)

    selection = protocol.model_selection_base
    trace = TrainingTrace()
    best_checkpoint = Checkpoint.capture(model, epoch=0)
    best_value: Optional[float] = None

    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(protocol.seed)
        generator = torch.Generator().manual_seed(protocol.seed)
        loader = DataLoader(TensorDataset(_inputs(fold.train_x), _targets(fold.train_y)),
                            batch_size=protocol.batch_size, shuffle=True, generator=generator)

        params = [p for p in model.parameters() if p.requires_grad]
        optimizer_state = OptimizerState(protocol.optimizer, params, protocol.learning_rate, protocol.weight_decay)
        scheduler = SchedulerState.for_protocol(protocol, optimizer_state.optimizer)
        stopper = EarlyStopState(protocol.early_stopping_base, protocol.early_stopping_patience) \
            if protocol.early_stopping else None
        lr = protocol.learning_rate
        trace.stop_reason = STOP_MAX_EPOCH

        for epoch in range(1, protocol.max_epoch + 1):
            model.train()
            try:
                for xb, yb in loader:
                    _, grads = loss_and_grads(model, xb, yb, protocol.loss)
                    _, optimizer_state = optimizer_step(protocol.optimizer, params, grads, lr,
                                                        protocol.weight_decay, optimizer_state)
            except (NumericalError, NonFiniteUpdate) as e:
                logging.warning(f'fold {fold.fold_subject} diverged at epoch {epoch}: {e.error}')
                trace.append(EpochRecord({'epoch': epoch, 'lr': lr, 'diverged': True}))
                trace.stop_reason = STOP_DIVERGED
                break

            # evaluate
            train_loss, train_f1 = evaluate(model, fold.train_x, fold.train_y, fold.n_classes, protocol.loss)
            val_loss, val_f1 = evaluate(model, fold.val_x, fold.val_y, fold.n_classes, protocol.loss)
            if not math.isfinite(train_loss):
                logging.warning(f'fold {fold.fold_subject} diverged at epoch {epoch}: train loss {train_loss}')
                trace.append(EpochRecord({'epoch': epoch, 'lr': lr, 'diverged': True}))
                trace.stop_reason = STOP_DIVERGED
                break

            record = EpochRecord({
                'epoch': epoch, 'train_loss': train_loss, 'val_loss': val_loss,
                'train_f1': train_f1, 'val_f1': val_f1, 'lr': lr,
            })

            # checkpoint
            if selection == 'LAST' or _better(record.monitored(selection), best_value, is_loss_base(selection)):
                best_value = None if selection == 'LAST' else record.monitored(selection)
                best_checkpoint = Checkpoint.capture(model, epoch)
                record.checkpoint = True
            trace.append(record)
            logging.debug(f'fold {fold.fold_subject} epoch {epoch}: train_loss {train_loss:.4f} '
                          f'val_loss {val_loss:.4f} val_f1 {val_f1:.4f} lr {lr:.3g}')

            # scheduler
            lr = scheduler_epoch_end(scheduler, record.monitored(protocol.scheduler_base))

            # early stopping
            if stopper is not None:
                early_stop_update(stopper, record.monitored(stopper.base), epoch)
                if stopper.stopped:
                    trace.stop_reason = STOP_EARLY
                    break

    trace.selected_epoch = select_model(trace, selection)
    if trace.selected_epoch != best_checkpoint.epoch:
        logging.warning(f'fold {fold.fold_subject}: selection picked epoch {trace.selected_epoch} but the last '
                        f'checkpoint is from epoch {best_checkpoint.epoch}, using the checkpoint')
        trace.selected_epoch = best_checkpoint.epoch

    best_checkpoint.restore(model)
    model.eval()
    logging.info(f'fold {fold.fold_subject}: {len(trace)} epochs ({trace.stop_reason}), '
                 f'selected epoch {trace.selected_epoch} by {selection}')
    return trace, best_checkpoint
