import logging
import multiprocessing as mp
from pathlib import Path
from typing import Optional

import torch

from app.exceptions import HarbenchException, ValidationException
from architectures.daos import save_checkpoint
from architectures.models import ModelSpec
from architectures.networks import build_model
from data.folds import make_loso_fold, loso_subjects, VAL_POLICY_STRATIFIED
from data.models import SensorDataset
from engine.daos import save_trace, TRACE_FILE
from engine.trainer import train_fold, predict
from protocol.models import TrainingProtocol

from evaluation.daos import save_confusion, CONFUSION_FILE
from evaluation.metrics import ConfusionMatrix, macro_f1
from evaluation.models import FoldResult, ResultTable


CHECKPOINT_FILE = 'checkpoint.npz'
FOLDS_DIR = 'folds'
LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'


def fold_dir_name(model: str, procedure: str, seed: int, subject: int) -> str:
    return f'{model}-{procedure}-seed{seed}-subject{subject}'


def run_fold(protocol: TrainingProtocol, dataset: SensorDataset, model_spec: ModelSpec, seed: int, subject: int,
             procedure: str = 'custom', val_policy: str = VAL_POLICY_STRATIFIED,
             fold_dir: Optional[Path] = None) -> FoldResult:
    """ trains and tests one held-out subject under one seed.
    harbench errors are recorded on the result instead of raised """
    row = {
        'model': model_spec.arch,
        'procedure': procedure,
        'dataset': dataset.meta.name,
        'seed': seed,
        'subject': subject,
    }
    try:
        fold = make_loso_fold(dataset, subject, val_policy=val_policy, seed=seed)
        model = build_model(model_spec, seed=seed)
        trace, checkpoint = train_fold(protocol.replace(seed=seed), model, fold)
        confusion = ConfusionMatrix.from_predictions(fold.test_y, predict(model, fold.test_x), fold.n_classes)
        score = macro_f1(confusion)
    except HarbenchException as e:
        logging.warning(f'{procedure} {model_spec.arch} seed {seed} subject {subject} failed: {e}')
        return FoldResult({**row, 'error': str(e)})

    if fold_dir is not None:
        save_trace(trace, fold_dir / TRACE_FILE)
        save_checkpoint(checkpoint, fold_dir / CHECKPOINT_FILE)
        save_confusion(confusion, fold_dir / CONFUSION_FILE)

    logging.info(f'{procedure} {model_spec.arch} seed {seed} subject {subject}: macro F1 {score:.4f}')
    return FoldResult({
        **row,
        'macro_f1': score,
        'diverged': trace.diverged,
        'selected_epoch': trace.selected_epoch,
        'stop_reason': trace.stop_reason,
        'trace': trace,
        'confusion': confusion,
    })


# per-process fold context, filled by the pool initializer
_context: dict = {}


def _init_worker(context: dict, torch_threads: int, log_level: int):
    _context.update(context)
    torch.set_num_threads(torch_threads)
    logging.basicConfig(level=log_level, format=LOG_FORMAT)


def _run_job(job: tuple[int, int]) -> FoldResult:
    seed, subject = job
    fold_dir = None
    if _context['out_dir'] is not None:
        name = fold_dir_name(_context['model_spec'].arch, _context['procedure'], seed, subject)
        fold_dir = _context['out_dir'] / FOLDS_DIR / name
    return run_fold(_context['protocol'], _context['dataset'], _context['model_spec'], seed, subject,
                    procedure=_context['procedure'], val_policy=_context['val_policy'], fold_dir=fold_dir)


def run_loso(protocol: TrainingProtocol, dataset: SensorDataset, model_spec: ModelSpec, seeds: list[int],
             procedure: str = 'custom', val_policy: str = VAL_POLICY_STRATIFIED,
             subjects: Optional[list[int]] = None, out_dir: Optional[Path | str] = None,
             workers: int = 1, torch_threads: int = 1, table: Optional[ResultTable] = None) -> ResultTable:
    """ every seed x held-out subject fold-run, appended to table in that order.
    workers > 1 runs fold-runs in a bounded pool of spawned processes """
    if not seeds:
        raise ValidationException('seeds', 'at least one seed is required')

    subjects = loso_subjects(dataset) if subjects is None else list(subjects)
    jobs = [(seed, subject) for seed in seeds for subject in subjects]
    table = ResultTable() if table is None else table
    context = {
        'protocol': protocol,
        'dataset': dataset,
        'model_spec': model_spec,
        'procedure': procedure,
        'val_policy': val_policy,
        'out_dir': None if out_dir is None else Path(out_dir),
    }
    logging.info(f'LOSO {procedure} {model_spec.arch} on {dataset.meta.name}: '
                 f'{len(subjects)} subjects x {len(seeds)} seeds, {workers} workers')

    if workers <= 1 or len(jobs) <= 1:
        _context.clear()
        _context.update(context)
        for job in jobs:
            table.add(_run_job(job))
        return table

    pool_context = mp.get_context('spawn')
    with pool_context.Pool(processes=min(workers, len(jobs)), initializer=_init_worker,
                           initargs=(context, torch_threads, logging.getLogger().level)) as pool:
        for result in pool.imap(_run_job, jobs):
            table.add(result)
    return table
