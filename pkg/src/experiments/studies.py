import logging
from pathlib import Path
from typing import Optional

from architectures.models import ModelSpec
from data.folds import VAL_POLICY_STRATIFIED
from data.models import SensorDataset
from evaluation.compare import compare, Comparison
from evaluation.models import ResultTable
from evaluation.loso import run_loso
from protocol.models import TrainingProtocol


def run_study(procedures: dict[str, TrainingProtocol], dataset: SensorDataset, model_specs: list[ModelSpec],
              seeds: list[int], val_policy: str = VAL_POLICY_STRATIFIED, subjects: Optional[list[int]] = None,
              out_dir: Optional[Path | str] = None, workers: int = 1, torch_threads: int = 1,
              reference=None) -> tuple[ResultTable, Comparison]:
    """ full LOSO of every procedure on every model, in one append-only table, then compared """
    table = ResultTable()
    for model_spec in model_specs:
        for name, protocol in procedures.items():
            run_loso(protocol, dataset, model_spec, seeds, procedure=name, val_policy=val_policy,
                     subjects=subjects, out_dir=out_dir, workers=workers, torch_threads=torch_threads,
                     table=table)

    comparison = compare(list(procedures.keys()), table, reference=reference)
    logging.info(f'study on {dataset.meta.name}: wins {comparison.wins()}')
    return table, comparison
