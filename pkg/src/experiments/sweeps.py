import logging
import math
from pathlib import Path
from typing import Optional

import numpy as np

from architectures.models import ModelSpec
from data.folds import loso_subjects, VAL_POLICY_STRATIFIED
from data.models import SensorDataset
from engine.models import TrainingTrace
from evaluation.daos import save_results
from evaluation.loso import run_loso
from evaluation.models import ResultTable
from protocol.daos import save_protocol

from experiments.models import SweepSpec


PROTOCOL_FILE = 'protocol.json'


class SweepResult:
    """ fold-run results per swept value, keyed by value label in sweep order """
    def __init__(self, spec: SweepSpec, tables: dict[str, ResultTable]):
        self.spec = spec
        self.tables = tables

    def labels(self) -> list[str]:
        return list(self.tables.keys())

    def traces(self, label: str) -> list[TrainingTrace]:
        return [result.trace for result in self.tables[label] if result.trace is not None]

    def trace_families(self) -> dict[str, list[TrainingTrace]]:
        return {label: self.traces(label) for label in self.labels()}

    def final_val_loss(self, label: str) -> float:
        """ mean over runs of the last completed epoch's validation loss, inf when every run diverged early """
        finals = []
        for trace in self.traces(label):
            completed = trace.completed()
            finals.append(completed[-1].val_loss if completed else math.inf)
        return float(np.mean(finals)) if finals else math.nan

    def diverged(self, label: str) -> bool:
        return any(trace.diverged for trace in self.traces(label))


def run_sweep(spec: SweepSpec, dataset: SensorDataset, model_spec: ModelSpec, seeds: list[int],
              full_loso: bool = False, val_policy: str = VAL_POLICY_STRATIFIED,
              out_dir: Optional[Path | str] = None, workers: int = 1, torch_threads: int = 1) -> SweepResult:
    """ trains every swept value under every seed; the first subject's fold only unless full_loso """
    subjects = loso_subjects(dataset)
    if not full_loso:
        subjects = subjects[:1]
    logging.info(f'sweeping {spec.factor} over {spec.values} on subjects {subjects}')

    tables = {}
    for label, protocol in spec.variants():
        value_dir = None if out_dir is None else Path(out_dir) / label
        tables[label] = run_loso(protocol, dataset, model_spec, seeds, procedure=label, val_policy=val_policy,
                                 subjects=subjects, out_dir=value_dir, workers=workers, torch_threads=torch_threads)
        if value_dir is not None:
            save_protocol(protocol, value_dir / PROTOCOL_FILE)
            save_results(tables[label], value_dir)

    return SweepResult(spec, tables)
