import math
from typing import Optional

import pandas as pd

from app.exceptions import ValidationException

from evaluation.metrics import ConfusionMatrix


RESULT_KEY = ['model', 'procedure', 'dataset', 'seed', 'subject']
RESULT_COLUMNS = RESULT_KEY + ['macro_f1', 'diverged']
ERROR_COLUMNS = RESULT_KEY + ['error']
SUMMARY_COLUMNS = ['model', 'procedure', 'dataset', 'mean', 'std', 'runs', 'diverged', 'failed']


class FoldResult:
    """ outcome of one (seed, held-out subject) fold-run """
    def __init__(self, data: dict):
        self.model: str = data.get('model')
        self.procedure: str = data.get('procedure')
        self.dataset: str = data.get('dataset')
        self.seed: int = int(data.get('seed'))
        self.subject: int = int(data.get('subject'))
        self.macro_f1: float = float(data.get('macro_f1', math.nan))
        self.diverged: bool = bool(data.get('diverged', False))
        self.error: Optional[str] = data.get('error')
        self.selected_epoch: Optional[int] = data.get('selected_epoch')
        self.stop_reason: Optional[str] = data.get('stop_reason')

        # in-memory only, persisted separately per fold
        self.trace = data.get('trace')
        self.confusion: Optional[ConfusionMatrix] = data.get('confusion')

    @property
    def key(self) -> tuple:
        return self.model, self.procedure, self.dataset, self.seed, self.subject

    @property
    def failed(self) -> bool:
        return self.error is not None

    def json(self) -> dict:
        return {
            'model': self.model,
            'procedure': self.procedure,
            'dataset': self.dataset,
            'seed': self.seed,
            'subject': self.subject,
            'macro_f1': self.macro_f1,
            'diverged': self.diverged,
        }


class ResultTable:
    """ append-only collection of fold-runs, aggregated per (model, procedure, dataset) """
    def __init__(self, results: Optional[list[FoldResult]] = None):
        self.results: list[FoldResult] = []
        self._keys: set = set()
        for result in results or []:
            self.add(result)

    def add(self, result: FoldResult):
        if result.key in self._keys:
            raise ValidationException('result', f'fold-run {result.key} is already recorded')
        self._keys.add(result.key)
        self.results.append(result)

    def extend(self, results):
        for result in results:
            self.add(result)

    def __len__(self) -> int:
        return len(self.results)

    def __iter__(self):
        return iter(self.results)

    def failures(self) -> list[FoldResult]:
        return [result for result in self.results if result.failed]

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame([result.json() for result in self.results], columns=RESULT_COLUMNS)

    def errors_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{**result.json(), 'error': result.error} for result in self.failures()],
                            columns=ERROR_COLUMNS)

    def summary(self) -> pd.DataFrame:
        """ mean and population std of macro F1 per (model, procedure, dataset); failed runs count but do not score """
        rows = []
        frame = self.frame()
        frame['failed'] = [result.failed for result in self.results]
        for (model, procedure, dataset), group in frame.groupby(['model', 'procedure', 'dataset'], sort=False):
            scored = group.loc[~group['failed'], 'macro_f1']
            rows.append({
                'model': model,
                'procedure': procedure,
                'dataset': dataset,
                'mean': scored.mean() if len(scored) else math.nan,
                'std': scored.std(ddof=0) if len(scored) else math.nan,
                'runs': len(group),
                'diverged': int(group['diverged'].sum()),
                'failed': int(group['failed'].sum()),
            })
        return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)

    def means(self) -> dict[tuple[str, str, str], float]:
        """ (model, procedure, dataset) -> mean macro F1, cells without a scored run omitted """
        summary = self.summary()
        return {(row.model, row.procedure, row.dataset): float(row.mean)
                for row in summary.itertuples() if not math.isnan(row.mean)}

    def mean(self, model: str, procedure: str, dataset: str) -> Optional[float]:
        return self.means().get((model, procedure, dataset))
