import math
from pathlib import Path

import pandas as pd

from app.exceptions import BadRequestException, SchemaError
from app.storage import atomic_write

from evaluation.metrics import ConfusionMatrix
from evaluation.models import FoldResult, ResultTable, RESULT_COLUMNS, ERROR_COLUMNS, RESULT_KEY


RESULTS_FILE = 'results.csv'
ERRORS_FILE = 'errors.csv'
SUMMARY_FILE = 'summary.csv'
CONFUSION_FILE = 'confusion.csv'
COMPARISON_TEXT_FILE = 'comparison.txt'
COMPARISON_CSV_FILE = 'comparison.csv'


def _write_frame(frame: pd.DataFrame, path: Path) -> Path:
    with atomic_write(path) as handle:
        frame.to_csv(handle, index=False)
    return path


def save_results(table: ResultTable, out_dir: Path | str) -> list[Path]:
    """ results.csv and summary.csv, plus errors.csv when any fold-run failed """
    out_dir = Path(out_dir)
    written = [
        _write_frame(table.frame(), out_dir / RESULTS_FILE),
        _write_frame(table.summary(), out_dir / SUMMARY_FILE),
    ]
    if table.failures():
        written.append(_write_frame(table.errors_frame(), out_dir / ERRORS_FILE))
    return written


def load_results(out_dir: Path | str) -> ResultTable:
    out_dir = Path(out_dir)
    path = out_dir / RESULTS_FILE
    if not path.is_file():
        raise BadRequestException(f'no {RESULTS_FILE} in {out_dir}')

    frame = pd.read_csv(path)
    missing = [column for column in RESULT_COLUMNS if column not in frame.columns]
    if missing:
        raise SchemaError(f'{path.name} is missing columns {missing}')

    errors = {}
    if (out_dir / ERRORS_FILE).is_file():
        for row in pd.read_csv(out_dir / ERRORS_FILE, usecols=ERROR_COLUMNS).to_dict('records'):
            errors[tuple(row[column] for column in RESULT_KEY)] = row['error']

    results = []
    for row in frame.to_dict('records'):
        key = tuple(row[column] for column in RESULT_KEY)
        if key in errors:
            row['error'] = errors[key]
        results.append(FoldResult(row))
    return ResultTable(results)


def save_confusion(confusion: ConfusionMatrix, path: Path | str) -> Path:
    """ rows are true classes, columns predicted classes """
    labels = list(range(confusion.n_classes))
    frame = pd.DataFrame(confusion.counts, index=pd.Index(labels, name='true'), columns=labels)
    with atomic_write(path) as handle:
        frame.to_csv(handle)
    return Path(path)


def load_confusion(path: Path | str) -> ConfusionMatrix:
    frame = pd.read_csv(path, index_col='true')
    return ConfusionMatrix(frame.to_numpy())


def save_comparison(comparison, out_dir: Path | str) -> list[Path]:
    out_dir = Path(out_dir)
    with atomic_write(out_dir / COMPARISON_TEXT_FILE) as handle:
        handle.write(comparison.text() + '\n')
    return [out_dir / COMPARISON_TEXT_FILE, _write_frame(comparison.frame(), out_dir / COMPARISON_CSV_FILE)]


def format_score(value) -> str:
    """ three decimals, absent cells as '-' """
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return '-'
    return f'{value:.3f}'
