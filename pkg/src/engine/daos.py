from pathlib import Path

import pandas as pd

from app.exceptions import SchemaError, BadRequestException
from app.storage import atomic_write

from engine.models import EpochRecord, TrainingTrace, TRACE_COLUMNS


TRACE_FILE = 'trace.csv'


def trace_frame(trace: TrainingTrace) -> pd.DataFrame:
    frame = pd.DataFrame([record.json() for record in trace.records], columns=TRACE_COLUMNS)
    frame['selected'] = frame['epoch'] == trace.selected_epoch
    return frame


def save_trace(trace: TrainingTrace, path: Path | str) -> Path:
    """ one row per epoch; the selected epoch is flagged, the stop reason goes in a comment header """
    with atomic_write(path) as handle:
        handle.write(f'# stop_reason={trace.stop_reason}\n')
        trace_frame(trace).to_csv(handle, index=False)
    return Path(path)


def load_trace(path: Path | str) -> TrainingTrace:
    path = Path(path)
    if not path.is_file():
        raise BadRequestException(f'no such trace {path}')

    with open(path) as handle:
        header = handle.readline().strip()
    stop_reason = header.split('=', 1)[1] if header.startswith('# stop_reason=') else None

    frame = pd.read_csv(path, comment='#')
    missing = [column for column in TRACE_COLUMNS if column not in frame.columns]
    if missing:
        raise SchemaError(f'{path.name} is missing columns {missing}')

    records = [EpochRecord(row) for row in frame[TRACE_COLUMNS].to_dict('records')]
    selected = frame.loc[frame['selected'].astype(bool), 'epoch'] if 'selected' in frame.columns else []
    return TrainingTrace(records, selected_epoch=int(selected.iloc[0]) if len(selected) else None,
                         stop_reason=stop_reason)
