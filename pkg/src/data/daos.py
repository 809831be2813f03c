import json
import logging
import re
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from app.exceptions import SchemaError, LabelError, BadRequestException
from app.storage import atomic_write

from data.models import DatasetMeta, Recording, SensorDataset


META_FILE = 'meta.json'
SUBJECT_FILE_PATTERN = re.compile(r'^subj_(\d+)\.csv$')


def channel_columns(n_channels: int) -> list[str]:
    return [f'ch_{channel}' for channel in range(n_channels)]


def subject_columns(n_channels: int) -> list[str]:
    return ['subject', 'timestep'] + channel_columns(n_channels) + ['label']


def read_meta(path: Path | str) -> DatasetMeta:
    meta_path = Path(path) / META_FILE
    if not meta_path.is_file():
        raise SchemaError(f'missing {META_FILE} in {path}')
    try:
        return DatasetMeta(json.loads(meta_path.read_text(encoding='utf-8')))
    except json.JSONDecodeError as e:
        raise SchemaError(f'{meta_path} is not valid json: {e.msg}')


def _recording(name: str, subject_id: int, frame: pd.DataFrame, label_column: str, channel_names: list[str],
               n_classes: int, timestep_column: Optional[str] = None) -> Recording:
    """ checks labels and channels of one subject's rows, orders them by timestep and fills numeric gaps """
    if frame[label_column].isna().any():
        raise LabelError(f'{name}: missing labels')
    labels = pd.to_numeric(frame[label_column], errors='coerce').to_numpy()
    if np.isnan(labels).any() or not np.all(np.equal(np.mod(labels, 1), 0)):
        raise LabelError(f'{name}: labels must be integers')
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise LabelError(f'{name}: labels must be within [0, {n_classes})')

    if timestep_column is not None:
        frame = frame.sort_values(timestep_column, kind='stable')
    channels = frame[channel_names].apply(pd.to_numeric, errors='coerce')
    if channels.isna().all(axis=0).any():
        empty = list(channels.columns[channels.isna().all(axis=0)])
        raise SchemaError(f'{name}: channels without any value {empty}')
    if channels.isna().any().any():
        logging.info(f'{name}: interpolating {int(channels.isna().sum().sum())} missing values')
        # linear inside the series, nearest value at the edges
        channels = channels.interpolate(method='linear', axis=0).ffill().bfill()

    labels = pd.to_numeric(frame[label_column]).to_numpy().astype(np.int64)
    return Recording(subject_id, channels.to_numpy(dtype=np.float64), labels)


def read_recording(csv_path: Path, meta: DatasetMeta) -> Recording:
    """ reads one subj_<id>.csv, interpolating numeric gaps per channel """
    subject_id = int(SUBJECT_FILE_PATTERN.match(csv_path.name).group(1))
    frame = pd.read_csv(csv_path)

    expected = subject_columns(meta.n_channels)
    if list(frame.columns) != expected:
        raise SchemaError(f'{csv_path.name}: expected columns {expected[:3]}..{expected[-2:]}, '
                          f'found {list(frame.columns)[:3]}..{list(frame.columns)[-2:]}')

    if frame['subject'].isna().any() or (frame['subject'] != subject_id).any():
        raise SchemaError(f'{csv_path.name}: subject column must equal {subject_id} on every row')

    return _recording(csv_path.name, subject_id, frame, 'label', channel_columns(meta.n_channels),
                      meta.n_classes, timestep_column='timestep')


def load_dataset(path: Path | str, meta: Optional[DatasetMeta] = None) -> SensorDataset:
    """ loads a dataset directory in the canonical per-subject schema """
    path = Path(path)
    if not path.is_dir():
        raise BadRequestException(f'no such dataset directory {path}')
    meta = meta or read_meta(path)

    csv_paths = sorted(p for p in path.iterdir() if SUBJECT_FILE_PATTERN.match(p.name))
    if not csv_paths:
        raise SchemaError(f'no subj_<id>.csv files in {path}')

    recordings = [read_recording(csv_path, meta) for csv_path in csv_paths]
    dataset = SensorDataset(meta, recordings)
    logging.info(f'loaded {meta.describe()} from {path}')
    return dataset


def write_dataset(dataset: SensorDataset, path: Path | str) -> Path:
    """ writes meta.json and one csv per subject """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)

    with atomic_write(path / META_FILE) as handle:
        json.dump(dataset.meta.json(), handle, indent=2)

    for subject in dataset.subjects():
        recording = dataset.recordings[subject]
        frame = pd.DataFrame(recording.values, columns=channel_columns(dataset.meta.n_channels))
        frame.insert(0, 'timestep', np.arange(len(recording)))
        frame.insert(0, 'subject', subject)
        frame['label'] = recording.labels
        with atomic_write(path / f'subj_{subject}.csv') as handle:
            frame.to_csv(handle, index=False, float_format='%.10g')

    logging.info(f'wrote {dataset.meta.name} with {len(dataset.recordings)} subjects to {path}')
    return path


def convert_long_csv(source: Path | str, meta: DatasetMeta, subject_column: str, label_column: str,
                     channel_names: list[str], timestep_column: Optional[str] = 'timestep') -> SensorDataset:
    """ builds a dataset from one long-format csv holding every subject.
    rows are ordered by timestep_column when the csv has it, file order otherwise """
    name = Path(source).name
    frame = pd.read_csv(source)
    missing = [column for column in [subject_column, label_column] + channel_names if column not in frame.columns]
    if missing:
        raise SchemaError(f'{name}: missing columns {missing}')
    if len(channel_names) != meta.n_channels:
        raise SchemaError(f'{meta.name} has {meta.n_channels} channels, {len(channel_names)} given')
    if frame[subject_column].isna().any():
        raise SchemaError(f'{name}: rows without a subject')
    if timestep_column not in frame.columns:
        timestep_column = None

    recordings = []
    for subject, rows in frame.groupby(subject_column, sort=True):
        recordings.append(_recording(f'{name} subject {subject}', int(subject), rows, label_column, channel_names,
                                     meta.n_classes, timestep_column=timestep_column))

    return SensorDataset(meta, recordings)
