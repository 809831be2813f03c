from pathlib import Path

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from app.exceptions import ValidationException
from app.storage import atomic_write
from engine.models import TrainingTrace


CURVE_QUANTITIES = ['train_loss', 'val_loss', 'train_f1', 'val_f1', 'lr']
CURVE_FORMATS = ['png', 'svg']
# no timestamps, so reruns produce identical files
SAVE_METADATA = {'png': {'Software': None}, 'svg': {'Date': None}}
QUANTITY_LABELS = {
    'train_loss': 'training loss',
    'val_loss': 'validation loss',
    'train_f1': 'training macro F1',
    'val_f1': 'validation macro F1',
    'lr': 'learning rate',
}


def curve_frame(traces: list[TrainingTrace], quantity: str) -> pd.DataFrame:
    """ epoch-indexed frame, one column per trace; diverged epochs are nan """
    columns = {}
    for index, trace in enumerate(traces):
        values = [np.nan if record.diverged else getattr(record, quantity) for record in trace.records]
        columns[index] = pd.Series(values, index=[record.epoch for record in trace.records], dtype=np.float64)
    return pd.DataFrame(columns).sort_index()


def curve_paths(out_dir: Path | str, name: str, quantity: str) -> list[Path]:
    return [Path(out_dir) / f'{name}_{quantity}.{extension}' for extension in CURVE_FORMATS]


def emit_curves(families: dict[str, list[TrainingTrace]], quantity: str, out_dir: Path | str,
                name: str = 'curves', title: str = None) -> list[Path]:
    """ one figure, one curve per family in the given order.
    families of several traces are drawn as mean with a +-1 std band """
    if quantity not in CURVE_QUANTITIES:
        raise ValidationException('quantity', f'options: {CURVE_QUANTITIES}')

    paths = curve_paths(out_dir, name, quantity)
    paths[0].parent.mkdir(parents=True, exist_ok=True)

    with plt.rc_context({'svg.hashsalt': name, 'svg.fonttype': 'none'}):
        figure, axis = plt.subplots(figsize=(8, 5))
        try:
            for label, traces in families.items():
                frame = curve_frame(traces, quantity)
                if frame.empty:
                    continue
                mean = frame.mean(axis=1)
                line, = axis.plot(frame.index, mean, label=label, linewidth=1.5)
                if frame.shape[1] > 1:
                    std = frame.std(axis=1, ddof=0)
                    axis.fill_between(frame.index, mean - std, mean + std, color=line.get_color(), alpha=0.2)

            axis.set_xlabel('epoch')
            axis.set_ylabel(QUANTITY_LABELS[quantity])
            if quantity == 'lr':
                axis.set_yscale('log')
            axis.set_title(title or QUANTITY_LABELS[quantity])
            if axis.get_legend_handles_labels()[0]:
                axis.legend()
            axis.grid(True, alpha=0.3)
            figure.tight_layout()

            for path, extension in zip(paths, CURVE_FORMATS):
                with atomic_write(path, mode='wb') as handle:
                    figure.savefig(handle, format=extension, dpi=150, metadata=SAVE_METADATA[extension])
        finally:
            plt.close(figure)

    return paths
