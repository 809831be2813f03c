# published LOSO mean macro F1 for the two procedures, keyed (model, procedure, dataset)
REFERENCE_DATASETS = ['DSADS', 'HAPT', 'OPPO', 'PAMAP2', 'RWHAR']
REFERENCE_SCORES = {
    ('MCNN', 'comm'): [0.801, 0.779, 0.405, 0.708, 0.691],
    ('MCNN', 'new'): [0.865, 0.802, 0.432, 0.734, 0.747],
    ('CNNLSTM', 'comm'): [0.854, 0.806, 0.392, 0.735, 0.706],
    ('CNNLSTM', 'new'): [0.900, 0.820, 0.395, 0.764, 0.768],
    ('TRANSFORMER', 'comm'): [0.812, 0.767, 0.402, 0.654, 0.598],
    ('TRANSFORMER', 'new'): [0.872, 0.805, 0.440, 0.758, 0.731],
}


class ReferenceTable:
    """ published means only, no per-fold values """
    def __init__(self, scores: dict[tuple[str, str], list[float]] = None, datasets: list[str] = None):
        scores = REFERENCE_SCORES if scores is None else scores
        datasets = REFERENCE_DATASETS if datasets is None else datasets
        self._means = {
            (model, procedure, dataset): value
            for (model, procedure), values in scores.items()
            for dataset, value in zip(datasets, values)
        }

    def means(self) -> dict[tuple[str, str, str], float]:
        return dict(self._means)

    def mean(self, model: str, procedure: str, dataset: str):
        return self._means.get((model, procedure, dataset))
