from typing import Optional

import pandas as pd

from app.exceptions import ValidationException

from evaluation.daos import format_score


class ComparisonRow:
    def __init__(self, model: str, dataset: str, values: dict[str, Optional[float]],
                 reference: Optional[dict[str, Optional[float]]] = None):
        self.model = model
        self.dataset = dataset
        self.values = values
        self.reference = reference or {}
        self.better = _better(values)


def _better(values: dict[str, Optional[float]]) -> Optional[str]:
    # flagged only when every procedure has a score and one is strictly highest
    if any(value is None for value in values.values()):
        return None
    best = max(values.values())
    leaders = [procedure for procedure, value in values.items() if value == best]
    return leaders[0] if len(leaders) == 1 else None


class Comparison:
    """ per (model, dataset) scores of each procedure with the better one flagged """
    def __init__(self, procedures: list[str], rows: list[ComparisonRow], with_reference: bool = False):
        self.procedures = procedures
        self.rows = rows
        self.with_reference = with_reference

    def row(self, model: str, dataset: str) -> ComparisonRow:
        return next(row for row in self.rows if row.model == model and row.dataset == dataset)

    def wins(self) -> dict[str, int]:
        return {procedure: sum(row.better == procedure for row in self.rows) for procedure in self.procedures}

    def frame(self) -> pd.DataFrame:
        records = []
        for row in self.rows:
            record = {'model': row.model, 'dataset': row.dataset}
            record.update({procedure: row.values[procedure] for procedure in self.procedures})
            if self.with_reference:
                record.update({f'published_{procedure}': row.reference.get(procedure)
                               for procedure in self.procedures})
            record['better'] = row.better
            records.append(record)
        return pd.DataFrame(records)

    def text(self) -> str:
        header = ['model', 'dataset'] + self.procedures
        if self.with_reference:
            header += [f'published {procedure}' for procedure in self.procedures]

        lines = []
        for row in self.rows:
            cells = [row.model, row.dataset]
            for procedure in self.procedures:
                mark = '*' if row.better == procedure else ''
                cells.append(format_score(row.values[procedure]) + mark)
            if self.with_reference:
                cells += [format_score(row.reference.get(procedure)) for procedure in self.procedures]
            lines.append(cells)

        widths = [max(len(str(cell)) for cell in column) for column in zip(header, *lines)]

        def render(cells):
            return '  '.join(str(cell).ljust(width) for cell, width in zip(cells, widths)).rstrip()

        wins = ', '.join(f'{procedure} {count}' for procedure, count in self.wins().items())
        return '\n'.join([render(header)] + [render(cells) for cells in lines] + ['', f'* better mean; wins: {wins}'])


def compare(procedures: list[str], table, reference=None) -> Comparison:
    """ lines procedures up per (model, dataset) found in table; absent cells stay None, never zero.
    table and reference are anything with means() keyed (model, procedure, dataset) """
    if len(procedures) < 2:
        raise ValidationException('procedures', 'at least two procedures are needed to compare')

    means = table.means()
    reference_means = reference.means() if reference is not None else {}
    pairs = []
    for model, procedure, dataset in means:
        if procedure in procedures and (model, dataset) not in pairs:
            pairs.append((model, dataset))

    rows = []
    for model, dataset in pairs:
        values = {procedure: means.get((model, procedure, dataset)) for procedure in procedures}
        published = {procedure: reference_means.get((model, procedure, dataset)) for procedure in procedures}
        rows.append(ComparisonRow(model, dataset, values, published))
    return Comparison(procedures, rows, with_reference=reference is not None)
