"""
Report Tables

Accuracy grid with methods as rows and conditions as columns, rendered as a
fixed-width text table with two-decimal percentages.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np
import pandas as pd

from utils.errors import DataError

DISPLAY_NAMES: Dict[str, str] = {
    'kmeans': 'K-means',
    'pam': 'PAM',
    'fuzzy_cmeans': 'Fuzzy C-means',
    'mlncf': 'MLNCF',
    'rcfm': 'RCFM',
}

METHOD_HEADER = "Method"


def display_name(method: str) -> str:
    return DISPLAY_NAMES.get(method, method)


@dataclass(frozen=True)
class ReportTable:
    """Accuracy percentages per (method, condition); NaN marks a missing cell."""
    methods: Tuple[str, ...]
    conditions: Tuple[str, ...]
    cells: np.ndarray
    per_seed: Dict[Tuple[str, str], Tuple[float, ...]] = field(default_factory=dict)

    def __post_init__(self):
        cells = np.array(self.cells, dtype=np.float64)
        if cells.shape != (len(self.methods), len(self.conditions)):
            raise DataError(f"cells must be {len(self.methods)}x{len(self.conditions)}, "
                            f"got {cells.shape}")
        cells.setflags(write=False)
        object.__setattr__(self, 'methods', tuple(self.methods))
        object.__setattr__(self, 'conditions', tuple(self.conditions))
        object.__setattr__(self, 'cells', cells)

    @property
    def complete(self) -> bool:
        return bool(np.all(np.isfinite(self.cells)))

    def cell(self, method: str, condition: str) -> float:
        return float(self.cells[self.methods.index(method), self.conditions.index(condition)])

    def to_frame(self) -> pd.DataFrame:
        """Cells as a DataFrame indexed by display name."""
        return pd.DataFrame(self.cells, index=[display_name(m) for m in self.methods],
                            columns=list(self.conditions))


def format_table(table: ReportTable) -> str:
    """
    Render a complete table.

    The first column holds method names, every other column one condition;
    cells are right-aligned with exactly two decimals.
    """
    if not table.complete:
        missing = [(m, c) for i, m in enumerate(table.methods)
                   for j, c in enumerate(table.conditions) if not np.isfinite(table.cells[i, j])]
        raise DataError(f"incomplete grid: missing {missing}")

    names = [display_name(m) for m in table.methods]
    rendered = [[f"{v:.2f}" for v in row] for row in table.cells]
    name_width = max([len(METHOD_HEADER)] + [len(n) for n in names])
    widths = [max([len(c)] + [len(r[j]) for r in rendered]) for j, c in enumerate(table.conditions)]

    lines: List[str] = [
        "  ".join([METHOD_HEADER.ljust(name_width)]
                  + [c.rjust(w) for c, w in zip(table.conditions, widths)]).rstrip()
    ]
    for name, row in zip(names, rendered):
        lines.append("  ".join([name.ljust(name_width)]
                               + [v.rjust(w) for v, w in zip(row, widths)]))
    return "\n".join(lines) + "\n"


def save_table(table: ReportTable, path: Union[str, Path]):
    """Write the text table and a CSV copy next to it."""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(format_table(table), encoding='utf-8')
    table.to_frame().to_csv(out.with_suffix('.csv'), float_format='%.2f',
                            index_label=METHOD_HEADER, lineterminator='\n')
