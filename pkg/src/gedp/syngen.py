"""Synthetic establishment microdata from county x industry aggregate cells.

Each input cell carries an establishment count and three totals (month-1
employment, month-3 employment, quarterly wages).  One Gamma concentration
vector is drawn per cell and reused across the three Dirichlet splits, so an
establishment that gets a large employment share also tends to get a large
wage share; month-2 employment is then interpolated per record with noise
proportional to the month-1/month-3 change.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .dataset import Dataset, EstablishmentRecord
from .errors import InputError, LoadError
from .numerics import RngStream, sample_dirichlet, sample_normal

__all__ = [
    "CellTotals",
    "dirichlet_divide",
    "month2",
    "generate_establishments",
    "load_cells_csv",
    "write_cells_csv",
]

# Constant public attributes for generated data: one reference quarter and
# the private-ownership code.
_YEAR = 2016
_QTR = 1
_OWN = "5"

_CELL_COLUMNS = ("county", "naics6", "estnum", "m1emp", "m3emp", "wage")


@dataclass(frozen=True)
class CellTotals:
    """County x NAICS-6 aggregate: establishment count plus three totals."""

    county: str
    naics6: str
    estnum: int
    m1emp: float
    m3emp: float
    wage: float

    def __post_init__(self):
        if len(self.county) < 2:
            raise InputError(f"county code too short: {self.county!r}")
        if not (len(self.naics6) == 6 and self.naics6.isdigit()):
            raise InputError(f"naics6 must be exactly 6 digits, got {self.naics6!r}")
        if self.estnum < 0:
            raise InputError(f"estnum must be >= 0, got {self.estnum}")
        for name in ("m1emp", "m3emp", "wage"):
            if getattr(self, name) < 0:
                raise InputError(f"{name} must be >= 0, got {getattr(self, name)}")

    @property
    def state(self) -> str:
        return self.county[:2]


def dirichlet_divide(rng: RngStream, concentration, total: float) -> np.ndarray:
    """Split ``total`` into nonnegative shares p*total, p ~ Dirichlet(b).

    An all-zero concentration vector is replaced by all ones; individual
    zero entries receive exactly zero allocation.
    """
    b = np.asarray(concentration, dtype=float)
    if b.ndim != 1 or b.size < 1:
        raise InputError("concentration must be a nonempty 1-d vector")
    if np.any(b < 0):
        raise InputError("concentration entries must be >= 0")
    if total < 0:
        raise InputError(f"total must be >= 0, got {total}")
    if not np.any(b > 0):
        b = np.ones_like(b)
    out = np.zeros_like(b)
    positive = b > 0
    out[positive] = sample_dirichlet(rng, b[positive]) * total
    return out


def month2(rng: RngStream, eta: float, m1: float, m3: float) -> float:
    """Interpolate month-2 employment between the month-1 and month-3 values.

    Draw Normal((m1+m3)/2, 2*eta*|m3-m1|/(m3+m1)); clamp nonpositive draws
    to 0 when either endpoint is 0 (a birth or death quarter) and to 1
    otherwise.  Both endpoints zero means the establishment had no one on
    payroll: return 0 without drawing.
    """
    if eta <= 0:
        raise InputError(f"eta must be > 0, got {eta}")
    if m1 < 0 or m3 < 0:
        raise InputError("month endpoints must be >= 0")
    if m1 == 0.0 and m3 == 0.0:
        return 0.0
    variance = 2.0 * eta * abs(m3 - m1) / (m3 + m1)
    draw = sample_normal(rng, 0.5 * (m1 + m3), np.sqrt(variance))
    if draw <= 0.0:
        return 0.0 if (m1 == 0.0 or m3 == 0.0) else 1.0
    return float(draw)


def generate_establishments(
    rng: RngStream,
    cells: Sequence[CellTotals],
    alpha_prior: float = 10.0,
    theta_prior: float = 200.0,
    eta: float = 0.5,
) -> Dataset:
    """Generate one establishment file from aggregate cells.

    Per cell (on its own substream, keyed by cell index): draw one
    Gamma(alpha_prior, theta_prior) concentration vector of length estnum,
    reuse it to divide the m1emp, m3emp, and wage totals in that order, then
    draw month-2 per record.  Primary keys are consecutive integers across
    the whole file.  Cells with estnum=0 are skipped with a warning.
    """
    if alpha_prior <= 0 or theta_prior <= 0 or eta <= 0:
        raise InputError("alpha_prior, theta_prior, and eta must be > 0")
    records: List[EstablishmentRecord] = []
    next_key = 1
    for cell_index, cell in enumerate(cells):
        if cell.estnum == 0:
            warnings.warn(
                f"cell {cell.county}/{cell.naics6} has estnum=0; skipped", stacklevel=2
            )
            continue
        sub = rng.substream(cell_index)
        concentration = sub.generator.gamma(alpha_prior, theta_prior, size=cell.estnum)
        m1 = dirichlet_divide(sub, concentration, cell.m1emp)
        m3 = dirichlet_divide(sub, concentration, cell.m3emp)
        wage = dirichlet_divide(sub, concentration, cell.wage)
        for j in range(cell.estnum):
            records.append(
                EstablishmentRecord(
                    year=_YEAR,
                    qtr=_QTR,
                    state=cell.state,
                    cnty=cell.county,
                    naics=cell.naics6,
                    own=_OWN,
                    m1emp=float(m1[j]),
                    m2emp=month2(sub, eta, float(m1[j]), float(m3[j])),
                    m3emp=float(m3[j]),
                    wage=float(wage[j]),
                    primary_key=str(next_key + j),
                )
            )
        next_key += cell.estnum
    return Dataset(records)


def load_cells_csv(path) -> List[CellTotals]:
    cells = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in _CELL_COLUMNS if c not in (reader.fieldnames or ())]
        if missing:
            raise LoadError(f"{path}: missing cell columns {missing}")
        for line, row in enumerate(reader, start=2):
            try:
                cells.append(
                    CellTotals(
                        county=row["county"],
                        naics6=row["naics6"],
                        estnum=int(row["estnum"]),
                        m1emp=float(row["m1emp"]),
                        m3emp=float(row["m3emp"]),
                        wage=float(row["wage"]),
                    )
                )
            except (InputError, ValueError) as exc:
                raise LoadError(f"{path}: bad cell row {line}: {exc}") from exc
    if not cells:
        raise LoadError(f"{path}: no cell rows")
    return cells


def write_cells_csv(cells: Sequence[CellTotals], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CELL_COLUMNS)
        for c in cells:
            writer.writerow([c.county, c.naics6, c.estnum, repr(c.m1emp), repr(c.m3emp), repr(c.wage)])
