"""Loss data ingestion, validation and emission.

Loss files are CSV with header ``orc_id,year,amount``. An optional counts
file ``orc_id,year,below_count`` records how many losses fell at or below the
reporting threshold; without it only the truncated likelihood is available.
Thresholds come from a CSV ``orc_id,threshold`` or a mapping.
"""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional

import numpy as np

LOSS_HEADER = ("orc_id", "year", "amount")
COUNT_HEADER = ("orc_id", "year", "below_count")
THRESHOLD_HEADER = ("orc_id", "threshold")


class DataValidationError(ValueError):
    """Raised with every offending line listed in ``errors``."""

    def __init__(self, errors: List[str]):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


@dataclass(frozen=True)
class LossEvent:
    orc_id: str
    year: int
    amount: float


@dataclass
class LossDataset:
    events: List[LossEvent]
    thresholds: Dict[str, float]
    below_counts: Optional[Dict[str, Dict[int, int]]] = None
    notes: List[str] = field(default_factory=list)

    @property
    def orcs(self) -> List[str]:
        return sorted({e.orc_id for e in self.events} | set(self.thresholds), key=_orc_sort_key)

    def has_counts(self, orc: str) -> bool:
        return self.below_counts is not None and orc in self.below_counts

    def years(self, orc: str) -> List[int]:
        ys = {e.year for e in self.events if e.orc_id == orc}
        if self.has_counts(orc):
            ys |= set(self.below_counts[orc])
        if not ys:
            return []
        return list(range(min(ys), max(ys) + 1))

    def losses_by_year(self, orc: str) -> Dict[int, np.ndarray]:
        acc = defaultdict(list)
        for e in self.events:
            if e.orc_id == orc:
                acc[e.year].append(e.amount)
        return {y: np.asarray(acc.get(y, []), dtype=float) for y in self.years(orc)}

    def counts_by_year(self, orc: str) -> Dict[int, int]:
        if not self.has_counts(orc):
            raise KeyError(f"no below-threshold counts for ORC {orc}")
        c = self.below_counts[orc]
        return {y: int(c.get(y, 0)) for y in self.years(orc)}

    def n_events(self, orc: str) -> int:
        return sum(1 for e in self.events if e.orc_id == orc)


def _orc_sort_key(orc: str):
    return (0, int(orc), "") if orc.isdigit() else (1, 0, orc)


def _read_rows(path: str, header: tuple, errors: List[str]):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            head = next(reader)
        except StopIteration:
            errors.append(f"{path}: empty file")
            return
        if tuple(h.strip() for h in head) != header:
            errors.append(f"{path}:1: expected header {','.join(header)}")
            return
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            yield reader.line_num, row


def _parse_int(s: str) -> int:
    v = float(s)
    if not v.is_integer():
        raise ValueError(s)
    return int(v)


def read_thresholds(path: str) -> Dict[str, float]:
    errors: List[str] = []
    out: Dict[str, float] = {}
    for line, row in _read_rows(path, THRESHOLD_HEADER, errors):
        try:
            orc, tau = row[0].strip(), float(row[1])
            if not math.isfinite(tau):
                raise ValueError
            out[orc] = tau
        except (ValueError, IndexError):
            errors.append(f"{path}:{line}: malformed threshold row {row!r}")
    if errors:
        raise DataValidationError(errors)
    return out


def read_counts(path: str) -> Dict[str, Dict[int, int]]:
    errors: List[str] = []
    out: Dict[str, Dict[int, int]] = defaultdict(dict)
    for line, row in _read_rows(path, COUNT_HEADER, errors):
        try:
            if len(row) != 3:
                raise ValueError
            c = _parse_int(row[2])
            if c < 0:
                errors.append(f"{path}:{line}: below_count must be nonnegative")
                continue
            out[row[0].strip()][_parse_int(row[1])] = c
        except ValueError:
            errors.append(f"{path}:{line}: malformed count row {row!r}")
    if errors:
        raise DataValidationError(errors)
    return dict(out)


def ingest(
    path: str,
    thresholds: Mapping[str, float],
    counts_path: Optional[str] = None,
) -> LossDataset:
    """Read and validate a loss file.

    Every malformed row, nonpositive amount, unknown ORC and amount at or
    below its ORC's threshold is reported with its line number.
    """
    errors: List[str] = []
    events: List[LossEvent] = []
    thresholds = {str(k): float(v) for k, v in thresholds.items()}
    for line, row in _read_rows(path, LOSS_HEADER, errors):
        if len(row) != 3:
            errors.append(f"{path}:{line}: expected 3 fields, got {len(row)}")
            continue
        orc = row[0].strip()
        try:
            year = _parse_int(row[1])
        except ValueError:
            errors.append(f"{path}:{line}: bad year {row[1]!r}")
            continue
        try:
            amount = float(row[2])
        except ValueError:
            errors.append(f"{path}:{line}: bad amount {row[2]!r}")
            continue
        if not math.isfinite(amount) or amount <= 0:
            errors.append(f"{path}:{line}: amount must be positive and finite, got {row[2]}")
            continue
        if orc not in thresholds:
            errors.append(f"{path}:{line}: no threshold for ORC {orc!r}")
            continue
        if amount <= thresholds[orc]:
            errors.append(f"{path}:{line}: amount {row[2]} is not above threshold {thresholds[orc]!r} of ORC {orc}")
            continue
        events.append(LossEvent(orc, year, amount))
    counts = None
    notes: List[str] = []
    if counts_path is not None:
        try:
            counts = read_counts(counts_path)
        except DataValidationError as exc:
            errors.extend(exc.errors)
    else:
        notes.append("no counts file: censored likelihood unavailable")
    if errors:
        raise DataValidationError(errors)
    return LossDataset(events, thresholds, counts, notes)


def write_dataset(dataset: LossDataset, path: str, counts_path: Optional[str] = None,
                  thresholds_path: Optional[str] = None) -> None:
    """Emit a dataset so that :func:`ingest` reproduces it exactly."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOSS_HEADER)
        for e in dataset.events:
            w.writerow([e.orc_id, e.year, f"{e.amount:.17g}"])
    if thresholds_path is not None:
        with open(thresholds_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(THRESHOLD_HEADER)
            for orc, tau in dataset.thresholds.items():
                w.writerow([orc, f"{tau:.17g}"])
    if counts_path is not None and dataset.below_counts is not None:
        with open(counts_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COUNT_HEADER)
            for orc, per in dataset.below_counts.items():
                for year, c in sorted(per.items()):
                    w.writerow([orc, year, c])


def dataset_from_arrays(orc_id: str, losses_by_year, tau: float, below_counts=None, first_year: int = 0) -> LossDataset:
    """Build a single-ORC dataset from per-year loss arrays (values above ``tau``)."""
    events = [
        LossEvent(str(orc_id), first_year + i, float(v))
        for i, year in enumerate(losses_by_year)
        for v in year
    ]
    counts = None
    if below_counts is not None:
        counts = {str(orc_id): {first_year + i: int(c) for i, c in enumerate(below_counts)}}
    return LossDataset(events, {str(orc_id): float(tau)}, counts)


def format_value(v) -> str:
    """CSV cell text; floats use 17 significant digits so they round-trip."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    if v is None:
        return ""
    return str(getattr(v, "value", v))


def write_rows_csv(path: str, rows) -> str:
    cols: List[str] = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([format_value(r.get(c)) for c in cols])
    return path


def jsonable(v):
    """Recursively convert to JSON-safe values; NaN and inf become null."""
    if isinstance(v, dict):
        return {str(getattr(k, "value", k)): jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    if hasattr(v, "value"):
        return v.value
    return v


def write_json(path: str, obj) -> str:
    with open(path, "w") as fh:
        json.dump(jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
