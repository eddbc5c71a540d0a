"""Model files (JSON) and series files (CSV)."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from scoredriven.links import parse_link
from scoredriven.model import Coefficients, ModelSpec

__all__ = ["ModelFile", "read_series", "write_series", "write_table", "format_float"]

FORMAT = "scoredriven-model"
FORMAT_VERSION = 1


def format_float(x) -> str:
    """17 significant digits; enough to round-trip any double."""
    return f"{float(x):.17g}"


def _num(x):
    x = float(x)
    return None if math.isnan(x) else x


def _vec(v):
    return [_num(x) for x in np.asarray(v, dtype=float).reshape(-1)]


def _unvec(v):
    return np.array([math.nan if x is None else float(x) for x in v], dtype=float)


@dataclass
class ModelFile:
    """Everything needed to reproduce a fitted (or specified) model.

    ``init_mode`` is ``"stationary"`` (presample rows from the unconditional
    mean) or ``"seasonal"`` (rows from per-season static fits, stored in
    ``init_rows``). ``fit`` holds free-form metadata such as the
    log-likelihood and seed.
    """

    spec: ModelSpec
    coefficients: Coefficients
    init_mode: str = "stationary"
    period: Optional[int] = None
    init_rows: Optional[np.ndarray] = None
    fit: dict = field(default_factory=dict)
    tool_version: str = ""

    def __post_init__(self):
        if self.init_mode not in ("stationary", "seasonal"):
            raise ValueError(f"unknown init mode {self.init_mode!r}")
        if self.init_mode == "seasonal" and self.init_rows is None:
            raise ValueError("seasonal initialization needs init_rows")
        if not self.tool_version:
            from scoredriven import __version__

            self.tool_version = __version__

    def initial_params(self):
        """Presample rows, or None for the unconditional mean."""
        return None if self.init_mode == "stationary" else np.asarray(self.init_rows, dtype=float)

    def to_dict(self) -> dict:
        spec, c = self.spec, self.coefficients
        return {
            "format": FORMAT,
            "format_version": FORMAT_VERSION,
            "tool_version": self.tool_version,
            "distribution": spec.dist.name,
            "score_lags": list(spec.score_lags),
            "ar_lags": list(spec.ar_lags),
            "scaling": spec.scaling,
            "time_varying": list(spec.time_varying),
            "links": [lk.token() for lk in spec.links],
            "coefficients": {
                "omega": _vec(c.omega),
                "A": {str(lag): _vec(np.diag(c.A[lag])) for lag in spec.score_lags},
                "B": {str(lag): _vec(np.diag(c.B[lag])) for lag in spec.ar_lags},
            },
            "init": {
                "mode": self.init_mode,
                "period": self.period,
                "rows": None if self.init_rows is None else [_vec(r) for r in np.atleast_2d(self.init_rows)],
            },
            "fit": self.fit,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelFile":
        if not isinstance(d, dict) or d.get("format") != FORMAT:
            raise ValueError("not a model file (missing or wrong 'format' field)")
        if d.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model file version {d.get('format_version')}")
        spec = ModelSpec(
            d["distribution"],
            p=d["score_lags"],
            q=d["ar_lags"],
            scaling=d["scaling"],
            time_varying=d["time_varying"],
            links=[parse_link(t) for t in d["links"]],
        )
        cd = d["coefficients"]
        coef = Coefficients(
            _unvec(cd["omega"]),
            {int(lag): np.diag(_unvec(v)) for lag, v in cd["A"].items()},
            {int(lag): np.diag(_unvec(v)) for lag, v in cd["B"].items()},
        )
        ini = d.get("init") or {"mode": "stationary"}
        rows = ini.get("rows")
        return cls(
            spec=spec,
            coefficients=coef,
            init_mode=ini.get("mode", "stationary"),
            period=ini.get("period"),
            init_rows=None if rows is None else np.array([_unvec(r) for r in rows]),
            fit=d.get("fit") or {},
            tool_version=d.get("tool_version", ""),
        )

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            # json writes floats with repr, the shortest string that parses
            # back to the same double
            json.dump(self.to_dict(), fh, indent=2, allow_nan=False)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ModelFile":
        with open(path, encoding="utf-8") as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: invalid JSON ({exc})") from None
        try:
            return cls.from_dict(d)
        except (KeyError, TypeError, AttributeError) as exc:
            raise ValueError(f"{path}: malformed model file ({exc!r})") from None

    def __eq__(self, other):
        if not isinstance(other, ModelFile):
            return NotImplemented
        rows_equal = (self.init_rows is None and other.init_rows is None) or (
            self.init_rows is not None
            and other.init_rows is not None
            and np.array_equal(self.init_rows, other.init_rows, equal_nan=True)
        )
        return (
            self.spec == other.spec
            and self.coefficients.equals(other.coefficients)
            and self.init_mode == other.init_mode
            and self.period == other.period
            and rows_equal
            and self.fit == other.fit
            and self.tool_version == other.tool_version
        )


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def read_series(path) -> np.ndarray:
    """One numeric column; a non-numeric first cell is taken as a header."""
    values = []
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    for i, row in enumerate(rows):
        cells = [c.strip() for c in row]
        if len(cells) != 1:
            raise ValueError(f"{path}: line {i + 1} has {len(cells)} columns; expected a single column")
        if i == 0 and not _is_number(cells[0]):
            continue
        if not _is_number(cells[0]):
            raise ValueError(f"{path}: line {i + 1}: {cells[0]!r} is not a number")
        values.append(float(cells[0]))
    if not values:
        raise ValueError(f"{path}: no observations")
    return np.array(values)


def write_series(path, y):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for v in np.asarray(y, dtype=float).reshape(-1):
            fh.write(format_float(v) + "\n")


def write_table(path, header, rows):
    """CSV with a header line and full-precision floats."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in np.atleast_2d(np.asarray(rows, dtype=float)):
            w.writerow([format_float(v) for v in row])
