"""Load, validate, and hold the observed functional panel and covariates.

Canonical on-disk format: two delimited text tables (comma or tab,
auto-detected, '.' decimal).  The response table is wide, one row per
subject, with a header row carrying the grid locations.  The covariate
table is wide with named columns; a schema mapping names the threshold
anchor z1, the grouping columns z2 (first one must be the constant 1),
the predictor columns x, and the x-tilde subset carrying the subgroup
effect.  Missing values are rejected outright.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (DegenerateColumnError, IdentificationError, ParseError,
                     SchemaError)


@dataclass(frozen=True)
class FunctionalDataset:
    """Functional responses on a shared grid plus per-subject covariates.

    y : (n, m) responses, subject i at grid point j.
    grid : (m,) locations in [0, 1], strictly increasing.
    x : (n, p) predictors; column 0 is the constant 1 by convention.
    xtilde_cols : indices (0-based) of the x columns forming x-tilde.
    z1 : (n,) threshold-anchor variable.
    z2 : (n, q) grouping covariates; column 0 is identically 1.
    grid_map : (lo, hi) of the original grid when it was affinely mapped
        into [0, 1], else None.

    Instances are immutable (arrays are set read-only) and safe to share
    across concurrent workers.
    """

    y: np.ndarray
    grid: np.ndarray
    x: np.ndarray
    xtilde_cols: tuple
    z1: np.ndarray
    z2: np.ndarray
    grid_map: tuple | None = None

    def __post_init__(self):
        # Own every array so marking them read-only cannot affect callers.
        y = np.atleast_2d(np.array(self.y, dtype=float, copy=True))
        grid = np.array(self.grid, dtype=float, copy=True).reshape(-1)
        x = np.atleast_2d(np.array(self.x, dtype=float, copy=True))
        z1 = np.array(self.z1, dtype=float, copy=True).reshape(-1)
        z2 = np.atleast_2d(np.array(self.z2, dtype=float, copy=True))
        cols = tuple(int(j) for j in self.xtilde_cols)

        n, m = y.shape
        if grid.shape[0] != m:
            raise SchemaError(f"grid has {grid.shape[0]} points but y has {m} columns")
        for name, arr, rows in (("x", x, n), ("z2", z2, n)):
            if arr.shape[0] != rows:
                raise SchemaError(f"{name} has {arr.shape[0]} rows, expected {rows}")
        if z1.shape[0] != n:
            raise SchemaError(f"z1 has {z1.shape[0]} entries, expected {n}")
        for name, arr in (("y", y), ("grid", grid), ("x", x), ("z1", z1), ("z2", z2)):
            if not np.all(np.isfinite(arr)):
                bad = np.argwhere(~np.isfinite(np.atleast_2d(arr)))[0]
                raise ParseError(f"non-finite value in {name} at position {tuple(bad)}")

        order = np.argsort(grid, kind="stable")
        grid = grid[order]
        y = y[:, order]
        if np.any(np.diff(grid) == 0):
            j = int(np.argmin(np.diff(grid)))
            raise SchemaError(f"duplicate grid value {grid[j]!r}")
        grid_map = self.grid_map
        if grid[0] < 0.0 or grid[-1] > 1.0:
            lo, hi = float(grid[0]), float(grid[-1])
            grid = (grid - lo) / (hi - lo)
            grid_map = (lo, hi)

        p = x.shape[1]
        dsz = len(cols)
        if not 1 <= dsz <= p:
            raise SchemaError(f"xtilde has {dsz} columns, expected between 1 and {p}")
        if len(set(cols)) != dsz or min(cols) < 0 or max(cols) >= p:
            raise SchemaError(f"invalid xtilde column indices {cols}")
        if not np.all(z2[:, 0] == 1.0):
            raise IdentificationError("first z2 column must be identically 1")

        for arr in (y, grid, x, z1, z2):
            arr.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "xtilde_cols", cols)
        object.__setattr__(self, "z1", z1)
        object.__setattr__(self, "z2", z2)
        object.__setattr__(self, "grid_map", grid_map)

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def m(self):
        return self.y.shape[1]

    @property
    def p(self):
        return self.x.shape[1]

    @property
    def d(self):
        return len(self.xtilde_cols)

    @property
    def q(self):
        return self.z2.shape[1]

    @property
    def xtilde(self):
        return self.x[:, list(self.xtilde_cols)]

    @property
    def z_full(self):
        """Full grouping vector (z1, z2) per subject, shape (n, q + 1)."""
        return np.column_stack([self.z1, self.z2])


def _sniff_delimiter(path):
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
    return "\t" if first.count("\t") >= first.count(",") and "\t" in first else ","


def _read_table(path, what):
    """Read a delimited numeric table with a header row.

    Returns (header tokens, value matrix).  Reports the 1-based row/column
    of the first unparseable or non-finite cell.
    """
    delim = _sniff_delimiter(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = [row for row in csv.reader(fh, delimiter=delim) if row and any(c.strip() for c in row)]
    if len(rows) < 2:
        raise ParseError(f"{what} file {path} has no data rows")
    header = [c.strip() for c in rows[0]]
    width = len(header)
    values = np.empty((len(rows) - 1, width), dtype=float)
    for i, row in enumerate(rows[1:]):
        if len(row) != width:
            raise ParseError(f"{what} file row {i + 2} has {len(row)} cells, expected {width}")
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"{what} file: cannot parse cell at row {i + 2}, column {j + 1}: {cell!r}") from None
            if not np.isfinite(v):
                raise ParseError(f"{what} file: non-finite value at row {i + 2}, column {j + 1}")
            values[i, j] = v
    return header, values


def load_dataset(response_path, covariate_path, schema):
    """Build a validated FunctionalDataset from the two on-disk tables.

    schema : mapping with keys "x" (list of covariate column names),
        "xtilde" (subset of "x"), "z1" (single name), "z2" (list of names,
        first one the constant column).
    """
    resp_header, y = _read_table(response_path, "response")
    try:
        grid = np.array([float(c) for c in resp_header], dtype=float)
    except ValueError:
        raise SchemaError("response header row must carry the numeric grid") from None
    cov_header, cov = _read_table(covariate_path, "covariate")
    if cov.shape[0] != y.shape[0]:
        raise SchemaError(
            f"covariate file has {cov.shape[0]} rows but response file has {y.shape[0]}")

    col_index = {name: j for j, name in enumerate(cov_header)}

    def pick(names, key):
        out = []
        for name in names:
            if name not in col_index:
                raise SchemaError(f"schema {key} column {name!r} not found in covariate file")
            out.append(col_index[name])
        return out

    for key in ("x", "xtilde", "z1", "z2"):
        if key not in schema:
            raise SchemaError(f"schema is missing key {key!r}")
    x_names = list(schema["x"])
    xt_names = list(schema["xtilde"])
    z2_names = list(schema["z2"])
    missing = [nm for nm in xt_names if nm not in x_names]
    if missing:
        raise SchemaError(f"xtilde columns {missing} are not x columns")
    x_cols = pick(x_names, "x")
    z2_cols = pick(z2_names, "z2")
    z1_col = pick([schema["z1"]], "z1")[0]

    z2 = cov[:, z2_cols]
    if not np.all(z2[:, 0] == 1.0):
        raise IdentificationError(
            f"z2 column {z2_names[0]!r} must be the constant 1 (identification)")

    return FunctionalDataset(
        y=y,
        grid=grid,
        x=cov[:, x_cols],
        xtilde_cols=tuple(x_names.index(nm) for nm in xt_names),
        z1=cov[:, z1_col],
        z2=z2,
    )


def default_schema(p, q, xtilde_cols):
    """Canonical column names used by save_dataset."""
    x_names = [f"x{k + 1}" for k in range(p)]
    return {
        "x": x_names,
        "xtilde": [x_names[j] for j in xtilde_cols],
        "z1": "z1",
        "z2": ["z2_const"] + [f"z2_{k + 1}" for k in range(1, q)],
    }


def save_dataset(ds: FunctionalDataset, response_path, covariate_path, sep=","):
    """Write the canonical two-table format; returns the matching schema.

    Floats are written with repr so that load_dataset round-trips exactly.
    """
    schema = default_schema(ds.p, ds.q, ds.xtilde_cols)
    with open(response_path, "w", encoding="utf-8") as fh:
        fh.write(sep.join(repr(float(s)) for s in ds.grid) + "\n")
        for row in ds.y:
            fh.write(sep.join(repr(float(v)) for v in row) + "\n")
    names = [schema["z1"]] + schema["z2"] + schema["x"]
    mat = np.column_stack([ds.z1, ds.z2, ds.x])
    with open(covariate_path, "w", encoding="utf-8") as fh:
        fh.write(sep.join(names) + "\n")
        for row in mat:
            fh.write(sep.join(repr(float(v)) for v in row) + "\n")
    return schema


@dataclass
class StandardizeRecord:
    """Per-column location/scale transform with enough to invert it.

    entries : list of dicts {"target", "col", "mean", "scale"} for applied
        transforms and {"target", "col", "skipped", "reason"} for columns
        left alone (constant-1 columns).
    """

    entries: list = field(default_factory=list)

    @property
    def warnings(self):
        return [e for e in self.entries if e.get("skipped")]

    def applied(self):
        return [e for e in self.entries if not e.get("skipped")]

    def inverse(self, ds: FunctionalDataset) -> FunctionalDataset:
        """Map a standardized dataset back to original units."""
        x = ds.x.copy()
        z1 = ds.z1.copy()
        z2 = ds.z2.copy()
        for e in self.applied():
            tgt, col = e["target"], e["col"]
            if tgt == "x":
                x[:, col] = x[:, col] * e["scale"] + e["mean"]
            elif tgt == "z1":
                z1 = z1 * e["scale"] + e["mean"]
            elif tgt == "z2":
                z2[:, col] = z2[:, col] * e["scale"] + e["mean"]
        return FunctionalDataset(y=ds.y, grid=ds.grid, x=x,
                                 xtilde_cols=ds.xtilde_cols, z1=z1, z2=z2,
                                 grid_map=ds.grid_map)

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"entries": self.entries}, fh, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        return cls(entries=payload["entries"])


def standardize(ds: FunctionalDataset, which=None):
    """Center selected covariate columns to mean 0 and scale them to sd 1.

    which : optional dict {"x": [cols], "z1": bool, "z2": [cols]}; by
        default every x column, z1, and every z2 column is a candidate.
    Uses the population-n convention (ddof=0).  Constant-1 columns are
    skipped with a warning entry; any other zero-variance column raises
    DegenerateColumnError.  Returns (new dataset, StandardizeRecord).
    """
    if which is None:
        which = {"x": list(range(ds.p)), "z1": True, "z2": list(range(ds.q))}
    record = StandardizeRecord()
    x = ds.x.copy()
    z1 = ds.z1.copy()
    z2 = ds.z2.copy()

    def handle(target, col, vec):
        mean = float(np.mean(vec))
        scale = float(np.std(vec))
        if scale == 0.0:
            if np.all(vec == 1.0):
                record.entries.append({"target": target, "col": col, "skipped": True,
                                       "reason": "constant column of 1s"})
                return vec
            raise DegenerateColumnError(
                f"{target} column {col} has zero variance and is not the constant 1")
        record.entries.append({"target": target, "col": col, "mean": mean, "scale": scale})
        return (vec - mean) / scale

    for col in which.get("x", []):
        x[:, col] = handle("x", int(col), x[:, col])
    if which.get("z1"):
        z1 = handle("z1", 0, z1)
    for col in which.get("z2", []):
        z2[:, col] = handle("z2", int(col), z2[:, col])

    new_ds = FunctionalDataset(y=ds.y, grid=ds.grid, x=x, xtilde_cols=ds.xtilde_cols,
                               z1=z1, z2=z2, grid_map=ds.grid_map)
    return new_ds, record
