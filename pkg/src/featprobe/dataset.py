"""Columnar datasets with declared column roles, fold splitting and standardization."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

MISSING_MARKERS = frozenset({"", "?"})
MAX_ONEHOT = 32


class FeatprobeError(Exception):
    """Base class for data-level failures (CLI exit status 1)."""


class SchemaError(FeatprobeError, ValueError):
    pass


class DataParseError(FeatprobeError, ValueError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


@dataclass(frozen=True)
class Schema:
    """Role declaration plus optional per-column type hints.

    ``types`` maps column name to ``"numeric"`` or ``"categorical"``; columns
    without a hint are inferred (numeric if every token parses as a float).
    """

    label: str
    prediction: str | None = None
    group: str | None = None
    candidates: tuple[str, ...] = ()
    types: Mapping[str, str] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: Mapping) -> "Schema":
        if "label" not in d:
            raise SchemaError("schema has no 'label' entry")
        types = dict(d.get("types") or {})
        for col, kind in types.items():
            if kind not in ("numeric", "categorical"):
                raise SchemaError(f"column {col!r}: unknown type {kind!r}")
        return cls(
            label=d["label"],
            prediction=d.get("prediction"),
            group=d.get("group"),
            candidates=tuple(d.get("candidates") or ()),
            types=types,
        )

    @classmethod
    def from_json(cls, path: str | Path) -> "Schema":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def role_columns(self) -> list[str]:
        return [c for c in (self.label, self.prediction, self.group) if c is not None]


@dataclass(frozen=True)
class Dataset:
    """Immutable numeric table.

    ``columns`` holds float64 arrays in file order (categoricals already
    one-hot expanded), except the group column which stays a string array.
    ``sources`` maps each raw attribute of the file to the columns it
    expanded into, so a categorical attribute can be ablated or tested as one
    block.
    """

    columns: Mapping[str, np.ndarray]
    label: str
    prediction: str | None = None
    group: str | None = None
    candidates: tuple[str, ...] = ()
    sources: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    n_dropped: int = 0
    label_classes: tuple[str, ...] | None = None

    def __post_init__(self):
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise SchemaError(f"columns have unequal lengths {sorted(lengths)}")
        for arr in self.columns.values():
            arr.setflags(write=False)
        if not self.sources:
            object.__setattr__(self, "sources", {c: (c,) for c in self.columns})
        roles = [r for r in (self.label, self.prediction, self.group) if r is not None]
        if len(set(roles)) != len(roles):
            raise SchemaError(f"role columns must be distinct, got {roles}")
        for r in roles:
            if r not in self.columns:
                raise SchemaError(f"role column {r!r} not found")
        for c in self.candidates:
            self.resolve(c)
            if c in roles:
                raise SchemaError(f"candidate {c!r} is also a role column")

    @property
    def n_rows(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    @property
    def y(self) -> np.ndarray:
        return self.columns[self.label]

    @property
    def predictions(self) -> np.ndarray:
        if self.prediction is None:
            raise SchemaError("dataset has no prediction column")
        return self.columns[self.prediction]

    @property
    def group_ids(self) -> np.ndarray | None:
        """Integer query ids (0..n_groups-1), or None without a group role."""
        if self.group is None:
            return None
        return np.unique(self.columns[self.group], return_inverse=True)[1]

    @property
    def feature_sources(self) -> list[str]:
        """Raw attributes usable as model inputs (everything except role columns)."""
        roles = {self.label, self.prediction, self.group}
        return [s for s in self.sources if s not in roles]

    def resolve(self, name: str) -> tuple[str, ...]:
        """Column names for a raw attribute or a single (expanded) column."""
        if name in self.sources:
            return self.sources[name]
        if name in self.columns:
            return (name,)
        raise SchemaError(f"unknown column {name!r}")

    def matrix(self, names: Sequence[str]) -> np.ndarray:
        """Stack the columns behind ``names`` into an (n_rows, d) float array."""
        cols = [c for name in names for c in self.resolve(name)]
        if not cols:
            return np.empty((self.n_rows, 0))
        return np.column_stack([self.columns[c] for c in cols]).astype(float)

    def check_task(self, loss: str) -> None:
        if loss == "ndcg" and self.group is None:
            raise SchemaError("loss 'ndcg' needs a group column")
        if loss != "ndcg" and self.group is not None:
            raise SchemaError(f"group column given but loss {loss!r} is not a ranking loss")


def _parse_float(token: str) -> float | None:
    try:
        value = float(token)
    except ValueError:
        return None
    return value


def load_csv(path: str | Path, schema: Schema, max_onehot: int = MAX_ONEHOT) -> Dataset:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header row required") from None
        raw_rows = [(lineno, row) for lineno, row in enumerate(reader, start=2) if row]

    if len(set(header)) != len(header):
        raise SchemaError(f"{path}: duplicate column names in header")
    for name in schema.role_columns() + list(schema.candidates):
        if name not in header:
            raise SchemaError(f"{path}: column {name!r} declared in schema is missing")
    for name in schema.types:
        if name not in header:
            raise SchemaError(f"{path}: type hint for unknown column {name!r}")

    kept = []
    for lineno, row in raw_rows:
        if len(row) != len(header):
            raise DataParseError(
                f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}", row=lineno
            )
        row = [tok.strip() for tok in row]
        if any(tok in MISSING_MARKERS for tok in row):
            continue
        kept.append((lineno, row))
    n_dropped = len(raw_rows) - len(kept)
    if not kept:
        raise SchemaError(f"{path}: no complete rows")

    columns: dict[str, np.ndarray] = {}
    sources: dict[str, tuple[str, ...]] = {}
    label_classes = None
    for j, name in enumerate(header):
        tokens = [row[j] for _, row in kept]
        hint = schema.types.get(name)
        if name == schema.group:
            columns[name] = np.array(tokens, dtype=str)
            sources[name] = (name,)
            continue
        if hint == "numeric" or (hint is None and all(_parse_float(t) is not None for t in tokens)):
            values = np.empty(len(tokens))
            for i, tok in enumerate(tokens):
                v = _parse_float(tok)
                if v is None or not math.isfinite(v):
                    raise DataParseError(
                        f"{path}:{kept[i][0]}: column {name!r}: non-numeric value {tok!r}",
                        row=kept[i][0],
                        column=name,
                    )
                values[i] = v
            columns[name] = values
            sources[name] = (name,)
            continue

        levels, codes = np.unique(np.array(tokens, dtype=str), return_inverse=True)
        if name == schema.label:
            # label stays a single column of class codes
            columns[name] = codes.astype(float)
            sources[name] = (name,)
            label_classes = tuple(str(lv) for lv in levels)
            continue
        if name == schema.prediction:
            raise DataParseError(f"{path}: prediction column {name!r} must be numeric", column=name)
        if len(levels) > max_onehot and hint != "categorical":
            raise SchemaError(
                f"{path}: column {name!r} has {len(levels)} categories (> {max_onehot}); "
                "declare it categorical explicitly to expand it anyway"
            )
        expanded = []
        for k, level in enumerate(levels):
            col = f"{name}={level}"
            columns[col] = (codes == k).astype(float)
            expanded.append(col)
        sources[name] = tuple(expanded)

    return Dataset(
        columns=columns,
        label=schema.label,
        prediction=schema.prediction,
        group=schema.group,
        candidates=schema.candidates,
        sources=sources,
        n_dropped=n_dropped,
        label_classes=label_classes,
    )


def to_csv(ds: Dataset, path: str | Path) -> None:
    """Write the (expanded) table; floats use repr so a reload is bit-exact."""
    names = list(ds.columns)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        cols = [ds.columns[c] for c in names]
        for i in range(ds.n_rows):
            writer.writerow(
                [str(c[i]) if c.dtype.kind in "US" else repr(float(c[i])) for c in cols]
            )


@dataclass(frozen=True)
class FoldAssignment:
    fold_index: np.ndarray
    k: int
    seed: int

    def split(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        """(train rows, held-out rows) for one fold."""
        test = self.fold_index == fold
        return np.flatnonzero(~test), np.flatnonzero(test)

    def __iter__(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        for f in range(self.k):
            yield self.split(f)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.fold_index, minlength=self.k)


def assign_folds(n_rows: int, k: int, seed: int, groups: np.ndarray | None = None) -> FoldAssignment:
    if groups is None:
        units = np.arange(n_rows)
        n_units = n_rows
    else:
        _, units = np.unique(groups, return_inverse=True)
        n_units = int(units.max()) + 1 if n_rows else 0
    if not 2 <= k <= n_units:
        raise ValueError(f"fold count k={k} must lie in [2, {n_units}]")
    order = np.random.default_rng(seed).permutation(n_units)
    unit_fold = np.empty(n_units, dtype=np.int64)
    unit_fold[order] = np.arange(n_units) % k
    return FoldAssignment(fold_index=unit_fold[units], k=k, seed=seed)


def split_folds(ds: Dataset, k: int, seed: int) -> FoldAssignment:
    """Shuffled k-fold partition; whole queries stay together when a group role exists.

    Fold sizes (in rows, or in groups for ranking data) differ by at most one.
    """
    return assign_folds(ds.n_rows, k, seed, ds.group_ids)


@dataclass(frozen=True)
class Standardization:
    mean: float
    std: float

    def apply(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if self.std == 0:
            return np.zeros_like(v)
        return (v - self.mean) / self.std

    def invert(self, z) -> np.ndarray:
        return np.asarray(z, dtype=float) * self.std + self.mean


def standardize(v) -> tuple[np.ndarray, Standardization]:
    """Center and scale to unit population std. Constant input maps to zeros."""
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        raise ValueError("cannot standardize an empty vector")
    mean = float(np.mean(v))
    std = float(np.std(v))
    if std == 0 or np.all(v == v.flat[0]):
        std = 0.0
    st = Standardization(mean=mean, std=std)
    return st.apply(v), st


def housing_path() -> Path:
    """Bundled copy of the 506-row Boston housing table (13 features, label ``medv``)."""
    return Path(__file__).with_name("data") / "housing.csv"


def load_housing() -> Dataset:
    return load_csv(housing_path(), Schema(label="medv"))
