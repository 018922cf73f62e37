"""Datasets, model specifications and validated designs.

A model partitions the regressors into a conditioning block ``W1`` (exogenous,
partialled out) and a block of interest ``W2`` (possibly endogenous),
with excluded instruments ``Z2``. The full instrument set is
``Z = [W1 : Z2]``; with no excluded instruments the model is plain least
squares and ``W2`` instruments itself.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DuplicateHeader,
    EmptyFile,
    EmptyInterestSet,
    MissingValues,
    OrderConditionViolated,
    OverlappingRoles,
    ParseError,
    RankDeficient,
    UnknownColumn,
    ValidationError,
)
from .linalg import QRFactor, as_matrix, check_relevance

INTERCEPT_NAME = "const"

_MISSING_TOKENS = {"", "na", "nan", "n/a", "null", "."}


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    """Column-labelled numeric data with optional categorical label columns."""

    column_names: tuple[str, ...]
    values: np.ndarray
    labels: dict[str, np.ndarray] = field(default_factory=dict)
    cluster_column: str | None = None
    dropped_rows: int = 0

    def __post_init__(self):
        if len(set(self.column_names)) != len(self.column_names):
            dup = next(c for c in self.column_names if self.column_names.count(c) > 1)
            raise DuplicateHeader(dup)
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != len(self.column_names):
            raise ValueError("values must be N x C matching column_names")
        object.__setattr__(self, "values", values)
        for name, lab in self.labels.items():
            if len(lab) != values.shape[0]:
                raise ValueError(f"label column {name!r} has wrong length")

    @classmethod
    def from_columns(cls, columns: dict[str, Iterable[float]], **kwargs) -> "Dataset":
        names = tuple(columns)
        values = np.column_stack([np.asarray(list(v), dtype=np.float64) for v in columns.values()])
        return cls(names, values, **kwargs)

    @property
    def n_obs(self) -> int:
        return self.values.shape[0]

    def __contains__(self, name: str) -> bool:
        return name in self.column_names or name in self.labels

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self.column_names.index(name)]
        except ValueError:
            if name in self.labels:
                raise ValidationError(f"column {name!r} is not numeric") from None
            raise UnknownColumn(name) from None

    def columns(self, names: Sequence[str]) -> np.ndarray:
        if not names:
            return np.zeros((self.n_obs, 0))
        return np.column_stack([self.column(n) for n in names])

    def label_column(self, name: str) -> np.ndarray:
        if name in self.labels:
            return self.labels[name]
        if name in self.column_names:
            return self.column(name)
        raise UnknownColumn(name)


def _parse_cell(text: str, line: int, col: int) -> float:
    t = text.strip()
    if t.lower() in _MISSING_TOKENS:
        return math.nan
    try:
        return float(t)
    except ValueError:
        raise ParseError(line, col, f"not a decimal number: {text!r}") from None


def ingest_csv(
    path,
    columns: Sequence[str] | None = None,
    label_columns: Sequence[str] = (),
    drop_missing: bool = False,
) -> Dataset:
    """Read a header-first CSV file into a :class:`Dataset`.

    Parameters
    ----------
    path : path-like
        UTF-8 CSV, first row is the header.
    columns : sequence of str, optional
        Restrict ingestion to these columns (plus ``label_columns``). Missing
        values in other columns are then irrelevant.
    label_columns : sequence of str
        Columns kept as string labels instead of parsed as numbers (cluster
        identifiers).
    drop_missing : bool
        Drop rows with a missing cell in an ingested column instead of
        rejecting the file. The count is recorded in ``dropped_rows``.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyFile(f"{path}: no header row") from None
        header = [h.strip() for h in header]
        seen = set()
        for h in header:
            if h in seen:
                raise DuplicateHeader(h)
            seen.add(h)

        label_columns = tuple(label_columns)
        wanted = list(header) if columns is None else list(dict.fromkeys([*columns, *label_columns]))
        for name in wanted:
            if name not in seen:
                raise UnknownColumn(name)
        idx = {h: i for i, h in enumerate(header)}
        numeric = [c for c in wanted if c not in label_columns]
        num_idx = [idx[c] for c in numeric]
        lab_idx = [idx[c] for c in label_columns]

        rows: list[list[float]] = []
        labs: list[list[str]] = []
        for record in reader:
            line = reader.line_num
            if not record or all(not cell.strip() for cell in record):
                continue
            if len(record) != len(header):
                raise ParseError(line, min(len(record), len(header)) + 1, f"expected {len(header)} fields, got {len(record)}")
            rows.append([_parse_cell(record[i], line, i + 1) for i in num_idx])
            labs.append([record[i].strip() for i in lab_idx])

    if not rows:
        raise EmptyFile(f"{path}: header but no data rows")
    values = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(numeric))
    lab_arr = np.asarray(labs, dtype=object).reshape(len(rows), len(lab_idx))
    bad = np.isnan(values).any(axis=1) | np.array([any(c == "" for c in r) for r in labs], dtype=bool)
    dropped = int(bad.sum())
    if dropped:
        if not drop_missing:
            first = int(np.flatnonzero(bad)[0])
            raise MissingValues(f"{path}: {dropped} row(s) with missing values (first data row {first + 1})")
        values = values[~bad]
        lab_arr = lab_arr[~bad]
        if values.shape[0] == 0:
            raise EmptyFile(f"{path}: no complete rows")
    labels = {name: lab_arr[:, j] for j, name in enumerate(label_columns)}
    return Dataset(tuple(numeric), values, labels, label_columns[0] if label_columns else None, dropped)


# ---------------------------------------------------------------------------
# model specification and validated design
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelSpec:
    outcome: str
    of_interest: tuple[str, ...]
    conditioning: tuple[str, ...] = ()
    instruments: tuple[str, ...] = ()
    intercept: bool = True
    cluster: str | None = None

    def __post_init__(self):
        for attr in ("of_interest", "conditioning", "instruments"):
            object.__setattr__(self, attr, tuple(getattr(self, attr)))


def _cluster_codes(labels) -> tuple[np.ndarray, int]:
    _, codes = np.unique(np.asarray(labels).astype(str), return_inverse=True)
    return codes.astype(np.int64), int(codes.max()) + 1


@dataclass(frozen=True, eq=False)
class ValidatedDesign:
    """Materialized blocks of a model that passed the identification checks.

    ``form`` is ``"full"`` for the original system and ``"partial"`` for the
    residualized system produced by :meth:`partialled`, which has an empty
    conditioning block.
    """

    Y: np.ndarray
    W1: np.ndarray
    W2: np.ndarray
    Z2: np.ndarray
    names_W1: tuple[str, ...]
    names_W2: tuple[str, ...]
    names_Z2: tuple[str, ...]
    outcome_name: str = "y"
    has_intercept: bool = False
    form: str = "full"
    cluster_codes: np.ndarray | None = None
    n_clusters: int = 0
    absorbed: int = 0

    @property
    def N(self) -> int:
        return self.Y.shape[0]

    @property
    def k1(self) -> int:
        return self.W1.shape[1]

    @property
    def k2(self) -> int:
        return self.W2.shape[1]

    @property
    def k3(self) -> int:
        return self.Z2.shape[1]

    @property
    def k(self) -> int:
        return self.k1 + self.k2

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return (self.N, self.k1, self.k2, self.k3)

    @property
    def is_ols(self) -> bool:
        return self.k3 == 0

    @property
    def names(self) -> tuple[str, ...]:
        return self.names_W1 + self.names_W2

    @cached_property
    def W(self) -> np.ndarray:
        return np.column_stack([self.W1, self.W2])

    @cached_property
    def Z(self) -> np.ndarray:
        """Full instrument set; ``W`` itself for least-squares designs."""
        return np.column_stack([self.W1, self.Z2 if self.k3 else self.W2])

    @property
    def n_instruments(self) -> int:
        return self.Z.shape[1]

    @property
    def df_instruments(self) -> int:
        """Instrument count used in finite-sample K adjustments.

        For a partialled design this includes the constant that standard
        software keeps in the residualized regression.
        """
        return self.n_instruments + self.absorbed

    @cached_property
    def projector_Z(self):
        from .linalg import Projector

        return Projector(self.Z, "Z")

    @cached_property
    def projector_W1(self):
        from .linalg import Projector

        return Projector(self.W1, "W1")

    @cached_property
    def Xhat(self) -> np.ndarray:
        """``P_Z W``, the regressors projected on the instrument space."""
        return self.projector_Z.P(self.W)

    def partialled(self) -> "ValidatedDesign":
        """Residualize outcome, regressors of interest and instruments on W1."""
        if self.form == "partial":
            return self
        M = self.projector_W1.M
        Y_t = M(self.Y)
        W2_t = M(self.W2)
        Z2_t = M(self.Z2) if self.k3 else np.zeros((self.N, 0))
        return make_design(
            Y_t,
            np.zeros((self.N, 0)),
            W2_t,
            Z2_t,
            names_W2=self.names_W2,
            names_Z2=self.names_Z2,
            outcome_name=self.outcome_name,
            form="partial",
            cluster_codes=self.cluster_codes,
            absorbed=int(self.has_intercept),
        )


def make_design(
    Y,
    W1,
    W2,
    Z2=None,
    names_W1: Sequence[str] | None = None,
    names_W2: Sequence[str] | None = None,
    names_Z2: Sequence[str] | None = None,
    outcome_name: str = "y",
    has_intercept: bool = False,
    form: str = "full",
    cluster_codes=None,
    absorbed: int = 0,
) -> ValidatedDesign:
    """Build a :class:`ValidatedDesign` from arrays, running all rank checks."""
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 2 and Y.shape[1] == 1:
        Y = Y[:, 0]
    if Y.ndim != 1:
        raise ValueError("Y must be a vector")
    N = Y.shape[0]
    W1 = as_matrix(W1, "W1") if W1 is not None and np.size(W1) else np.zeros((N, 0))
    W2 = as_matrix(W2, "W2")
    Z2 = as_matrix(Z2, "Z2") if Z2 is not None and np.size(Z2) else np.zeros((N, 0))
    if not np.all(np.isfinite(Y)):
        raise ValueError("Y contains non-finite entries")
    for nm, blk in (("W1", W1), ("W2", W2), ("Z2", Z2)):
        if blk.shape[0] != N:
            raise ValueError(f"{nm} has {blk.shape[0]} rows, expected {N}")
    k1, k2, k3 = W1.shape[1], W2.shape[1], Z2.shape[1]
    if N < 2:
        raise ValidationError("need at least two observations")
    if k2 < 1:
        raise ValidationError("the block of interest must contain at least one column")
    if k3 and k3 < k2:
        raise OrderConditionViolated(k3, k2)

    names_W1 = tuple(names_W1) if names_W1 is not None else tuple(f"w1_{j}" for j in range(k1))
    names_W2 = tuple(names_W2) if names_W2 is not None else tuple(f"w2_{j}" for j in range(k2))
    names_Z2 = tuple(names_Z2) if names_Z2 is not None else tuple(f"z2_{j}" for j in range(k3))

    if k1:
        QRFactor.of(W1, "W1")
    QRFactor.of(W2, "W2")
    QRFactor.of(np.column_stack([W1, W2]), "W")
    if k3:
        Z = np.column_stack([W1, Z2])
        QRFactor.of(Z, "Z")
        # Relevance: P_Z W must keep the rank of W, measured on the scale of W.
        check_relevance(Z, np.column_stack([W1, W2]), "P_Z W")
        if k1:
            check_relevance(Z2 - W1 @ QRFactor.of(W1).solve(Z2), W2 - W1 @ QRFactor.of(W1).solve(W2), "P_Z~ W~")
    if N <= k1 + max(k2, k3):
        raise ValidationError(f"too few observations ({N}) for {k1 + max(k2, k3)} columns")

    n_clusters = 0
    if cluster_codes is not None:
        cluster_codes = np.asarray(cluster_codes, dtype=np.int64)
        n_clusters = int(cluster_codes.max()) + 1 if cluster_codes.size else 0
    return ValidatedDesign(
        Y, W1, W2, Z2, names_W1, names_W2, names_Z2, outcome_name,
        has_intercept, form, cluster_codes, n_clusters, absorbed,
    )


def validate(spec: ModelSpec, data: Dataset) -> ValidatedDesign:
    """Check a :class:`ModelSpec` against data and materialize its blocks."""
    roles = {
        "outcome": (spec.outcome,),
        "conditioning": spec.conditioning,
        "of_interest": spec.of_interest,
        "instruments": spec.instruments,
    }
    seen: dict[str, list[str]] = {}
    for role, cols in roles.items():
        for c in cols:
            seen.setdefault(c, []).append(role)
    for c, rs in seen.items():
        if len(rs) > 1:
            raise OverlappingRoles(c, tuple(rs))
    if spec.intercept and INTERCEPT_NAME in seen:
        raise OverlappingRoles(INTERCEPT_NAME, ("intercept", *seen[INTERCEPT_NAME]))
    for c in seen:
        if c not in data:
            raise UnknownColumn(c)
    if spec.cluster is not None and spec.cluster not in data:
        raise UnknownColumn(spec.cluster)
    if not spec.of_interest:
        raise ValidationError("at least one regressor of interest is required")
    if spec.instruments and len(spec.instruments) < len(spec.of_interest):
        raise OrderConditionViolated(len(spec.instruments), len(spec.of_interest))

    N = data.n_obs
    W1 = data.columns(spec.conditioning)
    names_W1 = tuple(spec.conditioning)
    if spec.intercept:
        W1 = np.column_stack([np.ones(N), W1])
        names_W1 = (INTERCEPT_NAME, *names_W1)
    codes = None
    if spec.cluster is not None:
        codes, _ = _cluster_codes(data.label_column(spec.cluster))
    return make_design(
        data.column(spec.outcome),
        W1,
        data.columns(spec.of_interest),
        data.columns(spec.instruments),
        names_W1=names_W1,
        names_W2=spec.of_interest,
        names_Z2=spec.instruments,
        outcome_name=spec.outcome,
        has_intercept=spec.intercept,
        cluster_codes=codes,
    )


# ---------------------------------------------------------------------------
# which partitions admit partialling
# ---------------------------------------------------------------------------


class PartitionTag(str, Enum):
    EQUAL = "Applicable_Equal"
    SUPERSET = "Applicable_Superset"
    SUBSET_EXTRACT = "Applicable_Subset_Extract"
    NOT_APPLICABLE = "NotApplicable"


@dataclass(frozen=True)
class PartitionCase:
    tag: PartitionTag
    explanation: str
    estimate_interest: frozenset = frozenset()
    conditioning: frozenset = frozenset()

    @property
    def applicable(self) -> bool:
        return self.tag is not PartitionTag.NOT_APPLICABLE


def classify_partition(endogenous, of_interest, all_regressors) -> PartitionCase:
    """Decide whether partialling out the non-interest regressors is valid.

    Partialling requires an exogenous conditioning set. If some regressors of
    interest are endogenous-free the fix is to enlarge the interest set to
    cover every endogenous regressor and extract afterwards; that fix fails
    only when every exogenous regressor is already of interest while an
    endogenous one remains in the conditioning set.

    Returns a :class:`PartitionCase` whose ``estimate_interest`` and
    ``conditioning`` give the sets to actually use when applicable.
    """
    S_W = frozenset(all_regressors)
    S_N = frozenset(endogenous)
    S_I = frozenset(of_interest)
    if not S_I:
        raise EmptyInterestSet("the set of regressors of interest is empty")
    if not S_N <= S_W or not S_I <= S_W:
        raise ValidationError("endogenous and interest sets must be subsets of the regressors")
    S_X = S_W - S_N
    S_D = S_W - S_I
    if S_X <= S_I and S_D & S_N:
        return PartitionCase(
            PartitionTag.NOT_APPLICABLE,
            "every exogenous regressor is of interest, so the conditioning set "
            f"{sorted(S_D)} consists of endogenous regressors; partialling them out "
            "does not reproduce the full-model estimates",
        )
    if S_I == S_N:
        return PartitionCase(
            PartitionTag.EQUAL,
            "interest set equals the endogenous set; partial out the exogenous regressors",
            S_I, S_D,
        )
    if S_N < S_I:
        return PartitionCase(
            PartitionTag.SUPERSET,
            "interest set contains every endogenous regressor; exogenous regressors of "
            "interest act as their own instruments",
            S_I, S_D,
        )
    enlarged = S_I | S_N
    return PartitionCase(
        PartitionTag.SUBSET_EXTRACT,
        f"interest set omits endogenous regressor(s) {sorted(S_N - S_I)}; estimate with "
        f"interest set {sorted(enlarged)} and extract the requested coefficients",
        enlarged, S_W - enlarged,
    )
