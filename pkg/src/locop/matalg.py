"""Matrices indexed by point sets, with localization norms.

A :class:`LocalizedMatrix` stores sparse entries a(λ, λ') between two
index sets.  Offsets λ - λ' are binned into integer cells by coordinate
floor; the offset profile (per-cell supremum of |a|) drives the
convolution-dominated norm, truncation tails, and the cutoff commutator
bound.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from . import _accel
from .lattice import IndexSet, CutoffOperator, separation_constant

ENTRY_DROP_TOL = 1e-300


@dataclass(frozen=True)
class Weight:
    """Admissible polynomial weight (1 + |x|)^exponent (Euclidean |x|)."""

    exponent: float
    kind: str = "polynomial"

    def __post_init__(self):
        if self.kind != "polynomial":
            raise ValueError(f"unsupported weight kind {self.kind!r}")
        if self.exponent < 0:
            raise ValueError("weight exponent must be >= 0")

    def __call__(self, x) -> np.ndarray | float:
        arr = np.asarray(x, dtype=float)
        if arr.ndim <= 1:
            return float((1.0 + np.linalg.norm(arr)) ** self.exponent)
        return (1.0 + np.linalg.norm(arr, axis=-1)) ** self.exponent


class OffsetProfile:
    """Per-cell suprema sup {|a(λ, λ')| : λ - λ' in k + [0,1)^d}."""

    def __init__(self, dim: int, cells: np.ndarray, sups: np.ndarray):
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, dim)
        sups = np.asarray(sups, dtype=np.float64).reshape(-1)
        order = np.lexsort(cells.T[::-1])
        self.dim = dim
        self.cells = cells[order]
        self.sups = sups[order]

    def __len__(self) -> int:
        return self.cells.shape[0]

    def __getitem__(self, k) -> float:
        key = np.asarray(k, dtype=np.int64).reshape(1, -1)
        match = (self.cells == key).all(axis=1)
        idx = np.flatnonzero(match)
        return float(self.sups[idx[0]]) if idx.size else 0.0

    def items(self):
        for c, v in zip(self.cells, self.sups):
            yield tuple(int(x) for x in c), float(v)

    def total(self) -> float:
        # lexicographic cell order fixes the summation order
        return float(np.sum(self.sups))

    def to_csv(self) -> str:
        header = ",".join(f"k_{i + 1}" for i in range(self.dim)) + ",sup_value"
        lines = [header]
        for c, v in zip(self.cells, self.sups):
            lines.append(",".join(str(int(x)) for x in c) + f",{v!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "OffsetProfile":
        rows = [r for r in text.strip().splitlines() if r]
        header = rows[0].split(",")
        dim = len(header) - 1
        cells, sups = [], []
        for r in rows[1:]:
            parts = r.split(",")
            cells.append([int(p) for p in parts[:dim]])
            sups.append(float(parts[dim]))
        return cls(dim, np.asarray(cells, dtype=np.int64).reshape(-1, dim),
                   np.asarray(sups, dtype=float))


class LocalizedMatrix:
    """Sparse matrix between two index sets with cached localization data."""

    def __init__(self, rows: IndexSet, cols: IndexSet, i, j, values):
        if rows.dim != cols.dim:
            raise ValueError("row and column index sets must share a dimension")
        i = np.asarray(i, dtype=np.int64).reshape(-1)
        j = np.asarray(j, dtype=np.int64).reshape(-1)
        v = np.asarray(values, dtype=np.float64).reshape(-1)
        if not (i.shape == j.shape == v.shape):
            raise ValueError("entry arrays must have matching lengths")
        if i.size:
            if i.min(initial=0) < 0 or i.max(initial=-1) >= len(rows):
                raise ValueError("row index out of range")
            if j.min(initial=0) < 0 or j.max(initial=-1) >= len(cols):
                raise ValueError("column index out of range")
        keep = np.abs(v) >= ENTRY_DROP_TOL
        i, j, v = i[keep], j[keep], v[keep]
        order = np.lexsort((j, i))
        i, j, v = i[order], j[order], v[order]
        if i.size > 1:
            dup = (np.diff(i) == 0) & (np.diff(j) == 0)
            if dup.any():
                t = int(np.flatnonzero(dup)[0])
                raise ValueError(f"duplicate entry at ({i[t]}, {j[t]})")
        for arr in (i, j, v):
            arr.setflags(write=False)
        self.rows = rows
        self.cols = cols
        self.i = i
        self.j = j
        self.values = v
        self._cache: dict = {}

    # -- basics ---------------------------------------------------------
    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.rows), len(self.cols))

    @property
    def nnz(self) -> int:
        return self.values.size

    @property
    def dim(self) -> int:
        return self.rows.dim

    def csr(self) -> sp.csr_matrix:
        m = self._cache.get("csr")
        if m is None:
            m = sp.csr_matrix((self.values, (self.i, self.j)), shape=self.shape)
            self._cache["csr"] = m
        return m

    def dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.i, self.j] = self.values
        return out

    def offsets(self) -> np.ndarray:
        """λ_i - λ'_j per stored entry, shape (nnz, d)."""
        return self.rows.points[self.i] - self.cols.points[self.j]

    def band(self) -> float:
        """max ||λ - λ'||_inf over stored entries (0 for empty)."""
        b = self._cache.get("band")
        if b is None:
            b = float(np.abs(self.offsets()).max(initial=0.0))
            self._cache["band"] = b
        return b

    def transpose(self) -> "LocalizedMatrix":
        return LocalizedMatrix(self.cols, self.rows, self.j, self.i, self.values)

    def scale(self, t: float) -> "LocalizedMatrix":
        return LocalizedMatrix(self.rows, self.cols, self.i, self.j, self.values * t)

    def add(self, other: "LocalizedMatrix") -> "LocalizedMatrix":
        if self.rows != other.rows or self.cols != other.cols:
            raise ValueError("index sets must match for addition")
        s = (self.csr() + other.csr()).tocoo()
        return LocalizedMatrix(self.rows, self.cols, s.row, s.col, s.data)

    def compose(self, other: "LocalizedMatrix") -> "LocalizedMatrix":
        if self.cols != other.rows:
            raise ValueError("inner index sets must coincide for composition")
        prod = (self.csr() @ other.csr()).tocoo()
        return LocalizedMatrix(self.rows, other.cols, prod.row, prod.col, prod.data)

    def submatrix(self, row_idx, col_idx, row_window=None, col_window=None) -> "LocalizedMatrix":
        row_idx = np.asarray(row_idx, dtype=np.int64)
        col_idx = np.asarray(col_idx, dtype=np.int64)
        sub = self.csr()[row_idx, :][:, col_idx].tocoo()
        return LocalizedMatrix(
            self.rows.restrict(row_idx, row_window),
            self.cols.restrict(col_idx, col_window),
            sub.row, sub.col, sub.data,
        )

    def window_prefix(self, m_rows: int, m_cols: int) -> "LocalizedMatrix":
        return self.submatrix(np.arange(m_rows), np.arange(m_cols))

    # -- serialization ---------------------------------------------------
    def to_json_dict(self) -> dict:
        return {
            "rows": self.rows.to_json_dict(),
            "cols": self.cols.to_json_dict(),
            "entries": [[int(a), int(b), float(v)]
                        for a, b, v in zip(self.i, self.j, self.values)],
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "LocalizedMatrix":
        rows = IndexSet.from_json_dict(obj["rows"])
        cols = IndexSet.from_json_dict(obj["cols"])
        entries = obj.get("entries", [])
        if entries:
            arr = np.asarray(entries, dtype=float)
            i, j, v = arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64), arr[:, 2]
        else:
            i = j = np.empty(0, dtype=np.int64)
            v = np.empty(0)
        return cls(rows, cols, i, j, v)

    @classmethod
    def from_json(cls, text: str) -> "LocalizedMatrix":
        return cls.from_json_dict(json.loads(text))

    @classmethod
    def from_dense(cls, rows: IndexSet, cols: IndexSet, dense: np.ndarray,
                   drop_tol: float = 0.0) -> "LocalizedMatrix":
        dense = np.asarray(dense, dtype=float)
        if dense.shape != (len(rows), len(cols)):
            raise ValueError("dense shape mismatch")
        i, j = np.nonzero(np.abs(dense) > drop_tol)
        return cls(rows, cols, i, j, dense[i, j])


# ----------------------------------------------------------------------
# norms


def offset_profile(A: LocalizedMatrix) -> OffsetProfile:
    prof = A._cache.get("profile")
    if prof is None:
        cells = np.floor(A.offsets()).astype(np.int64)
        keys = _accel.pack_cells(cells) if A.nnz else np.empty(0, dtype=np.int64)
        uk, sups = _accel.group_max(keys, np.abs(A.values))
        prof = OffsetProfile(A.dim, _accel.unpack_cells(uk, A.dim), sups)
        A._cache["profile"] = prof
    return prof


def sjostrand_norm(A: LocalizedMatrix, return_profile: bool = False):
    """Sum over offset cells of the per-cell supremum of |a|."""
    prof = offset_profile(A)
    value = prof.total()
    return (value, prof) if return_profile else value


def schur_norm(A: LocalizedMatrix) -> float:
    """max(max absolute row sum, max absolute column sum)."""
    c = A.csr()
    absA = abs(c)
    ones_r = np.ones(A.shape[1])
    ones_l = np.ones(A.shape[0])
    row = float((absA @ ones_r).max(initial=0.0))
    col = float((absA.T @ ones_l).max(initial=0.0))
    return max(row, col)


def slant_norm(A: LocalizedMatrix, alpha: float, weight: Weight | None = None) -> float:
    """Weighted sup-norm along the slanted diagonal j' - alpha * j.

    Requires integer-lattice index sets (rows and columns); offsets are
    binned by coordinate floor of col_point - alpha * row_point.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    for pts, name in ((A.rows.points, "row"), (A.cols.points, "column")):
        if pts.size and np.abs(pts - np.round(pts)).max() > 1e-9:
            raise ValueError(f"slant norm needs integer {name} lattice points")
    if A.nnz == 0:
        return 0.0
    off = A.cols.points[A.j] - alpha * A.rows.points[A.i]
    cells = np.floor(off).astype(np.int64)
    uk, sups = _accel.group_max(_accel.pack_cells(cells), np.abs(A.values))
    ks = _accel.unpack_cells(uk, A.dim)
    if weight is None:
        return float(np.sum(sups))
    w = np.asarray([weight(k) for k in ks.astype(float)])
    return float(np.sum(w * sups))


# ----------------------------------------------------------------------
# truncation


def truncate(A: LocalizedMatrix, s: float) -> LocalizedMatrix:
    """Keep entries with ||λ - λ'||_inf strictly below s."""
    if s <= 0:
        return LocalizedMatrix(A.rows, A.cols, [], [], [])
    if np.isinf(s):
        return A
    keep = np.abs(A.offsets()).max(axis=1) < s if A.nnz else np.empty(0, dtype=bool)
    return LocalizedMatrix(A.rows, A.cols, A.i[keep], A.j[keep], A.values[keep])


def truncation_tail(A: LocalizedMatrix, s_values: Iterable[float]) -> list[tuple[float, float]]:
    """Localization-norm tails ||A - A_s|| for ascending truncation radii."""
    s_list = [float(s) for s in s_values]
    if any(b < a for a, b in zip(s_list, s_list[1:])):
        raise ValueError("truncation radii must be ascending")
    if A.nnz:
        dist = np.abs(A.offsets()).max(axis=1)
        cells = np.floor(A.offsets()).astype(np.int64)
        keys = _accel.pack_cells(cells)
        absv = np.abs(A.values)
    out = []
    for s in s_list:
        if A.nnz == 0:
            out.append((s, 0.0))
            continue
        mask = dist >= s
        if not mask.any():
            out.append((s, 0.0))
            continue
        _, sups = _accel.group_max(keys[mask], absv[mask])
        out.append((s, float(np.sum(sups))))
    return out


# ----------------------------------------------------------------------
# application and commutator


def vector_pnorm(x: np.ndarray, p: float) -> float:
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return 0.0
    if np.isinf(p):
        return float(np.abs(x).max())
    return float(np.linalg.norm(x.ravel(), ord=p))


@dataclass(frozen=True)
class BoundCheck:
    """Observed ratio against the separation/localization upper bound."""

    p: float
    ratio: float
    input_norm: float
    output_norm: float
    bound: float
    r_rows: int
    r_cols: int
    sjostrand: float


def apply(A: LocalizedMatrix, c, p: float = 2.0) -> tuple[np.ndarray, BoundCheck]:
    """Matrix-vector product plus the localization bound diagnostic.

    The recorded bound is R(rows)^{1/p} R(cols)^{1-1/p} ||A||_loc ||c||_p;
    the ratio output/bound stays <= 1 on integer-lattice corpora.
    """
    c = np.asarray(c, dtype=float)
    if c.shape[0] != A.shape[1]:
        raise ValueError(f"coefficient length {c.shape[0]} != column count {A.shape[1]}")
    y = A.csr() @ c
    r_rows = separation_constant(A.rows)
    r_cols = separation_constant(A.cols)
    inv_p = 0.0 if np.isinf(p) else 1.0 / p
    norm_c = vector_pnorm(c, p)
    norm_y = vector_pnorm(y, p)
    bound = (r_rows ** inv_p) * (r_cols ** (1.0 - inv_p)) * sjostrand_norm(A) * norm_c
    ratio = norm_y / bound if bound > 0 else 0.0
    return y, BoundCheck(p, float(ratio), norm_c, norm_y, float(bound),
                         r_rows, r_cols, sjostrand_norm(A))


def commutator_with_cutoff(A: LocalizedMatrix, op: CutoffOperator) -> LocalizedMatrix:
    """A_N Ψ - Ψ A_N for the scale-N truncation A_N of A.

    Entrywise this equals a_N(λ, λ') (ψ((λ'-n)/N) - ψ((λ-n)/N)); the
    cutoff Lipschitz constant makes its localization norm at most
    (band/N) ||A||_loc.
    """
    if op.target != A.rows and op.target != A.cols:
        raise ValueError("cutoff target must match the matrix rows or columns")
    AN = truncate(A, float(op.scale))
    w_rows = op.weights_on(A.rows.points)
    w_cols = op.weights_on(A.cols.points)
    vals = AN.values * (w_cols[AN.j] - w_rows[AN.i])
    return LocalizedMatrix(A.rows, A.cols, AN.i, AN.j, vals)
