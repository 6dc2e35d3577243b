"""Stability-constant estimation on finite windows.

Lower constants (inf ||Ac||_p / ||c||_p) come from an exact eigensolve at
p = 2, exhaustive sign-orthant / face linear programs at p in {1, inf}
for small column counts, and seeded multistart projected descent
otherwise.  Upper constants are closed-form at p in {1, inf}, spectral at
p = 2, and interpolation bounds in between.  Window ladders aggregate the
per-window constants into stabilization / degeneration verdicts.
"""

from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import linprog

from . import _accel
from .errors import NumericalError
from .lattice import IndexSet
from .matalg import LocalizedMatrix, offset_profile, vector_pnorm

ORTHANT_LP_MAX_COLS = 14
DENSE_EIG_CUTOFF = 1200
BANDED_EIG_MAX_BAND = 1200
MULTISTART_COUNT = 64
MULTISTART_MAX_ITER = 5000
MULTISTART_STEP_MIN = 1e-10


def normalize_p(p) -> float:
    if isinstance(p, str):
        if p.strip().lower() in ("inf", "infinity", "oo"):
            return math.inf
        p = float(p)
    p = float(p)
    if not p >= 1.0:
        raise ValueError(f"p must satisfy 1 <= p <= inf, got {p}")
    return p


@dataclass(frozen=True)
class ConstantEstimate:
    value: float
    certified: bool
    method: str


# ----------------------------------------------------------------------
# spectral helpers


def _dense_singular_extremes(A: LocalizedMatrix) -> tuple[float, float]:
    n, m = A.shape
    if m > n:
        raise ValueError("lower constant needs rows >= cols")
    if m <= DENSE_EIG_CUTOFF and n <= 4 * DENSE_EIG_CUTOFF:
        svals = scipy.linalg.svdvals(A.dense())
        return float(svals[-1]), float(svals[0])
    if m <= DENSE_EIG_CUTOFF:
        # tall: eigensolve the (small) normal matrix
        G = (A.csr().T @ A.csr()).toarray()
        w = scipy.linalg.eigvalsh(G)
        return float(math.sqrt(max(w[0], 0.0))), float(math.sqrt(max(w[-1], 0.0)))
    return _iterative_singular_extremes(A)


def _csr_bandwidth(mat) -> int:
    coo = mat.tocoo()
    if coo.nnz == 0:
        return 0
    return int(np.max(np.abs(coo.row - coo.col)))


def _banded_storage(G, bw: int) -> np.ndarray:
    """Lower-form symmetric banded storage: ab[k, j] = G[j+k, j]."""
    n = G.shape[0]
    ab = np.zeros((bw + 1, n))
    for k in range(bw + 1):
        d = G.diagonal(-k)
        ab[k, :d.size] = d
    return ab


def _gram_smallest(G, return_vector: bool = False):
    """Smallest eigenpair of a sparse symmetric PSD Gram matrix.

    Banded bisection is the workhorse: Gram matrices of localized finite
    sections have narrow bands, and bisection cannot stall on the
    eigenvalue cluster that typically parks next to the smallest one.
    (ARPACK can, in plain and shift-invert mode alike, whenever the
    smallest singular value is not well separated.)
    """
    bw = _csr_bandwidth(G)
    if bw <= BANDED_EIG_MAX_BAND:
        ab = _banded_storage(G, bw)
        if return_vector:
            w, V = scipy.linalg.eig_banded(ab, lower=True, select="i",
                                           select_range=(0, 0))
            return float(w[0]), V[:, 0]
        w = scipy.linalg.eigvals_banded(ab, lower=True, select="i",
                                        select_range=(0, 0))
        return float(w[0]), None
    try:
        w, V = spla.eigsh(G, k=1, sigma=0.0, which="LM", maxiter=2000)
        return float(w[0]), V[:, 0]
    except Exception as exc:
        n = G.shape[0]
        if n * n <= 4_000_000:
            w, V = scipy.linalg.eigh(G.toarray())
            return float(w[0]), V[:, 0]
        raise NumericalError(f"iterative eigensolve failed: {exc}") from exc


def _iterative_singular_extremes(A: LocalizedMatrix) -> tuple[float, float]:
    csr = A.csr().astype(np.float64)
    smax = float(spla.svds(csr, k=1, which="LM", return_singular_vectors=False)[0])
    lam, _ = _gram_smallest((csr.T @ csr).tocsr())
    return float(math.sqrt(max(lam, 0.0))), smax


def _min_singular_vector(A: LocalizedMatrix) -> np.ndarray:
    n, m = A.shape
    if m <= DENSE_EIG_CUTOFF:
        G = (A.csr().T @ A.csr()).toarray()
        w, V = scipy.linalg.eigh(G)
        return V[:, 0]
    G = (A.csr().T @ A.csr()).tocsr()
    try:
        _, vec = _gram_smallest(G, return_vector=True)
    except NumericalError as exc:
        raise NumericalError(f"singular-vector solve failed: {exc}") from exc
    return vec


# ----------------------------------------------------------------------
# exact small-window enumeration at p = 1 and p = inf


def _orthant_lp_min_l1(A: LocalizedMatrix) -> float:
    """Exact min of ||Ac||_1 over the l1 sphere by sign-orthant LPs.

    One LP per sign pattern tau (tau_1 = +1 by symmetry): minimize
    sum(u) subject to -u <= Ac <= u, tau^T c = 1, tau_i c_i >= 0.
    """
    n, m = A.shape
    dense = A.dense()
    best = math.inf
    c_obj = np.concatenate([np.zeros(m), np.ones(n)])
    A_ub = np.block([[dense, -np.eye(n)], [-dense, -np.eye(n)]])
    b_ub = np.zeros(2 * n)
    for tau_rest in itertools.product((1.0, -1.0), repeat=m - 1):
        tau = np.array((1.0,) + tau_rest)
        bounds = [(0, None) if t > 0 else (None, 0) for t in tau]
        bounds += [(0, None)] * n
        A_eq = np.concatenate([tau, np.zeros(n)])[None, :]
        res = linprog(c_obj, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0],
                      bounds=bounds, method="highs")
        if res.status == 0 and res.fun < best:
            best = float(res.fun)
    if not math.isfinite(best):
        raise NumericalError("all orthant linear programs failed")
    return max(best, 0.0)


def _face_lp_min_linf(A: LocalizedMatrix) -> float:
    """Exact min of ||Ac||_inf over the sup-norm sphere by face LPs.

    The sphere is the union of cube faces {c_j = 1, |c| <= 1} (up to
    sign); minimize t with -t <= Ac <= t on each face.
    """
    n, m = A.shape
    dense = A.dense()
    best = math.inf
    c_obj = np.concatenate([np.zeros(m), [1.0]])
    A_ub = np.block([[dense, -np.ones((n, 1))], [-dense, -np.ones((n, 1))]])
    b_ub = np.zeros(2 * n)
    for jfix in range(m):
        bounds = [(-1.0, 1.0)] * m + [(0, None)]
        bounds[jfix] = (1.0, 1.0)
        res = linprog(c_obj, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
        if res.status == 0 and res.fun < best:
            best = float(res.fun)
    if not math.isfinite(best):
        raise NumericalError("all face linear programs failed")
    return max(best, 0.0)


# ----------------------------------------------------------------------
# multistart descent


def _multistart_lower(A: LocalizedMatrix, p: float, seed, n_starts: int,
                      max_iter: int) -> float:
    if seed is None:
        raise ValueError("seed is required for the multistart descent path")
    n, m = A.shape
    rng = np.random.default_rng(int(seed))
    starts = rng.standard_normal((n_starts, m))
    # one deterministic warm start: the p=2 minimizer is a strong seed at
    # every p and keeps window ladders comparable
    warm = _min_singular_vector(A)
    starts = np.vstack([warm[None, :], starts])
    F, _ = _accel.descend_lp(A.csr(), starts, p, max_iter=max_iter,
                             tmin=MULTISTART_STEP_MIN)
    return float(np.min(F))


# ----------------------------------------------------------------------
# the two constants


def lower_constant(A: LocalizedMatrix, p, seed=None, *,
                   n_starts: int = MULTISTART_COUNT,
                   max_iter: int = MULTISTART_MAX_ITER) -> ConstantEstimate:
    """inf ||Ac||_p / ||c||_p over nonzero coefficient vectors.

    p = 2 and small-window p in {1, inf} are certified; other cases use
    seeded multistart descent and report an uncertified upper bound on
    the infimum.
    """
    p = normalize_p(p)
    n, m = A.shape
    if m == 0 or n == 0:
        raise ValueError("empty index set")
    if n < m:
        raise ValueError("lower constant needs rows >= cols")
    if A.nnz == 0:
        return ConstantEstimate(0.0, True, "zero-matrix")
    if p == 2.0:
        smin, _ = _dense_singular_extremes(A)
        return ConstantEstimate(smin, True, "singular-value")
    if p in (1.0, math.inf) and m <= ORTHANT_LP_MAX_COLS:
        if p == 1.0:
            return ConstantEstimate(_orthant_lp_min_l1(A), True, "orthant-lp")
        return ConstantEstimate(_face_lp_min_linf(A), True, "face-lp")
    value = _multistart_lower(A, p, seed, n_starts, max_iter)
    return ConstantEstimate(value, False, "multistart")


def upper_constant(A: LocalizedMatrix, p) -> ConstantEstimate:
    """sup ||Ac||_p / ||c||_p (the induced p-norm, or a certified bound).

    Exact at p in {1, 2, inf}; Riesz-Thorin interpolation against the
    neighboring exact exponents otherwise (certified upper bound).
    """
    p = normalize_p(p)
    if A.nnz == 0:
        return ConstantEstimate(0.0, True, "zero-matrix")
    absA = abs(A.csr())
    col_sum = float((absA.T @ np.ones(A.shape[0])).max(initial=0.0))
    row_sum = float((absA @ np.ones(A.shape[1])).max(initial=0.0))
    if p == 1.0:
        return ConstantEstimate(col_sum, True, "column-sums")
    if p == math.inf:
        return ConstantEstimate(row_sum, True, "row-sums")
    if p == 2.0:
        _, smax = _dense_singular_extremes(A)
        return ConstantEstimate(smax, True, "singular-value")
    _, n2 = _dense_singular_extremes(A)
    if p < 2.0:
        theta = 2.0 / p - 1.0  # 1/p = theta/1 + (1-theta)/2
        bound = col_sum ** theta * n2 ** (1.0 - theta)
    else:
        theta = 2.0 / p  # 1/p = theta/2
        bound = n2 ** theta * row_sum ** (1.0 - theta)
    return ConstantEstimate(float(bound), True, "interpolation-bound")


def interior_column_indices(A: LocalizedMatrix, margin: float) -> np.ndarray:
    """Columns whose points keep the given margin to the column window."""
    pts = A.cols.points
    win = A.cols.window
    ok = np.ones(len(A.cols), dtype=bool)
    for ax in range(A.dim):
        ok &= (pts[:, ax] >= win[ax, 0] + margin) & (pts[:, ax] <= win[ax, 1] - margin)
    return np.flatnonzero(ok)


def lower_constant_interior(A: LocalizedMatrix, p, seed=None,
                            margin: float | None = None) -> ConstantEstimate | None:
    """Lower constant with test vectors supported away from the window edge.

    Edge columns see truncated rows and can fake degeneracy; restricting
    the support by the matrix band width removes that artifact.  Returns
    None when no interior columns remain.
    """
    margin = A.band() if margin is None else float(margin)
    idx = interior_column_indices(A, margin)
    if idx.size == 0:
        return None
    sub = A.csr()[:, idx].tocoo()
    inner = LocalizedMatrix(A.rows, A.cols.restrict(idx), sub.row, sub.col, sub.data)
    return lower_constant(inner, p, seed=seed)


# ----------------------------------------------------------------------
# window ladders


@dataclass(frozen=True)
class StabilityReport:
    """Constants along one window ladder at a fixed exponent."""

    p: float
    window_sizes: list[int]
    lower_constants: list[float]
    upper_constants: list[float]
    lower_certified: list[bool]
    upper_certified: list[bool]
    methods: list[str]
    interior_lower_constants: list[float | None] = field(default_factory=list)
    verdict: str = "undetermined"

    def __post_init__(self):
        for lo, hi in zip(self.lower_constants, self.upper_constants):
            if lo > hi * (1 + 1e-9) + 1e-300:
                raise ValueError("lower constant exceeds upper constant")

    def to_json_dict(self) -> dict:
        return {
            "p": "inf" if math.isinf(self.p) else self.p,
            "window_sizes": list(self.window_sizes),
            "lower_constants": list(self.lower_constants),
            "upper_constants": list(self.upper_constants),
            "lower_certified": list(self.lower_certified),
            "upper_certified": list(self.upper_certified),
            "methods": list(self.methods),
            "interior_lower_constants": list(self.interior_lower_constants),
            "verdict": self.verdict,
        }


def ladder_verdict(lowers: list[float], stab_tol: float = 0.05,
                   pos_threshold: float = 0.1, degen_drop: float = 0.30) -> str:
    """Classify a sequence of lower constants along doubling windows."""
    if len(lowers) < 2:
        return "undetermined"
    ratios = [b / a if a > 0 else 0.0 for a, b in zip(lowers, lowers[1:])]
    if len(ratios) >= 2 and all(r <= 1.0 - degen_drop for r in ratios):
        return "degenerating"
    last_rel = abs(lowers[-1] - lowers[-2]) / max(abs(lowers[-2]), 1e-300)
    if last_rel < stab_tol and lowers[-1] > pos_threshold:
        return "stabilized"
    return "undetermined"


def _check_nested(ladder: list[LocalizedMatrix]) -> None:
    for small, big in zip(ladder, ladder[1:]):
        mr, mc = small.shape
        nr, nc = big.shape
        if nr < mr or nc < mc:
            raise ValueError("windows not nested: ladder must be ascending")
        if not (np.array_equal(small.rows.points, big.rows.points[:mr])
                and np.array_equal(small.cols.points, big.cols.points[:mc])):
            raise ValueError("windows not nested: point sets are not prefixes")
        sub = big.csr()[:mr, :mc]
        if (abs(sub - small.csr())).max() > 0:
            raise ValueError("windows not nested: entries disagree on the overlap")


@dataclass(frozen=True)
class EquivalenceReport:
    ps: list[float]
    window_sizes: list[int]
    per_p: dict
    verdicts: dict
    consistent: bool
    counterexample_candidates: list

    def to_json_dict(self) -> dict:
        key = lambda p: "inf" if math.isinf(p) else str(p)
        return {
            "ps": [key(p) for p in self.ps],
            "window_sizes": list(self.window_sizes),
            "reports": {key(p): r.to_json_dict() for p, r in self.per_p.items()},
            "verdicts": {key(p): v for p, v in self.verdicts.items()},
            "consistent": self.consistent,
            "counterexample_candidates": self.counterexample_candidates,
        }


def _thread_map(fn, items):
    workers = int(os.environ.get("LOCOP_THREADS", "0") or 0)
    if workers <= 1:
        return [fn(it) for it in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def stability_ladder(ladder: list[LocalizedMatrix], p, seed=None, *,
                     stab_tol: float = 0.05, pos_threshold: float = 0.1,
                     degen_drop: float = 0.30,
                     interior: bool = True) -> StabilityReport:
    """Lower/upper constants along a nested window ladder at one exponent."""
    p = normalize_p(p)
    _check_nested(ladder)

    def one(A: LocalizedMatrix):
        lo = lower_constant(A, p, seed=seed)
        hi = upper_constant(A, p)
        inner = lower_constant_interior(A, p, seed=seed) if interior else None
        return lo, hi, inner

    results = _thread_map(one, ladder)
    lowers = [r[0].value for r in results]
    return StabilityReport(
        p=p,
        window_sizes=[A.shape[1] for A in ladder],
        lower_constants=lowers,
        upper_constants=[r[1].value for r in results],
        lower_certified=[r[0].certified for r in results],
        upper_certified=[r[1].certified for r in results],
        methods=[r[0].method for r in results],
        interior_lower_constants=[None if r[2] is None else r[2].value for r in results],
        verdict=ladder_verdict(lowers, stab_tol, pos_threshold, degen_drop),
    )


def equivalence_report(ladder: list[LocalizedMatrix], ps, seed=None, *,
                       stab_tol: float = 0.05, pos_threshold: float = 0.1,
                       degen_drop: float = 0.30) -> EquivalenceReport:
    """Cross-exponent comparison of window ladders.

    Exponents whose constants stabilize while another degenerates are
    flagged as counterexample candidates rather than silently averaged.
    """
    ps = [normalize_p(p) for p in ps]
    per_p = {}
    verdicts = {}
    for p in ps:
        rep = stability_ladder(ladder, p, seed=seed, stab_tol=stab_tol,
                               pos_threshold=pos_threshold, degen_drop=degen_drop)
        per_p[p] = rep
        verdicts[p] = rep.verdict
    kinds = set(verdicts.values())
    candidates = []
    if "stabilized" in kinds and "degenerating" in kinds:
        stab = [p for p, v in verdicts.items() if v == "stabilized"]
        degen = [p for p, v in verdicts.items() if v == "degenerating"]
        candidates = [{"stabilized_p": "inf" if math.isinf(a) else a,
                       "degenerating_p": "inf" if math.isinf(b) else b}
                      for a in stab for b in degen]
    return EquivalenceReport(ps, [A.shape[1] for A in ladder], per_p, verdicts,
                             consistent=not candidates,
                             counterexample_candidates=candidates)


# ----------------------------------------------------------------------
# convolution symbols


@dataclass(frozen=True)
class SymbolCertificate:
    grid_size: int
    grid_min: float
    argmin: float
    lipschitz_bound: float
    certified_min_interval: tuple[float, float]
    sign_change: bool
    real_symbol: bool
    verdict: str


def convolution_stability(offsets, values, grid_size: int = 65536,
                          tol: float | None = None) -> SymbolCertificate:
    """Certify min |sum_j a(j) e^{-i j xi}| over the torus from a fine grid.

    The symbol derivative is bounded by L = sum |a(j)| |j|, so the true
    minimum lies within L*h/2 of the grid minimum (h the grid spacing).
    Verdicts: ``stable`` when the certified interval excludes zero,
    ``unstable`` when a real-symbol sign change or a numerically zero
    grid minimum confirms a zero, else ``undetermined: refine grid``.
    """
    offs = np.asarray(offsets, dtype=np.int64).reshape(-1)
    vals = np.asarray(values, dtype=np.float64).reshape(-1)
    if offs.size == 0 or offs.size != vals.size:
        raise ValueError("need matching nonempty offset/value sequences")
    if np.unique(offs).size != offs.size:
        raise ValueError("duplicate offsets in sequence")
    support_width = int(offs.max() - offs.min() + 1)
    if grid_size < 4 * support_width:
        raise ValueError(f"grid_size must be >= 4 * support width = {4 * support_width}")
    xi = 2.0 * np.pi * np.arange(grid_size) / grid_size
    symbol = np.exp(-1j * np.outer(xi, offs)) @ vals.astype(complex)
    mags = np.abs(symbol)
    k = int(np.argmin(mags))
    grid_min = float(mags[k])
    L = float(np.sum(np.abs(vals) * np.abs(offs)))
    h = 2.0 * np.pi / grid_size
    interval = (grid_min - L * h / 2.0, grid_min)
    # a(-j) = a(j) (real values) makes the symbol real-valued
    by_off = dict(zip(offs.tolist(), vals.tolist()))
    real_symbol = all(by_off.get(-j, 0.0) == v for j, v in by_off.items())
    sign_change = False
    if real_symbol:
        re = symbol.real
        sign_change = bool((re * np.roll(re, -1) < 0).any())
    scale = float(np.sum(np.abs(vals)))
    if tol is None:
        tol = 1e-9 * max(1.0, scale)
    if interval[0] > 0.0:
        verdict = "stable"
    elif sign_change or grid_min <= tol:
        verdict = "unstable"
    else:
        verdict = "undetermined: refine grid"
    return SymbolCertificate(int(grid_size), grid_min, float(xi[k]), L,
                             interval, sign_change, real_symbol, verdict)


# ----------------------------------------------------------------------
# inverse decay


@dataclass(frozen=True)
class InverseDecayResult:
    profile: "object"
    rate: float
    fit_intercept: float
    fit_residual: float
    condition: float
    usable_offsets: int


def inverse_decay_profile(A: LocalizedMatrix, margin: float, *,
                          cond_limit: float = 1e12,
                          floor: float = 1e-13) -> InverseDecayResult:
    """Offset profile of the dense inverse and its fitted decay rate.

    Rows of the inverse are restricted to points at least ``margin`` away
    from the window edge before binning (finite sections pollute the
    boundary); log sup-values are least-squares fitted against ||k||_inf.
    """
    n, m = A.shape
    if n != m:
        raise ValueError("inverse decay needs a square matrix")
    dense = A.dense()
    svals = scipy.linalg.svdvals(dense)
    if svals[-1] <= 0 or svals[0] / svals[-1] > cond_limit:
        raise NumericalError(
            f"matrix condition {svals[0] / max(svals[-1], 1e-300):.3e} exceeds {cond_limit:.1e}")
    inv = scipy.linalg.inv(dense)
    # the inverse maps row index set back to column index set
    B = LocalizedMatrix.from_dense(A.cols, A.rows, inv, drop_tol=0.0)
    pts = B.rows.points
    win = B.rows.window
    keep_rows = np.ones(len(B.rows), dtype=bool)
    for ax in range(B.dim):
        keep_rows &= (pts[:, ax] >= win[ax, 0] + margin) & (pts[:, ax] <= win[ax, 1] - margin)
    idx = np.flatnonzero(keep_rows)
    if idx.size == 0:
        raise ValueError("margin leaves no interior rows")
    mask = np.isin(B.i, idx)
    interior = LocalizedMatrix(B.rows, B.cols, B.i[mask], B.j[mask], B.values[mask])
    prof = offset_profile(interior)
    dist = np.abs(prof.cells).max(axis=1).astype(float)
    usable = prof.sups > floor
    if usable.sum() < 4:
        raise ValueError("fewer than 4 offsets above the fit floor")
    X = np.stack([np.ones(usable.sum()), dist[usable]], axis=1)
    y = np.log(prof.sups[usable])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = float(np.sqrt(np.mean((X @ coef - y) ** 2)))
    return InverseDecayResult(prof, float(math.exp(coef[1])), float(coef[0]),
                              resid, float(svals[0] / svals[-1]), int(usable.sum()))


# ----------------------------------------------------------------------
# density


@dataclass(frozen=True)
class DensityVerdict:
    box: list
    rows_in_neighborhood: int
    cols_in_box: int
    passed: bool


def _dist_to_box(points: np.ndarray, box: np.ndarray) -> np.ndarray:
    lo, hi = box[:, 0], box[:, 1]
    below = np.maximum(lo - points, 0.0)
    above = np.maximum(points - hi, 0.0)
    return np.linalg.norm(np.maximum(below, above), axis=1)


def density_check(rows: IndexSet, cols: IndexSet, r0: float,
                  boxes) -> list[DensityVerdict]:
    """Necessary counting condition for stability.

    For each compact box K: the row set must place at least as many
    points in the open r0-neighborhood of K as the column set has in K.
    A failed box certifies instability at radius r0; passes are only
    consistent, never sufficient.
    """
    if r0 <= 0:
        raise ValueError("r0 must be positive")
    out = []
    for raw in boxes:
        box = np.asarray(raw, dtype=float)
        if box.ndim == 1:
            box = box[None, :]
        if box.shape != (rows.dim, 2) or (box[:, 1] < box[:, 0]).any():
            raise ValueError(f"box must be ({rows.dim}, 2) with lo <= hi")
        in_nbhd = int((_dist_to_box(rows.points, box) < r0).sum())
        inside = np.ones(len(cols), dtype=bool)
        for ax in range(cols.dim):
            inside &= (cols.points[:, ax] >= box[ax, 0]) & (cols.points[:, ax] <= box[ax, 1])
        n_cols = int(inside.sum())
        out.append(DensityVerdict(box.tolist(), in_nbhd, n_cols, in_nbhd >= n_cols))
    return out
