"""Synthesis operators for enveloped generator families.

A generator family attaches a decaying profile to each point of an index
set (usually shifts of one base profile).  This module verifies the
envelope and modulus hypotheses, evaluates the synthesis map, projects
onto dyadic piecewise constants, and discretizes the family into a
localized matrix whose stability constants transfer back to the function
side through the exact dyadic norm identity
||sum a(λ') φ0(2^n (x - λ'))||_p = 2^{-n d / p} ||a||_p.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvariantViolation
from .lattice import IndexSet, separation_constant
from .matalg import LocalizedMatrix, sjostrand_norm
from .profiles import Profile1D, profile_from_json_dict, gauss_legendre_integral
from .stability import (ConstantEstimate, ladder_verdict, lower_constant,
                        normalize_p, upper_constant)


# ----------------------------------------------------------------------
# modulus bounds


@dataclass(frozen=True)
class ModulusBound:
    """Upper bound ω(δ) for moduli of continuity.

    Power form C δ^α, or a table of (δ, bound) samples; table lookups
    round δ up to the next tabulated point so the bound stays one-sided.
    """

    kind: str
    c: float = 0.0
    alpha: float = 1.0
    entries: tuple = ()

    def __post_init__(self):
        if self.kind not in ("power", "table"):
            raise ValueError(f"unknown modulus kind {self.kind!r}")
        if self.kind == "power":
            if self.c < 0 or not 0 < self.alpha <= 1:
                raise ValueError("power modulus needs c >= 0 and alpha in (0, 1]")
        else:
            ent = tuple(sorted((float(d), float(b)) for d, b in self.entries))
            if not ent or any(d <= 0 for d, _ in ent):
                raise ValueError("table modulus needs positive deltas")
            object.__setattr__(self, "entries", ent)

    def __call__(self, delta: float) -> float:
        if delta <= 0:
            raise ValueError("delta must be positive")
        if self.kind == "power":
            return self.c * delta ** self.alpha
        for d, b in self.entries:
            if d >= delta:
                return b
        raise ValueError(f"delta {delta} beyond tabulated modulus range")

    def to_json_dict(self) -> dict:
        if self.kind == "power":
            return {"form": "power", "C": self.c, "alpha": self.alpha}
        return {"form": "table", "entries": [[d, b] for d, b in self.entries]}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "ModulusBound":
        form = obj.get("form", obj.get("kind"))
        if form == "power":
            return cls("power", c=float(obj["C"]), alpha=float(obj["alpha"]))
        return cls("table", entries=tuple((float(d), float(b)) for d, b in obj["entries"]))


# ----------------------------------------------------------------------
# OP surface for profile functionals


def amalgam_norm(f: Profile1D, tol: float = 1e-14) -> float:
    """Sum over integer cells of sup |f|; tails below tol are truncated
    with a dominating bound folded in by the profile."""
    return f.amalgam_norm(tol)


def modulus_of_continuity(f: Profile1D, delta: float, x: float) -> float:
    """sup over |y| <= delta of |f(x + y) - f(x)|."""
    return f.modulus_of_continuity(delta, x)


# ----------------------------------------------------------------------
# generator families


@dataclass(frozen=True)
class GeneratorFamily:
    """Profiles attached to index points, dominated by a common envelope.

    rule = "shift": every index point carries every profile (profiles
    interleave at λ + i/N for bookkeeping); rule = "table": one profile
    per point, matched by position.
    """

    index: IndexSet
    profiles: tuple
    envelope: Profile1D
    rule: str = "shift"
    modulus: ModulusBound | None = None

    def __post_init__(self):
        if self.index.dim != 1:
            raise ValueError("generator families are built over 1-d index sets")
        profs = tuple(self.profiles)
        if not profs:
            raise ValueError("need at least one profile")
        if self.rule not in ("shift", "table"):
            raise ValueError(f"unknown rule {self.rule!r}")
        if self.rule == "table" and len(profs) != len(self.index):
            raise ValueError("table rule needs one profile per index point")
        object.__setattr__(self, "profiles", profs)
        object.__setattr__(self, "_validated", False)

    # -- indexing -----------------------------------------------------
    @property
    def n_profiles(self) -> int:
        return len(self.profiles) if self.rule == "shift" else 1

    @property
    def n_columns(self) -> int:
        return len(self.index) * self.n_profiles if self.rule == "shift" else len(self.index)

    def column_profile(self, col: int):
        """(profile, shift) of the col-th generator (point-major order)."""
        if self.rule == "table":
            return self.profiles[col], float(self.index.points[col, 0])
        n = self.n_profiles
        return self.profiles[col % n], float(self.index.points[col // n, 0])

    def effective_index(self) -> IndexSet:
        """Index set of the generators; multi-profile shifts interleave at λ + i/N."""
        if self.rule == "table" or self.n_profiles == 1:
            return self.index
        n = self.n_profiles
        pts = (self.index.points[:, 0][:, None] + np.arange(n)[None, :] / n).reshape(-1)
        win = self.index.window.copy()
        win[0, 1] += 1.0
        return IndexSet(1, pts, win)

    def prefix(self, m: int) -> "GeneratorFamily":
        profs = self.profiles if self.rule == "shift" else self.profiles[:m]
        return GeneratorFamily(self.index.prefix(m), profs, self.envelope,
                               self.rule, self.modulus)

    # -- hypothesis checks ---------------------------------------------
    def _distinct_profiles(self):
        if self.rule == "shift":
            return list(self.profiles)
        seen, out = set(), []
        for p in self.profiles:
            if id(p) not in seen:
                seen.add(id(p))
                out.append(p)
        return out

    def _probe_grid(self, prof, probe_per_unit: int) -> np.ndarray:
        radius = max(prof.decay_radius(1e-13),
                     self.envelope.decay_radius(1e-13)) + 1.0
        n_pts = max(int(2 * radius * probe_per_unit) + 1, 1024)
        return np.linspace(-radius, radius, n_pts)

    def validate(self, probe_per_unit: int = 64,
                 deltas=(0.5, 0.25, 0.125, 0.0625, 0.03125),
                 slack: float = 1e-9) -> dict:
        """Verify envelope dominance and (when given) the modulus bound.

        Shift-invariant families need each distinct profile checked once;
        the probe grid carries at least 1000 points per generator.
        Raises InvariantViolation on failure; returns a probe report.
        """
        h = self.envelope
        worst_env = 0.0
        worst_mod = 0.0
        for prof in self._distinct_profiles():
            xs = self._probe_grid(prof, probe_per_unit)
            fv = np.abs(np.asarray(prof(xs), dtype=float))
            hv = np.asarray(h(xs), dtype=float)
            gap = float((fv - hv).max())
            worst_env = max(worst_env, gap)
            if gap > slack * max(1.0, float(np.abs(fv).max())):
                raise InvariantViolation(
                    f"envelope does not dominate profile (excess {gap:.3e})")
            if self.modulus is not None:
                for d in deltas:
                    bound = self.modulus(d)
                    for x, hx in zip(xs, hv):
                        m = prof.modulus_of_continuity(d, float(x))
                        excess = m - bound * float(hx)
                        worst_mod = max(worst_mod, excess)
                        if excess > slack * max(1.0, m):
                            raise InvariantViolation(
                                f"modulus bound fails at x={x:.4f}, delta={d}: "
                                f"{m:.3e} > {bound * float(hx):.3e}")
        object.__setattr__(self, "_validated", True)
        return {"envelope_excess": worst_env, "modulus_excess": worst_mod,
                "deltas": list(deltas)}

    def ensure_valid(self) -> None:
        if not self._validated:
            self.validate()

    def calibrate_modulus(self, deltas=(0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625),
                          probe_per_unit: int = 64) -> "GeneratorFamily":
        """Fit a power modulus bound to measured moduli, then verify it.

        Measures needed(δ) = sup_x ω_δ(φ)(x) / h(x) on the same probe
        lattice validate() uses, fits log needed against log δ, and
        inflates the constant until the fitted bound dominates every
        measurement.
        """
        h = self.envelope
        needed = []
        for d in deltas:
            worst = 0.0
            for prof in self._distinct_profiles():
                xs = self._probe_grid(prof, probe_per_unit)
                for x in xs:
                    m = prof.modulus_of_continuity(d, float(x))
                    if m <= 1e-15:
                        continue
                    hx = float(h(x))
                    if hx <= 1e-13:
                        raise InvariantViolation(
                            f"envelope vanishes at x={x:.4f} where the modulus is {m:.3e}")
                    worst = max(worst, m / hx)
            needed.append(worst)
        needed = np.asarray(needed)
        if (needed <= 0).all():
            return GeneratorFamily(self.index, self.profiles, self.envelope,
                                   self.rule, ModulusBound("power", c=0.0, alpha=1.0))
        mask = needed > 0
        X = np.stack([np.ones(mask.sum()), np.log(np.asarray(deltas)[mask])], axis=1)
        coef, *_ = np.linalg.lstsq(X, np.log(needed[mask]), rcond=None)
        alpha = float(min(max(coef[1], 1e-6), 1.0))
        c = float(np.max(needed / np.asarray(deltas) ** alpha)) * (1 + 1e-9)
        out = GeneratorFamily(self.index, self.profiles, self.envelope,
                              self.rule, ModulusBound("power", c=c, alpha=alpha))
        out.validate(probe_per_unit=probe_per_unit, deltas=deltas)
        return out

    # -- serialization --------------------------------------------------
    def to_json_dict(self) -> dict:
        return {
            "index": self.index.to_json_dict(),
            "rule": {"kind": self.rule,
                     "profiles": [p.to_json_dict() for p in self.profiles]},
            "envelope": self.envelope.to_json_dict(),
            "modulus": None if self.modulus is None else self.modulus.to_json_dict(),
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "GeneratorFamily":
        rule = obj["rule"]
        return cls(
            IndexSet.from_json_dict(obj["index"]),
            tuple(profile_from_json_dict(p) for p in rule["profiles"]),
            profile_from_json_dict(obj["envelope"]),
            rule.get("kind", "shift"),
            None if obj.get("modulus") is None else ModulusBound.from_json_dict(obj["modulus"]),
        )


# ----------------------------------------------------------------------
# sampled and dyadic functions


@dataclass(frozen=True)
class SampledFunction:
    """Point samples on a uniform grid (Riemann norms, diagnostics only)."""

    x: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def lp_norm(self, p) -> float:
        p = normalize_p(p)
        if math.isinf(p):
            return float(np.abs(self.values).max(initial=0.0))
        h = float(self.x[1] - self.x[0]) if self.x.size > 1 else 1.0
        return float((np.sum(np.abs(self.values) ** p) * h) ** (1.0 / p))


def synthesize(fam: GeneratorFamily, c, grid) -> SampledFunction:
    """Evaluate sum_λ c(λ) φ_λ on a grid.

    All stored generators enter the sum, so the reported truncation
    bound is zero; the meta dict records the localization bound ratio
    ||f||_inf / (R ||h||_W1 ||c||_inf) for cross-checking.
    """
    c = np.asarray(c, dtype=float)
    if c.shape[0] != fam.n_columns:
        raise ValueError(f"coefficient length {c.shape[0]} != generator count {fam.n_columns}")
    grid = np.asarray(grid, dtype=float)
    vals = np.zeros_like(grid)
    for col in range(fam.n_columns):
        if c[col] == 0.0:
            continue
        prof, shift = fam.column_profile(col)
        vals += c[col] * np.asarray(prof(grid - shift), dtype=float)
    r = separation_constant(fam.effective_index())
    hnorm = fam.envelope.amalgam_norm()
    cmax = float(np.abs(c).max(initial=0.0))
    bound = r * hnorm * cmax
    ratio = float(np.abs(vals).max(initial=0.0) / bound) if bound > 0 else 0.0
    return SampledFunction(grid, vals, {"truncation_bound": 0.0,
                                        "sup_bound_ratio": ratio})


class DyadicFunction:
    """Piecewise-constant function on dyadic cells of width 2^-level.

    ``values[k]`` is the cell average on [(start+k) h, (start+k+1) h);
    Lp norms of such functions are exact sums, which is what makes the
    dyadic norm identity and the projection contractivity testable to
    machine precision.
    """

    def __init__(self, level: int, start, values, meta: dict | None = None):
        values = np.asarray(values, dtype=np.float64)
        start = np.asarray(start, dtype=np.int64).reshape(-1)
        if start.size != values.ndim:
            raise ValueError("start must give one cell index per axis")
        self.level = int(level)
        self.start = start
        self.values = values
        self.meta = dict(meta or {})

    @property
    def dim(self) -> int:
        return self.values.ndim

    @property
    def width(self) -> float:
        return 2.0 ** (-self.level)

    @property
    def window(self) -> np.ndarray:
        h = self.width
        lo = self.start * h
        hi = (self.start + np.asarray(self.values.shape)) * h
        return np.stack([lo, hi], axis=1)

    def lp_norm(self, p) -> float:
        p = normalize_p(p)
        if math.isinf(p):
            return float(np.abs(self.values).max(initial=0.0))
        cell = self.width ** self.dim
        return float((np.sum(np.abs(self.values) ** p) * cell) ** (1.0 / p))

    def evaluate(self, x) -> np.ndarray:
        pts = np.asarray(x, dtype=float)
        scalar = pts.ndim == 0 and self.dim == 1
        pts = np.atleast_1d(pts)
        if self.dim == 1 and pts.ndim == 1:
            pts = pts[:, None]
        idx = np.floor(pts * 2.0 ** self.level).astype(np.int64) - self.start
        ok = np.ones(pts.shape[0], dtype=bool)
        for ax in range(self.dim):
            ok &= (idx[:, ax] >= 0) & (idx[:, ax] < self.values.shape[ax])
        out = np.zeros(pts.shape[0])
        if ok.any():
            out[ok] = self.values[tuple(idx[ok].T)]
        return float(out[0]) if scalar else out

    def refine(self, to_level: int) -> "DyadicFunction":
        if to_level < self.level:
            raise ValueError("refine target must not be coarser")
        f = 2 ** (to_level - self.level)
        vals = self.values
        for ax in range(self.dim):
            vals = np.repeat(vals, f, axis=ax)
        return DyadicFunction(to_level, self.start * f, vals, self.meta)

    def coarsen(self, to_level: int) -> "DyadicFunction":
        """Block-average down to a coarser level (zero-padding to align)."""
        if to_level > self.level:
            raise ValueError("coarsen target must not be finer")
        f = 2 ** (self.level - to_level)
        vals = self.values
        start = self.start.copy()
        padded = False
        for ax in range(self.dim):
            lo_pad = int(start[ax] % f)
            size = vals.shape[ax] + lo_pad
            hi_pad = (-size) % f
            if lo_pad or hi_pad:
                padded = True
                pad = [(0, 0)] * self.dim
                pad[ax] = (lo_pad, hi_pad)
                vals = np.pad(vals, pad)
            start[ax] -= lo_pad
        for ax in range(self.dim):
            shape = list(vals.shape)
            shape[ax] = shape[ax] // f
            shape.insert(ax + 1, f)
            vals = vals.reshape(shape).sum(axis=ax + 1) / f
        meta = dict(self.meta)
        if padded:
            meta["padded"] = True
        return DyadicFunction(to_level, start // f, vals, meta)

    def binary_op(self, other: "DyadicFunction", fn) -> "DyadicFunction":
        """Pointwise combination on the union window at the finer level."""
        level = max(self.level, other.level)
        a, b = self.refine(level), other.refine(level)
        lo = np.minimum(a.start, b.start)
        hi = np.maximum(a.start + np.asarray(a.values.shape),
                        b.start + np.asarray(b.values.shape))
        def embed(g):
            out = np.zeros(tuple(hi - lo))
            sl = tuple(slice(s - l, s - l + n)
                       for s, l, n in zip(g.start, lo, g.values.shape))
            out[sl] = g.values
            return out
        return DyadicFunction(level, lo, fn(embed(a), embed(b)))

    def subtract(self, other: "DyadicFunction") -> "DyadicFunction":
        return self.binary_op(other, lambda x, y: x - y)


def project_Pn(f, level: int, window=None) -> DyadicFunction:
    """Project onto piecewise constants at dyadic scale 2^-level.

    Profiles project exactly through antiderivatives; dyadic functions
    re-average (idempotent at equal level); callables use per-cell
    Gauss-Legendre quadrature and need an explicit window.  Windows not
    commensurate with the grid are padded outward and flagged in meta.
    """
    if isinstance(f, DyadicFunction):
        if window is not None:
            raise ValueError("window applies to profile/callable input only")
        if level == f.level:
            return DyadicFunction(f.level, f.start, f.values.copy(), f.meta)
        if level > f.level:
            return f.refine(level)
        return f.coarsen(level)
    h = 2.0 ** (-level)
    if isinstance(f, Profile1D):
        if window is None:
            r = f.decay_radius(1e-14)
            window = (-r, r)
        lo, hi = float(window[0]), float(window[1])
        k_lo = math.floor(lo / h)
        k_hi = math.ceil(hi / h)
        if k_hi <= k_lo:
            k_hi = k_lo + 1
        padded = (k_lo * h != lo) or (k_hi * h != hi)
        edges = (k_lo + np.arange(k_hi - k_lo + 1)) * h
        vals = f.cell_averages(edges)
        return DyadicFunction(level, [k_lo], vals,
                              {"padded": True} if padded else {})
    if callable(f):
        if window is None:
            raise ValueError("callable input needs an explicit window")
        lo, hi = float(window[0]), float(window[1])
        k_lo, k_hi = math.floor(lo / h), math.ceil(hi / h)
        padded = (k_lo * h != lo) or (k_hi * h != hi)
        vals = np.array([
            gauss_legendre_integral(f, (k_lo + t) * h, (k_lo + t + 1) * h) / h
            for t in range(k_hi - k_lo)
        ])
        return DyadicFunction(level, [k_lo], vals,
                              {"padded": True} if padded else {})
    raise TypeError(f"cannot project object of type {type(f).__name__}")


# ----------------------------------------------------------------------
# discretization


def discretize_synthesis(fam: GeneratorFamily, n0: int,
                         tail_tol: float = 1e-14) -> LocalizedMatrix:
    """Cell averages of each generator at scale 2^-n0.

    Rows are the dyadic points covering every generator's (decay-radius)
    support; column k holds 2^{n0} ∫ φ_k over each row cell.  The
    localization norm of the result is bounded by 2 ||envelope||_W1 for
    single-profile shift families.
    """
    h = 2.0 ** (-n0)
    spans = []
    for col in range(fam.n_columns):
        prof, shift = fam.column_profile(col)
        r = prof.decay_radius(tail_tol)
        spans.append((shift - r, shift + r))
    lo = min(s for s, _ in spans)
    hi = max(e for _, e in spans)
    k_lo, k_hi = math.floor(lo / h), math.ceil(hi / h)
    rows = IndexSet.dyadic_range(n0, k_lo, k_hi)
    ii, jj, vv = [], [], []
    for col in range(fam.n_columns):
        prof, shift = fam.column_profile(col)
        c_lo = max(math.floor(spans[col][0] / h), k_lo)
        c_hi = min(math.ceil(spans[col][1] / h), k_hi)
        if c_hi <= c_lo:
            continue
        edges = (c_lo + np.arange(c_hi - c_lo + 1)) * h
        avgs = prof.cell_averages(edges - shift)
        nz = np.abs(avgs) >= 1e-300
        ii.extend((c_lo - k_lo + np.flatnonzero(nz)).tolist())
        jj.extend([col] * int(nz.sum()))
        vv.extend(avgs[nz].tolist())
    return LocalizedMatrix(rows, fam.effective_index(), ii, jj, vv)


@dataclass(frozen=True)
class SynthesisEntry:
    window: int
    n0: int
    lower: float
    upper: float
    lower_certified: bool
    upper_certified: bool
    method: str
    bias_bound: float | None


@dataclass(frozen=True)
class SynthesisStabilityReport:
    p: float
    entries: list
    verdict: str
    sjostrand_bound_ratio: float

    def to_json_dict(self) -> dict:
        return {
            "p": "inf" if math.isinf(self.p) else self.p,
            "entries": [e.__dict__ for e in self.entries],
            "verdict": self.verdict,
            "sjostrand_bound_ratio": self.sjostrand_bound_ratio,
        }


def synthesis_stability(fam: GeneratorFamily, p, n0_values, window_sizes=None,
                        seed=None) -> SynthesisStabilityReport:
    """Stability constants of the discretized synthesis operator.

    Constants at scale n0 are 2^{-n0/p} times those of the cell-average
    matrix (exact dyadic identity).  The recorded bias bound scales like
    ω(2^{-n0}) ||envelope||_W1 R^{1-1/p}: it tracks how far the
    discretized constants may sit from the continuum ones, up to an
    unspecified geometry constant.
    """
    fam.ensure_valid()
    p = normalize_p(p)
    n0_values = [int(n) for n in n0_values]
    windows = [len(fam.index)] if window_sizes is None else [int(w) for w in window_sizes]
    inv_p = 0.0 if math.isinf(p) else 1.0 / p
    hnorm = fam.envelope.amalgam_norm()
    entries = []
    worst_ratio = 0.0
    for w in windows:
        sub = fam.prefix(w)
        r_sep = separation_constant(sub.effective_index())
        for n0 in n0_values:
            A = discretize_synthesis(sub, n0)
            ratio = sjostrand_norm(A) / (2.0 * hnorm) if hnorm > 0 else 0.0
            worst_ratio = max(worst_ratio, float(ratio))
            fac = 2.0 ** (-n0 * inv_p)
            lo = lower_constant(A, p, seed=seed)
            hi = upper_constant(A, p)
            bias = None
            if fam.modulus is not None:
                bias = (r_sep ** (1.0 - inv_p)) * fam.modulus(2.0 ** (-n0)) * hnorm
            entries.append(SynthesisEntry(w, n0, lo.value * fac, hi.value * fac,
                                          lo.certified, hi.certified, lo.method, bias))
    finest = max(n0_values)
    lowers = [e.lower for e in entries if e.n0 == finest]
    return SynthesisStabilityReport(p, entries, ladder_verdict(lowers),
                                    worst_ratio)
