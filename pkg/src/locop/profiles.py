"""One-dimensional profiles: piecewise polynomials and closed decay forms.

These back generator families, envelopes, and convolution kernels.  Every
kind supports exact evaluation, exact definite integrals (antiderivatives),
exact extrema on intervals, and per-cell suprema of the absolute value --
the ingredients for amalgam-space norms and moduli of continuity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

_SQRT_PI = math.sqrt(math.pi)


class Profile1D:
    """Base class; subclasses implement the exact-evaluation hooks."""

    kind = "abstract"

    # -- hooks ---------------------------------------------------------
    def __call__(self, x):  # pragma: no cover - abstract
        raise NotImplementedError

    def antiderivative_at(self, x):  # F with F' = f, vectorized
        raise NotImplementedError

    def interval_extrema(self, a: float, b: float) -> tuple[float, float]:
        """(min, max) of f over [a, b], exact."""
        raise NotImplementedError

    def sup_abs_halfopen(self, a: float, b: float) -> float:
        """sup |f| over [a, b); equals the closed-interval value when f is continuous."""
        mn, mx = self.interval_extrema(a, b)
        return max(abs(mn), abs(mx))

    def smooth_breakpoints(self) -> np.ndarray:
        """Points where f is not smooth (for split quadrature)."""
        return np.empty(0)

    def decay_radius(self, tol: float = 1e-10) -> float:
        """R with |f| < tol outside [-R, R]."""
        raise NotImplementedError

    def tail_sum_bound(self, k: int) -> float:
        """Upper bound on sum_{j >= k} cell_sup(j), one side only;
        callers add the bounds for both sides (profiles here are even
        or compactly supported, so one formula serves both)."""
        raise NotImplementedError

    # -- shared machinery -----------------------------------------------
    def definite_integral(self, a: float, b: float) -> float:
        return float(self.antiderivative_at(b) - self.antiderivative_at(a))

    def cell_averages(self, edges: np.ndarray) -> np.ndarray:
        """Mean of f over consecutive cells [edges[i], edges[i+1])."""
        F = self.antiderivative_at(np.asarray(edges, dtype=float))
        return np.diff(F) / np.diff(edges)

    def cell_sup(self, k: int, width: float = 1.0) -> float:
        return self.sup_abs_halfopen(k * width, (k + 1) * width)

    def sup_abs(self, a: float, b: float) -> float:
        mn, mx = self.interval_extrema(a, b)
        return max(abs(mn), abs(mx))

    def modulus_of_continuity(self, delta: float, x: float) -> float:
        """sup_{|y| <= delta} |f(x + y) - f(x)|, exact via interval extrema."""
        if not 0.0 < delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        mn, mx = self.interval_extrema(x - delta, x + delta)
        fx = float(self(x))
        return max(mx - fx, fx - mn)

    def amalgam_norm(self, tol: float = 1e-14) -> float:
        return self.amalgam_norm_detail(tol)[0]

    def amalgam_norm_detail(self, tol: float = 1e-14) -> tuple[float, float]:
        """(value, truncation bound): sum over integer cells of sup |f|.

        Cells are accumulated outward from the support/decay region in
        ascending k order; sums below ``tol`` terminate the scan and the
        reported truncation bound dominates what was dropped.
        """
        radius = self.decay_radius(min(tol, 1e-14))
        k_lo = int(math.floor(-radius)) - 1
        k_hi = int(math.ceil(radius)) + 1
        ks = np.arange(k_lo, k_hi + 1)
        sups = np.array([self.cell_sup(int(k)) for k in ks])
        keep = sups > 0.0
        value = float(np.sum(sups[keep]))
        tail = float(self.tail_sum_bound(k_hi + 1) + self.tail_sum_bound(-k_lo + 1))
        return value, tail


# ----------------------------------------------------------------------


def _poly_eval(coeffs: np.ndarray, u):
    """Evaluate ascending-power coefficients at u (local coordinate)."""
    out = np.zeros_like(np.asarray(u, dtype=float))
    for c in coeffs[::-1]:
        out = out * u + c
    return out


@dataclass(frozen=True)
class PiecewisePolynomial(Profile1D):
    """Polynomial pieces on [breaks[i], breaks[i+1]), zero outside.

    ``coeffs[i]`` holds ascending-power coefficients in the local
    coordinate u = x - breaks[i]; the local form keeps evaluation stable
    for windows far from the origin.
    """

    breaks: np.ndarray
    coeffs: tuple

    kind = "pp"

    def __post_init__(self):
        br = np.asarray(self.breaks, dtype=float)
        if br.ndim != 1 or br.size < 2 or (np.diff(br) <= 0).any():
            raise ValueError("breaks must be strictly increasing with >= 2 entries")
        cf = tuple(np.asarray(c, dtype=float) for c in self.coeffs)
        if len(cf) != br.size - 1:
            raise ValueError("need one coefficient row per interval")
        br = br.copy()
        br.setflags(write=False)
        object.__setattr__(self, "breaks", br)
        object.__setattr__(self, "coeffs", cf)

    # -----------------------------------------------------------------
    def __call__(self, x):
        arr = np.asarray(x, dtype=float)
        scalar = arr.ndim == 0
        arr = np.atleast_1d(arr)
        out = np.zeros_like(arr)
        idx = np.searchsorted(self.breaks, arr, side="right") - 1
        inside = (idx >= 0) & (idx < len(self.coeffs)) & (arr < self.breaks[-1])
        for i in np.unique(idx[inside]):
            sel = inside & (idx == i)
            out[sel] = _poly_eval(self.coeffs[i], arr[sel] - self.breaks[i])
        return float(out[0]) if scalar else out

    def antiderivative_at(self, x):
        arr = np.atleast_1d(np.asarray(x, dtype=float))
        # cumulative integrals at the breakpoints
        piece_ints = [self._piece_integral(i, self.breaks[i], self.breaks[i + 1])
                      for i in range(len(self.coeffs))]
        cum = np.concatenate([[0.0], np.cumsum(piece_ints)])
        out = np.zeros_like(arr)
        idx = np.searchsorted(self.breaks, arr, side="right") - 1
        below = idx < 0
        above = arr >= self.breaks[-1]
        mid = ~below & ~above
        out[above] = cum[-1]
        for i in np.unique(idx[mid]):
            sel = mid & (idx == i)
            out[sel] = cum[i] + self._piece_antideriv(i, arr[sel])
        result = np.asarray(out)
        return float(result[0]) if np.asarray(x).ndim == 0 else result

    def _piece_antideriv(self, i: int, x):
        c = self.coeffs[i]
        ic = np.concatenate([[0.0], c / np.arange(1, c.size + 1)])
        return _poly_eval(ic, np.asarray(x, dtype=float) - self.breaks[i])

    def _piece_integral(self, i: int, a: float, b: float) -> float:
        return float(self._piece_antideriv(i, b) - self._piece_antideriv(i, a))

    def interval_extrema(self, a: float, b: float,
                         right_open: bool = False) -> tuple[float, float]:
        if b < a:
            raise ValueError("empty interval")
        lo, hi = np.inf, -np.inf
        zero_right = b > self.breaks[-1] if right_open else b >= self.breaks[-1]
        if a < self.breaks[0] or zero_right:
            lo, hi = 0.0, 0.0  # the zero extension is visible
        for i, c in enumerate(self.coeffs):
            pa, pb = self.breaks[i], self.breaks[i + 1]
            if right_open and pa >= b:
                continue  # the piece only begins at the excluded endpoint
            s, e = max(a, pa), min(b, pb)
            if s > e or (s == e and s == pb):
                continue  # a lone overlap point belonging to the next piece
            cand = [s, e]
            # interior critical points of the polynomial piece
            if c.size > 2:
                der = c[1:] * np.arange(1, c.size)
                roots = np.roots(der[::-1])
                for r in roots:
                    if abs(r.imag) < 1e-12:
                        xr = r.real + pa
                        if s <= xr <= e:
                            cand.append(xr)
            vals = _poly_eval(c, np.asarray(cand) - pa)
            lo = min(lo, float(vals.min()))
            hi = max(hi, float(vals.max()))
        if lo is np.inf:  # interval met no piece
            lo = hi = 0.0
        return lo, hi

    def sup_abs_halfopen(self, a: float, b: float) -> float:
        mn, mx = self.interval_extrema(a, b, right_open=True)
        return max(abs(mn), abs(mx))

    def smooth_breakpoints(self) -> np.ndarray:
        return np.asarray(self.breaks)

    def decay_radius(self, tol: float = 1e-10) -> float:
        return float(max(abs(self.breaks[0]), abs(self.breaks[-1])))

    def tail_sum_bound(self, k: int) -> float:
        return 0.0 if k > self.decay_radius() else math.inf

    @property
    def support(self) -> tuple[float, float]:
        return float(self.breaks[0]), float(self.breaks[-1])

    def to_json_dict(self) -> dict:
        return {"kind": "pp", "breaks": [float(b) for b in self.breaks],
                "coeffs": [[float(v) for v in c] for c in self.coeffs]}


@dataclass(frozen=True)
class GaussianProfile(Profile1D):
    """amplitude * exp(-(x/sigma)^2)."""

    sigma: float
    amplitude: float = 1.0

    kind = "gaussian"

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    def __call__(self, x):
        arr = np.asarray(x, dtype=float)
        return self.amplitude * np.exp(-((arr / self.sigma) ** 2))

    def antiderivative_at(self, x):
        arr = np.asarray(x, dtype=float)
        from scipy.special import erf

        return self.amplitude * self.sigma * _SQRT_PI / 2.0 * erf(arr / self.sigma)

    def second_antiderivative_at(self, x):
        arr = np.asarray(x, dtype=float)
        from scipy.special import erf

        u = arr / self.sigma
        return (self.amplitude * self.sigma * _SQRT_PI / 2.0
                * (arr * erf(u) + self.sigma / _SQRT_PI * np.exp(-(u ** 2))))

    def interval_extrema(self, a: float, b: float) -> tuple[float, float]:
        cand = [a, b]
        if a < 0.0 < b:
            cand.append(0.0)
        vals = self(np.asarray(cand))
        if self.amplitude >= 0:
            return float(vals.min()), float(vals.max())
        return float(vals.min()), float(vals.max())

    def decay_radius(self, tol: float = 1e-10) -> float:
        amp = abs(self.amplitude)
        if amp == 0 or tol >= amp:
            return 0.0
        return self.sigma * math.sqrt(math.log(amp / tol))

    def tail_sum_bound(self, k: int) -> float:
        # cells are unit width; |f| decreasing beyond |x| >= max(k-1, 0)
        if k <= 1:
            k = 1
        amp = abs(self.amplitude)
        # sup on cell j (j >= k) is |f(j)|; sum <= f(k) + integral_k^inf f
        from scipy.special import erfc

        head = amp * math.exp(-((k / self.sigma) ** 2))
        tail_int = amp * self.sigma * _SQRT_PI / 2.0 * float(erfc(k / self.sigma))
        return head + tail_int

    def to_json_dict(self) -> dict:
        return {"kind": "gaussian", "sigma": float(self.sigma),
                "amplitude": float(self.amplitude)}


@dataclass(frozen=True)
class ExponentialProfile(Profile1D):
    """amplitude * exp(-rate * |x|)."""

    rate: float
    amplitude: float = 1.0

    kind = "exponential"

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("rate must be positive")

    def __call__(self, x):
        arr = np.asarray(x, dtype=float)
        return self.amplitude * np.exp(-self.rate * np.abs(arr))

    def antiderivative_at(self, x):
        arr = np.asarray(x, dtype=float)
        # odd antiderivative: sign(x) * (1 - exp(-rate|x|))/rate
        return self.amplitude * np.sign(arr) * (1.0 - np.exp(-self.rate * np.abs(arr))) / self.rate

    def second_antiderivative_at(self, x):
        arr = np.asarray(x, dtype=float)
        a = np.abs(arr)
        return self.amplitude * (a / self.rate + (np.exp(-self.rate * a) - 1.0) / self.rate ** 2)

    def interval_extrema(self, a: float, b: float) -> tuple[float, float]:
        cand = [a, b]
        if a < 0.0 < b:
            cand.append(0.0)
        vals = self(np.asarray(cand))
        return float(vals.min()), float(vals.max())

    def smooth_breakpoints(self) -> np.ndarray:
        return np.array([0.0])

    def decay_radius(self, tol: float = 1e-10) -> float:
        amp = abs(self.amplitude)
        if amp == 0 or tol >= amp:
            return 0.0
        return math.log(amp / tol) / self.rate

    def tail_sum_bound(self, k: int) -> float:
        if k <= 1:
            k = 1
        amp = abs(self.amplitude)
        r = math.exp(-self.rate)
        return amp * math.exp(-self.rate * k) / (1.0 - r)

    def to_json_dict(self) -> dict:
        return {"kind": "exponential", "rate": float(self.rate),
                "amplitude": float(self.amplitude)}


# ----------------------------------------------------------------------


def bspline_profile(order: int) -> PiecewisePolynomial:
    """Cardinal B-spline of the given order, supported on [0, order].

    order 1 is the unit box, order 2 the hat on [0, 2].
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    m = int(order)
    fact = math.factorial(m - 1)
    breaks = np.arange(0, m + 1, dtype=float)
    coeffs = []
    for j in range(m):
        # B_m(x) = sum_{k<=j} (-1)^k C(m,k) (x-k)^{m-1} / (m-1)! on [j, j+1)
        poly = np.zeros(m)
        for k in range(j + 1):
            shift = float(j - k)  # local coordinate u = x - j, x - k = u + shift
            w = (-1.0) ** k * math.comb(m, k) / fact
            binom_row = np.array([math.comb(m - 1, t) * shift ** (m - 1 - t)
                                  for t in range(m)])
            poly += w * binom_row
        coeffs.append(poly)
    return PiecewisePolynomial(breaks, tuple(coeffs))


def box_profile(lo: float = 0.0, hi: float = 1.0, height: float = 1.0) -> PiecewisePolynomial:
    return PiecewisePolynomial(np.array([lo, hi]), (np.array([height]),))


def trapezoid_profile(plateau_lo: float, plateau_hi: float, ramp: float = 1.0,
                      height: float = 1.0) -> PiecewisePolynomial:
    """height on [plateau_lo, plateau_hi], linear ramps of the given width."""
    if ramp <= 0:
        raise ValueError("ramp must be positive")
    br = np.array([plateau_lo - ramp, plateau_lo, plateau_hi, plateau_hi + ramp])
    s = height / ramp
    return PiecewisePolynomial(br, (np.array([0.0, s]),
                                    np.array([height]),
                                    np.array([height, -s])))


@dataclass(frozen=True)
class TensorProfile:
    """Product of one axis profile per dimension (for d > 1 envelopes).

    Intended for nonnegative factors, where per-cell suprema and
    integrals factor across axes.
    """

    factors: tuple

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))

    @property
    def dim(self) -> int:
        return len(self.factors)

    def __call__(self, x):
        arr = np.asarray(x, dtype=float)
        if arr.ndim == 1:
            arr = arr[None, :]
        out = np.ones(arr.shape[0])
        for ax, f in enumerate(self.factors):
            out = out * np.asarray(f(arr[:, ax]))
        return out

    def cell_sup(self, k) -> float:
        return float(np.prod([f.cell_sup(int(ki)) for f, ki in zip(self.factors, k)]))

    def definite_integral(self, lo, hi) -> float:
        return float(np.prod([f.definite_integral(a, b)
                              for f, (a, b) in zip(self.factors, zip(lo, hi))]))


def profile_from_json_dict(obj: dict) -> Profile1D:
    kind = obj.get("kind")
    if kind == "pp":
        return PiecewisePolynomial(np.asarray(obj["breaks"], dtype=float),
                                   tuple(np.asarray(c, dtype=float) for c in obj["coeffs"]))
    if kind == "gaussian":
        return GaussianProfile(float(obj["sigma"]), float(obj.get("amplitude", 1.0)))
    if kind == "exponential":
        return ExponentialProfile(float(obj["rate"]), float(obj.get("amplitude", 1.0)))
    if kind == "bspline":
        return bspline_profile(int(obj["order"]))
    raise ValueError(f"unknown profile kind {kind!r}")


# ----------------------------------------------------------------------
# quadrature helpers

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gl_rule(order: int):
    rule = _GL_CACHE.get(order)
    if rule is None:
        rule = np.polynomial.legendre.leggauss(order)
        _GL_CACHE[order] = rule
    return rule


def gauss_legendre_integral(fn, a: float, b: float, order: int = 8,
                            splits: Sequence[float] = ()) -> float:
    """Composite Gauss-Legendre integral of fn over [a, b], split at kinks."""
    if b <= a:
        return 0.0
    pts = [a, b] + [s for s in splits if a < s < b]
    pts = np.unique(np.asarray(pts, dtype=float))
    nodes, weights = _gl_rule(order)
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        total += half * float(np.dot(weights, fn(mid + half * nodes)))
    return total


def pp_inner_product(p: PiecewisePolynomial, q: PiecewisePolynomial,
                     shift: float = 0.0) -> float:
    """Exact integral of p(x) * q(x + shift) dx."""
    P = np.polynomial.Polynomial
    left = max(p.breaks[0], q.breaks[0] - shift)
    right = min(p.breaks[-1], q.breaks[-1] - shift)
    if right <= left:
        return 0.0
    cuts = np.unique(np.concatenate([
        np.clip(p.breaks, left, right),
        np.clip(q.breaks - shift, left, right),
    ]))
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b <= a:
            continue
        xm = 0.5 * (a + b)
        i = int(np.searchsorted(p.breaks, xm, side="right") - 1)
        j = int(np.searchsorted(q.breaks, xm + shift, side="right") - 1)
        if not (0 <= i < len(p.coeffs) and 0 <= j < len(q.coeffs)):
            continue
        # express both pieces in the local coordinate u = x - a
        pi = P(p.coeffs[i])(P([a - p.breaks[i], 1.0]))
        qj = P(q.coeffs[j])(P([a + shift - q.breaks[j], 1.0]))
        prod = (pi * qj).integ()
        total += float(prod(b - a) - prod(0.0))
    return total
