"""Time-inhomogeneous phase-type distributions.

Two layers live here.  The scaled family IPH(pi, T, rate) has generator
rate(t)*T, a commuting path, so the law of the absorption time reduces to
the base PH law evaluated at the primitive R(x) = int_0^x rate:

    f(x) = rate(x) pi e^{R(x) T} t,      P(tau > x) = pi e^{R(x) T} e,

and tau equals g(X) in distribution for X ~ PH(pi, T) with g the inverse
of R.  The general (non-commuting) case is handled through matrix rate
paths and the product integral prod_s^t (I + T(u) du), computed as the
solution of the linear matrix initial-value problem dM/du = M T(u),
M(s) = I.

A thinning sampler for general paths is provided as a validation oracle
for the product-integral survival function; it needs a caller-supplied
upper bound on the total jump rate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import quad, solve_ivp

from .errors import (
    DegenerateConditioningError,
    DomainError,
    IntegrationError,
    NonConvergenceError,
    ValidationError,
)
from .matfun import check_sub_intensity, mat_exp, mat_fun
from .phcore import PHDist, ph_new, ph_pdf, ph_sample, ph_sf

__all__ = [
    "RateFunction",
    "rate_function",
    "constant_rate",
    "power_rate",
    "inverse_linear_rate",
    "IPHDist",
    "iph_new",
    "iph_pdf",
    "iph_sf",
    "iph_cdf",
    "iph_overshoot",
    "iph_sample",
    "iph_alpha_moment",
    "MatrixRatePath",
    "path_new",
    "scaled_path",
    "piecewise_path",
    "product_integral",
    "iph_general_sf",
    "thinning_sample",
]


# ---------------------------------------------------------------------------
# scalar rate functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateFunction:
    """A positive intensity t -> rate(t) on [0, inf) with its primitive.

    ``primitive`` is R(x) = int_0^x rate(t) dt; when no closed form is
    supplied an adaptive-quadrature fallback is used.  ``inverse_primitive``
    is the transform g = R^{-1} when known; otherwise inversion falls back
    to bracketed bisection at 1e-10 relative tolerance.  Build through
    :func:`rate_function`, which validates positivity on a log-spaced grid.
    Callables must be side-effect-free; vectorized evaluation assumes it.
    """

    rate: Callable[[np.ndarray], np.ndarray]
    primitive: Optional[Callable[[np.ndarray], np.ndarray]] = None
    inverse_primitive: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "rate"

    def rate_at(self, x):
        return np.asarray(self.rate(np.asarray(x, dtype=float)), dtype=float)

    def primitive_at(self, x):
        x = np.asarray(x, dtype=float)
        if self.primitive is not None:
            return np.asarray(self.primitive(x), dtype=float)
        flat = np.atleast_1d(x)
        vals = np.array([quad(self.rate, 0.0, xi, limit=200)[0] for xi in flat])
        return vals.reshape(x.shape) if x.ndim else float(vals[0])

    def inverse_at(self, y):
        y = np.asarray(y, dtype=float)
        if self.inverse_primitive is not None:
            return np.asarray(self.inverse_primitive(y), dtype=float)
        return self._invert(y)

    def _invert(self, y):
        """Monotone bracketed bisection for R(x) = y, 1e-10 relative."""
        scalar = y.ndim == 0
        y = np.atleast_1d(y).astype(float)
        if np.any(y < 0):
            raise DomainError("primitive values are nonnegative; cannot invert below 0")
        hi = np.ones_like(y)
        for _ in range(200):
            mask = self.primitive_at(hi) < y
            if not np.any(mask):
                break
            hi[mask] *= 2.0
        else:
            raise NonConvergenceError("inversion bracket did not close")
        lo = np.zeros_like(y)
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            below = self.primitive_at(mid) < y
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(hi - lo <= 1e-10 * np.maximum(hi, 1e-300)):
                break
        out = 0.5 * (lo + hi)
        out[y == 0.0] = 0.0
        return float(out[0]) if scalar else out


def rate_function(rate, primitive=None, inverse_primitive=None, name="rate") -> RateFunction:
    """Validate and build a :class:`RateFunction`.

    Positivity of ``rate`` is checked on a 256-point log-spaced grid over
    [1e-6, 1e6]; when both closed forms are given, the round trip
    primitive(inverse_primitive(y)) = y is checked to 1e-9.
    """
    rf = RateFunction(rate, primitive, inverse_primitive, name)
    grid = np.geomspace(1e-6, 1e6, 256)
    vals = rf.rate_at(grid)
    if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
        i = int(np.argmin(np.where(np.isfinite(vals), vals, -np.inf)))
        raise ValidationError(
            f"rate function {name!r} must be strictly positive; value {vals[i]} at t = {grid[i]:.3g}"
        )
    if primitive is not None:
        p0 = float(rf.primitive_at(0.0))
        if abs(p0) > 1e-12:
            raise ValidationError(f"primitive of {name!r} must vanish at 0, got {p0}")
        pg = rf.primitive_at(grid)
        if np.any(np.diff(pg) <= 0):
            raise ValidationError(f"primitive of {name!r} must be strictly increasing")
        if inverse_primitive is not None:
            # kept moderate so exponential-type inverses stay representable
            ys = np.geomspace(1e-3, 1e2, 64)
            back = rf.primitive_at(rf.inverse_at(ys))
            if np.max(np.abs(back - ys) / np.maximum(1.0, ys)) > 1e-9:
                raise ValidationError(
                    f"primitive and inverse_primitive of {name!r} are inconsistent"
                )
    return rf


def constant_rate(c: float = 1.0) -> RateFunction:
    if not (c > 0):
        raise ValidationError(f"constant rate must be positive, got {c}")
    if c == 1.0:
        # identity transform; kept exact so homogeneous reductions are bitwise
        return rate_function(
            lambda t: np.ones_like(np.asarray(t, dtype=float)),
            primitive=lambda x: np.asarray(x, dtype=float),
            inverse_primitive=lambda y: np.asarray(y, dtype=float),
            name="constant(1)",
        )
    return rate_function(
        lambda t: np.full_like(np.asarray(t, dtype=float), c),
        primitive=lambda x: c * np.asarray(x, dtype=float),
        inverse_primitive=lambda y: np.asarray(y, dtype=float) / c,
        name=f"constant({c})",
    )


def power_rate(beta: float) -> RateFunction:
    """rate(t) = beta t^{beta-1}; primitive x^beta, inverse y^{1/beta}."""
    if not (beta > 0):
        raise ValidationError(f"power rate exponent must be positive, got {beta}")
    return rate_function(
        lambda t: beta * np.asarray(t, dtype=float) ** (beta - 1.0),
        primitive=lambda x: np.asarray(x, dtype=float) ** beta,
        inverse_primitive=lambda y: np.asarray(y, dtype=float) ** (1.0 / beta),
        name=f"power({beta})",
    )


def inverse_linear_rate(scale: float = 1.0) -> RateFunction:
    """rate(t) = 1/(scale+t); primitive log(1+x/scale), inverse scale(e^y-1)."""
    if not (scale > 0):
        raise ValidationError(f"scale must be positive, got {scale}")
    return rate_function(
        lambda t: 1.0 / (scale + np.asarray(t, dtype=float)),
        primitive=lambda x: np.log1p(np.asarray(x, dtype=float) / scale),
        inverse_primitive=lambda y: scale * np.expm1(np.asarray(y, dtype=float)),
        name=f"inverse_linear({scale})",
    )


# ---------------------------------------------------------------------------
# the lambda-scaled (commuting) family
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IPHDist:
    """Absorption-time law for the generator rate(t)*T with start vector pi."""

    base: PHDist
    rate: RateFunction


def iph_new(base: PHDist, rate: RateFunction) -> IPHDist:
    if not isinstance(base, PHDist):
        raise ValidationError("base must be a PHDist")
    if not isinstance(rate, RateFunction):
        raise ValidationError("rate must be a RateFunction")
    return IPHDist(base, rate)


def _check_nonneg(x):
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        bad = np.atleast_1d(arr)[~(np.atleast_1d(arr) >= 0)][0]
        raise DomainError(f"evaluation point must be a finite nonnegative real, got {bad}")
    return arr


def iph_pdf(d: IPHDist, x):
    """rate(x) pi e^{R(x) T} t."""
    x = _check_nonneg(x)
    return d.rate.rate_at(x) * ph_pdf(d.base, d.rate.primitive_at(x))


def iph_sf(d: IPHDist, x):
    """pi e^{R(x) T} e."""
    x = _check_nonneg(x)
    return ph_sf(d.base, d.rate.primitive_at(x))


def iph_cdf(d: IPHDist, x):
    return 1.0 - iph_sf(d, x)


def iph_overshoot(d: IPHDist, s: float) -> IPHDist:
    """Law of tau - s given tau > s: again inhomogeneous phase-type.

    The new start vector is pi e^{R(s)T} renormalized, and the rate is
    shifted to u -> rate(s+u).
    """
    s = float(s)
    if s < 0:
        raise DomainError(f"conditioning level must be nonnegative, got {s}")
    if s == 0.0:
        return d
    base, rf = d.base, d.rate
    Rs = float(rf.primitive_at(s))
    alpha = base.pi @ mat_exp(base.T * Rs)
    denom = float(alpha @ base.close)
    if not (denom > 1e-300):
        raise DegenerateConditioningError(
            f"survival at level {s} is {denom:.3e}; conditioning is degenerate"
        )
    alpha = alpha / denom
    if base.markov:
        alpha = np.maximum(alpha, 0.0)
        alpha /= alpha.sum()
        new_base = ph_new(alpha, base.T, markov=True)
    else:
        new_base = ph_new(alpha, base.T, markov=False, exit=base.exit)

    inv = None
    if rf.inverse_primitive is not None:
        inv = lambda y: rf.inverse_at(np.asarray(y, dtype=float) + Rs) - s
    shifted = RateFunction(
        rate=lambda u: rf.rate_at(np.asarray(u, dtype=float) + s),
        primitive=lambda u: rf.primitive_at(np.asarray(u, dtype=float) + s) - Rs,
        inverse_primitive=inv,
        name=f"{rf.name}+{s:g}",
    )
    return IPHDist(new_base, shifted)


def iph_sample(d: IPHDist, rng: np.random.Generator, count: int) -> np.ndarray:
    """g(X) for X ~ PH(pi, T), with g the inverse primitive of the rate."""
    xs = ph_sample(d.base, rng, count)
    return d.rate.inverse_at(xs)


def iph_alpha_moment(d: IPHDist, alpha: float, transform_laplace) -> float:
    """E(tau^alpha) = pi L(-T) t, L the Laplace transform of g^alpha.

    ``transform_laplace`` must be analytic on the spectrum of -T (this is
    the caller's assertion; the underlying existence condition is that the
    scalar transform converges right of the spectral abscissa).
    """
    if not (alpha > 0):
        raise DomainError(f"moment order must be positive, got {alpha}")
    M = mat_fun(-d.base.T, transform_laplace)
    return float(d.base.pi @ M @ d.base.exit)


# ---------------------------------------------------------------------------
# general matrix rate paths and the product integral
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MatrixRatePath:
    """A path t -> T(t) of sub-intensity matrices.

    ``breakpoints`` lists known discontinuities so integration can split
    there; ``batch`` optionally evaluates a whole vector of times at once
    (used by the thinning oracle on large simulations).  Build through
    :func:`path_new`, :func:`scaled_path` or :func:`piecewise_path`.
    """

    matrix: Callable[[float], np.ndarray]
    description: str = "path"
    breakpoints: tuple = ()
    batch: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def at(self, t: float) -> np.ndarray:
        return np.asarray(self.matrix(t), dtype=float)

    def at_many(self, ts: np.ndarray) -> np.ndarray:
        if self.batch is not None:
            return np.asarray(self.batch(ts), dtype=float)
        return np.stack([self.at(t) for t in ts])


def path_new(matrix, description="path", breakpoints=(), batch=None, check_times=None) -> MatrixRatePath:
    """Build a path, validating T(t) at a handful of sample times."""
    path = MatrixRatePath(matrix, description, tuple(float(b) for b in breakpoints), batch)
    if check_times is None:
        # avoids t = 0, where scaled paths with vanishing rate are degenerate
        check_times = np.geomspace(1e-3, 1.0, 5)
        if path.breakpoints:
            hi = max(path.breakpoints)
            check_times = np.concatenate([check_times, [1.5 * hi]])
    for t in check_times:
        check_sub_intensity(path.at(t), name=f"T({t:g})")
    return path


def scaled_path(rate: RateFunction, T) -> MatrixRatePath:
    """The commuting family T(t) = rate(t) * T.

    T and the rate are validated separately; no per-time check is needed
    (and none would hold at t = 0 for rates that vanish there).
    """
    T = check_sub_intensity(T)
    return MatrixRatePath(
        lambda t: rate.rate_at(t) * T,
        description=f"{rate.name} * T",
        batch=lambda ts: rate.rate_at(np.asarray(ts, dtype=float))[:, None, None] * T,
    )


def piecewise_path(times: Sequence[float], matrices) -> MatrixRatePath:
    """Piecewise-constant path: T(t) = matrices[k] for times[k-1] <= t < times[k]."""
    cuts = np.asarray(list(times), dtype=float)
    mats = np.stack([check_sub_intensity(m) for m in matrices])
    if cuts.ndim != 1 or mats.shape[0] != cuts.size + 1:
        raise ValidationError("need one more matrix than cut points")
    if cuts.size and np.any(np.diff(cuts) <= 0):
        raise ValidationError("cut points must be strictly increasing")

    def matrix(t):
        return mats[int(np.searchsorted(cuts, t, side="right"))]

    def batch(ts):
        return mats[np.searchsorted(cuts, np.asarray(ts, dtype=float), side="right")]

    return path_new(
        matrix,
        description=f"piecewise constant ({mats.shape[0]} pieces)",
        breakpoints=cuts,
        batch=batch,
    )


def product_integral(path: MatrixRatePath, s: float, t: float, step_control=None) -> np.ndarray:
    """prod_s^t (I + T(u) du), as the solution at t of dM/du = M T(u), M(s) = I.

    ``step_control`` may override the integrator tolerances with keys
    ``rtol``, ``atol`` and ``max_step``.
    """
    s, t = float(s), float(t)
    if s > t:
        raise DomainError(f"interval is reversed: s = {s} > t = {t}")
    ctl = {"rtol": 1e-10, "atol": 1e-13, "max_step": np.inf}
    if step_control:
        ctl.update(step_control)
    p = path.at(s).shape[0]
    if s == t:
        return np.eye(p)
    # split at interior discontinuities so the error estimator stays honest
    knots = [s] + [b for b in path.breakpoints if s < b < t] + [t]
    M = np.eye(p)
    for a, b in zip(knots[:-1], knots[1:]):
        def rhs(u, m):
            return (m.reshape(p, p) @ path.at(u)).ravel()

        sol = solve_ivp(
            rhs,
            (a, b),
            np.eye(p).ravel(),
            method="RK45",
            rtol=ctl["rtol"],
            atol=ctl["atol"],
            max_step=ctl["max_step"],
        )
        if not sol.success:
            raise IntegrationError(
                f"product integral failed on [{a:g}, {b:g}]: {sol.message}"
            )
        M = M @ sol.y[:, -1].reshape(p, p)
    slack = 1e3 * ctl["rtol"] + 1e-12
    rows = M.sum(axis=1)
    if np.any(rows > 1.0 + slack) or np.any(M < -slack):
        raise IntegrationError(
            "product integral is not sub-stochastic within tolerance",
            achieved=float(max(np.max(rows) - 1.0, -np.min(M))),
        )
    return M


def iph_general_sf(pi, path: MatrixRatePath, x, step_control=None) -> float:
    """pi prod_0^x (I + T(u) du) e."""
    x = float(x)
    if x < 0:
        raise DomainError(f"evaluation point must be nonnegative, got {x}")
    pi = np.asarray(pi, dtype=float)
    M = product_integral(path, 0.0, x, step_control)
    return float(np.clip(pi @ M @ np.ones(M.shape[0]), 0.0, 1.0))


# ---------------------------------------------------------------------------
# thinning oracle
# ---------------------------------------------------------------------------

def thinning_sample(
    pi,
    path: MatrixRatePath,
    rate_bound: float,
    rng: np.random.Generator,
    count: int,
    max_waves: int = 1_000_000,
) -> np.ndarray:
    """Absorption times of the inhomogeneous chain by Poisson thinning.

    Validation oracle for :func:`iph_general_sf`.  Candidate events arrive
    at the constant rate ``rate_bound`` (which must dominate every exit
    rate -T_ii(t) along the path); each candidate is accepted as a real
    jump with probability -T_ii(t)/rate_bound.
    """
    pi = np.asarray(pi, dtype=float)
    if not (rate_bound > 0):
        raise ValidationError(f"rate bound must be positive, got {rate_bound}")
    p = pi.size
    state = rng.choice(p, size=count, p=pi / pi.sum())
    times = np.zeros(count)
    active = np.arange(count)
    for _ in range(max_waves):
        if not active.size:
            return times
        n = active.size
        times[active] += rng.exponential(1.0 / rate_bound, n)
        Ts = path.at_many(times[active])
        s = state[active]
        rows = Ts[np.arange(n), s, :]
        dii = -rows[np.arange(n), s]
        if np.any(dii > rate_bound * (1.0 + 1e-12)):
            raise ValidationError(
                f"rate bound {rate_bound} is violated (exit rate {np.max(dii)})"
            )
        accept = rng.random(n) < dii / rate_bound
        idx = np.flatnonzero(accept)
        dead = np.zeros(n, dtype=bool)
        if idx.size:
            r = rows[idx].copy()
            r[np.arange(idx.size), s[idx]] = 0.0
            r = np.maximum(r, 0.0)
            exit_rate = np.maximum(dii[idx] - r.sum(axis=1), 0.0)
            probs = np.concatenate([r, exit_rate[:, None]], axis=1)
            probs /= probs.sum(axis=1, keepdims=True)
            cum = np.cumsum(probs, axis=1)
            nxt = (cum <= rng.random(idx.size)[:, None]).sum(axis=1)
            absorbed = nxt == p
            state[active[idx]] = np.where(absorbed, s[idx], np.minimum(nxt, p - 1))
            dead[idx] = absorbed
        active = active[~dead]
    raise NonConvergenceError("thinning simulation did not absorb all paths")
