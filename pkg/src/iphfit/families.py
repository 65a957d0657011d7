"""Transformed phase-type families with heavy or semi-heavy tails.

Each family is the law of Y = g(X) for X phase-type and g one of four
monotone transforms:

    ParetoExp     g(x) = beta (e^x - 1) / mu        power tail
    Power         g(x) = x^{1/beta}                 Weibull-type tail
    NegLogAffine  g(x) = mu - sigma log x           Gumbel-type tail
    ShiftedPower  g(x) = mu + sigma (x^{-xi}-1)/xi  GEV-type tail

The first two are increasing, the last two decreasing, so survival and
distribution functions swap roles there; every evaluator here returns
P(Y > y) regardless.  Survival and density reduce to the base PH law at
u = g^{-1}(y):

    P(Y > y) = pi e^{Tu} e  (increasing),  1 - pi e^{Tu} e  (decreasing)
    f_Y(y)   = pi e^{Tu} t |du/dy|

With a one-phase base these are exactly the classical Pareto, Weibull,
Gumbel and GEV laws; moment and transform formulas below evaluate the
corresponding matrix expressions through the matrix-function kernel.

ParetoExp with ``beta=None`` uses beta = E(X), i.e. g(x) = e^x - 1: the
log-PH case.  Mixtures sharing one transform stay inside the family and
``mixture_density`` checks that the resolved transforms agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .errors import (
    DegenerateConditioningError,
    DivergentMomentError,
    DomainError,
    NonConvergenceError,
    ValidationError,
)
from .matfun import mat_fun, mat_log_neg, power_function, upper_inc_gamma_mat
from .phcore import (
    PHDist,
    mixture_rep,
    ph_mean,
    ph_new,
    ph_pdf,
    ph_quantile,
    ph_sample,
    ph_sf,
)

__all__ = [
    "ParetoExp",
    "Power",
    "NegLogAffine",
    "ShiftedPower",
    "ShiftedTransform",
    "TransformedPH",
    "tph_new",
    "tph_sf",
    "tph_cdf",
    "tph_pdf",
    "tph_sample",
    "tph_quantile",
    "mp_conditional_excess",
    "mp_laplace",
    "mp_shifted_frac_moment",
    "mw_moment",
    "mw_mgf",
    "ep_mean",
    "ep_laplace",
    "sp_mean",
    "erlang_oracle",
    "mixture_density",
]

EULER_GAMMA = float(np.euler_gamma)


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParetoExp:
    """g(x) = beta (e^x - 1) / mu; beta=None means beta = mu, so g = e^x - 1."""

    beta: float | None = None
    tag = "pareto"
    increasing = True

    def __post_init__(self):
        if self.beta is not None and not (self.beta > 0):
            raise ValidationError(f"beta must be positive, got {self.beta}")

    def scale(self, mu: float) -> float:
        return 1.0 if self.beta is None else self.beta / mu

    def support(self, mu):
        return 0.0, np.inf

    def to_x(self, y, mu):
        return np.log1p(y / self.scale(mu))

    def from_x(self, x, mu):
        return self.scale(mu) * np.expm1(x)

    def jac(self, y, mu):
        return 1.0 / (self.scale(mu) + y)

    def resolved_key(self, mu):
        return ("pareto", self.scale(mu))


@dataclass(frozen=True)
class Power:
    """g(x) = x^{1/beta}."""

    beta: float
    tag = "power"
    increasing = True

    def __post_init__(self):
        if not (self.beta > 0):
            raise ValidationError(f"beta must be positive, got {self.beta}")

    def support(self, mu):
        return 0.0, np.inf

    def to_x(self, y, mu):
        return np.asarray(y, dtype=float) ** self.beta

    def from_x(self, x, mu):
        return np.asarray(x, dtype=float) ** (1.0 / self.beta)

    def jac(self, y, mu):
        return self.beta * np.asarray(y, dtype=float) ** (self.beta - 1.0)

    def resolved_key(self, mu):
        return ("power", self.beta)


@dataclass(frozen=True)
class NegLogAffine:
    """g(x) = mu - sigma log x; decreasing in x, support all of R."""

    mu: float
    sigma: float
    tag = "gumbel"
    increasing = False

    def __post_init__(self):
        if not (self.sigma > 0):
            raise ValidationError(f"sigma must be positive, got {self.sigma}")

    def support(self, mu):
        return -np.inf, np.inf

    def to_x(self, y, mu):
        with np.errstate(over="ignore"):
            return np.exp(-(np.asarray(y, dtype=float) - self.mu) / self.sigma)

    def from_x(self, x, mu):
        return self.mu - self.sigma * np.log(np.asarray(x, dtype=float))

    def jac(self, y, mu):
        return self.to_x(y, mu) / self.sigma

    def resolved_key(self, mu):
        return ("gumbel", self.mu, self.sigma)


@dataclass(frozen=True)
class ShiftedPower:
    """g(x) = mu + sigma (x^{-xi} - 1)/xi; decreasing in x.

    Support of Y is {y : 1 + xi (y-mu)/sigma > 0}: bounded below for
    xi > 0, bounded above for xi < 0.  The auxiliary map
    z(y) = (1 + xi (y-mu)/sigma)^{-1/xi} returns to the x scale.
    """

    mu: float
    sigma: float
    xi: float
    tag = "gev"
    increasing = False

    def __post_init__(self):
        if not (self.sigma > 0):
            raise ValidationError(f"sigma must be positive, got {self.sigma}")
        if self.xi == 0:
            raise ValidationError("xi must be nonzero (the xi -> 0 limit is NegLogAffine)")

    def support(self, mu):
        edge = self.mu - self.sigma / self.xi
        return (edge, np.inf) if self.xi > 0 else (-np.inf, edge)

    def to_x(self, y, mu):
        w = 1.0 + self.xi * (np.asarray(y, dtype=float) - self.mu) / self.sigma
        with np.errstate(over="ignore"):
            return np.exp(-np.log(w) / self.xi)

    def from_x(self, x, mu):
        x = np.asarray(x, dtype=float)
        return self.mu + self.sigma * np.expm1(-self.xi * np.log(x)) / self.xi

    def jac(self, y, mu):
        z = self.to_x(y, mu)
        return z ** (self.xi + 1.0) / self.sigma

    def resolved_key(self, mu):
        return ("gev", self.mu, self.sigma, self.xi)


@dataclass(frozen=True)
class ShiftedTransform:
    """g composed with a location shift on the x scale: y = g(x + shift).

    This is what fitting to shifted transformed data produces: the base
    law describes U = g^{-1}(Y) - shift.  The Jacobian of g^{-1} is
    unchanged; only the support and the x <-> y maps move.
    """

    inner: object
    shift: float

    def __post_init__(self):
        if not np.isfinite(self.shift):
            raise ValidationError(f"shift must be finite, got {self.shift}")

    @property
    def tag(self):
        return self.inner.tag

    @property
    def increasing(self):
        return self.inner.increasing

    def support(self, mu):
        lo, hi = self.inner.support(mu)
        with np.errstate(divide="ignore"):
            edge = float(self.inner.from_x(self.shift, mu))
        return (edge, hi) if self.inner.increasing else (lo, edge)

    def to_x(self, y, mu):
        return self.inner.to_x(y, mu) - self.shift

    def from_x(self, x, mu):
        return self.inner.from_x(np.asarray(x, dtype=float) + self.shift, mu)

    def jac(self, y, mu):
        return self.inner.jac(y, mu)

    def resolved_key(self, mu):
        return ("shifted", self.inner.resolved_key(mu), self.shift)


# ---------------------------------------------------------------------------
# transformed distribution values
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TransformedPH:
    """Y = g(X) for X ~ base and g given by the transform.

    ``mu`` caches the base mean (the ParetoExp default scale); ``x_cap``
    is the point beyond which the base survival underflows to zero, used
    to keep never-observed u = g^{-1}(y) values finite.
    """

    base: PHDist
    transform: object
    mu: float = field(init=False, repr=False)
    x_cap: float = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "mu", ph_mean(self.base))
        eta = float(np.max(np.linalg.eigvals(self.base.T).real))
        object.__setattr__(self, "x_cap", 1500.0 / max(-eta, 1e-300))


def tph_new(base: PHDist, transform) -> TransformedPH:
    if not isinstance(base, PHDist):
        raise ValidationError("base must be a PHDist")
    if not isinstance(transform, (ParetoExp, Power, NegLogAffine, ShiftedPower, ShiftedTransform)):
        raise ValidationError(f"unknown transform {transform!r}")
    return TransformedPH(base, transform)


def _as_points(y):
    y_arr = np.asarray(y, dtype=float)
    return y_arr.ndim == 0, np.atleast_1d(y_arr).astype(float)


def tph_sf(d: TransformedPH, y):
    """P(Y > y); 1 left of the support, 0 right of it."""
    scalar, ys = _as_points(y)
    g = d.transform
    lo, hi = g.support(d.mu)
    out = np.empty(ys.shape)
    out[ys <= lo] = 1.0
    out[ys >= hi] = 0.0
    inside = (ys > lo) & (ys < hi)
    if np.any(inside):
        u = np.asarray(g.to_x(ys[inside], d.mu), dtype=float)
        capped = ~(u < d.x_cap)
        u = np.where(capped, d.x_cap, u)
        s = ph_sf(d.base, u)
        s = np.where(capped, 0.0, s)
        out[inside] = s if g.increasing else 1.0 - s
    return float(out[0]) if scalar else out


def tph_cdf(d: TransformedPH, y):
    return 1.0 - tph_sf(d, y)


def tph_pdf(d: TransformedPH, y):
    """Density pi e^{T g^{-1}(y)} t |d g^{-1}/dy|; 0 outside the support."""
    scalar, ys = _as_points(y)
    g = d.transform
    lo, hi = g.support(d.mu)
    out = np.zeros(ys.shape)
    inside = (ys > lo) & (ys < hi)
    if g.increasing and lo == 0.0:
        inside = inside | (ys == 0.0)  # boundary density is finite here
    if np.any(inside):
        u = np.asarray(g.to_x(ys[inside], d.mu), dtype=float)
        capped = ~(u < d.x_cap)
        with np.errstate(invalid="ignore", over="ignore"):
            vals = ph_pdf(d.base, np.where(capped, d.x_cap, u)) * g.jac(ys[inside], d.mu)
        out[inside] = np.where(capped, 0.0, vals)
    return float(out[0]) if scalar else out


def tph_sample(d: TransformedPH, rng: np.random.Generator, count: int) -> np.ndarray:
    """g applied elementwise to jump-chain draws from the base."""
    return d.transform.from_x(ph_sample(d.base, rng, count), d.mu)


def tph_quantile(d: TransformedPH, q):
    """Quantile of Y by monotone mapping of the base quantile."""
    scalar, qs = _as_points(q)
    if d.transform.increasing:
        xs = ph_quantile(d.base, qs)
    else:
        if np.any(qs <= 0):
            raise DomainError("quantile level must be positive for decreasing transforms")
        xs = ph_quantile(d.base, 1.0 - qs)
    out = d.transform.from_x(xs, d.mu)
    return float(out[0]) if scalar else np.asarray(out, dtype=float)


def _expect(d: TransformedPH, cls, op: str):
    if not isinstance(d.transform, cls):
        raise ValidationError(
            f"{op} needs a {cls.__name__} transform, got {type(d.transform).__name__}"
        )


# ---------------------------------------------------------------------------
# matrix-Pareto operations
# ---------------------------------------------------------------------------

def mp_conditional_excess(d: TransformedPH, x: float) -> TransformedPH:
    """Law of Y - x given Y > x: matrix-Pareto again, threshold-stable.

    The scale grows to beta + mu x and the start vector is reweighted by
    (1 + mu x / beta)^T.
    """
    _expect(d, ParetoExp, "mp_conditional_excess")
    x = float(x)
    if x < 0:
        raise DomainError(f"threshold must be nonnegative, got {x}")
    if x == 0.0:
        return d
    base, g = d.base, d.transform
    c = g.scale(d.mu)
    u = math.log1p(x / c)
    alpha = base.pi @ _expm_of(base.T * u)
    denom = float(alpha @ base.close)
    if not (denom > 1e-300):
        raise DegenerateConditioningError(
            f"survival at threshold {x} is {denom:.3e}; conditioning is degenerate"
        )
    alpha = alpha / denom
    if base.markov:
        alpha = np.maximum(alpha, 0.0)
        alpha /= alpha.sum()
        new_base = ph_new(alpha, base.T, markov=True)
    else:
        new_base = ph_new(alpha, base.T, markov=False, exit=base.exit)
    # scale c' = c + x corresponds to beta' = beta + mu x
    return tph_new(new_base, ParetoExp(beta=(c + x) * ph_mean(new_base)))


def _expm_of(A):
    from .matfun import mat_exp

    return mat_exp(A)


def mp_laplace(d: TransformedPH, s: float) -> float:
    """Laplace transform E e^{-sY} = e^a pi a^{-T} Gamma(T, a) t, a = s beta/mu.

    For a > 50 the incomplete-gamma factor underflows against the e^a
    overflow, so the transform is evaluated by quadrature pulled back to
    the x scale (the integrand e^{-s g(x)} f_X(x) is bounded by f_X).
    """
    _expect(d, ParetoExp, "mp_laplace")
    s = float(s)
    if not (s > 0):
        raise DomainError(f"Laplace argument must be positive, got {s}")
    c = d.transform.scale(d.mu)
    a = s * c
    base = d.base
    if a > 50.0:
        # substitute v = a(e^x - 1): the integrand e^{-v} f_X(log1p(v/a))/(a+v)
        # lives on the unit scale however large a is
        val, _ = quad(
            lambda v: math.exp(-v) * ph_pdf(base, math.log1p(v / a)) / (a + v),
            0.0,
            np.inf,
            limit=200,
        )
        return float(val) if val >= 1e-300 else 0.0
    from .matfun import mat_power_base

    Minv = mat_power_base(1.0 / a, base.T)
    G = upper_inc_gamma_mat(base.T, a)
    return float(math.exp(a) * (base.pi @ Minv @ G @ base.exit))


def mp_shifted_frac_moment(d: TransformedPH, alpha: float) -> float:
    """E((mu Y / beta + 1)^alpha) = pi (-alpha I - T)^{-1} t.

    Finite exactly when the spectral bound of T lies strictly below
    -alpha; otherwise the moment diverges (power tail).
    """
    _expect(d, ParetoExp, "mp_shifted_frac_moment")
    alpha = float(alpha)
    if not (alpha > 0):
        raise DomainError(f"moment order must be positive, got {alpha}")
    T = d.base.T
    bound = float(np.max(np.linalg.eigvals(T).real))
    if bound >= -alpha:
        raise DivergentMomentError(
            f"moment of order {alpha} is infinite: spectral bound {bound:.6g} >= {-alpha}"
        )
    p = T.shape[0]
    val = d.base.pi @ np.linalg.solve(-alpha * np.eye(p) - T, d.base.exit)
    return float(val)


# ---------------------------------------------------------------------------
# matrix-Weibull operations
# ---------------------------------------------------------------------------

def mw_moment(d: TransformedPH, theta: float) -> float:
    """E(Y^theta) = Gamma(1 + theta/beta) pi (-T)^{-theta/beta - 1} t."""
    _expect(d, Power, "mw_moment")
    theta = float(theta)
    if not (theta > 0):
        raise DomainError(f"moment order must be positive, got {theta}")
    beta = d.transform.beta
    M = mat_fun(-d.base.T, power_function(-theta / beta - 1.0))
    return math.gamma(1.0 + theta / beta) * float(d.base.pi @ M @ d.base.exit)


def mw_mgf(d: TransformedPH, theta: float, max_terms: int = 400) -> tuple[float, bool]:
    """Moment generating function as the power-moment series.

    E e^{theta Y} = sum_n theta^n/n! Gamma(1+n/beta) pi (-T)^{-n/beta-1} t,
    convergent for beta > 1.  Terms are accumulated until one falls below
    1e-14 of the partial sum; hitting ``max_terms`` first raises, carrying
    the last term magnitude.  Returns (value, converged).
    """
    _expect(d, Power, "mw_mgf")
    beta = d.transform.beta
    if not (beta > 1):
        raise DomainError(f"the series requires beta > 1, got beta = {beta}")
    theta = float(theta)
    negT = -d.base.T
    pi, t = d.base.pi, d.base.exit
    total = 0.0
    log_abs_theta = -math.inf if theta == 0.0 else math.log(abs(theta))
    for n in range(max_terms):
        if n == 0:
            term = float(pi @ d.base.close)  # Gamma(1) * pi (-T)^{-1} t
        else:
            M = mat_fun(negT, power_function(-n / beta - 1.0))
            mom = float(pi @ M @ t)
            # theta^n / n! * Gamma(1+n/beta) in log form; n! overflows past 170
            log_mag = n * log_abs_theta - math.lgamma(n + 1.0) + math.lgamma(1.0 + n / beta)
            sign = -1.0 if (theta < 0 and n % 2 == 1) else 1.0
            term = sign * math.exp(log_mag) * mom
        total += term
        if n >= 1 and abs(term) < 1e-14 * abs(total):
            return total, True
    raise NonConvergenceError(
        f"series did not converge in {max_terms} terms", last_term=abs(term)
    )


# ---------------------------------------------------------------------------
# matrix-Gumbel operations
# ---------------------------------------------------------------------------

def ep_mean(d: TransformedPH) -> float:
    """E(Y) = mu + sigma gamma + sigma pi log(-T) e."""
    _expect(d, NegLogAffine, "ep_mean")
    g = d.transform
    base = d.base
    if base.markov:
        L = mat_log_neg(base.T)
    else:
        L = mat_fun(-base.T, _log_function())
    return g.mu + g.sigma * EULER_GAMMA + g.sigma * float(base.pi @ L @ base.close)


def _log_function():
    from .matfun import AnalyticFunction

    def deriv(z, k):
        return (-1.0) ** (k - 1) * math.factorial(k - 1) * complex(z) ** (-k)

    return AnalyticFunction(lambda z: np.log(complex(z)), deriv, name="log")


def ep_laplace(d: TransformedPH, s: float) -> float:
    """E e^{-sY} = e^{-mu s} Gamma(1 + s sigma) pi (-T)^{-s sigma} e."""
    _expect(d, NegLogAffine, "ep_laplace")
    g = d.transform
    s = float(s)
    if not (s * g.sigma > -1.0):
        raise DomainError(
            f"requires s*sigma > -1 (gamma pole), got s*sigma = {s * g.sigma}"
        )
    if s == 0.0:
        return 1.0
    M = mat_fun(-d.base.T, power_function(-s * g.sigma))
    return math.exp(-g.mu * s) * math.gamma(1.0 + s * g.sigma) * float(
        d.base.pi @ M @ d.base.close
    )


# ---------------------------------------------------------------------------
# matrix-GEV operations
# ---------------------------------------------------------------------------

def sp_mean(d: TransformedPH) -> float:
    """E(Y) = mu + (sigma/xi)(Gamma(1-xi) pi (-T)^{xi} e - 1), finite for xi < 1."""
    _expect(d, ShiftedPower, "sp_mean")
    g = d.transform
    if g.xi >= 1.0:
        raise DivergentMomentError(f"mean is infinite for xi >= 1, got xi = {g.xi}")
    M = mat_fun(-d.base.T, power_function(g.xi))
    val = math.gamma(1.0 - g.xi) * float(d.base.pi @ M @ d.base.close)
    return g.mu + g.sigma / g.xi * (val - 1.0)


# ---------------------------------------------------------------------------
# Erlang closed forms (test oracles) and mixtures
# ---------------------------------------------------------------------------

def erlang_oracle(family: str, n: int, lam: float, y, mu: float = 0.0,
                  sigma: float = 1.0, xi: float = 0.5, beta: float = 1.0):
    """Closed-form transformed-Erlang densities, used as test oracles.

    All four carry the lambda^n factor that direct change of variables
    from the Erlang density produces.
    """
    if n < 1 or n != int(n):
        raise DomainError(f"n must be a positive integer, got {n}")
    if not (lam > 0):
        raise DomainError(f"lambda must be positive, got {lam}")
    y = np.asarray(y, dtype=float)
    coeff = lam**n / math.factorial(n - 1)
    if family == "pareto":
        ly = np.log1p(y)
        return np.where(y >= 0, coeff * (1.0 + y) ** (-lam - 1.0) * ly ** (n - 1), 0.0)
    if family == "weibull":
        if not (beta > 0):
            raise DomainError(f"beta must be positive, got {beta}")
        return np.where(
            y > 0, beta * coeff * y ** (n * beta - 1.0) * np.exp(-lam * y**beta), 0.0
        )
    if family == "gumbel":
        if not (sigma > 0):
            raise DomainError(f"sigma must be positive, got {sigma}")
        w = np.exp(-(y - mu) / sigma)
        return (1.0 / sigma) * coeff * w**n * np.exp(-lam * w)
    if family == "gev":
        if not (sigma > 0) or xi == 0:
            raise DomainError(f"need sigma > 0 and xi != 0, got sigma={sigma}, xi={xi}")
        w = 1.0 + xi * (y - mu) / sigma
        with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
            z = np.where(w > 0, w ** (-1.0 / xi), np.inf)
            out = (1.0 / sigma) * coeff * z ** (xi + n) * np.exp(-lam * z)
        return np.where(w > 0, out, 0.0)
    raise DomainError(f"unknown family {family!r}")


def mixture_density(weights, components, y):
    """Weighted sum of component densities sharing one transform.

    Equal, by construction, to the density of the single TransformedPH
    built over mixture_rep of the bases; the transforms must resolve to
    the same g, since a mixture only collapses to one transformed law
    when every component is pushed through the same map.
    """
    w = np.asarray(list(weights), dtype=float)
    comps = list(components)
    if w.size != len(comps) or w.size == 0:
        raise ValidationError("weights and components must be nonempty and of equal length")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise ValidationError("weights must form a probability vector")
    keys = {c.transform.resolved_key(c.mu) for c in comps}
    if len(keys) > 1:
        raise ValidationError(f"components must share one transform, got {sorted(keys)}")
    y = np.asarray(y, dtype=float)
    total = np.zeros(y.shape)
    for wi, c in zip(w, comps):
        total = total + wi * tph_pdf(c, y)
    return float(total) if total.ndim == 0 else total


def mixture_tph(weights, components) -> TransformedPH:
    """The same mixture as one TransformedPH over mixture_rep of the bases."""
    comps = list(components)
    keys = {c.transform.resolved_key(c.mu) for c in comps}
    if len(keys) > 1:
        raise ValidationError(f"components must share one transform, got {sorted(keys)}")
    base = mixture_rep(weights, [c.base for c in comps])
    tr = comps[0].transform
    if isinstance(tr, ParetoExp):
        # pin the shared scale explicitly; the mixed base has its own mean
        tr = ParetoExp(beta=tr.scale(comps[0].mu) * ph_mean(base))
    return tph_new(base, tr)
