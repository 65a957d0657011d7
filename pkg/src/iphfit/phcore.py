"""Classical (homogeneous) phase-type distributions.

Construction and validation of PH representations, Erlang and mixture
builders, density/survival/moment evaluation, quantiles, and jump-chain
sampling.

A representation is the triple (pi, T, t): initial probabilities, the
sub-intensity matrix of the transient states, and the exit-rate vector.
For a probabilistic (Markov) representation t is forced to -T e.  The
density and survival function are

    f(x) = pi e^{Tx} t,        1 - F(x) = pi e^{Tx} (-T)^{-1} t,

where the closing vector (-T)^{-1} t reduces to the all-ones vector for
Markov representations.  Matrix-exponential (ME) representations that are
not phase-type are admitted under ``markov=False`` with weak, grid-based
validation; for those the exit vector may be supplied explicitly (the
textbook oscillating-density example needs this).

Evaluation over arrays is routed through one of three backends: a closed
form for one phase, positive-series uniformization for Markov generators
(no cancellation, preserves relative accuracy), and an eigen-decomposition
for diagonalizable non-Markov representations, with per-point matrix
exponentials as the last resort.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DomainError,
    UnsupportedRepresentationError,
    ValidationError,
)
from .matfun import (
    MAX_DIM,
    check_square,
    check_sub_intensity,
    mat_exp,
    mat_fun,
    mat_log_neg,
    power_function,
)

__all__ = [
    "PHDist",
    "ph_new",
    "erlang_rep",
    "gen_erlang_rep",
    "mixture_rep",
    "ph_pdf",
    "ph_cdf",
    "ph_sf",
    "ph_mean",
    "ph_frac_moment",
    "ph_log_moment",
    "ph_quantile",
    "ph_sample",
]

EULER_GAMMA = float(np.euler_gamma)

# uniformization: points with q*x beyond this go through per-point expm
# (the Poisson weights would underflow); below it the series is exact to
# round-off because every term is nonnegative.
_UNIF_MAX_QX = 600.0


@dataclass(frozen=True)
class PHDist:
    """A validated phase-type (or matrix-exponential) representation.

    Build through :func:`ph_new` or the representation builders; the
    constructor itself performs no checking.  ``close`` is the closing
    vector (-T)^{-1} t, exactly the all-ones vector when ``markov``.
    """

    pi: np.ndarray
    T: np.ndarray
    exit: np.ndarray
    markov: bool
    close: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.T.shape[0]


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

def ph_new(pi, T, markov: bool = True, exit=None) -> PHDist:
    """Validate and build a PH / ME representation.

    Parameters
    ----------
    pi, T : array_like
        Initial vector and sub-intensity matrix.
    markov : bool
        When true, enforce the probabilistic constraints (pi a probability
        vector, T a sub-intensity matrix, exits nonnegative) and derive
        t = -T e.  When false, admit any matrix-exponential triple whose
        density is nonnegative on a validation grid and integrates to one.
    exit : array_like, optional
        Explicit exit-rate vector; only allowed for ME representations.
    """
    pi = np.atleast_1d(np.asarray(pi, dtype=float))
    if pi.ndim != 1:
        raise ValidationError("pi must be a vector")
    p = pi.shape[0]
    if markov:
        if exit is not None:
            raise ValidationError("a Markov representation derives its exit vector from T")
        T = check_sub_intensity(T)
        if T.shape[0] != p:
            raise ValidationError(f"pi has length {p} but T is {T.shape[0]}x{T.shape[0]}")
        if np.any(pi < -1e-15):
            i = int(np.argmin(pi))
            raise ValidationError(f"pi[{i}] = {pi[i]} is negative")
        pi = np.maximum(pi, 0.0)
        total = pi.sum()
        if abs(total - 1.0) > 1e-12:
            raise ValidationError(f"pi sums to {total}, not 1 (atom at zero not supported)")
        t = -T.sum(axis=1)
        t = np.maximum(t, 0.0)  # round-off from row sums
        return PHDist(pi, T, t, True, np.ones(p))

    T = check_square(T)
    if T.shape[0] != p:
        raise ValidationError(f"pi has length {p} but T is {T.shape[0]}x{T.shape[0]}")
    if p > MAX_DIM:
        raise ValidationError(f"order {p} exceeds the supported maximum {MAX_DIM}")
    eigs = np.linalg.eigvals(T)
    if np.max(eigs.real) >= 0:
        raise ValidationError("matrix-exponential representation needs all eigenvalues in Re < 0")
    t = -T.sum(axis=1) if exit is None else np.asarray(exit, dtype=float)
    if t.shape != (p,):
        raise ValidationError(f"exit vector must have length {p}")
    close = np.linalg.solve(-T, t)
    total = float(pi @ close)
    if abs(total - 1.0) > 1e-6:
        raise ValidationError(f"density integrates to {total}, not 1")
    d = PHDist(pi, T, t, False, close)
    # weak validation: nonnegative density on a grid reaching far into the tail
    decay = float(np.max(eigs.real))
    grid = np.linspace(0.0, np.log(1e12) / -decay, 1024)
    dens = _exp_action(d, grid, t)
    floor = -1e-10 * max(1.0, float(np.max(np.abs(dens))))
    if np.min(dens) < floor:
        x_bad = grid[int(np.argmin(dens))]
        raise ValidationError(
            f"matrix-exponential density is negative near x = {x_bad:.6g}"
        )
    return d


def erlang_rep(n: int, lam: float) -> PHDist:
    """Erlang(n, lam) as the canonical feed-forward representation."""
    if n < 1 or n != int(n):
        raise ValidationError(f"Erlang phase count must be a positive integer, got {n}")
    if not (lam > 0):
        raise ValidationError(f"Erlang rate must be positive, got {lam}")
    return gen_erlang_rep([float(lam)] * int(n))


def gen_erlang_rep(lambdas) -> PHDist:
    """Generalized Erlang: a sum of independent exponentials with given rates."""
    lams = np.asarray(list(lambdas), dtype=float)
    if lams.size == 0:
        raise ValidationError("at least one rate is required")
    if np.any(lams <= 0):
        raise ValidationError("all rates must be positive")
    n = lams.size
    T = np.diag(-lams)
    for i in range(n - 1):
        T[i, i + 1] = lams[i]
    pi = np.zeros(n)
    pi[0] = 1.0
    return ph_new(pi, T, markov=True)


def mixture_rep(weights, components) -> PHDist:
    """Finite mixture of PH laws as one block-diagonal representation."""
    w = np.asarray(list(weights), dtype=float)
    comps = list(components)
    if w.size != len(comps) or w.size == 0:
        raise ValidationError("weights and components must be nonempty and of equal length")
    if np.any(w < 0):
        raise ValidationError("mixture weights must be nonnegative")
    if abs(w.sum() - 1.0) > 1e-12:
        raise ValidationError(f"mixture weights sum to {w.sum()}, not 1")
    if len(comps) == 1:
        return comps[0]
    dims = [c.dim for c in comps]
    p = int(np.sum(dims))
    T = np.zeros((p, p))
    pi = np.zeros(p)
    exit_cat = np.zeros(p)
    at = 0
    for wi, c in zip(w, comps):
        d = c.dim
        T[at : at + d, at : at + d] = c.T
        pi[at : at + d] = wi * c.pi
        exit_cat[at : at + d] = c.exit
        at += d
    if all(c.markov for c in comps):
        return ph_new(pi, T, markov=True)
    return ph_new(pi, T, markov=False, exit=exit_cat)


# ---------------------------------------------------------------------------
# evaluation backends
# ---------------------------------------------------------------------------

def _exp_action(d: PHDist, xs: np.ndarray, v: np.ndarray) -> np.ndarray:
    """pi e^{Tx} v for an array of nonnegative x."""
    xs = np.asarray(xs, dtype=float)
    pi, T = d.pi, d.T
    p = d.dim
    if p == 1:
        return pi[0] * v[0] * np.exp(T[0, 0] * xs)
    if d.markov:
        return _unif_action(pi, T, v, xs)
    vals, V = np.linalg.eig(T)
    if np.linalg.cond(V) < 1e7:
        w = (pi @ V) * np.linalg.solve(V, v.astype(complex))
        return (np.exp(np.multiply.outer(xs, vals)) @ w).real
    return np.array([float(pi @ mat_exp(T * x) @ v) for x in xs])


def _unif_action(pi, T, v, xs):
    """Uniformization series; all terms nonnegative for Markov generators."""
    q = 1.0000001 * float(np.max(-np.diag(T)))
    qx = q * xs
    out = np.empty_like(xs)
    big = qx > _UNIF_MAX_QX
    if np.any(big):
        out[big] = [float(pi @ mat_exp(T * x) @ v) for x in xs[big]]
    small = ~big
    if np.any(small):
        m = float(np.max(qx[small]))
        K = int(m + 12.0 * np.sqrt(m) + 30.0)
        P = np.eye(len(pi)) + T / q
        coeffs = np.empty(K + 1)
        u = pi.copy()
        for k in range(K + 1):
            coeffs[k] = u @ v
            u = u @ P
        # Poisson weights built by the stable forward recurrence
        qxs = qx[small]
        W = np.empty((qxs.size, K + 1))
        W[:, 0] = np.exp(-qxs)
        for k in range(1, K + 1):
            W[:, k] = W[:, k - 1] * qxs / k
        out[small] = W @ coeffs
    return out


def _eval(d: PHDist, x, v: np.ndarray, clamp=None):
    x_arr = np.asarray(x, dtype=float)
    scalar = x_arr.ndim == 0
    x_arr = np.atleast_1d(x_arr)
    invalid = (x_arr < 0) | ~np.isfinite(x_arr)
    if np.any(invalid):
        bad = x_arr[invalid][0]
        raise DomainError(f"evaluation point must be a finite nonnegative real, got {bad}")
    out = _exp_action(d, x_arr, v)
    if clamp is not None:
        out = np.clip(out, clamp[0], clamp[1])
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# density, distribution, moments
# ---------------------------------------------------------------------------

def ph_pdf(d: PHDist, x):
    """Density pi e^{Tx} t at x >= 0 (scalar or array)."""
    return _eval(d, x, d.exit, clamp=(0.0, np.inf))


def ph_sf(d: PHDist, x):
    """Survival probability P(X > x)."""
    return _eval(d, x, d.close, clamp=(0.0, 1.0))


def ph_cdf(d: PHDist, x):
    """Distribution function 1 - ph_sf."""
    return 1.0 - ph_sf(d, x)


def ph_mean(d: PHDist) -> float:
    """E(X) = pi (-T)^{-1} e (closing vector for ME representations)."""
    return float(d.pi @ np.linalg.solve(-d.T, d.close))


def ph_frac_moment(d: PHDist, theta: float) -> float:
    """Fractional moment E(X^theta) = Gamma(1+theta) pi (-T)^{-theta} e.

    Finite for every theta > -1 regardless of the tail, since phase-type
    tails are exponentially bounded.
    """
    if not (theta > -1):
        raise DomainError(f"fractional moment requires theta > -1, got {theta}")
    import math

    M = mat_fun(-d.T, power_function(-theta))
    return math.gamma(1.0 + theta) * float(d.pi @ M @ d.close)


def ph_log_moment(d: PHDist) -> float:
    """E(log X) = -gamma - pi log(-T) e."""
    if not d.markov:
        # the identity only needs the ME closing vector in place of e
        L = mat_fun(-d.T, _log_fun())
        return -EULER_GAMMA - float(d.pi @ L @ d.close)
    return -EULER_GAMMA - float(d.pi @ mat_log_neg(d.T) @ d.close)


def _log_fun():
    import math

    def deriv(z, k):
        return (-1.0) ** (k - 1) * math.factorial(k - 1) * np.power(complex(z), -k)

    from .matfun import AnalyticFunction

    return AnalyticFunction(lambda z: np.log(complex(z)), deriv, name="log")


# ---------------------------------------------------------------------------
# quantiles
# ---------------------------------------------------------------------------

def ph_quantile(d: PHDist, q, rel_tol: float = 1e-10):
    """Quantile via bisection on ph_sf; bracket grows by doubling."""
    q_arr = np.asarray(q, dtype=float)
    scalar = q_arr.ndim == 0
    q_arr = np.atleast_1d(q_arr)
    if np.any((q_arr < 0) | (q_arr >= 1)):
        raise DomainError("quantile level must lie in [0, 1)")
    target = 1.0 - q_arr
    hi = np.full(q_arr.shape, max(ph_mean(d), 1e-3))
    for _ in range(200):
        mask = ph_sf(d, hi) > target
        if not np.any(mask):
            break
        hi[mask] *= 2.0
    else:
        raise DomainError("quantile bracket did not close; level too extreme")
    lo = np.zeros_like(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        above = ph_sf(d, mid) > target
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
        if np.all(hi - lo <= rel_tol * np.maximum(hi, 1e-30)):
            break
    out = 0.5 * (lo + hi)
    out = np.where(q_arr == 0.0, 0.0, out)
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def ph_sample(d: PHDist, rng: np.random.Generator, count: int) -> np.ndarray:
    """Absorption times of the underlying jump chain, vectorized in waves.

    Start states are drawn from pi; in each wave all still-active chains
    hold an exponential time in their current state and then jump, with
    exit probabilities t_i / (-T_ii).
    """
    if not d.markov:
        raise UnsupportedRepresentationError(
            "sampling requires a Markov representation (markov=True)"
        )
    if count < 0:
        raise DomainError("count must be nonnegative")
    p = d.dim
    rates = -np.diag(d.T)
    jump = np.concatenate([d.T - np.diag(np.diag(d.T)), d.exit[:, None]], axis=1)
    jump = jump / rates[:, None]
    jump = np.maximum(jump, 0.0)
    jump /= jump.sum(axis=1, keepdims=True)

    pi = d.pi / d.pi.sum()
    states = rng.choice(p, size=count, p=pi)
    times = np.zeros(count)
    active = np.arange(count)
    while active.size:
        s = states[active]
        times[active] += rng.exponential(1.0, active.size) / rates[s]
        nxt = np.empty(active.size, dtype=np.int64)
        for i in np.unique(s):
            sel = s == i
            nxt[sel] = rng.choice(p + 1, size=int(sel.sum()), p=jump[i])
        states[active] = np.minimum(nxt, p - 1)
        active = active[nxt < p]
    return times
