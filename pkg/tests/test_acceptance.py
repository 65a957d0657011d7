"""Acceptance gate: ten end-to-end criteria, one pass/fail line each.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines; each test also fails loudly on its own, so plain ``pytest -v``
gives the same verdicts through test outcomes.
"""

import json
import math
import time

import numpy as np
import pytest
import scipy.integrate
import scipy.linalg as sla

from iphfit.cli import eval_cmd, main
from iphfit.emfit import FitConfig, fit_erlang_rate, fit_ph_em, fit_transformed, ph_loglik
from iphfit.errors import DivergentMomentError
from iphfit.families import (
    NegLogAffine,
    ParetoExp,
    Power,
    ShiftedPower,
    ep_laplace,
    ep_mean,
    mp_conditional_excess,
    mp_laplace,
    mp_shifted_frac_moment,
    mw_moment,
    sp_mean,
    tph_cdf,
    tph_new,
    tph_pdf,
    tph_quantile,
    tph_sample,
    tph_sf,
)
from iphfit.iph import (
    constant_rate,
    iph_general_sf,
    piecewise_path,
    power_rate,
    product_integral,
    scaled_path,
    thinning_sample,
)
from iphfit.modelio import load_model, save_model
from iphfit.phcore import erlang_rep, gen_erlang_rep, ph_new, ph_sample

from oracles import (
    gen_erlang_pareto_pdf,
    gev_cdf,
    gev_pdf,
    gumbel_cdf,
    gumbel_pdf,
    ks_critical,
    ks_distance,
    left_product,
    log_erlang_pdf,
    log_erlang_sf,
    random_probability,
    random_sub_intensity,
    weibull_cdf,
    weibull_pdf,
)


def report(num, name, ok, detail=""):
    line = f"[criterion {num:2d}] {'PASS' if ok else 'FAIL'} {name}"
    if detail:
        line += f" ({detail})"
    print(line)
    assert ok, line


def rel_err(got, want, floor=1e-300):
    got = np.asarray(got, dtype=float)
    want = np.asarray(want, dtype=float)
    return np.max(np.abs(got - want) / np.maximum(np.abs(want), floor))


def test_criterion_01_log_erlang_oracle():
    t0 = time.perf_counter()
    ys = np.linspace(0.0, 50.0, 200)
    worst_pdf = worst_sf = 0.0
    for n in range(1, 6):
        for lam in (0.5, 1.0, 3.0):
            d = tph_new(erlang_rep(n, lam), ParetoExp())
            worst_pdf = max(worst_pdf, rel_err(tph_pdf(d, ys), log_erlang_pdf(n, lam, ys)))
            worst_sf = max(worst_sf, rel_err(tph_sf(d, ys), log_erlang_sf(n, lam, ys)))
    elapsed = time.perf_counter() - t0
    ok = worst_pdf <= 1e-10 and worst_sf <= 1e-10 and elapsed < 5.0
    report(1, "log-Erlang density and survival oracle", ok,
           f"pdf {worst_pdf:.2e}, sf {worst_sf:.2e}, {elapsed:.2f}s")


def test_criterion_02_matrix_exponential_example():
    t0 = time.perf_counter()
    pi = np.array([101.0, 0.0, 0.0])
    T = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [-101.0, -103.0, -3.0]])
    exit_vec = np.array([0.0, 0.0, 1.0])
    d = tph_new(ph_new(pi, T, markov=False, exit=exit_vec), ParetoExp())
    ys = np.linspace(0.0, 20.0, 400)
    want = 1.01 * (1.0 + ys) ** -2 * (1.0 - np.cos(10.0 * np.log1p(ys)))
    got = tph_pdf(d, ys)
    mask = want > 1e-6
    worst = rel_err(got[mask], want[mask])
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and elapsed < 2.0
    report(2, "oscillating matrix-exponential density", ok,
           f"rel {worst:.2e}, {elapsed:.2f}s")


def test_criterion_03_generalized_erlang_oracle():
    rates = (1.0, 2.0, 4.0)
    d = tph_new(gen_erlang_rep(rates), ParetoExp())
    ys = np.linspace(0.0, 20.0, 200)
    want = gen_erlang_pareto_pdf(rates, ys)
    got = tph_pdf(d, ys)
    big = np.abs(want) > 1e-12
    worst = rel_err(got[big], want[big])
    residual = np.max(np.abs(got - want)[~big]) if np.any(~big) else 0.0
    ok = worst <= 1e-9 and residual <= 1e-12
    report(3, "generalized-Erlang partial fractions", ok, f"rel {worst:.2e}")


def test_criterion_04_heavy_tail_identity_suite():
    d = tph_new(erlang_rep(3, 2.0), ParetoExp())

    # (a)/(b) survival derivative equals negated density
    qs = tph_quantile(d, np.linspace(0.05, 0.95, 19))
    h = 1e-5 * np.maximum(qs, 1.0)
    numeric = (tph_sf(d, qs - h) - tph_sf(d, qs + h)) / (2.0 * h)
    worst_deriv = rel_err(numeric, tph_pdf(d, qs))

    # (c) conditional excess sf ratio
    x = 1.5
    exc = mp_conditional_excess(d, x)
    us = np.linspace(0.0, 8.0, 60)
    worst_exc = rel_err(tph_sf(exc, us), tph_sf(d, x + us) / tph_sf(d, x))

    # (d) Laplace transform against quadrature
    worst_lap = 0.0
    for s in (0.5, 1.0, 2.0):
        want, _ = scipy.integrate.quad(
            lambda y: math.exp(-s * y) * float(tph_pdf(d, y)), 0.0, np.inf, limit=400)
        worst_lap = max(worst_lap, abs(mp_laplace(d, s) - want) / abs(want))

    # (e) fractional moments up to the spectral bound, divergence at it
    worst_mom = 0.0
    for alpha in (0.5, 1.0, 1.5):
        want, _ = scipy.integrate.quad(
            lambda y: (1.0 + y) ** alpha * float(tph_pdf(d, y)), 0.0, np.inf, limit=800)
        worst_mom = max(worst_mom, abs(mp_shifted_frac_moment(d, alpha) - want) / abs(want))
    diverged = 0
    for alpha in (2.0, 2.5):
        with pytest.raises(DivergentMomentError):
            mp_shifted_frac_moment(d, alpha)
        diverged += 1

    ok = (worst_deriv <= 1e-4 and worst_exc <= 1e-9 and worst_lap <= 1e-6
          and worst_mom <= 1e-6 and diverged == 2)
    report(4, "heavy-tail identity suite", ok,
           f"deriv {worst_deriv:.2e}, excess {worst_exc:.2e}, "
           f"laplace {worst_lap:.2e}, moment {worst_mom:.2e}")


def test_criterion_05_scalar_reductions_and_moments():
    t0 = time.perf_counter()
    lam = 1.3
    base = erlang_rep(1, lam)

    dw = tph_new(base, Power(0.7))
    ys = np.linspace(0.01, float(tph_quantile(dw, 0.99)), 100)
    worst = rel_err(tph_pdf(dw, ys), weibull_pdf(lam, 0.7, ys))
    worst = max(worst, rel_err(tph_cdf(dw, ys), weibull_cdf(lam, 0.7, ys)))

    dg = tph_new(base, NegLogAffine(0.5, 0.8))
    ys = np.linspace(float(tph_quantile(dg, 0.01)), float(tph_quantile(dg, 0.99)), 100)
    worst = max(worst, rel_err(tph_pdf(dg, ys), gumbel_pdf(lam, 0.5, 0.8, ys)))
    worst = max(worst, rel_err(tph_cdf(dg, ys), gumbel_cdf(lam, 0.5, 0.8, ys)))

    for xi in (0.5, -0.4):
        dv = tph_new(base, ShiftedPower(1.0, 2.0, xi))
        lo = float(tph_quantile(dv, 0.001))
        ys = np.linspace(lo, float(tph_quantile(dv, 0.99)), 100)
        worst = max(worst, rel_err(tph_pdf(dv, ys), gev_pdf(lam, 1.0, 2.0, xi, ys)))
        worst = max(worst, rel_err(tph_cdf(dv, ys), gev_cdf(lam, 1.0, 2.0, xi, ys)))

    worst_mom = 0.0
    for base in (erlang_rep(2, 1.5), erlang_rep(3, 2.0)):
        dw = tph_new(base, Power(1.4))
        want, _ = scipy.integrate.quad(
            lambda y: y ** 1.7 * float(tph_pdf(dw, y)), 0.0, np.inf, limit=400)
        worst_mom = max(worst_mom, abs(mw_moment(dw, 1.7) - want) / abs(want))

        dg = tph_new(base, NegLogAffine(1.0, 0.6))
        want, _ = scipy.integrate.quad(
            lambda y: y * float(tph_pdf(dg, y)), -np.inf, np.inf, limit=400)
        worst_mom = max(worst_mom, abs(ep_mean(dg) - want) / abs(want))
        def lap_integrand(y):
            # the double-exponential left tail zeroes the density long
            # before exp(-s y) overflows
            dens = float(tph_pdf(dg, y))
            return 0.0 if dens == 0.0 else math.exp(-0.8 * y) * dens

        want, _ = scipy.integrate.quad(lap_integrand, -np.inf, np.inf, limit=400)
        worst_mom = max(worst_mom, abs(ep_laplace(dg, 0.8) - want) / abs(want))

        dv = tph_new(base, ShiftedPower(0.5, 1.0, 0.4))
        lo = float(tph_quantile(dv, 1e-9))
        want, _ = scipy.integrate.quad(
            lambda y: y * float(tph_pdf(dv, y)), lo, np.inf, limit=400)
        worst_mom = max(worst_mom, abs(sp_mean(dv) - want) / abs(want))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and worst_mom <= 1e-5 and elapsed < 30.0
    report(5, "scalar family reductions and matrix moments", ok,
           f"pdf/cdf {worst:.2e}, moments {worst_mom:.2e}, {elapsed:.1f}s")


def test_criterion_06_product_integral():
    t0 = time.perf_counter()
    T = np.array([[-2.0, 1.5], [0.3, -1.1]])

    path_c = scaled_path(constant_rate(1.7), T)
    worst = np.max(np.abs(product_integral(path_c, 0.0, 2.0) - sla.expm(1.7 * 2.0 * T)))

    path_p = scaled_path(power_rate(1.5), T)
    worst = max(worst, np.max(np.abs(
        product_integral(path_p, 0.0, 1.8) - sla.expm(1.8 ** 1.5 * T))))

    rng = np.random.default_rng(64)
    A = random_sub_intensity(rng, 3)
    B = random_sub_intensity(rng, 3)
    path_nc = piecewise_path([0.5], [A, B])
    refined = left_product(lambda u: A if u < 0.5 else B, 0.0, 1.0, 100_000)
    worst_nc = np.max(np.abs(product_integral(path_nc, 0.0, 1.0) - refined))

    base = erlang_rep(2, 1.5)
    pi = base.pi
    path_t = scaled_path(power_rate(1.2), base.T)
    n_paths = 1_000_000
    draws = thinning_sample(pi, path_t, 20.0, np.random.default_rng(2718), n_paths)
    worst_z = 0.0
    for x in (0.5, 1.0, 2.0):
        p = float(iph_general_sf(pi, path_t, x))
        se = math.sqrt(p * (1.0 - p) / n_paths)
        worst_z = max(worst_z, abs(np.mean(draws > x) - p) / se)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and worst_nc <= 1e-5 and worst_z <= 3.0 and elapsed < 60.0
    report(6, "product integral and thinning simulation", ok,
           f"expm {worst:.2e}, piecewise {worst_nc:.2e}, "
           f"thinning {worst_z:.2f} SE, {elapsed:.1f}s")


def test_criterion_07_sampling_ks():
    t0 = time.perf_counter()
    base = erlang_rep(3, 2.0)
    cases = [
        ("pareto", ParetoExp()),
        ("weibull", Power(1.4)),
        ("gumbel", NegLogAffine(1.0, 0.7)),
        ("gev", ShiftedPower(0.5, 1.0, 0.4)),
    ]
    n = 100_000
    crit = ks_critical(n, 0.01)
    worst_name, worst = "", 0.0
    for i, (name, tr) in enumerate(cases):
        d = tph_new(base, tr)
        samples = tph_sample(d, np.random.default_rng(8200 + i), n)
        dist = ks_distance(samples, lambda v: tph_cdf(d, v))
        if dist > worst:
            worst_name, worst = name, dist
    elapsed = time.perf_counter() - t0
    ok = worst < crit and elapsed < 20.0
    report(7, "sampling KS test, four families", ok,
           f"worst {worst:.4f} ({worst_name}) vs crit {crit:.4f}, {elapsed:.1f}s")


def test_criterion_08_em_fitting():
    t0 = time.perf_counter()

    # (i) monotone likelihood trace on random suite runs
    rng = np.random.default_rng(31)
    monotone = True
    for trial in range(3):
        p = int(rng.integers(2, 5))
        gen = ph_new(random_probability(rng, p), random_sub_intensity(rng, p))
        ys = ph_sample(gen, np.random.default_rng(500 + trial), 300)
        res = fit_ph_em(ys, FitConfig(phases=p, max_iters=60, seed=trial))
        monotone &= bool(np.all(np.diff(res.loglik_trace) >= -1e-10))

    # (ii) scalar fit collapses to the sample-mean rate
    ys = np.random.default_rng(77).exponential(0.7, 400)
    res1 = fit_ph_em(ys, FitConfig(phases=1, max_iters=10, seed=0))
    scalar_ok = abs(-res1.fitted.T[0, 0] - 1.0 / ys.mean()) <= 1e-12 / ys.mean()

    # (iii) structured init reaches the true likelihood within 1 nat
    gen = erlang_rep(3, 2.0)
    data = ph_sample(gen, np.random.default_rng(404), 5000)
    res3 = fit_ph_em(data, FitConfig(phases=3, max_iters=2000, init="structured"))
    gap = ph_loglik(gen, data) - res3.loglik
    nats_ok = gap <= 1.0 and res3.iterations_run <= 2000

    # (iv) transformed fit recovers the generator's tail
    gen_t = tph_new(gen, ParetoExp())
    xs = np.expm1(data)
    model, _ = fit_transformed(xs, ParetoExp(), 0.0,
                               FitConfig(phases=3, max_iters=2000, init="structured"))
    worst_sf = 0.0
    for q in (0.5, 0.9, 0.99):
        at = float(np.quantile(xs, q))
        worst_sf = max(worst_sf, abs(float(tph_sf(model, at)) - float(tph_sf(gen_t, at))))
    elapsed = time.perf_counter() - t0
    ok = monotone and scalar_ok and nats_ok and worst_sf <= 0.03 and elapsed < 300.0
    report(8, "EM fitting behavior", ok,
           f"monotone {monotone}, gap {gap:.3f} nats, sf dev {worst_sf:.4f}, {elapsed:.0f}s")


def test_criterion_09_erlang_rate_fit():
    lam0 = 2.0
    n = 4
    data = np.full(7, n / lam0)
    lam_hat, _ = fit_erlang_rate(data, n)
    exact = lam_hat == lam0

    lam_true = 3.0
    size = 1282
    draws = np.random.default_rng(1904).gamma(19, 1.0 / lam_true, size)
    lam_est, _ = fit_erlang_rate(draws, 19)
    band = 3.0 * lam_true / math.sqrt(19 * size)
    in_band = abs(lam_est - lam_true) <= band
    ok = exact and in_band
    report(9, "Erlang rate closed-form fit", ok,
           f"exact {exact}, est {lam_est:.4f} in {lam_true}±{band:.4f}")


def test_criterion_10_cli_end_to_end(tmp_path):
    rng = np.random.default_rng(2026)
    xs = np.expm1(rng.exponential(1.0 / 1.3, 400))
    data_path = tmp_path / "claims.csv"
    data_path.write_text("".join(f"{v:.12g}\n" for v in xs))

    def run(out):
        code = main([
            "fit", "--input", str(data_path), "--transform", "pareto",
            "--shift", "0.0", "--phases", "2", "--seed", "5",
            "--max-iters", "150", "--deterministic", "--out-dir", str(out),
        ])
        assert code == 0
        return (out / "params.json").read_bytes()

    first = run(tmp_path / "r1")
    second = run(tmp_path / "r2")
    deterministic = first == second

    model = load_model(tmp_path / "r1" / "params.json")
    round_trip = np.isfinite(float(tph_pdf(model, 1.0)))

    q = float(eval_cmd(str(tmp_path / "r1" / "params.json"), "quantile", 0.25))
    back = float(eval_cmd(str(tmp_path / "r1" / "params.json"), "sf", q))
    inverse_ok = abs(back - 0.75) <= 1e-9

    ok = deterministic and round_trip and inverse_ok
    report(10, "CLI fit determinism and eval round trip", ok,
           f"deterministic {deterministic}, inverse gap {abs(back - 0.75):.1e}")
