"""Command-line front end: fit, eval, sample, oracle-check.

    iphfit fit --input claims.csv --transform pareto --shift auto \
               --phases 5 --seed 1 --out-dir results/

writes into the output directory:

    params.json        fitted model document ("iph-params/1")
    loglik.csv         per-model log-likelihoods, original and fit scale
    density.csv        y, fitted pdf, fitted sf on a plot-ready grid
    qq.csv             empirical vs model quantiles at i/(N+1)
    hist_transformed.csv   histogram of the transformed data vs base pdf

`eval` answers pdf/sf/quantile/mean queries against a params document,
`sample` draws from a saved model, and `oracle-check` runs a quick
self-test of the closed forms.  Exit codes: 0 success, 2 configuration
error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from .emfit import FitConfig, fit_erlang_rate, fit_transformed
from .errors import (
    ConfigError,
    DataFileError,
    IphError,
    ModelDocumentError,
    ShiftError,
    ValidationError,
)
from .families import (
    NegLogAffine,
    ParetoExp,
    Power,
    ShiftedPower,
    tph_pdf,
    tph_quantile,
    tph_sample,
    tph_sf,
)
from .modelio import load_model, model_mean, save_model
from .phcore import ph_pdf

__all__ = ["RunConfig", "ingest_csv", "auto_shift", "run_fit", "eval_cmd", "main"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


@dataclass(frozen=True)
class RunConfig:
    """Validated settings for one `fit` run."""

    input_path: str
    transform: str
    out_dir: str
    column: int = 0
    header_rows: int = 0
    beta: float | None = None
    sigma: float | None = None
    mu: float | None = None
    xi: float | None = None
    shift: object = "auto"
    phases: int = 5
    seed: int = 0
    max_iters: int = 2000
    erlang_baseline: int | None = None
    deterministic: bool = False
    grid_points: int = 512

    def __post_init__(self):
        if not self.input_path:
            raise ConfigError("input path must be nonempty")
        if not self.out_dir:
            raise ConfigError("output directory must be nonempty")
        if self.transform not in ("pareto", "weibull", "gumbel", "gev"):
            raise ConfigError(f"unknown transform {self.transform!r}")
        if self.phases < 1:
            raise ConfigError(f"phases must be >= 1, got {self.phases}")
        if self.grid_points < 2:
            raise ConfigError(f"grid-points must be >= 2, got {self.grid_points}")
        if self.column < 0 or self.header_rows < 0:
            raise ConfigError("column and header-rows must be nonnegative")
        if self.max_iters < 1:
            raise ConfigError(f"max-iters must be >= 1, got {self.max_iters}")
        if self.erlang_baseline is not None and self.erlang_baseline < 1:
            raise ConfigError(f"erlang-baseline must be >= 1, got {self.erlang_baseline}")
        if not isinstance(self.shift, str):
            if not math.isfinite(float(self.shift)):
                raise ConfigError(f"shift must be finite, got {self.shift}")
        elif self.shift != "auto":
            raise ConfigError(f"shift must be a real number or 'auto', got {self.shift!r}")


def build_transform(cfg: RunConfig):
    """Transform object from CLI parameters, with family-specific checks."""
    if cfg.transform == "pareto":
        if cfg.beta is not None:
            raise ConfigError(
                "--beta is not accepted when fitting pareto: the scale is the fitted mean"
            )
        return ParetoExp()
    if cfg.transform == "weibull":
        if cfg.beta is None:
            raise ConfigError("weibull requires --beta")
        return Power(cfg.beta)
    if cfg.transform == "gumbel":
        if cfg.sigma is None:
            raise ConfigError("gumbel requires --sigma (and optionally --mu)")
        return NegLogAffine(cfg.mu if cfg.mu is not None else 0.0, cfg.sigma)
    if cfg.sigma is None or cfg.xi is None:
        raise ConfigError("gev requires --sigma and --xi (and optionally --mu)")
    return ShiftedPower(cfg.mu if cfg.mu is not None else 0.0, cfg.sigma, cfg.xi)


# ---------------------------------------------------------------------------
# ingestion and shifting
# ---------------------------------------------------------------------------

def ingest_csv(path, column: int = 0, header_rows: int = 0) -> np.ndarray:
    """Parse one column of positive reals; errors carry line numbers."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise DataFileError(f"cannot read {path}: {exc}") from exc
    values = []
    for lineno, line in enumerate(lines, start=1):
        if lineno <= header_rows:
            continue
        line = line.strip()
        if not line:
            continue
        fields = line.split(",")
        if column >= len(fields):
            raise DataFileError(
                f"{path}:{lineno}: needs column {column} but row has {len(fields)} fields"
            )
        raw = fields[column].strip()
        try:
            v = float(raw)
        except ValueError as exc:
            raise DataFileError(f"{path}:{lineno}: not a number: {raw!r}") from exc
        if not math.isfinite(v) or v <= 0:
            raise DataFileError(f"{path}:{lineno}: values must be positive reals, got {raw}")
        values.append(v)
    if not values:
        raise DataFileError(f"{path}: no data rows found")
    return np.array(values)


def auto_shift(data) -> float:
    """Largest one-decimal value strictly below the minimum log-datum."""
    data = np.asarray(data, dtype=float)
    m = float(np.min(np.log(data)))
    v = math.floor(m * 10.0) / 10.0
    if v >= m:
        v = round(v - 0.1, 10)
    return v


def _auto_shift_from(u_min: float) -> float:
    """The same one-decimal rule applied to an already transformed minimum."""
    v = math.floor(u_min * 10.0) / 10.0
    if v >= u_min:
        v = round(v - 0.1, 10)
    return v


# ---------------------------------------------------------------------------
# fit orchestration
# ---------------------------------------------------------------------------

def _write_csv(path, header: str, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(format(float(v), ".17g") for v in row) + "\n")


def run_fit(cfg: RunConfig) -> dict:
    """Ingest, fit, and emit every report file; returns a summary dict.

    Any failure after the output directory exists removes the files this
    run had already written.
    """
    transform = build_transform(cfg)
    xs = ingest_csv(cfg.input_path, cfg.column, cfg.header_rows)

    if isinstance(cfg.shift, str):
        if cfg.transform == "pareto":
            shift = auto_shift(xs)
        else:
            with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
                u_raw = np.asarray(transform.to_x(xs, 1.0), dtype=float)
            if not np.all(np.isfinite(u_raw)):
                bad = np.flatnonzero(~np.isfinite(u_raw)).tolist()
                raise ShiftError(
                    f"data outside the transform's support at indices {bad[:10]}",
                    indices=bad,
                )
            shift = _auto_shift_from(float(u_raw.min()))
    else:
        shift = float(cfg.shift)

    os.makedirs(cfg.out_dir, exist_ok=True)
    written: list[str] = []

    def out(name: str) -> str:
        p = os.path.join(cfg.out_dir, name)
        written.append(p)
        return p

    try:
        fit_cfg = FitConfig(
            phases=cfg.phases,
            max_iters=cfg.max_iters,
            seed=cfg.seed,
            ordered_reduction=cfg.deterministic,
        )
        model, result = fit_transformed(xs, transform, shift, fit_cfg)

        doc = save_model(model, out("params.json"))

        loglik_rows = [
            ("fitted", result.loglik_original, result.loglik),
        ]
        if cfg.erlang_baseline is not None:
            u = np.asarray(transform.to_x(xs, 1.0), dtype=float) - shift
            lam, ll_t = fit_erlang_rate(u, cfg.erlang_baseline)
            with np.errstate(divide="ignore"):
                ll_o = ll_t + float(np.sum(np.log(transform.jac(xs, 1.0))))
            loglik_rows.append((f"erlang{cfg.erlang_baseline}", ll_o, ll_t))
        with open(out("loglik.csv"), "w", encoding="utf-8") as fh:
            fh.write("model,loglik_original,loglik_transformed\n")
            for name, lo, lt in loglik_rows:
                fh.write(f"{name},{format(lo, '.17g')},{format(lt, '.17g')}\n")

        lo_y, hi_y = float(xs.min()), float(xs.max())
        if transform.increasing and lo_y > 0:
            grid = np.geomspace(lo_y, hi_y, cfg.grid_points)
        else:
            grid = np.linspace(lo_y, hi_y, cfg.grid_points)
        _write_csv(
            out("density.csv"),
            "y,pdf,sf",
            zip(grid, tph_pdf(model, grid), tph_sf(model, grid)),
        )

        n = xs.size
        qs = np.arange(1, n + 1) / (n + 1.0)
        _write_csv(
            out("qq.csv"),
            "empirical,model",
            zip(np.sort(xs), tph_quantile(model, qs)),
        )

        u = np.asarray(transform.to_x(xs, 1.0), dtype=float) - shift
        dens, edges = np.histogram(u, bins="auto", density=True)
        centers = 0.5 * (edges[:-1] + edges[1:])
        _write_csv(
            out("hist_transformed.csv"),
            "bin_left,bin_right,empirical_density,model_pdf",
            zip(edges[:-1], edges[1:], dens, ph_pdf(model.base, centers)),
        )
    except BaseException:
        for p in written:
            try:
                os.remove(p)
            except OSError:
                pass
        raise

    return {
        "params": doc,
        "shift": shift,
        "converged": result.converged,
        "iterations": result.iterations_run,
        "loglik_original": result.loglik_original,
        "loglik_transformed": result.loglik,
        "files": written,
    }


# ---------------------------------------------------------------------------
# eval / sample / oracle-check
# ---------------------------------------------------------------------------

def eval_cmd(params_path: str, query: str, at: float | None) -> str:
    """Answer one query against a saved model; returns the printed text."""
    model = load_model(params_path)
    if query == "mean":
        m = model_mean(model)
        return "infinite" if math.isinf(m) else format(m, ".17g")
    if at is None:
        raise ConfigError(f"query {query!r} needs --at")
    if query == "pdf":
        return format(tph_pdf(model, float(at)), ".17g")
    if query == "sf":
        return format(tph_sf(model, float(at)), ".17g")
    if query == "quantile":
        q = float(at)
        if not (0 <= q < 1):
            raise ConfigError(f"quantile level must be in [0,1), got {q}")
        return format(tph_quantile(model, q), ".17g")
    raise ConfigError(f"unknown query {query!r}")


def _oracle_checks() -> list[tuple[str, bool]]:
    from .iph import constant_rate, inverse_linear_rate, iph_new, path_new, product_integral
    from .phcore import erlang_rep, ph_sample
    import scipy.linalg as sla

    checks = []
    exp1 = erlang_rep(1, 1.0)
    d = iph_new(exp1, inverse_linear_rate(1.0))
    from .iph import iph_sf

    ys = np.linspace(0.0, 30.0, 64)
    checks.append(
        ("scalar Pareto survival", bool(np.max(np.abs(iph_sf(d, ys) - 1 / (1 + ys))) < 1e-12))
    )
    m = tph_pdf(_tph_erlang(2, 3.0), math.e - 1.0)
    checks.append(("log-Erlang density", abs(m - 9 * math.exp(-4)) < 1e-12))
    g = NegLogAffine(0.0, 1.0)
    from .families import tph_new as _tn

    checks.append(
        ("Gumbel point mass", abs(tph_sf(_tn(exp1, g), 0.0) - (1 - math.exp(-1))) < 1e-12)
    )
    T = erlang_rep(2, 1.5).T
    P = product_integral(path_new(lambda t: T, "const", check_times=[0.0, 1.0]), 0.0, 1.3)
    checks.append(("product integral", bool(np.max(np.abs(P - sla.expm(1.3 * T))) < 1e-8)))
    data = ph_sample(exp1, np.random.default_rng(0), 2000)
    from .emfit import em_step

    stepped = em_step(erlang_rep(1, 5.0), data)
    checks.append(("one-step exponential MLE", abs(-stepped.T[0, 0] - 1 / data.mean()) < 1e-10))
    return checks


def _tph_erlang(n, lam):
    from .families import tph_new
    from .phcore import erlang_rep

    return tph_new(erlang_rep(n, lam), ParetoExp())


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="iphfit", description="Transformed phase-type fitting")
    sub = ap.add_subparsers(dest="verb", required=True)

    fit = sub.add_parser("fit", help="fit a transformed PH model to a data column")
    fit.add_argument("--input")
    fit.add_argument("--column", type=int)
    fit.add_argument("--header-rows", type=int)
    fit.add_argument("--transform", choices=["pareto", "weibull", "gumbel", "gev"])
    fit.add_argument("--beta", type=float)
    fit.add_argument("--sigma", type=float)
    fit.add_argument("--mu", type=float)
    fit.add_argument("--xi", type=float)
    fit.add_argument("--shift", default=None, help="real number or 'auto'")
    fit.add_argument("--phases", type=int)
    fit.add_argument("--seed", type=int)
    fit.add_argument("--max-iters", type=int)
    fit.add_argument("--erlang-baseline", type=int)
    fit.add_argument("--out-dir")
    fit.add_argument("--deterministic", action="store_true", default=None,
                     help="bitwise-reproducible reduction order in the E-step")
    fit.add_argument("--grid-points", type=int)
    fit.add_argument("--config", help="JSON file with the same keys as the flags")

    ev = sub.add_parser("eval", help="query a saved params document")
    ev.add_argument("--params", required=True)
    ev.add_argument("--query", required=True, choices=["pdf", "sf", "quantile", "mean"])
    ev.add_argument("--at", type=float)

    sm = sub.add_parser("sample", help="draw from a saved model")
    sm.add_argument("--params", required=True)
    sm.add_argument("--count", type=int, required=True)
    sm.add_argument("--seed", type=int, default=0)
    sm.add_argument("--out", help="write one value per line here instead of stdout")

    sub.add_parser("oracle-check", help="run built-in closed-form self-tests")
    return ap


_CONFIG_KEYS = {
    "input": "input_path",
    "column": "column",
    "header_rows": "header_rows",
    "transform": "transform",
    "beta": "beta",
    "sigma": "sigma",
    "mu": "mu",
    "xi": "xi",
    "shift": "shift",
    "phases": "phases",
    "seed": "seed",
    "max_iters": "max_iters",
    "erlang_baseline": "erlang_baseline",
    "out_dir": "out_dir",
    "deterministic": "deterministic",
    "grid_points": "grid_points",
}


def _fit_config_from_args(args) -> RunConfig:
    settings: dict = {}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
        for key, value in raw.items():
            norm = key.replace("-", "_")
            if norm not in _CONFIG_KEYS:
                raise ConfigError(f"config file: unknown key {key!r}")
            settings[_CONFIG_KEYS[norm]] = value
    overrides = {
        "input_path": args.input,
        "column": args.column,
        "header_rows": args.header_rows,
        "transform": args.transform,
        "beta": args.beta,
        "sigma": args.sigma,
        "mu": args.mu,
        "xi": args.xi,
        "shift": args.shift,
        "phases": args.phases,
        "seed": args.seed,
        "max_iters": args.max_iters,
        "erlang_baseline": args.erlang_baseline,
        "out_dir": args.out_dir,
        "deterministic": args.deterministic,
        "grid_points": args.grid_points,
    }
    for key, value in overrides.items():
        if value is not None:
            settings[key] = value
    for required in ("input_path", "transform", "out_dir"):
        if required not in settings or settings[required] is None:
            raise ConfigError(f"missing required setting {required!r}")
    shift = settings.get("shift")
    if isinstance(shift, str) and shift != "auto":
        try:
            settings["shift"] = float(shift)
        except ValueError:
            raise ConfigError(f"shift must be a real number or 'auto', got {shift!r}") from None
    elif shift is not None and not isinstance(shift, str):
        settings["shift"] = float(shift)
    try:
        return RunConfig(**settings)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0

    try:
        if args.verb == "fit":
            cfg = _fit_config_from_args(args)
            summary = run_fit(cfg)
            print(f"shift: {summary['shift']}")
            print(f"converged: {summary['converged']} after {summary['iterations']} iterations")
            print(f"loglik (original scale): {summary['loglik_original']:.6f}")
            print(f"loglik (transformed scale): {summary['loglik_transformed']:.6f}")
            for p in summary["files"]:
                print(f"wrote {p}")
            return EXIT_OK
        if args.verb == "eval":
            print(eval_cmd(args.params, args.query, args.at))
            return EXIT_OK
        if args.verb == "sample":
            model = load_model(args.params)
            draws = tph_sample(model, np.random.default_rng(args.seed), args.count)
            text = "\n".join(format(float(v), ".17g") for v in draws)
            if args.out:
                with open(args.out, "w", encoding="utf-8") as fh:
                    fh.write(text + "\n")
                print(f"wrote {args.out}")
            else:
                print(text)
            return EXIT_OK
        checks = _oracle_checks()
        ok = True
        for name, passed in checks:
            print(f"{'PASS' if passed else 'FAIL'}  {name}")
            ok = ok and passed
        return EXIT_OK if ok else EXIT_NUMERIC
    except (ConfigError,) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataFileError, ShiftError, ModelDocumentError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValidationError,) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except IphError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(main())
