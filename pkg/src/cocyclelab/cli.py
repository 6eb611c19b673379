"""Batch experiment runner.

Subcommands: density, correlate, variance, martingale, clt, twisted,
counterexample, kestimate, validate.  Every run writes a manifest plus
subcommand-specific CSV/JSON tables and SVG figures into the output
directory.  Exit codes: 0 success, 1 configuration error, 2 honest
numerical-certification failure (for example a non-convergent pullback or
a Green-Kubo series whose tail cannot be certified).

Thread count never enters any computation: trials and fibers use
counter-based substreams, so outputs are byte-identical for any
``--threads`` value (the flag is recorded in the manifest only).
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from .base import mix_seed
from .config import ExperimentConfig
from .counterexample import SuspensionExperiment, maker_check, tail_check, variance_blowup
from .equivariant import (
    EquivariantFamily,
    fit_decay,
    k_hitting_estimate,
    pullback_density,
)
from .errors import CertificationError, CocycleLabError, ConfigError
from .limits import center, correlations, martingale_variances, sigma_squared, twisted_checks
from .montecarlo import clt_diagnostics, simulate, variance_growth
from .reports import plot_series, write_csv, write_json, write_manifest


class _Run:
    """Collects outputs, constants, warnings and timings for the manifest."""

    def __init__(self, cfg: ExperimentConfig, out: Path, fmt: str, subcommand: str, threads: int):
        self.cfg = cfg
        self.out = out
        self.fmt = fmt
        self.subcommand = subcommand
        self.constants: dict = {"threads": threads}
        self.warnings: list[str] = []
        self.outputs: list[str] = []
        self.timings: dict[str, float] = {}

    def timed(self, name: str):
        run = self

        class _Timer:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                run.timings[name] = time.perf_counter() - self.t0

        return _Timer()

    def table(self, name: str, header, rows) -> None:
        rows = [list(r) for r in rows]
        if self.fmt in ("csv", "both"):
            path = write_csv(self.out / f"{name}.csv", header, rows)
            self.outputs.append(path.name)
        if self.fmt in ("json", "both"):
            payload = {"columns": list(header), "rows": [[_jsonable(x) for x in r] for r in rows]}
            path = write_json(self.out / f"{name}.json", payload)
            self.outputs.append(path.name)

    def figure(self, name: str, *args, **kwargs) -> None:
        path = plot_series(self.out / f"{name}.svg", *args, **kwargs)
        self.outputs.append(path.name)

    def finish(self) -> None:
        write_manifest(
            self.out,
            self.subcommand,
            self.cfg.config_hash(),
            self.cfg.seed,
            self.constants,
            self.warnings,
            self.outputs,
            self.timings,
        )


def _jsonable(x):
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    if isinstance(x, Fraction):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    return x


def _family(cfg: ExperimentConfig, n_back: int, n_fwd: int) -> EquivariantFamily:
    spec = cfg.cocycle()
    gb = cfg.grid("window_back")
    gf = cfg.grid("window_fwd")
    path = spec.sample_path(max(n_back, gb), max(n_fwd, gf))
    return EquivariantFamily(spec, path, tol=cfg.tolerance("pullback"),
                             coalesce_tol=cfg.tolerance("coalesce"))


# -- subcommand handlers -----------------------------------------------------


def run_validate(run: _Run) -> int:
    run.constants["config_hash"] = run.cfg.config_hash()
    run.finish()
    print(f"config OK  hash={run.cfg.config_hash()[:16]}")
    return 0


def run_density(run: _Run) -> int:
    cfg = run.cfg
    n_max = min(int(cfg.grid("n_max")), 60)
    with run.timed("pullback"):
        family = _family(cfg, n_back=n_max, n_fwd=2)
        data = pullback_density(family.spec, family.path, n_max=n_max, tol=cfg.tolerance("pullback"))
    run.constants.update(
        {"ell": data.essinf, "pullback_n": data.n_used, "converged": data.converged}
    )
    run.table("density", ["piece_start", "value"], data.density.to_rows())
    run.table("pullback_trace", ["n", "l1_increment"], list(enumerate(data.trace, start=1)))
    run.table("path_window", ["index", "symbol", "fiber_counter"],
              [[k, s, "" if c is None else c] for k, s, c in family.path.rows()])
    xs = [float(lo) for lo, _, _ in data.density.pieces()]
    ys = [float(v) for _, _, v in data.density.pieces()]
    run.figure("density", [("equivariant density", xs, ys)], "x", "density",
               title="pullback equivariant density")
    trace_pos = [(n, d) for n, d in enumerate(data.trace, start=1) if d > 0]
    if trace_pos:
        run.figure("pullback_trace", [("l1 increment", [n for n, _ in trace_pos],
                                       [d for _, d in trace_pos])],
                   "n", "l1 increment", logy=True)
    run.finish()
    print(f"density: converged at n={data.n_used}, essinf={data.essinf}")
    return 0


def run_correlate(run: _Run) -> int:
    cfg = run.cfg
    n_max = min(int(cfg.grid("n_max")), 200)
    with run.timed("setup"):
        family = _family(cfg, n_back=2, n_fwd=n_max + 2)
        decay = fit_decay(family, n_max=int(cfg.grid("decay_n_max")))
        obs = center(cfg.observable(), family)
    with run.timed("correlations"):
        series = correlations(family, obs, n_max=n_max, decay=decay)
    d = obs.dimension
    header = ["n"] + [f"c_{i}{j}" for i in range(d) for j in range(d)] + ["term_bv", "bound_ok"]
    rows = []
    for n in range(n_max + 1):
        rows.append([n] + [series.values[n, i, j] for i in range(d) for j in range(d)]
                    + [series.term_norms[n], series.bound_ok[n]])
    run.table("correlations", header, rows)
    run.table("decay_trace", ["n", "worst_ratio", "bound"],
              [[n, w, decay.tail_bound(n)] for n, w in enumerate(decay.worst_ratios, start=1)])
    run.constants.update({"lambda_prime": decay.lambda_prime, "d_tilde": decay.d_tilde,
                          "k_norm": decay.k_norm, "mixing": decay.mixing})
    pos = [(n, abs(series.values[n, 0, 0])) for n in range(n_max + 1)
           if abs(series.values[n, 0, 0]) > 0]
    if pos:
        run.figure("correlations", [("|c_n|", [p[0] for p in pos], [p[1] for p in pos])],
                   "n", "|c_n|", logy=True)
    if not decay.mixing:
        run.warnings.append("decay fit found no positive rate; bounds not certified")
    run.finish()
    print(f"correlate: {n_max + 1} lags, lambda'={decay.lambda_prime:.4f}")
    return 0


def run_variance(run: _Run) -> int:
    cfg = run.cfg
    fibers = int(cfg.grid("variance_fibers"))
    n_grid = [int(n) for n in cfg.grid("N_grid")]
    trials = int(cfg.grid("trials"))
    with run.timed("setup"):
        family = _family(cfg, n_back=2, n_fwd=fibers + int(cfg.grid("n_max")) + max(n_grid) + 2)
        decay = fit_decay(family, n_max=int(cfg.grid("decay_n_max")))
        obs = center(cfg.observable(), family)
    with run.timed("operator_sigma2"):
        sig = sigma_squared(family, obs, fibers=fibers, n_max=int(cfg.grid("n_max")),
                            tol=cfg.tolerance("series"), decay=decay)
    with run.timed("monte_carlo"):
        growth = variance_growth(family, obs, n_grid, trials=trials,
                                 seed=mix_seed(cfg.seed, 0x3C), at=0)
    d = obs.dimension
    run.table("sigma2", ["i", "j", "value", "std_error"],
              [[i, j, sig.matrix[i, j], sig.std_error[i, j]] for i in range(d) for j in range(d)])
    run.table("variance_growth", ["n", "empirical", "half_width_3sigma", "operator"],
              [[r.n, r.value, r.half_width, sig.scalar()] for r in growth])
    run.constants.update({
        "sigma2": sig.scalar(), "certified": sig.certified,
        "uncertified_fibers": sig.uncertified_fibers,
        "min_eigenvalue": float(sig.eigenvalues.min()),
        "lambda_prime": decay.lambda_prime,
    })
    xs = [r.n for r in growth]
    run.figure("variance_growth",
               [("monte carlo", xs, [r.value for r in growth]),
                ("operator", xs, [sig.scalar()] * len(xs))],
               "n", "E(S_n^2)/n", logx=True)
    if not sig.certified:
        run.warnings.append(
            f"series tail not certifiable on {sig.uncertified_fibers}/{fibers} fibers"
        )
        run.finish()
        print("variance: tail NOT certifiable (diagnostic written)")
        return 2
    run.finish()
    rel = abs(growth[-1].value - sig.scalar()) / sig.scalar() if sig.scalar() else 0.0
    print(f"variance: sigma2={sig.scalar():.6f}, MC at n={xs[-1]} within {rel:.2%}")
    return 0


def run_martingale(run: _Run) -> int:
    cfg = run.cfg
    fibers = int(cfg.grid("fibers"))
    tol = cfg.tolerance("series")
    with run.timed("setup"):
        family = _family(cfg, n_back=int(cfg.grid("window_back")), n_fwd=fibers + 4)
        decay = fit_decay(family, n_max=int(cfg.grid("decay_n_max")))
        obs = center(cfg.observable(), family)
    with run.timed("decompose"):
        decomps = martingale_variances(family, obs, decay, range(fibers), tol=tol)
    rows = [[d.at, d.truncation, d.residual_l1, d.tail_bound, d.variance] for d in decomps]
    run.table("martingale", ["fiber", "truncation", "residual_l1", "tail_bound", "variance"], rows)
    max_res = max(d.residual_l1 for d in decomps)
    mean_var = float(np.mean([d.variance for d in decomps]))
    run.constants.update({
        "max_residual_l1": max_res, "mean_martingale_variance": mean_var,
        "lambda_prime": decay.lambda_prime, "series_tol": tol,
    })
    run.figure("martingale_variances",
               [("martingale variance", [d.at for d in decomps], [d.variance for d in decomps])],
               "fiber", "variance of the martingale part")
    run.finish()
    print(f"martingale: {fibers} fibers, max residual {max_res:.3e}, mean variance {mean_var:.6f}")
    return 0


def run_clt(run: _Run) -> int:
    cfg = run.cfg
    n = int(cfg.grid("n_steps"))
    trials = int(cfg.grid("trials"))
    with run.timed("setup"):
        family = _family(cfg, n_back=2, n_fwd=max(n, int(cfg.grid("variance_fibers")) + int(cfg.grid("n_max"))) + 2)
        decay = fit_decay(family, n_max=int(cfg.grid("decay_n_max")))
        obs = center(cfg.observable(), family)
    with run.timed("operator_sigma2"):
        sig = sigma_squared(family, obs, fibers=int(cfg.grid("variance_fibers")),
                            n_max=int(cfg.grid("n_max")), tol=cfg.tolerance("series"), decay=decay)
    if not sig.certified or sig.scalar() <= 0:
        run.warnings.append("sigma^2 not certified positive; CLT normalization unavailable")
        run.finish()
        print("clt: sigma^2 not available")
        return 2
    with run.timed("monte_carlo"):
        batch = simulate(family, obs, n=n, trials=trials, seed=mix_seed(cfg.seed, 0x17))
        report = clt_diagnostics(batch, sig.scalar())
    run.constants.update({
        "sigma2": sig.scalar(), "ks_statistic": report.ks_statistic,
        "ks_pvalue": report.ks_pvalue, "second_moment_ratio": report.second_moment_ratio,
        "fourth_moment_ratio": report.fourth_moment_ratio, "degenerate": report.degenerate,
    })
    run.table("clt", ["n", "trials", "ks_statistic", "ks_pvalue", "m2_ratio", "m4_ratio", "degenerate"],
              [[report.n, report.trials, report.ks_statistic, report.ks_pvalue,
                report.second_moment_ratio, report.fourth_moment_ratio, report.degenerate]])
    run.table("batch", ["trial", "n", "S_n"],
              [[t, n, float(batch.sums[t, 0])] for t in range(trials)])
    z = np.sort(batch.sums[:, 0] / math.sqrt(n * sig.scalar()))
    ecdf = np.arange(1, len(z) + 1) / len(z)
    from scipy import stats as _st

    run.figure("clt_ecdf",
               [("empirical", list(z[:: max(1, len(z) // 500)]), list(ecdf[:: max(1, len(z) // 500)])),
                ("normal", list(z[:: max(1, len(z) // 500)]), list(_st.norm.cdf(z[:: max(1, len(z) // 500)])))],
               "z", "CDF", title=f"KS = {report.ks_statistic:.4f}")
    if report.degenerate:
        run.warnings.append("normalized sums are degenerate at this scale")
    run.finish()
    print(f"clt: KS={report.ks_statistic:.4f} at n={n}, trials={trials}")
    return 0


def run_twisted(run: _Run) -> int:
    cfg = run.cfg
    t_grid = [float(t) for t in cfg.grid("t_grid")]
    with run.timed("setup"):
        n_norm = int(cfg.grid("twisted_n_norm"))
        family = _family(cfg, n_back=2, n_fwd=n_norm + 2)
        obs = center(cfg.observable(), family)
    with run.timed("twisted"):
        report = twisted_checks(
            family, obs, t_grid,
            n_cf=int(cfg.grid("twisted_n_cf")), n_norm=n_norm,
            trials=int(cfg.grid("twisted_trials")), seed=mix_seed(cfg.seed, 0x71),
        )
    rows = [[r.t, r.n, r.operator_cf.real, r.operator_cf.imag, r.empirical_cf.real,
             r.empirical_cf.imag, r.difference, r.mc_bound, r.ok] for r in report.rows]
    run.table("twisted_cf", ["t", "n", "op_re", "op_im", "emp_re", "emp_im",
                             "difference", "mc_bound", "ok"], rows)
    norm_rows = []
    for t, trace in report.norm_traces.items():
        for n, v in enumerate(trace, start=1):
            norm_rows.append([t, n, v])
    run.table("twisted_norms", ["t", "n", "bv_norm"], norm_rows)
    run.constants.update({
        "max_cf_difference": max(r.difference for r in report.rows),
        "mc_bound": report.rows[0].mc_bound if report.rows else 0.0,
        "max_norm_growth": report.max_norm_growth,
        "all_ok": all(r.ok for r in report.rows),
    })
    series = [(f"t={t}", list(range(1, len(tr) + 1)), tr) for t, tr in report.norm_traces.items() if tr]
    if series:
        run.figure("twisted_norms", series, "n", "BV norm of twisted image of 1")
    if not all(r.ok for r in report.rows):
        run.warnings.append("operator vs empirical characteristic function disagreement beyond MC bound")
    run.finish()
    print(f"twisted: max |op-emp| = {max(r.difference for r in report.rows):.4e}, "
          f"norm growth x{report.max_norm_growth:.3f}")
    return 0


def run_counterexample(run: _Run) -> int:
    cfg = run.cfg
    ce = cfg.counterexample_section()
    exp = SuspensionExperiment(
        delta=float(ce["delta"]), seed=cfg.seed, symbol_cap=int(ce["symbol_cap"]),
        simplified=bool(ce.get("simplified", False)),
        n_grid=tuple(int(n) for n in cfg.grid("N_grid")),
    )
    with run.timed("variance_blowup"):
        blowup = variance_blowup(exp, base_samples=int(ce["base_samples"]))
    with run.timed("tail_check"):
        tail = tail_check(exp, samples=int(ce["tail_samples"]))
    with run.timed("maker_check"):
        maker = maker_check(exp, base_samples=min(100, int(ce["base_samples"])))
    run.table("blowup", ["N", "mean_variance", "mean_moving_average"],
              [[n, v, m] for n, v, m in zip(blowup.n_grid, blowup.mean_variance,
                                            blowup.mean_moving_average)])
    report = {
        "delta": exp.delta,
        "simplified": exp.simplified,
        "loglog_slope": blowup.loglog_slope,
        "theoretical_slope": 1.0 - exp.delta,
        "growth_factor": blowup.growth_factor,
        "monotone_fraction": blowup.monotone_fraction,
        "per_N": {str(n): v for n, v in zip(blowup.n_grid, blowup.mean_variance)},
        "tail_exponent": tail.fitted_exponent,
        "tail_expected": tail.expected_exponent,
        "tail_fit_range": list(tail.fit_range),
        "tail_cutoff_flagged": tail.cutoff_flagged,
        "maker_truncated_ok": maker.within_3sigma,
        "psi_square_integral": blowup.psi_square_integral,
        "psi_square_note": blowup.psi_square_flag,
    }
    path = write_json(run.out / "counterexample_report.json", report)
    run.outputs.append(path.name)
    run.constants.update({
        "loglog_slope": blowup.loglog_slope, "growth_factor": blowup.growth_factor,
        "tail_exponent": tail.fitted_exponent,
    })
    run.figure("blowup",
               [("(1/N) E(S_N)^2", blowup.n_grid, blowup.mean_variance)],
               "N", "(1/N) E(S_N^2)", logx=True, logy=True,
               annotate=f"slope {blowup.loglog_slope:.3f} (theory {1 - exp.delta:.2f})")
    run.warnings.append("Green-Kubo series has no certifiable tail for this cocycle (expected)")
    run.finish()
    print(f"counterexample: slope={blowup.loglog_slope:.3f}, growth x{blowup.growth_factor:.1f}, "
          f"tail exponent {tail.fitted_exponent:.3f}")
    return 0


def run_kestimate(run: _Run) -> int:
    cfg = run.cfg
    kh = cfg.khitting_section()
    spec = cfg.cocycle()
    paths = int(kh["paths"])
    n_max = int(kh["n_max"])
    k_max = int(kh["k_max"])
    a = kh.get("a")
    with run.timed("hitting_times"):
        n_omegas = np.zeros(paths, dtype=np.int64)
        k_values = np.zeros(paths)
        for p in range(paths):
            path = spec.sample_path(0, n_max, seed=mix_seed(cfg.seed, 0xE0000 + p))
            est = k_hitting_estimate(spec, path, a=a, n_max=n_max)
            n_omegas[p] = est.n_omega
            k_values[p] = est.k_value
    with run.timed("tail_fit"):
        ks = np.arange(0, k_max + 1)
        survival = np.array([(n_omegas > k).mean() for k in ks])
        keep = survival > 0
        if keep.sum() < 3:
            raise CertificationError(
                "hitting-time tail is degenerate (all paths stabilize immediately); "
                "use an assignment mixing expanding and non-expanding maps"
            )
        xs, ys = ks[keep].astype(float), np.log(survival[keep])
        slope, intercept = np.polyfit(xs, ys, 1)
        pred = slope * xs + intercept
        ss_res = float(np.sum((ys - pred) ** 2))
        ss_tot = float(np.sum((ys - ys.mean()) ** 2))
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    with run.timed("decay_fit"):
        family = _family(cfg, n_back=2, n_fwd=64)
        decay = fit_decay(family, n_max=40)
    run.table("khitting", ["path", "N_omega", "K"],
              [[p, int(n_omegas[p]), k_values[p]] for p in range(min(paths, 1000))])
    run.table("khitting_tail", ["k", "survival", "log_survival"],
              [[int(k), float(s), float(math.log(s)) if s > 0 else ""] for k, s in zip(ks, survival)])
    lam_ref = 0.25 * math.log(2.0)
    run.constants.update({
        "paths": paths, "tail_slope": float(slope), "tail_r2": r2,
        "max_K": float(k_values.max()), "all_K_finite": bool(np.all(np.isfinite(k_values))),
        "lambda_prime": decay.lambda_prime, "lambda_reference": lam_ref,
        "lambda_ratio": decay.lambda_prime / lam_ref,
    })
    run.figure("khitting_tail", [("log survival", list(xs), list(ys))],
               "k", "log P(N > k)", annotate=f"slope {slope:.4f}, R^2 {r2:.3f}")
    run.finish()
    print(f"kestimate: tail slope {slope:.4f} (R^2 {r2:.3f}), lambda'={decay.lambda_prime:.4f} "
          f"vs reference {lam_ref:.4f}")
    return 0


_HANDLERS = {
    "validate": run_validate,
    "density": run_density,
    "correlate": run_correlate,
    "variance": run_variance,
    "martingale": run_martingale,
    "clt": run_clt,
    "twisted": run_twisted,
    "counterexample": run_counterexample,
    "kestimate": run_kestimate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cocyclelab",
        description="Numerical laboratory for random transfer-operator cocycles",
    )
    parser.add_argument("subcommand", choices=sorted(_HANDLERS))
    parser.add_argument("--config", type=str, default=None, help="JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", type=str, default=None, help="output directory")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker hint; never affects numerical output")
    parser.add_argument("--format", choices=["csv", "json", "both"], default="csv")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out = Path(args.out) if args.out else Path(cfg.raw.get("output_dir", "out"))
    run = _Run(cfg, out, args.format, args.subcommand, args.threads)
    try:
        return _HANDLERS[args.subcommand](run)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except CertificationError as exc:
        run.warnings.append(str(exc))
        run.finish()
        print(f"certification failure: {exc}", file=sys.stderr)
        return 2
    except CocycleLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
