"""Acceptance gate: every criterion at its stated tolerance, one line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the PASS lines.
All computations are deterministic at the pinned seed; thread count never
enters (criterion 13 demonstrates it on real CLI runs).
"""

import json
import math
import time
from fractions import Fraction

import numpy as np
import pytest

import cocyclelab as cl
from cocyclelab.base import mix_seed
from cocyclelab.cli import main as cli_main
from cocyclelab.stepfn import ONE_FN, StepFunction, bv_norms
from cocyclelab.transfer import koopman_compose, transfer_apply

from conftest import random_dyadic_step

SEED = 20260808
PSI = StepFunction(["1/2"], [1, -1])


def report(number, name, t0, detail):
    print(f"ACCEPTANCE {number:02d} {name}: PASS ({time.time() - t0:.2f} s) - {detail}")


@pytest.fixture(scope="module")
def mix():
    """Shared half-and-half cocycle of the two slope-2 catalog maps."""
    base = cl.BaseSpec.iid_finite([0.5, 0.5], seed=SEED)
    spec = cl.CocycleSpec(base, {0: cl.doubling(), 1: cl.buzzi_t1()})
    path = spec.sample_path(150, 12105)
    family = cl.EquivariantFamily(spec, path)
    decay = cl.fit_decay(family, n_max=12)
    obs = cl.center(cl.ObservableSpec.scalar(PSI), family)
    return family, decay, obs


@pytest.fixture(scope="module")
def mix_sigma(mix):
    family, decay, obs = mix
    t0 = time.time()
    sig = cl.sigma_squared(family, obs, fibers=12000, n_max=200, tol=1e-9, decay=decay)
    return sig, time.time() - t0


@pytest.fixture(scope="module")
def mix_batch(mix):
    family, _, obs = mix
    t0 = time.time()
    batch = cl.simulate(family, obs, n=10**4, trials=10**4, seed=SEED)
    return batch, time.time() - t0


def test_01_exact_operator_algebra():
    t0 = time.time()
    for pmap in (cl.doubling(), cl.buzzi_t1(), cl.identity_map()):
        image = transfer_apply(pmap, ONE_FN)
        assert (image - ONE_FN).l1_norm() <= 1e-12 and image.variation() <= 1e-12
    zero = transfer_apply(cl.doubling(), PSI)
    assert zero.l1_norm() <= 1e-12
    fixed = transfer_apply(cl.buzzi_t1(), PSI)
    assert (fixed - PSI).l1_norm() <= 1e-12 and (fixed - PSI).variation() <= 1e-12
    elapsed = time.time() - t0
    assert elapsed < 1.0
    report(1, "exact operator algebra", t0, "L1=1 on the catalog, L psi in {0, psi} exactly")


def test_02_variation_axiom_suite():
    t0 = time.time()
    rng = np.random.default_rng(SEED)
    for _ in range(1000):
        f = random_dyadic_step(rng)
        g = random_dyadic_step(rng)
        c = int(rng.integers(-8, 9)) / 4.0
        l1, var, bv, sup = bv_norms(f)
        assert (c * f).variation() == abs(c) * var  # homogeneity
        assert (f + g).variation() <= var + g.variation() + 1e-12  # triangle
        assert sup <= l1 + var  # sup bound with constant 1
        assert ONE_FN.variation() == 0.0  # constants carry no variation
        pos = random_dyadic_step(rng, positive=True)
        inv = StepFunction(pos.breakpoints, [1.0 / v for v in pos.values])
        assert inv.variation() <= pos.variation() / pos.essinf() ** 2 + 1e-12
        assert (f * g).variation() <= f.sup_norm() * g.variation() + g.sup_norm() * var + 1e-12
        assert (f * g).bv_norm() <= bv * g.bv_norm() + 1e-12  # algebra bound
    elapsed = time.time() - t0
    assert elapsed < 5.0
    report(2, "variation axiom suite", t0, "7 inequalities on 1000 random dyadic steps")


def test_03_doubling_contraction():
    t0 = time.time()
    rng = np.random.default_rng(SEED + 1)
    pmap = cl.doubling()
    for _ in range(1000):
        f = random_dyadic_step(rng)
        assert transfer_apply(pmap, f).variation() <= 0.5 * f.variation()  # exact
    elapsed = time.time() - t0
    assert elapsed < 5.0
    report(3, "doubling contraction", t0, "var(L f) <= var(f)/2 exactly on 1000 dyadic steps")


def test_04_tower_correlation_bitwise():
    t0 = time.time()
    exp = cl.SuspensionExperiment(delta=0.5, seed=SEED)
    spec = exp.cocycle()
    rng = np.random.default_rng(SEED + 2)
    checked = 0
    for s in range(1000):
        path = exp.sample(n_fwd=42, salt=10_000 + s)
        n = int(rng.integers(0, 36))
        exact = float(cl.exact_correlation(path, 0, n))
        operator = cl.operator_correlation(spec, path, 0, n)
        assert exact == operator  # bitwise
        checked += 1
    zero_lag = cl.exact_correlation(exp.sample(n_fwd=2, salt=3), 0, 0)
    assert zero_lag == 1  # psi^2 integrates to 1 (the in-text 2 is flagged in reports)
    elapsed = time.time() - t0
    assert elapsed < 30.0
    report(4, "tower correlation bitwise", t0, f"{checked} random (state, lag) pairs agree exactly")


def test_05_tower_variance_divergence():
    t0 = time.time()
    exp = cl.SuspensionExperiment(delta=0.5, seed=SEED)
    rep = cl.variance_blowup(exp, n_grid=[100, 1000, 10000], base_samples=100)
    assert rep.growth_factor >= 5.0
    assert 0.35 <= rep.loglog_slope <= 0.65
    elapsed = time.time() - t0
    assert elapsed < 300.0
    report(5, "tower variance divergence", t0,
           f"growth x{rep.growth_factor:.1f}, log-log slope {rep.loglog_slope:.3f} (theory 0.5)")


def test_06_green_kubo_consistency(mix, mix_sigma, mix_batch):
    t0 = time.time()
    sig, sigma_seconds = mix_sigma
    batch, batch_seconds = mix_batch
    sigma2 = sig.scalar()
    assert sig.certified
    s = batch.sums[:, 0]
    empirical = float((s * s).mean()) / batch.n
    rel = abs(empirical - sigma2) / sigma2
    assert rel <= 0.05
    elapsed = time.time() - t0 + sigma_seconds + batch_seconds
    assert elapsed < 300.0
    print(f"ACCEPTANCE 06 Green-Kubo consistency: PASS ({elapsed:.2f} s) - "
          f"operator {sigma2:.4f} vs Monte Carlo {empirical:.4f} (rel {rel:.2%})")


def test_07_reversed_martingale_property(mix):
    t0 = time.time()
    family, decay, obs = mix
    decomps = cl.martingale_variances(family, obs, decay, range(100), tol=1e-9)
    worst = max(d.residual_l1 for d in decomps)
    assert worst <= 1e-8
    assert all(d.tail_bound <= 1e-8 for d in decomps)  # certified by the fitted bound
    elapsed = time.time() - t0
    assert elapsed < 120.0
    report(7, "reversed martingale property", t0,
           f"max ||L m||_1 = {worst:.1e} over 100 fibers at series tol 1e-9")


def test_08_coboundary_dichotomy(mix_sigma):
    t0 = time.time()
    r8 = StepFunction([Fraction(k, 8) for k in range(1, 8)],
                      [0.0, 1.0, -1.0, 2.0, 0.5, -0.5, 1.5, -1.0])
    psi_cb = r8 - koopman_compose(cl.doubling(), r8)
    spec = cl.CocycleSpec(cl.BaseSpec.iid_finite([1.0], seed=SEED), {0: cl.doubling()})
    family = cl.EquivariantFamily(spec, spec.sample_path(150, 300))
    decay = cl.fit_decay(family, n_max=10)
    obs = cl.center(cl.ObservableSpec.scalar(psi_cb), family)
    sig = cl.sigma_squared(family, obs, fibers=4, n_max=150, tol=1e-9, decay=decay)
    assert abs(sig.scalar()) <= 1e-6
    decomps = cl.martingale_variances(family, obs, decay, range(4), tol=1e-9)
    sup_m = max(d.m.l1_norm() for d in decomps)
    assert sup_m <= 1e-6
    assert mix_sigma[0].scalar() >= 0.1  # the non-degenerate observable stays away from 0
    elapsed = time.time() - t0
    assert elapsed < 60.0
    report(8, "coboundary dichotomy", t0,
           f"coboundary sigma2 {sig.scalar():.1e}, sup ||m||_1 {sup_m:.1e}; "
           f"non-degenerate sigma2 {mix_sigma[0].scalar():.3f}")


def test_09_clt_diagnostic(mix_sigma, mix_batch):
    t0 = time.time()
    batch, batch_seconds = mix_batch
    rep = cl.clt_diagnostics(batch, mix_sigma[0].scalar())
    assert rep.ks_statistic <= 0.03
    elapsed = time.time() - t0 + batch_seconds
    assert elapsed < 300.0
    print(f"ACCEPTANCE 09 CLT diagnostic: PASS ({elapsed:.2f} s) - "
          f"KS {rep.ks_statistic:.4f} at n = 10^4, 10^4 trials (threshold 0.03)")


def test_10_twisted_consistency(mix):
    t0 = time.time()
    family, _, obs = mix
    rep = cl.twisted_checks(family, obs, [0.0, 0.05, 0.1, -0.1],
                            n_cf=100, n_norm=200, trials=10**5, seed=SEED + 1)
    worst = max(r.difference for r in rep.rows)
    bound = 5.0 / math.sqrt(10**5)
    assert worst <= bound
    assert rep.max_norm_growth <= 2.0  # no growth trend over n <= 200
    elapsed = time.time() - t0
    assert elapsed < 180.0
    report(10, "twisted consistency", t0,
           f"max |op - emp| = {worst:.4f} <= {bound:.4f}; norm growth x{rep.max_norm_growth:.2f}")


def test_11_hitting_time_constants():
    t0 = time.time()
    spec = cl.CocycleSpec(cl.BaseSpec.iid_finite([0.5, 0.5], seed=SEED),
                          {0: cl.doubling(), 1: cl.identity_map()})
    n_omegas = np.empty(10**4, dtype=np.int64)
    for p in range(10**4):
        path = spec.sample_path(0, 200, seed=mix_seed(SEED, 0xE0000 + p))
        n_omegas[p] = cl.k_hitting_estimate(spec, path, a=0.5, n_max=200).n_omega
    ks = np.arange(0, 51)
    survival = np.array([(n_omegas > k).mean() for k in ks])
    keep = survival > 0
    xs, ys = ks[keep].astype(float), np.log(survival[keep])
    slope, intercept = np.polyfit(xs, ys, 1)
    pred = slope * xs + intercept
    r2 = 1.0 - ((ys - pred) ** 2).sum() / ((ys - ys.mean()) ** 2).sum()
    assert slope <= -0.05
    assert r2 >= 0.95
    k_values = 2.0 * np.exp(math.log(2.0) * n_omegas.astype(float))
    assert np.all(np.isfinite(k_values))
    family = cl.EquivariantFamily(spec, spec.sample_path(2, 80))
    decay = cl.fit_decay(family, n_max=40)
    reference = 0.25 * math.log(2.0)
    assert reference / 2.0 <= decay.lambda_prime <= reference * 2.0
    elapsed = time.time() - t0
    assert elapsed < 120.0
    report(11, "hitting-time constants", t0,
           f"tail slope {slope:.3f} (R^2 {r2:.3f}); lambda' {decay.lambda_prime:.3f} "
           f"vs reference {reference:.3f}")


def test_12_tower_tail_exponents():
    t0 = time.time()
    for delta in (0.5, 1.0):
        rep = cl.tail_check(cl.SuspensionExperiment(delta=delta, seed=SEED), samples=10**5)
        assert abs(rep.fitted_exponent - rep.expected_exponent) <= 0.15
    elapsed = time.time() - t0
    assert elapsed < 60.0
    report(12, "tower tail exponents", t0,
           "fitted within +-0.15 of -(1+delta) for delta in {0.5, 1}")


def test_13_reproducibility_across_threads(tmp_path):
    t0 = time.time()
    cfg = {
        "seed": SEED,
        "maps": {"0": "doubling", "1": "identity"},
        "khitting": {"paths": 10000, "n_max": 200, "k_max": 50, "a": None},
        "counterexample": {"delta": 0.5, "symbol_cap": 1000000,
                           "simplified": False, "base_samples": 100, "tail_samples": 100000},
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    csvs = {}
    for threads in ("1", "5"):
        for sub in ("kestimate", "counterexample"):
            out = tmp_path / f"{sub}_{threads}"
            assert cli_main([sub, "--config", str(cfg_path), "--out", str(out),
                             "--threads", threads]) == 0
            for f in sorted(out.glob("*.csv")):
                csvs.setdefault((sub, f.name), []).append(f.read_bytes())
    assert csvs
    for (sub, name), blobs in csvs.items():
        assert blobs[0] == blobs[1], f"{sub}/{name} differs across thread counts"
    report(13, "reproducibility", t0,
           f"{len(csvs)} CSVs byte-identical for 1 vs 5 threads at a fixed seed")
