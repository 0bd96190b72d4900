"""Acceptance suite: one test per criterion, each at its stated tolerance.

A line ``criterion N: PASS|FAIL ...`` is recorded for every criterion and
printed in the terminal summary (see ``conftest.py``). Run directly with
``python3 -m pytest tests/test_acceptance.py -v``.
"""

import json
import time

import numpy as np
import pytest

from addequiv import thresholds as th
from addequiv.basis import (
    approximation_error,
    build_basis,
    lemma_constant,
    orthonormality_error,
    sup_sum_squares,
)
from addequiv.chain import optimal_J
from addequiv.design import DesignModel, HistogramDensity, sample_design
from addequiv.diagnostics import (
    ChainScenario,
    kl_and_tv,
    localization_defect,
    regime_check,
    risk_rate_suite,
    two_sample_energy,
    whitening_covariance,
)
from addequiv.functions import PANEL_IDS, ComponentFunction as C, additive, center_components, panel_function
from addequiv.operator import (
    assemble_gamma,
    empirical_gamma_L,
    gamma_L,
    gamma_sqrt,
    h_one,
    split_gamma,
)
from addequiv.basis import project
from addequiv.chain import simulate_I
from addequiv.runner import gamma_schedule
from addequiv.whitenoise import sheet_scores, simulate_Q, simulate_Rn, simulate_S

from conftest import MODEL_PANEL, fgm_uniform, skewed_pairwise, skewed_product

RESULTS = {}


def record(number, ok, detail):
    RESULTS[number] = (bool(ok), detail)
    return ok


def random_admissible(rng):
    d = int(rng.integers(1, 5))
    M = int(rng.choice([1, 2, 4]))
    K = M * int(rng.integers(max(1, 2 // M), 64 // M + 1))
    margs = [HistogramDensity.from_weights(rng.uniform(0.5, 2.0, M)) for _ in range(d)]
    if d == 1 or rng.random() < 0.25:
        return K, DesignModel.product(margs)
    pairs = d * (d - 1) / 2
    theta = np.triu(rng.uniform(-0.8, 0.8, (d, d)) / pairs, 1)
    return K, DesignModel.pairwise(margs, theta[0, 1] if d == 2 else theta)


def test_criterion_01_basis_lemma():
    rng = np.random.default_rng(101)
    start = time.time()
    worst = {"orth": 0.0, "eig_gap": np.inf, "sup_ratio": 0.0}
    exact = 0
    for _ in range(20):
        K, model = random_admissible(rng)
        basis = build_basis(K, model)
        worst["orth"] = max(worst["orth"], orthonormality_error(basis, model))
        worst["eig_gap"] = min(worst["eig_gap"], basis.gram_eigenvalues.min() - model.rho)
        value, is_exact = sup_sum_squares(basis)
        exact += is_exact
        worst["sup_ratio"] = max(worst["sup_ratio"], value * model.rho / lemma_constant(K, model.d))
    elapsed = time.time() - start
    ok = worst["orth"] < 1e-8 and worst["eig_gap"] >= -1e-10 and worst["sup_ratio"] <= 1 and elapsed < 30
    record(1, ok, f"orth {worst['orth']:.1e}, min eig - rho {worst['eig_gap']:.2e}, "
                  f"sup/bound {worst['sup_ratio']:.3f} ({exact}/20 enumerated), {elapsed:.1f}s")
    assert ok


def test_criterion_02_approximation_bound():
    worst = 0.0
    for name, make in MODEL_PANEL.items():
        model = make()
        for K in (4, 8, 16):
            basis = build_basis(K, model)
            for pid in PANEL_IDS:
                for beta in (0.5, 1.0):
                    err, bound = approximation_error(panel_function(pid, model.d, beta), basis, model)
                    if bound > 0:
                        worst = max(worst, err / bound)
                    else:
                        worst = max(worst, np.inf if err > 0 else 0.0)
    uni = DesignModel.uniform(1)
    g = additive([C.linear(1.0)])
    rate = [approximation_error(g, build_basis(K, uni), uni)[0] * 12 * K ** 2 for K in (2, 4, 8, 16)]
    rate_err = max(abs(r - 1) for r in rate)
    ok = worst <= 1 and rate_err <= 1e-9
    record(2, ok, f"max err/bound {worst:.3f}; max |12 K^2 err - 1| = {rate_err:.1e}")
    assert ok


def test_criterion_03_whitening():
    rng = np.random.default_rng(103)
    designs = [
        ("uniform1", DesignModel.uniform(1), 8, 50),
        ("rank_deficient", DesignModel.uniform(2), 4, 5),
        ("skewed_product", skewed_product(2), 8, 100),
        ("fgm", fgm_uniform(0.5), 4, 40),
        ("skewed_pairwise", skewed_pairwise(0.3), 8, 200),
    ]
    sigma = 0.7
    ratios = []
    for name, model, K, n in designs:
        basis = build_basis(K, model)
        X = sample_design(model, n, rng)
        G = project(panel_function("mixed", model.d), basis, model)
        _, cov = whitening_covariance(X, G, basis, sigma, th.WHITEN_REPLICATES, rng)
        target = sigma ** 2 / n
        tol = th.WHITEN_FROB_FACTOR * sigma ** 2 * basis.size / n
        ratios.append(np.linalg.norm(cov - target * np.eye(basis.size)) / tol)
    ok = max(ratios) <= 1
    record(3, ok, "frobenius error / tolerance per design: " + ", ".join(f"{r:.2f}" for r in ratios))
    assert ok


def test_criterion_04_pilot_risk_rates():
    model = DesignModel.uniform(1)
    g = additive([C.sine(1.0, 1)])
    K = 120
    schedule = [(2 ** k, optimal_J(2 ** k, 1, 1.0, K)) for k in range(9, 15)]
    start = time.time()
    fits = {
        est: risk_rate_suite(est, schedule, th.RISK_MAX_REPLICATES, g, model, 1.0, K, np.random.default_rng(104 + i))
        for i, est in enumerate(("pilot1", "pilot2"))
    }
    elapsed = time.time() - start
    target = -2 / 3
    ok = all(abs(f["slope"] - target) <= th.RISK_SLOPE_TOL for f in fits.values()) and elapsed < 300
    record(4, ok, "; ".join(
        f"{e} slope {f['slope']:.3f} CI ({f['slope_ci'][0]:.3f}, {f['slope_ci'][1]:.3f})" for e, f in fits.items()
    ) + f"; J = {[J for _, J in schedule]}; {elapsed:.0f}s")
    assert ok


def test_criterion_05_localization_defect():
    uni = DesignModel.uniform(1)
    panel = [
        ChainScenario(panel_function("sine", 1), uni, 4096, 1.0, 64, 8, "standard/sine"),
        ChainScenario(panel_function("linear", 1), uni, 4096, 1.0, 64, 8, "standard/linear"),
        ChainScenario(panel_function("bump", 1), uni, 4096, 1.0, 64, 8, "standard/bump"),
        ChainScenario(panel_function("sine", 1), skewed_product(1), 4096, 1.0, 64, 8, "skewed/sine"),
    ]
    reports = [localization_defect(sc, 200, np.random.default_rng(105 + i)) for i, sc in enumerate(panel)]
    g = panel_function("sine", 1)
    lo, hi = regime_check(1.0, 0.0).gamma_window
    gamma = lo + 0.3 * (hi - lo)
    kstar = []
    for i, (n, K, J) in enumerate(gamma_schedule([2 ** k for k in range(10, 15)], gamma, 1, 1.0)):
        rep = localization_defect(ChainScenario(g, uni, n, 1.0, K, J, f"schedule/n={n}"), 200, np.random.default_rng(205 + i))
        reports.append(rep)
        kstar.append(rep.extra["kstar_risk"])
    decreasing = bool(np.all(np.diff(kstar) < 0))
    ok = all(r.satisfied for r in reports) and decreasing
    record(5, ok, f"{sum(r.satisfied for r in reports)}/{len(reports)} reports satisfied "
                  f"(max lhs/rhs {max(r.lhs / r.rhs for r in reports):.2f}); "
                  f"K* risk along gamma={gamma:.2f}: " + ", ".join(f"{v:.2f}" for v in kstar))
    assert ok


def test_criterion_06_equivalence():
    model = fgm_uniform(0.5)
    basis = build_basis(16, model)
    g = panel_function("mixed", 2)
    G = project(g, basis, model)
    n, sigma = 2000, 1.0
    passes = 0
    for run in range(th.EQUIVALENCE_RUNS):
        s_i, s_j, s_p = np.random.default_rng([106, run]).spawn(3)
        A = np.array([simulate_I(G, sigma, n, s_i).values for _ in range(200)])
        B = np.array([sheet_scores(g, model, basis, n, sigma, s_j).values for _ in range(200)])
        passes += two_sample_energy(A, B, th.ENERGY_PERMUTATIONS, s_p)[1] > 0.05
    kl_err = 0.0
    for name, make in MODEL_PANEL.items():
        m = make()
        b = build_basis(8, m)
        for pid in PANEL_IDS:
            rep = kl_and_tv(panel_function(pid, m.d, 0.5), b, m, n, 0.8)
            kl_err = max(kl_err, abs(rep.extra["kl"] - rep.extra["kl_scores"]))
    rate = passes / th.EQUIVALENCE_RUNS
    ok = rate >= th.EQUIVALENCE_MIN_PASS and kl_err < 1e-10
    record(6, ok, f"non-rejection {passes}/{th.EQUIVALENCE_RUNS}; max |KL formula - Gaussian KL| = {kl_err:.1e}")
    assert ok


def test_criterion_07_operator_suite():
    checks = {}
    for name, make in MODEL_PANEL.items():
        model = make()
        for G in (16, 32, 64):
            op = assemble_gamma(model, G)
            root = gamma_sqrt(op)
            R = root.matrix()
            gm, _, _ = split_gamma(model, G)
            checks.setdefault("symmetry", []).append(op.symmetry_error() <= 1e-12)
            checks.setdefault("psd", []).append(op.eigenvalues().min() >= -1e-10)
            checks.setdefault("ellipticity", []).append(gm.eigenvalues().min() >= model.rho - 1e-12)
            checks.setdefault("sqrt", []).append(np.linalg.norm(R @ R - op.matrix()) < 1e-8 * model.d * G)
            checks.setdefault("h1", []).append(abs(np.sum(h_one(root) ** 2) / G - 1) <= 1e-10)
    hs_uni = split_gamma(DesignModel.uniform(2), 16)[2]
    hs_fgm = split_gamma(fgm_uniform(0.5), 16)[2]
    checks["hs_uniform"] = [hs_uni == pytest.approx(2.0, abs=1e-12)]
    checks["hs_fgm"] = [abs(hs_fgm - 2.0556) <= 1e-4 and abs(hs_fgm - 2 * (1 + 0.25 / 9)) <= 1e-6]
    frob = {}
    for name in ("fgm", "skewed_pairwise"):
        fd = [gamma_L(MODEL_PANEL[name](), range(lo, lo + 10))[2] for lo in (1, 8, 64)]
        frob[name] = fd
        checks.setdefault("frob_decreasing", []).append(fd[0] > fd[1] > fd[2])
    failed = [k for k, v in checks.items() if not all(v)]
    ok = not failed
    record(7, ok, f"hs {hs_uni:.12f} / {hs_fgm:.9f}; frob windows "
                  + "; ".join(f"{k}: " + ", ".join(f"{v:.2e}" for v in fd) for k, fd in frob.items())
                  + (f"; failed {failed}" if failed else ""))
    assert ok


def test_criterion_08_independent_case():
    rng = np.random.default_rng(108)
    T, G = 1024, 64
    uni = [HistogramDensity.uniform(), HistogramDensity.uniform()]
    root = gamma_sqrt(assemble_gamma(DesignModel.uniform(2), G))
    drift_err = 0.0
    for pid in ("linear", "sine", "bump", "mixed"):
        dec = center_components(panel_function(pid, 2), uni)
        q = simulate_Q(dec, uni, 100, 1.0, T, rng)["paths"]
        r = simulate_Rn(root, dec, 100, 1.0, T, rng)
        drift_err = max(drift_err, float(np.max(np.abs(q.drift - r.drift))))
    dec = center_components(panel_function("mixed", 2), uni)
    reps = 10_000
    q_inc = np.array([simulate_Q(dec, uni, 10, 1.0, 16, rng)["paths"].noise_increments()[5] for _ in range(reps)])
    s_inc = np.array([simulate_S(panel_function("mixed", 2), skewed_pairwise(0.4), 10, 1.0, 16, rng).noise_increments()[5]
                      for _ in range(reps)])
    corr = max(abs(np.corrcoef(q_inc.T)[0, 1]), abs(np.corrcoef(s_inc.T)[0, 1]))
    ok = drift_err < 2 / T and corr < th.CORRELATION_TOL
    record(8, ok, f"max drift gap {drift_err:.2e} (< {2 / T:.2e}); max cross correlation {corr:.3f}")
    assert ok


def test_criterion_09_regime():
    a = regime_check(1.0, 0.0)
    b = regime_check(0.80, 0.0)
    c = regime_check(1.0, 1 / 23)
    ok = (
        a.feasible
        and np.allclose(a.gamma_window, (0.5, 2 / 3), rtol=0, atol=1e-15)
        and not b.feasible
        and not c.feasible
    )
    record(9, ok, f"(1,0) feasible={a.feasible} window={tuple(round(v, 4) for v in a.gamma_window)}; "
                  f"beta=0.8 feasible={b.feasible}; alpha=1/23 feasible={c.feasible}")
    assert ok


def test_criterion_10_empirical_gamma():
    scenarios = [
        ("fgm", fgm_uniform(0.5), 500, range(1, 5)),
        ("skewed_pairwise", skewed_pairwise(0.4), 1000, range(1, 7)),
        ("uniform2", DesignModel.uniform(2), 200, range(3, 7)),
        ("skewed_product3", skewed_product(3), 2000, range(1, 7)),
        ("fgm3", fgm_uniform(0.3, d=3), 1000, range(1, 10)),
    ]
    reps = 200
    lines, ok = [], True
    for i, (name, model, n, L) in enumerate(scenarios):
        target, _, _ = gamma_L(model, L)
        rng = np.random.default_rng([110, i])
        ests, bound = [], None
        for child in rng.spawn(reps):
            est, bound = empirical_gamma_L(sample_design(model, n, child), L, model.rho)
            ests.append(est)
        ests = np.array(ests)
        mse = float(np.mean(np.sum((ests - target) ** 2, axis=(1, 2))))
        # unbiasedness: the mean matrix is within 3 standard errors of the
        # target in Frobenius norm, where se^2 sums the entrywise se^2
        se = float(np.sqrt(np.sum(ests.var(axis=0, ddof=1)) / reps))
        dist = float(np.linalg.norm(ests.mean(axis=0) - target))
        good = mse <= bound and dist <= 3 * se
        ok &= good
        lines.append(f"{name}: mse {mse:.2e} <= {bound:.2e}, |mean - target| {dist / se:.2f} se")
    record(10, ok, "; ".join(lines))
    assert ok


def test_criterion_11_reproducibility(tmp_path):
    from addequiv import cli
    from addequiv.io import file_digest

    config = {
        "seed": 111, "n": 128, "d": 2, "K": 4, "J": 2, "G": 8, "sigma": 1.0, "reps": 4,
        "functions": ["mixed"], "design": {"family": "pairwise", "theta": 0.5},
        "suites": ["simulate", "risk", "equivalence", "operator", "regime"],
        "risk_schedule": [64, 128, 256, 512, 1024], "risk_K": 12,
        "equivalence_runs": 2, "equivalence_samples": 100, "permutations": 50,
    }
    cfg = tmp_path / "scenario.json"
    cfg.write_text(json.dumps(config))
    digests = []
    for k, threads in enumerate(("1", "1", "4")):
        out = tmp_path / f"run{k}"
        code = cli.main(["run", "--config", str(cfg), "--threads", threads, "--out", str(out)])
        assert code in (0, 1)
        digests.append({p.name: file_digest(p) for p in sorted(out.glob("*.csv"))})
    ok = digests[0] == digests[1] == digests[2] and len(digests[0]) >= 7
    record(11, ok, f"{len(digests[0])} CSV files identical across 3 runs (threads 1, 1, 4)")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
