"""Suite orchestration: turn a ``Scenario`` into CSV/JSON artifacts.

Each suite is a pure function of the scenario that returns its tables and
reports; the caller writes them from a single thread, so the worker count
never changes any emitted byte.
"""

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import thresholds as th
from .basis import build_basis, project
from .chain import make_coarse, optimal_J, simulate_A, simulate_I, split_pipeline
from .design import sample_design
from .diagnostics import (
    BoundReport,
    ChainScenario,
    hellinger_bound,
    kl_and_tv,
    localization_defect,
    regime_check,
    risk_rate_suite,
    two_sample_energy,
)
from .io import file_digest, write_csv, write_json
from .operator import (
    assemble_gamma,
    empirical_gamma_L,
    gamma_L,
    gamma_sqrt,
    h_one,
    operator_norm,
    split_gamma,
)
from .seeding import replicate_rng, suite_rng
from .whitenoise import sheet_scores

STAGES = ("D1", "D2", "E", "F", "G", "H", "I")


@dataclass
class SuiteResult:
    tables: dict = field(default_factory=dict)  # file name -> (header, rows)
    documents: dict = field(default_factory=dict)  # file name -> payload
    reports: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)  # name -> bool


def resolve_J(sc, K=None, n=None):
    K = sc.K if K is None else K
    n = sc.n if n is None else n
    if sc.J == "auto":
        return optimal_J(n, sc.d, sc.beta, K, sc.J_constant)
    return int(sc.J)


def default_gamma(sc):
    """Schedule exponent: the configured one, else 30% into the feasible window."""
    if sc.gamma is not None:
        return sc.gamma
    lo, hi = regime_check(sc.beta, sc.alpha).gamma_window
    return lo + 0.3 * (hi - lo)


def gamma_schedule(ns, gamma, d, beta, J_constant=1.0):
    """``(n, K, J)`` with ``K`` a multiple of the coarse resolution nearest ``n^gamma``."""
    out = []
    for n in ns:
        J0 = max(2, int(np.floor(J_constant * (n / d ** 2) ** (1.0 / (2 * beta + 1)) + 1e-9)))
        K = J0 * max(1, int(round(n ** gamma / J0)))
        out.append((int(n), K, optimal_J(n, d, beta, K, J_constant)))
    return out


# suites -----------------------------------------------------------------------
def suite_regime(sc):
    verdict = regime_check(sc.beta, sc.alpha)
    res = SuiteResult()
    res.documents["regime.json"] = verdict.to_dict()
    return res


def suite_simulate(sc):
    model = sc.build_model()
    basis = build_basis(sc.K, model)
    J = resolve_J(sc)
    coarse = make_coarse(basis, J, model)
    res = SuiteResult()
    rows = []
    for name, g in sc.build_functions().items():
        G = project(g, basis, model)
        for rep in range(sc.reps):
            rng = replicate_rng(sc.seed, f"simulate/{name}", rep)
            s_data, s_chain = rng.spawn(2)
            sample = simulate_A(g, model, sc.n, sc.sigma, s_data)
            out = split_pipeline(sample, basis, coarse, sc.sigma, s_chain, G_n=G)
            for stage in STAGES:
                for k, v in enumerate(out[stage].values):
                    rows.append((name, stage, rep, k, v))
        res.reports.append(hellinger_bound(g, basis, model, sc.n, sc.sigma, scenario=name))
        res.reports.append(kl_and_tv(g, basis, model, sc.n, sc.sigma, scenario=name))
    res.tables["stages.csv"] = (["function", "stage", "replicate", "index", "value"], rows)
    return res


def suite_risk(sc):
    model = sc.build_model()
    name, g = next(iter(sc.build_functions().items()))
    schedule = [(n, resolve_J(sc, sc.risk_K, n)) for n in sc.risk_schedule]
    res = SuiteResult()
    rows, fits = [], {}
    target = -2 * sc.beta / (2 * sc.beta + 1)
    for est in ("pilot1", "pilot2"):
        fit = risk_rate_suite(est, schedule, sc.reps, g, model, sc.sigma, sc.risk_K, suite_rng(sc.seed, f"risk/{est}"))
        for n, J, r, se in zip(fit["n"], fit["J"], fit["risk"], fit["risk_se"]):
            rows.append((est, n, J, r, se))
        fit["target_slope"] = target
        fit["within_tolerance"] = abs(fit["slope"] - target) <= th.RISK_SLOPE_TOL
        fits[est] = fit
        res.checks[f"slope_{est}"] = fit["within_tolerance"]
    res.tables["risk.csv"] = (["estimator", "n", "J", "risk", "risk_se"], rows)

    gamma = default_gamma(sc)
    loc_rows, kstar = [], []
    for n, K, J in gamma_schedule(sc.risk_schedule, gamma, sc.d, sc.beta, sc.J_constant):
        rep = localization_defect(
            ChainScenario(g, model, n, sc.sigma, K, J, f"{name}/n={n}"),
            max(sc.reps, th.LOCALIZATION_MIN_REPS),
            suite_rng(sc.seed, f"localization/{n}"),
        )
        res.reports.append(rep)
        kstar.append(rep.extra["kstar_risk"])
        loc_rows.append((n, K, J, rep.lhs, rep.lhs_se, rep.rhs, rep.extra["kstar_risk"], rep.satisfied))
    decreasing = bool(np.all(np.diff(kstar) < 0))
    res.checks["kstar_risk_decreasing"] = decreasing
    res.tables["localization.csv"] = (
        ["n", "K", "J", "lhs", "lhs_se", "rhs", "kstar_risk", "satisfied"],
        loc_rows,
    )
    res.documents["risk.json"] = {
        "function": name,
        "fits": fits,
        "gamma": gamma,
        "kstar_risk_decreasing": decreasing,
    }
    return res


def suite_equivalence(sc):
    model = sc.build_model()
    basis = build_basis(sc.K, model)
    res = SuiteResult()
    rows, summary = [], {}
    for name, g in sc.build_functions().items():
        G = project(g, basis, model)
        passes = 0
        for run in range(sc.equivalence_runs):
            rng = replicate_rng(sc.seed, f"equivalence/{name}", run)
            s_i, s_j, s_perm = rng.spawn(3)
            A = np.array([simulate_I(G, sc.sigma, sc.n, s_i).values for _ in range(sc.equivalence_samples)])
            B = np.array(
                [sheet_scores(g, model, basis, sc.n, sc.sigma, s_j).values for _ in range(sc.equivalence_samples)]
            )
            stat, p = two_sample_energy(A, B, sc.permutations, s_perm)
            passes += p > 0.05
            rows.append((name, run, stat, p))
        rate = passes / sc.equivalence_runs
        summary[name] = {"non_rejection_rate": rate}
        res.checks[f"equivalence_{name}"] = rate >= th.EQUIVALENCE_MIN_PASS
        res.reports.append(kl_and_tv(g, basis, model, sc.n, sc.sigma, scenario=name))
    res.tables["equivalence.csv"] = (["function", "run", "statistic", "p_value"], rows)
    res.documents["equivalence.json"] = summary
    return res


def suite_operator(sc):
    model = sc.build_model()
    res = SuiteResult()
    op = assemble_gamma(model, sc.G)
    root = gamma_sqrt(op)
    gm, ghs, hs = split_gamma(model, sc.G)
    R = root.matrix()
    sqrt_err = float(np.linalg.norm(R @ R - op.matrix()))
    h1 = h_one(root)
    ellip = float(gm.eigenvalues().min())
    d, rho = model.d, model.rho
    res.reports += [
        BoundReport("ellipticity", rho, ellip, 0.0, model.hash()),
        BoundReport("hs_norm", hs, d * (d - 1) / rho ** 2, 0.0, model.hash()),
        BoundReport("operator_norm", operator_norm(op), d / rho, 0.0, model.hash()),
    ]
    frob_rows = []
    for lo in sc.gamma_L_windows:
        _, _, fd = gamma_L(model, range(lo, lo + sc.gamma_L_size))
        frob_rows.append((lo, fd))
    L = range(1, 1 + min(sc.gamma_L_size, 4))
    target, _, _ = gamma_L(model, L)
    rng = suite_rng(sc.seed, "operator/empirical")
    errs = []
    bound = None
    for child in rng.spawn(sc.reps):
        X = sample_design(model, sc.n, child)
        est, bound = empirical_gamma_L(X, L, rho)
        errs.append(float(np.sum((est - target) ** 2)))
    errs = np.array(errs)
    se = float(errs.std(ddof=1) / np.sqrt(len(errs))) if len(errs) > 1 else 0.0
    res.reports.append(BoundReport("empirical_gamma_mse", float(errs.mean()), bound, se, model.hash()))
    res.tables["gamma_L.csv"] = (["min_L", "frob_dist"], frob_rows)
    A = op.matrix()
    res.tables["gamma.csv"] = (
        ["row", "col", "value"],
        [(int(r), int(c), A[r, c]) for r, c in zip(*np.nonzero(A))],
    )
    res.documents["operator.json"] = {
        "d": d,
        "G": sc.G,
        "kind": op.kind.value,
        "model_hash": model.hash(),
        "symmetry_error": op.symmetry_error(),
        "min_eigenvalue": float(op.eigenvalues().min()),
        "sqrt_frobenius_error": sqrt_err,
        "hs_norm_sq": hs,
        "h1_norm_sq": float(np.sum(h1 ** 2) / sc.G),
        "gamma_M_min_eigenvalue": ellip,
        "rho": rho,
    }
    res.checks["sqrt_recomposition"] = sqrt_err <= th.OPERATOR_SQRT_FROB * d * sc.G
    return res


SUITE_FUNCS = {
    "simulate": suite_simulate,
    "risk": suite_risk,
    "equivalence": suite_equivalence,
    "operator": suite_operator,
    "regime": suite_regime,
}


def run_scenario(sc, out_dir, threads=1, config_echo=None):
    """Run the selected suites and write every artifact into ``out_dir``.

    Returns the manifest dictionary; ``manifest['violations']`` counts
    unsatisfied bound reports.
    """
    os.makedirs(out_dir, exist_ok=True)
    start = time.time()
    suites = list(dict.fromkeys(sc.suites))
    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        futures = {s: pool.submit(SUITE_FUNCS[s], sc) for s in suites}
        results = {s: futures[s].result() for s in suites}

    outputs = {}
    reports = []
    checks = {}
    for s in suites:
        res = results[s]
        for fname, (header, rows) in res.tables.items():
            path = os.path.join(out_dir, fname)
            write_csv(path, header, rows)
            outputs[fname] = file_digest(path)
        for fname, payload in res.documents.items():
            path = os.path.join(out_dir, fname)
            write_json(path, payload)
            outputs[fname] = file_digest(path)
        for r in res.reports:
            reports.append({"suite": s, **r.to_dict()})
        checks.update(res.checks)
    if reports:
        write_json(os.path.join(out_dir, "reports.json"), reports)
        write_csv(
            os.path.join(out_dir, "summary.csv"),
            ["suite", "name", "scenario", "lhs", "lhs_se", "rhs", "satisfied"],
            [(r["suite"], r["name"], r["scenario"], r["lhs"], r["lhs_se"], r["rhs"], r["satisfied"]) for r in reports],
        )
    verdict = regime_check(sc.beta, sc.alpha)
    model = sc.build_model()
    manifest = {
        "library_version": __version__,
        "seed": sc.seed,
        "scenario_hash": sc.digest(),
        "model_hash": model.hash(),
        "config": config_echo if config_echo is not None else sc.model_dump(),
        "resolved": sc.model_dump(),
        "suites": suites,
        "regime": verdict.to_dict(),
        "regime_flag": "feasible" if verdict.feasible else "infeasible (run for negative-result study)",
        "outputs": outputs,
        "checks": checks,
        "violations": sum(not r["satisfied"] for r in reports),
        "wall_time_s": round(time.time() - start, 3),
        "threads": int(threads),
    }
    write_json(os.path.join(out_dir, "manifest.json"), manifest)
    return manifest
