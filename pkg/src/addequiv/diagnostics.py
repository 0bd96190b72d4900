"""Bound evaluation and Monte Carlo verification suites."""

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from . import thresholds as th
from .basis import approximation_error, build_basis, lemma_constant, project
from .chain import (
    make_coarse,
    pilot_estimator_1,
    pilot_estimator_2,
    pilot_risk,
    pilot_truth,
    simulate_A,
    split_pipeline,
    stage_D,
    RegressionSample,
)
from .errors import ParameterError


@dataclass(frozen=True)
class BoundReport:
    """``satisfied`` is ``lhs <= rhs + 2 se``."""

    name: str
    lhs: float
    rhs: float
    lhs_se: float = 0.0
    scenario: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def satisfied(self):
        return bool(self.lhs <= self.rhs + th.REPORT_SE_MULTIPLIER * self.lhs_se)

    def to_dict(self):
        out = asdict(self)
        out["satisfied"] = self.satisfied
        return out


@dataclass(frozen=True)
class RegimeVerdict:
    beta: float
    alpha: float
    condition_T1: bool
    gamma_window: tuple

    @property
    def feasible(self):
        lo, hi = self.gamma_window
        return bool(self.condition_T1 and lo < hi)

    def to_dict(self):
        return {
            "beta": self.beta,
            "alpha": self.alpha,
            "condition_T1": self.condition_T1,
            "gamma_window": list(self.gamma_window),
            "feasible": self.feasible,
        }


# closed-form bounds ---------------------------------------------------------
def hellinger_sq_gaussian(delta_sq_sum, sigma):
    """``H^2`` between ``N(a, s^2 I)`` and ``N(b, s^2 I)`` with ``||a-b||^2 = delta_sq_sum``."""
    return 2.0 * (1.0 - np.exp(-np.asarray(delta_sq_sum) / (8.0 * sigma ** 2)))


def hellinger_bound(g, basis, model, n, sigma, reps=0, rng=None, scenario=""):
    """Expected squared Hellinger distance between regressions on ``g`` and ``g^[K*]``.

    ``rhs`` plugs the quadrature value of ``||g - g^[K*]||^2`` into
    ``2{1 - exp(-n err / (8 sigma^2))}``; ``extra['crude']`` uses the sieve
    bias bound instead. With ``reps > 0`` the left side is the Monte Carlo
    mean of the exact conditional Hellinger distance over design draws,
    otherwise it equals the right side (Jensen's inequality is the only gap).
    """
    err, bias_bound = approximation_error(g, basis, model)
    rhs = float(hellinger_sq_gaussian(n * err, sigma))
    crude = float(hellinger_sq_gaussian(n * bias_bound, sigma))
    if reps > 0:
        G = project(g, basis, model)
        from .design import sample_design

        vals = []
        for _ in range(reps):
            X = sample_design(model, n, rng)
            diff = g(X) - basis.evaluate(X) @ G
            vals.append(hellinger_sq_gaussian(diff @ diff, sigma))
        vals = np.array(vals)
        lhs, se = float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(reps))
    else:
        lhs, se = rhs, 0.0
    extra = {"err_sq": err, "crude": crude, "n": n, "K": basis.K}
    return BoundReport("hellinger", lhs, rhs, se, scenario, extra)


def kl_tv(err_sq, n, sigma):
    kl = n * err_sq / (2.0 * sigma ** 2)
    return kl, float(np.sqrt(1.0 - np.exp(-kl)))


def gaussian_kl(mean0, cov0, mean1, cov1):
    """``KL(N(mean0, cov0) || N(mean1, cov1))``."""
    mean0, mean1 = np.atleast_1d(mean0), np.atleast_1d(mean1)
    cov0, cov1 = np.atleast_2d(cov0), np.atleast_2d(cov1)
    k = mean0.shape[0]
    c1 = np.linalg.cholesky(cov1)
    solve = np.linalg.solve
    diff = mean1 - mean0
    maha = np.sum(solve(c1, diff) ** 2)
    tr = np.trace(solve(cov1, cov0))
    _, ld0 = np.linalg.slogdet(cov0)
    _, ld1 = np.linalg.slogdet(cov1)
    return 0.5 * float(tr + maha - k + ld1 - ld0)


def kl_and_tv(g, basis, model, n, sigma, scenario=""):
    """KL between the sheet experiments on ``g`` and ``g^[K*]`` and the TV bound.

    The closed form ``(n / 2 sigma^2) err`` is cross-checked against the
    Gaussian KL of the score vectors extended by the residual direction.
    """
    from .whitenoise import score_law

    err, _ = approximation_error(g, basis, model)
    kl, tv = kl_tv(err, n, sigma)
    mJ, cJ = score_law(g, model, basis, n, sigma, "J", extended=True)
    mK, cK = score_law(g, model, basis, n, sigma, "K", extended=True)
    kl_scores = gaussian_kl(mJ, cJ, mK, cK)
    extra = {"kl": kl, "tv_bound": tv, "kl_scores": kl_scores, "err_sq": err}
    return BoundReport("kl_tv", kl_scores, kl, th.GAUSSIAN_KL_TOL / 2, scenario, extra)


# regime ------------------------------------------------------------------------
def regime_check(beta, alpha):
    if not 0.0 < beta <= 1.0 or alpha < 0.0:
        raise ParameterError("need beta in (0, 1] and alpha >= 0")
    lhs = (2 * beta + 1) * (alpha + 1) + 4 * alpha * beta * (4 * beta + 1)
    cond = bool(lhs < 4 * beta ** 2 - th.REGIME_SLACK)
    window = ((1 + alpha) / (2 * beta), (2 * beta - 2 * alpha * (4 * beta + 1)) / (2 * beta + 1))
    return RegimeVerdict(float(beta), float(alpha), cond, (float(window[0]), float(window[1])))


# energy test --------------------------------------------------------------------
def energy_statistic(D, n):
    """Energy two-sample statistic from a pooled distance matrix, first ``n`` rows = A."""
    m = D.shape[0] - n
    ab = D[:n, n:].mean()
    aa = D[:n, :n].sum() / (n * n)
    bb = D[n:, n:].sum() / (m * m)
    return n * m / (n + m) * (2 * ab - aa - bb)


def two_sample_energy(A, B, permutations=th.ENERGY_PERMUTATIONS, rng=None):
    """Energy distance statistic with a permutation p-value."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if B.ndim == 1:
        B = B[:, None]
    if A.shape[1] != B.shape[1]:
        raise ParameterError("samples must have the same dimension")
    if min(len(A), len(B)) < th.ENERGY_MIN_SAMPLES:
        raise ParameterError(f"need at least {th.ENERGY_MIN_SAMPLES} samples per group")
    rng = np.random.default_rng() if rng is None else rng
    pooled = np.vstack([A, B])
    D = cdist(pooled, pooled)
    n = len(A)
    stat = energy_statistic(D, n)
    # all permutations at once: with indicator columns a, the within-A sum is
    # a^T D a and the cross sum is a^T D (1 - a)
    N = len(pooled)
    ind = np.zeros((N, permutations))
    for c in range(permutations):
        ind[rng.permutation(N)[:n], c] = 1.0
    Da = D @ ind
    row = D.sum(axis=1)
    aa = np.einsum("ip,ip->p", ind, Da)
    ab = ind.T @ row - aa
    bb = D.sum() - 2 * ab - aa
    m = N - n
    perm_stats = n * m / N * (2 * ab / (n * m) - aa / n ** 2 - bb / m ** 2)
    hits = int(np.sum(perm_stats >= stat - 1e-12 * abs(stat)))
    return float(stat), float((hits + 1) / (permutations + 1))


# Monte Carlo suites --------------------------------------------------------------
@dataclass
class ChainScenario:
    g: object
    model: object
    n: int
    sigma: float
    K: int
    J: int
    label: str = ""


def _mean_se(v):
    v = np.asarray(v, dtype=float)
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(len(v))) if len(v) > 1 else 0.0


def localization_defect(scenario, reps, rng, basis=None, coarse=None):
    """Monte Carlo check of the recentering defect against the pilot risk.

    lhs: ``(n-m) E||(M2 - I)(G_n - G1_hat)||^2``; rhs: the basis sup
    constant times ``E||g - g1_hat||^2``. Also reports ``K* E||g - g1_hat||^2``.
    """
    if reps < th.LOCALIZATION_MIN_REPS:
        raise ParameterError(f"localization_defect needs reps >= {th.LOCALIZATION_MIN_REPS}")
    sc = scenario
    basis = basis or build_basis(sc.K, sc.model)
    coarse = coarse or make_coarse(basis, sc.J, sc.model)
    G = project(sc.g, basis, sc.model)
    Gs, bias = pilot_truth(sc.g, coarse, sc.model)
    factor = lemma_constant(sc.K, sc.model.d) / sc.model.rho
    lhs, risk = [], []
    for child in rng.spawn(reps):
        s_data, s_chain = child.spawn(2)
        sample = simulate_A(sc.g, sc.model, sc.n, sc.sigma, s_data)
        out = split_pipeline(sample, basis, coarse, sc.sigma, s_chain, G_n=G)
        m = out["m"]
        v = (out["M2"] - np.eye(basis.size)) @ (G - out["pilot1"].lifted_G_hat)
        lhs.append((sc.n - m) * float(v @ v))
        risk.append(pilot_risk(out["pilot1"], Gs, bias))
    l_mean, l_se = _mean_se(lhs)
    r_mean, r_se = _mean_se(risk)
    extra = {
        "risk": r_mean,
        "risk_se": r_se,
        "rhs_se": factor * r_se,
        "factor": factor,
        "kstar_risk": basis.size * r_mean,
        "n": sc.n,
        "K": sc.K,
        "J": sc.J,
    }
    return BoundReport("localization_defect", l_mean, factor * r_mean, l_se, sc.label, extra)


def pilot_risks(estimator_id, g, model, n, sigma, K, J, reps, rng, basis=None):
    """Per-replicate ``||g - g_hat||^2`` for ``pilot1`` or ``pilot2``."""
    if estimator_id not in ("pilot1", "pilot2"):
        raise ParameterError(f"unknown estimator {estimator_id!r}")
    basis = basis or build_basis(K, model)
    coarse = make_coarse(basis, J, model)
    Gs, bias = pilot_truth(g, coarse, model)
    m = n // 2
    out = []
    if estimator_id == "pilot1":
        for child in rng.spawn(reps):
            s_data, s_white = child.spawn(2)
            sample = simulate_A(g, model, m, sigma, s_data)
            Z1, M1 = stage_D(RegressionSample(sample.X, sample.Y, sigma, "A1"), basis, s_white)
            out.append(pilot_risk(pilot_estimator_1(Z1, M1, basis, coarse), Gs, bias))
    else:
        G = project(g, basis, model)
        scale = sigma / np.sqrt(n - m)
        for child in rng.spawn(reps):
            zeta2 = G + scale * child.standard_normal(basis.size)
            out.append(pilot_risk(pilot_estimator_2(zeta2, basis, coarse), Gs, bias))
    return np.array(out)


def fit_slope(ns, risks):
    x = np.log(np.asarray(ns, dtype=float))
    y = np.log(np.asarray(risks, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def risk_rate_suite(estimator_id, schedule, reps, g, model, sigma, K, rng, bootstrap=th.RISK_BOOTSTRAP):
    """Monte Carlo pilot risks along ``schedule`` = [(n, J), ...] and the log-log slope.

    The confidence interval resamples replicates within each ``n``.
    """
    ns = [int(n) for n, _ in schedule]
    if len(ns) < 4 or max(ns) < 16 * min(ns):
        raise ParameterError("schedule needs at least 4 sample sizes spanning a factor of 16")
    basis = build_basis(K, model)
    streams = rng.spawn(len(schedule) + 1)
    per_n = [
        pilot_risks(estimator_id, g, model, n, sigma, K, J, reps, s, basis)
        for (n, J), s in zip(schedule, streams)
    ]
    means = [float(r.mean()) for r in per_n]
    slope = fit_slope(ns, means)
    boot = streams[-1]
    slopes = []
    for _ in range(bootstrap):
        resampled = [r[boot.integers(0, len(r), len(r))].mean() for r in per_n]
        slopes.append(fit_slope(ns, resampled))
    lo, hi = np.quantile(slopes, [0.025, 0.975])
    return {
        "estimator": estimator_id,
        "n": ns,
        "J": [int(J) for _, J in schedule],
        "risk": means,
        "risk_se": [float(r.std(ddof=1) / np.sqrt(len(r))) for r in per_n],
        "slope": slope,
        "slope_ci": (float(lo), float(hi)),
    }


def whitening_covariance(X, G, basis, sigma, reps, rng):
    """Mean and covariance of stage-D vectors over noise draws with ``X`` fixed.

    The target law is ``N(M^{1/2} G, sigma^2 I / n)``.
    """
    from .chain import ScoreVector, empirical_gram, whiten

    X = np.atleast_2d(X)
    n = X.shape[0]
    psi = basis.evaluate(X)
    mu = psi @ G
    M = empirical_gram(X, basis)
    out = np.empty((reps, basis.size))
    for r, child in enumerate(rng.spawn(reps)):
        s_noise, s_white = child.spawn(2)
        Z = psi.T @ (mu + sigma * s_noise.standard_normal(n)) / n
        out[r] = whiten(ScoreVector(Z, sigma / np.sqrt(n), "C"), M, sigma, n, s_white).values
    return out.mean(axis=0), np.cov(out, rowvar=False)
