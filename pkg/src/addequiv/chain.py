"""Simulation of the regression experiment and the kernels that reduce it.

Stages, in order: regression data (A), regression with the projected
function (B), the sufficient score vector (C), its whitened version (D), the
sample split with pilot recentering (E, F, G, H) and finally the
covariate-free Gaussian vector (I). The independent-design target (R) lives
here as well because it is again plain regression data.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .basis import build_basis, level_gram, project, refine_levels, residual_norm_sq
from .design import DesignModel, HistogramDensity, sample_design
from .errors import AssumptionError, NonPSDError, ParameterError

PSD_CLAMP = 1e-12
ZERO_EIGENVALUE = 1e-12


@dataclass
class RegressionSample:
    X: np.ndarray
    Y: np.ndarray
    sigma: float
    stage: str = "A"

    @property
    def n(self):
        return self.Y.shape[0]


@dataclass
class ScoreVector:
    values: np.ndarray
    noise_scale: float
    stage: str
    conditioning: Optional[np.ndarray] = field(default=None, repr=False)


@dataclass
class PilotEstimate:
    coarse_J: int
    g_hat_coeffs: np.ndarray
    lifted_G_hat: np.ndarray


@dataclass(frozen=True)
class CoarseProjector:
    """Coarse basis on ``J`` bins together with ``<psi*_l, psi_k>_{p_X}``."""

    basis: object
    coarse: object
    cross: np.ndarray

    @property
    def J(self):
        return self.coarse.K


def make_coarse(basis, J, model):
    if J < 2 or basis.K % J:
        raise ParameterError(f"coarse resolution J = {J} must be >= 2 and divide K = {basis.K}")
    coarse = build_basis(J, model)
    fine_levels = refine_levels(coarse.levels, basis.K // J)
    cross = level_gram(fine_levels, basis.levels, model, basis.K)
    return CoarseProjector(basis, coarse, cross)


def optimal_J(n, d, beta, K, constant=1.0):
    """Largest divisor ``J >= 2`` of ``K`` below ``constant * (n / d^2)^{1/(2 beta + 1)}``."""
    target = constant * (n / d ** 2) ** (1.0 / (2.0 * beta + 1.0))
    divisors = [j for j in range(2, K + 1) if K % j == 0 and j <= target * (1 + 1e-12)]
    if not divisors:
        raise ParameterError(f"no divisor of K = {K} in [2, {target:.4g}]; enlarge K or n")
    return max(divisors)


# stage A / B ---------------------------------------------------------------
def simulate_A(g, model, n, sigma, rng):
    if n < 1 or not sigma > 0:
        raise ParameterError("need n >= 1 and sigma > 0")
    X = sample_design(model, n, rng)
    Y = g(X) + sigma * rng.standard_normal(n)
    return RegressionSample(X, Y, float(sigma), "A")


def simulate_B(g, basis, model, n, sigma, rng):
    """Regression data whose mean is the sieve projection of ``g``."""
    if n < 1 or not sigma > 0:
        raise ParameterError("need n >= 1 and sigma > 0")
    G = project(g, basis, model)
    X = sample_design(model, n, rng)
    Y = basis.evaluate(X) @ G + sigma * rng.standard_normal(n)
    return RegressionSample(X, Y, float(sigma), "B")


# stage C / D ---------------------------------------------------------------
def sufficient_statistic_Z(sample, basis):
    psi = basis.evaluate(sample.X)
    Z = psi.T @ sample.Y / sample.n
    return ScoreVector(Z, sample.sigma / np.sqrt(sample.n), "C", sample.X)


def empirical_gram(X, basis):
    psi = basis.evaluate(X)
    M = psi.T @ psi / psi.shape[0]
    return 0.5 * (M + M.T)


def psd_eigh(M, clamp=PSD_CLAMP):
    """Eigendecomposition with eigenvalues in ``[-clamp, 0)`` set to zero."""
    w, U = np.linalg.eigh(0.5 * (M + M.T))
    if w.min() < -clamp:
        raise NonPSDError(f"matrix has eigenvalue {w.min():.3e} below -{clamp}")
    return np.maximum(w, 0.0), U


def psd_sqrt(M, clamp=PSD_CLAMP):
    w, U = psd_eigh(M, clamp)
    return (U * np.sqrt(w)) @ U.T


def whiten(Z, M_hat, sigma, n, rng):
    """Map a stage-C vector to one with conditional law ``N(M^{1/2} G, sigma^2 I / n)``.

    Coordinates along null directions of ``M_hat`` carry no information and
    are replaced by fresh ``N(0, sigma^2/n)`` noise.
    """
    w, U = psd_eigh(M_hat)
    rotated = U.T @ Z.values
    null = w <= ZERO_EIGENVALUE
    out = np.empty_like(rotated)
    out[~null] = rotated[~null] / np.sqrt(w[~null])
    out[null] = sigma / np.sqrt(n) * rng.standard_normal(int(null.sum()))
    return ScoreVector(U @ out, sigma / np.sqrt(n), "D", Z.conditioning)


def stage_D(sample, basis, rng):
    """Stages C and D for one batch; returns ``(Z_D, M_hat)``."""
    Z = sufficient_statistic_Z(sample, basis)
    M = empirical_gram(sample.X, basis)
    return whiten(Z, M, sample.sigma, sample.n, rng), M


# pilots ------------------------------------------------------------------
def _pilot(vector, coarse):
    c = coarse.cross @ vector
    return PilotEstimate(coarse.J, c, coarse.cross.T @ c)


def pilot_estimator_1(Z1, M1, basis, coarse):
    """Coarse pilot from the first half: project ``M^{1/2} Z`` onto the coarse space."""
    if coarse.basis.K != basis.K:
        raise ParameterError("coarse projector was built for another basis")
    return _pilot(psd_sqrt(M1) @ Z1.values, coarse)


def pilot_estimator_2(zeta2, basis, coarse):
    if coarse.basis.K != basis.K:
        raise ParameterError("coarse projector was built for another basis")
    return _pilot(np.asarray(getattr(zeta2, "values", zeta2)), coarse)


def pilot_risk(estimate, coarse_target, bias_sq):
    """``||g - g_hat||^2`` from the coarse coefficients of ``g`` and the coarse bias."""
    diff = estimate.g_hat_coeffs - coarse_target
    return float(bias_sq + diff @ diff)


def pilot_truth(g, coarse, model):
    """Coarse coefficients of ``g`` and its squared distance to the coarse space."""
    Gs = project(g, coarse.coarse, model)
    bias = residual_norm_sq(g, coarse.coarse.function_levels(Gs), model, coarse.J)
    return Gs, max(bias, 0.0)


# localization kernels ---------------------------------------------------------
def recenter(Z, M_sqrt, G_hat):
    """``Z - M^{1/2} G_hat + G_hat``; invertible given ``(M, G_hat)``."""
    return Z - M_sqrt @ G_hat + G_hat


def uncenter(Z_star, M_sqrt, G_hat):
    return Z_star + M_sqrt @ G_hat - G_hat


def split_pipeline(sample, basis, coarse, sigma, rng, G_n=None, mode="splice"):
    """Run the localization chain on one regression sample.

    ``mode="splice"`` feeds the F and H legs with ideal Gaussian vectors
    ``N(G_n, sigma^2 I / size)`` exactly as in the target experiments;
    ``mode="end_to_end"`` feeds the recentered vectors forward instead.
    Returns a dict of stage records plus the pilots and half Gram matrices.
    """
    n = sample.n
    if n < 4:
        raise ParameterError("split_pipeline needs n >= 4")
    if mode not in ("splice", "end_to_end"):
        raise ParameterError(f"unknown mode {mode!r}")
    if mode == "splice" and G_n is None:
        raise ParameterError("splice mode needs the true coefficient vector G_n")
    m = n // 2
    s_white1, s_white2, s_splice2, s_splice1 = rng.spawn(4)
    half1 = RegressionSample(sample.X[:m], sample.Y[:m], sigma, "A1")
    half2 = RegressionSample(sample.X[m:], sample.Y[m:], sigma, "A2")
    Z1, M1 = stage_D(half1, basis, s_white1)
    Z2, M2 = stage_D(half2, basis, s_white2)
    R1, R2 = psd_sqrt(M1), psd_sqrt(M2)

    pilot1 = pilot_estimator_1(Z1, M1, basis, coarse)
    Z2_star = recenter(Z2.values, R2, pilot1.lifted_G_hat)
    E = ScoreVector(Z2_star, sigma / np.sqrt(n - m), "E")

    if mode == "splice":
        zeta2 = G_n + sigma / np.sqrt(n - m) * s_splice2.standard_normal(basis.size)
    else:
        zeta2 = Z2_star
    F = ScoreVector(zeta2, sigma / np.sqrt(n - m), "F")

    pilot2 = pilot_estimator_2(zeta2, basis, coarse)
    zeta1_star = recenter(Z1.values, R1, pilot2.lifted_G_hat)
    Gs = ScoreVector(zeta1_star, sigma / np.sqrt(m), "G")

    if mode == "splice":
        zeta1 = G_n + sigma / np.sqrt(m) * s_splice1.standard_normal(basis.size)
    else:
        zeta1 = zeta1_star
    H = ScoreVector(zeta1, sigma / np.sqrt(m), "H")
    zeta = (m / n) * zeta1 + (1.0 - m / n) * zeta2
    I = ScoreVector(zeta, sigma / np.sqrt(n), "I")
    return {
        "D1": Z1, "D2": Z2, "E": E, "F": F, "G": Gs, "H": H, "I": I,
        "M1": M1, "M2": M2, "pilot1": pilot1, "pilot2": pilot2, "m": m,
    }


def simulate_I(G_n, sigma, n, rng):
    G_n = np.asarray(G_n, dtype=float)
    zeta = G_n + sigma / np.sqrt(n) * rng.standard_normal(G_n.shape[0])
    return ScoreVector(zeta, sigma / np.sqrt(n), "I")


# independent-design target --------------------------------------------------
def _product_marginals(marginals):
    if isinstance(marginals, DesignModel):
        if not marginals.is_product:
            raise AssumptionError("the decomposed experiment needs independent covariates")
        return list(marginals.marginals)
    margs = list(marginals)
    if not all(isinstance(m, HistogramDensity) for m in margs):
        raise AssumptionError("marginals must be histogram densities")
    return margs


def simulate_R_experiment(decomp, marginals, n, sigma, rng):
    """``d`` independent univariate regressions plus one ``N(g_0, sigma^2/n)`` draw."""
    margs = _product_marginals(marginals)
    if len(margs) != decomp.d:
        raise ParameterError("one marginal per component is required")
    streams = rng.spawn(decomp.d + 1)
    samples = []
    for k, (comp, p) in enumerate(zip(decomp.centered_components, margs)):
        Xk = p.ppf(streams[k].uniform(size=n))
        Yk = comp(Xk) + sigma * streams[k].standard_normal(n)
        samples.append(RegressionSample(Xk[:, None], Yk, float(sigma), f"R{k + 1}"))
    shift = decomp.shift_g0 + sigma / np.sqrt(n) * streams[-1].standard_normal()
    return {"samples": samples, "shift_obs": float(shift)}


def regressogram(X, Y, bins):
    """Local-average estimate on ``bins`` equal cells; empty cells get 0."""
    idx = np.clip(np.floor(np.ravel(X) * bins).astype(int), 0, bins - 1)
    sums = np.bincount(idx, weights=Y, minlength=bins)
    counts = np.bincount(idx, minlength=bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
