"""Gaussian process experiments on [0, 1] and their score statistics.

Paths are simulated on ``T`` uniform steps with the drift frozen at the left
end of each step (Euler). The noise part of every path is an independent
standard Wiener process scaled by ``sigma / sqrt(n)``.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .basis import project, residual_norm_sq
from .chain import _product_marginals
from .errors import AlignmentError, ParameterError
from .operator import OperatorKind, fourier_slot, midpoints

DEFAULT_T = 1024


@dataclass
class ProcessPath:
    times: np.ndarray  # (T + 1,)
    values: np.ndarray  # (T + 1, d)
    drift: np.ndarray  # (T + 1, d), deterministic part of ``values``
    drift_spec: str
    noise_scale: float

    @property
    def T(self):
        return self.times.shape[0] - 1

    @property
    def d(self):
        return self.values.shape[1]

    def increments(self):
        return np.diff(self.values, axis=0)

    def noise_increments(self):
        return np.diff(self.values - self.drift, axis=0)


@dataclass
class ScoreObservation:
    values: np.ndarray
    test_set: str


def _euler(rates, n, sigma, rng, spec):
    """Integrate drift rates ``(T, d)`` and add scaled Wiener noise."""
    T, d = rates.shape
    dt = 1.0 / T
    scale = sigma / np.sqrt(n)
    drift = np.vstack([np.zeros(d), np.cumsum(rates * dt, axis=0)])
    noise = np.vstack([np.zeros(d), np.cumsum(scale * np.sqrt(dt) * rng.standard_normal((T, d)), axis=0)])
    return ProcessPath(np.linspace(0.0, 1.0, T + 1), drift + noise, drift, spec, scale)


def _check_T(T):
    if T < 8:
        raise ParameterError("T must be at least 8")


def component_callables(g):
    """Accept an additive function, a centered decomposition or a list of callables."""
    comps = getattr(g, "components", None)
    if comps is None:
        comps = getattr(g, "centered_components", None)
    return list(comps if comps is not None else g)


def grid_to_path(values, T):
    """Repeat operator-grid values ``(d, G)`` onto the ``T`` left endpoints."""
    values = np.asarray(values)
    G = values.shape[-1]
    if T % G:
        raise AlignmentError(f"path grid T = {T} is not a multiple of the operator grid G = {G}")
    return np.repeat(values, T // G, axis=-1).T


def simulate_Rn(root, g, n, sigma, T, rng):
    """Path with drift ``int_0^t [Gamma^{1/2} g](s) ds`` and noise ``sigma/sqrt(n) W``.

    The drift rate on each step is the value of ``Gamma^{1/2} g`` on the
    operator cell containing the left endpoint.
    """
    _check_T(T)
    if root.kind is not OperatorKind.GAMMA_SQRT:
        raise ParameterError("simulate_Rn expects the square root of Gamma")
    comps = component_callables(g)
    if len(comps) != root.d:
        raise ParameterError("drift dimension does not match the operator")
    t = midpoints(root.G)
    gv = np.stack([np.asarray(c(t), dtype=float) * np.ones(root.G) for c in comps])
    rates = grid_to_path(root.apply(gv), T)
    return _euler(rates, n, sigma, rng, "gamma_sqrt")


def _left_rates(comps, marginals, T):
    t = np.arange(T) / T
    return np.stack([np.sqrt(p.pdf(t)) * c(t) for c, p in zip(comps, marginals)], axis=1)


def simulate_Q(decomp, marginals, n, sigma, T, rng):
    """Shift observation ``N(g_0, sigma^2/n)`` and ``d`` independent paths with
    drift rates ``p_k^{1/2} g_k*``."""
    _check_T(T)
    margs = _product_marginals(marginals)
    if len(margs) != decomp.d:
        raise ParameterError("one marginal per component is required")
    s_shift, s_paths = rng.spawn(2)
    shift = decomp.shift_g0 + sigma / np.sqrt(n) * s_shift.standard_normal()
    path = _euler(_left_rates(decomp.centered_components, margs, T), n, sigma, s_paths, "sqrt_p_centered")
    return {"shift_obs": float(shift), "paths": path}


def simulate_S(g, marginals, n, sigma, T, rng):
    """Paths with drift rates ``p_j^{1/2} g_j``; no independence needed."""
    _check_T(T)
    margs = list(getattr(marginals, "marginals", marginals))
    comps = component_callables(g)
    return _euler(_left_rates(comps, margs, T), n, sigma, rng, "sqrt_p")


def evaluate_tests(test_functions, path):
    """Stack test functions into ``(m, T, d)`` left-endpoint values."""
    T, d = path.T, path.d
    t = path.times[:-1]
    out = []
    for f in test_functions:
        if callable(f):
            v = np.asarray(f(t), dtype=float)
        else:
            v = np.asarray(f, dtype=float)
            if v.shape[0] == T + 1:
                v = v[:-1]
        v = np.broadcast_to(v.reshape(T, -1), (T, d))
        out.append(v)
    return np.stack(out)


def extract_scores(path, test_functions, label="custom"):
    """Riemann-Stieltjes sums ``sum_i f(t_i) . (R(t_{i+1}) - R(t_i))``."""
    F = evaluate_tests(test_functions, path)
    values = np.einsum("mtd,td->m", F, path.increments())
    return ScoreObservation(values, label)


def h_system(root, count):
    """``h_1 = Gamma^{1/2} e_1`` completed by Gram-Schmidt over the Fourier system.

    Returns ``(count, d, G)`` grid values orthonormal with weight ``1/G``.
    """
    d, G = root.d, root.G
    if count > d * G:
        raise ParameterError("cannot build more functions than grid points")
    t = midpoints(G)
    e1 = np.zeros((d, G))
    e1[0] = 1.0
    system = [root.apply(e1)]
    system[0] = system[0] / np.sqrt(np.sum(system[0] ** 2) / G)
    ell = 0
    while len(system) < count:
        slot, k = divmod(ell, d)
        ell += 1
        v = np.zeros((d, G))
        v[k] = fourier_slot(slot, t)
        for h in system:
            v = v - np.sum(v * h) / G * h
        norm = np.sqrt(np.sum(v ** 2) / G)
        if norm > 1e-8:
            system.append(v / norm)
    return np.stack(system)


# Brownian-sheet scores -------------------------------------------------------
def _inner_with_residual(g, G_coef, basis, model):
    """``(||r||, <g^[K*], r> / ||r||)`` for ``r = g - g^[K*]`` by polarization."""
    levels = basis.function_levels(G_coef)
    r2 = residual_norm_sq(g, levels, model, basis.K)
    g2 = residual_norm_sq(g, np.zeros_like(levels), model, basis.K)
    f2 = float(G_coef @ G_coef)
    if r2 <= 0.0:
        return 0.0, 0.0
    r = np.sqrt(r2)
    g_dot_r = 0.5 * (g2 + r2 - f2)
    return g_dot_r / r, 0.5 * (g2 - r2 - f2) / r


def score_law(g, model, basis, n, sigma, stage="J", extended=False):
    """Mean and covariance of the sheet scores ``int psi_k p^{1/2} dB``.

    Stage ``J`` has drift ``g``, stage ``K`` its projection; both give mean
    ``G_n`` on the basis. With ``extended`` the normalized residual direction
    is appended, where the two laws differ.
    """
    if stage not in ("J", "K"):
        raise ParameterError(f"unknown sheet stage {stage!r}")
    G = project(g, basis, model)
    mean = G.copy()
    if extended:
        on_g, on_proj = _inner_with_residual(g, G, basis, model)
        mean = np.append(mean, on_g if stage == "J" else on_proj)
    cov = sigma ** 2 / n * np.eye(mean.shape[0])
    return mean, cov


def sheet_scores(g, model, basis, n, sigma, rng, stage="J", extended=False):
    mean, cov = score_law(g, model, basis, n, sigma, stage, extended)
    values = mean + np.sqrt(cov[0, 0]) * rng.standard_normal(mean.shape[0])
    return ScoreObservation(values, f"sheet_{stage}")


def export_path_csv(path, out):
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "component", "value"])
        for i, t in enumerate(path.times):
            for k in range(path.d):
                w.writerow([repr(float(t)), k, repr(float(path.values[i, k]))])


def export_scores_csv(rows, out):
    """``rows`` is a sequence of ScoreObservation, one per replicate."""
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["test_index", "replicate", "value"])
        for rep, obs in enumerate(rows):
            for i, v in enumerate(obs.values):
                w.writerow([i, rep, repr(float(v))])
