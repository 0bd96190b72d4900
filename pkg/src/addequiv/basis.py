"""Histogram basis of the additive sieve space and its orthonormalization.

Every function in the sieve space is additive and piecewise constant on a
uniform grid of ``K`` bins per coordinate, so it is stored as a level array
of shape ``(d, K)``: ``f(x) = sum_j levels[j, bin(x_j)]``. Inner products in
``L2(p_X)`` of such arrays are exact finite sums over bin masses.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, DegeneracyError, ParameterError
from .quadrature import NODES_PER_BIN

DEGENERACY_THRESHOLD = 1e-12
EXACT_SUP_CELL_LIMIT = 1 << 18


def lemma_constant(K, d):
    """``1 + K d (1 + pi^2/6)``; divide by rho for the sup bound."""
    return 1.0 + K * d * (1.0 + np.pi ** 2 / 6.0)


def moment_inner(F, H, mass, amass, theta):
    """Gram matrix ``<F_a, H_b>_{p_X}`` of additive functions.

    ``F`` and ``H`` have shape ``(m, d, N)``: values of each component on N
    cells (bins or quadrature nodes). ``mass[j]`` carries the weights
    ``w p_j`` and ``amass[j]`` the weights ``w a_j p_j`` on those cells.
    Cross-coordinate terms only use the bivariate marginals
    ``p_j p_k (1 + theta_jk a_j a_k)``.
    """
    diag = np.einsum("ajn,bjn,jn->ab", F, H, mass)
    mu_f = np.einsum("ajn,jn->aj", F, mass)
    mu_h = np.einsum("ajn,jn->aj", H, mass)
    cross = np.outer(mu_f.sum(1), mu_h.sum(1)) - mu_f @ mu_h.T
    if np.any(theta):
        nu_f = np.einsum("ajn,jn->aj", F, amass)
        nu_h = np.einsum("ajn,jn->aj", H, amass)
        cross = cross + nu_f @ theta @ nu_h.T
    return diag + cross


@dataclass(frozen=True)
class RawBasisSpec:
    """Constant function followed by the step functions of the construction.

    ``levels`` has shape ``(K*, d, K)``. Entry 0 is the constant (stored on
    coordinate 0). Entry ``1 + j*(K-1) + (k-1)`` is the step with breakpoint
    ``k`` on coordinate ``j``: ``c*K/k`` on ``[0, k/K)``, ``-c*K`` on
    ``[k/K, (k+1)/K)`` and zero beyond, ``c = K**-0.5 (1 + 1/k)**-0.5``.
    """

    K: int
    d: int
    levels: np.ndarray
    entries: tuple

    @property
    def size(self):
        return self.levels.shape[0]


def build_raw_basis(K, d):
    if K < 2:
        raise ParameterError(f"K must be at least 2, got {K}")
    if d < 1:
        raise ParameterError(f"d must be at least 1, got {d}")
    size = 1 + d * (K - 1)
    levels = np.zeros((size, d, K))
    levels[0, 0, :] = 1.0
    entries = [(-1, 0, 1.0, 1.0)]
    row = 1
    for j in range(d):
        for k in range(1, K):
            c = K ** -0.5 * (1.0 + 1.0 / k) ** -0.5
            left, right = c * K / k, -c * K
            levels[row, j, :k] = left
            levels[row, j, k] = right
            entries.append((j, k, left, right))
            row += 1
    levels.setflags(write=False)
    return RawBasisSpec(K, d, levels, tuple(entries))


def _check_model(raw, model):
    if model.d != raw.d:
        raise ParameterError(f"basis has d = {raw.d} but the model has d = {model.d}")
    if model.M % raw.K and raw.K % model.M:
        raise AlignmentError(f"marginal grid M = {model.M} is not aligned with K = {raw.K}")


def gram_matrix(raw, model):
    """``<tilde psi_i, tilde psi_j>_{p_X}`` computed from bin masses."""
    _check_model(raw, model)
    mass, amass = model.bin_moments(raw.K)
    G = moment_inner(raw.levels, raw.levels, mass, amass, model.theta)
    return 0.5 * (G + G.T)


@dataclass(frozen=True)
class OrthonormalBasis:
    """Orthonormal basis ``psi = coeffs @ tilde psi`` of the sieve space."""

    raw: RawBasisSpec
    coeffs: np.ndarray
    gram_eigenvalues: np.ndarray
    levels: np.ndarray
    model_hash: str = ""

    @property
    def K(self):
        return self.raw.K

    @property
    def d(self):
        return self.raw.d

    @property
    def size(self):
        return self.raw.size

    def evaluate(self, X):
        """Matrix ``psi_k(X_i)`` of shape ``(n, K*)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        idx = np.clip(np.floor(X * self.K).astype(int), 0, self.K - 1)
        out = np.zeros((X.shape[0], self.size))
        for j in range(self.d):
            out += self.levels[:, j, idx[:, j]].T
        return out

    def function_levels(self, coefs):
        """Level array ``(d, K)`` of ``sum_k coefs[k] psi_k``."""
        return np.tensordot(np.asarray(coefs, dtype=float), self.levels, axes=1)


def orthonormalize(raw, gram):
    """Symmetric orthonormalization ``psi = Gr^{-1/2} tilde psi``.

    The square root comes from the spectral decomposition of the Gram
    matrix, so every eigenvalue must exceed the degeneracy threshold.
    """
    gram = np.asarray(gram, dtype=float)
    w, U = np.linalg.eigh(0.5 * (gram + gram.T))
    if w.min() <= DEGENERACY_THRESHOLD:
        raise DegeneracyError(f"Gram matrix is singular (min eigenvalue {w.min():.3e})")
    coeffs = (U / np.sqrt(w)) @ U.T
    levels = np.tensordot(coeffs, raw.levels, axes=1)
    coeffs.setflags(write=False)
    levels.setflags(write=False)
    w.setflags(write=False)
    return OrthonormalBasis(raw, coeffs, w, levels)


def build_basis(K, model):
    """Raw system, Gram matrix and orthonormal basis in one call."""
    raw = build_raw_basis(K, model.d)
    basis = orthonormalize(raw, gram_matrix(raw, model))
    return OrthonormalBasis(basis.raw, basis.coeffs, basis.gram_eigenvalues, basis.levels, model.hash())


def level_gram(A, B, model, K):
    """Exact ``<f_a, h_b>_{p_X}`` for level arrays on the ``K``-bin grid."""
    mass, amass = model.bin_moments(K)
    return moment_inner(np.asarray(A), np.asarray(B), mass, amass, model.theta)


def refine_levels(levels, factor):
    """Rewrite level arrays on a grid ``factor`` times finer."""
    return np.repeat(np.asarray(levels), int(factor), axis=-1)


def orthonormality_error(basis, model):
    """``max |<psi_i, psi_j> - delta_ij|`` by exact bin sums."""
    G = level_gram(basis.levels, basis.levels, model, basis.K)
    return float(np.max(np.abs(G - np.eye(basis.size))))


def sup_sum_squares(basis):
    """``sup_x sum_k psi_k(x)^2`` over all cells.

    Returns ``(value, exact)``. With at most ``2**18`` cells the sup is
    enumerated exactly; otherwise the value is a certified upper bound built
    from exact maxima over every coordinate pair.
    """
    B = basis.levels  # (K*, d, K)
    d, K = basis.d, basis.K
    if K ** d <= EXACT_SUP_CELL_LIMIT:
        # accumulate psi(x) over cells, one coordinate at a time
        acc = B[:, 0, :]
        for j in range(1, d):
            acc = (acc[:, :, None] + B[:, j, None, :]).reshape(B.shape[0], -1)
        return float(np.max(np.sum(acc ** 2, axis=0))), True
    total = sum(float(np.max(np.sum(B[:, j, :] ** 2, axis=0))) for j in range(d))
    for j in range(d):
        for k in range(j + 1, d):
            total += 2.0 * float(np.max(B[:, j, :].T @ B[:, k, :]))
    return total, False


def lemma_bound(basis, rho):
    return lemma_constant(basis.K, basis.d) / rho


def _coordinate_moments(comp, model, j, K, q=NODES_PER_BIN):
    """Per-bin integrals of ``g_j p_j`` plus the full ``g_j p_j`` / ``g_j a_j p_j`` moments."""
    nodes, pw, apw = model.coordinate_rule(j, K, comp.breakpoints, q)
    vals = comp(nodes)
    bins = np.clip(np.floor(nodes * K).astype(int), 0, K - 1)
    per_bin = np.bincount(bins, weights=vals * pw, minlength=K)
    return per_bin, float(np.sum(vals * pw)), float(np.sum(vals * apw))


def project(g, basis, model):
    """Coefficients ``G_k = <g, psi_k>_{p_X}``."""
    K, d = basis.K, basis.d
    if g.d != d:
        raise ParameterError("function and basis dimensions differ")
    mass, amass = model.bin_moments(K)
    per_bin = np.zeros((d, K))
    m1 = np.zeros(d)
    a1 = np.zeros(d)
    for j, comp in enumerate(g.components):
        per_bin[j], m1[j], a1[j] = _coordinate_moments(comp, model, j, K)
    # <g, 1{x_c in bin b}>: own-coordinate part plus other coordinates through
    # the bivariate marginals
    others = m1.sum() - m1
    pert = model.theta @ a1
    u = per_bin + mass * others[:, None] + amass * pert[:, None]
    return np.einsum("kjb,jb->k", basis.levels, u)


def residual_norm_sq(g, levels, model, K):
    """``||g - f||^2_{p_X}`` for additive ``g`` and a level array ``f`` on K bins."""
    s2 = np.zeros(g.d)
    s1 = np.zeros(g.d)
    a1 = np.zeros(g.d)
    for j, comp in enumerate(g.components):
        nodes, pw, apw = model.coordinate_rule(j, K, comp.breakpoints, NODES_PER_BIN)
        bins = np.clip(np.floor(nodes * K).astype(int), 0, K - 1)
        r = comp(nodes) - levels[j, bins]
        s2[j] = np.sum(r * r * pw)
        s1[j] = np.sum(r * pw)
        a1[j] = np.sum(r * apw)
    return float(s2.sum() + s1.sum() ** 2 - np.sum(s1 ** 2) + a1 @ model.theta @ a1)


def approximation_error(g, basis, model):
    """``(err_sq, bound)`` with ``err_sq = ||g - g^[K*]||^2`` and the
    sieve bias bound ``d C^2 K^{-2 beta} / rho``."""
    G = project(g, basis, model)
    err = residual_norm_sq(g, basis.function_levels(G), model, basis.K)
    bound = g.d * g.holder_C ** 2 * basis.K ** (-2.0 * g.holder_beta) / model.rho
    return max(err, 0.0), float(bound)


def export_basis_csv(basis, entries_path, coeffs_path):
    with open(entries_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["entry", "coordinate", "breakpoint", "level_left", "level_right"])
        for i, (j, k, left, right) in enumerate(basis.raw.entries):
            w.writerow([i, j, k, repr(float(left)), repr(float(right))])
    with open(coeffs_path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in basis.coeffs:
            w.writerow([repr(float(v)) for v in row])
