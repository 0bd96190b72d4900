"""Discretization of the design operator ``Gamma = Lambda Lambda^T`` on a midpoint grid.

Functions in ``L2([0,1], R^d)`` are represented by their values at the
midpoints ``t_a = (a + 1/2)/G``, stacked component by component into a
vector of length ``d*G``. Inner products carry the weight ``1/G``, so the
operator matrix is symmetric in the plain Euclidean sense and its square
root comes from an ordinary eigendecomposition.
"""

import csv
import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import NonPSDError, ParameterError, ValidationError

GAMMA_CLAMP = 1e-10


class OperatorKind(str, Enum):
    GAMMA = "gamma"
    GAMMA_SQRT = "gamma_sqrt"
    GAMMA_M = "gamma_M"
    GAMMA_HS = "gamma_HS"


def midpoints(G):
    return (np.arange(G) + 0.5) / G


@dataclass(frozen=True)
class OperatorGrid:
    d: int
    G: int
    blocks: np.ndarray  # (d, d, G, G)
    kind: OperatorKind
    model_hash: str = ""

    @property
    def quad_weight(self):
        return 1.0 / self.G

    @property
    def grid(self):
        return midpoints(self.G)

    def matrix(self):
        """Full ``(dG, dG)`` matrix acting on stacked grid vectors."""
        d, G = self.d, self.G
        return self.blocks.transpose(0, 2, 1, 3).reshape(d * G, d * G)

    def apply(self, f):
        """Apply the operator to grid values ``f`` of shape ``(d, G)``."""
        f = np.asarray(f, dtype=float)
        return np.einsum("jkab,kb->ja", self.blocks, f)

    def inner(self, f, h):
        return float(np.sum(np.asarray(f) * np.asarray(h)) / self.G)

    def symmetry_error(self):
        A = self.matrix()
        return float(np.max(np.abs(A - A.T)))

    def eigenvalues(self):
        A = self.matrix()
        return np.linalg.eigvalsh(0.5 * (A + A.T))


def _from_matrix(A, d, G, kind, model_hash):
    blocks = A.reshape(d, G, d, G).transpose(0, 2, 1, 3).copy()
    blocks.setflags(write=False)
    return OperatorGrid(d, G, blocks, OperatorKind(kind), model_hash)


def apply_lambda_adjoint(f):
    """Evaluator of ``x -> sum_l f_l(x_l)`` for a sequence of univariate callables."""
    comps = list(f)

    def evaluate(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != len(comps):
            raise ParameterError(f"expected points in dimension {len(comps)}")
        out = np.zeros(x.shape[0])
        for k, fk in enumerate(comps):
            out = out + np.broadcast_to(np.asarray(fk(x[:, k]), dtype=float), out.shape)
        return out

    return evaluate


def assemble_gamma(model, G):
    """``Gamma`` on ``G`` midpoints per coordinate.

    Diagonal blocks multiply by the marginal density, off-diagonal blocks
    integrate against the bivariate marginals with weight ``1/G``. With ``G``
    a multiple of the marginal grid, midpoint sums of piecewise linear
    integrands are exact, which keeps the discrete operator PSD.
    """
    if G < 2:
        raise ParameterError("G must be at least 2")
    d = model.d
    t = midpoints(G)
    blocks = np.zeros((d, d, G, G))
    for j in range(d):
        blocks[j, j] = np.diag(model.marginal_pdf(j, t))
        for k in range(d):
            if k != j:
                blocks[j, k] = model.pair_pdf(j, k, t[:, None], t[None, :]) / G
    blocks.setflags(write=False)
    return OperatorGrid(d, G, blocks, OperatorKind.GAMMA, model.hash())


def operator_norm(op):
    return float(np.max(np.abs(op.eigenvalues())))


def gamma_sqrt(op, tol=GAMMA_CLAMP):
    if op.kind is not OperatorKind.GAMMA:
        raise ParameterError("gamma_sqrt expects an operator of kind gamma")
    A = op.matrix()
    w, U = np.linalg.eigh(0.5 * (A + A.T))
    if w.min() < -tol:
        raise NonPSDError(f"Gamma has eigenvalue {w.min():.3e} below -{tol}")
    root = (U * np.sqrt(np.maximum(w, 0.0))) @ U.T
    return _from_matrix(0.5 * (root + root.T), op.d, op.G, OperatorKind.GAMMA_SQRT, op.model_hash)


def hs_norm_sq(model, q=64):
    """``sum_{j != k} iint p_jk^2`` by tensor Gauss-Legendre on the marginal grid."""
    total = 0.0
    for j in range(model.d):
        nj, _, _ = model.coordinate_rule(j, q=q)
        wj = _plain_weights(model, j, q)
        for k in range(model.d):
            if k == j:
                continue
            nk, _, _ = model.coordinate_rule(k, q=q)
            wk = _plain_weights(model, k, q)
            vals = model.pair_pdf(j, k, nj[:, None], nk[None, :])
            total += float(wj @ (vals ** 2) @ wk)
    return total


def _plain_weights(model, j, q):
    nodes, pw, _ = model.coordinate_rule(j, q=q)
    return pw / model.marginal_pdf(j, nodes)


def split_gamma(model, G):
    """``(Gamma_M, Gamma_HS, hs_norm_sq)`` with ``Gamma_M + Gamma_HS = Gamma``."""
    full = assemble_gamma(model, G)
    diag = np.zeros_like(full.blocks)
    for j in range(model.d):
        diag[j, j] = full.blocks[j, j]
    off = full.blocks - diag
    diag.setflags(write=False)
    off.setflags(write=False)
    h = model.hash()
    return (
        OperatorGrid(model.d, G, diag, OperatorKind.GAMMA_M, h),
        OperatorGrid(model.d, G, off, OperatorKind.GAMMA_HS, h),
        hs_norm_sq(model),
    )


def grid_functions(components, G):
    """Values ``(d, G)`` of univariate callables at the midpoints."""
    t = midpoints(G)
    return np.stack([np.asarray(c(t), dtype=float) * np.ones(G) for c in components])


# basis matrices -------------------------------------------------------------
def fourier_index(ell, d):
    """Component and frequency slot of the 1-based index ``ell``.

    Slot 0 is the constant, slot ``2m-1`` is ``sqrt2 cos 2 pi m t`` and slot
    ``2m`` is ``sqrt2 sin 2 pi m t``; components are interleaved so that
    ``ell - 1 = slot*d + k``.
    """
    if ell < 1:
        raise ParameterError("basis indices start at 1")
    slot, k = divmod(ell - 1, d)
    return k, slot


def fourier_slot(slot, t):
    t = np.asarray(t, dtype=float)
    if slot == 0:
        return np.ones_like(t)
    m = (slot + 1) // 2
    trig = np.cos if slot % 2 else np.sin
    return np.sqrt(2.0) * trig(2.0 * np.pi * m * t)


def fourier_sup_sq(ell, d):
    return 1.0 if fourier_index(ell, d)[1] == 0 else 2.0


def _index_set(L):
    if isinstance(L, range) or np.ndim(L) == 1:
        idx = [int(v) for v in L]
    else:
        raise ParameterError("L must be a range or a sequence of indices")
    if not idx or len(set(idx)) != len(idx):
        raise ParameterError("L must be a non-empty set of distinct indices")
    return idx


def _fourier_moments(model, idx, q):
    """Per index: component, and moments ``int xi p``, ``int xi a p`` and ``int xi xi' p`` data."""
    d = model.d
    comp = np.array([fourier_index(ell, d)[0] for ell in idx])
    slots = [fourier_index(ell, d)[1] for ell in idx]
    rules = [model.coordinate_rule(k, q=q) for k in range(d)]
    vals = [fourier_slot(s, rules[k][0]) for s, k in zip(slots, comp)]
    mean = np.array([np.sum(v * rules[k][1]) for v, k in zip(vals, comp)])
    amean = np.array([np.sum(v * rules[k][2]) for v, k in zip(vals, comp)])
    return comp, vals, rules, mean, amean


def gamma_L(model, L, basis_kind="fourier", q=64):
    """``(Gamma^[L], Gamma_M^[L], frob_dist)`` for the per-component Fourier system.

    Same-component entries are ``int xi xi' p_k``; cross entries factor
    through the bivariate marginal ``p_j p_k (1 + theta a_j a_k)``, so every
    entry is a product of one-dimensional integrals.
    """
    if basis_kind != "fourier":
        raise ValidationError(f"unsupported basis kind {basis_kind!r}")
    idx = _index_set(L)
    comp, vals, rules, mean, amean = _fourier_moments(model, idx, q)
    size = len(idx)
    full = np.zeros((size, size))
    for a in range(size):
        for b in range(a, size):
            if comp[a] == comp[b]:
                v = float(np.sum(vals[a] * vals[b] * rules[comp[a]][1]))
            else:
                v = mean[a] * mean[b] + model.theta[comp[a], comp[b]] * amean[a] * amean[b]
            full[a, b] = full[b, a] = v
    diag = np.where(comp[:, None] == comp[None, :], full, 0.0)
    return full, diag, float(np.linalg.norm(full - diag))


def check_orthonormal(funcs, d, q=64, tol=1e-8):
    """Gram matrix of ``xi`` given as ``(component_callables, ...)`` in ``L2([0,1], R^d)``."""
    from .quadrature import uniform_rule

    nodes, w = uniform_rule(64, q)
    vals = np.array([[np.asarray(f[k](nodes)) * np.ones_like(nodes) for k in range(d)] for f in funcs])
    gram = np.einsum("akn,bkn,n->ab", vals, vals, w)
    err = float(np.max(np.abs(gram - np.eye(len(funcs)))))
    if err > tol:
        raise ValidationError(f"test functions are not orthonormal (error {err:.2e})")
    return gram


def lambda_adjoint_fourier(X, L, d):
    """Rows ``(Lambda^T xi_ell)(X_i)`` for ``ell`` in ``L``; shape ``(n, #L)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    idx = _index_set(L)
    cols = []
    for ell in idx:
        k, slot = fourier_index(ell, d)
        cols.append(fourier_slot(slot, X[:, k]))
    return np.column_stack(cols)


def empirical_gamma_L(X, L, rho, basis_kind="fourier"):
    """Plug-in ``Gamma-hat^[L]`` from a covariate batch and the mean-square bound.

    The bound is ``(1/n) (#L)^2 d^2 rho^{-1} max_ell sum_k ||xi_{ell,k}||_inf^2``.
    """
    if basis_kind != "fourier":
        raise ValidationError(f"unsupported basis kind {basis_kind!r}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    idx = _index_set(L)
    V = lambda_adjoint_fourier(X, idx, d)
    est = V.T @ V / n
    sup = max(fourier_sup_sq(ell, d) for ell in idx)
    return est, mse_bound(n, len(idx), d, rho, sup)


def mse_bound(n, size, d, rho, sup_sum):
    return size ** 2 * d ** 2 * sup_sum / (n * rho)


# h-system -------------------------------------------------------------------
def h_one(root):
    """``h_1 = Gamma^{1/2} e_1`` on the grid, ``e_1`` the constant on component 1."""
    e1 = np.zeros((root.d, root.G))
    e1[0] = 1.0
    return root.apply(e1)


# export ---------------------------------------------------------------------
def export_operator(op, csv_path, json_path):
    A = op.matrix()
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "value"])
        for r, c in zip(*np.nonzero(A)):
            w.writerow([int(r), int(c), repr(float(A[r, c]))])
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump({"d": op.d, "G": op.G, "kind": op.kind.value, "model_hash": op.model_hash}, fh, indent=2)
