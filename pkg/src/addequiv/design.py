"""Design densities on the unit cube.

Two families are supported: independent products of histogram marginals and
an FGM-type pairwise perturbation

    p(x) = prod_k p_k(x_k) * (1 + sum_{j<k} theta_jk a_j(x_j) a_k(x_k)),

with scores ``a_j`` centered under ``p_j``. Both keep every one- and
two-dimensional marginal in closed form, which is all the Gram matrices and
the Gamma operator ever need.
"""

import hashlib
import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import AlignmentError, ParameterError, ValidationError
from .quadrature import composite_rule

VALIDATION_POINTS = 256
RHO_SLACK = 1e-12
_NORMALIZATION_TOL = 1e-10


class Family(str, Enum):
    PRODUCT = "product"
    PAIRWISE_PERTURBED = "pairwise_perturbed"


class HistogramDensity:
    """Piecewise-constant density on ``M`` equal bins of [0, 1]."""

    def __init__(self, heights):
        h = np.asarray(heights, dtype=float).ravel()
        if h.size < 1 or np.any(~np.isfinite(h)):
            raise ValidationError("histogram heights must be finite and non-empty")
        if np.any(h < 0):
            raise ValidationError("histogram heights must be non-negative")
        if abs(h.mean() - 1.0) > _NORMALIZATION_TOL:
            raise ValidationError(f"histogram density integrates to {h.mean()!r}, not 1")
        self.heights = h
        self.heights.setflags(write=False)

    @classmethod
    def uniform(cls, bins=1):
        return cls(np.ones(int(bins)))

    @classmethod
    def from_weights(cls, weights):
        w = np.asarray(weights, dtype=float)
        return cls(w / w.mean())

    @property
    def M(self):
        return self.heights.size

    @property
    def breaks(self):
        return np.linspace(0.0, 1.0, self.M + 1)

    @property
    def masses(self):
        return self.heights / self.M

    def bin_index(self, t):
        t = np.asarray(t, dtype=float)
        return np.clip(np.floor(t * self.M).astype(int), 0, self.M - 1)

    def pdf(self, t):
        return self.heights[self.bin_index(t)]

    def cdf(self, t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
        idx = self.bin_index(t)
        cum = np.concatenate([[0.0], np.cumsum(self.masses)])
        return cum[idx] + self.heights[idx] * (t - idx / self.M)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        cum = np.concatenate([[0.0], np.cumsum(self.masses)])
        cum[-1] = 1.0
        idx = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, self.M - 1)
        # empty bins have zero mass and are never selected by searchsorted
        h = self.heights[idx]
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(h > 0, (u - cum[idx]) / h, 0.0)
        return np.clip(idx / self.M + frac, 0.0, np.nextafter(1.0, 0.0))

    def mean(self):
        mids = (np.arange(self.M) + 0.5) / self.M
        return float(np.sum(self.masses * mids))

    def to_list(self):
        return [float(v) for v in self.heights]

    def __eq__(self, other):
        return isinstance(other, HistogramDensity) and np.array_equal(self.heights, other.heights)

    def __hash__(self):
        return hash(self.heights.tobytes())

    def __repr__(self):
        return f"HistogramDensity(M={self.M})"


class ScoreFunction:
    """Bounded score ``a_j`` centered under its marginal.

    ``linear``: ``a(t) = scale * (t - mean_j)``; ``piecewise``: bin values on
    the marginal's grid, shifted to have zero mean.
    """

    def __init__(self, kind, marginal, scale=1.0, values=None):
        self.kind = kind
        self.marginal = marginal
        if kind == "linear":
            self.scale = float(scale)
            self.center = marginal.mean()
            self.values = None
        elif kind == "piecewise":
            v = np.asarray(values, dtype=float)
            if v.size != marginal.M:
                raise ValidationError("piecewise score needs one value per marginal bin")
            self.values = v - np.sum(v * marginal.masses)
            self.scale = 1.0
            self.center = 0.0
        else:
            raise ValidationError(f"unknown score kind {kind!r}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "linear":
            return self.scale * (t - self.center)
        return self.values[self.marginal.bin_index(t)]

    def range(self):
        if self.kind == "linear":
            ends = self.scale * (np.array([0.0, 1.0]) - self.center)
            return float(ends.min()), float(ends.max())
        return float(self.values.min()), float(self.values.max())

    def sup(self):
        lo, hi = self.range()
        return max(abs(lo), abs(hi))

    def to_dict(self):
        if self.kind == "linear":
            return {"kind": "linear", "scale": self.scale}
        return {"kind": "piecewise", "values": [float(v) for v in self.values]}


@dataclass(frozen=True, eq=False)
class DesignModel:
    """Known design density ``p_X`` with bounds ``[rho, 1/rho]``."""

    marginals: tuple
    family: Family = Family.PRODUCT
    scores: tuple = ()
    theta: np.ndarray = None
    rho: float = 1.0

    def __post_init__(self):
        margs = tuple(self.marginals)
        object.__setattr__(self, "marginals", margs)
        object.__setattr__(self, "family", Family(self.family))
        d = len(margs)
        if d < 1:
            raise ValidationError("design needs d >= 1")
        if len({m.M for m in margs}) != 1:
            raise ValidationError("all marginals must share the same bin count M")
        theta = np.zeros((d, d)) if self.theta is None else np.array(self.theta, dtype=float)
        if theta.shape != (d, d):
            raise ValidationError("theta must be a d x d matrix")
        if not np.allclose(theta, theta.T):
            if np.any(np.tril(theta, -1)):
                raise ValidationError("theta must be symmetric or upper-triangular")
            theta = np.triu(theta, 1) + np.triu(theta, 1).T
        np.fill_diagonal(theta, 0.0)
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        if self.family is Family.PAIRWISE_PERTURBED:
            if len(self.scores) != d:
                raise ValidationError("pairwise_perturbed needs one score function per coordinate")
            object.__setattr__(self, "scores", tuple(self.scores))
        else:
            if np.any(theta != 0):
                raise ValidationError("product family cannot carry theta coefficients")
            object.__setattr__(self, "scores", ())
        if not self.rho > 0:
            raise ValidationError("rho must be positive")

    # constructors -------------------------------------------------------
    @classmethod
    def product(cls, marginals, rho=None):
        model = cls(tuple(marginals), Family.PRODUCT, rho=1.0)
        return model._with_rho(rho)

    @classmethod
    def uniform(cls, d, bins=1, rho=1.0):
        return cls.product([HistogramDensity.uniform(bins) for _ in range(d)], rho=rho)

    @classmethod
    def pairwise(cls, marginals, theta, scores=None, rho=None):
        """FGM-type model; ``scores`` defaults to ``linear`` with scale 2.

        ``theta`` is a d x d matrix or, for d = 2, a scalar.
        """
        margs = tuple(marginals)
        d = len(margs)
        if np.isscalar(theta):
            if d != 2:
                raise ValidationError("scalar theta only makes sense for d = 2")
            theta = np.array([[0.0, theta], [theta, 0.0]])
        if scores is None:
            scores = [ScoreFunction("linear", m, scale=2.0) for m in margs]
        else:
            built = []
            for spec, m in zip(scores, margs):
                if isinstance(spec, ScoreFunction):
                    built.append(spec)
                else:
                    spec = dict(spec)
                    built.append(ScoreFunction(spec.pop("kind"), m, **spec))
            scores = built
        model = cls(margs, Family.PAIRWISE_PERTURBED, tuple(scores), theta, rho=1.0)
        return model._with_rho(rho)

    def _with_rho(self, rho):
        if rho is None:
            lo, hi, _ = validate_bounds(self)
            rho = min(lo, 1.0 / hi)
            if rho <= 0:
                raise ValidationError("density is not bounded away from zero")
        return DesignModel(self.marginals, self.family, self.scores, self.theta, float(rho))

    # basic properties ---------------------------------------------------
    @property
    def d(self):
        return len(self.marginals)

    @property
    def M(self):
        return self.marginals[0].M

    @property
    def is_product(self):
        return self.family is Family.PRODUCT or not np.any(self.theta)

    def marginal_pdf(self, j, t):
        return self.marginals[j].pdf(t)

    def score(self, j, t):
        if self.family is Family.PRODUCT:
            return np.zeros_like(np.asarray(t, dtype=float))
        return self.scores[j](t)

    def pair_pdf(self, j, k, s, t):
        """Bivariate marginal of ``(X_j, X_k)`` at ``(s, t)`` (broadcasting)."""
        base = self.marginal_pdf(j, s) * self.marginal_pdf(k, t)
        if self.family is Family.PRODUCT:
            return base
        return base * (1.0 + self.theta[j, k] * self.score(j, s) * self.score(k, t))

    def pdf(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.ones(x.shape[0])
        for k in range(self.d):
            out *= self.marginal_pdf(k, x[:, k])
        if self.family is Family.PAIRWISE_PERTURBED:
            pert = np.ones(x.shape[0])
            a = np.stack([self.score(k, x[:, k]) for k in range(self.d)])
            for j in range(self.d):
                for k in range(j + 1, self.d):
                    pert += self.theta[j, k] * a[j] * a[k]
            out *= pert
        return out

    def envelope_constant(self):
        """``1 + sum_{j<k} |theta_jk| sup|a_j| sup|a_k|``."""
        if self.family is Family.PRODUCT:
            return 1.0
        sups = np.array([s.sup() for s in self.scores])
        return 1.0 + 0.5 * float(np.sum(np.abs(self.theta) * np.outer(sups, sups)))

    # quadrature moments --------------------------------------------------
    def rule(self, bins=None, q=8):
        """Quadrature nodes and per-coordinate weighted moments.

        Returns ``(nodes, pw, apw)`` where ``pw[j] = w * p_j(nodes)`` and
        ``apw[j] = w * a_j(nodes) * p_j(nodes)``. The node grid refines both
        the marginal grid and a grid of ``bins`` equal cells.
        """
        fine = self.M if bins is None else _common_grid(self.M, bins)
        nodes, w = composite_rule(np.linspace(0.0, 1.0, fine + 1), q)
        pw = np.stack([w * self.marginal_pdf(j, nodes) for j in range(self.d)])
        apw = np.stack([pw[j] * self.score(j, nodes) for j in range(self.d)])
        return nodes, pw, apw

    def coordinate_rule(self, j, bins=None, extra=(), q=64):
        """Rule for coordinate ``j`` alone, refined at ``extra`` breakpoints.

        Returns ``(nodes, pw, apw)`` as 1-d arrays.
        """
        fine = self.M if bins is None else _common_grid(self.M, bins)
        breaks = np.union1d(np.linspace(0.0, 1.0, fine + 1), np.asarray(extra, dtype=float))
        nodes, w = composite_rule(breaks, q)
        pw = w * self.marginal_pdf(j, nodes)
        return nodes, pw, pw * self.score(j, nodes)

    def bin_moments(self, K):
        """Exact ``int_bin p_j`` and ``int_bin a_j p_j`` for the ``K`` bins."""
        fine = _common_grid(self.M, K)
        nodes, pw, apw = self.rule(fine, q=2)
        per_bin = pw.shape[1] // K
        mass = pw.reshape(self.d, K, per_bin).sum(axis=2)
        amass = apw.reshape(self.d, K, per_bin).sum(axis=2)
        return mass, amass

    # serialization -------------------------------------------------------
    def to_dict(self):
        out = {
            "family": self.family.value,
            "marginals": [m.to_list() for m in self.marginals],
            "rho": self.rho,
        }
        if self.family is Family.PAIRWISE_PERTURBED:
            out["theta"] = [[float(v) for v in row] for row in self.theta]
            out["scores"] = [s.to_dict() for s in self.scores]
        return out

    @classmethod
    def from_dict(cls, spec):
        spec = dict(spec)
        family = Family(spec.get("family", "product"))
        margs = [HistogramDensity(h) for h in spec["marginals"]]
        rho = spec.get("rho")
        if family is Family.PRODUCT:
            return cls.product(margs, rho=rho)
        return cls.pairwise(margs, spec["theta"], spec.get("scores"), rho=rho)

    def hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _common_grid(M, K):
    if M % K == 0:
        return M
    if K % M == 0:
        return K
    raise AlignmentError(f"marginal grid of {M} bins and basis grid of {K} bins do not nest")


def sample_design(model, n, rng):
    """Draw ``n`` i.i.d. points from ``p_X``.

    Products use per-coordinate inverse CDFs; perturbed models use rejection
    from the product envelope.
    """
    if n < 1:
        raise ParameterError("n must be at least 1")
    _, _, ok = validate_bounds(model, strict=False)
    if not ok:
        raise ValidationError("design density is negative somewhere")
    if model.family is Family.PRODUCT:
        return _sample_product(model, n, rng)
    env = model.envelope_constant()
    out = []
    have = 0
    while have < n:
        batch = max(64, int(1.2 * (n - have) * env))
        prop = _sample_product(model, batch, rng)
        ratio = model.pdf(prop) / np.prod(
            [model.marginal_pdf(k, prop[:, k]) for k in range(model.d)], axis=0
        )
        keep = rng.uniform(size=batch) * env < ratio
        out.append(prop[keep])
        have += int(keep.sum())
    return np.concatenate(out)[:n]


def _sample_product(model, n, rng):
    u = rng.uniform(size=(n, model.d))
    return np.column_stack([model.marginals[k].ppf(u[:, k]) for k in range(model.d)])


def bivariate_marginal(model, j, k, resolution):
    """Density of ``(X_j, X_k)`` on a ``resolution x resolution`` midpoint grid.

    Rows index ``X_j``, columns ``X_k``; indices are zero-based.
    """
    if j == k:
        raise IndexError("bivariate_marginal needs j != k; use the 1-d marginal")
    for idx in (j, k):
        if not 0 <= idx < model.d:
            raise IndexError(f"coordinate {idx} out of range for d = {model.d}")
    mids = (np.arange(resolution) + 0.5) / resolution
    return model.pair_pdf(j, k, mids[:, None], mids[None, :])


def validate_bounds(model, strict=True):
    """Return ``(min_density, max_density, ok)``.

    The product part is scanned on 256 points per coordinate plus the exact
    bin heights; the perturbation factor is bounded through the score ranges
    (exact corner products when there is a single pair).
    """
    grid = np.linspace(0.0, 1.0, VALIDATION_POINTS)
    mins, maxs = [], []
    for m in model.marginals:
        vals = np.concatenate([m.pdf(grid), m.heights])
        mins.append(vals.min())
        maxs.append(vals.max())
    prod_lo, prod_hi = float(np.prod(mins)), float(np.prod(maxs))
    pert_lo, pert_hi = 1.0, 1.0
    if model.family is Family.PAIRWISE_PERTURBED:
        pairs = [(j, k) for j in range(model.d) for k in range(j + 1, model.d) if model.theta[j, k] != 0]
        if len(pairs) == 1:
            j, k = pairs[0]
            rj, rk = model.scores[j].range(), model.scores[k].range()
            corners = [model.theta[j, k] * a * b for a in rj for b in rk]
            pert_lo, pert_hi = 1.0 + min(corners), 1.0 + max(corners)
        elif pairs:
            s = model.envelope_constant() - 1.0
            pert_lo, pert_hi = 1.0 - s, 1.0 + s
    lo = prod_lo * pert_lo if pert_lo >= 0 else prod_hi * pert_lo
    hi = prod_hi * pert_hi
    ok = lo >= 0 if not strict else (lo >= model.rho - RHO_SLACK and hi <= 1.0 / model.rho + RHO_SLACK)
    return lo, hi, bool(ok)


def export_bivariate_csv(model, j, k, resolution, path):
    import csv

    mids = (np.arange(resolution) + 0.5) / resolution
    dens = bivariate_marginal(model, j, k, resolution)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "t", "density"])
        for a, s in enumerate(mids):
            for b, t in enumerate(mids):
                w.writerow([repr(float(s)), repr(float(t)), repr(float(dens[a, b]))])
