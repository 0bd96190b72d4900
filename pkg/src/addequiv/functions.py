"""Additive regression functions built from a closed library of shapes.

Every shape has a known Hölder seminorm and sup-norm, so test oracles can be
written in closed form.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import DomainError, ParameterError, ValidationError
from .quadrature import NODES_PER_BIN, composite_rule

_CUBE_SLACK = 1e-12


class Shape(str, Enum):
    CONSTANT = "constant"
    LINEAR = "linear"
    SINE = "sine"
    HOLDER_BUMP = "holder_bump"
    PIECEWISE_CONSTANT = "piecewise_constant"


_ARITY = {
    Shape.CONSTANT: 1,
    Shape.LINEAR: 2,
    Shape.SINE: 3,
    Shape.HOLDER_BUMP: 3,
}


@dataclass(frozen=True)
class ComponentFunction:
    """One univariate component ``g_l`` on [0, 1].

    Parameters by kind:

    * constant: ``(c,)``
    * linear: ``(slope, intercept)``
    * sine: ``(amplitude, frequency, phase)`` for ``a*sin(2*pi*m*t + phase)``
    * holder_bump: ``(amplitude, center, exponent)`` for ``a*|t - c|**e``
    * piecewise_constant: the bin values on a uniform grid of ``len(params)`` bins

    ``offset`` is added to every value; centering only touches the offset.
    """

    kind: Shape
    params: tuple = ()
    offset: float = 0.0

    def __post_init__(self):
        kind = Shape(self.kind)
        object.__setattr__(self, "kind", kind)
        params = tuple(float(p) for p in self.params)
        object.__setattr__(self, "params", params)
        if kind in _ARITY and len(params) != _ARITY[kind]:
            raise ValidationError(f"{kind.value} expects {_ARITY[kind]} parameters, got {len(params)}")
        if kind is Shape.PIECEWISE_CONSTANT and len(params) < 1:
            raise ValidationError("piecewise_constant needs at least one bin value")
        if kind is Shape.HOLDER_BUMP and not 0.0 < params[2] <= 1.0:
            raise ValidationError("holder_bump exponent must lie in (0, 1]")
        if not np.all(np.isfinite(params)) or not np.isfinite(self.offset):
            raise ValidationError("component parameters must be finite")

    # constructors -------------------------------------------------------
    @classmethod
    def constant(cls, c):
        return cls(Shape.CONSTANT, (c,))

    @classmethod
    def linear(cls, slope, intercept=0.0):
        return cls(Shape.LINEAR, (slope, intercept))

    @classmethod
    def sine(cls, amplitude=1.0, frequency=1, phase=0.0):
        return cls(Shape.SINE, (amplitude, frequency, phase))

    @classmethod
    def holder_bump(cls, amplitude, center, exponent):
        return cls(Shape.HOLDER_BUMP, (amplitude, center, exponent))

    @classmethod
    def piecewise_constant(cls, values):
        return cls(Shape.PIECEWISE_CONSTANT, tuple(values))

    # evaluation ---------------------------------------------------------
    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        p = self.params
        if self.kind is Shape.CONSTANT:
            out = np.full_like(t, p[0])
        elif self.kind is Shape.LINEAR:
            out = p[0] * t + p[1]
        elif self.kind is Shape.SINE:
            out = p[0] * np.sin(2.0 * np.pi * p[1] * t + p[2])
        elif self.kind is Shape.HOLDER_BUMP:
            out = p[0] * np.abs(t - p[1]) ** p[2]
        else:
            vals = np.asarray(p)
            idx = np.clip(np.floor(t * len(vals)).astype(int), 0, len(vals) - 1)
            out = vals[idx]
        return out + self.offset

    @property
    def breakpoints(self):
        """Interior points where the shape is not smooth (quadrature edges)."""
        if self.kind is Shape.PIECEWISE_CONSTANT:
            return np.linspace(0.0, 1.0, len(self.params) + 1)[1:-1]
        if self.kind is Shape.HOLDER_BUMP and 0.0 < self.params[1] < 1.0:
            return np.array([self.params[1]])
        return np.empty(0)

    # Hölder constants ---------------------------------------------------
    def seminorm(self, beta):
        """Smallest L with ``|g(x)-g(y)| <= L |x-y|**beta`` (inf if none)."""
        p = self.params
        if self.kind is Shape.CONSTANT:
            return 0.0
        if self.kind is Shape.LINEAR:
            return abs(p[0])
        if self.kind is Shape.SINE:
            # |x - y| <= 1 on the unit interval, so a Lipschitz bound is a
            # Hölder bound for every beta <= 1.
            return 2.0 * np.pi * abs(p[1]) * abs(p[0])
        if self.kind is Shape.HOLDER_BUMP:
            if p[0] == 0.0:
                return 0.0
            return abs(p[0]) if beta <= p[2] + 1e-15 else np.inf
        vals = np.asarray(p)
        return 0.0 if np.ptp(vals) == 0.0 else np.inf

    def sup_norm(self):
        p, o = self.params, self.offset
        if self.kind is Shape.CONSTANT:
            return abs(p[0] + o)
        if self.kind is Shape.LINEAR:
            return max(abs(p[1] + o), abs(p[0] + p[1] + o))
        if self.kind is Shape.SINE:
            return abs(p[0]) + abs(o)
        if self.kind is Shape.HOLDER_BUMP:
            pts = np.array([0.0, 1.0, np.clip(p[1], 0.0, 1.0)])
            return float(np.max(np.abs(self(pts))))
        return float(np.max(np.abs(np.asarray(p) + o)))

    def analytic_constant(self, beta):
        return max(self.seminorm(beta), self.sup_norm())


@dataclass(frozen=True)
class AdditiveFunction:
    """``g(x) = sum_l g_l(x_l)`` with declared Hölder parameters."""

    components: tuple
    holder_C: float = 1.0
    holder_beta: float = 1.0

    def __post_init__(self):
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        if len(comps) < 1:
            raise ValidationError("an additive function needs d >= 1 components")
        if not all(isinstance(c, ComponentFunction) for c in comps):
            raise ValidationError("components must be ComponentFunction instances")
        if not 0.0 < self.holder_beta <= 1.0:
            raise ValidationError(f"holder_beta must lie in (0, 1], got {self.holder_beta}")
        if self.holder_C < 0:
            raise ValidationError("holder_C must be non-negative")

    @property
    def d(self):
        return len(self.components)

    def __call__(self, x):
        return eval_additive(self, x)

    def component_values(self, t):
        """Array ``(d, len(t))`` of every component evaluated on the same points."""
        t = np.asarray(t, dtype=float)
        return np.stack([c(t) for c in self.components])


@dataclass(frozen=True)
class CenteredDecomposition:
    shift_g0: float
    centered_components: tuple
    component_means: tuple = field(default=())

    @property
    def d(self):
        return len(self.centered_components)

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.full(x.shape[0], self.shift_g0)
        for k, comp in enumerate(self.centered_components):
            out = out + comp(x[:, k])
        return out

    def as_additive(self, holder_C=1.0, holder_beta=1.0):
        return AdditiveFunction(self.centered_components, holder_C, holder_beta)


def _check_cube(x, d):
    x = np.asarray(x, dtype=float)
    pts = np.atleast_2d(x)
    if pts.shape[-1] != d:
        raise DomainError(f"expected points of dimension {d}, got shape {x.shape}")
    if np.any(pts < -_CUBE_SLACK) or np.any(pts > 1.0 + _CUBE_SLACK) or not np.all(np.isfinite(pts)):
        raise DomainError("evaluation point outside [0, 1]^d")
    return pts


def eval_additive(g, x):
    """Evaluate ``g`` at one point (returns float) or at rows of an array."""
    pts = _check_cube(x, g.d)
    vals = np.zeros(pts.shape[0])
    for k, comp in enumerate(g.components):
        vals += comp(pts[:, k])
    if np.ndim(x) == 1:
        return float(vals[0])
    return vals


def integrate_against(f, density, q=NODES_PER_BIN):
    """``int_0^1 f(t) p(t) dt`` with composite Gauss-Legendre.

    ``density`` either exposes ``breaks`` and ``pdf`` (histogram densities)
    or is a plain callable, integrated on 64 uniform bins.
    """
    breaks = getattr(density, "breaks", None)
    if breaks is None:
        breaks = np.linspace(0.0, 1.0, 65)
    extra = getattr(f, "breakpoints", np.empty(0))
    breaks = np.union1d(breaks, extra)
    nodes, weights = composite_rule(breaks, q)
    pdf = density.pdf if hasattr(density, "pdf") else density
    return float(np.sum(weights * f(nodes) * pdf(nodes)))


def center_components(g, marginals, tol=1e-8):
    """Split ``g`` into the shift ``g_0`` and centered components ``g_k*``.

    Each ``g_k*`` integrates to zero against its marginal; the shift collects
    the means so that ``g_0 + sum_k g_k*(x_k) == g(x)``.
    """
    marginals = list(marginals)
    if len(marginals) != g.d:
        raise ValidationError(f"need {g.d} marginals, got {len(marginals)}")
    means = []
    centered = []
    one = ComponentFunction.constant(1.0)
    for comp, p in zip(g.components, marginals):
        mass = integrate_against(one, p)
        if abs(mass - 1.0) > tol:
            raise ValidationError(f"marginal integrates to {mass!r}, not 1")
        mu = integrate_against(comp, p)
        means.append(mu)
        centered.append(replace(comp, offset=comp.offset - mu))
    return CenteredDecomposition(float(np.sum(means)), tuple(centered), tuple(means))


def holder_certificate(g, grid_size):
    """Empirical Hölder constant of ``g`` on a uniform grid.

    Returns ``(C_emp, ok)`` where ``C_emp`` is the larger of the worst
    difference quotient ``|g_l(x)-g_l(y)|/|x-y|**beta`` and the worst
    ``|g_l|``; ``ok`` compares it with the declared constant.
    """
    if grid_size < 2:
        raise ParameterError("grid_size must be at least 2")
    t = np.linspace(0.0, 1.0, int(grid_size))
    dist = np.abs(t[:, None] - t[None, :]) ** g.holder_beta
    np.fill_diagonal(dist, np.inf)
    c_emp = 0.0
    for comp in g.components:
        v = comp(t)
        ratio = np.abs(v[:, None] - v[None, :]) / dist
        c_emp = max(c_emp, float(ratio.max()), float(np.abs(v).max()))
    return c_emp, bool(c_emp <= g.holder_C + 1e-9)


def additive(components: Sequence[ComponentFunction], holder_C=None, holder_beta=1.0):
    """Build an ``AdditiveFunction``; ``holder_C`` defaults to the analytic constant."""
    comps = tuple(components)
    if holder_C is None:
        holder_C = max(c.analytic_constant(holder_beta) for c in comps)
    return AdditiveFunction(comps, float(holder_C), float(holder_beta))


PANEL_IDS = ("zero", "linear", "sine", "bump", "mixed")


def panel_function(panel_id, d, beta=1.0):
    """Built-in test function ``panel_id`` in dimension ``d``.

    zero: all components 0; linear: ``t``; sine: ``0.5 sin(2 pi t + 0.7 k)``;
    bump: ``|t - c_k|**beta`` with centers spread over (0.3, 0.7);
    mixed: linear, sine and bump in turn.
    """
    if panel_id not in PANEL_IDS:
        raise ValidationError(f"unknown function panel id {panel_id!r}; choose from {PANEL_IDS}")

    def comp(kind, k):
        if kind == "zero":
            return ComponentFunction.constant(0.0)
        if kind == "linear":
            return ComponentFunction.linear(1.0)
        if kind == "sine":
            return ComponentFunction.sine(0.5, 1, 0.7 * k)
        center = 0.3 + 0.4 * k / max(d - 1, 1)
        return ComponentFunction.holder_bump(1.0, center, beta)

    kinds = ("linear", "sine", "bump")
    comps = [comp(kinds[k % 3] if panel_id == "mixed" else panel_id, k) for k in range(d)]
    return additive(comps, holder_beta=beta)
