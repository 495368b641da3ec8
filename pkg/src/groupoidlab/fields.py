"""Symplectic charts, Lagrangian fields and the built-in field gallery.

Coordinates are ordered (q^1..q^m, p^1..p^m) and the standard symplectic
form sum_i dq^i ^ dp_i has matrix [[0, I], [-I, 0]].  A Lagrangian field on
a chart is the trivialized local datum lambda(x, v), x in the chart box and
v in a fiber box around 0 in R^m, with lambda(x, 0) = x.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import TransversalityFailure, UnknownFamily
from .numerics import DEFAULT_TOLERANCES, NumericTolerances, SmoothMap, fold_last, jacobian
from .report import CheckResult

TRANSVERSALITY_MAX_COND = 1e8
IMMERSION_MIN_RATIO = 1e-8


def standard_omega_matrix(m: int) -> np.ndarray:
    eye = np.eye(m)
    zero = np.zeros((m, m))
    return np.block([[zero, eye], [-eye, zero]])


class SymplecticChart:
    """An axis-aligned box in R^{2m} carrying a symplectic matrix field omega(x).

    ``omega`` maps ``(..., 2m)`` to ``(..., 2m, 2m)``; by default it is the
    constant standard form.  Closedness of a non-constant omega is checked
    with :meth:`closedness_residual`, never assumed.
    """

    def __init__(self, m: int, lower, upper, omega: Callable | None = None):
        if m < 1:
            raise ValueError("m must be a positive integer")
        self.m = int(m)
        self.lower = np.broadcast_to(np.asarray(lower, float), (2 * m,)).copy()
        self.upper = np.broadcast_to(np.asarray(upper, float), (2 * m,)).copy()
        if np.any(self.upper <= self.lower):
            raise ValueError("chart box must have positive extent in every coordinate")
        if omega is None:
            const = standard_omega_matrix(m)
            omega = lambda x: np.broadcast_to(const, np.shape(x)[:-1] + const.shape)
        self.omega = SmoothMap(omega, 2 * m, (2 * m, 2 * m), name="omega")

    @classmethod
    def standard(cls, m: int, radius: float = 1.0, center=0.0, omega=None) -> "SymplecticChart":
        center = np.broadcast_to(np.asarray(center, float), (2 * m,))
        return cls(m, center - radius, center + radius, omega)

    @property
    def dim(self) -> int:
        return 2 * self.m

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        return np.all((x >= self.lower) & (x <= self.upper), axis=-1)

    def omega_at(self, x) -> np.ndarray:
        return self.omega(x)

    def antisymmetry_residual(self, xs) -> np.ndarray:
        w = self.omega(xs)
        return np.max(np.abs(w + np.swapaxes(w, -1, -2)), axis=(-1, -2))

    def condition(self, xs) -> np.ndarray:
        with np.errstate(all="ignore"):
            c = np.linalg.cond(self.omega(xs))
        return np.where(np.isfinite(c), c, np.inf)

    def closedness_residual(self, xs, step: float = DEFAULT_TOLERANCES.fd_step) -> np.ndarray:
        """max |d_i w_jk + d_j w_ki + d_k w_ij| over index triples, per sample."""
        dw = jacobian(self.omega, xs, step)            # (..., j, k, i) = d_i w_jk
        d = np.moveaxis(dw, -1, -3)                    # (..., i, j, k)
        cyc = d + np.transpose(d, _axes_cycle(d.ndim)) + np.transpose(d, _axes_cycle(d.ndim, 2))
        return np.max(np.abs(cyc), axis=(-1, -2, -3))


def concat_points(*arrays) -> np.ndarray:
    """Concatenate point arrays along the last axis, broadcasting leading axes only."""
    arrays = [np.asarray(a, float) for a in arrays]
    lead = np.broadcast_shapes(*(a.shape[:-1] for a in arrays))
    return np.concatenate([np.broadcast_to(a, lead + a.shape[-1:]) for a in arrays], axis=-1)


def _axes_cycle(ndim: int, times: int = 1):
    axes = list(range(ndim))
    tail = axes[-3:]
    for _ in range(times):
        tail = tail[1:] + tail[:1]
    return tuple(axes[:-3] + tail)


class LagrangianField:
    """A map lambda(x, v) on chart.box x fiber_box with lambda(x, 0) = x.

    ``func(x, v)`` must broadcast over leading axes of ``x`` (..., 2m) and
    ``v`` (..., m).
    """

    def __init__(self, chart: SymplecticChart, func: Callable, fiber_radius: float = 1.0,
                 name: str = ""):
        self.chart = chart
        self.func = func
        self.fiber_radius = float(fiber_radius)
        self.name = name
        m = chart.m
        self.map = SmoothMap(self._concat_eval, 3 * m, (2 * m,),
                             lower=np.concatenate([chart.lower, np.full(m, -fiber_radius)]),
                             upper=np.concatenate([chart.upper, np.full(m, fiber_radius)]),
                             name=name or "lambda")

    @property
    def m(self) -> int:
        return self.chart.m

    def _concat_eval(self, z):
        return self.func(z[..., : 2 * self.m], z[..., 2 * self.m:])

    def __call__(self, x, v) -> np.ndarray:
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        lead = np.broadcast_shapes(x.shape[:-1], v.shape[:-1])
        out = np.asarray(self.func(x, v), float)
        return np.broadcast_to(out, lead + (2 * self.m,))

    def fiber_contains(self, v) -> np.ndarray:
        return np.all(np.abs(np.asarray(v, float)) <= self.fiber_radius, axis=-1)

    def jacobians(self, x, v, step: float = DEFAULT_TOLERANCES.fd_step, checked: bool = False):
        """Return (d lambda/dx, d lambda/dv) with shapes (..., 2m, 2m) and (..., 2m, m).

        With ``checked`` the stencil must stay inside the declared boxes.
        """
        z = concat_points(x, v)
        J = jacobian(self.map if checked else self._concat_eval, z, step)
        return J[..., : 2 * self.m], J[..., 2 * self.m:]


class FieldPair:
    """Two Lagrangian fields on one chart."""

    def __init__(self, lam: LagrangianField, lam_tilde: LagrangianField, name: str = "",
                 params: Sequence[float] = ()):
        if lam.chart is not lam_tilde.chart:
            raise ValueError("both fields must live on the same chart object")
        self.lam = lam
        self.lam_tilde = lam_tilde
        self.name = name
        self.params = tuple(float(p) for p in params)

    @property
    def chart(self) -> SymplecticChart:
        return self.lam.chart

    @property
    def m(self) -> int:
        return self.lam.m

    def transversality_matrix(self, x, step: float = DEFAULT_TOLERANCES.fd_step) -> np.ndarray:
        x = np.asarray(x, float)
        zero = np.zeros(x.shape[:-1] + (self.m,))
        _, dv = self.lam.jacobians(x, zero, step, checked=True)
        _, dw = self.lam_tilde.jacobians(x, zero, step, checked=True)
        return np.concatenate([-dv, dw], axis=-1)


def lagrangian_residual(field: LagrangianField, xs, vs, step: float = DEFAULT_TOLERANCES.fd_step) -> np.ndarray:
    """max_{a,b} |omega_ij(lambda) dlambda^i/dv^a dlambda^j/dv^b| per sample."""
    _, dv = field.jacobians(xs, vs, step, checked=True)
    w = field.chart.omega(field(xs, vs))
    pull = np.swapaxes(dv, -1, -2) @ w @ dv
    return np.max(np.abs(pull), axis=(-1, -2))


def check_lagrangian(field: LagrangianField, samples, tol: NumericTolerances = DEFAULT_TOLERANCES,
                     name: str = "lagrangian") -> CheckResult:
    """Worst pullback of omega to the fiber images over ``samples = (xs, vs)``."""
    xs, vs = samples
    return CheckResult.of(name, lagrangian_residual(field, xs, vs, tol.fd_step), tol.check_tol)


def immersion_ratio(field: LagrangianField, xs, vs, step: float = DEFAULT_TOLERANCES.fd_step) -> np.ndarray:
    """smallest / largest singular value of d lambda/dv, per sample."""
    _, dv = field.jacobians(xs, vs, step, checked=True)
    s = np.linalg.svd(dv, compute_uv=False)
    return s[..., -1] / s[..., 0]


def check_transversality(pair: FieldPair, x, step: float = DEFAULT_TOLERANCES.fd_step):
    """2-norm condition number of [-dlambda/dv(x,0) | dlambda~/dw(x,0)].

    Passes iff below ``TRANSVERSALITY_MAX_COND``; singular matrices give inf.
    """
    with np.errstate(all="ignore"):
        c = np.linalg.cond(pair.transversality_matrix(x, step))
    c = np.where(np.isfinite(c), c, np.inf)
    return float(c) if np.ndim(c) == 0 else c


# -- gallery ---------------------------------------------------------------

class CubicPotential:
    """W(q) = c2 |q|^2 + c3 sum q_i^3 + cx sum_{i<j} q_i q_j (q_i + q_j)."""

    def __init__(self, c2: float = 0.0, c3: float = 0.0, cx: float = 0.0):
        self.c2, self.c3, self.cx = float(c2), float(c3), float(cx)

    def __call__(self, q):
        q = np.asarray(q, float)
        s1 = np.sum(q, axis=-1)
        s2 = np.sum(q * q, axis=-1)
        s3 = np.sum(q ** 3, axis=-1)
        # sum_{i<j} q_i q_j (q_i + q_j) = s1 s2 - s3
        return self.c2 * s2 + self.c3 * s3 + self.cx * (s1 * s2 - s3)

    def grad(self, q):
        q = np.asarray(q, float)
        qq = q * q
        # c3 and cx both carry a q_i^2 term: 3 (c3 - cx) q_i^2.
        out = (3 * (self.c3 - self.cx)) * qq
        if self.c2:
            out += (2 * self.c2) * q
        if self.cx:
            s1 = fold_last(np.add, q)[..., None]
            s2 = fold_last(np.add, qq)[..., None]
            out += self.cx * s2
            out += (2 * self.cx) * (q * s1)
        return out

    @property
    def is_zero(self) -> bool:
        return self.c2 == self.c3 == self.cx == 0.0


FAMILIES = ("standard", "graph", "mixed")


def vertical_field(chart: SymplecticChart, fiber_radius: float = 1.0) -> LagrangianField:
    def lam(x, v):
        x, v = np.broadcast_arrays(x, np.concatenate([np.zeros_like(v), v], axis=-1))
        return x + v

    return LagrangianField(chart, lam, fiber_radius, name="vertical")


def horizontal_field(chart: SymplecticChart, fiber_radius: float = 1.0) -> LagrangianField:
    def lam(x, w):
        x, w = np.broadcast_arrays(x, np.concatenate([w, np.zeros_like(w)], axis=-1))
        return x + w

    return LagrangianField(chart, lam, fiber_radius, name="horizontal")


def graph_field(chart: SymplecticChart, W: CubicPotential, fiber_radius: float = 1.0) -> LagrangianField:
    """lambda_W((q, p), v) = (q + v, p + grad W(q + v) - grad W(q))."""
    m = chart.m

    def lam(x, v):
        q, p = x[..., :m], x[..., m:]
        Q = q + v
        return np.concatenate([Q, p + (W.grad(Q) - W.grad(q))], axis=-1)

    return LagrangianField(chart, lam, fiber_radius, name="graph_W")


def cograph_field(chart: SymplecticChart, V: CubicPotential, fiber_radius: float = 1.0) -> LagrangianField:
    """lambda~_V((q, p), w) = (q + grad V(p + w) - grad V(p), p + w)."""
    m = chart.m

    def lam(x, w):
        q, p = x[..., :m], x[..., m:]
        P = p + w
        return np.concatenate([q + (V.grad(P) - V.grad(p)), P], axis=-1)

    return LagrangianField(chart, lam, fiber_radius, name="graph_V")


def _potentials(name: str, params: Sequence[float]):
    params = [float(p) for p in params]
    if name == "graph":
        if len(params) not in (4, 6):
            raise ValueError("graph params: [c2_W, c3_W, c2_V, c3_V] or with [cx_W, cx_V] appended")
        cx_w, cx_v = params[4:6] if len(params) == 6 else (0.0, 0.0)
        return CubicPotential(params[0], params[1], cx_w), CubicPotential(params[2], params[3], cx_v)
    if name == "mixed":
        if len(params) not in (2, 3):
            raise ValueError("mixed params: [c2_W, c3_W] or [c2_W, c3_W, cx_W]")
        return CubicPotential(*params), CubicPotential()
    if params:
        raise ValueError("standard family takes no params")
    return None, None


def gallery(name: str, params: Sequence[float] = (), m: int = 1, box_radius: float = 1.0,
            fiber_radius: float | None = None, omega: Callable | None = None) -> FieldPair:
    """Build a named, transversality-checked field pair on the chart [-r, r]^{2m}.

    standard : vertical (q, p + v) and horizontal (q + w, p)
    graph    : lambda_W and lambda~_V for cubic W, V given by ``params``
    mixed    : lambda_W with the vertical second field (V = 0)
    """
    if name not in FAMILIES:
        raise UnknownFamily(f"unknown family {name!r}; expected one of {', '.join(FAMILIES)}")
    fiber_radius = box_radius if fiber_radius is None else fiber_radius
    chart = SymplecticChart.standard(m, box_radius, omega=omega)
    W, V = _potentials(name, params)
    if name == "standard":
        pair = FieldPair(vertical_field(chart, fiber_radius), horizontal_field(chart, fiber_radius),
                         name, params)
    else:
        pair = FieldPair(graph_field(chart, W, fiber_radius), cograph_field(chart, V, fiber_radius),
                         name, params)
    cond = check_transversality(pair, chart.center)
    if not cond < TRANSVERSALITY_MAX_COND:
        raise TransversalityFailure(
            f"{name} pair with params {list(params)} is not transversal at the chart centre "
            f"(condition number {cond:.3e})")
    return pair


def non_lagrangian_field(chart: SymplecticChart, fiber_radius: float = 1.0) -> LagrangianField:
    """Negative control on R^4: lambda = (q1 + v1, q2, p1 + v2, p2).

    The fiber images are the (q1, p1) planes, on which omega = dq1 ^ dp1 does
    not vanish.
    """
    if chart.m != 2:
        raise ValueError("the negative-control field lives on a 4-dimensional chart")

    def lam(x, v):
        x, v = np.broadcast_arrays(x, v[..., [0, 0, 1, 1]] * np.array([1.0, 0.0, 1.0, 0.0]))
        return x + v

    return LagrangianField(chart, lam, fiber_radius, name="non_lagrangian")
