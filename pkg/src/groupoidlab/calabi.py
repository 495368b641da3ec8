"""The intersection map gamma, the mixed form Omega, potentials and Calabi functions.

gamma(x, y) is the unique intersection point of the leaves Lambda_x and
Lambda~_y near the diagonal.  Pulling omega back along gamma gives a form on
M x M with no pure (x, x) or (y, y) part; its mixed block Omega(x, y) has a
potential Phi with d_x d_y Phi = Omega, fixed here by a base point x0:

    Phi(x, y) = int_0^1 int_0^1 a^T Omega(x0 + s a, x0 + t b) b ds dt,
    a = x - x0,  b = y - x0.

Coefficient sums that vanish along rows and columns make the combinations
sum C_ij Phi(x_i, y_j) independent of that choice.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainEscape, InvalidCoefficients, NotComposable, OutOfNeighborhood
from .fields import FieldPair, concat_points
from .groupoid import CotangentElement, CycleReport, GroupoidContext, leaf_membership
from .numerics import (DEFAULT_TOLERANCES, NumericTolerances, batched_inv, cross_hessian, gauss_legendre_01,
                       hessian, jacobian, max_abs, newton_solve)
from .report import CheckResult

HESSIAN_NONDEGENERACY = 1e-6
RANK_GAP = 1e-6
_CHUNK = 16384


class GammaSolver:
    """Newton solver for lambda(x, g) = lambda~(y, g~), seeded on the zero section."""

    def __init__(self, pair: FieldPair, tol: NumericTolerances = DEFAULT_TOLERANCES):
        self.pair = pair
        self.tol = tol

    @property
    def m(self) -> int:
        return self.pair.m

    def _prepare(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        chart = self.pair.chart
        if not (np.all(chart.contains(x)) and np.all(chart.contains(y))):
            raise DomainEscape("gamma: argument outside the chart box")
        return np.broadcast_arrays(x, y)

    def solve(self, x, y) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(gamma, g, g~) for broadcast batches of x and y."""
        x, y = self._prepare(x, y)
        m = self.m
        lam, lam_t = self.pair.lam, self.pair.lam_tilde

        def residual(z):
            return lam(x, z[..., :m]) - lam_t(y, z[..., m:])

        z = newton_solve(residual, np.zeros(x.shape[:-1] + (2 * m,)), self.tol)
        g, gt = z[..., :m], z[..., m:]
        if not (np.all(lam.fiber_contains(g)) and np.all(lam_t.fiber_contains(gt))):
            raise OutOfNeighborhood("gamma: intersection left the fiber box")
        gam = lam(x, g)
        if not np.all(self.pair.chart.contains(gam)):
            raise OutOfNeighborhood("gamma: intersection left the chart box")
        return gam, g, gt

    def __call__(self, x, y) -> np.ndarray:
        return self.solve(x, y)[0]

    def derivatives(self, x, y) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """gamma with its partial Jacobians d gamma/dx and d gamma/dy.

        The Jacobians follow from differentiating the defining equation at
        the solution, using finite-difference Jacobians of the two fields.
        """
        x, y = self._prepare(x, y)
        gam, g, gt = self.solve(x, y)
        m = self.m
        step = self.tol.fd_step
        lx, lv = self.pair.lam.jacobians(x, g, step)
        ly, lw = self.pair.lam_tilde.jacobians(y, gt, step)
        K = np.concatenate([lv, -lw], axis=-1)
        Kinv = batched_inv(K)[..., :m, :]                        # rows solving for dg
        Jx = lx - lv @ (Kinv @ lx)
        Jy = lv @ (Kinv @ ly)
        return gam, Jx, Jy


def gamma(gs: GammaSolver, x, y) -> np.ndarray:
    return gs(x, y)


def check_gamma_idempotence(gs: GammaSolver, x, y) -> tuple[np.ndarray, np.ndarray]:
    """Residuals of gamma(gamma(x, y), y) = gamma(x, y) and gamma(x, gamma(x, y)) = gamma(x, y)."""
    g = gs(x, y)
    return max_abs(gs(g, y) - g), max_abs(gs(x, g) - g)


def gamma_jacobian_fd(gamma_map: Callable, x, y, step: float = DEFAULT_TOLERANCES.fd_step):
    """(d gamma/dx, d gamma/dy) by differencing ``gamma_map`` itself."""
    x = np.asarray(x, float)
    n = x.shape[-1]
    J = jacobian(lambda z: gamma_map(z[..., :n], z[..., n:]), concat_points(x, y), step)
    return J[..., :n], J[..., n:]


def omega_mixed(gs: GammaSolver, x, y) -> np.ndarray:
    """Omega_ij(x, y) = omega_kl(gamma) d_i gamma^k(x-slot) d_j gamma^l(y-slot)."""
    gam, Jx, Jy = gs.derivatives(x, y)
    return np.swapaxes(Jx, -1, -2) @ gs.pair.chart.omega(gam) @ Jy


def pure_blocks(gs: GammaSolver, x, y, gamma_map: Callable | None = None) -> tuple[np.ndarray, np.ndarray]:
    """The (x, x) and (y, y) blocks of gamma^* omega.

    With ``gamma_map`` the pullback is taken along that map instead, with
    Jacobians by direct differencing.
    """
    if gamma_map is None:
        gam, Jx, Jy = gs.derivatives(x, y)
    else:
        gam = gamma_map(x, y)
        Jx, Jy = gamma_jacobian_fd(gamma_map, x, y, gs.tol.fd_step)
    w = gs.pair.chart.omega(gam)
    return np.swapaxes(Jx, -1, -2) @ w @ Jx, np.swapaxes(Jy, -1, -2) @ w @ Jy


def check_one_one(gs: GammaSolver, x, y, gamma_map: Callable | None = None) -> np.ndarray:
    xx, yy = pure_blocks(gs, x, y, gamma_map)
    return np.maximum(np.max(np.abs(xx), axis=(-1, -2)), np.max(np.abs(yy), axis=(-1, -2)))


def membership_residual(gs: GammaSolver, x, y) -> np.ndarray:
    """How far gamma(x, y) is from Lambda_x and from Lambda~_y, by independent fits."""
    g = gs(x, y)
    return np.maximum(leaf_membership(gs.pair.lam, x, g, gs.tol),
                      leaf_membership(gs.pair.lam_tilde, y, g, gs.tol))


@dataclass(frozen=True)
class PotentialGauge:
    base: np.ndarray
    quad_order: int = DEFAULT_TOLERANCES.quad_order

    def __post_init__(self):
        object.__setattr__(self, "base", np.asarray(self.base, float))
        if self.quad_order < 1:
            raise ValueError("quad_order must be positive")

    @classmethod
    def at_center(cls, pair: FieldPair, quad_order: int = DEFAULT_TOLERANCES.quad_order) -> "PotentialGauge":
        return cls(pair.chart.center, quad_order)


def potential(gs: GammaSolver, gauge: PotentialGauge, x, y) -> np.ndarray:
    """Phi(x, y) for broadcast batches, by tensor Gauss-Legendre quadrature."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    x0 = gauge.base
    if not (np.all(gs.pair.chart.contains(x0))):
        raise DomainEscape("gauge base point outside the chart box")
    x, y = gs._prepare(x, y)
    lead = x.shape[:-1]
    n = x.shape[-1]
    # Difference stencils repeat most argument pairs; integrate each once.
    pairs, where = np.unique(concat_points(x, y).reshape(-1, 2 * n), axis=0, return_inverse=True)
    t, w = gauss_legendre_01(gauge.quad_order)
    Q = t.size
    a = (pairs[:, :n] - x0).reshape(-1, 1, 1, n)
    b = (pairs[:, n:] - x0).reshape(-1, 1, 1, n)
    X = np.broadcast_to(x0 + t[:, None, None] * a, (a.shape[0], Q, Q, n)).reshape(-1, n)
    Y = np.broadcast_to(x0 + t[None, :, None] * b, (b.shape[0], Q, Q, n)).reshape(-1, n)
    A = np.broadcast_to(a, (a.shape[0], Q, Q, n)).reshape(-1, n)
    B = np.broadcast_to(b, (b.shape[0], Q, Q, n)).reshape(-1, n)
    vals = np.empty(X.shape[0])
    for lo in range(0, X.shape[0], _CHUNK):
        sl = slice(lo, lo + _CHUNK)
        gam, Jx, Jy = gs.derivatives(X[sl], Y[sl])
        u = np.einsum("...ij,...j->...i", Jx, A[sl])
        v = np.einsum("...ij,...j->...i", Jy, B[sl])
        vals[sl] = np.einsum("...i,...ij,...j->...", u, gs.pair.chart.omega(gam), v)
    vals = vals.reshape(-1, Q, Q)
    return np.einsum("i,j,kij->k", w, w, vals)[where.reshape(-1)].reshape(lead)


@dataclass(frozen=True)
class CoefficientMatrix:
    """Coefficients C_ij with vanishing row and column sums."""

    entries: np.ndarray

    def __post_init__(self):
        C = np.asarray(self.entries, float)
        if C.ndim != 2 or C.size == 0:
            raise InvalidCoefficients("coefficients must form a nonempty matrix")
        scale = max(1.0, float(np.max(np.abs(C))))
        if (np.max(np.abs(C.sum(axis=0))) > 1e-12 * scale
                or np.max(np.abs(C.sum(axis=1))) > 1e-12 * scale):
            raise InvalidCoefficients("row and column sums must vanish")
        object.__setattr__(self, "entries", C)

    @classmethod
    def cyclic(cls, n: int) -> "CoefficientMatrix":
        """C_ij = 1 if j = i+1 (mod n), -1 if j = i, else 0."""
        if n < 2:
            raise ValueError("cyclic coefficients need n >= 2")
        return cls(np.roll(np.eye(n), 1, axis=1) - np.eye(n))


def calabi_general(gs: GammaSolver, gauge: PotentialGauge, C: CoefficientMatrix, xs, ys) -> np.ndarray:
    """sum_ij C_ij Phi(x_i, y_j); xs (..., k, 2m), ys (..., l, 2m)."""
    if not isinstance(C, CoefficientMatrix):
        C = CoefficientMatrix(C)
    xs = np.asarray(xs, float)
    ys = np.asarray(ys, float)
    k, l = C.entries.shape
    if xs.shape[-2] != k or ys.shape[-2] != l:
        raise ValueError("point counts do not match the coefficient matrix")
    phi = potential(gs, gauge, xs[..., :, None, :], ys[..., None, :, :])
    return np.einsum("ij,...ij->...", C.entries, phi)


def cyclic_calabi(gs: GammaSolver, gauge: PotentialGauge, xs) -> np.ndarray:
    """C_n(x_1..x_n) = sum_k Phi(x_k, x_k+1) - Phi(x_k+1, x_k+1), indices mod n."""
    xs = np.asarray(xs, float)
    if xs.shape[-2] < 2:
        raise ValueError("cyclic Calabi function needs n >= 2 points")
    nxt = np.roll(xs, -1, axis=-2)
    phi = potential(gs, gauge, np.stack([xs, nxt]), np.stack([nxt, nxt]))
    return np.sum(phi[0] - phi[1], axis=-1)


def t_terms(gs: GammaSolver, gauge: PotentialGauge, x, u, y) -> np.ndarray:
    """The four signed potentials summing to T(x, u, y), stacked on the last axis."""
    x, u, y = np.broadcast_arrays(*(np.asarray(p, float) for p in (x, u, y)))
    phi = potential(gs, gauge, np.stack([x, u, u, x]), np.stack([u, u, y, y]))
    return np.moveaxis(phi * np.array([1.0, -1.0, 1.0, -1.0]).reshape((4,) + (1,) * (phi.ndim - 1)), 0, -1)


def t_function(gs: GammaSolver, gauge: PotentialGauge, x, u, y) -> np.ndarray:
    """T(x, u, y) = Phi(x, u) - Phi(u, u) + Phi(u, y) - Phi(x, y)."""
    return t_terms(gs, gauge, x, u, y).sum(axis=-1)


def scaled_t(terms: np.ndarray) -> np.ndarray:
    """|T| relative to the size of its terms (floored at 1)."""
    return np.abs(terms.sum(axis=-1)) / np.maximum(1.0, np.sum(np.abs(terms), axis=-1))


@dataclass
class GeneratingReport:
    """Outcome of checking one n-tuple; residual arrays have length n."""

    xs: np.ndarray
    xi: np.ndarray
    t_gradient: np.ndarray
    source: np.ndarray
    target: np.ndarray
    cycle: CycleReport | None = None
    failure: str | None = None

    def checks(self, tol: float) -> list[CheckResult]:
        out = [CheckResult.of("xi_matches_dT", self.t_gradient, tol),
               CheckResult.of("source_matches_gamma", self.source, tol),
               CheckResult.of("target_matches_gamma", self.target, tol)]
        cyc = np.inf if self.cycle is None else self.cycle.residual()
        out.append(CheckResult.of("cycle_composes_to_unit", cyc, tol))
        return out

    def passed(self, tol: float) -> bool:
        return all(c.passed for c in self.checks(tol))


def calabi_gradient(gs: GammaSolver, gauge: PotentialGauge, xs) -> np.ndarray:
    """xi_k = d C_n / d x_k by central differences; xs and the result are (..., n, 2m)."""
    xs = np.asarray(xs, float)
    n, d = xs.shape[-2:]
    flat = jacobian(lambda z: cyclic_calabi(gs, gauge, z.reshape(z.shape[:-1] + (n, d))),
                    xs.reshape(xs.shape[:-2] + (n * d,)), gs.tol.fd_step)
    return flat.reshape(xs.shape)


def check_generating_function(gs: GammaSolver, gauge: PotentialGauge, ctx: GroupoidContext, xs,
                              match_tol: float | None = None) -> GeneratingReport:
    """Certify that the covectors dC_n/dx_k form an n-cycle of the groupoid.

    ``xs`` is (n, 2m) or a batch (..., n, 2m) of tuples; residuals keep the
    batch shape with n last.
    """
    xs = np.asarray(xs, float)
    if xs.ndim < 2 or xs.shape[-2] < 2:
        raise ValueError("xs must hold n >= 2 points")
    n = xs.shape[-2]
    xi = calabi_gradient(gs, gauge, xs)
    prev = np.roll(xs, 1, axis=-2)
    nxt = np.roll(xs, -1, axis=-2)

    dT = jacobian(lambda u: t_function(gs, gauge, prev, u, nxt), xs, gs.tol.fd_step)
    t_grad = max_abs(dT - xi)

    s, t = ctx.source_target(CotangentElement(xs, xi))
    src = max_abs(s - gs(xs, nxt))
    tgt = max_abs(t - gs(prev, xs))
    report = GeneratingReport(xs, xi, t_grad, src, tgt)
    try:
        report.cycle = ctx.check_cycle([CotangentElement(xs[..., k, :], xi[..., k, :]) for k in range(n)],
                                       match_tol)
    except NotComposable as exc:
        report.failure = str(exc)
    return report


@dataclass
class CriticalPointReport:
    gamma_point: np.ndarray
    grad_norm: float
    t_value: float
    t_scaled: float
    hessian: np.ndarray
    hessian_min_abs_eig: float
    hessian_max_abs_eig: float
    A: np.ndarray
    B: np.ndarray
    identity_residuals: dict[str, float] = field(default_factory=dict)
    ranks: tuple[int, int] = (0, 0)

    @property
    def nondegenerate(self) -> bool:
        return self.hessian_min_abs_eig >= HESSIAN_NONDEGENERACY * self.hessian_max_abs_eig


def _rank_residual(M: np.ndarray, m: int) -> tuple[float, int]:
    """sigma_{m+1} / sigma_1 together with the numerical rank at RANK_GAP."""
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[0] == 0:
        return float("inf"), 0
    return float(sv[m] / sv[0]), int(np.sum(sv > RANK_GAP * sv[0]))


def critical_point_report(gs: GammaSolver, gauge: PotentialGauge, x, y) -> CriticalPointReport:
    """Critical point data of u -> T(x, u, y) and the projectors at the diagonal.

    The projectors A = d gamma/dx and B = d gamma/dy are taken at (z, z) with
    z = x when x = y and z = (x + y) / 2 otherwise.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    m = gs.m
    step = gs.tol.fd_step

    u = gs(x, y)
    terms = t_terms(gs, gauge, x, u, y)
    grad = jacobian(lambda uu: t_function(gs, gauge, x, uu, y), u, step)
    H = hessian(lambda uu: t_function(gs, gauge, x, uu, y), u, gs.tol.hess_step)
    eig = np.abs(np.linalg.eigvalsh(H))

    diagonal = np.array_equal(x, y)
    z = x if diagonal else 0.5 * (x + y)
    _, A, B = gs.derivatives(z, z)
    C = gs.pair.chart.omega(z)
    Cinv = np.linalg.inv(C)
    I = np.eye(2 * m)
    # On the diagonal gamma(x, x) = x exactly, so H is already the Hessian at (z, z, z).
    H_diag = H if diagonal and np.array_equal(u, z) else hessian(
        lambda uu: t_function(gs, gauge, z, uu, z), z, gs.tol.hess_step)
    dd_phi = cross_hessian(lambda a, b: potential(gs, gauge, a, b), z, z, gs.tol.hess_step)
    rank_a, ra = _rank_residual(A, m)
    rank_b, rb = _rank_residual(B, m)

    def norm(M):
        return float(np.max(np.abs(M)))

    residuals = {
        "A_plus_B_minus_I": norm(A + B - I),
        "A_squared_minus_A": norm(A @ A - A),
        "B_squared_minus_B": norm(B @ B - B),
        "AB": norm(A @ B),
        "BA": norm(B @ A),
        "B_minus_Cinv_At_C": norm(B - Cinv @ A.T @ C),
        "hessian_minus_C_A_minus_B": norm(H_diag - C @ (A - B)),
        "At_C_B_minus_dd_phi": norm(A.T @ C @ B - dd_phi),
        "rank_A": rank_a,
        "rank_B": rank_b,
    }
    return CriticalPointReport(
        gamma_point=u,
        grad_norm=float(np.max(np.abs(grad))),
        t_value=float(terms.sum()),
        t_scaled=float(scaled_t(terms)),
        hessian=H,
        hessian_min_abs_eig=float(eig.min()),
        hessian_max_abs_eig=float(eig.max()),
        A=A,
        B=B,
        identity_residuals=residuals,
        ranks=(ra, rb),
    )
