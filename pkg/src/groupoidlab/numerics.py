"""Deterministic numerical kernel.

Finite-difference derivatives, Gauss-Legendre quadrature on [0, 1] and a
damped Newton solver for batches of small dense systems.

Every routine is vectorized over leading axes: a point is an array whose
*last* axis holds its coordinates, and any number of leading axes index
independent queries.  Maps passed in must broadcast the same way.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .errors import DomainEscape, OutOfNeighborhood

# 5-point stencils, exact on quartics.  Values are combined as symmetric
# differences so that constants differentiate to exactly zero.
_D1_OFFSETS = np.array([-2.0, -1.0, 1.0, 2.0])


def _d1(m2, m1, p1, p2):
    return (8.0 * (p1 - m1) - (p2 - m2)) / 12.0

MAX_CONDITION = 1e12


@dataclass(frozen=True)
class NumericTolerances:
    fd_step: float = 1e-4
    newton_tol: float = 1e-12
    newton_max_iter: int = 50
    quad_order: int = 16
    match_tol: float = 1e-9
    check_tol: float = 1e-6
    # Second differences divide noise by step**2; a larger base step keeps
    # the roundoff floor of nested quadrature/Newton values below 1e-9.
    hess_step: float = 2e-2

    def __post_init__(self):
        for name in ("fd_step", "newton_tol", "match_tol", "check_tol", "hess_step"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite number, got {value!r}")
        if int(self.newton_max_iter) != self.newton_max_iter or self.newton_max_iter < 1:
            raise ValueError("newton_max_iter must be an integer >= 1")
        if int(self.quad_order) != self.quad_order or self.quad_order < 2:
            raise ValueError("quad_order must be an integer >= 2")


DEFAULT_TOLERANCES = NumericTolerances()


class SmoothMap:
    """A vectorized smooth map R^domain_dim -> R^codomain_shape.

    ``func`` receives an array of shape ``(..., domain_dim)`` and must return
    ``(..., *codomain_shape)``.  An optional axis-aligned box declares the
    domain; derivative stencils that leave it raise :class:`DomainEscape`.
    """

    def __init__(self, func: Callable[[np.ndarray], np.ndarray], domain_dim: int,
                 codomain_shape=(), lower=None, upper=None, name: str = ""):
        if domain_dim < 1:
            raise ValueError("domain_dim must be positive")
        self.func = func
        self.domain_dim = int(domain_dim)
        if np.isscalar(codomain_shape):
            codomain_shape = (int(codomain_shape),)
        self.codomain_shape = tuple(int(c) for c in codomain_shape)
        self.lower = None if lower is None else np.broadcast_to(np.asarray(lower, float), (domain_dim,))
        self.upper = None if upper is None else np.broadcast_to(np.asarray(upper, float), (domain_dim,))
        self.name = name

    @property
    def codomain_dim(self) -> int:
        return int(np.prod(self.codomain_shape, dtype=int))

    def __call__(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        out = np.asarray(self.func(a), dtype=float)
        expected = a.shape[:-1] + self.codomain_shape
        if out.shape != expected:
            out = np.broadcast_to(out, expected)
        return out

    def contains(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        inside = np.ones(a.shape[:-1], dtype=bool)
        if self.lower is not None:
            inside &= np.all(a >= self.lower, axis=-1)
        if self.upper is not None:
            inside &= np.all(a <= self.upper, axis=-1)
        return inside

    def check_domain(self, a) -> None:
        if self.lower is None and self.upper is None:
            return
        if not np.all(self.contains(a)):
            raise DomainEscape(f"evaluation point outside the domain box of {self.name or 'map'}")

    def __repr__(self):
        return f"SmoothMap({self.name or self.func!r}, {self.domain_dim} -> {self.codomain_shape})"


def as_smooth_map(f, domain_dim: int, codomain_shape=()) -> SmoothMap:
    if isinstance(f, SmoothMap):
        return f
    return SmoothMap(f, domain_dim, codomain_shape)


def _steps(a: np.ndarray, step: float) -> np.ndarray:
    return step * np.maximum(1.0, np.abs(a))


def jacobian(f, a, step: float = DEFAULT_TOLERANCES.fd_step) -> np.ndarray:
    """Fourth-order central finite-difference Jacobian.

    Parameters
    ----------
    f : SmoothMap or callable
        Vectorized map; plain callables are assumed unbounded.
    a : array (..., n)
    step : float
        Base step; coordinate ``i`` uses ``step * max(1, |a_i|)``.

    Returns
    -------
    array (..., *codomain_shape, n)
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[-1]
    lead = a.shape[:-1]
    h = np.moveaxis(_steps(a, step), -1, 0)                       # (n, *lead)
    pts = np.empty((n, 4) + a.shape)                              # (n, 4, *lead, n)
    pts[...] = a
    for i in range(n):
        pts[i, ..., i] += _D1_OFFSETS.reshape((4,) + (1,) * len(lead)) * h[i]
    if isinstance(f, SmoothMap):
        f.check_domain(pts)
    vals = np.asarray(f(pts), dtype=float)                        # (n, 4, *lead, *cod)
    cod_ndim = vals.ndim - 2 - len(lead)
    d = _d1(vals[:, 0], vals[:, 1], vals[:, 2], vals[:, 3])       # (n, *lead, *cod)
    d = d / h.reshape(h.shape + (1,) * cod_ndim)
    return np.moveaxis(d, 0, -1)


def directional_derivative(f, a, direction, step: float = DEFAULT_TOLERANCES.fd_step) -> np.ndarray:
    """Fourth-order central difference of ``f`` along ``direction`` (not normalized)."""
    a = np.asarray(a, dtype=float)
    direction = np.asarray(direction, dtype=float)
    pts = a + _D1_OFFSETS.reshape((4,) + (1,) * a.ndim) * step * direction
    if isinstance(f, SmoothMap):
        f.check_domain(pts)
    vals = np.asarray(f(pts), dtype=float)
    return _d1(*vals) / step


def hessian(f, a, step: float = DEFAULT_TOLERANCES.hess_step) -> np.ndarray:
    """Symmetric central finite-difference Hessian of a scalar map.

    Diagonal entries use the 5-point second-difference stencil and mixed
    entries the tensor product of two 5-point first-difference stencils, so
    the result is exact (to roundoff) on polynomials of degree <= 4 in each
    variable, in particular on quadratics.

    Returns
    -------
    array (..., n, n)
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[-1]
    lead = a.shape[:-1]
    h = _steps(a, step)                                           # (*lead, n)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    disps = [np.zeros_like(a)]
    for i in range(n):
        for o in _D1_OFFSETS:
            d = np.zeros_like(a)
            d[..., i] = o * h[..., i]
            disps.append(d)
    for i, j in pairs:
        for oi in _D1_OFFSETS:
            for oj in _D1_OFFSETS:
                d = np.zeros_like(a)
                d[..., i] = oi * h[..., i]
                d[..., j] = oj * h[..., j]
                disps.append(d)
    pts = a + np.stack(disps)                                     # (P, *lead, n)
    if isinstance(f, SmoothMap):
        f.check_domain(pts)
    vals = np.asarray(f(pts), dtype=float).reshape((len(disps),) + lead)
    centre = vals[0]
    out = np.empty(lead + (n, n))
    k = 1
    for i in range(n):
        m2, m1, p1, p2 = vals[k:k + 4]
        out[..., i, i] = (16.0 * ((p1 - centre) + (m1 - centre))
                          - ((p2 - centre) + (m2 - centre))) / (12.0 * h[..., i] ** 2)
        k += 4
    for i, j in pairs:
        block = vals[k:k + 16].reshape((4, 4) + lead)
        mixed = _d1(*[_d1(*block[r]) for r in range(4)]) / (h[..., i] * h[..., j])
        out[..., i, j] = mixed
        out[..., j, i] = mixed
        k += 16
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def cross_hessian(f, a, b, step: float = DEFAULT_TOLERANCES.hess_step) -> np.ndarray:
    """Mixed second derivatives d^2 f(a, b) / da_i db_j of a scalar map of two points.

    Returns
    -------
    array (..., n_a, n_b)
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = a.shape[-1], b.shape[-1]
    lead = np.broadcast_shapes(a.shape[:-1], b.shape[:-1])
    a = np.broadcast_to(a, lead + (na,))
    b = np.broadcast_to(b, lead + (nb,))
    ha = _steps(a, step)
    hb = _steps(b, step)
    da, db = [], []
    for i in range(na):
        for j in range(nb):
            for oi in _D1_OFFSETS:
                for oj in _D1_OFFSETS:
                    x = np.zeros(lead + (na,))
                    y = np.zeros(lead + (nb,))
                    x[..., i] = oi * ha[..., i]
                    y[..., j] = oj * hb[..., j]
                    da.append(x)
                    db.append(y)
    vals = np.asarray(f(a + np.stack(da), b + np.stack(db)), dtype=float)
    vals = vals.reshape((na, nb, 4, 4) + lead)
    out = _d1(*[_d1(*np.moveaxis(vals[:, :, r], 2, 0)) for r in range(4)])   # (na, nb, *lead)
    out = out / (np.moveaxis(ha, -1, 0)[:, None] * np.moveaxis(hb, -1, 0)[None, :])
    return np.moveaxis(np.moveaxis(out, 0, -1), 0, -1)


@lru_cache(maxsize=None)
def gauss_legendre_01(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the ``order``-point Gauss-Legendre rule on [0, 1]."""
    if order < 1:
        raise ValueError("order must be positive")
    x, w = np.polynomial.legendre.leggauss(order)
    nodes = 0.5 * (x + 1.0)
    weights = 0.5 * w
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def integrate_01(f, order: int = DEFAULT_TOLERANCES.quad_order):
    """Gauss-Legendre value of the integral of ``f`` over [0, 1].

    ``f`` is called once with the array of nodes (shape ``(order,)``) and
    may return ``(order, ...)``; the integral is taken over the first axis.
    Exact for polynomials of degree <= 2*order - 1.
    """
    nodes, weights = gauss_legendre_01(int(order))
    vals = np.asarray(f(nodes), dtype=float)
    return np.tensordot(weights, vals, axes=([0], [0]))


def fold_last(ufunc, a: np.ndarray) -> np.ndarray:
    """``ufunc.reduce`` over the last axis by folding its columns.

    Reductions along a short trailing axis are strided and slow in numpy;
    folding whole columns is an order of magnitude faster for the batch
    shapes used here.
    """
    a = np.asarray(a)
    out = np.array(a[..., 0], copy=True)
    for i in range(1, a.shape[-1]):
        ufunc(out, a[..., i], out=out)
    return out


def max_abs(r: np.ndarray) -> np.ndarray:
    return fold_last(np.maximum, np.abs(r))


def newton_solve(F, seed, tol: NumericTolerances = DEFAULT_TOLERANCES, *,
                 max_cond: float = MAX_CONDITION, polish: int = 2) -> np.ndarray:
    """Damped Newton iteration for F(x) = 0, batched over leading axes.

    Jacobians are forward differences of ``F`` at a sqrt(eps) step, which is
    ample for a Newton direction.  Each step is halved until the residual
    infinity norm decreases.  After every query meets ``tol.newton_tol``, up
    to ``polish`` chord steps with the last Jacobian are taken (kept only
    where they reduce the residual) so that solutions sit at roundoff level
    and stay smooth under finite differencing by callers.

    Raises
    ------
    OutOfNeighborhood
        If the budget is exhausted, a line search stalls, a Jacobian is
        numerically singular (1-norm condition > ``max_cond``) or the
        iteration produces non-finite values.
    """
    x = np.array(seed, dtype=float, copy=True)
    if x.ndim == 0:
        x = x.reshape(1)
    lead = x.shape[:-1]
    r = np.asarray(F(x), dtype=float)
    if r.shape != x.shape:
        raise ValueError(f"F must map (..., d) to (..., d); got {x.shape} -> {r.shape}")
    nr = _finite_norm(r)
    Jinv = None

    for _ in range(tol.newton_max_iter):
        active = nr > tol.newton_tol
        if not active.any():
            break
        Jinv = _inverse_jacobian(F, x, r, active, max_cond)
        x, r, nr, _ = _newton_step(F, Jinv, x, r, nr, active, line_search=True)
    else:
        if np.any(nr > tol.newton_tol):
            raise OutOfNeighborhood(
                f"Newton did not reach {tol.newton_tol:g} in {tol.newton_max_iter} iterations "
                f"(worst residual {np.max(nr):.3e})")

    if Jinv is None and polish:
        # Already converged at the seed: one Jacobian for the polish steps.
        Jinv = _inverse_jacobian(F, x, r, np.ones(lead, bool), np.inf)
    for _ in range(polish):
        x, r, nr, improved = _newton_step(F, Jinv, x, r, nr, np.ones(lead, bool), line_search=False)
        if not improved.any():
            break

    # The residual contract is certified here, not assumed.
    if not np.all(nr <= tol.newton_tol):
        raise OutOfNeighborhood(f"Newton residual {np.max(nr):.3e} above {tol.newton_tol:g}")
    return x


_FORWARD_STEP = float(np.sqrt(np.finfo(float).eps))


def _finite_norm(r):
    nr = max_abs(r)
    return np.where(np.isfinite(nr), nr, np.inf)


def _inverse_jacobian(F, x, r, active, max_cond):
    """Inverse forward-difference Jacobian; identity where inactive or singular."""
    n = x.shape[-1]
    h = _FORWARD_STEP * np.maximum(1.0, np.abs(x))                   # (*lead, n)
    pts = np.empty((n,) + x.shape)
    pts[...] = x
    for i in range(n):
        pts[i, ..., i] += h[..., i]
    with np.errstate(all="ignore"):
        vals = np.asarray(F(pts), dtype=float)                       # (n, *lead, n)
    J = np.empty(x.shape + (n,))
    for i in range(n):
        J[..., i] = (vals[i] - r) / h[..., i, None]
    eye = np.eye(n)
    finite = fold_last(np.logical_and, np.isfinite(J).reshape(J.shape[:-2] + (n * n,)))
    J = np.where((active & finite)[..., None, None], J, eye)
    with np.errstate(all="ignore"):
        try:
            Jinv = batched_inv(J)
            singular = np.zeros(active.shape, bool)
        except np.linalg.LinAlgError:
            Jinv = np.empty_like(J)
            singular = np.zeros(active.shape, bool)
            flat_J, flat_inv = J.reshape(-1, n, n), Jinv.reshape(-1, n, n)
            flat_s = singular.reshape(-1)
            for i in range(flat_J.shape[0]):
                try:
                    flat_inv[i] = np.linalg.inv(flat_J[i])
                except np.linalg.LinAlgError:
                    flat_inv[i] = eye
                    flat_s[i] = True
        cond = _norm_1(J) * _norm_1(Jinv)
    cond = np.where(np.isfinite(cond) & ~singular, cond, np.inf)
    if np.isfinite(max_cond) and np.any(cond[active] > max_cond):
        raise OutOfNeighborhood(
            f"Newton Jacobian condition {np.max(cond[active]):.3e} exceeds {max_cond:g}")
    return np.where(np.isfinite(cond)[..., None, None], Jinv, eye)


def batched_inv(M: np.ndarray) -> np.ndarray:
    """Inverse of a batch of square matrices; 1x1 and 2x2 in closed form.

    Closed-form inverses of singular matrices come out non-finite rather
    than raising.
    """
    n = M.shape[-1]
    if n == 1:
        return 1.0 / M
    if n == 2:
        a, b, c, d = M[..., 0, 0], M[..., 0, 1], M[..., 1, 0], M[..., 1, 1]
        det = a * d - b * c
        out = np.empty_like(M)
        out[..., 0, 0] = d / det
        out[..., 0, 1] = -b / det
        out[..., 1, 0] = -c / det
        out[..., 1, 1] = a / det
        return out
    return np.linalg.inv(M)


def _norm_1(M):
    """Matrix 1-norm (largest column sum) over a batch."""
    return fold_last(np.maximum, fold_last(np.add, np.swapaxes(np.abs(M), -1, -2)))


def _newton_step(F, Jinv, x, r, nr, active, line_search):
    dx = -np.einsum("...ij,...j->...i", Jinv, r)
    dx = np.where(active[..., None], dx, 0.0)

    pending = active.copy()
    improved = np.zeros(active.shape, bool)
    step = np.ones(active.shape)
    for _ in range(40 if line_search else 1):
        trial = x + step[..., None] * dx
        with np.errstate(all="ignore"):
            rt = np.asarray(F(trial), dtype=float)
        nt = _finite_norm(rt)
        ok = pending & (nt < nr)
        x = np.where(ok[..., None], trial, x)
        r = np.where(ok[..., None], rt, r)
        nr = np.where(ok, nt, nr)
        improved |= ok
        pending &= ~ok
        if not pending.any():
            break
        step = np.where(pending, 0.5 * step, step)
    if line_search and pending.any():
        raise OutOfNeighborhood(
            f"Newton line search stalled at residual {np.max(nr[pending]):.3e}")
    return x, r, nr, improved


def gauss_newton_residual(F, seed, tol: NumericTolerances = DEFAULT_TOLERANCES,
                          iterations: int = 30) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares fit of an overdetermined F(z) = 0 from ``seed``.

    Used for membership certificates ("does this point lie on that leaf"),
    where a nonzero final residual is an answer rather than an error.

    Returns
    -------
    z : array (..., k)
    residual : array (...) infinity norm of F at ``z``
    """
    z = np.array(seed, dtype=float, copy=True)
    r = np.asarray(F(z), dtype=float)
    nr = _finite_norm(r)
    for _ in range(iterations):
        J = jacobian(F, z, tol.fd_step)
        JT = np.swapaxes(J, -1, -2)
        dz = np.linalg.solve(JT @ J, -(JT @ r[..., None]))[..., 0]
        trial = z + dz
        rt = np.asarray(F(trial), dtype=float)
        nt = _finite_norm(rt)
        better = nt < nr
        if not better.any():
            break
        z = np.where(better[..., None], trial, z)
        r = np.where(better[..., None], rt, r)
        nr = np.where(better, nt, nr)
    return z, nr
