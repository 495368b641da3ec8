"""The horizontal 1-form of a Lagrangian field, by quadrature of the homotopy formula.

For the homotopy F(t, x, v) = lambda(x, t v) the form is

    phi_k(x, v) = int_0^1 omega_ij(lambda(x, tv)) (dlambda^i/dv^a)(x, tv) v^a
                          (dlambda^j/dx^k)(x, tv) dt,

and the dv-part of the same integrand (with its extra factor t) must vanish
because every fiber image is Lagrangian.
"""
from __future__ import annotations

import numpy as np

from .fields import LagrangianField, concat_points
from .numerics import DEFAULT_TOLERANCES, NumericTolerances, gauss_legendre_01, jacobian
from .report import CheckResult


class HorizontalOneForm:
    """phi = phi_k(x, v) dx^k on the trivialized bundle of ``field``."""

    def __init__(self, field: LagrangianField, quad_order: int = DEFAULT_TOLERANCES.quad_order,
                 fd_step: float = DEFAULT_TOLERANCES.fd_step):
        if quad_order < 2:
            raise ValueError("quad_order must be >= 2")
        self.field = field
        self.quad_order = int(quad_order)
        self.fd_step = float(fd_step)

    @property
    def m(self) -> int:
        return self.field.m

    def _integrands(self, x, v):
        """Node values of the dx- and dv-integrands, shapes (Q, ..., 2m) and (Q, ..., m)."""
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        t, _ = gauss_legendre_01(self.quad_order)
        tv = t.reshape((-1,) + (1,) * v.ndim) * v               # (Q, ..., m)
        dx, dv = self.field.jacobians(x, tv, self.fd_step)      # (Q, ..., 2m, 2m), (Q, ..., 2m, m)
        w = self.field.chart.omega(self.field(x, tv))           # (Q, ..., 2m, 2m)
        velocity = np.einsum("...ia,...a->...i", dv, np.broadcast_to(v, tv.shape))
        wv = np.einsum("...i,...ij->...j", velocity, w)          # omega(dF/dt, .)
        horiz = np.einsum("...j,...jk->...k", wv, dx)
        vert = t.reshape((-1,) + (1,) * (horiz.ndim - 1)) * np.einsum("...j,...jb->...b", wv, dv)
        return horiz, vert

    def __call__(self, x, v) -> np.ndarray:
        _, weights = gauss_legendre_01(self.quad_order)
        horiz, _ = self._integrands(x, v)
        return np.tensordot(weights, horiz, axes=([0], [0]))

    def dv_component(self, x, v) -> np.ndarray:
        """The would-be dv coefficients of phi, shape (..., m)."""
        _, weights = gauss_legendre_01(self.quad_order)
        _, vert = self._integrands(x, v)
        return np.tensordot(weights, vert, axes=([0], [0]))

    def on_concat(self, z) -> np.ndarray:
        """phi as a map of z = (x, v) in R^{3m}."""
        return self(z[..., : 2 * self.m], z[..., 2 * self.m:])


def phi(form: HorizontalOneForm, x, v) -> np.ndarray:
    form.field.map.check_domain(concat_points(x, v))
    return form(x, v)


def check_dv_component(form: HorizontalOneForm, x, v) -> np.ndarray:
    """max_b |int t omega(dF/dt, dlambda/dv^b) dt|; the horizontality certificate."""
    form.field.map.check_domain(concat_points(x, v))
    return np.max(np.abs(form.dv_component(x, v)), axis=-1)


def check_phi_v_identity(form: HorizontalOneForm, x) -> np.ndarray:
    """Residual of d phi_k/dv^a (x, 0) = (dlambda^i/dv^a)(x, 0) omega_ik(x).

    Both sides are m x 2m matrices computed independently: the left by
    differencing the quadrature, the right from the field Jacobian.
    """
    x = np.asarray(x, float)
    m = form.m
    zero = np.zeros(x.shape[:-1] + (m,))
    field = form.field
    field.map.check_domain(concat_points(x, zero))
    dphi = jacobian(lambda v: form(x, v), zero, form.fd_step)   # (..., 2m(k), m(a))
    lhs = np.swapaxes(dphi, -1, -2)
    _, dv = field.jacobians(x, zero, form.fd_step, checked=True)
    rhs = np.swapaxes(dv, -1, -2) @ field.chart.omega(x)
    return np.max(np.abs(lhs - rhs), axis=(-1, -2))


def structure_residual(form: HorizontalOneForm, x, v) -> np.ndarray:
    """Entrywise |d phi - (lambda^* omega - pi^* omega)| on all coordinate 2-planes of (x, v).

    Forms are compared as antisymmetric 3m x 3m matrices, with the 1-form
    phi carrying zero dv coefficients.
    """
    field = form.field
    m = form.m
    z = concat_points(x, v)
    field.map.check_domain(z)

    def phi_full(zz):
        p = form.on_concat(zz)
        return np.concatenate([p, np.zeros(p.shape[:-1] + (m,))], axis=-1)

    D = jacobian(phi_full, z, form.fd_step)                   # D[b, a] = d_a phi_b
    dphi = np.swapaxes(D, -1, -2) - D                           # (d phi)_{ab} = d_a phi_b - d_b phi_a
    J = jacobian(field.map, z, form.fd_step)                    # (..., 2m, 3m)
    lam_pull = np.swapaxes(J, -1, -2) @ field.chart.omega(field.map(z)) @ J
    pi_pull = np.zeros_like(lam_pull)
    pi_pull[..., : 2 * m, : 2 * m] = field.chart.omega(z[..., : 2 * m])
    return np.max(np.abs(dphi - (lam_pull - pi_pull)), axis=(-1, -2))


def check_structure_equation(form: HorizontalOneForm, x, v,
                             tol: NumericTolerances = DEFAULT_TOLERANCES) -> CheckResult:
    return CheckResult.of("structure_equation", structure_residual(form, x, v), tol.check_tol)
