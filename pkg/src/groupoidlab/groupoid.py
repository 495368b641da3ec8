"""The local symplectic groupoid V => M on the cotangent chart.

An element is a covector (x, xi).  chi(x, v, w) = (x, phi~(x, w) - phi(x, v))
identifies a neighborhood of the zero section of E + E~ with V, and

    f(chi(x, v, w)) = (lambda~(x, w), lambda(x, v)) = (target, source)

identifies V with a neighborhood of the diagonal of M x M.  Composition is
the pair-groupoid product (a, b)(b, c) = (a, c) pulled back through f.

Canonical form convention: theta = xi_i dx^i, symplectic form -d theta with
matrix [[0, I], [-I, 0]] in (x, xi) order.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainEscape, NotComposable, OutOfNeighborhood, TransversalityFailure
from .fields import TRANSVERSALITY_MAX_COND, FieldPair, LagrangianField, check_transversality, concat_points
from .numerics import DEFAULT_TOLERANCES, NumericTolerances, gauss_newton_residual, jacobian, max_abs, newton_solve
from .oneform import HorizontalOneForm


@dataclass(frozen=True)
class CotangentElement:
    """A covector ``covector`` at ``base``; both arrays (..., 2m)."""

    base: np.ndarray
    covector: np.ndarray

    def __post_init__(self):
        base = np.asarray(self.base, float)
        cov = np.asarray(self.covector, float)
        lead = np.broadcast_shapes(base.shape[:-1], cov.shape[:-1])
        object.__setattr__(self, "base", np.broadcast_to(base, lead + base.shape[-1:]))
        object.__setattr__(self, "covector", np.broadcast_to(cov, lead + cov.shape[-1:]))

    @classmethod
    def from_array(cls, p) -> "CotangentElement":
        p = np.asarray(p, float)
        n = p.shape[-1] // 2
        return cls(p[..., :n], p[..., n:])

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.base, self.covector], axis=-1)

    def __getitem__(self, idx) -> "CotangentElement":
        return CotangentElement(self.base[idx], self.covector[idx])

    def distance(self, other: "CotangentElement") -> np.ndarray:
        """Infinity-norm distance in (x, xi) coordinates."""
        return max_abs(self.as_array() - other.as_array())


def canonical_matrix(m: int) -> np.ndarray:
    n = 2 * m
    return np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])


class GroupoidContext:
    """A field pair together with its horizontal forms and tolerances.

    All operations accept batches (leading axes).  The only mutable state is
    a memo of transversality verdicts keyed by base point; entries are
    written whole, so concurrent readers never see partial results.
    """

    def __init__(self, pair: FieldPair, tol: NumericTolerances = DEFAULT_TOLERANCES):
        self.pair = pair
        self.tol = tol
        self.phi = HorizontalOneForm(pair.lam, tol.quad_order, tol.fd_step)
        self.phi_tilde = HorizontalOneForm(pair.lam_tilde, tol.quad_order, tol.fd_step)
        self._transversal: dict[bytes, float] = {}

    @property
    def m(self) -> int:
        return self.pair.m

    @property
    def chart(self):
        return self.pair.chart

    # -- validation ------------------------------------------------------

    def _check_base(self, x) -> None:
        x = np.asarray(x, float)
        if not np.all(self.chart.contains(x)):
            raise DomainEscape("base point outside the chart box")
        pts = x.reshape(-1, x.shape[-1])
        keys = [p.tobytes() for p in pts]
        missing = [i for i, k in enumerate(keys) if k not in self._transversal]
        if missing:
            conds = np.atleast_1d(check_transversality(self.pair, pts[missing], self.tol.fd_step))
            for i, c in zip(missing, conds):
                self._transversal[keys[i]] = float(c)
        worst = max(self._transversal[k] for k in keys)
        if not worst < TRANSVERSALITY_MAX_COND:
            raise TransversalityFailure(f"fields not transversal at a queried base point (cond {worst:.3e})")

    def _check_fibers(self, v, w, what: str) -> None:
        ok = self.pair.lam.fiber_contains(v) & self.pair.lam_tilde.fiber_contains(w)
        if not np.all(ok):
            raise OutOfNeighborhood(f"{what}: solution left the fiber box")

    # -- chi and its inverse ---------------------------------------------

    def chi(self, x, v, w) -> CotangentElement:
        x = np.asarray(x, float)
        self._check_base(x)
        lam, lam_t = self.pair.lam, self.pair.lam_tilde
        lam.map.check_domain(concat_points(x, v))
        lam_t.map.check_domain(concat_points(x, w))
        return CotangentElement(x, self.phi_tilde(x, w) - self.phi(x, v))

    def chi_inverse(self, el: CotangentElement) -> tuple[np.ndarray, np.ndarray]:
        """Fiber coordinates (v, w) with chi(x, v, w) = el, by Newton from (0, 0)."""
        x, xi = el.base, el.covector
        self._check_base(x)
        m = self.m

        def residual(z):
            return self.phi_tilde(x, z[..., m:]) - self.phi(x, z[..., :m]) - xi

        z = newton_solve(residual, np.zeros(x.shape[:-1] + (2 * m,)), self.tol)
        v, w = z[..., :m], z[..., m:]
        self._check_fibers(v, w, "chi_inverse")
        return v, w

    # -- structure maps --------------------------------------------------

    def source_target(self, el: CotangentElement) -> tuple[np.ndarray, np.ndarray]:
        v, w = self.chi_inverse(el)
        return self.pair.lam(el.base, v), self.pair.lam_tilde(el.base, w)

    def source(self, el: CotangentElement) -> np.ndarray:
        return self.source_target(el)[0]

    def target(self, el: CotangentElement) -> np.ndarray:
        return self.source_target(el)[1]

    def f(self, el: CotangentElement) -> np.ndarray:
        """(target, source) in R^{4m}."""
        s, t = self.source_target(el)
        return np.concatenate([t, s], axis=-1)

    def f_inverse(self, a, b) -> CotangentElement:
        """The element with target a and source b (pair-groupoid arrow (a, b))."""
        a = np.asarray(a, float)
        b = np.asarray(b, float)
        a, b = np.broadcast_arrays(a, b)
        m = self.m
        lam, lam_t = self.pair.lam, self.pair.lam_tilde

        def residual(z):
            x, v, w = z[..., : 2 * m], z[..., 2 * m: 3 * m], z[..., 3 * m:]
            return np.concatenate([lam_t(x, w) - a, lam(x, v) - b], axis=-1)

        seed = np.concatenate([0.5 * (a + b), np.zeros(a.shape[:-1] + (2 * m,))], axis=-1)
        z = newton_solve(residual, seed, self.tol)
        x, v, w = z[..., : 2 * m], z[..., 2 * m: 3 * m], z[..., 3 * m:]
        if not np.all(self.chart.contains(x)):
            raise OutOfNeighborhood("f_inverse: base point left the chart box")
        self._check_fibers(v, w, "f_inverse")
        return self.chi(x, v, w)

    def unit(self, x) -> CotangentElement:
        x = np.asarray(x, float)
        if not np.all(self.chart.contains(x)):
            raise DomainEscape("unit: point outside the chart box")
        return CotangentElement(x, np.zeros_like(x))

    def inverse(self, alpha: CotangentElement) -> CotangentElement:
        s, t = self.source_target(alpha)
        return self.f_inverse(s, t)

    def compose(self, alpha: CotangentElement, beta: CotangentElement,
                match_tol: float | None = None) -> CotangentElement:
        """alpha * beta, defined when source(alpha) = target(beta)."""
        match_tol = self.tol.match_tol if match_tol is None else match_tol
        s_a, t_a = self.source_target(alpha)
        s_b, t_b = self.source_target(beta)
        defect = max_abs(s_a - t_b)
        if np.any(defect > match_tol):
            raise NotComposable(
                f"source(alpha) and target(beta) differ by {np.max(defect):.3e} > {match_tol:g}")
        return self.f_inverse(t_a, s_b)

    # -- certificates ----------------------------------------------------

    def check_cycle(self, elements: Sequence[CotangentElement],
                    match_tol: float | None = None) -> "CycleReport":
        """Left-fold ``elements`` with compose and measure the distance to a unit."""
        if len(elements) < 2:
            raise ValueError("a cycle needs at least two elements")
        match_tol = self.tol.match_tol if match_tol is None else match_tol
        ends = [self.source_target(e) for e in elements]
        n = len(elements)
        matching = np.max(np.stack([max_abs(ends[k][0] - ends[(k + 1) % n][1]) for k in range(n)]), axis=0)
        if np.any(matching > match_tol):
            raise NotComposable(f"cycle matching defect {np.max(matching):.3e} > {match_tol:g}")
        acc = elements[0]
        for el in elements[1:]:
            acc = self.compose(acc, el, match_tol)
        unit = self.unit(ends[0][1])
        return CycleReport(unit_defect=acc.distance(unit), matching_defect=matching)

    def symplectic_residual(self, el: CotangentElement) -> np.ndarray:
        """Deviation of f^*(pi_2^* omega - pi_1^* omega) from -d theta, per element."""
        m = self.m
        p = el.as_array()
        J = jacobian(lambda q: self.f(CotangentElement.from_array(q)), p, self.tol.fd_step)
        t, s = self.f(el)[..., : 2 * m], self.f(el)[..., 2 * m:]
        w = self.chart.omega
        lead = p.shape[:-1]
        G = np.zeros(lead + (4 * m, 4 * m))
        G[..., : 2 * m, : 2 * m] = -w(t)
        G[..., 2 * m:, 2 * m:] = w(s)
        M = np.swapaxes(J, -1, -2) @ G @ J
        return np.max(np.abs(M - canonical_matrix(m)), axis=(-1, -2))

    def check_symplectomorphism(self, el: CotangentElement) -> np.ndarray:
        return self.symplectic_residual(el)

    def inverse_antisymplectic_residual(self, el: CotangentElement) -> np.ndarray:
        """|i^* (-d theta) + (-d theta)| entrywise, i the groupoid inverse."""
        m = self.m
        J = jacobian(lambda q: self.inverse(CotangentElement.from_array(q)).as_array(),
                     el.as_array(), self.tol.fd_step)
        C = canonical_matrix(m)
        return np.max(np.abs(np.swapaxes(J, -1, -2) @ C @ J + C), axis=(-1, -2))

    def inclusion_residuals(self, el: CotangentElement) -> tuple[np.ndarray, np.ndarray]:
        """Membership of source(el) in Lambda_x and target(el) in Lambda~_x, x = base.

        The fiber coordinates are re-fitted by least squares from zero, so the
        certificate does not reuse the chi_inverse solution.
        """
        s, t = self.source_target(el)
        return (leaf_membership(self.pair.lam, el.base, s, self.tol),
                leaf_membership(self.pair.lam_tilde, el.base, t, self.tol))


@dataclass
class CycleReport:
    unit_defect: np.ndarray
    matching_defect: np.ndarray

    def residual(self) -> np.ndarray:
        return np.maximum(self.unit_defect, self.matching_defect)

    def passed(self, check_tol: float) -> bool:
        return bool(np.all(self.residual() <= check_tol))


def leaf_membership(field: LagrangianField, x, point, tol: NumericTolerances = DEFAULT_TOLERANCES) -> np.ndarray:
    """Least-squares distance from ``point`` to the leaf lambda(x, .), per query."""
    x = np.asarray(x, float)
    point = np.asarray(point, float)
    _, res = gauss_newton_residual(lambda v: field(x, v) - point,
                                   np.zeros(np.broadcast_shapes(x.shape[:-1], point.shape[:-1]) + (field.m,)),
                                   tol)
    return res
