"""Verification suites: each turns a field pair and a seed into a SuiteReport.

Sample point layout, relative to the chart centre c and box radius R:
base points in c +- R/2, fiber and covector samples in +- R/10, near-diagonal
offsets in +- R/10.  Every stream is named, so sample i of a check depends
only on the seed and i.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .calabi import (CoefficientMatrix, GammaSolver, PotentialGauge, calabi_general, check_gamma_idempotence,
                     check_generating_function, check_one_one, critical_point_report, cyclic_calabi,
                     gamma, membership_residual, omega_mixed, potential, t_function)
from .errors import OutOfNeighborhood
from .fields import (IMMERSION_MIN_RATIO, TRANSVERSALITY_MAX_COND, FieldPair, check_lagrangian,
                     check_transversality, immersion_ratio)
from .groupoid import CotangentElement, GroupoidContext
from .numerics import NumericTolerances, cross_hessian, max_abs
from .oneform import HorizontalOneForm, check_dv_component, check_phi_v_identity, structure_residual
from .report import CheckResult, SuiteReport
from .sampling import centered_samples

SUITES = ("fields", "oneform", "groupoid", "calabi", "generating", "critical")

ZERO_SECTION_PHI_TOL = 1e-13
QUAD_AGREEMENT_TOL = 1e-11
ROUNDTRIP_TOL = 1e-9
GAUGE_TOL = 1e-8
DIAGONAL_TOL = 1e-10
CRITICAL_VALUE_TOL = 1e-8
PROJECTOR_TOL = 1e-8
HESSIAN_RATIO_MAX = 1e6


@dataclass
class SuiteContext:
    pair: FieldPair
    tol: NumericTolerances
    samples: int
    seed: int
    n_cycle_sizes: tuple[int, ...] = (2, 3, 4, 5)

    def __post_init__(self):
        self.gs = GammaSolver(self.pair, self.tol)
        self.groupoid = GroupoidContext(self.pair, self.tol)
        self.gauge = PotentialGauge(self.pair.chart.center, self.tol.quad_order)

    @property
    def m(self) -> int:
        return self.pair.m

    @property
    def radius(self) -> float:
        return float(np.min(self.pair.chart.upper - self.pair.chart.center))

    def base(self, stream: str, n: int | None = None) -> np.ndarray:
        return centered_samples(self.seed, stream, n or self.samples, 2 * self.m, 0.5 * self.radius,
                                self.pair.chart.center)

    def small(self, stream: str, dim: int, n: int | None = None, shape: tuple = ()) -> np.ndarray:
        n = n or self.samples
        count = n * int(np.prod(shape, dtype=int))
        pts = centered_samples(self.seed, stream, count, dim, 0.1 * self.radius)
        return pts.reshape((n,) + tuple(shape) + (dim,))

    def fibers(self, stream: str, n: int | None = None) -> np.ndarray:
        r = 0.1 * min(self.radius, self.pair.lam.fiber_radius, self.pair.lam_tilde.fiber_radius)
        return centered_samples(self.seed, stream, n or self.samples, self.m, r)

    def alternate_gauge(self) -> PotentialGauge:
        shift = self.radius * np.resize([0.3, -0.2], 2 * self.m)
        return PotentialGauge(self.pair.chart.center + shift, self.tol.quad_order)


# -- fields --------------------------------------------------------------

def fields_suite(ctx: SuiteContext) -> list[CheckResult]:
    pair, tol = ctx.pair, ctx.tol
    chart = pair.chart
    x = ctx.base("fields/base")
    v = ctx.fibers("fields/fiber")
    checks = [
        CheckResult.of("omega_antisymmetry", chart.antisymmetry_residual(x), tol.check_tol),
        CheckResult.of("omega_closedness", chart.closedness_residual(x, tol.fd_step), tol.check_tol),
        check_lagrangian(pair.lam, (x, v), tol, "lagrangian_lambda"),
        check_lagrangian(pair.lam_tilde, (x, v), tol, "lagrangian_lambda_tilde"),
    ]
    zero = np.zeros_like(v)
    exact = np.maximum(max_abs(pair.lam(x, zero) - x), max_abs(pair.lam_tilde(x, zero) - x))
    checks.append(CheckResult.of("zero_section_identity", exact, 0.0))
    inv_ratio = np.maximum(1.0 / immersion_ratio(pair.lam, x, v, tol.fd_step),
                           1.0 / immersion_ratio(pair.lam_tilde, x, v, tol.fd_step))
    checks.append(CheckResult.of("immersion_inverse_ratio", inv_ratio, 1.0 / IMMERSION_MIN_RATIO))
    checks.append(CheckResult.of("transversality_condition",
                                 np.atleast_1d(check_transversality(pair, x, tol.fd_step)),
                                 TRANSVERSALITY_MAX_COND))
    return checks


# -- oneform -------------------------------------------------------------

def oneform_suite(ctx: SuiteContext) -> list[CheckResult]:
    tol = ctx.tol
    x = ctx.base("oneform/base")
    v = ctx.fibers("oneform/fiber")
    zero = np.zeros_like(v)
    checks = []
    for label, field in (("phi", ctx.pair.lam), ("phi_tilde", ctx.pair.lam_tilde)):
        form = HorizontalOneForm(field, tol.quad_order, tol.fd_step)
        fine = HorizontalOneForm(field, max(24, tol.quad_order + 8), tol.fd_step)
        checks += [
            CheckResult.of(f"{label}_dv_component", check_dv_component(form, x, v), tol.check_tol),
            CheckResult.of(f"{label}_zero_section", max_abs(form(x, zero)), ZERO_SECTION_PHI_TOL),
            CheckResult.of(f"{label}_v_derivative", check_phi_v_identity(form, x), tol.check_tol),
            CheckResult.of(f"{label}_structure_equation", structure_residual(form, x, v), tol.check_tol),
            CheckResult.of(f"{label}_quadrature_agreement", max_abs(form(x, v) - fine(x, v)),
                           QUAD_AGREEMENT_TOL),
        ]
    return checks


# -- groupoid ------------------------------------------------------------

def groupoid_suite(ctx: SuiteContext) -> list[CheckResult]:
    G, tol = ctx.groupoid, ctx.tol
    m = ctx.m
    x = ctx.base("groupoid/base")
    v = ctx.fibers("groupoid/v")
    w = ctx.fibers("groupoid/w")
    d1 = ctx.small("groupoid/step1", 2 * m)
    d2 = ctx.small("groupoid/step2", 2 * m)
    xi = ctx.small("groupoid/covector", 2 * m)

    el = G.chi(x, v, w)
    v2, w2 = G.chi_inverse(el)
    chi_rt = np.maximum(max_abs(v2 - v), max_abs(w2 - w))

    a, b = x, x + d1
    e = G.f_inverse(a, b)
    s_e, t_e = G.source_target(e)
    f_rt = np.maximum(max_abs(t_e - a), max_abs(s_e - b))

    u = G.unit(x)
    s_u, t_u = G.source_target(u)
    unit_st = np.maximum(max_abs(s_u - x), max_abs(t_u - x))

    alpha = CotangentElement(x, xi)
    s_a, t_a = G.source_target(alpha)
    beta = G.f_inverse(s_a, s_a + d1)
    third = G.f_inverse(s_a + d1, s_a + d1 + d2)
    assoc = G.compose(G.compose(alpha, beta), third).distance(G.compose(alpha, G.compose(beta, third)))
    left = G.compose(G.unit(t_a), alpha).distance(alpha)
    right = G.compose(alpha, G.unit(s_a)).distance(alpha)
    inv = G.inverse(alpha)
    inv_left = G.compose(inv, alpha).distance(G.unit(s_a))
    inv_right = G.compose(alpha, inv).distance(G.unit(t_a))
    src_in, tgt_in = G.inclusion_residuals(alpha)

    return [
        CheckResult.of("chi_roundtrip", chi_rt, ROUNDTRIP_TOL),
        CheckResult.of("f_inverse_roundtrip", f_rt, ROUNDTRIP_TOL),
        CheckResult.of("unit_source_target", unit_st, tol.check_tol),
        CheckResult.of("associativity", assoc, tol.check_tol),
        CheckResult.of("left_identity", left, tol.check_tol),
        CheckResult.of("right_identity", right, tol.check_tol),
        CheckResult.of("left_inverse", inv_left, tol.check_tol),
        CheckResult.of("right_inverse", inv_right, tol.check_tol),
        CheckResult.of("symplectomorphism", G.symplectic_residual(alpha), tol.check_tol),
        CheckResult.of("inverse_antisymplectic", G.inverse_antisymplectic_residual(alpha), tol.check_tol),
        CheckResult.of("source_inclusion", src_in, tol.check_tol),
        CheckResult.of("target_inclusion", tgt_in, tol.check_tol),
    ]


# -- calabi --------------------------------------------------------------

_GENERAL_COEFFICIENTS = CoefficientMatrix([[1.0, -2.0, 1.0], [-1.0, 1.0, 0.0], [0.0, 1.0, -1.0]])


def calabi_suite(ctx: SuiteContext) -> list[CheckResult]:
    gs, tol, gauge = ctx.gs, ctx.tol, ctx.gauge
    other = ctx.alternate_gauge()
    m = ctx.m
    x = ctx.base("calabi/base")
    y = x + ctx.small("calabi/offset", 2 * m)
    u = x + ctx.small("calabi/middle", 2 * m)

    diag = max_abs(gamma(gs, x, x) - x)
    idem = np.maximum(*check_gamma_idempotence(gs, x, y))
    Om = omega_mixed(gs, x, y)
    Od = omega_mixed(gs, x, x)
    recon = np.max(np.abs(Od - np.swapaxes(Od, -1, -2) - gs.pair.chart.omega(x)), axis=(-1, -2))
    dd_phi = cross_hessian(lambda a, b: potential(gs, gauge, a, b), x, y, tol.hess_step)
    pot = np.max(np.abs(dd_phi - Om), axis=(-1, -2))
    x0 = np.broadcast_to(gauge.base, x.shape)
    norm = np.maximum(np.abs(potential(gs, gauge, x, x0)), np.abs(potential(gs, gauge, x0, y)))

    checks = [
        CheckResult.of("gamma_diagonal", diag, tol.newton_tol),
        CheckResult.of("gamma_membership", membership_residual(gs, x, y), tol.check_tol),
        CheckResult.of("gamma_idempotence", idem, tol.check_tol),
        CheckResult.of("one_one_pure_blocks", check_one_one(gs, x, y), tol.check_tol),
        CheckResult.of("diagonal_reconstruction", recon, tol.check_tol),
        CheckResult.of("potential_mixed_derivative", pot, tol.check_tol),
        CheckResult.of("potential_normalization", norm, DIAGONAL_TOL),
    ]

    t_gauge = np.abs(t_function(gs, gauge, x, u, y) - t_function(gs, other, x, u, y))
    t_diag = np.maximum(np.abs(t_function(gs, gauge, x, x, y)), np.abs(t_function(gs, gauge, x, u, u)))
    checks += [CheckResult.of("t_gauge_invariance", t_gauge, GAUGE_TOL),
               CheckResult.of("t_degenerate_vanishing", t_diag, DIAGONAL_TOL)]

    for n in ctx.n_cycle_sizes:
        xs = x[:, None, :] + ctx.small(f"calabi/cycle{n}", 2 * m, shape=(n,))
        same = np.broadcast_to(x[:, None, :], xs.shape)
        checks += [
            CheckResult.of(f"cyclic_gauge_invariance_n{n}",
                           np.abs(cyclic_calabi(gs, gauge, xs) - cyclic_calabi(gs, other, xs)), GAUGE_TOL),
            CheckResult.of(f"cyclic_diagonal_vanishing_n{n}", np.abs(cyclic_calabi(gs, gauge, same)),
                           DIAGONAL_TOL),
        ]

    C = _GENERAL_COEFFICIENTS
    k, l = C.entries.shape
    xs = x[:, None, :] + ctx.small("calabi/general_x", 2 * m, shape=(k,))
    ys = x[:, None, :] + ctx.small("calabi/general_y", 2 * m, shape=(l,))
    same_x = np.broadcast_to(x[:, None, :], xs.shape)
    checks += [
        CheckResult.of("general_gauge_invariance",
                       np.abs(calabi_general(gs, gauge, C, xs, ys) - calabi_general(gs, other, C, xs, ys)),
                       GAUGE_TOL),
        CheckResult.of("general_diagonal_vanishing", np.abs(calabi_general(gs, gauge, C, same_x, ys)),
                       DIAGONAL_TOL),
    ]
    return checks


# -- generating ----------------------------------------------------------

def generating_suite(ctx: SuiteContext) -> list[CheckResult]:
    m = ctx.m
    centre = ctx.base("generating/centre")
    checks = []
    for n in ctx.n_cycle_sizes:
        xs = centre[:, None, :] + ctx.small(f"generating/cycle{n}", 2 * m, shape=(n,))
        report = check_generating_function(ctx.gs, ctx.gauge, ctx.groupoid, xs)
        checks += [CheckResult(f"{c.name}_n{n}", c.max_residual, c.tolerance, c.sample_count)
                   for c in report.checks(ctx.tol.check_tol)]
    return checks


# -- critical ------------------------------------------------------------

def critical_suite(ctx: SuiteContext) -> list[CheckResult]:
    tol = ctx.tol
    m = ctx.m
    x = ctx.base("critical/base")
    y_near = x + ctx.small("critical/offset", 2 * m)
    rows: dict[str, list[float]] = {}

    def add(name, value):
        rows.setdefault(name, []).append(value)

    for y_all, label in ((x, "diagonal"), (y_near, "near")):
        for i in range(ctx.samples):
            r = critical_point_report(ctx.gs, ctx.gauge, x[i], y_all[i])
            add(f"critical_value_{label}", r.t_scaled)
            add(f"critical_gradient_{label}", r.grad_norm)
            ratio = r.hessian_max_abs_eig / r.hessian_min_abs_eig if r.hessian_min_abs_eig > 0 else np.inf
            add(f"hessian_condition_{label}", ratio)
            for key, val in r.identity_residuals.items():
                add(f"{key}_{label}", val)
            add(f"projector_rank_{label}", float(max(abs(r.ranks[0] - m), abs(r.ranks[1] - m))))

    checks = []
    for name, vals in rows.items():
        if name.startswith("critical_value"):
            bound = CRITICAL_VALUE_TOL
        elif name.startswith("hessian_condition"):
            bound = HESSIAN_RATIO_MAX
        elif name.startswith("projector_rank"):
            bound = 0.0
        elif name.startswith(("critical_gradient", "hessian_minus", "At_C_B")):
            bound = tol.check_tol
        else:
            bound = PROJECTOR_TOL
        checks.append(CheckResult.of(name, vals, bound))
    return checks


SUITE_FUNCTIONS: dict[str, Callable[[SuiteContext], list[CheckResult]]] = {
    "fields": fields_suite,
    "oneform": oneform_suite,
    "groupoid": groupoid_suite,
    "calabi": calabi_suite,
    "generating": generating_suite,
    "critical": critical_suite,
}


def run_suite(name: str, ctx: SuiteContext,
              func: Callable[[SuiteContext], list[CheckResult]] | None = None) -> SuiteReport:
    """Run one suite; an OutOfNeighborhood abort is recorded, not raised."""
    func = SUITE_FUNCTIONS[name] if func is None else func
    try:
        checks = func(ctx)
    except OutOfNeighborhood as exc:
        return SuiteReport(name, [], aborted=f"OutOfNeighborhood: {exc}")
    return SuiteReport(name, checks)
