"""Numerical checks of the transformation, group and representation laws of F,
its Eulerian dynamics, and two supporting identities (covariant Taylor
remainder, BCH combination)."""

from __future__ import annotations

import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ._io import json_text
from .charts import DIM, ChartTransform, ConnectionCoeffs, MetricSpec, as_points, resolve_connection
from .errors import (
    DegreeOutOfRange,
    NullOrTimelikeField,
    NumericalFailure,
    OutsideOverlap,
    ValidationError,
    VanishingField,
)
from .fields import GeneratingField, ShiftVector, squared_norm, squared_norm_gradient, unit_field
from .flow import IntegratorConfig, flow_endpoints
from .refgrad import (
    SeriesTruncation,
    gradient_kernel,
    refgrad_series,
    refgrad_variational,
    transport,
)

PUSHFORWARD_TOL = 1e-6
ORBIT_JUMP_TOL = 1e-4
COMMUTATOR_TOL = 1e-10


def max_abs(a) -> float:
    return float(np.max(np.abs(a), initial=0.0))


def _short(x: float) -> str:
    s = f"{x:.2g}"
    return re.sub(r"e([+-])0*(\d)", lambda m: "e" + ("-" if m.group(1) == "-" else "") + m.group(2), s)


@dataclass(frozen=True, eq=False)
class ResidualReport:
    """Outcome of one law check; ``passed`` is ``residual <= tol``."""

    law: str
    residual: float
    tol: float
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.residual <= self.tol)

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"LAW {self.law} residual={_short(self.residual)} tol={_short(self.tol)} {verdict}"

    def record(self) -> dict:
        return {
            "law": self.law,
            "residual": float(self.residual),
            "tol": float(self.tol),
            "pass": self.passed,
            "details": self.details,
        }

    def json(self) -> str:
        return json_text(self.record())


# --------------------------------------------------------------------------
# Coordinate covariance


def _in(pred, x) -> np.ndarray:
    return np.asarray(pred(np.asarray(x, dtype=float)), dtype=bool)


def check_covariance(
    field_I: GeneratingField,
    field_J: GeneratingField,
    t: ChartTransform,
    p_J,
    lam: float,
    cfg: IntegratorConfig | None = None,
    *,
    metric_I: MetricSpec | None = None,
    metric_J: MetricSpec | None = None,
    tol: float = 1e-5,
) -> ResidualReport:
    """Compare ``F_I`` with ``Lambda F_J Lambdabar`` (both factors at ``x_J(p)``).

    Connections come from the supplied metrics (flat when a metric is
    omitted).  Raises OutsideOverlap when either orbit leaves the overlap.
    """
    p_J = as_points(p_J)
    if not np.all(_in(t.overlap, p_J)):
        raise OutsideOverlap(f"reference point outside the overlap of {t.name!r}")
    conn_I = ConnectionCoeffs.levi_civita(metric_I) if metric_I is not None else None
    conn_J = ConnectionCoeffs.levi_civita(metric_J) if metric_J is not None else None

    F_J, sol_J = refgrad_variational(field_J, conn_J, p_J, lam, cfg, full_output=True)
    if not np.all(_in(t.overlap, sol_J.positions)):
        raise OutsideOverlap(f"chart-{t.source} orbit leaves the overlap of {t.name!r}")

    nodes = sol_J.positions[:: max(1, len(sol_J.positions) // 8)]
    Lam = t.jac(nodes)
    pushed = np.einsum("...ma,...a->...m", Lam, field_J(nodes))
    direct = field_I(t.forward(nodes))
    mismatch = max_abs(pushed - direct) / max(1.0, max_abs(direct))
    if mismatch > PUSHFORWARD_TOL:
        raise ValidationError(f"fields differ by {mismatch:.3g} after pushforward; not the same abstract field")

    x_I = np.asarray(t.forward(p_J), dtype=float)
    F_I, sol_I = refgrad_variational(field_I, conn_I, x_I, lam, cfg, full_output=True)
    if not np.all(_in(t.target_domain, sol_I.positions)):
        raise OutsideOverlap(f"chart-{t.target} orbit leaves the domain of {t.name!r}")
    jump = max_abs(t.forward(sol_J.positions) - sol_I.position(sol_J.sigma))
    if jump > ORBIT_JUMP_TOL:
        raise OutsideOverlap(f"orbits disagree by {jump:.3g} across the chart map; the orbit crosses a chart boundary")

    predicted = t.jac(p_J) @ F_J.matrix @ t.inv_jac(p_J)
    residual = max_abs(F_I.matrix - predicted)
    return ResidualReport(
        "lemma1",
        residual,
        tol,
        {"transform": t.name, "lambda": float(lam), "pushforward_mismatch": mismatch, "orbit_mismatch": jump},
    )


# --------------------------------------------------------------------------
# Group property


def check_group_property(
    field: GeneratingField,
    conn: ConnectionCoeffs | None,
    p,
    lam1: float,
    lam2: float,
    cfg: IntegratorConfig | None = None,
    *,
    tol: float = 1e-7,
) -> ResidualReport:
    """``|F(lam1 + lam2, p) - F(lam2, q) F(lam1, p)|`` with ``q = phi(lam1, p)``."""
    F1, sol = refgrad_variational(field, conn, p, lam1, cfg, full_output=True)
    F2 = refgrad_variational(field, conn, sol.endpoint, lam2, cfg)
    F12 = refgrad_variational(field, conn, p, lam1 + lam2, cfg)
    residual = max_abs(F12.matrix - F2.matrix @ F1.matrix)
    return ResidualReport("lemma2", residual, tol, {"lambda1": float(lam1), "lambda2": float(lam2)})


# --------------------------------------------------------------------------
# Representation relation between F[B] and F[b]


def _commutator(a, b):
    return a @ b - b @ a


def check_representation_relation(
    field: GeneratingField,
    metric: MetricSpec,
    conn: ConnectionCoeffs | None,
    p,
    lam: float | None = None,
    s_total: float | None = None,
    cfg: IntegratorConfig | None = None,
    trunc: SeriesTruncation | None = None,
    *,
    tol: float = 1e-5,
) -> ResidualReport:
    """Relate the gradients of the flow of B and of the arc-length flow of b.

    With ``d = grad(B^2) / (2 B^2)``, F[B] is recomputed along the arc-length
    orbit with kernel ``grad b + b d`` and F[b] along the lambda orbit with
    kernel ``grad B - B d``.  The commutator norms of the integrated kernel
    parts are reported; when both vanish the factored products are checked
    too.  At least one of ``lam`` and ``s_total`` must be given.
    """
    p = as_points(p)
    if lam is None and s_total is None:
        raise ValidationError("give lambda, s_total or both", "lambda")
    unit = unit_field(field, metric)
    kB = gradient_kernel(field, conn)
    kb = gradient_kernel(unit, conn)

    def mag_and_d(x):
        b2 = squared_norm(field, metric, x)
        if np.any(b2 <= 0.0):
            if max_abs(field.value(x)) < 1e-10:
                raise VanishingField("generating field vanishes on the orbit")
            raise NullOrTimelikeField(f"B^2 = {np.min(b2):.6g} <= 0 on the orbit")
        mag = np.sqrt(b2)
        if np.any(mag < 1e-10):
            raise VanishingField(f"|B| = {np.min(mag):.3g} on the orbit")
        return mag, squared_norm_gradient(field, metric, x) / (2.0 * b2[..., None])

    def phi_system(x):
        B, gB = kB(x)
        mag, d = mag_and_d(x)
        Bd = np.einsum("...m,...n->...mn", B, d)
        return B, [gB, gB - Bd, -Bd], [mag[..., None], gB, Bd]

    def psi_system(x):
        b, gb = kb(x)
        mag, d = mag_and_d(x)
        bd = np.einsum("...m,...n->...mn", b, d)
        return b, [gb, gb + bd, bd], [1.0 / mag[..., None], gb, bd]

    if lam is None:
        psi = transport(psi_system, p, s_total, cfg)
        lam = float(psi.integrals[0][0])
        phi = transport(phi_system, p, lam, cfg)
    else:
        lam = float(lam)
        phi = transport(phi_system, p, lam, cfg)
        s_phi = float(phi.integrals[0][0])
        if s_total is None:
            s_total = s_phi
        elif abs(s_total - s_phi) > 1e-6 * max(1.0, abs(s_phi)):
            raise ValidationError(f"s_total={s_total} is inconsistent with lambda={lam} (arc length {s_phi})", "s_total")
        psi = transport(psi_system, p, s_total, cfg)
    s_total = float(s_total)

    FB, Fb_alt, P_phi = phi.gradients
    Fb, FB_alt, P_psi = psi.gradients
    residual_1 = max_abs(FB - FB_alt)
    residual_2 = max_abs(Fb - Fb_alt)
    comm_1 = max_abs(_commutator(psi.integrals[1], psi.integrals[2]))
    comm_2 = max_abs(_commutator(phi.integrals[1], -phi.integrals[2]))
    details = {
        "lambda": lam,
        "s_total": s_total,
        "lambda_of_s": float(psi.integrals[0][0]),
        "residual_1": residual_1,
        "residual_2": residual_2,
        "commutator_1": comm_1,
        "commutator_2": comm_2,
        "factored_checked": False,
    }
    residual = max(residual_1, residual_2)
    if comm_1 <= COMMUTATOR_TOL and comm_2 <= COMMUTATOR_TOL:
        factored_1 = max_abs(FB - Fb @ P_psi)
        factored_2 = max_abs(Fb - FB @ P_phi)
        details.update(factored_checked=True, factored_1=factored_1, factored_2=factored_2)
        residual = max(residual, factored_1, factored_2)
    if trunc is not None:
        F_var, sol = refgrad_variational(field, conn, p, lam, cfg, full_output=True)
        S = refgrad_series(field, conn, sol, trunc)
        details["series_discrepancy"] = max_abs(S.matrix - F_var.matrix)
        details["series_bound"] = S.error_bound
    return ResidualReport("lemma3", residual, tol, details)


# --------------------------------------------------------------------------
# Eulerian dynamics


@dataclass(frozen=True)
class GridSpec:
    """Tensor-product sampling grid with a finite-difference step per axis.

    Axes with a single point are held at ``lower``; every other axis needs at
    least three points.
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    counts: tuple[int, ...]
    fd_steps: tuple[float, ...]

    def __post_init__(self):
        for name in ("lower", "upper", "counts", "fd_steps"):
            value = tuple(getattr(self, name))
            if len(value) != DIM:
                raise ValidationError(f"needs {DIM} entries", f"grid.{name}")
            object.__setattr__(self, name, value)
        if not all(math.isfinite(v) for v in self.lower + self.upper):
            raise ValidationError("bounds must be finite", "grid")
        for a, (lo, hi, n) in enumerate(zip(self.lower, self.upper, self.counts)):
            if int(n) != n or n < 1 or n == 2:
                raise ValidationError(f"axis {a}: count must be 1 or >= 3, got {n}", "grid.counts")
            if n > 1 and not hi > lo:
                raise ValidationError(f"axis {a}: upper must exceed lower", "grid.upper")
        if not all(math.isfinite(h) and h > 0.0 for h in self.fd_steps):
            raise ValidationError("finite-difference steps must be positive", "grid.fd_steps")

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, int(n)) if n > 1 else np.array([lo]) for lo, hi, n in zip(self.lower, self.upper, self.counts)]

    def nodes(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, DIM)

    @property
    def centre(self) -> np.ndarray:
        return np.array([0.5 * (lo + hi) if n > 1 else lo for lo, hi, n in zip(self.lower, self.upper, self.counts)])

    def halved(self) -> "GridSpec":
        return GridSpec(self.lower, self.upper, self.counts, tuple(h / 2.0 for h in self.fd_steps))


def _chunked(fn, arrays, threads: int):
    """Apply ``fn`` to contiguous chunks and concatenate in the original order."""
    n = len(arrays[0])
    threads = max(1, min(int(threads), n))
    if threads == 1:
        return fn(*arrays)
    bounds = np.linspace(0, n, threads + 1).astype(int)
    pieces = [tuple(a[lo:hi] for a in arrays) for lo, hi in zip(bounds[:-1], bounds[1:])]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(lambda args: fn(*args), pieces))
    if isinstance(results[0], tuple):
        return tuple(np.concatenate(parts) for parts in zip(*results))
    return np.concatenate(results)


def _section_times(field, points, tau0, z0, normal, n_steps, max_iter=40):
    """Newton solve of ``normal . (phi(-tau, y) - z0) = 0`` per point."""
    tau = np.array(tau0, dtype=float)
    active = np.ones(len(points), dtype=bool)
    for _ in range(max_iter):
        if not np.any(active):
            return tau
        y, t = points[active], tau[active]
        x_end = flow_endpoints(field, y, -t, n_steps=n_steps)
        g = (x_end - z0) @ normal
        dg = -(np.asarray(field.value(x_end), dtype=float) @ normal)
        if np.any(np.abs(dg) < 1e-14):
            raise NumericalFailure("orbit is tangent to the section; choose another lambda or grid")
        step = -g / dg
        t_new = t + step
        tau[active] = t_new
        done = np.abs(step) <= 1e-12 * np.maximum(1.0, np.abs(t_new))
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    if np.any(active):
        raise NumericalFailure("section-time Newton iteration did not converge")
    return tau


def eulerian_residual(
    field: GeneratingField,
    conn: ConnectionCoeffs | None,
    grid: GridSpec,
    lam: float,
    cfg: IntegratorConfig | None = None,
    *,
    transport_kind: str = "intrinsic",
    tol: float | None = None,
    threads: int = 1,
) -> ResidualReport:
    """Plug the Lagrangian F into the Eulerian equation on a grid.

    The Eulerian field is built in flow-box form: a section through
    ``phi(-lam, centre)`` transverse to B fixes, for every evaluation point
    y, the parameter tau(y) at which the orbit through y crossed it, and
    F(y) is the gradient accumulated from the section to y.  The residual is
    ``max |B^a d_a F - (dB) F - T(F, B)|`` at the grid nodes, with partials
    in y taken by central differences.
    """
    cfg = cfg or IntegratorConfig(step_size=1e-2)
    if cfg.method != "rk4":
        raise ValidationError("eulerian_residual needs the fixed-step method", "method")
    lam = float(lam)
    conn = resolve_connection(conn)
    nodes = grid.nodes()
    n_nodes = len(nodes)
    h = np.asarray(grid.fd_steps)
    offsets = [np.zeros(DIM)]
    for a in range(DIM):
        e = np.zeros(DIM)
        e[a] = h[a]
        offsets += [e, -e]
    points = (nodes[:, None, :] + np.array(offsets)[None]).reshape(-1, DIM)

    z0 = flow_endpoints(field, grid.centre, -lam, cfg)
    B0 = np.asarray(field.value(z0), dtype=float)
    if max_abs(B0) < 1e-12:
        raise VanishingField("field vanishes where the section is anchored")
    normal = B0 / np.linalg.norm(B0)

    n_steps = cfg.steps_for(abs(lam)) if lam != 0.0 else 1
    tau0 = np.full(len(points), lam)
    for _ in range(4):
        tau = _chunked(lambda y, t: _section_times(field, y, t, z0, normal, n_steps), (points, tau0), threads)
        needed = cfg.steps_for(float(np.max(np.abs(tau))))
        if needed <= n_steps:
            break
        n_steps, tau0 = needed, tau
    kernel = gradient_kernel(field, conn, transport_kind)

    def system(x):
        B, K = kernel(x)
        return B, [K], []

    def backward_gradient(y, t):
        res = transport(system, y, -t, cfg, n_steps=n_steps)
        return np.linalg.inv(res.gradients[0])

    F = _chunked(backward_gradient, (points, tau), threads).reshape(n_nodes, 2 * DIM + 1, DIM, DIM)
    F0 = F[:, 0]
    B = np.asarray(field.value(nodes), dtype=float)
    dB = field.partials(nodes)
    directional = np.zeros_like(F0)
    for a in range(DIM):
        directional += B[:, a, None, None] * (F[:, 1 + 2 * a] - F[:, 2 + 2 * a]) / (2.0 * h[a])
    R = directional - dB @ F0
    if conn.is_flat:
        source = np.zeros_like(R)
    else:
        T = conn.torsion(nodes)
        source = np.einsum("...mar,...an,...r->...mn", T, F0, B)
    residual = max_abs(R - source)
    torsion_norm = 0.0 if conn.is_flat else max_abs(conn.torsion(nodes))
    return ResidualReport(
        "eulerian",
        residual,
        math.inf if tol is None else tol,
        {
            "lambda": lam,
            "nodes": n_nodes,
            "fd_steps": list(grid.fd_steps),
            "torsion_max": torsion_norm,
            "integrator_steps": n_steps,
            "tau_range": [float(np.min(tau)), float(np.max(tau))],
        },
    )


# --------------------------------------------------------------------------
# Covariant Taylor remainder


def covariant_taylor_remainder(field: GeneratingField, conn: ConnectionCoeffs | None, y, w: ShiftVector) -> np.ndarray:
    """``R = xi(y + w) - xi(y) - nabla_w xi(y)`` in chart components."""
    y = as_points(y)
    wv = np.asarray(w, dtype=float)
    J = gradient_kernel(field, conn)(y)[1]
    return field(y + wv) - field(y) - J @ wv


def taylor_integral_remainder(
    field: GeneratingField,
    conn: ConnectionCoeffs | None,
    y,
    w: ShiftVector,
    n_nodes: int = 16,
) -> np.ndarray:
    """Gauss-Legendre quadrature of the integral remainder over ``s in [0, 1]``.

    Integrand: ``w^nu [(d_nu xi(y + s w) - d_nu xi(y)) + Gamma(y)^mu_{nu rho} (xi(y + s w) - xi(y))^rho]``.
    It equals ``covariant_taylor_remainder`` when the connection vanishes.
    """
    y = as_points(y)
    wv = np.asarray(w, dtype=float)
    s, weights = np.polynomial.legendre.leggauss(n_nodes)
    s = 0.5 * (s + 1.0)
    weights = 0.5 * weights
    pts = y + s[:, None] * wv
    gam = resolve_connection(conn)(y)
    d_xi = field.partials(pts) - field.partials(y)
    dv = field(pts) - field(y)
    integrand = d_xi @ wv + np.einsum("mnr,n,kr->km", gam, wv, dv)
    return weights @ integrand


# --------------------------------------------------------------------------
# BCH combination

BCH_COEFFICIENTS = {
    "a1": Fraction("1/12"),
    "a2": Fraction("1/24"),
    "a3": Fraction("1/720"),
}


def _scaled(term, coeff: Fraction):
    # numerator/denominator kept separate so object arrays of mpf stay exact
    return term * coeff.numerator / coeff.denominator


def bch_combine(X, Y, degree: int = 5, *, quintic: str = "complete"):
    """Truncated ``Z`` with ``exp(X) exp(Y) = exp(Z)`` through ``degree`` (1..5).

    Degree 5 uses the complete quintic term by default;
    ``quintic="printed"`` keeps only ``a3 ([X,[X,[X,[X,Y]]]] - [[[[X,Y],Y],Y],Y])``.
    Works on float arrays and on object arrays (e.g. mpmath numbers).
    """
    if isinstance(degree, bool) or int(degree) != degree or not 1 <= degree <= 5:
        raise DegreeOutOfRange(f"degree must be an integer in 1..5, got {degree}")
    if quintic not in ("complete", "printed"):
        raise ValidationError(f"unknown quintic variant {quintic!r}", "quintic")
    X = np.asarray(X)
    Y = np.asarray(Y)
    c = _commutator
    Z = X + Y
    if degree == 1:
        return Z
    XY = c(X, Y)
    Z = Z + XY / 2
    if degree == 2:
        return Z
    XXY = c(X, XY)
    XYY = c(XY, Y)
    Z = Z + _scaled(XXY + XYY, BCH_COEFFICIENTS["a1"])
    if degree == 3:
        return Z
    Z = Z + _scaled(c(XXY, Y), BCH_COEFFICIENTS["a2"])
    if degree == 4:
        return Z
    XXXXY = c(X, c(X, XXY))
    XYYYY = c(c(XYY, Y), Y)
    if quintic == "printed":
        return Z + _scaled(XXXXY - XYYYY, BCH_COEFFICIENTS["a3"])
    YX = -XY
    quint = -_scaled(XXXXY + XYYYY, BCH_COEFFICIENTS["a3"])
    quint = quint + (c(X, c(Y, c(Y, YX))) + c(Y, c(X, XXY))) * 1 / 360
    quint = quint + (c(Y, c(X, c(Y, XY))) + c(X, c(Y, c(X, YX)))) * 1 / 120
    return Z + quint
