"""Flow integration, dense orbits and the arc-length reparametrization."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.integrate import RK45
from scipy.interpolate import CubicHermiteSpline

from ._io import atomic_write, csv_text
from .charts import DIM, MetricSpec, as_points
from .errors import (
    BlowUp,
    InsufficientCoverage,
    MaxStepsExceeded,
    NullOrTimelikeField,
    NumericalFailure,
    ReferenceMismatch,
    ValidationError,
    VanishingField,
)
from .fields import GeneratingField

BLOWUP_LIMIT = 1e12
VANISHING_TOL = 1e-10
DEFAULT_STEPS = 1000


@dataclass(frozen=True)
class IntegratorConfig:
    """Integrator settings.

    ``step_size=None`` means ``|span| / 1000`` for the fixed-step method.
    """

    method: str = "rk4"
    step_size: float | None = None
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_steps: int = 10_000_000

    def __post_init__(self):
        if self.method not in ("rk4", "rk45"):
            raise ValidationError(f"unknown method {self.method!r}; use 'rk4' or 'rk45'", "method")
        if self.step_size is not None:
            if not (math.isfinite(self.step_size) and self.step_size > 0.0):
                raise ValidationError(f"step_size must be positive, got {self.step_size}", "step_size")
        for name in ("rel_tol", "abs_tol"):
            tol = getattr(self, name)
            if not (0.0 < tol < 1e-2):
                raise ValidationError(f"{name} must lie in (0, 1e-2), got {tol}", name)
        if isinstance(self.max_steps, bool) or int(self.max_steps) != self.max_steps or self.max_steps < 1:
            raise ValidationError(f"max_steps must be an integer >= 1, got {self.max_steps}", "max_steps")

    def steps_for(self, span: float) -> int:
        """Number of fixed steps covering ``|span|``."""
        span = abs(float(span))
        if span == 0.0:
            return 0
        if self.step_size is None:
            n = DEFAULT_STEPS
        else:
            n = max(1, math.ceil(span / self.step_size * (1.0 - 1e-12)))
        if n > self.max_steps:
            raise MaxStepsExceeded(f"{n} steps needed, max_steps is {self.max_steps}")
        return n


def _check_state(y: np.ndarray) -> None:
    if not np.all(np.isfinite(y)) or np.max(np.abs(y), initial=0.0) > BLOWUP_LIMIT:
        raise BlowUp(f"state magnitude exceeded {BLOWUP_LIMIT:g}")


def rk4_fixed(
    rhs: Callable[[np.ndarray], np.ndarray],
    y0: np.ndarray,
    span,
    n_steps: int,
    record: bool = False,
):
    """Classic RK4 for ``y' = rhs(y)`` over ``[0, span]`` in ``n_steps`` equal steps.

    ``span`` may be an array broadcasting against ``y0.shape[:-1]``, giving
    every trajectory in the batch its own interval with a shared step count.
    """
    y = np.array(y0, dtype=float)
    span = np.asarray(span, dtype=float)
    if n_steps == 0:
        return (np.zeros(1), y[None].copy()) if record else y
    h = (span / n_steps)[..., None]
    history = [y.copy()] if record else None
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(n_steps):
            k1 = rhs(y)
            k2 = rhs(y + 0.5 * h * k1)
            k3 = rhs(y + 0.5 * h * k2)
            k4 = rhs(y + h * k3)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            _check_state(y)
            if record:
                history.append(y.copy())
    if record:
        sigma = np.linspace(0.0, float(span), n_steps + 1)
        sigma[-1] = float(span)
        return sigma, np.stack(history)
    return y


def rk45_adaptive(rhs, y0: np.ndarray, span: float, cfg: IntegratorConfig, record: bool = False):
    """Dormand-Prince 5(4) stepping with per-step blow-up and step-count checks."""
    y0 = np.array(y0, dtype=float)
    shape = y0.shape
    if span == 0.0:
        return (np.zeros(1), y0[None].copy()) if record else y0

    def fun(_t, y):
        return rhs(y.reshape(shape)).ravel()

    solver = RK45(fun, 0.0, y0.ravel(), float(span), rtol=cfg.rel_tol, atol=cfg.abs_tol)
    ts, ys = [0.0], [y0.copy()]
    steps = 0
    with np.errstate(over="ignore", invalid="ignore"):
        while solver.status == "running":
            if steps >= cfg.max_steps:
                raise MaxStepsExceeded(f"adaptive integration exceeded {cfg.max_steps} steps")
            msg = solver.step()
            steps += 1
            if solver.status == "failed":
                raise NumericalFailure(f"adaptive step failed: {msg}")
            y = solver.y.reshape(shape)
            _check_state(y)
            if record:
                ts.append(solver.t)
                ys.append(y.copy())
    if record:
        sigma = np.array(ts)
        sigma[-1] = float(span)
        return sigma, np.stack(ys)
    return solver.y.reshape(shape)


def solve(rhs, y0, span: float, cfg: IntegratorConfig, record: bool = False):
    """Dispatch on ``cfg.method``; returns the end state or ``(sigma, states)``."""
    if cfg.method == "rk4":
        return rk4_fixed(rhs, y0, span, cfg.steps_for(span), record)
    return rk45_adaptive(rhs, y0, span, cfg, record)


# --------------------------------------------------------------------------
# Orbits


@dataclass(frozen=True, eq=False)
class FlowSolution:
    """Sampled orbit ``x(sigma)`` from ``reference`` with cubic Hermite dense output.

    ``parameter`` is ``"lambda"`` for the flow of B and ``"s"`` for the
    arc-length flow of the unit field, in which case ``lambda_of_s`` holds the
    recovered connectivity parameter at every node.
    """

    reference: np.ndarray
    parameter: str
    sigma: np.ndarray
    positions: np.ndarray
    tangents: np.ndarray
    lambda_of_s: np.ndarray | None = None
    field_name: str = ""

    @property
    def terminal(self) -> float:
        return float(self.sigma[-1])

    @property
    def endpoint(self) -> np.ndarray:
        return self.positions[-1]

    def covers(self, lam: float, rtol: float = 1e-12) -> bool:
        end = self.terminal
        slack = rtol * max(1.0, abs(lam))
        if lam == 0.0:
            return True
        return np.sign(end) == np.sign(lam) and abs(end) >= abs(lam) - slack

    @cached_property
    def _spline(self):
        order = np.argsort(self.sigma)
        return CubicHermiteSpline(self.sigma[order], self.positions[order], self.tangents[order], axis=0)

    def _eval(self, sigma, nu: int) -> np.ndarray:
        sigma = np.asarray(sigma, dtype=float)
        lo, hi = min(0.0, self.terminal), max(0.0, self.terminal)
        slack = 1e-12 * max(1.0, abs(self.terminal))
        if np.any(sigma < lo - slack) or np.any(sigma > hi + slack):
            raise InsufficientCoverage(f"parameter outside the sampled range [{lo}, {hi}]")
        if len(self.sigma) == 1:
            base = self.positions[0] if nu == 0 else self.tangents[0]
            return np.broadcast_to(base, sigma.shape + (DIM,)).copy()
        out = np.asarray(self._spline(np.clip(sigma, lo, hi), nu))
        # nodes are reproduced exactly
        idx = np.searchsorted(np.sort(self.sigma), sigma)
        order = np.argsort(self.sigma)
        idx = np.clip(idx, 0, len(self.sigma) - 1)
        hit = np.sort(self.sigma)[idx] == sigma
        if np.any(hit):
            source = self.positions if nu == 0 else self.tangents
            out[hit] = source[order[idx[hit]]]
        return out

    def position(self, sigma) -> np.ndarray:
        return self._eval(sigma, 0)

    def tangent(self, sigma) -> np.ndarray:
        return self._eval(sigma, 1)

    def csv(self) -> str:
        header = ["sigma", "x0", "x1", "x2", "x3"]
        cols = [self.sigma[:, None], self.positions]
        if self.lambda_of_s is not None:
            header.append("lambda_of_s")
            cols.append(self.lambda_of_s[:, None])
        return csv_text(header, np.hstack(cols))

    def write_csv(self, path) -> None:
        atomic_write(path, self.csv())


def _field_rhs(field: GeneratingField):
    def rhs(x):
        field.check_domain(x)
        return np.asarray(field.value(x), dtype=float)

    return rhs


def integrate_flow(field: GeneratingField, p, lam: float, cfg: IntegratorConfig | None = None) -> FlowSolution:
    """Orbit of ``field`` from ``p`` over connectivity parameter ``[0, lam]``."""
    p = as_points(p)
    if p.shape != (DIM,):
        raise ValidationError("integrate_flow takes a single reference point")
    lam = float(lam)
    if not math.isfinite(lam):
        raise ValidationError("lambda must be finite", "lambda")
    cfg = cfg or IntegratorConfig()
    rhs = _field_rhs(field)
    sigma, xs = solve(rhs, p, lam, cfg, record=True)
    xs[0] = p
    return FlowSolution(
        reference=p.copy(),
        parameter="lambda",
        sigma=sigma,
        positions=xs,
        tangents=rhs(xs),
        field_name=field.name,
    )


def flow_endpoints(field: GeneratingField, points, span, cfg: IntegratorConfig | None = None, n_steps: int | None = None):
    """Batched flow endpoints ``phi(span, x)`` for points ``(..., 4)`` (fixed-step RK4)."""
    points = as_points(points)
    span = np.asarray(span, dtype=float)
    cfg = cfg or IntegratorConfig()
    if n_steps is None:
        n_steps = cfg.steps_for(float(np.max(np.abs(span), initial=0.0)))
    return rk4_fixed(_field_rhs(field), points, span, n_steps)


def _arclength_rhs(field: GeneratingField, metric: MetricSpec):
    def rhs(y):
        x = y[..., :DIM]
        field.check_domain(x)
        B = np.asarray(field.value(x), dtype=float)
        b2 = np.einsum("...ab,...a,...b->...", metric.evaluate(x), B, B)
        if np.any(b2 <= 0.0) and np.all(np.isfinite(b2)):
            if np.all(np.abs(B) < VANISHING_TOL):
                raise VanishingField("generating field vanishes on the orbit")
            raise NullOrTimelikeField(f"B^2 = {np.min(b2):.6g} <= 0 on the orbit")
        mag = np.sqrt(b2)
        if np.any(mag < VANISHING_TOL):
            raise VanishingField(f"|B| = {np.min(mag):.3g} < {VANISHING_TOL:g} on the orbit")
        out = np.empty_like(y)
        out[..., :DIM] = B / mag[..., None]
        out[..., DIM] = 1.0 / mag
        return out

    return rhs


def reparametrize_arclength(
    field: GeneratingField,
    metric: MetricSpec,
    p,
    s_total: float,
    cfg: IntegratorConfig | None = None,
) -> FlowSolution:
    """Arc-length orbit ``psi(s, p)`` driven by ``b = B/|B|``, with ``lambda(s)`` alongside."""
    p = as_points(p)
    s_total = float(s_total)
    if not math.isfinite(s_total):
        raise ValidationError("s_total must be finite", "s_total")
    cfg = cfg or IntegratorConfig()
    rhs = _arclength_rhs(field, metric)
    y0 = np.concatenate([p, [0.0]])
    rhs(y0)  # reject null or vanishing fields at the reference point
    sigma, ys = solve(rhs, y0, s_total, cfg, record=True)
    ys[0] = y0
    return FlowSolution(
        reference=p.copy(),
        parameter="s",
        sigma=sigma,
        positions=ys[:, :DIM].copy(),
        tangents=rhs(ys)[:, :DIM],
        lambda_of_s=ys[:, DIM].copy(),
        field_name=field.name,
    )


def check_tangent_relation(phi: FlowSolution, psi: FlowSolution, metric: MetricSpec) -> float:
    """Max mismatch between the g-normalized tangent of ``phi`` and the tangent of ``psi``.

    Points are matched through ``lambda(s)``; nodes of ``psi`` whose
    ``lambda(s)`` falls outside the range of ``phi`` are skipped.
    """
    if phi.parameter != "lambda" or psi.parameter != "s" or psi.lambda_of_s is None:
        raise ValidationError("expected a lambda-parametrized and an arc-length solution")
    if not np.array_equal(phi.reference, psi.reference):
        raise ReferenceMismatch("phi and psi start from different reference points")
    lo, hi = min(0.0, phi.terminal), max(0.0, phi.terminal)
    lam = psi.lambda_of_s
    keep = (lam >= lo) & (lam <= hi)
    if not np.any(keep):
        raise InsufficientCoverage("no matched points between the two solutions")
    lam = lam[keep]
    x = phi.position(lam)
    t = phi.tangent(lam)
    norm = np.sqrt(np.einsum("...ab,...a,...b->...", metric(x), t, t))
    return float(np.max(np.abs(t / norm[:, None] - psi.tangents[keep])))
