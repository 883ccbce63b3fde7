"""Coordinate charts, metrics, connection coefficients and chart transforms.

Every evaluator in this package works on arrays whose last axis holds the
four chart components, so ``x`` may be a single point of shape ``(4,)`` or a
batch of shape ``(..., 4)``.  Tensor outputs append their own axes after the
batch axes, e.g. a metric returns ``(..., 4, 4)`` and Christoffel symbols
return ``(..., 4, 4, 4)`` indexed ``[rho, mu, nu]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NonFiniteInput, OutsideOverlap, SingularMetric

DIM = 4
METRIC_FD_STEP = 1e-5
DET_TOL = 1e-12


@dataclass(frozen=True)
class Coordinates:
    """A point's four chart components together with the chart they live in."""

    components: tuple[float, float, float, float]
    chart_id: str = "cartesian"

    def __post_init__(self):
        comps = tuple(float(c) for c in self.components)
        if len(comps) != DIM:
            raise NonFiniteInput(f"expected {DIM} components, got {len(comps)}")
        if not all(math.isfinite(c) for c in comps):
            raise NonFiniteInput(f"non-finite coordinate components {comps}")
        object.__setattr__(self, "components", comps)

    def __array__(self, dtype=None, copy=None):
        return np.array(self.components, dtype=dtype or float)

    def __iter__(self):
        return iter(self.components)


def as_points(x) -> np.ndarray:
    """Return ``x`` as a float array with last axis 4, rejecting NaN/inf."""
    arr = np.array(x, dtype=float)
    if arr.shape[-1:] != (DIM,):
        raise NonFiniteInput(f"points must have a trailing axis of length {DIM}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput("non-finite coordinate components")
    return arr


def central_step(x: np.ndarray, base: float) -> np.ndarray:
    """Per-component central-difference step ``base * max(1, |x^a|)``."""
    return base * np.maximum(1.0, np.abs(x))


def _shifted(x: np.ndarray, axis: int, delta: np.ndarray) -> np.ndarray:
    out = x.copy()
    out[..., axis] += delta
    return out


# --------------------------------------------------------------------------
# Metrics


@dataclass(frozen=True)
class MetricSpec:
    """Position-dependent metric ``g_{mu nu}(x)``.

    ``derivative`` returns the analytic partials indexed ``[..., sigma, mu, nu]``
    (derivative index first).  When it is absent, partials come from central
    differences with step ``1e-5 * max(1, |x^sigma|)``.
    """

    evaluate: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray] | None = None
    signature: str = "-+++"
    name: str = "metric"

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.evaluate(as_points(x)), dtype=float)

    def partials(self, x) -> np.ndarray:
        x = as_points(x)
        if self.derivative is not None:
            return np.asarray(self.derivative(x), dtype=float)
        h = central_step(x, METRIC_FD_STEP)
        out = np.empty(x.shape[:-1] + (DIM, DIM, DIM))
        for s in range(DIM):
            hs = h[..., s]
            gp = self.evaluate(_shifted(x, s, hs))
            gm = self.evaluate(_shifted(x, s, -hs))
            out[..., s, :, :] = (gp - gm) / (2.0 * hs[..., None, None])
        return out


def _check_nondegenerate(g: np.ndarray) -> None:
    det = np.linalg.det(g)
    if np.any(~np.isfinite(det)) or np.any(np.abs(det) <= DET_TOL):
        raise SingularMetric(f"metric determinant {np.min(np.abs(det)):.3e} is not above {DET_TOL}")


def christoffel_from_metric(metric: MetricSpec, x) -> np.ndarray:
    """Levi-Civita coefficients ``Gamma^rho_{mu nu}`` at ``x``, shape ``(..., 4, 4, 4)``."""
    x = as_points(x)
    g = metric(x)
    _check_nondegenerate(g)
    ginv = np.linalg.inv(g)
    dg = metric.partials(x)  # [..., s, a, b] = d_s g_ab
    # lowered[sigma, mu, nu] = d_nu g_{sigma mu} + d_mu g_{sigma nu} - d_sigma g_{mu nu}
    lowered = (
        np.einsum("...nsm->...smn", dg)
        + np.einsum("...msn->...smn", dg)
        - dg
    )
    return 0.5 * np.einsum("...rs,...smn->...rmn", ginv, lowered)


# --------------------------------------------------------------------------
# Connections


@dataclass(frozen=True)
class ConnectionCoeffs:
    """Connection coefficients ``Gamma^rho_{mu nu}(x)`` indexed ``[..., rho, mu, nu]``."""

    evaluate: Callable[[np.ndarray], np.ndarray]
    name: str = "connection"
    is_flat: bool = False

    def __call__(self, x) -> np.ndarray:
        x = as_points(x)
        if self.is_flat:
            return np.zeros(x.shape[:-1] + (DIM, DIM, DIM))
        return np.asarray(self.evaluate(x), dtype=float)

    def torsion(self, x) -> np.ndarray:
        """``T^mu_{rho alpha} = Gamma^mu_{rho alpha} - Gamma^mu_{alpha rho}``."""
        gam = self(x)
        return gam - np.swapaxes(gam, -1, -2)

    @classmethod
    def flat(cls) -> "ConnectionCoeffs":
        return cls(evaluate=lambda x: np.zeros(x.shape[:-1] + (DIM, DIM, DIM)), name="flat", is_flat=True)

    @classmethod
    def levi_civita(cls, metric: MetricSpec) -> "ConnectionCoeffs":
        return cls(evaluate=lambda x: christoffel_from_metric(metric, x), name=f"levi-civita({metric.name})")

    @classmethod
    def constant(cls, coeffs, name: str = "constant") -> "ConnectionCoeffs":
        coeffs = np.array(coeffs, dtype=float)
        if coeffs.shape != (DIM, DIM, DIM):
            raise ValueError(f"connection coefficients must have shape (4, 4, 4), got {coeffs.shape}")
        return cls(evaluate=lambda x: np.broadcast_to(coeffs, x.shape[:-1] + coeffs.shape).copy(), name=name)


def resolve_connection(conn: ConnectionCoeffs | None) -> ConnectionCoeffs:
    return ConnectionCoeffs.flat() if conn is None else conn


# --------------------------------------------------------------------------
# Built-in metrics


def _constant_metric(diag, name, signature) -> MetricSpec:
    g0 = np.diag(np.asarray(diag, dtype=float))
    return MetricSpec(
        evaluate=lambda x: np.broadcast_to(g0, x.shape[:-1] + (DIM, DIM)).copy(),
        derivative=lambda x: np.zeros(x.shape[:-1] + (DIM, DIM, DIM)),
        signature=signature,
        name=name,
    )


def minkowski() -> MetricSpec:
    return _constant_metric((-1.0, 1.0, 1.0, 1.0), "minkowski", "-+++")


def euclidean() -> MetricSpec:
    return _constant_metric((1.0, 1.0, 1.0, 1.0), "euclidean", "++++")


def cylindrical() -> MetricSpec:
    """Minkowski metric in (t, r, theta, z): diag(-1, 1, r^2, 1)."""

    def g(x):
        out = np.zeros(x.shape[:-1] + (DIM, DIM))
        out[..., 0, 0] = -1.0
        out[..., 1, 1] = 1.0
        out[..., 2, 2] = x[..., 1] ** 2
        out[..., 3, 3] = 1.0
        return out

    def dg(x):
        out = np.zeros(x.shape[:-1] + (DIM, DIM, DIM))
        out[..., 1, 2, 2] = 2.0 * x[..., 1]
        return out

    return MetricSpec(evaluate=g, derivative=dg, signature="-+++", name="cylindrical")


def spherical() -> MetricSpec:
    """Minkowski metric in (t, r, theta, phi): diag(-1, 1, r^2, r^2 sin^2 theta)."""

    def g(x):
        r, th = x[..., 1], x[..., 2]
        out = np.zeros(x.shape[:-1] + (DIM, DIM))
        out[..., 0, 0] = -1.0
        out[..., 1, 1] = 1.0
        out[..., 2, 2] = r**2
        out[..., 3, 3] = (r * np.sin(th)) ** 2
        return out

    def dg(x):
        r, th = x[..., 1], x[..., 2]
        out = np.zeros(x.shape[:-1] + (DIM, DIM, DIM))
        out[..., 1, 2, 2] = 2.0 * r
        out[..., 1, 3, 3] = 2.0 * r * np.sin(th) ** 2
        out[..., 2, 3, 3] = 2.0 * r**2 * np.sin(th) * np.cos(th)
        return out

    return MetricSpec(evaluate=g, derivative=dg, signature="-+++", name="spherical")


BUILTIN_METRICS: dict[str, Callable[[], MetricSpec]] = {
    "minkowski": minkowski,
    "euclidean": euclidean,
    "cylindrical": cylindrical,
    "spherical": spherical,
}


def builtin_metric(name: str) -> MetricSpec:
    try:
        return BUILTIN_METRICS[name]()
    except KeyError:
        raise KeyError(f"unknown metric {name!r}; known: {sorted(BUILTIN_METRICS)}") from None


# --------------------------------------------------------------------------
# Chart transforms


def _always(x: np.ndarray) -> np.ndarray:
    return np.ones(x.shape[:-1], dtype=bool)


@dataclass(frozen=True)
class ChartTransform:
    """Smooth map ``x_J -> x_I`` between two charts.

    ``jacobian(x_J)`` returns ``Lambda^mu_alpha = d x_I^mu / d x_J^alpha``.
    ``overlap(x_J)`` says whether ``x_J`` lies in the overlap of the charts;
    ``target_domain(x_I)`` optionally restricts the target chart further
    (e.g. the angular range of a polar chart).
    """

    forward: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    inverse_jacobian: Callable[[np.ndarray], np.ndarray] | None = None
    overlap: Callable[[np.ndarray], np.ndarray] = field(default=_always)
    backward: Callable[[np.ndarray], np.ndarray] | None = None
    target_domain: Callable[[np.ndarray], np.ndarray] = field(default=_always)
    source: str = "J"
    target: str = "I"
    name: str = "transform"

    def in_overlap(self, x_J) -> np.ndarray:
        x_J = as_points(x_J)
        return np.asarray(self.overlap(x_J), dtype=bool)

    def jac(self, x_J) -> np.ndarray:
        return np.asarray(self.jacobian(as_points(x_J)), dtype=float)

    def inv_jac(self, x_J) -> np.ndarray:
        x_J = as_points(x_J)
        if self.inverse_jacobian is not None:
            return np.asarray(self.inverse_jacobian(x_J), dtype=float)
        return np.linalg.inv(self.jac(x_J))

    def inverse(self) -> "ChartTransform":
        """The transform ``x_I -> x_J``; requires ``backward``."""
        if self.backward is None:
            raise ValueError(f"transform {self.name!r} has no backward map")
        fwd, bwd = self.forward, self.backward

        return ChartTransform(
            forward=bwd,
            jacobian=lambda x_I: self.inv_jac(bwd(x_I)),
            inverse_jacobian=lambda x_I: self.jac(bwd(x_I)),
            overlap=lambda x_I: np.asarray(self.target_domain(x_I), dtype=bool)
            & np.asarray(self.overlap(bwd(x_I)), dtype=bool),
            backward=fwd,
            target_domain=lambda x_J: np.asarray(self.overlap(x_J), dtype=bool),
            source=self.target,
            target=self.source,
            name=f"inverse({self.name})",
        )


def _require_overlap(t: ChartTransform, x_J: np.ndarray) -> None:
    if not np.all(t.in_overlap(x_J)):
        raise OutsideOverlap(f"point outside the overlap of transform {t.name!r}")


def transform_point(t: ChartTransform, x_J) -> np.ndarray:
    """Map chart-J components to chart-I components."""
    x_J = as_points(x_J)
    _require_overlap(t, x_J)
    return np.asarray(t.forward(x_J), dtype=float)


def transform_mixed(t: ChartTransform, F, x_J) -> np.ndarray:
    """``Lambda^mu_alpha  Lambdabar^beta_nu  F^alpha_beta`` with both factors at ``x_J``."""
    x_J = as_points(x_J)
    _require_overlap(t, x_J)
    return t.jac(x_J) @ np.asarray(F, dtype=float) @ t.inv_jac(x_J)


def identity_transform(chart: str = "cartesian") -> ChartTransform:
    eye = np.eye(DIM)
    return ChartTransform(
        forward=lambda x: np.array(x, dtype=float),
        jacobian=lambda x: np.broadcast_to(eye, x.shape[:-1] + (DIM, DIM)).copy(),
        inverse_jacobian=lambda x: np.broadcast_to(eye, x.shape[:-1] + (DIM, DIM)).copy(),
        backward=lambda x: np.array(x, dtype=float),
        source=chart,
        target=chart,
        name="identity",
    )


def linear_transform(matrix, source="J", target="I", name="linear") -> ChartTransform:
    """Constant linear chart map ``x_I = L x_J``."""
    L = np.array(matrix, dtype=float)
    Linv = np.linalg.inv(L)
    return ChartTransform(
        forward=lambda x: x @ L.T,
        jacobian=lambda x: np.broadcast_to(L, x.shape[:-1] + (DIM, DIM)).copy(),
        inverse_jacobian=lambda x: np.broadcast_to(Linv, x.shape[:-1] + (DIM, DIM)).copy(),
        backward=lambda x: x @ Linv.T,
        source=source,
        target=target,
        name=name,
    )


def rotation_xy(angle: float) -> ChartTransform:
    """Rigid rotation of the (x^1, x^2) plane by ``angle``: (1, 0) -> (cos, sin)."""
    c, s = math.cos(angle), math.sin(angle)
    L = np.eye(DIM)
    L[1:3, 1:3] = [[c, -s], [s, c]]
    return linear_transform(L, "cartesian", "rotated", f"rotation_xy({angle:g})")


def axis_scaling(axis: int, factor: float) -> ChartTransform:
    L = np.eye(DIM)
    L[axis, axis] = factor
    return linear_transform(L, "cartesian", "scaled", f"axis_scaling({axis}, {factor:g})")


_RHO_MIN = 1e-12


def cartesian_to_cylindrical() -> ChartTransform:
    """(t, x, y, z) -> (t, r, theta, z) with theta in (-pi, pi)."""

    def fwd(x):
        out = np.array(x, dtype=float)
        out[..., 1] = np.hypot(x[..., 1], x[..., 2])
        out[..., 2] = np.arctan2(x[..., 2], x[..., 1])
        return out

    def bwd(u):
        out = np.array(u, dtype=float)
        out[..., 1] = u[..., 1] * np.cos(u[..., 2])
        out[..., 2] = u[..., 1] * np.sin(u[..., 2])
        return out

    def jac(x):
        X, Y = x[..., 1], x[..., 2]
        r2 = X**2 + Y**2
        r = np.sqrt(r2)
        out = np.zeros(x.shape[:-1] + (DIM, DIM))
        out[..., 0, 0] = out[..., 3, 3] = 1.0
        out[..., 1, 1] = X / r
        out[..., 1, 2] = Y / r
        out[..., 2, 1] = -Y / r2
        out[..., 2, 2] = X / r2
        return out

    def inv_jac(x):
        X, Y = x[..., 1], x[..., 2]
        r = np.hypot(X, Y)
        out = np.zeros(x.shape[:-1] + (DIM, DIM))
        out[..., 0, 0] = out[..., 3, 3] = 1.0
        out[..., 1, 1] = X / r
        out[..., 1, 2] = -Y
        out[..., 2, 1] = Y / r
        out[..., 2, 2] = X
        return out

    def overlap(x):
        X, Y = x[..., 1], x[..., 2]
        on_cut = (Y == 0.0) & (X <= 0.0)
        return (np.hypot(X, Y) > _RHO_MIN) & ~on_cut

    def target_domain(u):
        return (u[..., 1] > _RHO_MIN) & (np.abs(u[..., 2]) < math.pi)

    return ChartTransform(
        forward=fwd,
        jacobian=jac,
        inverse_jacobian=inv_jac,
        overlap=overlap,
        backward=bwd,
        target_domain=target_domain,
        source="cartesian",
        target="cylindrical",
        name="cartesian_to_cylindrical",
    )


def cylindrical_to_cartesian() -> ChartTransform:
    return cartesian_to_cylindrical().inverse()


BUILTIN_TRANSFORMS: dict[str, Callable[..., ChartTransform]] = {
    "identity": identity_transform,
    "rotation_xy": rotation_xy,
    "axis_scaling": axis_scaling,
    "cartesian_to_cylindrical": cartesian_to_cylindrical,
    "cylindrical_to_cartesian": cylindrical_to_cartesian,
}
