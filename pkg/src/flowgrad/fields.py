"""Generating vector fields and the built-in field library."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .charts import DIM, ConnectionCoeffs, MetricSpec, as_points, central_step, resolve_connection
from .errors import DomainError, NullOrTimelikeField, SuperluminalVelocity, ValidationError

FIELD_FD_STEP = 1e-6


@dataclass(frozen=True)
class GeneratingField:
    """Vector field ``B^mu(x)`` in one chart.

    ``value`` maps points ``(..., 4)`` to components ``(..., 4)``;
    ``jacobian`` (optional) maps them to ``(..., 4, 4)`` with entry
    ``[mu, nu] = d_nu B^mu``.
    """

    value: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray] | None = None
    chart_id: str = "cartesian"
    name: str = "field"
    domain: Callable[[np.ndarray], np.ndarray] | None = None

    def check_domain(self, x: np.ndarray) -> None:
        if self.domain is not None and not np.all(self.domain(x)):
            raise DomainError(f"point outside the domain of field {self.name!r}")

    def __call__(self, x) -> np.ndarray:
        x = as_points(x)
        self.check_domain(x)
        return np.asarray(self.value(x), dtype=float)

    def partials(self, x) -> np.ndarray:
        x = as_points(x)
        self.check_domain(x)
        if self.jacobian is not None:
            return np.asarray(self.jacobian(x), dtype=float)
        return fd_jacobian(self.value, x)

    @property
    def has_analytic_partials(self) -> bool:
        return self.jacobian is not None


def fd_jacobian(fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray, base: float = FIELD_FD_STEP) -> np.ndarray:
    """Central-difference Jacobian ``[..., mu, nu] = d_nu fn^mu``."""
    h = central_step(x, base)
    cols = []
    for nu in range(DIM):
        xp = x.copy()
        xm = x.copy()
        xp[..., nu] += h[..., nu]
        xm[..., nu] -= h[..., nu]
        cols.append((np.asarray(fn(xp)) - np.asarray(fn(xm))) / (2.0 * h[..., nu, None]))
    return np.stack(cols, axis=-1)


def pointwise(fn: Callable[[np.ndarray], np.ndarray]) -> Callable[[np.ndarray], np.ndarray]:
    """Lift a single-point callable to the batched calling convention."""

    def lifted(x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return np.asarray(fn(x), dtype=float)
        flat = x.reshape(-1, DIM)
        out = np.stack([np.asarray(fn(p), dtype=float) for p in flat])
        return out.reshape(x.shape[:-1] + out.shape[1:])

    return lifted


@dataclass(frozen=True)
class ShiftVector:
    """Reference shift ``h = |h| h_hat`` in chart components."""

    components: tuple[float, float, float, float]

    def __post_init__(self):
        comps = tuple(float(c) for c in self.components)
        if len(comps) != DIM or not all(math.isfinite(c) for c in comps):
            raise ValidationError("shift vector needs 4 finite components")
        if math.hypot(*comps) <= 0.0:
            raise ValidationError("shift vector must be non-zero")
        object.__setattr__(self, "components", comps)

    @property
    def magnitude(self) -> float:
        return math.hypot(*self.components)

    @property
    def direction(self) -> np.ndarray:
        return np.array(self.components) / self.magnitude

    def __array__(self, dtype=None, copy=None):
        return np.array(self.components, dtype=dtype or float)


# --------------------------------------------------------------------------
# Operations


def covariant_gradient(field: GeneratingField, conn: ConnectionCoeffs | None, x) -> np.ndarray:
    """``J^mu_nu = d_nu B^mu + Gamma^mu_{nu rho} B^rho`` at ``x``."""
    x = as_points(x)
    dB = field.partials(x)
    conn = resolve_connection(conn)
    if conn.is_flat:
        return dB
    return dB + np.einsum("...mnr,...r->...mn", conn(x), field(x))


def squared_norm(field: GeneratingField, metric: MetricSpec, x) -> np.ndarray:
    x = as_points(x)
    B = field(x)
    return np.einsum("...ab,...a,...b->...", metric(x), B, B)


def squared_norm_gradient(field: GeneratingField, metric: MetricSpec, x) -> np.ndarray:
    """``d_nu (g_ab B^a B^b)`` at ``x``, shape ``(..., 4)``."""
    x = as_points(x)
    B = field(x)
    dB = field.partials(x)
    g = metric(x)
    dg = metric.partials(x)
    return np.einsum("...nab,...a,...b->...n", dg, B, B) + 2.0 * np.einsum("...ab,...a,...bn->...n", g, B, dB)


def magnitude(field: GeneratingField, metric: MetricSpec, x) -> np.ndarray | float:
    """``sqrt(g_ab B^a B^b)``; raises NullOrTimelikeField when that is not positive."""
    b2 = squared_norm(field, metric, x)
    if np.any(b2 <= 0.0):
        raise NullOrTimelikeField(f"B^2 = {np.min(b2):.6g} <= 0 for field {field.name!r}")
    out = np.sqrt(b2)
    return float(out) if out.ndim == 0 else out


def unit_field(field: GeneratingField, metric: MetricSpec) -> GeneratingField:
    """The field ``b = B / |B|``, with quotient-rule partials when ``field`` has analytic ones."""

    def value(x):
        return field.value(x) / np.asarray(magnitude(field, metric, x))[..., None]

    jacobian = None
    if field.has_analytic_partials:

        def jacobian(x):
            B = field.value(x)
            dB = field.jacobian(x)
            mag = np.asarray(magnitude(field, metric, x))[..., None]
            dmag = squared_norm_gradient(field, metric, x) / (2.0 * mag)
            return dB / mag[..., None] - np.einsum("...m,...n->...mn", B, dmag) / (mag[..., None] ** 2)

    return GeneratingField(
        value=value,
        jacobian=jacobian,
        chart_id=field.chart_id,
        name=f"unit({field.name})",
        domain=field.domain,
    )


# --------------------------------------------------------------------------
# Built-in fields


def _tile(vec: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.broadcast_to(vec, x.shape[:-1] + vec.shape).copy()


def constant_field(components=(0.0, 1.0, 0.0, 0.0), chart_id: str = "cartesian") -> GeneratingField:
    c = np.array(components, dtype=float)
    zero = np.zeros((DIM, DIM))
    return GeneratingField(lambda x: _tile(c, x), lambda x: _tile(zero, x), chart_id, "constant")


def linear_field(matrix, offset=(0.0, 0.0, 0.0, 0.0), chart_id: str = "cartesian") -> GeneratingField:
    """``B = A x + b``."""
    A = np.array(matrix, dtype=float)
    b = np.array(offset, dtype=float)
    if A.shape != (DIM, DIM):
        raise ValidationError(f"linear field matrix must be 4x4, got {A.shape}")
    return GeneratingField(lambda x: x @ A.T + b, lambda x: _tile(A, x), chart_id, "linear")


def rotation_generator(omega: float = 1.0) -> np.ndarray:
    """Generator of rotations in the (x^1, x^2) plane."""
    A = np.zeros((DIM, DIM))
    A[1, 2] = -omega
    A[2, 1] = omega
    return A


def rotation_field(omega: float = 1.0) -> GeneratingField:
    """``(0, -omega y, omega x, 0)``."""
    A = rotation_generator(omega)

    def value(x):
        out = np.zeros_like(x)
        out[..., 1] = -omega * x[..., 2]
        out[..., 2] = omega * x[..., 1]
        return out

    return GeneratingField(value, lambda x: _tile(A, x), "cartesian", "rotation")


def shear_field(amplitude: float = 1.0, wavenumber: float = 1.0) -> GeneratingField:
    """``(0, a sin(k y), 0, 0)``: planar shear flow with a sinusoidal profile."""

    def value(x):
        out = np.zeros_like(x)
        out[..., 1] = amplitude * np.sin(wavenumber * x[..., 2])
        return out

    def jac(x):
        out = np.zeros(x.shape[:-1] + (DIM, DIM))
        out[..., 1, 2] = amplitude * wavenumber * np.cos(wavenumber * x[..., 2])
        return out

    return GeneratingField(value, jac, "cartesian", "shear")


def _rho(x):
    return np.hypot(x[..., 1], x[..., 2])


def radial_field(chart: str = "cartesian") -> GeneratingField:
    """Unit radial field in the (x^1, x^2) plane.

    In the cylindrical chart (t, r, theta, z) this is simply ``d_r``; in the
    Cartesian chart it is ``(0, x/rho, y/rho, 0)``, undefined on the axis.
    """
    if chart == "cylindrical":
        e_r = np.array([0.0, 1.0, 0.0, 0.0])
        return GeneratingField(
            lambda x: _tile(e_r, x),
            lambda x: np.zeros(x.shape[:-1] + (DIM, DIM)),
            "cylindrical",
            "radial",
            domain=lambda x: x[..., 1] > 0.0,
        )
    if chart != "cartesian":
        raise ValidationError(f"radial field has no representation in chart {chart!r}")

    def value(x):
        rho = _rho(x)
        out = np.zeros_like(x)
        out[..., 1] = x[..., 1] / rho
        out[..., 2] = x[..., 2] / rho
        return out

    def jac(x):
        X, Y = x[..., 1], x[..., 2]
        r3 = _rho(x) ** 3
        out = np.zeros(x.shape[:-1] + (DIM, DIM))
        out[..., 1, 1] = Y * Y / r3
        out[..., 1, 2] = -X * Y / r3
        out[..., 2, 1] = -X * Y / r3
        out[..., 2, 2] = X * X / r3
        return out

    return GeneratingField(value, jac, "cartesian", "radial", domain=lambda x: _rho(x) > 0.0)


def rotation_field_cylindrical(omega: float = 1.0) -> GeneratingField:
    """Rotation field in (t, r, theta, z): ``omega d_theta``."""
    e_th = np.array([0.0, 0.0, omega, 0.0])
    return GeneratingField(
        lambda x: _tile(e_th, x),
        lambda x: np.zeros(x.shape[:-1] + (DIM, DIM)),
        "cylindrical",
        "rotation",
        domain=lambda x: x[..., 1] > 0.0,
    )


def scaled_rotation_field(alpha: float = 1.0) -> GeneratingField:
    """``(1 + alpha rho^2) (0, -y, x, 0)``; its magnitude varies across orbits."""

    def value(x):
        f = 1.0 + alpha * _rho(x) ** 2
        out = np.zeros_like(x)
        out[..., 1] = -f * x[..., 2]
        out[..., 2] = f * x[..., 1]
        return out

    def jac(x):
        X, Y = x[..., 1], x[..., 2]
        f = 1.0 + alpha * (X**2 + Y**2)
        out = np.zeros(x.shape[:-1] + (DIM, DIM))
        out[..., 1, 1] = -2.0 * alpha * X * Y
        out[..., 1, 2] = -f - 2.0 * alpha * Y * Y
        out[..., 2, 1] = f + 2.0 * alpha * X * X
        out[..., 2, 2] = 2.0 * alpha * X * Y
        return out

    return GeneratingField(value, jac, "cartesian", "scaled_rotation")


def scaled_direction_field(direction=(0.0, 1.0, 0.0, 0.0), scale: float = 2.0, alpha: float = 0.0) -> GeneratingField:
    """``scale (1 + alpha (u.x)^2) u`` for a fixed unit direction ``u`` (Euclidean dot)."""
    u = np.array(direction, dtype=float)
    u = u / np.linalg.norm(u)

    def value(x):
        s = x @ u
        return (scale * (1.0 + alpha * s * s))[..., None] * u

    def jac(x):
        s = x @ u
        return (2.0 * scale * alpha * s)[..., None, None] * np.outer(u, u)

    return GeneratingField(value, jac, "cartesian", "scaled_direction")


def quadratic_field(component: int = 1, axis: int = 1, coefficient: float = 1.0) -> GeneratingField:
    """Single non-zero component ``B^component = coefficient (x^axis)^2``."""

    def value(x):
        out = np.zeros_like(x)
        out[..., component] = coefficient * x[..., axis] ** 2
        return out

    def jac(x):
        out = np.zeros(x.shape[:-1] + (DIM, DIM))
        out[..., component, axis] = 2.0 * coefficient * x[..., axis]
        return out

    return GeneratingField(value, jac, "cartesian", "quadratic")


def _lorentz_factor(v: np.ndarray, c: float) -> float:
    speed = float(np.linalg.norm(v))
    if c <= 0.0:
        raise ValidationError("speed of light must be positive")
    if speed >= c:
        raise SuperluminalVelocity(f"|v| = {speed:g} is not below c = {c:g}")
    return 1.0 / math.sqrt(1.0 - (speed / c) ** 2)


def four_velocity(v=(0.0, 0.0, 0.0), c: float = 1.0) -> GeneratingField:
    """Minkowski four-velocity ``gamma (c, v)`` for a constant 3-velocity."""
    v = np.array(v, dtype=float)
    gamma = _lorentz_factor(v, c)
    U = gamma * np.concatenate([[c], v])
    zero = np.zeros((DIM, DIM))
    return GeneratingField(lambda x: _tile(U, x), lambda x: _tile(zero, x), "cartesian", "four_velocity")


@dataclass(frozen=True)
class ThreeVectorField:
    """Spatial 3-vector field over 4D points, e.g. E(t, x) or B(t, x).

    ``jacobian`` returns ``(..., 3, 4)`` with entry ``[i, nu] = d_nu V^i``.
    """

    value: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray] | None = None

    @classmethod
    def affine(cls, offset=(0.0, 0.0, 0.0), matrix=None) -> "ThreeVectorField":
        """``V(x) = offset + M (x^1, x^2, x^3)``."""
        b = np.array(offset, dtype=float)
        M = np.zeros((3, 3)) if matrix is None else np.array(matrix, dtype=float)
        D = np.zeros((3, DIM))
        D[:, 1:] = M
        return cls(lambda x: x[..., 1:] @ M.T + b, lambda x: _tile(D, x))


def _as_three_field(spec) -> ThreeVectorField:
    if isinstance(spec, ThreeVectorField):
        return spec
    if callable(spec):
        return ThreeVectorField(spec)
    return ThreeVectorField.affine(spec)


def builtin_four_magnetic(E_vec, B_vec, v=(0.0, 0.0, 0.0), c: float = 1.0) -> GeneratingField:
    """Four-magnetic field in Minkowski Cartesian coordinates.

    Components are ``gamma (B.v / c, B - (v x E) / c^2)``.  ``E_vec`` and
    ``B_vec`` may be constant 3-vectors, ``ThreeVectorField`` instances, or
    callables of the 4D point.
    """
    E = _as_three_field(E_vec)
    Bf = _as_three_field(B_vec)
    v = np.array(v, dtype=float)
    gamma = _lorentz_factor(v, c)
    # v x E as a matrix product; np.cross is slow on the small arrays the integrator passes
    v_cross = np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])

    def value(x):
        Bx = np.asarray(Bf.value(x), dtype=float)
        Ex = np.asarray(E.value(x), dtype=float)
        out = np.empty(x.shape[:-1] + (DIM,))
        out[..., 0] = gamma * (Bx @ v) / c
        out[..., 1:] = gamma * (Bx - Ex @ v_cross.T / c**2)
        return out

    jac = None
    if E.jacobian is not None and Bf.jacobian is not None:

        def jac(x):
            dB = np.asarray(Bf.jacobian(x), dtype=float)
            dE = np.asarray(E.jacobian(x), dtype=float)
            out = np.empty(x.shape[:-1] + (DIM, DIM))
            out[..., 0, :] = gamma * np.einsum("i,...in->...n", v, dB) / c
            out[..., 1:, :] = gamma * (dB - v_cross @ dE / c**2)
            return out

    return GeneratingField(value, jac, "cartesian", "four_magnetic")


DEFAULT_MAGNETIC = ThreeVectorField.affine((0.0, 0.0, 1.0), [[0.0, -0.5, 0.0], [0.5, 0.0, 0.0], [0.0, 0.0, 0.0]])
DEFAULT_ELECTRIC = ThreeVectorField.affine((0.1, 0.0, 0.0), [[0.0, 0.0, 0.0], [0.0, 0.0, 0.2], [0.0, 0.0, 0.0]])


def _four_magnetic_builtin(E=None, B=None, v=(0.0, 0.0, 0.0), c: float = 1.0) -> GeneratingField:
    """Scenario-facing wrapper: ``E``/``B`` given as {"offset": [...], "matrix": [[...]]}."""

    def parse(spec, default):
        if spec is None:
            return default
        if isinstance(spec, dict):
            return ThreeVectorField.affine(spec.get("offset", (0.0, 0.0, 0.0)), spec.get("matrix"))
        return ThreeVectorField.affine(spec)

    return builtin_four_magnetic(parse(E, DEFAULT_ELECTRIC), parse(B, DEFAULT_MAGNETIC), v, c)


def _rotation_builtin(omega: float = 1.0, chart: str = "cartesian") -> GeneratingField:
    if chart == "cylindrical":
        return rotation_field_cylindrical(omega)
    if chart != "cartesian":
        raise ValidationError(f"rotation field has no representation in chart {chart!r}")
    return rotation_field(omega)


def _linear_builtin(matrix=None, offset=(0.0, 0.0, 0.0, 0.0)) -> GeneratingField:
    return linear_field(rotation_generator() if matrix is None else matrix, offset)


BUILTIN_FIELDS: dict[str, Callable[..., GeneratingField]] = {
    "constant": constant_field,
    "linear": _linear_builtin,
    "rotation": _rotation_builtin,
    "shear": shear_field,
    "radial": radial_field,
    "scaled_rotation": scaled_rotation_field,
    "scaled_direction": scaled_direction_field,
    "quadratic": quadratic_field,
    "four_velocity": four_velocity,
    "four_magnetic": _four_magnetic_builtin,
}


def builtin_field(name: str, **params) -> GeneratingField:
    try:
        factory = BUILTIN_FIELDS[name]
    except KeyError:
        raise KeyError(f"unknown field {name!r}; known: {sorted(BUILTIN_FIELDS)}") from None
    return factory(**params)
