"""Referential gradient F(lambda, p): variational, series and finite-difference methods."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import cumulative_simpson

from ._io import atomic_write, csv_text, json_text
from .charts import DIM, ConnectionCoeffs, as_points, resolve_connection
from .errors import (
    BoundUnavailable,
    InsufficientCoverage,
    SingularGradient,
    StepTooSmall,
    ValidationError,
)
from .fields import GeneratingField, ShiftVector
from .flow import FlowSolution, IntegratorConfig, rk4_fixed, solve

SINGULAR_DET = 1e-12
M_SAFETY = 1.05
TRANSPORTS = ("covariant", "intrinsic")

MATRIX_COLUMNS = [f"F{mu}{nu}" for mu in range(DIM) for nu in range(DIM)]


@dataclass(frozen=True, eq=False)
class RefGradient:
    """``F^mu_nu(lambda, p)``: row index contravariant, column index covariant."""

    matrix: np.ndarray
    lam: float
    reference: np.ndarray
    method: str
    error_bound: float | None = None
    details: dict = field(default_factory=dict)

    def __array__(self, dtype=None, copy=None):
        return np.array(self.matrix, dtype=dtype or float)

    def record(self) -> dict:
        return {
            "lambda": float(self.lam),
            "p": [float(v) for v in self.reference],
            "method": self.method,
            "matrix": [float(v) for v in np.ravel(self.matrix)],
            "error_bound": None if self.error_bound is None else float(self.error_bound),
        }

    def json(self) -> str:
        return json_text(self.record())

    def csv_row(self) -> list[float]:
        return [float(self.lam), *np.ravel(self.matrix)]

    def csv(self) -> str:
        return csv_text(["lambda", *MATRIX_COLUMNS], [self.csv_row()])

    def write_csv(self, path) -> None:
        atomic_write(path, self.csv())


@dataclass(frozen=True)
class SeriesTruncation:
    """Truncation order and quadrature settings for the iterated-kernel series.

    ``M`` bounds the operator norm of the kernel along the path and ``m``
    bounds that of F; either is estimated when left as None.
    """

    order: int
    quadrature_step: float | None = None
    M: float | None = None
    m: float | None = None

    def __post_init__(self):
        if isinstance(self.order, bool) or int(self.order) != self.order or self.order < 0:
            raise ValidationError(f"order must be an integer >= 0, got {self.order}", "N")
        if self.quadrature_step is not None and not (self.quadrature_step > 0.0):
            raise ValidationError("quadrature_step must be positive", "quadrature_step")
        for name in ("M", "m"):
            v = getattr(self, name)
            if v is not None and not (math.isfinite(v) and v >= 0.0):
                raise ValidationError(f"{name} must be finite and >= 0", name)


# --------------------------------------------------------------------------
# Kernels and the generic transport engine


def gradient_kernel(field: GeneratingField, conn: ConnectionCoeffs | None, transport: str = "covariant"):
    """Return ``x -> (B, K)`` with ``K^mu_nu`` the transport kernel for F.

    ``"covariant"``: ``d_nu B^mu + Gamma^mu_{nu rho} B^rho``.
    ``"intrinsic"``: ``d_nu B^mu + T^mu_{nu rho} B^rho``; for a torsion-free
    connection this is the chart Jacobian of the flow map.
    """
    if transport not in TRANSPORTS:
        raise ValidationError(f"unknown transport {transport!r}; use one of {TRANSPORTS}", "transport")
    conn = resolve_connection(conn)

    def kernel(x):
        field.check_domain(x)
        B = np.asarray(field.value(x), dtype=float)
        dB = field.partials(x) if field.jacobian is None else np.asarray(field.jacobian(x), dtype=float)
        if conn.is_flat:
            return B, dB
        gam = np.asarray(conn.evaluate(x), dtype=float)
        if transport == "intrinsic":
            gam = gam - np.swapaxes(gam, -1, -2)
        return B, dB + np.einsum("...mnr,...r->...mn", gam, B)

    return kernel


@dataclass(frozen=True, eq=False)
class TransportResult:
    position: np.ndarray
    gradients: list[np.ndarray]
    integrals: list[np.ndarray]
    sigma: np.ndarray | None = None
    path: np.ndarray | None = None


System = Callable[[np.ndarray], tuple[np.ndarray, Sequence[np.ndarray], Sequence[np.ndarray]]]


def transport(
    system: System,
    p,
    span,
    cfg: IntegratorConfig | None = None,
    record: bool = False,
    n_steps: int | None = None,
) -> TransportResult:
    """Integrate ``x' = v(x)``, ``F_k' = K_k(x) F_k`` with ``F_k(0) = I``, and plain integrals.

    ``system(x)`` returns ``(v, [K_1, ...], [f_1, ...])``; each ``f_j`` is
    accumulated as ``int_0^span f_j(x(sigma)) dsigma``.  ``p`` may be a batch
    and ``span`` an array (fixed-step RK4 only).
    """
    cfg = cfg or IntegratorConfig()
    p = as_points(p)
    batch = p.shape[:-1]
    v0, ks0, fs0 = system(p)
    nk = len(ks0)
    f_shapes = [np.shape(f)[len(batch):] for f in fs0]
    f_sizes = [int(np.prod(s)) for s in f_shapes]
    size = DIM + 16 * nk + sum(f_sizes)

    def unpack(y):
        x = y[..., :DIM]
        Fs = [y[..., DIM + 16 * k : DIM + 16 * (k + 1)].reshape(y.shape[:-1] + (DIM, DIM)) for k in range(nk)]
        return x, Fs

    def rhs(y):
        x, Fs = unpack(y)
        v, ks, fs = system(x)
        parts = [v]
        parts += [(K @ F).reshape(y.shape[:-1] + (16,)) for K, F in zip(ks, Fs)]
        parts += [np.reshape(f, y.shape[:-1] + (-1,)) for f in fs]
        return np.concatenate(parts, axis=-1)

    y0 = np.zeros(batch + (size,))
    y0[..., :DIM] = p
    for k in range(nk):
        y0[..., DIM + 16 * k : DIM + 16 * (k + 1)] = np.eye(DIM).ravel()

    span_arr = np.asarray(span, dtype=float)
    if span_arr.ndim > 0:
        if cfg.method != "rk4":
            raise ValidationError("per-point spans need the fixed-step method", "method")
        if n_steps is None:
            n_steps = cfg.steps_for(float(np.max(np.abs(span_arr), initial=0.0)))
        out = rk4_fixed(rhs, y0, span_arr, n_steps)
        sigma = hist = None
    elif n_steps is not None:
        out = rk4_fixed(rhs, y0, float(span), n_steps, record=record)
        sigma, hist = (out if record else (None, None))
        out = hist[-1] if record else out
    else:
        res = solve(rhs, y0, float(span), cfg, record=record)
        sigma, hist = (res if record else (None, None))
        out = hist[-1] if record else res

    x, Fs = unpack(out)
    integrals = []
    offset = DIM + 16 * nk
    for shape, n in zip(f_shapes, f_sizes):
        integrals.append(out[..., offset : offset + n].reshape(batch + shape))
        offset += n
    path = None if hist is None else hist[..., :DIM]
    return TransportResult(x.copy(), [F.copy() for F in Fs], integrals, sigma, path)


def _check_nonsingular(F: np.ndarray) -> None:
    det = np.linalg.det(F)
    if np.any(np.abs(det) < SINGULAR_DET):
        raise SingularGradient(f"|det F| = {np.min(np.abs(det)):.3e} < {SINGULAR_DET:g}")


# --------------------------------------------------------------------------
# Methods


def refgrad_variational(
    field: GeneratingField,
    conn: ConnectionCoeffs | None,
    p,
    lam: float,
    cfg: IntegratorConfig | None = None,
    *,
    transport_kind: str = "covariant",
    full_output: bool = False,
):
    """Integrate the flow jointly with ``F' = K F``, ``F(0) = I``.

    With ``full_output=True`` returns ``(RefGradient, FlowSolution)``.
    """
    p = as_points(p)
    lam = float(lam)
    if not math.isfinite(lam):
        raise ValidationError("lambda must be finite", "lambda")
    kernel = gradient_kernel(field, conn, transport_kind)

    def system(x):
        B, K = kernel(x)
        return B, [K], []

    res = transport(system, p, lam, cfg, record=full_output)
    F = res.gradients[0]
    _check_nonsingular(F)
    out = RefGradient(F, lam, p.copy(), "variational")
    if not full_output:
        return out
    path = res.path
    path[0] = p
    sol = FlowSolution(
        reference=p.copy(),
        parameter="lambda",
        sigma=res.sigma,
        positions=path,
        tangents=np.asarray(field.value(path), dtype=float),
        field_name=field.name,
    )
    return out, sol


def tail_bound(order: int, M: float, m: float, lam: float) -> float:
    """``sum_{k > order} m (M |lam|)^(k+1) / (k+1)!``."""
    x = M * abs(lam)
    j = order + 2
    term = math.exp(j * math.log(x) - math.lgamma(j + 1)) if x > 0.0 else 0.0
    total = 0.0
    while term > 0.0:
        total += term
        j += 1
        term *= x / j
        if j > x and term < 1e-17 * total:
            break
    return m * total


def _cumulative(f: np.ndarray, h: float) -> np.ndarray:
    """Cumulative composite Simpson along axis 0 on a uniform grid with signed step ``h``."""
    return math.copysign(1.0, h) * cumulative_simpson(f, dx=abs(h), axis=0, initial=0.0)


def series_terms(kernels: np.ndarray, h: float, order: int) -> list[np.ndarray]:
    """``int_0^lambda N^(n)`` for ``n = 0..order``; later kernels multiply on the left."""
    terms = []
    N = kernels
    for _ in range(order + 1):
        C = _cumulative(N, h)
        terms.append(C[-1])
        N = kernels @ C
    return terms


def refgrad_series(
    field: GeneratingField,
    conn: ConnectionCoeffs | None,
    flowsol: FlowSolution,
    trunc: SeriesTruncation,
    lam: float | None = None,
    *,
    transport_kind: str = "covariant",
) -> RefGradient:
    """Truncated iterated-kernel series ``S_N = I + sum_{n<=N} int_0^lambda N^(n)``."""
    lam = flowsol.terminal if lam is None else float(lam)
    if flowsol.parameter != "lambda":
        raise ValidationError("series needs a lambda-parametrized flow solution")
    if not flowsol.covers(lam):
        raise InsufficientCoverage(f"flow solution reaches {flowsol.terminal}, need {lam}")
    kernel = gradient_kernel(field, conn, transport_kind)
    p = flowsol.reference
    if lam == 0.0:
        return RefGradient(np.eye(DIM), 0.0, p.copy(), "series", 0.0, {"order": trunc.order, "M": 0.0, "m": 1.0})

    q = trunc.quadrature_step or abs(lam) / 1000.0
    n_int = max(2, math.ceil(abs(lam) / q * (1.0 - 1e-12)))
    n_int += n_int % 2
    sigma = np.linspace(0.0, lam, n_int + 1)
    h = lam / n_int
    _, J = kernel(flowsol.position(sigma))

    M = trunc.M
    if M is None:
        _, J_nodes = kernel(flowsol.positions)
        stacked = np.concatenate([J_nodes, J])
        if not np.all(np.isfinite(stacked)):
            raise BoundUnavailable("kernel is not finite along the path")
        norms = np.linalg.norm(stacked, ord=2, axis=(-2, -1))
        M = M_SAFETY * float(np.max(norms))
    m = trunc.m if trunc.m is not None else math.exp(M * abs(lam))

    terms = series_terms(J, h, trunc.order)
    S = np.eye(DIM) + np.sum(terms, axis=0)
    bound = tail_bound(trunc.order, M, m, lam)
    return RefGradient(S, lam, p.copy(), "series", bound, {"order": trunc.order, "M": M, "m": m})


def refgrad_finite_difference(
    field: GeneratingField,
    p,
    lam: float,
    h: float,
    cfg: IntegratorConfig | None = None,
    *,
    one_sided: bool = False,
) -> RefGradient:
    """Column ``nu`` is ``[phi(lam, p + h e_nu) - phi(lam, p - h e_nu)] / 2h`` (chart components)."""
    p = as_points(p)
    h = float(h)
    if not math.isfinite(h) or h <= 0.0:
        raise ValidationError(f"h must be positive and finite, got {h}", "h")
    if h < 1e-12:
        raise StepTooSmall(f"h = {h:g} is below 1e-12")
    lam = float(lam)
    method = "finite_difference_one_sided" if one_sided else "finite_difference"
    if lam == 0.0:
        return RefGradient(np.eye(DIM), 0.0, p.copy(), method, None, {"h": h})
    cfg = cfg or IntegratorConfig()
    eye = np.eye(DIM)
    if one_sided:
        pts = np.concatenate([p[None], p + h * eye])
    else:
        pts = np.concatenate([p + h * eye, p - h * eye])

    def rhs(x):
        field.check_domain(x)
        return np.asarray(field.value(x), dtype=float)

    ends = solve(rhs, pts, lam, cfg)
    if one_sided:
        F = ((ends[1:] - ends[0]) / h).T
    else:
        F = ((ends[:DIM] - ends[DIM:]) / (2.0 * h)).T
    _check_nonsingular(F)
    return RefGradient(F, lam, p.copy(), method, None, {"h": h})


def apply_to_shift(F, hdir: ShiftVector) -> np.ndarray:
    """Image ``F h_hat`` of the unit reference shift."""
    matrix = F.matrix if isinstance(F, RefGradient) else np.asarray(F, dtype=float)
    return matrix @ hdir.direction
