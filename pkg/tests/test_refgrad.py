import math

import numpy as np
import pytest

from flowgrad.charts import ConnectionCoeffs, cylindrical
from flowgrad.errors import BoundUnavailable, InsufficientCoverage, SingularGradient, StepTooSmall, ValidationError
from flowgrad.fields import (
    GeneratingField,
    ShiftVector,
    builtin_field,
    constant_field,
    linear_field,
    radial_field,
    rotation_field,
    rotation_generator,
    shear_field,
)
from flowgrad.flow import IntegratorConfig, integrate_flow
from flowgrad.refgrad import (
    RefGradient,
    SeriesTruncation,
    apply_to_shift,
    refgrad_finite_difference,
    refgrad_series,
    refgrad_variational,
    tail_bound,
)

from oracles import exp_partial_sum, expm_taylor, rotation_matrix_xy

P = np.array([0.2, 0.9, -0.3, 0.4])


def test_identity_at_zero_lambda():
    f = builtin_field("scaled_rotation")
    assert np.array_equal(refgrad_variational(f, None, P, 0.0).matrix, np.eye(4))
    assert np.array_equal(refgrad_finite_difference(f, P, 0.0, 1e-4).matrix, np.eye(4))
    sol = integrate_flow(f, P, 0.0)
    assert np.array_equal(refgrad_series(f, None, sol, SeriesTruncation(5)).matrix, np.eye(4))


def test_constant_field_is_identity():
    f = constant_field((1.0, -2.0, 0.5, 3.0))
    for lam in (-1.0, 0.3, 1.0):
        assert np.array_equal(refgrad_variational(f, None, P, lam).matrix, np.eye(4))
        for h in (1e-2, 1e-4):
            assert np.max(np.abs(refgrad_finite_difference(f, P, lam, h).matrix - np.eye(4))) <= 1e-10


def test_linear_rotation_generator_variational():
    A = rotation_generator()
    F = refgrad_variational(linear_field(A), None, P, 1.0)
    assert np.max(np.abs(F.matrix - expm_taylor(A))) <= 1e-8
    assert np.max(np.abs(F.matrix - rotation_matrix_xy(1.0))) <= 1e-8


def test_series_first_term():
    f = builtin_field("scaled_rotation", alpha=0.4)
    sol = integrate_flow(f, P, 0.6)
    S = refgrad_series(f, None, sol, SeriesTruncation(0, quadrature_step=1e-3))
    sigma = np.linspace(0.0, 0.6, 60001)
    J = f.partials(sol.position(sigma))
    trapezoid = np.eye(4) + np.trapezoid(J, sigma, axis=0)
    assert np.max(np.abs(S.matrix - trapezoid)) <= 1e-9


def test_series_partial_sums_for_linear_field():
    A = np.random.default_rng(4).standard_normal((4, 4)) * 0.3
    f = linear_field(A)
    lam = 0.8
    sol = integrate_flow(f, P, lam)
    for N in (0, 1, 3, 6):
        S = refgrad_series(f, None, sol, SeriesTruncation(N, quadrature_step=1e-3))
        assert np.max(np.abs(S.matrix - exp_partial_sum(lam * A, N + 1))) <= 1e-11


def test_series_matches_variational_on_rotation():
    f = rotation_field()
    F, sol = refgrad_variational(f, None, P, 1.0, full_output=True)
    S = refgrad_series(f, None, sol, SeriesTruncation(12))
    assert np.max(np.abs(S.matrix - F.matrix)) <= max(1e-7, S.error_bound)


def test_series_error_decreases_with_order():
    f = rotation_field()
    F, sol = refgrad_variational(f, None, P, 1.0, full_output=True)
    errs = [np.max(np.abs(refgrad_series(f, None, sol, SeriesTruncation(N)).matrix - F.matrix)) for N in range(13)]
    assert all(errs[N + 2] < errs[N] for N in range(11))


def test_tail_bound_matches_closed_form():
    x = 0.7
    expected = math.exp(x) - sum(x**j / math.factorial(j) for j in range(5))
    assert tail_bound(3, 1.0, 1.0, 0.7) == pytest.approx(expected, rel=1e-12)
    assert tail_bound(3, 2.0, 1.5, -0.35) == pytest.approx(1.5 * expected, rel=1e-12)
    assert tail_bound(0, 0.0, 1.0, 1.0) == 0.0


def test_series_estimates_M_from_path():
    f = builtin_field("scaled_rotation", alpha=0.3)
    sol = integrate_flow(f, P, 0.5)
    S = refgrad_series(f, None, sol, SeriesTruncation(4))
    norms = np.linalg.norm(f.partials(sol.positions), 2, axis=(-2, -1))
    assert S.details["M"] >= 1.05 * norms.max() * (1 - 1e-12)
    assert S.details["m"] == pytest.approx(math.exp(S.details["M"] * 0.5))


def test_series_coverage_and_bound_errors():
    f = rotation_field()
    sol = integrate_flow(f, P, 0.5)
    with pytest.raises(InsufficientCoverage):
        refgrad_series(f, None, sol, SeriesTruncation(3), lam=1.0)
    with pytest.raises(InsufficientCoverage):
        refgrad_series(f, None, sol, SeriesTruncation(3), lam=-0.2)
    broken = GeneratingField(f.value, lambda x: np.full(x.shape[:-1] + (4, 4), np.nan), name="broken")
    with pytest.raises(BoundUnavailable):
        refgrad_series(broken, None, sol, SeriesTruncation(3))
    with pytest.raises(ValidationError):
        SeriesTruncation(-1)


def test_finite_difference_linear_field():
    A = rotation_generator()
    F = refgrad_finite_difference(linear_field(A), P, 1.0, 1e-4)
    assert np.max(np.abs(F.matrix - expm_taylor(A))) <= 1e-7


def test_finite_difference_second_order_on_shear():
    f = shear_field(amplitude=1.0, wavenumber=2.0)
    exact = refgrad_variational(f, None, P, 1.0).matrix
    errs = [np.max(np.abs(refgrad_finite_difference(f, P, 1.0, h).matrix - exact)) for h in (0.1, 0.05)]
    assert 3.5 <= errs[0] / errs[1] <= 4.5
    one = [np.max(np.abs(refgrad_finite_difference(f, P, 1.0, h, one_sided=True).matrix - exact)) for h in (0.02, 0.01)]
    assert 1.7 <= one[0] / one[1] <= 2.3


def test_finite_difference_rejects_tiny_step():
    with pytest.raises(StepTooSmall):
        refgrad_finite_difference(rotation_field(), P, 1.0, 1e-13)
    with pytest.raises(ValidationError):
        refgrad_finite_difference(rotation_field(), P, 1.0, -1e-3)


def test_singular_gradient_detected():
    A = np.zeros((4, 4))
    A[1, 1] = -40.0
    with pytest.raises(SingularGradient):
        refgrad_variational(linear_field(A), None, P, 1.0)


def test_radial_field_in_polar_chart():
    conn = ConnectionCoeffs.levi_civita(cylindrical())
    F = refgrad_variational(radial_field("cylindrical"), conn, [0.0, 2.0, 0.1, 0.0], 0.5)
    assert np.max(np.abs(F.matrix - np.diag([1.0, 1.0, 1.25, 1.0]))) <= 1e-10


def test_apply_to_shift():
    e1 = ShiftVector((0.0, 1.0, 0.0, 0.0))
    assert np.array_equal(apply_to_shift(np.eye(4), e1), e1.direction)
    assert np.array_equal(apply_to_shift(np.diag([1.0, 2.0, 1.0, 1.0]), e1), [0.0, 2.0, 0.0, 0.0])
    quarter = refgrad_variational(rotation_field(), None, P, math.pi / 2)
    assert np.max(np.abs(apply_to_shift(quarter, e1) - [0.0, 0.0, 1.0, 0.0])) <= 1e-8


def test_transport_kinds_agree_without_connection():
    f = builtin_field("four_magnetic")
    a = refgrad_variational(f, None, P, 0.7)
    b = refgrad_variational(f, None, P, 0.7, transport_kind="intrinsic")
    assert np.array_equal(a.matrix, b.matrix)
    with pytest.raises(ValidationError):
        refgrad_variational(f, None, P, 0.7, transport_kind="parallel")


def test_rk45_variational():
    cfg = IntegratorConfig(method="rk45", rel_tol=1e-11, abs_tol=1e-13)
    F = refgrad_variational(rotation_field(), None, P, -0.8, cfg)
    assert np.max(np.abs(F.matrix - rotation_matrix_xy(-0.8))) <= 1e-9


def test_record_and_csv():
    F = RefGradient(np.eye(4), 0.0, P, "variational")
    rec = F.record()
    assert rec["matrix"] == np.eye(4).ravel().tolist()
    assert rec["error_bound"] is None
    header, row = F.csv().splitlines()
    assert header.split(",")[:3] == ["lambda", "F00", "F01"]
    assert row.split(",")[1] == "1.0000000000000000e+00"
    assert len(row.split(",")) == 17
