"""Acceptance suite: one PASS/FAIL line per criterion.

Run directly with ``python3 tests/test_acceptance.py`` or through pytest; the
lines are also collected in the terminal summary.
"""

import inspect
import itertools
import json
import math
import time

import numpy as np
import pytest

from flowgrad import laws
from flowgrad.charts import ConnectionCoeffs, cartesian_to_cylindrical, cylindrical, euclidean, minkowski, rotation_xy
from flowgrad.cli import main
from flowgrad.errors import OutsideOverlap
from flowgrad.fields import BUILTIN_FIELDS, builtin_field, linear_field, quadratic_field, radial_field, ShiftVector
from flowgrad.laws import (
    GridSpec,
    bch_combine,
    check_covariance,
    check_group_property,
    check_representation_relation,
    covariant_taylor_remainder,
    eulerian_residual,
)
from flowgrad.refgrad import SeriesTruncation, refgrad_finite_difference, refgrad_series, refgrad_variational

from oracles import expm_taylor, loglog_slope, mp_bch_error, mp_matrix, mp_to_object

P = np.array([0.0, 1.2, 0.5, 0.1])
ROTATION_GRID = GridSpec((0.0, 0.5, -0.5, -0.5), (0.0, 1.5, 0.5, 0.5), (1, 9, 9, 9), (1.0, 0.1, 0.1, 0.1))


def test_three_method_agreement(acceptance):
    fields = {
        "constant": builtin_field("constant"),
        "linear": builtin_field("linear"),
        "rotation": builtin_field("rotation"),
        "shear": builtin_field("shear"),
        "radial": builtin_field("radial"),
        "four_magnetic": builtin_field("four_magnetic", v=[0.0, 0.0, 0.0]),
    }
    start = time.perf_counter()
    worst = 0.0
    for f, lam in itertools.product(fields.values(), (-1.0, -0.5, 0.5, 1.0)):
        F, sol = refgrad_variational(f, None, P, lam, full_output=True)
        S = refgrad_series(f, None, sol, SeriesTruncation(12))
        D = refgrad_finite_difference(f, P, lam, 1e-4)
        for a, b in itertools.combinations((F.matrix, S.matrix, D.matrix), 2):
            worst = max(worst, float(np.max(np.abs(a - b))))
    elapsed = time.perf_counter() - start
    ok = acceptance(1, "three-method agreement", worst <= 1e-5 and elapsed < 10.0, f"max={worst:.2e}, {elapsed:.2f}s")
    assert ok


def test_exponential_oracle(acceptance):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(5):
        A = rng.standard_normal((4, 4))
        A /= np.linalg.norm(A, 2)
        for lam in (0.25, 1.0):
            F = refgrad_variational(linear_field(A), None, P, lam)
            worst = max(worst, float(np.max(np.abs(F.matrix - expm_taylor(lam * A)))))
    assert acceptance(2, "linear-field exponential", worst <= 1e-8, f"max={worst:.2e}")


def test_series_tail_bound(acceptance):
    f = builtin_field("rotation")
    F, sol = refgrad_variational(f, None, P, 1.0, full_output=True)
    errors, bounds = [], []
    for N in (0, 2, 4, 8):
        S = refgrad_series(f, None, sol, SeriesTruncation(N, M=1.0))
        errors.append(float(np.max(np.abs(S.matrix - F.matrix))))
        bounds.append(S.error_bound)
    honored = all(e <= b for e, b in zip(errors, bounds))
    decreasing = all(b1 > b2 for b1, b2 in zip(bounds, bounds[1:]))
    detail = ", ".join(f"N={N}: {e:.1e}<={b:.1e}" for N, e, b in zip((0, 2, 4, 8), errors, bounds))
    assert acceptance(3, "series tail bound", honored and decreasing, detail)


def test_chart_covariance(acceptance):
    rotated = check_covariance(builtin_field("rotation"), builtin_field("rotation"), rotation_xy(0.7), P, 0.5)
    polar_p = np.array([0.0, 1.0, 0.0, 0.3])
    polar = check_covariance(
        radial_field("cylindrical"),
        radial_field("cartesian"),
        cartesian_to_cylindrical(),
        polar_p,
        0.5,
        metric_I=cylindrical(),
        metric_J=minkowski(),
    )
    try:
        check_covariance(
            builtin_field("rotation", chart="cylindrical"),
            builtin_field("rotation"),
            cartesian_to_cylindrical(),
            [0.0, -1.0, 0.1, 0.0],
            0.5,
        )
        raised = False
    except OutsideOverlap:
        raised = True
    ok = rotated.residual <= 1e-5 and polar.residual <= 1e-5 and raised
    detail = f"rotated={rotated.residual:.1e}, polar={polar.residual:.1e}, overlap exit raised={raised}"
    assert acceptance(4, "chart covariance", ok, detail)


def test_group_property(acceptance):
    rng = np.random.default_rng(7)
    worst = 0.0
    for name in BUILTIN_FIELDS:
        f = builtin_field(name)
        for _ in range(10):
            total = rng.uniform(0.0, 1.0)
            share = rng.uniform(0.0, 1.0)
            signs = rng.choice([-1.0, 1.0], size=2)
            l1, l2 = signs[0] * share * total, signs[1] * (1.0 - share) * total
            worst = max(worst, check_group_property(f, None, P, l1, l2).residual)
    conn = ConnectionCoeffs.levi_civita(cylindrical())
    polar_p = [0.0, 1.3, 0.2, 0.0]
    for f in (builtin_field("radial", chart="cylindrical"), builtin_field("rotation", chart="cylindrical")):
        for _ in range(3):
            l1, l2 = rng.uniform(-0.5, 0.5, size=2)
            worst = max(worst, check_group_property(f, conn, polar_p, l1, l2).residual)
    assert acceptance(5, "group property", worst <= 1e-7, f"max={worst:.2e}")


def test_representation_relation(acceptance):
    # the factored check is absolute, so keep |F| of order one along the orbit
    p = [0.0, 0.8, 0.3, -0.2]
    general = check_representation_relation(builtin_field("scaled_rotation", alpha=1.0), euclidean(), None, p, lam=0.5)
    factored = check_representation_relation(builtin_field("scaled_direction", alpha=0.5), euclidean(), None, p, lam=0.5)
    d = general.details
    ok = (
        general.residual <= 1e-5
        and "commutator_1" in d
        and factored.details["factored_checked"]
        and max(factored.details["factored_1"], factored.details["factored_2"], factored.residual) <= 1e-10
    )
    detail = (
        f"residual={general.residual:.1e}, commutators={d['commutator_1']:.2e}/{d['commutator_2']:.2e}, "
        f"factored={factored.residual:.1e}"
    )
    assert acceptance(6, "representation relation", ok, detail)


def test_eulerian_convergence(acceptance):
    f = builtin_field("rotation")
    coarse = eulerian_residual(f, None, ROTATION_GRID, 0.5)
    fine = eulerian_residual(f, None, ROTATION_GRID.halved(), 0.5)
    ratio = coarse.residual / fine.residual
    detail = f"{coarse.residual:.3e} -> {fine.residual:.3e}, ratio={ratio:.3f}"
    assert acceptance(7, "Eulerian convergence", 3.0 <= ratio <= 5.0, detail)


def test_bch_and_taylor_scaling(acceptance):
    rng = np.random.default_rng(11)
    ts = (0.1, 0.05, 0.025)
    slopes = []
    for _ in range(3):
        X, Y = rng.standard_normal((2, 4, 4))
        X *= 0.2 / np.linalg.norm(X, 2)
        Y *= 0.2 / np.linalg.norm(Y, 2)
        errs = []
        for t in ts:
            Xo, Yo = mp_to_object(mp_matrix(t * X)), mp_to_object(mp_matrix(t * Y))
            errs.append(mp_bch_error(Xo, Yo, bch_combine(Xo, Yo, 5)))
        slopes.append(loglog_slope(ts, errs))
    bch_ok = all(5.5 <= s <= 6.5 for s in slopes)

    f = quadratic_field(component=1, axis=1, coefficient=1.0)
    y = np.array([0.0, 0.4, -0.2, 0.1])
    R = [np.max(np.abs(covariant_taylor_remainder(f, None, y, ShiftVector((0.0, w, 0.0, 0.0))))) for w in (0.1, 0.05)]
    taylor_ratio = R[0] / R[1]
    taylor_ok = 3.5 <= taylor_ratio <= 4.5

    source = inspect.getsource(laws)
    verbatim = all(f'Fraction("{c}")' in source for c in ("1/12", "1/24", "1/720"))
    ok = bch_ok and taylor_ok and verbatim
    detail = f"BCH slopes={', '.join(f'{s:.2f}' for s in slopes)}, Taylor ratio={taylor_ratio:.3f}, coefficients verbatim={verbatim}"
    assert acceptance(8, "BCH and Taylor scaling", ok, detail)


SCENARIOS = {
    "flow": {
        "command": "flow",
        "field": "scaled_rotation",
        "params": {"p": [0, 1, 0.2, 0], "lambda": 0.8},
        "outputs": {"csv": "flow.csv", "report": "flow.json"},
    },
    "refgrad": {
        "command": "refgrad",
        "field": "shear",
        "params": {"p": [0, 0.1, 0.2, 0], "lambda": 1.0},
        "outputs": {"csv": "refgrad.csv", "report": "refgrad.json"},
    },
    "lemma3": {
        "command": "verify",
        "law": "lemma3",
        "metric": "euclidean",
        "field": {"name": "scaled_rotation", "params": {"alpha": 1.0}},
        "params": {"p": [0, 0.8, 0.3, -0.2], "lambda": 0.5, "N": 8},
        "outputs": {"report": "lemma3.json"},
    },
    "eulerian": {
        "command": "grid-residual",
        "field": "rotation",
        "params": {
            "grid": {"lower": [0, 0.5, -0.5, -0.5], "upper": [0, 1.5, 0.5, 0.5], "counts": [1, 5, 5, 5], "fd_steps": [1, 0.1, 0.1, 0.1]},
            "lambda": 0.5,
        },
        "outputs": {"csv": "eulerian.csv", "report": "eulerian.json"},
    },
    "bch": {
        "command": "bch",
        "params": {"X": np.diag([0.1, 0, 0, 0]).tolist(), "Y": (0.1 * np.eye(4, k=1)).tolist(), "degree": 5},
        "outputs": {"csv": "bch.csv", "report": "bch.json"},
    },
}


def test_determinism(acceptance, tmp_path, capsys):
    mismatched = []
    for name, doc in SCENARIOS.items():
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(doc))
        threads = ("1", "4") if name == "eulerian" else ("1", "1")
        for run, th in zip(("a", "b"), threads):
            assert main(["run", str(path), "--out", str(tmp_path / run), "--threads", th]) == 0
        for out in doc["outputs"].values():
            if (tmp_path / "a" / out).read_bytes() != (tmp_path / "b" / out).read_bytes():
                mismatched.append(out)
    capsys.readouterr()
    detail = f"{len(SCENARIOS)} scenarios" + (f", differing: {mismatched}" if mismatched else "")
    assert acceptance(9, "determinism", not mismatched, detail)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
