import numpy as np
import pytest

from src.errors import BranchCutError, NearSingularError, ValidationError
from src.galerkin_spectra import Basis, assemble, spectrum
from src.hardy_core import HardyFunction
from src.monodromy_engine import (
    analytic_sqrt,
    default_lambda_grid,
    dunford_taylor_sqrt,
    floquet_determinant,
    floquet_scan,
    gronwall_scan,
    locate_eigenvalues,
    periodic_resolvent,
    transfer_matrix,
)
from src.named_operators import first_order_p1


def test_sqrt_of_diagonal():
    assert np.allclose(analytic_sqrt(np.eye(3)), np.eye(3))
    assert np.allclose(analytic_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))


def test_sqrt_agrees_with_dunford_taylor(rng):
    A = 3.0 * np.eye(4) + 0.3 * (rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)))
    root = analytic_sqrt(A)
    assert np.allclose(root @ root, A, atol=1e-12)
    assert np.max(np.abs(dunford_taylor_sqrt(A) - root)) < 1e-8


def test_sqrt_rejects_the_cut():
    with pytest.raises(BranchCutError):
        analytic_sqrt(np.diag([-1.0, 2.0]))


def test_laplacian_transfer_at_zero(laplacian):
    U = transfer_matrix(laplacian, 0.0).matrix
    assert np.allclose(U, [[1.0, 2 * np.pi], [0.0, 1.0]], atol=1e-10)


def test_laplacian_floquet_multipliers(laplacian):
    lam = 2.3 + 0.4j
    multipliers = np.sort_complex(np.linalg.eigvals(transfer_matrix(laplacian, lam).matrix))
    root = np.sqrt(lam)
    expected = np.sort_complex(np.exp([2j * np.pi * root, -2j * np.pi * root]))
    assert np.allclose(multipliers, expected, rtol=1e-8)


def test_first_order_transfer_is_exponential(unit_strip):
    L = first_order_p1(unit_strip)
    lam = 0.3 + 0.2j
    U = transfer_matrix(L, lam).matrix
    assert U.shape == (1, 1)
    assert U[0, 0] == pytest.approx(np.exp(2 * np.pi * lam), rel=1e-9)


def test_determinant_vanishes_at_squares(laplacian):
    for n in range(4):
        assert abs(floquet_determinant(laplacian, float(n * n))) < 1e-8
    assert floquet_determinant(laplacian, 0.5) == pytest.approx(2 - 2 * np.cos(2 * np.pi * np.sqrt(0.5)), abs=1e-8)


def test_preconditioned_matches_plain(mathieu_half):
    for lam in (3.0 + 0.5j, 20.0 - 1.0j):
        plain = transfer_matrix(mathieu_half, lam).matrix
        pre = transfer_matrix(mathieu_half, lam, preconditioned=True)
        assert pre.preconditioned
        assert np.max(np.abs(pre.matrix - plain)) < 1e-7 * np.linalg.norm(plain)


def test_transfer_cocycle_and_path_independence(mathieu_half):
    lam = 4.0 + 0.25j
    full = transfer_matrix(mathieu_half, lam).matrix
    first = transfer_matrix(mathieu_half, lam, end=np.pi).matrix
    second = transfer_matrix(mathieu_half, lam, end=2 * np.pi, start=np.pi).matrix
    assert np.allclose(second @ first, full, rtol=1e-8, atol=1e-9)
    bent_first = transfer_matrix(mathieu_half, lam, end=np.pi + 0.3j).matrix
    bent_second = transfer_matrix(mathieu_half, lam, end=2 * np.pi, start=np.pi + 0.3j).matrix
    assert np.allclose(bent_second @ bent_first, full, rtol=1e-8, atol=1e-9)


def test_wronskian_and_gronwall_diagnostics(mathieu_half):
    tm = transfer_matrix(mathieu_half, 3.0 + 1.0j)
    assert tm.wronskian_error < 1e-8
    assert tm.within_gronwall


def test_gronwall_scan_has_no_violations(laplacian):
    scan = gronwall_scan(laplacian, [1.0 + 1.0j, 5j, -3.0, 10.0])
    assert len(scan.rows) == 4
    assert scan.violations == 0
    assert scan.envelope_constant > 0


def test_gronwall_scan_keeps_overflowed_rows(unit_strip):
    # U(2pi, lambda) = exp(2 pi lambda) leaves the double range at lambda = 1e4
    scan = gronwall_scan(first_order_p1(unit_strip), [1.0, 1e4])
    assert [r["overflowed"] for r in scan.rows] == [False, True]
    assert scan.overflows == 1
    assert scan.violations == 0
    assert scan.rows[0]["log_norm"] == pytest.approx(2 * np.pi, rel=1e-8)
    assert np.isnan(scan.rows[1]["log_norm"])


@pytest.mark.slow
def test_mathieu_gronwall_scan_up_to_large_lambda(mathieu_half):
    scan = gronwall_scan(mathieu_half, default_lambda_grid(1e4))
    assert len(scan.rows) == 72
    assert scan.overflows == 0
    assert scan.violations == 0
    assert np.isfinite(scan.envelope_constant)


def test_floquet_scan_rows(laplacian):
    rows = floquet_scan(laplacian, (0.5, 2.5, -0.5, 0.5), grid=(3, 2))
    assert len(rows) == 6
    assert set(rows[0]) == {"re_lambda", "im_lambda", "abs_det", "winding_cell_id"}
    assert rows[0]["winding_cell_id"] == ""


def test_locate_laplacian_eigenvalues(laplacian):
    result = locate_eigenvalues(laplacian, (-0.5, 10.5, -1.0, 1.0))
    values = result.expanded_values()
    assert np.max(np.abs(values - np.array([0, 1, 1, 4, 4, 9, 9]))) < 1e-8
    assert result.cells[0].count == 7


def test_locate_empty_rectangle(laplacian):
    result = locate_eigenvalues(laplacian, (1.5, 3.0, -0.5, 0.5))
    assert result.eigenvalues == []
    assert len(result.to_rows()) == 0


def test_locate_rejects_degenerate_rectangle(laplacian):
    with pytest.raises(ValidationError):
        locate_eigenvalues(laplacian, (2.0, 1.0, -1.0, 1.0))


@pytest.mark.slow
def test_monodromy_agrees_with_galerkin_for_mathieu(mathieu_half):
    rect = (0.0, 9.5, -1.0, 1.0)
    located = locate_eigenvalues(mathieu_half, rect).expanded_values()
    galerkin = spectrum(assemble(mathieu_half, Basis.L2, 32), 12).eigenvalues
    galerkin = galerkin[(galerkin.real >= rect[0]) & (galerkin.real <= rect[1])]
    assert len(located) == len(galerkin) == 5
    assert np.max(np.abs(located - galerkin)) < 1e-7


def test_periodic_resolvent_of_exponential(laplacian, unit_strip):
    f = HardyFunction.exponential(1, unit_strip)
    result = periodic_resolvent(laplacian, 0.5, f)
    assert result.solution.coefficient(1) == pytest.approx(2.0, abs=1e-8)
    assert result.residual < 1e-8


def test_periodic_resolvent_of_random_mathieu_data(mathieu_half, rng):
    for lam in (6.5 + 0.3j, 30.0 + 0.1j):
        f = HardyFunction.random(rng, mathieu_half.domain, 4, decay=1.0)
        result = periodic_resolvent(mathieu_half, lam, f)
        assert result.residual < 1e-8


def test_periodic_resolvent_at_eigenvalue(laplacian, unit_strip):
    f = HardyFunction.exponential(1, unit_strip)
    for lam in (0.0, 1.0):
        with pytest.raises(NearSingularError):
            periodic_resolvent(laplacian, lam, f)
