import numpy as np
import pytest
from scipy.special import iv

from src.completeness_lab import (
    KernelCombination,
    build_map,
    collision_search,
    exp_cos_family,
    first_order_eigenfunction_evaluators,
    first_order_eigenfunctions,
    first_order_resolvent_check,
    first_order_resolvent_formula,
    generalized_eigenfunction_defect,
    kernel_annihilation,
    kernel_difference,
    liouville_map,
    span_residuals,
    similarity_example_check,
    threshold_scan,
    witness_defect,
)
from src.errors import DomainViolationError, NumericalError, ValidationError
from src.galerkin_spectra import Basis, assemble, spectrum
from src.hardy_core import HardyFunction, StripDomain, evaluate, h_norm
from src.monodromy_engine import periodic_resolvent
from src.named_operators import exp_cos_map, exp_cos_operator, mathieu, sin_phase
from src.semigroup_lab import annihilator_probe


@pytest.fixture
def identity_map(unit_strip):
    return build_map(HardyFunction.constant(1.0, unit_strip))


@pytest.fixture
def exp_cos_a2():
    return exp_cos_map(2.0, 1.0)


def test_exp_cos_family_coefficients():
    domain = StripDomain(1.0)
    p, inverse = exp_cos_family(2.0, domain, 30)
    z = np.array([0.3 + 0.5j, 2.0 - 0.9j, 4.0])
    assert np.allclose(evaluate(p, z), iv(0, 2.0) * np.exp(2.0 * np.cos(z)), rtol=1e-12)
    assert np.allclose(evaluate(p, z) * evaluate(inverse, z), 1.0, rtol=1e-10)
    assert inverse.coefficient(0) == pytest.approx(1.0)


def test_exp_cos_map_is_normalized(exp_cos_a2):
    assert exp_cos_a2.scale == pytest.approx(1.0)
    assert complex(exp_cos_a2(2 * np.pi)) == pytest.approx(2 * np.pi)
    assert exp_cos_a2.periodicity_defect([0.1, 1.0 + 0.5j, 3.0 - 0.8j]) < 1e-10


def test_map_agrees_with_segment_quadrature(exp_cos_a2):
    assert exp_cos_a2.quadrature_agreement([0.5 + 0.1j, 2.0 - 0.2j, np.pi + 0.3j]) < 1e-10


def test_constant_coefficient_gives_identity_map(identity_map):
    z = np.array([0.3 + 0.2j, 5.0 - 0.7j])
    assert np.allclose(identity_map(z), z, atol=1e-13)
    assert identity_map.scale == pytest.approx(1.0)


def test_map_rejects_points_outside_its_strip(exp_cos_a2):
    with pytest.raises(DomainViolationError):
        exp_cos_a2(1.0 + 1.5j)


def test_vanishing_coefficient_is_rejected(unit_strip):
    with pytest.raises(NumericalError):
        build_map(HardyFunction.from_modes({-1: 0.5, 1: 0.5}, unit_strip))


def test_injectivity_certificate(exp_cos_a2):
    # Re(1/p) changes sign once sinh(T) > pi/4
    assert exp_cos_a2.injectivity_certificate(0.25).passed
    report = exp_cos_a2.injectivity_certificate(1.0)
    assert not report.passed
    assert report.min_real_part < 0


def test_identity_map_has_no_collisions(identity_map):
    result = collision_search(identity_map, 0.9, grid=(64, 16))
    assert result.witness is None


def test_collision_search_respects_map_strip(exp_cos_a2):
    with pytest.raises(DomainViolationError):
        collision_search(exp_cos_a2, 1.5)


@pytest.mark.slow
def test_threshold_scan_finds_annihilated_kernel_difference():
    cmap = exp_cos_map(2.0, 3.0)
    result = threshold_scan(cmap, 0.25, 3.0, 12, label=2.0)
    assert result.t_star is not None
    # Re(1/p) > 0 keeps w injective below asinh(pi/4)
    assert result.t_star > np.arcsinh(np.pi / 4)
    for row in result.rows:
        if row["collision_found"]:
            assert row["certificate_min"] < 0

    witness = result.witness
    assert witness_defect(cmap, witness) < 1e-7
    domain = StripDomain(result.t_star)
    h = kernel_difference(witness, domain)
    modes = [0, 1, -1, 2, -2, 3, -3]
    evaluators = first_order_eigenfunction_evaluators(cmap, modes, domain)
    assert kernel_annihilation(evaluators, h) < 1e-7
    table = span_residuals(evaluators, [h])
    assert table.residuals[0, -1] == pytest.approx(table.test_norms[0], rel=1e-6)
    rows = annihilator_probe([1j * n for n in modes], evaluators, h, [1e-1, 1e-3], np.random.default_rng(0))
    assert all(r["pairing"] < 1e-7 for r in rows)
    assert result.certificate_misses == 0


@pytest.mark.slow
def test_threshold_is_stable_under_grid_doubling():
    cmap = exp_cos_map(2.0, 3.0)
    coarse = threshold_scan(cmap, 0.25, 3.0, 12, label=2.0)
    fine = threshold_scan(cmap, 0.25, 3.0, 12, grid=(512, 128), label=2.0)
    assert coarse.t_star is not None and fine.t_star is not None
    assert abs(fine.t_star - coarse.t_star) < 0.05
    assert fine.certificate_misses == 0


@pytest.mark.slow
def test_threshold_does_not_grow_with_amplitude():
    t_stars = [threshold_scan(exp_cos_map(a, 3.0), 0.25, 3.0, 12, label=a).t_star for a in (2.0, 3.0)]
    assert None not in t_stars
    assert t_stars[1] <= t_stars[0] + 0.01
    assert t_stars[1] > np.arcsinh(np.pi / 6)


def test_threshold_scan_without_collision(identity_map):
    result = threshold_scan(identity_map, 0.25, 1.0, 4, grid=(64, 16))
    assert result.t_star is None
    assert result.witness is None
    assert result.certificate_misses == 0
    assert [row["collision_found"] for row in result.rows] == [0, 0, 0, 0]


def test_kernel_combination_needs_open_strip(unit_strip):
    with pytest.raises(DomainViolationError):
        KernelCombination((2j,), (1.0,), unit_strip)


def test_kernel_combination_norm_matches_kernel_elements(unit_strip):
    h = KernelCombination((0.5 + 0.2j, 2.0 - 0.4j), (1.0, -1.0), unit_strip)
    f = HardyFunction.from_modes({0: 1.0, 1: 0.5j, -3: 0.25}, unit_strip)
    values = evaluate(f, np.array(h.points))
    # <f, h> = f(z1) - f(z2)
    assert h.inner_with(values) == pytest.approx(values[0] - values[1])
    assert h.norm_sq() > 0


def test_first_order_eigenfunctions_of_derivative(identity_map, unit_strip):
    eigfns = first_order_eigenfunctions(identity_map, [0, 1, -2], unit_strip, 8)
    for n, f in zip([0, 1, -2], eigfns):
        assert h_norm(f - HardyFunction.exponential(n, unit_strip, 8)) < 1e-12


def test_generalized_eigenfunction_is_not_periodic(identity_map):
    assert generalized_eigenfunction_defect(identity_map, 1j) == pytest.approx(2 * np.pi)


def test_span_residuals_of_exponentials(unit_strip):
    eigfns = [HardyFunction.exponential(n, unit_strip, 5) for n in (0, 1, 2, 1)]
    tests = [HardyFunction.exponential(2, unit_strip, 5), HardyFunction.exponential(5, unit_strip, 5)]
    table = span_residuals(eigfns, tests)
    assert table.residuals[0, 1] == pytest.approx(np.sqrt(np.cosh(4.0)))
    assert table.residuals[0, 2] < 1e-6
    assert np.allclose(table.residuals[1], np.sqrt(np.cosh(10.0)))
    assert table.effective_rank.tolist() == [1, 2, 3, 3]
    assert table.to_rows()[0] == {"M": 1, "rank": 1, "r_1": table.residuals[0, 0], "r_2": table.residuals[1, 0]}


def test_span_residuals_with_pointwise_eigenfunctions(identity_map, unit_strip):
    evaluators = first_order_eigenfunction_evaluators(identity_map, [0, 1, -1, 2, -2], unit_strip)
    target = HardyFunction.exponential(2, unit_strip, 4)
    table = span_residuals(evaluators, [target])
    norm = h_norm(target)
    assert table.residuals[0, 2] == pytest.approx(norm, rel=1e-8)
    assert table.residuals[0, 3] < 1e-5 * norm


def test_span_residuals_need_eigenfunctions(unit_strip):
    with pytest.raises(ValidationError):
        span_residuals([], [HardyFunction.exponential(0, unit_strip)])


def test_mathieu_eigenfunctions_span_exponentials():
    domain = StripDomain(0.4)
    decomp = spectrum(assemble(mathieu(domain), Basis.L2, 48), 40)
    tests = [HardyFunction.exponential(n, domain, 48) for n in (0, 1, -1, 2, -2)]
    table = span_residuals(decomp.eigenfunctions, tests)
    assert np.all(np.diff(table.residuals, axis=1) <= 1e-12)
    assert table.residuals[:, -1].max() < 1e-3


def test_similarity_example():
    report = similarity_example_check(sin_phase(StripDomain(2.0)), range(-10, 11), 64)
    assert report.max_sine < 1e-7
    assert report.max_eigenvalue_error < 1e-10


def test_resolvent_formula_for_derivative(identity_map, unit_strip):
    f = HardyFunction.exponential(1, unit_strip)
    x = np.array([0.0, 1.0, 4.5])
    values = first_order_resolvent_formula(identity_map, 0.5, f, x)
    assert np.allclose(values, np.exp(1j * x) / (1j - 0.5), atol=1e-10)


def test_resolvent_formula_at_eigenvalue(identity_map, unit_strip):
    with pytest.raises(NumericalError):
        first_order_resolvent_formula(identity_map, 2j, HardyFunction.exponential(1, unit_strip), [0.5])


def test_resolvent_formula_matches_monodromy_resolvent():
    domain = StripDomain(0.5)
    L = exp_cos_operator(1.0, domain)
    cmap = exp_cos_map(1.0, 0.5)
    f = HardyFunction.exponential(1, domain)
    lam = 0.3 + 0.7j
    x = np.array([0.2, 2.0, 5.0])
    closed_form = first_order_resolvent_formula(cmap, lam, f, x)
    numerical = evaluate(periodic_resolvent(L, lam, f).solution, x)
    assert np.allclose(closed_form, numerical, atol=1e-7)


def test_first_order_resolvent_check_rows():
    domain = StripDomain(0.5)
    rows = first_order_resolvent_check(exp_cos_map(1.0, 0.5), exp_cos_operator(1.0, domain), [0.3 + 0.7j, 0.5 - 2.0j],
                                       HardyFunction.exponential(1, domain), np.array([0.2, 2.0, 5.0]))
    assert [r["sample"] for r in rows] == [0, 1]
    assert rows[1]["im_lambda"] == -2.0
    assert max(r["difference"] for r in rows) < 1e-7


def test_liouville_map_of_constant_coefficient(unit_strip):
    cmap = liouville_map(HardyFunction.constant(4.0, unit_strip))
    z = np.array([0.5 + 0.5j, 3.0 - 0.25j])
    assert np.allclose(cmap(z), z / 2, atol=1e-13)
    assert cmap.injectivity_certificate(0.9).passed
