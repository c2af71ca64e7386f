"""Eigenfunction-expansion semigroup S(t)f = sum_n c_n exp(-t(lambda_n + mu)) psi_n.

Built from the L^2-orthonormal Galerkin eigenpairs of a self-adjoint
operator; mu shifts the spectrum to positivity.
"""
import logging
from dataclasses import dataclass

import numpy as np

from src.errors import ValidationError
from src.galerkin_spectra import Basis, assemble, growth_fit, spectrum, weyl_bounds
from src.hardy_core import HardyFunction, h_norm, l2_inner, l2_norm
from src.operator_model import selfadjoint_defect

logger = logging.getLogger(__name__)

SELFADJOINT_RTOL = 1e-10
CONTRACTION_SLACK = 1e-8
CONTINUITY_TOL = 1e-4
TAIL_TERMS = 100000


@dataclass(frozen=True, eq=False)
class SemigroupState:
    operator: object
    decomposition: object
    shift: float
    growth: object = None
    weyl: object = None

    @property
    def eigenvalues(self):
        """Shifted eigenvalues lambda_n + mu."""
        return self.decomposition.eigenvalues.real + self.shift

    @property
    def modes(self):
        return len(self.decomposition.pairs)

    @property
    def n_trunc(self):
        return self.decomposition.n_trunc

    def coefficients(self, f):
        """c_n = <f, psi_n>_L."""
        if f.domain != self.operator.domain:
            raise ValidationError(f"domain mismatch: T={f.domain.T} vs T={self.operator.domain.T}")
        if f.value_count != self.operator.size:
            raise ValidationError(f"value count mismatch: K={f.value_count} vs K={self.operator.size}")
        return np.array([l2_inner(f, p.eigenfunction) for p in self.decomposition.pairs])

    def synthesize(self, weights):
        coeffs = np.tensordot(weights, np.array([p.eigenfunction.coeffs for p in self.decomposition.pairs]), axes=1)
        return HardyFunction(coeffs, self.operator.domain)


def shift_policy(min_rayleigh):
    """mu = max(0, 1 - min Rayleigh quotient) + 1."""
    return max(0.0, 1.0 - min_rayleigh) + 1.0


def build_state(L, n_trunc, modes=None, shift="auto", growth=True):
    """Spectral data of a self-adjoint L; modes defaults to the trusted count."""
    report = selfadjoint_defect(L, n_trunc)
    if report.defect > SELFADJOINT_RTOL:
        raise ValidationError(f"semigroup expansion needs a self-adjoint operator (defect {report.defect:.2e})")
    matrix = assemble(L, Basis.L2, n_trunc)
    decomp = spectrum(matrix, matrix.size // 2 if modes is None else modes)
    if shift == "auto":
        mu = shift_policy(report.min_rayleigh)
    else:
        mu = float(shift)
        if mu < 0:
            raise ValidationError(f"shift must be nonnegative, got {mu}")
    lowest = float(decomp.eigenvalues.real.min()) + mu
    if lowest < 0:
        logger.warning("Shifted spectrum is not positive (lowest %.4g); S(t) grows", lowest)
    fit = growth_fit(decomp) if growth else None
    weyl = None
    if growth and len(decomp.trusted_pairs()) > 2 and float(np.sort(decomp.eigenvalues.real)[1]) > 0:
        weyl = weyl_bounds(decomp)
    logger.debug("Semigroup state: %d modes, mu = %g", len(decomp.pairs), mu)
    return SemigroupState(L, decomp, mu, fit, weyl)


def _check_time(t):
    if t < 0:
        raise ValidationError(f"semigroup time must be nonnegative, got {t}")


def modal_weights(state, f, t):
    """|c_n exp(-t(lambda_n + mu))|."""
    _check_time(t)
    return np.abs(state.coefficients(f) * np.exp(-t * state.eigenvalues))


def decay_envelope(state, t):
    """C1 exp(C2 sqrt|lambda_n| - t(lambda_n + mu)) with C1 the covering envelope constant."""
    _check_time(t)
    if state.growth is None:
        raise ValidationError("decay envelope needs a state built with growth=True")
    sqrt_lambda = np.sqrt(np.abs(state.decomposition.eigenvalues))
    return state.growth.envelope_c1 * np.exp(state.growth.c2 * sqrt_lambda - t * state.eigenvalues)


def tail_bound(state, f, t):
    """Pointwise bound on the discarded modes m >= M.

    Uses lambda_m + mu >= beta1^2 m^2 and sqrt(lambda_m) <= beta2 m from the
    Weyl band, |c_m| <= ||f||_L and the growth envelope of psi_m.
    """
    _check_time(t)
    if t == 0:
        return np.inf
    if state.growth is None or state.weyl is None:
        return np.nan
    beta1_sq, beta2 = state.weyl.beta1_sq, np.sqrt(state.weyl.beta2_sq)
    m = np.arange(state.modes, state.modes + TAIL_TERMS, dtype=float)
    exponent = state.growth.c2 * beta2 * m - t * beta1_sq * m**2
    with np.errstate(under="ignore"):
        total = np.sum(np.exp(exponent))
    return float(l2_norm(f) * state.growth.envelope_c1 * total)


def evolve(state, f, t):
    """S(t)f truncated to the kept modes; tail_norm carries the tail bound."""
    _check_time(t)
    g = state.synthesize(state.coefficients(f) * np.exp(-t * state.eigenvalues))
    tail = tail_bound(state, f, t)
    return HardyFunction(g.coeffs, g.domain, tail if np.isfinite(tail) else 0.0)


def semigroup_defect(state, f, t, s):
    """||S(t+s)f - S(t)S(s)f||_H."""
    return h_norm(evolve(state, f, t + s) - evolve(state, evolve(state, f, s), t))


@dataclass(frozen=True)
class ContinuityProbe:
    rows: list
    projection_defect: float
    monotone: bool
    passed: bool


def continuity_probe(state, f, t_ladder, tol=CONTINUITY_TOL):
    """||S(t)f - f|| down a decreasing ladder of positive times.

    PASS iff the H^2 sequence is nonincreasing and its last value is below
    tol plus the part of f outside the kept span.
    """
    t_ladder = np.asarray(t_ladder, dtype=float)
    if t_ladder.size == 0 or np.any(t_ladder <= 0) or np.any(np.diff(t_ladder) >= 0):
        raise ValidationError("t ladder must be positive and strictly decreasing")
    f = f.pad(max(f.n_trunc, state.n_trunc))
    projection_defect = h_norm(f - evolve(state, f, 0.0))
    rows = []
    for t in t_ladder:
        g = evolve(state, f, t)
        rows.append({"t": float(t), "norm_H": h_norm(g - f), "norm_L": l2_norm(g - f), "tail_bound": tail_bound(state, f, t)})
    norms = np.array([r["norm_H"] for r in rows])
    monotone = bool(np.all(np.diff(norms) <= 1e-14 * max(norms[0], 1.0)))
    passed = bool(monotone and norms[-1] < tol + projection_defect)
    return ContinuityProbe(rows, projection_defect, monotone, passed)


@dataclass(frozen=True)
class ContractionReport:
    max_ratio_l2: float
    max_ratio_h: float
    passed: bool

    def to_record(self):
        return {"max_ratio_l2": self.max_ratio_l2, "max_ratio_h": self.max_ratio_h, "passed": self.passed}


def contraction_check(state, samples, times):
    """Largest ||S(t)f|| / ||f|| over samples and times; PASS is judged in L^2 only."""
    ratio_l2, ratio_h = 0.0, 0.0
    for f in samples:
        nl, nh = l2_norm(f), h_norm(f)
        for t in times:
            g = evolve(state, f, t)
            ratio_l2 = max(ratio_l2, l2_norm(g) / nl)
            ratio_h = max(ratio_h, h_norm(g) / nh)
    if ratio_h > 1.0:
        logger.info("H^2 ratio %.6f exceeds 1 at this truncation", ratio_h)
    return ContractionReport(ratio_l2, ratio_h, bool(ratio_l2 <= 1.0 + CONTRACTION_SLACK))


def annihilator_probe(eigenvalues, evaluators, kernel, t_ladder, rng):
    """|<sum_n a_n exp(-t lambda_n) psi_n, h>| relative to sum |a_n psi_n(z_1)|.

    With h a kernel difference at a collision pair the pairing vanishes for
    every t although ||h|| > 0, so the expansion never approaches h.
    """
    a = rng.standard_normal(len(evaluators)) + 1j * rng.standard_normal(len(evaluators))
    points = np.asarray(kernel.points, dtype=complex)
    logs = np.array([f.log_values(points) for f in evaluators])
    offset = float(np.max(logs.real))
    values = np.exp(logs - offset)
    scale = float(np.sum(np.abs(a) * np.abs(values[:, 0])))
    norm = float(np.sqrt(kernel.norm_sq()))
    rows = []
    for t in t_ladder:
        weights = a * np.exp(-t * np.asarray(eigenvalues))
        pairing = abs(np.sum(weights * (values @ np.conj(np.asarray(kernel.weights)))))
        rows.append({"t": float(t), "pairing": pairing / scale, "h_norm": norm})
    return rows
