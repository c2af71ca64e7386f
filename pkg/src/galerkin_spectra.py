"""Fourier-Galerkin spectra in the exponential bases of L^2_per and H^2."""
import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg
from scipy.optimize import lsq_linear

from src.errors import EigenSolverError, NumericalError, ValidationError
from src.hardy_core import HardyFunction, evaluate, l2_norm
from src.operator_model import apply, coefficient_space_matrix, strip_grid

logger = logging.getLogger(__name__)

HERMITIAN_RTOL = 1e-12
CLUSTER_RTOL = 1e-7
GROWTH_SLACK = 0.10
GROWTH_GRID = (64, 9)


class Basis(str, Enum):
    L2 = "L2"
    H2 = "H2"


@dataclass(frozen=True, eq=False)
class GalerkinMatrix:
    matrix: np.ndarray
    basis: Basis
    operator: object
    n_trunc: int

    @property
    def size(self):
        return self.matrix.shape[0]

    @property
    def value_count(self):
        return self.operator.size


@dataclass(frozen=True, eq=False)
class SpectralPair:
    index: int
    value: complex
    eigenfunction: HardyFunction
    multiplicity: int
    residual: float
    trusted: bool

    def to_row(self):
        return {
            "index": self.index,
            "re_lambda": self.value.real,
            "im_lambda": self.value.imag,
            "multiplicity": self.multiplicity,
            "residual": self.residual,
            "trusted": int(self.trusted),
        }


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Kept eigenpairs sorted by real part (ties by imaginary part).

    Eigenfunctions have unit L^2 norm with the largest coefficient real positive.
    """

    pairs: tuple
    basis: Basis
    n_trunc: int
    matrix_size: int
    normalization: str = "l2-unit, leading coefficient real positive"

    @property
    def eigenvalues(self):
        return np.array([p.value for p in self.pairs])

    @property
    def eigenfunctions(self):
        return [p.eigenfunction for p in self.pairs]

    def trusted_pairs(self):
        return [p for p in self.pairs if p.trusted]

    def to_rows(self):
        return [p.to_row() for p in self.pairs]


def h2_scaling(domain, n_trunc, value_count):
    """sqrt(cosh(2nT)) repeated per component, in Galerkin index order."""
    return np.repeat(np.sqrt(domain.weights(n_trunc)), value_count)


def assemble(L, basis=Basis.L2, n_trunc=16):
    """Galerkin matrix of L on |n| <= N; the H^2 basis is e^{inz}/sqrt(cosh 2nT)."""
    basis = Basis(basis)
    matrix = coefficient_space_matrix(L, n_trunc)
    if basis is Basis.H2:
        scale = h2_scaling(L.domain, n_trunc, L.size)
        matrix = scale[:, None] * matrix / scale[None, :]
    return GalerkinMatrix(matrix, basis, L, n_trunc)


def _eigensystem(matrix, basis):
    off_diagonal = matrix - np.diag(np.diag(matrix))
    if not np.any(off_diagonal):
        return np.diag(matrix).copy(), np.eye(matrix.shape[0], dtype=complex), True
    scale = np.linalg.norm(matrix, "fro")
    if basis is Basis.L2 and np.linalg.norm(matrix - matrix.conj().T, "fro") <= HERMITIAN_RTOL * scale:
        values, vectors = scipy.linalg.eigh(0.5 * (matrix + matrix.conj().T))
        return values.astype(complex), vectors.astype(complex), True
    try:
        values, vectors = scipy.linalg.eig(matrix)
    except np.linalg.LinAlgError as e:
        raise EigenSolverError(f"dense eigensolver did not converge: {e}")
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise EigenSolverError(f"eigensolver returned non-finite eigenvalues at indices {bad.tolist()}")
    return values, vectors, False


def _clusters(values):
    """Groups consecutive sorted values within CLUSTER_RTOL relative gap."""
    groups = []
    for k, value in enumerate(values):
        if groups and abs(value - values[groups[-1][0]]) <= CLUSTER_RTOL * max(1.0, abs(value)):
            groups[-1].append(k)
        else:
            groups.append([k])
    return groups


def _normalized(vector):
    vector = vector / np.linalg.norm(vector)
    lead = vector[np.argmax(np.abs(vector))]
    return vector * (np.conj(lead) / abs(lead))


def spectrum(M, keep=None):
    """Dense eigendecomposition; keeps the `keep` smallest-|lambda| pairs.

    Only the lower half of the computed spectrum is trusted: edge eigenvalues
    of the truncated matrix do not approximate the operator.
    """
    size = M.size
    keep = size // 2 if keep is None else int(keep)
    if keep < 1 or keep > size:
        raise ValidationError(f"keep must lie in [1, {size}], got {keep}")
    if keep > size // 2:
        logger.warning("Keeping %d of %d eigenpairs; those beyond %d are flagged untrusted", keep, size, size // 2)

    values, vectors, orthonormal = _eigensystem(M.matrix, M.basis)
    by_modulus = np.argsort(np.abs(values), kind="stable")
    rank = np.empty(size, dtype=int)
    rank[by_modulus] = np.arange(size)
    chosen = by_modulus[:keep]
    order = np.lexsort((values[chosen].imag, np.round(values[chosen].real, 8)))
    chosen = chosen[order]
    values, vectors = values[chosen], vectors[:, chosen]

    if M.basis is Basis.H2:
        vectors = vectors / h2_scaling(M.operator.domain, M.n_trunc, M.value_count)[:, None]

    L = M.operator
    pairs = []
    for group in _clusters(values):
        block = vectors[:, group]
        if len(group) > 1 or not orthonormal:
            block, _ = np.linalg.qr(block)
        for col, k in enumerate(group):
            coeffs = _normalized(block[:, col]).reshape(2 * M.n_trunc + 1, M.value_count).T
            psi = HardyFunction(coeffs, L.domain)
            value = complex(values[k])
            residual = l2_norm(apply(L, psi) - value * psi)
            trusted = bool(rank[chosen[k]] < size // 2)
            pairs.append(SpectralPair(k, value, psi, len(group), residual, trusted))
    return SpectralDecomposition(tuple(pairs), M.basis, M.n_trunc, size)


def cross_basis_agreement(L, n_trunc, keep):
    """Max difference of kept eigenvalues computed in the L^2 and H^2 bases."""
    left = spectrum(assemble(L, Basis.L2, n_trunc), keep).eigenvalues
    right = spectrum(assemble(L, Basis.H2, n_trunc), keep).eigenvalues
    return float(np.max(np.abs(left - right)))


# --- eigenvalue comparisons ---

@dataclass(frozen=True)
class WeylReport:
    beta1_sq: float
    beta2_sq: float
    count: int
    passed: bool

    def to_record(self):
        return {"beta1_sq": self.beta1_sq, "beta2_sq": self.beta2_sq, "count": self.count, "passed": self.passed}


def weyl_bounds(decomp, max_index=None):
    """min and max of lambda_m / m^2 over trusted m >= 1, eigenvalues indexed from m = 0."""
    values = np.sort(np.array([p.value.real for p in decomp.trusted_pairs()]))
    if np.any(np.abs([p.value.imag for p in decomp.trusted_pairs()]) > 1e-8):
        logger.warning("Weyl ratios requested for an operator with non-real eigenvalues; using real parts")
    m = np.arange(len(values))
    mask = m >= 1
    if max_index is not None:
        mask &= m <= max_index
    if not np.any(mask):
        raise ValidationError("need at least two trusted eigenvalues for Weyl ratios")
    ratios = values[mask] / m[mask] ** 2
    beta1, beta2 = float(ratios.min()), float(ratios.max())
    passed = bool(np.isfinite(beta1) and np.isfinite(beta2) and beta1 > 0 and beta2 > 0)
    return WeylReport(beta1, beta2, int(mask.sum()), passed)


@dataclass(frozen=True)
class GrowthReport:
    """Least-squares line log C1 + C2 sqrt|lambda| through log max|psi_n|.

    envelope_c1 raises the fitted line until it covers every sample; the
    semigroup decay envelope and tail bound use it.
    """

    c1: float
    c2: float
    max_excess: float
    passed: bool
    sqrt_lambda: np.ndarray
    log_max_norm: np.ndarray
    envelope_c1: float = None

    def to_record(self):
        return {"c1": self.c1, "c2": self.c2, "envelope_c1": self.envelope_c1, "max_excess": self.max_excess,
                "passed": self.passed, "samples": int(len(self.sqrt_lambda))}


def eigenfunction_maxima(decomp, z_grid=None):
    """max over the grid of the Euclidean norm of each eigenfunction."""
    pairs = decomp.pairs
    if not pairs:
        return np.zeros(0)
    domain = pairs[0].eigenfunction.domain
    z = strip_grid(domain, GROWTH_GRID) if z_grid is None else np.asarray(z_grid, dtype=complex)
    maxima = []
    for p in pairs:
        values = np.asarray(evaluate(p.eigenfunction, z, boundary_trace=True))
        if p.eigenfunction.value_count > 1:
            norms = np.sqrt(np.sum(np.abs(values) ** 2, axis=0))
        else:
            norms = np.abs(values)
        maxima.append(norms.max())
    return np.asarray(maxima)


def growth_fit(decomp, z_grid=None, slack=GROWTH_SLACK, pairs=None):
    """Least-squares fit of log max|psi_n| against sqrt|lambda_n| with C2 >= 0.

    PASS iff no sample exceeds the fitted envelope by more than the slack factor.
    """
    if pairs is not None:
        decomp = SpectralDecomposition(tuple(pairs), decomp.basis, decomp.n_trunc, decomp.matrix_size)
    x = np.sqrt(np.abs(decomp.eigenvalues))
    y = np.log(eigenfunction_maxima(decomp, z_grid))
    if len(x) == 0:
        raise ValidationError("growth fit needs at least one eigenpair")
    if len(x) == 1:
        a, b = float(y[0]), 0.0
    else:
        result = lsq_linear(np.column_stack([np.ones_like(x), x]), y, bounds=([-np.inf, 0.0], [np.inf, np.inf]),
                            method="bvls")
        if not result.success:
            raise NumericalError(f"growth fit failed: {result.message}")
        a, b = map(float, result.x)
    excess = y - (a + b * x)
    max_excess = float(excess.max())
    passed = bool(max_excess <= np.log1p(slack))
    if not passed:
        worst = int(np.argmax(excess))
        logger.warning("Eigenfunction %d exceeds the growth envelope by a factor %.3g", worst, np.exp(max_excess))
    return GrowthReport(float(np.exp(a)), b, max_excess, passed, x, y, float(np.exp(a + max(max_excess, 0.0))))
