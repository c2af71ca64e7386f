"""Completeness diagnostics for eigenfunction families on the strip.

First-order operators p(z) D have eigenfunctions exp(in w(z)) with
w(z) = C1 int_0^z ds / p(s). When w is not injective on one period of the
strip, kernel differences g_{z1} - g_{z2} annihilate every eigenfunction and
the eigenfunctions cannot span H^2.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.linalg import solve_triangular
from scipy.spatial import cKDTree
from scipy.special import iv

from src.errors import DomainViolationError, NumericalError, ValidationError
from src.galerkin_spectra import Basis, assemble, spectrum
from src.hardy_core import (
    BOUNDARY_RTOL,
    COSH_EXPONENT_LIMIT,
    HardyFunction,
    StripDomain,
    evaluate,
    from_real_samples,
    h_inner,
    h_norm,
    l2_inner,
    l2_norm,
    stable_cosh,
)
from src.monodromy_engine import periodic_resolvent
from src.operator_model import CoefficientMatrix, OperatorForm, PeriodicOperator, strip_grid

logger = logging.getLogger(__name__)

SEARCH_GRID = (256, 64)
POLISH_TOL = 1e-10
MIN_SEPARATION = 0.05
MAX_SEEDS = 40
NEIGHBOURS = 16
NEWTON_STEPS = 50
WITNESS_MODES = 50
GRAM_DROP_RTOL = 1e-10
QUADRATURE_NODES = 8192
MAP_TAIL_RTOL = 1e-12
KERNEL_TAIL = 40.0


# --- conformal change of variables ---

def exp_cos_family(a, domain, n_trunc):
    """p(z) = C1 exp(a cos z) with C1 = (1/2pi) int exp(-a cos x) dx = I_0(a).

    Returns (p, Fourier series of 1/p); both use modified Bessel coefficients.
    """
    n = StripDomain.modes(n_trunc)
    bessel = iv(np.abs(n), a)
    c1 = iv(0, a)
    p = HardyFunction(c1 * bessel, domain)
    inverse = HardyFunction((-1.0) ** np.abs(n) * bessel / c1, domain)
    return p, inverse


def exp_cos_truncation(a, T, tol=1e-17):
    """Smallest N with I_N(a) exp(N T) / I_0(a) below tol (map series converged on |Im z| <= T)."""
    limit = int(COSH_EXPONENT_LIMIT / (2 * T))
    for n in range(1, limit + 1):
        with np.errstate(divide="ignore"):
            if np.log(iv(n, a)) + n * T - np.log(iv(0, a)) < np.log(tol):
                return n
    return limit


@dataclass(frozen=True, eq=False)
class ConformalMap:
    """w(z) = scale * int_0^z r(s) ds where r = sum b_n e^{inz} is the series of 1/p1.

    Evaluated termwise: scale * [b_0 z + sum_{n != 0} b_n (e^{inz} - 1)/(in)].
    """

    inverse: HardyFunction
    scale: float
    p1: object = None

    @property
    def domain(self):
        return self.inverse.domain

    def _check(self, z):
        z = np.asarray(z, dtype=complex)
        if np.any(np.abs(z.imag) > self.domain.T * (1 + BOUNDARY_RTOL)):
            raise DomainViolationError(f"map evaluated outside |Im z| <= {self.domain.T}")
        return z

    def __call__(self, z):
        z = self._check(z)
        b = self.inverse.coeffs[0]
        n = self.inverse.modes
        nonzero = n != 0
        terms = (np.exp(1j * np.multiply.outer(z, n[nonzero])) - 1.0) @ (b[nonzero] / (1j * n[nonzero]))
        return self.scale * (b[self.inverse.n_trunc] * z + terms)

    def derivative(self, z):
        z = self._check(z)
        return self.scale * (np.exp(1j * np.multiply.outer(z, self.inverse.modes)) @ self.inverse.coeffs[0])

    def reciprocal(self, z):
        """1/p1(z) from the inverse series."""
        return self.derivative(z) / self.scale

    def periodicity_defect(self, points):
        """max |w(z + 2pi) - w(z) - 2pi| over the points."""
        points = self._check(points)
        return float(np.max(np.abs(self(points + 2 * np.pi) - self(points) - 2 * np.pi * self.scale * self.inverse.coefficient(0))))

    def integrate_along_segment(self, z1, z2):
        """scale * (z2 - z1) int_0^1 r(z1 + t (z2 - z1)) dt by adaptive quadrature."""
        z1, z2 = complex(z1), complex(z2)
        dz = z2 - z1

        def r(t):
            s = z1 + t * dz
            if self.p1 is not None:
                value = complex(evaluate(self.p1, s, boundary_trace=True))
                if abs(value) < 1e-300:
                    raise NumericalError(f"p1 vanishes on the path at z = {s}")
                return 1.0 / value
            return complex(self.reciprocal(s))

        re, _ = quad(lambda t: r(t).real, 0.0, 1.0, limit=200, epsabs=1e-13, epsrel=1e-12)
        im, _ = quad(lambda t: r(t).imag, 0.0, 1.0, limit=200, epsabs=1e-13, epsrel=1e-12)
        return self.scale * dz * complex(re, im)

    def quadrature_agreement(self, probes):
        """max |w(z) - segment quadrature from 0 to z|."""
        return max(abs(complex(self(z)) - self.integrate_along_segment(0.0, z)) for z in probes)

    def injectivity_certificate(self, T, grid=(128, 33)):
        """min Re(1/p1) over the closed strip |Im z| <= T; positive means w is injective there."""
        z = strip_grid(StripDomain(T), grid)
        values = np.real(self.reciprocal(z)) * np.sign(self.scale)
        k = np.argmin(values)
        return InjectivityReport(float(T), float(values.flat[k]), complex(z.flat[k]), bool(values.flat[k] > 0))


@dataclass(frozen=True)
class InjectivityReport:
    T: float
    min_real_part: float
    argmin: complex
    passed: bool


def build_map(p1, inverse=None, n_map=None, samples=None, normalize=True):
    """Conformal map of p1 D.

    Without a precomputed inverse series, 1/p1 is sampled on the real axis and
    re-expanded at truncation n_map; its analytic continuation then defines w.
    """
    domain = p1.domain
    if inverse is None:
        grid = strip_grid(domain)
        values = np.abs(evaluate(p1, grid, boundary_trace=True))
        k = np.argmin(values)
        if values.flat[k] <= 1e-12 * max(values.max(), 1e-300):
            raise NumericalError(f"p1 vanishes near z = {complex(grid.flat[k])}")
        n_map = 2 * p1.n_trunc + 16 if n_map is None else n_map
        samples = 4 * n_map + 4 if samples is None else samples
        x = 2 * np.pi * np.arange(samples) / samples
        inverse = from_real_samples(1.0 / evaluate(p1, x), domain, n_map)
        norm = h_norm(inverse)
        if inverse.tail_norm > MAP_TAIL_RTOL * norm:
            logger.warning("Map series truncation insufficient: tail %.2e vs norm %.2e", inverse.tail_norm, norm)
    mean = inverse.coefficient(0)
    if normalize:
        if abs(mean) == 0:
            raise NumericalError("1/p1 has zero mean; the normalization constant is undefined")
        scale = 1.0 / mean
        if abs(scale.imag) > 1e-12 * abs(scale):
            logger.warning("Normalization constant %s is not real", scale)
        scale = scale.real if abs(scale.imag) <= 1e-12 * abs(scale) else scale
    else:
        scale = 1.0
    return ConformalMap(inverse, scale, p1)


def liouville_map(p2, n_map=None, samples=None):
    """w = int_0^z ds / sqrt(p2(s)) (principal root sampled on the real axis)."""
    domain = p2.domain
    n_map = 2 * p2.n_trunc + 16 if n_map is None else n_map
    samples = 4 * n_map + 4 if samples is None else samples
    x = 2 * np.pi * np.arange(samples) / samples
    values = np.asarray(evaluate(p2, x), dtype=complex)
    if np.any(np.abs(values) == 0):
        raise NumericalError("p2 vanishes on the real axis")
    inverse = from_real_samples(1.0 / np.sqrt(values), domain, n_map)
    return ConformalMap(inverse, 1.0, None)


def first_order_operator(p):
    """p(z) D as a scalar first-order operator."""
    leading = CoefficientMatrix.scalar(p)
    zero = CoefficientMatrix.zeros(1, p.domain)
    return PeriodicOperator(1, OperatorForm.STANDARD, (zero, leading), "p(z)D")


# --- collisions ---

@dataclass(frozen=True)
class CollisionWitness:
    z1: complex
    z2: complex
    shift: int
    residual: float
    separation: float

    def to_row(self):
        return {"re_z1": self.z1.real, "im_z1": self.z1.imag, "re_z2": self.z2.real,
                "im_z2": self.z2.imag, "polish_residual": self.residual}


@dataclass(frozen=True)
class CollisionResult:
    witness: object
    T: float
    grid: tuple
    seeds_tried: int


def _wrapped(dz):
    """Displacement reduced mod 2pi in the real direction."""
    return complex((dz.real + np.pi) % (2 * np.pi) - np.pi, dz.imag)


def collision_search(cmap, T_search, grid=SEARCH_GRID, polish_tol=POLISH_TOL, min_separation=None,
                     max_seeds=MAX_SEEDS):
    """Looks for z1 != z2 (mod 2pi) in the open strip with w(z1) = w(z2) mod 2pi.

    Grid images are placed on the cylinder (cos Re w, sin Re w, Im w); close
    image pairs from distant preimages seed a Newton solve of
    w(z2) = w(z1) + 2pi k with z1 held fixed.
    """
    if T_search > cmap.domain.T * (1 + BOUNDARY_RTOL):
        raise DomainViolationError(f"search strip T={T_search} exceeds the map's strip T={cmap.domain.T}")
    nx, ny = grid
    x = np.linspace(0.0, 2 * np.pi, nx, endpoint=False)
    y = np.linspace(-T_search, T_search, ny + 2)[1:-1]
    z = (x[None, :] + 1j * y[:, None]).ravel()
    h = max(x[1] - x[0], y[1] - y[0] if ny > 1 else 0.0)
    min_sep = max(MIN_SEPARATION, 3 * h) if min_separation is None else min_separation

    w = cmap(z)
    speed = np.abs(cmap.derivative(z))
    points = np.column_stack([np.cos(w.real), np.sin(w.real), w.imag])
    tree = cKDTree(points)
    k = min(NEIGHBOURS + 1, len(z))
    dist, idx = tree.query(points, k=k)
    radius = np.minimum(2.0 * speed * h, 0.5)

    seeds = []
    for i in range(len(z)):
        for d, j in zip(dist[i, 1:], idx[i, 1:]):
            if j <= i or d > radius[i]:
                continue
            if abs(_wrapped(z[j] - z[i])) < min_sep:
                continue
            seeds.append((d / max(speed[i] * h, 1e-300), i, int(j)))
    seeds.sort()

    tried = 0
    for _, i, j in seeds[:max_seeds]:
        tried += 1
        witness = _polish_collision(cmap, z[i], z[j], T_search, polish_tol, min_sep)
        if witness is not None:
            return CollisionResult(witness, T_search, tuple(grid), tried)
    return CollisionResult(None, T_search, tuple(grid), tried)


def _polish_collision(cmap, z1, z2, T, tol, min_sep):
    w1 = complex(cmap(z1))
    shift = int(np.round((complex(cmap(z2)) - w1).real / (2 * np.pi)))
    target = w1 + 2 * np.pi * shift
    for _ in range(NEWTON_STEPS):
        g = complex(cmap(z2)) - target
        if abs(g) < tol:
            break
        slope = complex(cmap.derivative(z2))
        if slope == 0:
            return None
        z2 = z2 - g / slope
        if abs(z2.imag) >= T:
            return None
    else:
        return None
    # translate z2 into the fundamental domain; w moves by 2pi per period
    periods = int(np.floor(z2.real / (2 * np.pi)))
    z2 = z2 - 2 * np.pi * periods
    shift = shift - periods * int(np.round(cmap.scale * cmap.inverse.coefficient(0).real))
    residual = abs(complex(cmap(z2)) - w1 - 2 * np.pi * shift)
    separation = abs(_wrapped(z2 - z1))
    if residual >= tol or separation < min_sep:
        return None
    return CollisionWitness(complex(z1), complex(z2), shift, float(residual), float(separation))


def witness_defect(cmap, witness, n_max=WITNESS_MODES, relative=True):
    """max over |n| <= n_max of |e^{in w1} - e^{in w2}|, relative to |e^{in w1}| by default."""
    w1, w2 = complex(cmap(witness.z1)), complex(cmap(witness.z2))
    n = np.arange(-n_max, n_max + 1)
    if relative:
        return float(np.max(np.abs(np.exp(1j * n * (w2 - w1)) - 1.0)))
    return float(np.max(np.abs(np.exp(1j * n * w1) - np.exp(1j * n * w2))))


@dataclass(frozen=True)
class ThresholdResult:
    t_star: object
    rows: list
    witness: object
    # rungs where the injectivity certificate holds yet a collision was found
    certificate_misses: int = 0


def threshold_scan(cmap, T_min, T_max, steps, grid=SEARCH_GRID, polish_tol=POLISH_TOL, refine=6, label=None):
    """Smallest ladder T with a collision, refined by bisection against the last clean rung."""
    ladder = np.linspace(T_min, T_max, steps)
    if steps < 1 or np.any(np.diff(ladder) <= 0) and steps > 1:
        raise ValidationError(f"T ladder must be increasing, got [{T_min}, {T_max}] in {steps} steps")
    rows = []
    misses = 0

    def search_at(T):
        nonlocal misses
        result = collision_search(cmap, T, grid, polish_tol)
        cert = cmap.injectivity_certificate(T)
        if cert.passed and result.witness is not None:
            misses += 1
            logger.warning("Collision found at T=%.4f although Re(1/p1) > 0 there", T)
        row = {"a": label, "T": float(T), "collision_found": int(result.witness is not None),
               "re_z1": "", "im_z1": "", "re_z2": "", "im_z2": "", "polish_residual": "",
               "certificate_min": cert.min_real_part}
        if result.witness is not None:
            row.update(result.witness.to_row())
        rows.append(row)
        return result.witness

    last_clean, first_hit, witness = None, None, None
    for T in ladder:
        found = search_at(T)
        if found is not None:
            first_hit, witness = float(T), found
            break
        last_clean = float(T)
    if first_hit is None:
        logger.info("No collision on the ladder [%g, %g] (%d rungs, grid %s)", T_min, T_max, steps, grid)
        return ThresholdResult(None, rows, None, misses)
    if last_clean is not None:
        lo, hi = last_clean, first_hit
        for _ in range(refine):
            mid = 0.5 * (lo + hi)
            found = search_at(mid)
            if found is not None:
                hi, witness = mid, found
            else:
                lo = mid
        first_hit = hi
    return ThresholdResult(first_hit, rows, witness, misses)


# --- eigenfunction families ---

@dataclass(frozen=True, eq=False)
class PointwiseFunction:
    """Function known through log f(z); sampled values are rescaled by a common log offset."""

    log_evaluator: object
    domain: StripDomain
    label: str = ""

    def log_values(self, z):
        return self.log_evaluator(np.asarray(z, dtype=complex))


@dataclass(frozen=True, eq=False)
class KernelCombination:
    """sum_k c_k g_{z_k}; inner products with it follow from the reproducing property."""

    points: tuple
    weights: tuple
    domain: StripDomain

    def __post_init__(self):
        for z in self.points:
            if not self.domain.contains(z):
                raise DomainViolationError(f"kernel point {z} is not in the open strip |Im z| < {self.domain.T}")

    def kernel_truncation(self):
        tau = max(abs(complex(z).imag) for z in self.points)
        gap = 2 * (self.domain.T - tau)
        limit = int(COSH_EXPONENT_LIMIT / (2 * self.domain.T))
        return min(limit, int(np.ceil(KERNEL_TAIL / gap)) + 1)

    def kernel_value(self, w, z):
        """g_w(z) = sum_n e^{inz} conj(e^{inw}) / cosh(2nT)."""
        n = StripDomain.modes(self.kernel_truncation())
        return complex(np.sum(np.exp(1j * n * z) * np.conj(np.exp(1j * n * w)) / stable_cosh(2.0 * n * self.domain.T)))

    def norm_sq(self):
        total = 0j
        for zk, ck in zip(self.points, self.weights):
            for zl, cl in zip(self.points, self.weights):
                total += cl * np.conj(ck) * self.kernel_value(zl, zk)
        return float(total.real)

    def inner_with(self, values):
        """<psi, h> given psi's values at the kernel points."""
        return complex(np.sum(np.asarray(values) * np.conj(np.asarray(self.weights))))


def kernel_difference(witness, domain):
    return KernelCombination((witness.z1, witness.z2), (1.0, -1.0), domain)


def first_order_eigenfunctions(cmap, n_range, domain, n_trunc):
    """exp(in w(z)) re-expanded from 4N real-axis samples."""
    samples = max(4 * n_trunc, 2 * n_trunc + 2)
    x = 2 * np.pi * np.arange(samples) / samples
    w = cmap(x)
    return [from_real_samples(np.exp(1j * n * w), domain, n_trunc) for n in n_range]


def first_order_eigenfunction_evaluators(cmap, n_range, domain=None):
    """Pointwise exp(in w(z)) through log values i n w(z)."""
    domain = cmap.domain if domain is None else domain
    return [PointwiseFunction(lambda z, n=n: 1j * n * cmap(z), domain, f"exp({n}i w)") for n in n_range]


def generalized_eigenfunction_defect(cmap, lam, probes=(0.0, 1.0, 0.5j)):
    """max |y2(z + 2pi) - y2(z)| for y2 = w e^{lam w}; nonzero at every eigenvalue lam = in."""
    probes = np.asarray(probes, dtype=complex)
    w0, w1 = cmap(probes), cmap(probes + 2 * np.pi)
    return float(np.max(np.abs(w1 * np.exp(lam * w1) - w0 * np.exp(lam * w0))))


# --- span residuals ---

@dataclass(frozen=True)
class SpanResidualTable:
    residuals: np.ndarray  # (J, M)
    effective_rank: np.ndarray  # (M,)
    test_norms: np.ndarray

    def to_rows(self):
        rows = []
        for m in range(self.residuals.shape[1]):
            row = {"M": m + 1, "rank": int(self.effective_rank[m])}
            row.update({f"r_{j + 1}": float(self.residuals[j, m]) for j in range(self.residuals.shape[0])})
            rows.append(row)
        return rows


class _BoundarySampler:
    """Scaled boundary samples of every function on a shared node set."""

    def __init__(self, domain, nodes):
        x = 2 * np.pi * np.arange(nodes) / nodes
        self.domain = domain
        self.z = np.concatenate([x + 1j * domain.T, x - 1j * domain.T])
        self.nodes = nodes

    def samples(self, f):
        if isinstance(f, HardyFunction):
            values = np.asarray(evaluate(f, self.z, boundary_trace=True))
            if f.value_count == 1:
                values = values[None, :]
            return values, 0.0
        if isinstance(f, PointwiseFunction):
            logs = np.atleast_2d(f.log_values(self.z))
            offset = float(np.max(logs.real))
            return np.exp(logs - offset), offset
        raise ValidationError(f"cannot sample {type(f).__name__} on the boundary")

    def inner(self, a, b):
        """(1/4pi) int over both lines of a conj(b), i.e. half the mean over all nodes."""
        return complex(0.5 * np.sum(a * np.conj(b)) / self.nodes)


def _pointwise(f, z, offset):
    if isinstance(f, HardyFunction):
        values = np.asarray(evaluate(f, np.asarray(z, dtype=complex)))
        return values if f.value_count == 1 else values.T
    return np.exp(f.log_values(np.asarray(z, dtype=complex)) - offset)


def span_residuals(eigfns, tests, nodes=QUADRATURE_NODES):
    """H^2 distances r_j(M) from each test to span{psi_1..psi_M}, M = 1..len(eigfns).

    Gram-form Gram-Schmidt: each new psi contributes an orthonormal direction
    unless its residual norm^2 falls below GRAM_DROP_RTOL * G_mm, so every
    r_j is nonincreasing in M.
    """
    if not eigfns:
        raise ValidationError("span residuals need at least one eigenfunction")
    domain = eigfns[0].domain
    if any(f.domain != domain for f in list(eigfns) + list(tests)):
        raise ValidationError("eigenfunctions and tests must share one strip")

    exact = all(isinstance(f, HardyFunction) for f in eigfns)
    sampler = None if exact else _BoundarySampler(domain, nodes)
    scaled = [sampler.samples(f) for f in eigfns] if sampler else None

    def gram(m, p):
        if exact:
            return h_inner(eigfns[m], eigfns[p])
        return sampler.inner(scaled[m][0], scaled[p][0])

    def test_inner(t, m):
        """<t, psi_m> for the scaled psi_m."""
        if isinstance(t, KernelCombination):
            offset = 0.0 if exact else scaled[m][1]
            values = _pointwise(eigfns[m], np.asarray(t.points), offset)
            return np.conj(t.inner_with(values))
        if exact:
            return h_inner(t, eigfns[m])
        return sampler.inner(sampler.samples(t)[0], scaled[m][0])

    def test_norm_sq(t):
        return t.norm_sq() if isinstance(t, KernelCombination) else h_norm(t) ** 2

    J, M = len(tests), len(eigfns)
    norms_sq = np.array([test_norm_sq(t) for t in tests])
    remaining = norms_sq.astype(float).copy()
    residuals = np.zeros((J, M))
    ranks = np.zeros(M, dtype=int)
    accepted = []
    factor = np.zeros((M, M), dtype=complex)  # rows: psi_m in the orthonormal basis
    projections = np.zeros((J, M), dtype=complex)  # <t_j, e_q>
    for m in range(M):
        g_mm = gram(m, m).real
        g = np.array([gram(m, p) for p in accepted], dtype=complex)
        if accepted:
            lower = np.conj(factor[np.ix_(accepted, range(len(accepted)))])
            row = solve_triangular(lower, g, lower=True)
        else:
            row = np.zeros(0, dtype=complex)
        d = g_mm - float(np.sum(np.abs(row) ** 2))
        if d > GRAM_DROP_RTOL * g_mm:
            q = len(accepted)
            factor[m, :q] = row
            factor[m, q] = np.sqrt(d)
            for j, t in enumerate(tests):
                b = test_inner(t, m)
                beta = (b - np.sum(np.conj(row) * projections[j, :q])) / np.sqrt(d)
                projections[j, q] = beta
                remaining[j] = max(remaining[j] - abs(beta) ** 2, 0.0)
            accepted.append(m)
        else:
            logger.debug("Eigenfunction %d is numerically dependent on its predecessors; dropped", m)
        residuals[:, m] = np.sqrt(remaining)
        ranks[m] = len(accepted)
    return SpanResidualTable(residuals, ranks, np.sqrt(norms_sq))


def kernel_annihilation(eigfns, h):
    """max_n |<psi_n, h>| / ||h||, with pointwise psi rescaled by their boundary maximum."""
    sampler = _BoundarySampler(h.domain, QUADRATURE_NODES)
    worst = 0.0
    for f in eigfns:
        offset = 0.0 if isinstance(f, HardyFunction) else sampler.samples(f)[1]
        values = _pointwise(f, np.asarray(h.points), offset)
        worst = max(worst, abs(h.inner_with(values)))
    return worst / np.sqrt(h.norm_sq())


# --- similarity example ---

@dataclass(frozen=True)
class SimilarityReport:
    max_sine: float
    max_eigenvalue_error: float


def similarity_operator(phi):
    """D - i phi'(z)."""
    domain = phi.domain
    dphi = HardyFunction(phi.coeffs * (1j * phi.modes), domain)
    return PeriodicOperator(
        1,
        OperatorForm.STANDARD,
        (CoefficientMatrix.scalar(-1j * dphi), CoefficientMatrix.identity(1, domain)),
        "D - i phi'",
    )


def similarity_example_check(phi, n_range, n_trunc):
    """Galerkin eigenfunctions of D - i phi' against e^{i phi(z)} e^{inz} (L^2 subspace angle)."""
    L = similarity_operator(phi)
    decomp = spectrum(assemble(L, Basis.L2, n_trunc), 2 * n_trunc + 1)
    samples = 8 * n_trunc + 8
    x = 2 * np.pi * np.arange(samples) / samples
    gauge = np.exp(1j * np.asarray(evaluate(phi, x)))
    max_sine, max_error = 0.0, 0.0
    for n in n_range:
        k = int(np.argmin(np.abs(decomp.eigenvalues - 1j * n)))
        pair = decomp.pairs[k]
        reference = from_real_samples(gauge * np.exp(1j * n * x), phi.domain, n_trunc)
        overlap = abs(l2_inner(pair.eigenfunction, reference)) / (l2_norm(pair.eigenfunction) * l2_norm(reference))
        max_sine = max(max_sine, float(np.sqrt(max(0.0, 1.0 - min(overlap, 1.0) ** 2))))
        max_error = max(max_error, abs(pair.value - 1j * n))
    return SimilarityReport(max_sine, float(max_error))


# --- first-order resolvent ---

def first_order_resolvent_formula(cmap, lam, f, x):
    """(p D - lambda)^{-1} f at real points x via the variation-of-constants formula.

    With W = w / scale, Y(z) = exp(-lambda W(z)) and
    R f = Y^{-1} [C + int_0^x Y f / p ds], C = (e^{-lambda W(2pi)} - 1)^{-1} int_0^{2pi} Y f / p ds.
    """
    x = np.asarray(x, dtype=float)
    lam = complex(lam)

    def W(s):
        return complex(cmap(s)) / cmap.scale

    def integrand(s):
        return np.exp(-lam * W(s)) * complex(evaluate(f, s)) * complex(cmap.reciprocal(s))

    def integral(a, b):
        re, _ = quad(lambda s: integrand(s).real, a, b, limit=200, epsabs=1e-14, epsrel=1e-13)
        im, _ = quad(lambda s: integrand(s).imag, a, b, limit=200, epsabs=1e-14, epsrel=1e-13)
        return complex(re, im)

    full = integral(0.0, 2 * np.pi)
    factor = np.exp(-lam * W(2 * np.pi)) - 1.0
    if abs(factor) < 1e-14:
        raise NumericalError(f"lambda = {lam} is an eigenvalue of p D")
    constant = full / factor
    order = np.argsort(x)
    values = np.empty(len(x), dtype=complex)
    running, previous = 0j, 0.0
    for k in order:
        running += integral(previous, float(x[k]))
        previous = float(x[k])
        values[k] = np.exp(lam * W(x[k])) * (constant + running)
    return values


def first_order_resolvent_check(cmap, L, lams, f, x):
    """Closed-form first-order resolvent against periodic_resolvent at real points x.

    difference is the max pointwise gap relative to max(1, max|closed form|).
    """
    rows = []
    for k, lam in enumerate(lams):
        lam = complex(lam)
        closed = first_order_resolvent_formula(cmap, lam, f, x)
        numerical = np.asarray(evaluate(periodic_resolvent(L, lam, f).solution, np.asarray(x, dtype=float)))
        scale = max(1.0, float(np.abs(closed).max()))
        rows.append({"sample": k, "re_lambda": lam.real, "im_lambda": lam.imag,
                     "difference": float(np.abs(closed - numerical).max() / scale)})
    return rows
