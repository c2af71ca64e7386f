"""Order <= 2 periodic differential operators with K x K matrix coefficients.

STANDARD form:   A2 D^2 + A1 D + A0
DIVERGENCE form: -D P2 D + P1 D + P0
with D = d/dz. Coefficients are finite Fourier series on a shared strip.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from src.errors import ConfigurationError, DomainViolationError, ValidationError
from src.hardy_core import (
    BOUNDARY_RTOL,
    HardyFunction,
    StripDomain,
    convolve_coefficients,
    l2_norm,
)

logger = logging.getLogger(__name__)

DEFAULT_GRID = (64, 33)
REGULARITY_FLOOR = 1e-8
MAX_MATRIX_SIZE = 4096
NEWTON_STEPS = 40


class OperatorForm(str, Enum):
    STANDARD = "standard"
    DIVERGENCE = "divergence"


def symbol_power(modes, k):
    """(in)^k by repeated multiplication (keeps 0^0 = 1 exact)."""
    out = np.ones(len(modes), dtype=complex)
    for _ in range(k):
        out = out * (1j * np.asarray(modes))
    return out


@dataclass(frozen=True, eq=False)
class CoefficientMatrix:
    """K x K grid of truncated Fourier series; coeffs[i, j, n + N] = c_n of entry (i, j)."""

    coeffs: np.ndarray
    domain: StripDomain

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.ndim != 3 or c.shape[0] != c.shape[1] or c.shape[2] % 2 != 1:
            raise ValidationError(f"coefficient matrix must have shape (K, K, 2N+1), got {c.shape}")
        self.domain.check_truncation((c.shape[2] - 1) // 2)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def size(self):
        return self.coeffs.shape[0]

    @property
    def n_trunc(self):
        return (self.coeffs.shape[2] - 1) // 2

    @property
    def modes(self):
        return StripDomain.modes(self.n_trunc)

    @classmethod
    def zeros(cls, size, domain, n_trunc=0):
        return cls(np.zeros((size, size, 2 * n_trunc + 1), dtype=complex), domain)

    @classmethod
    def identity(cls, size, domain, scale=1.0):
        c = np.zeros((size, size, 1), dtype=complex)
        c[:, :, 0] = scale * np.eye(size)
        return cls(c, domain)

    @classmethod
    def scalar(cls, f, size=1):
        """f(z) * I_K from a scalar HardyFunction."""
        c = np.zeros((size, size, f.coeffs.shape[1]), dtype=complex)
        for i in range(size):
            c[i, i] = f.coeffs[0]
        return cls(c, f.domain)

    @classmethod
    def from_entries(cls, entries):
        """From a K x K nested list of scalar HardyFunctions (None means 0)."""
        size = len(entries)
        if size == 0 or any(len(row) != size for row in entries):
            raise ValidationError("coefficient entries must form a nonempty square grid")
        present = [f for row in entries for f in row if f is not None]
        if not present:
            raise ValidationError("coefficient grid has no entries to fix the domain")
        domain = present[0].domain
        n_trunc = max(f.n_trunc for f in present)
        c = np.zeros((size, size, 2 * n_trunc + 1), dtype=complex)
        for i, row in enumerate(entries):
            for j, f in enumerate(row):
                if f is None:
                    continue
                if f.domain != domain:
                    raise ValidationError(f"entry ({i}, {j}) lives on T={f.domain.T}, expected T={domain.T}")
                c[i, j] = f.pad(n_trunc).coeffs[0]
        return cls(c, domain)

    def entry(self, i, j):
        return HardyFunction(self.coeffs[i, j], self.domain)

    def pad(self, n_trunc):
        if n_trunc <= self.n_trunc:
            return self
        extra = n_trunc - self.n_trunc
        return CoefficientMatrix(np.pad(self.coeffs, ((0, 0), (0, 0), (extra, extra))), self.domain)

    def derivative(self):
        return CoefficientMatrix(self.coeffs * (1j * self.modes), self.domain)

    def scaled(self, c):
        return CoefficientMatrix(self.coeffs * complex(c), self.domain)

    def __add__(self, other):
        a, b = _aligned(self, other)
        return CoefficientMatrix(a + b, self.domain)

    def __sub__(self, other):
        a, b = _aligned(self, other)
        return CoefficientMatrix(a - b, self.domain)

    def __neg__(self):
        return CoefficientMatrix(-self.coeffs, self.domain)

    def is_zero(self):
        return not np.any(self.coeffs)

    def fourier_table(self, shifts):
        """Coefficient matrices at integer modes `shifts`; shape shifts.shape + (K, K)."""
        shifts = np.asarray(shifts)
        table = np.zeros(shifts.shape + (self.size, self.size), dtype=complex)
        inside = np.abs(shifts) <= self.n_trunc
        table[inside] = np.moveaxis(self.coeffs[:, :, shifts[inside] + self.n_trunc], -1, 0)
        return table

    def evaluate(self, z):
        """Matrix values at z (closed strip allowed); shape z.shape + (K, K)."""
        z_arr = np.asarray(z, dtype=complex)
        if np.any(np.abs(z_arr.imag) > self.domain.T * (1 + BOUNDARY_RTOL)):
            raise DomainViolationError(f"coefficient evaluated outside the closed strip |Im z| <= {self.domain.T}")
        phase = np.exp(1j * np.multiply.outer(z_arr, self.modes))
        flat = phase @ self.coeffs.reshape(self.size * self.size, -1).T
        return flat.reshape(z_arr.shape + (self.size, self.size))

    def to_config(self):
        return [
            [[[int(n), float(c.real), float(c.imag)] for n, c in zip(self.modes, self.coeffs[i, j]) if c != 0]
             for j in range(self.size)]
            for i in range(self.size)
        ]

    @classmethod
    def from_config(cls, grid, size, domain):
        if len(grid) != size or any(len(row) != size for row in grid):
            raise ValidationError(f"coefficient block must be a {size}x{size} grid of series")
        n_trunc = 0
        for row in grid:
            for series in row:
                for term in series:
                    n_trunc = max(n_trunc, abs(int(term[0])))
        c = np.zeros((size, size, 2 * n_trunc + 1), dtype=complex)
        for i, row in enumerate(grid):
            for j, series in enumerate(row):
                for term in series:
                    try:
                        n, re, im = int(term[0]), float(term[1]), float(term[2])
                    except (TypeError, ValueError, IndexError):
                        raise ValidationError(f"series term must be [n, re, im], got {term!r}")
                    c[i, j, n + n_trunc] += re + 1j * im
        return cls(c, domain)


def _aligned(a, b):
    if a.domain != b.domain:
        raise ValidationError(f"domain mismatch: T={a.domain.T} vs T={b.domain.T}")
    if a.size != b.size:
        raise ValidationError(f"dimension mismatch: K={a.size} vs K={b.size}")
    n_trunc = max(a.n_trunc, b.n_trunc)
    return a.pad(n_trunc).coeffs, b.pad(n_trunc).coeffs


@dataclass(frozen=True, eq=False)
class PeriodicOperator:
    """coefficients[k] multiplies the k-th derivative (P_k or A_k depending on form)."""

    order: int
    form: OperatorForm
    coefficients: tuple
    name: str = field(default="")

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ValidationError(f"operator order must be 1 or 2, got {self.order}")
        form = OperatorForm(self.form)
        coeffs = list(self.coefficients) + [None] * (self.order + 1 - len(self.coefficients))
        if len(coeffs) != self.order + 1:
            raise ValidationError(f"order {self.order} operator takes {self.order + 1} coefficients, got {len(coeffs)}")
        leading = coeffs[self.order]
        if leading is None:
            raise ValidationError("leading coefficient is required")
        for k, c in enumerate(coeffs):
            if c is None:
                coeffs[k] = CoefficientMatrix.zeros(leading.size, leading.domain)
            elif c.size != leading.size:
                raise ValidationError(f"coefficient {k} is {c.size}x{c.size}, leading is {leading.size}x{leading.size}")
            elif c.domain != leading.domain:
                raise ValidationError(f"coefficient {k} lives on T={c.domain.T}, leading on T={leading.domain.T}")
        object.__setattr__(self, "form", form)
        object.__setattr__(self, "coefficients", tuple(coeffs))

    @property
    def size(self):
        return self.coefficients[-1].size

    @property
    def domain(self):
        return self.coefficients[-1].domain

    @property
    def n_trunc(self):
        return max(c.n_trunc for c in self.coefficients)

    @property
    def leading(self):
        return self.coefficients[self.order]

    # --- form conversion ---
    def standard_coefficients(self):
        """(A0, A1[, A2]) of the equivalent STANDARD form."""
        if self.form is OperatorForm.STANDARD or self.order == 1:
            return self.coefficients
        p0, p1, p2 = self.coefficients
        return (p0, p1 - p2.derivative(), -p2)

    def to_standard(self):
        if self.form is OperatorForm.STANDARD:
            return self
        return PeriodicOperator(self.order, OperatorForm.STANDARD, self.standard_coefficients(), self.name)

    def to_divergence(self):
        if self.form is OperatorForm.DIVERGENCE:
            return self
        if self.order == 1:
            return PeriodicOperator(1, OperatorForm.DIVERGENCE, self.coefficients, self.name)
        a0, a1, a2 = self.coefficients
        return PeriodicOperator(2, OperatorForm.DIVERGENCE, (a0, a1 - a2.derivative(), -a2), self.name)

    def scaled(self, c):
        return PeriodicOperator(self.order, self.form, tuple(m.scaled(c) for m in self.coefficients), self.name)

    def shifted(self, mu):
        """L + mu I."""
        if mu == 0:
            return self
        shift = CoefficientMatrix.identity(self.size, self.domain, scale=mu)
        coeffs = (self.coefficients[0] + shift,) + self.coefficients[1:]
        return PeriodicOperator(self.order, self.form, coeffs, self.name)

    # --- serialization ---
    def to_config(self, n_trunc=None):
        labels = ("P0", "P1", "P2")
        return {
            "name": self.name,
            "K": self.size,
            "T": self.domain.T,
            "N": self.n_trunc if n_trunc is None else n_trunc,
            "form": self.form.value,
            "order": self.order,
            "coeffs": {labels[k]: c.to_config() for k, c in enumerate(self.coefficients)},
        }

    @classmethod
    def from_config(cls, config):
        try:
            size = int(config["K"])
            domain = StripDomain(config["T"])
            form = OperatorForm(config.get("form", "standard"))
            blocks = config["coeffs"]
        except KeyError as e:
            raise ValidationError(f"operator config is missing field {e}")
        except ValueError as e:
            raise ValidationError(f"bad operator config: {e}")
        order = int(config.get("order", 2 if "P2" in blocks else 1))
        coeffs = []
        for k in range(order + 1):
            label = f"P{k}"
            coeffs.append(CoefficientMatrix.from_config(blocks[label], size, domain) if label in blocks else None)
        return cls(order, form, tuple(coeffs), config.get("name", ""))


# --- application ---

def _matvec(matrix, f, n_out):
    """Coefficient matrix times vector function, truncated to n_out (with tail)."""
    rows, tails = [], []
    for i in range(matrix.size):
        acc = np.zeros(2 * n_out + 1, dtype=complex)
        tail_sq = 0.0
        for j in range(matrix.size):
            if not np.any(matrix.coeffs[i, j]):
                continue
            kept, tail = convolve_coefficients(matrix.coeffs[i, j], f.coeffs[j], matrix.n_trunc, f.n_trunc, n_out, f.domain)
            acc += kept
            tail_sq += tail**2
        rows.append(acc)
        tails.append(np.sqrt(tail_sq))
    return HardyFunction(np.vstack(rows), f.domain, float(np.sqrt(np.sum(np.square(tails)))))


def _derive(f, times):
    for _ in range(times):
        f = HardyFunction(f.coeffs * (1j * f.modes), f.domain)
    return f


def apply(L, f, n_out=None):
    """Lf by coefficient convolution.

    The default output truncation N_f + N_coeff keeps the product exact; a
    smaller n_out reports the discarded part in tail_norm.
    """
    if f.value_count != L.size:
        raise ValidationError(f"dimension mismatch: operator is {L.size}x{L.size}, function has K={f.value_count}")
    if f.domain != L.domain:
        raise ValidationError(f"domain mismatch: operator T={L.domain.T}, function T={f.domain.T}")
    n_out = f.n_trunc + L.n_trunc if n_out is None else n_out

    if L.form is OperatorForm.DIVERGENCE and L.order == 2:
        p0, p1, p2 = L.coefficients
        df = _derive(f, 1)
        inner = _matvec(p2, df, f.n_trunc + p2.n_trunc)
        result = -_derive(inner, 1).pad(n_out)
        result = result + _matvec(p1, df, n_out) + _matvec(p0, f, n_out)
    else:
        result = HardyFunction.zeros(f.domain, n_out, f.value_count)
        for k, matrix in enumerate(L.coefficients):
            result = result + _matvec(matrix, _derive(f, k), n_out)
    return result


# --- structural checks ---

@dataclass(frozen=True)
class RegularityReport:
    min_abs_det: float
    argmin: complex
    floor: float
    passed: bool

    def to_record(self):
        return {"check": "regularity", "min_abs_det": self.min_abs_det, "re_argmin": self.argmin.real,
                "im_argmin": self.argmin.imag, "floor": self.floor, "passed": self.passed}


@dataclass(frozen=True)
class SectorialityReport:
    c0: float
    argmin: complex
    real_axis_only: bool
    passed: bool

    def to_record(self):
        return {"check": "sectoriality", "c0": self.c0, "re_argmin": self.argmin.real,
                "im_argmin": self.argmin.imag, "real_axis_only": self.real_axis_only, "passed": self.passed}


@dataclass(frozen=True)
class SelfAdjointReport:
    defect: float
    min_rayleigh: float

    def to_record(self):
        return {"check": "selfadjoint", "defect": self.defect, "min_rayleigh": self.min_rayleigh}


def strip_grid(domain, grid=DEFAULT_GRID, real_axis_only=False):
    """Rectangular grid on the closed fundamental strip 0 <= Re z < 2pi, |Im z| <= T."""
    nx, ny = grid
    x = np.linspace(0.0, 2 * np.pi, nx, endpoint=False)
    y = np.zeros(1) if real_axis_only else np.linspace(-domain.T, domain.T, ny)
    return x[None, :] + 1j * y[:, None]


def _polish_det_minimum(matrix, z0, step_cap):
    """Damped Newton on det(matrix(z)) from z0, kept in the closed strip."""
    T = matrix.domain.T

    def det(z):
        return complex(np.linalg.det(matrix.evaluate(z)))

    best_z, best_val = z0, abs(det(z0))
    z = z0
    h = 1e-6
    for _ in range(NEWTON_STEPS):
        d0 = det(z)
        slope = (det(z + h) - det(z - h)) / (2 * h)
        if slope == 0 or not np.isfinite(slope):
            break
        step = -d0 / slope
        if abs(step) > step_cap:
            step *= step_cap / abs(step)
        z_new = complex(z.real + step.real, np.clip(z.imag + step.imag, -T, T))
        val = abs(det(z_new))
        if val < best_val:
            best_z, best_val = z_new, val
        if abs(z_new - z) < 1e-14:
            break
        z = z_new
    return best_z, best_val


def regularity_check(L, grid=DEFAULT_GRID, floor=REGULARITY_FLOOR, polish=True):
    """min |det leading(z)| over the closed strip; PASS iff above floor.

    Grid minima are refined by Newton on det so isolated zeros between grid
    points are still caught.
    """
    leading = L.leading
    if L.order == 1 and leading.size != 1:
        logger.warning("Regularity of a first-order system with matrix leading term is only sampled")
    z = strip_grid(L.domain, grid)
    dets = np.abs(np.linalg.det(leading.evaluate(z)))
    flat = np.argsort(dets, axis=None)[:4]
    best = [(float(dets.flat[k]), complex(z.flat[k])) for k in flat]
    if polish:
        spacing = 2 * np.pi / grid[0]
        for _, z0 in list(best):
            zp, vp = _polish_det_minimum(leading, z0, spacing)
            best.append((vp, zp))
    min_det, argmin = min(best, key=lambda item: item[0])
    passed = bool(min_det > floor)
    if not passed:
        logger.warning("Leading coefficient nearly singular: |det| = %.3e at z = %s", min_det, argmin)
    return RegularityReport(min_det, argmin, floor, passed)


def sectoriality_check(L, grid=DEFAULT_GRID, real_axis_only=False):
    """C0 = min over the grid of the smallest eigenvalue of Re P2(z) = (P2 + P2*)/2."""
    if L.order != 2:
        raise ValidationError("sectoriality check needs a second-order operator")
    p2 = L.to_divergence().leading
    z = strip_grid(L.domain, grid, real_axis_only)
    values = p2.evaluate(z)
    hermitian = 0.5 * (values + np.conj(np.swapaxes(values, -1, -2)))
    lowest = np.linalg.eigvalsh(hermitian)[..., 0]
    k = np.argmin(lowest)
    c0 = float(lowest.flat[k])
    return SectorialityReport(c0, complex(z.flat[k]), real_axis_only, bool(c0 > 0))


def coefficient_space_matrix(L, n_trunc):
    """L^2 Galerkin matrix: entry [(m,i),(n,j)] = sum_k A_k,ij^(m-n) (in)^k, index (m+N)K + i."""
    size = (2 * n_trunc + 1) * L.size
    if size > MAX_MATRIX_SIZE:
        raise ConfigurationError(f"Galerkin matrix size (2N+1)K = {size} exceeds cap {MAX_MATRIX_SIZE} (N={n_trunc})")
    modes = StripDomain.modes(n_trunc)
    shifts = modes[:, None] - modes[None, :]
    matrix = np.zeros((len(modes), L.size, len(modes), L.size), dtype=complex)
    for k, coeff in enumerate(L.standard_coefficients()):
        if coeff.is_zero():
            continue
        table = coeff.fourier_table(shifts)
        matrix += np.einsum("mnij,n->minj", table, symbol_power(modes, k))
    return matrix.reshape(size, size)


def selfadjoint_defect(L, n_trunc):
    """||M - M*|| / ||M|| for the L^2 Galerkin matrix, plus its smallest Rayleigh quotient."""
    matrix = coefficient_space_matrix(L, n_trunc)
    scale = np.linalg.norm(matrix, "fro")
    defect = float(np.linalg.norm(matrix - matrix.conj().T, "fro") / scale) if scale > 0 else 0.0
    hermitian = 0.5 * (matrix + matrix.conj().T)
    min_rayleigh = float(np.linalg.eigvalsh(hermitian)[0])
    return SelfAdjointReport(defect, min_rayleigh)


def size_comparison_ratios(L, n_trunc, samples, rng):
    """||(-D^2 + I) f||_L / ||L f||_L over random f; evidence that L is comparable in size to -D^2 + I."""
    ratios = []
    for _ in range(samples):
        f = HardyFunction.random(rng, L.domain, n_trunc, L.size)
        reference = HardyFunction(f.coeffs * (f.modes**2 + 1.0), f.domain)
        image = l2_norm(apply(L, f))
        ratios.append(l2_norm(reference) / image if image > 0 else np.inf)
    return np.asarray(ratios)
