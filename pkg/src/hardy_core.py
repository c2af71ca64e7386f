"""Truncated Fourier model of the periodic Hardy space H^2 on the strip |Im z| < T.

A function is stored by its coefficients c_n, n = -N..N, of
f(z) = sum_n c_n exp(inz). Vector valued functions (elements of the direct
sum of K copies of H^2) keep one coefficient row per component. The H^2
norm weights |c_n|^2 by cosh(2nT); the L^2_per norm is the plain l^2 sum.
"""
import logging
from dataclasses import dataclass

import numpy as np

from src.errors import ConfigurationError, DomainViolationError, ValidationError

logger = logging.getLogger(__name__)

# exp(700) is close to the largest double; 2NT beyond this overflows cosh(2NT)
COSH_EXPONENT_LIMIT = 700.0
BOUNDARY_RTOL = 1e-12


def stable_cosh(x):
    """cosh via symmetric averaging of exponentials."""
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        return 0.5 * (np.exp(x) + np.exp(-x))


@dataclass(frozen=True)
class StripDomain:
    """The strip {|Im z| < T}; the period is fixed at 2*pi."""

    half_height: float

    def __post_init__(self):
        try:
            height = float(self.half_height)
        except (TypeError, ValueError):
            raise ConfigurationError(f"strip half-height must be a real number, got {self.half_height!r}")
        if not np.isfinite(height) or height <= 0:
            raise ConfigurationError(f"strip half-height must be positive and finite, got {self.half_height!r}")
        object.__setattr__(self, "half_height", height)

    @property
    def T(self):
        return self.half_height

    def check_truncation(self, n_trunc):
        if n_trunc < 0:
            raise ConfigurationError(f"truncation order must be nonnegative, got {n_trunc}")
        if 2 * n_trunc * self.T > COSH_EXPONENT_LIMIT:
            n_bad = int(np.floor(COSH_EXPONENT_LIMIT / (2 * self.T))) + 1
            raise ConfigurationError(
                f"cosh(2nT) overflows at n={n_bad} (T={self.T}, N={n_trunc}); need 2NT <= {COSH_EXPONENT_LIMIT:g}"
            )

    @staticmethod
    def modes(n_trunc):
        return np.arange(-n_trunc, n_trunc + 1)

    def weights(self, n_trunc):
        """cosh(2nT) for n = -N..N."""
        self.check_truncation(n_trunc)
        return stable_cosh(2.0 * self.modes(n_trunc) * self.T)

    def contains(self, z, closed=False):
        tau = np.abs(np.imag(np.asarray(z, dtype=complex)))
        if closed:
            return tau <= self.T * (1 + BOUNDARY_RTOL)
        return tau < self.T


@dataclass(frozen=True, eq=False)
class HardyFunction:
    """Element of the direct sum of K copies of H^2, truncated at |n| <= N.

    coeffs has shape (K, 2N+1), column j holding mode n = j - N.
    tail_norm is the weighted norm discarded by the operation that produced
    this function (0 for exact constructions).
    """

    coeffs: np.ndarray
    domain: StripDomain
    tail_norm: float = 0.0

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.ndim == 1:
            c = c[None, :]
        if c.ndim != 2 or c.shape[1] % 2 != 1 or c.shape[0] < 1:
            raise ValidationError(f"coefficient array must have shape (K, 2N+1), got {np.shape(self.coeffs)}")
        self.domain.check_truncation((c.shape[1] - 1) // 2)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "tail_norm", float(self.tail_norm))

    # --- shape ---
    @property
    def n_trunc(self):
        return (self.coeffs.shape[1] - 1) // 2

    @property
    def value_count(self):
        return self.coeffs.shape[0]

    @property
    def modes(self):
        return StripDomain.modes(self.n_trunc)

    def coefficient(self, n, component=0):
        if abs(n) > self.n_trunc:
            return 0j
        return complex(self.coeffs[component, n + self.n_trunc])

    # --- constructors ---
    @classmethod
    def zeros(cls, domain, n_trunc, value_count=1):
        return cls(np.zeros((value_count, 2 * n_trunc + 1), dtype=complex), domain)

    @classmethod
    def constant(cls, value, domain, n_trunc=0):
        values = np.atleast_1d(np.asarray(value, dtype=complex))
        c = np.zeros((values.size, 2 * n_trunc + 1), dtype=complex)
        c[:, n_trunc] = values
        return cls(c, domain)

    @classmethod
    def exponential(cls, n, domain, n_trunc=None, amplitude=1.0):
        """amplitude * exp(inz)."""
        n_trunc = abs(n) if n_trunc is None else n_trunc
        if abs(n) > n_trunc:
            raise ValidationError(f"mode {n} exceeds truncation N={n_trunc}")
        c = np.zeros((1, 2 * n_trunc + 1), dtype=complex)
        c[0, n + n_trunc] = amplitude
        return cls(c, domain)

    @classmethod
    def from_modes(cls, modes, domain, n_trunc=None):
        """Scalar function from a {n: c_n} mapping."""
        if n_trunc is None:
            n_trunc = max((abs(int(n)) for n in modes), default=0)
        c = np.zeros((1, 2 * n_trunc + 1), dtype=complex)
        for n, value in modes.items():
            if abs(int(n)) > n_trunc:
                raise ValidationError(f"mode {n} exceeds truncation N={n_trunc}")
            c[0, int(n) + n_trunc] += value
        return cls(c, domain)

    @classmethod
    def random(cls, rng, domain, n_trunc, value_count=1, decay=0.0):
        """Complex Gaussian coefficients damped by exp(-decay*|n|)."""
        shape = (value_count, 2 * n_trunc + 1)
        c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        c *= np.exp(-decay * np.abs(StripDomain.modes(n_trunc)))
        return cls(c, domain)

    @classmethod
    def stack(cls, components):
        """Vector function from scalar components sharing a domain."""
        if not components:
            raise ValidationError("cannot stack an empty component list")
        domain = components[0].domain
        n_trunc = max(f.n_trunc for f in components)
        rows = []
        for f in components:
            if f.domain != domain:
                raise ValidationError("domain mismatch between components")
            rows.append(f.pad(n_trunc).coeffs)
        tail = float(np.sqrt(sum(f.tail_norm**2 for f in components)))
        return cls(np.vstack(rows), domain, tail)

    def components(self):
        return [HardyFunction(self.coeffs[k], self.domain) for k in range(self.value_count)]

    # --- truncation ---
    def pad(self, n_trunc):
        if n_trunc == self.n_trunc:
            return self
        if n_trunc < self.n_trunc:
            return self.truncate(n_trunc)
        extra = n_trunc - self.n_trunc
        c = np.pad(self.coeffs, ((0, 0), (extra, extra)))
        return HardyFunction(c, self.domain, self.tail_norm)

    def truncate(self, n_trunc):
        if n_trunc >= self.n_trunc:
            return self.pad(n_trunc)
        cut = self.n_trunc - n_trunc
        kept = self.coeffs[:, cut:-cut]
        dropped_modes = np.concatenate([self.modes[:cut], self.modes[-cut:]])
        dropped = np.concatenate([self.coeffs[:, :cut], self.coeffs[:, -cut:]], axis=1)
        tail = weighted_tail(dropped, dropped_modes, self.domain)
        return HardyFunction(kept, self.domain, np.hypot(self.tail_norm, tail))

    def with_domain(self, domain):
        return HardyFunction(self.coeffs, domain, self.tail_norm)

    # --- linear structure ---
    def __add__(self, other):
        a, b, _ = _aligned(self, other)
        return HardyFunction(a + b, self.domain, np.hypot(self.tail_norm, other.tail_norm))

    def __sub__(self, other):
        a, b, _ = _aligned(self, other)
        return HardyFunction(a - b, self.domain, np.hypot(self.tail_norm, other.tail_norm))

    def __mul__(self, scalar):
        if isinstance(scalar, HardyFunction):
            return product(self, scalar)
        return HardyFunction(self.coeffs * complex(scalar), self.domain, self.tail_norm * abs(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return HardyFunction(-self.coeffs, self.domain, self.tail_norm)

    # --- serialization ---
    def to_json(self):
        rows = [
            {"T": self.domain.T, "N": self.n_trunc, "coeffs": [[float(c.real), float(c.imag)] for c in row]}
            for row in self.coeffs
        ]
        return rows[0] if self.value_count == 1 else rows

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, list):
            return cls.stack([cls.from_json(item) for item in obj])
        try:
            domain = StripDomain(obj["T"])
            n_trunc = int(obj["N"])
            pairs = np.asarray(obj["coeffs"], dtype=float)
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"malformed HardyFunction record: {e}")
        if pairs.shape != (2 * n_trunc + 1, 2):
            raise ValidationError(f"expected {2 * n_trunc + 1} [re, im] pairs for N={n_trunc}, got shape {pairs.shape}")
        return cls(pairs[:, 0] + 1j * pairs[:, 1], domain)


@dataclass(frozen=True, eq=False)
class KernelElement:
    """Reproducing kernel g_w: <f, g_w>_H = f(w)."""

    base_point: complex
    function: HardyFunction


def weighted_tail(coeffs, modes, domain):
    """sqrt(sum |c_n|^2 cosh(2nT)) over the given (possibly out of range) modes."""
    coeffs = np.asarray(coeffs)
    if coeffs.size == 0:
        return 0.0
    power = np.abs(coeffs) ** 2
    weights = np.broadcast_to(stable_cosh(2.0 * np.asarray(modes) * domain.T), power.shape)
    with np.errstate(invalid="ignore", over="ignore"):
        terms = np.where(power > 0, power * weights, 0.0)
    return float(np.sqrt(np.sum(terms)))


def _aligned(f, g):
    if f.domain != g.domain:
        raise ValidationError(f"domain mismatch: T={f.domain.T} vs T={g.domain.T}")
    if f.value_count != g.value_count:
        raise ValidationError(f"value count mismatch: K={f.value_count} vs K={g.value_count}")
    n_trunc = max(f.n_trunc, g.n_trunc)
    return f.pad(n_trunc).coeffs, g.pad(n_trunc).coeffs, n_trunc


# --- norms and inner products ---

def h_norm(f):
    """sqrt(sum |c_n|^2 cosh(2nT)), summed over components."""
    w = f.domain.weights(f.n_trunc)
    return float(np.sqrt(np.sum(np.abs(f.coeffs) ** 2 * w)))


def h_inner(f, g):
    """<f, g>_H = sum c_n(f) conj(c_n(g)) cosh(2nT)."""
    a, b, n_trunc = _aligned(f, g)
    w = f.domain.weights(n_trunc)
    return complex(np.sum(a * np.conj(b) * w))


def l2_norm(f):
    return float(np.sqrt(np.sum(np.abs(f.coeffs) ** 2)))


def l2_inner(f, g):
    """<f, g>_L = (1/2pi) int g* f dx, i.e. the plain coefficient sum."""
    a, b, _ = _aligned(f, g)
    return complex(np.sum(a * np.conj(b)))


# --- evaluation ---

def evaluate(f, z, boundary_trace=False):
    """Fourier sum of f at z; scalar functions return values shaped like z,
    vector functions prepend a component axis.

    Points exactly on |Im z| = T are accepted (boundary traces) and logged,
    since the pointwise bound degenerates there.
    """
    z_arr = np.asarray(z, dtype=complex)
    tau = np.abs(z_arr.imag)
    T = f.domain.T
    if np.any(tau > T * (1 + BOUNDARY_RTOL)):
        worst = z_arr.ravel()[np.argmax(tau.ravel())]
        raise DomainViolationError(f"point {worst} lies outside the closed strip |Im z| <= {T}")
    if not boundary_trace and np.any(tau >= T * (1 - BOUNDARY_RTOL)):
        logger.warning("Evaluating on the strip boundary |Im z| = %g; pointwise bound does not apply there", T)
    phase = np.exp(1j * np.multiply.outer(z_arr, f.modes))
    values = np.moveaxis(phase @ f.coeffs.T, -1, 0)
    if f.value_count == 1:
        values = values[0]
        return complex(values) if values.ndim == 0 else values
    return values


def pointwise_bound(f, z):
    """2 ||f||_H (1 - exp(2(|tau| - T)))^(-1/2)."""
    tau = np.abs(np.imag(np.asarray(z, dtype=complex)))
    gap = 1.0 - np.exp(2.0 * (tau - f.domain.T))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(gap > 0, 2.0 * h_norm(f) / np.sqrt(np.maximum(gap, 0.0)), np.inf)


def boundary_traces(f, nodes=None):
    """Samples of f on Im z = +T and Im z = -T at x_j = 2*pi*j/nodes."""
    nodes = 4 * f.n_trunc + 4 if nodes is None else nodes
    x = 2 * np.pi * np.arange(nodes) / nodes
    T = f.domain.T
    return evaluate(f, x + 1j * T, boundary_trace=True), evaluate(f, x - 1j * T, boundary_trace=True)


def boundary_inner(f, g, nodes=None):
    """Trapezoid evaluation of (1/4pi) int [f g* (x+iT) + f g* (x-iT)] dx."""
    if f.domain != g.domain:
        raise ValidationError(f"domain mismatch: T={f.domain.T} vs T={g.domain.T}")
    nodes = 4 * max(f.n_trunc, g.n_trunc) + 4 if nodes is None else nodes
    f_top, f_bottom = boundary_traces(f, nodes)
    g_top, g_bottom = boundary_traces(g, nodes)
    total = np.sum(f_top * np.conj(g_top)) + np.sum(f_bottom * np.conj(g_bottom))
    return complex(0.5 * total / nodes)


# --- reproducing kernel ---

def eval_kernel(w, domain, n_trunc):
    """g_w with coefficients conj(exp(inw)) / cosh(2nT)."""
    w = complex(w)
    if not domain.contains(w):
        raise DomainViolationError(f"kernel base point {w} must lie in the open strip |Im w| < {domain.T}")
    n = StripDomain.modes(n_trunc)
    coeffs = np.conj(np.exp(1j * n * w)) / domain.weights(n_trunc)
    return KernelElement(w, HardyFunction(coeffs, domain))


def kernel_distance(v, w, domain, n_trunc):
    return h_norm(eval_kernel(v, domain, n_trunc).function - eval_kernel(w, domain, n_trunc).function)


def kernel_continuity_bound(v, w, domain):
    """4|v-w|^2 e^(tau-T) / (1 - e^(tau-T))^2 with tau = max(|Im v|, |Im w|)."""
    tau = max(abs(complex(v).imag), abs(complex(w).imag))
    s = np.exp(tau - domain.T)
    if s >= 1.0:
        return np.inf
    return float(4.0 * abs(complex(v) - complex(w)) ** 2 * s / (1.0 - s) ** 2)


# --- coefficient plumbing ---

def from_real_samples(samples, domain, n_trunc):
    """Center-indexed DFT of samples on x_j = 2*pi*j/M (M = sample count).

    A (K, M) array gives a K-vector function. The discarded DFT bins are
    reported as tail_norm.
    """
    s = np.asarray(samples, dtype=complex)
    if s.ndim == 1:
        s = s[None, :]
    count = s.shape[-1]
    if count < 2 * n_trunc + 2:
        raise ConfigurationError(f"need at least 2N+2 = {2 * n_trunc + 2} samples for N={n_trunc}, got {count}")
    spectrum = np.fft.fft(s, axis=-1) / count
    kept_bins = StripDomain.modes(n_trunc) % count
    coeffs = spectrum[:, kept_bins]
    unused = np.ones(count, dtype=bool)
    unused[kept_bins] = False
    bins = np.arange(count)
    freqs = np.where(bins <= count // 2, bins, bins - count)
    tail = weighted_tail(spectrum[:, unused], freqs[unused], domain)
    return HardyFunction(coeffs, domain, tail)


def derivative(f):
    """c_n -> in c_n (exact on truncated series)."""
    return HardyFunction(f.coeffs * (1j * f.modes), f.domain)


def convolve_coefficients(a, b, n_a, n_b, n_out, domain):
    """Coefficients of the product of two scalar series, cut back to |n| <= n_out.

    Returns (kept coefficients, weighted norm of the discarded part).
    """
    full = np.convolve(a, b)
    n_full = n_a + n_b
    modes = np.arange(-n_full, n_full + 1)
    if n_out >= n_full:
        pad = n_out - n_full
        return np.pad(full, (pad, pad)), 0.0
    cut = n_full - n_out
    dropped = np.concatenate([full[:cut], full[-cut:]])
    dropped_modes = np.concatenate([modes[:cut], modes[-cut:]])
    return full[cut:-cut], weighted_tail(dropped, dropped_modes, domain)


def product(f, g, n_out=None):
    """Pointwise product by coefficient convolution, truncated to n_out
    (default max(N_f, N_g)); a scalar factor broadcasts over components."""
    if f.domain != g.domain:
        raise ValidationError(f"domain mismatch: T={f.domain.T} vs T={g.domain.T}")
    if f.value_count != g.value_count and 1 not in (f.value_count, g.value_count):
        raise ValidationError(f"value count mismatch: K={f.value_count} vs K={g.value_count}")
    n_out = max(f.n_trunc, g.n_trunc) if n_out is None else n_out
    count = max(f.value_count, g.value_count)
    rows, tails = [], []
    for k in range(count):
        a = f.coeffs[k if f.value_count > 1 else 0]
        b = g.coeffs[k if g.value_count > 1 else 0]
        kept, tail = convolve_coefficients(a, b, f.n_trunc, g.n_trunc, n_out, f.domain)
        rows.append(kept)
        tails.append(tail)
    return HardyFunction(np.vstack(rows), f.domain, float(np.sqrt(np.sum(np.square(tails)))))
