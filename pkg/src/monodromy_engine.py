"""Floquet monodromy: first-order reduction, transfer matrices along complex
segments, and argument-principle location of periodic eigenvalues.

LY = lambda Y is rewritten as u' = A(z, lambda) u with u = (Y, Y') for second
order operators and u = Y for first order ones. lambda is a periodic
eigenvalue iff d(lambda) = det(I - U(2pi, lambda)) vanishes.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.integrate import quad, solve_ivp

from src.errors import (
    BranchCutError,
    BudgetExhaustedError,
    IntegrationError,
    NearSingularError,
    NumericalError,
    ValidationError,
)
from src.hardy_core import evaluate, from_real_samples, l2_norm
from src.operator_model import CoefficientMatrix, apply
from src.utils import parallel_map

logger = logging.getLogger(__name__)

INTEGRATOR_METHOD = "DOP853"
INTEGRATOR_RTOL = 1e-10
INTEGRATOR_ATOL = 1e-12
# the resolvent residual differentiates the sampled solution twice
RESOLVENT_RTOL = 1e-12
RESOLVENT_ATOL = 1e-14
GRONWALL_SLACK = 1e-6
SINGULAR_COND = 1e14
SQRT_RTOL = 1e-10
CUT_TOL = 1e-14

EDGE_SEGMENTS = 8
MAX_ARG_STEP = np.pi / 4
MIN_SEGMENT_RTOL = 1e-9
BOUNDARY_FLOOR = 1e-9
DILATION = 0.01
DILATION_RETRIES = 3
CELL_DIAMETER = 1.0
MAX_DEPTH = 24
VERTICAL_SPLITS = (0.5, 0.4142, 0.5858, 0.3)
HORIZONTAL_SPLITS = (0.4142, 0.5858, 0.3)
POLISH_STEPS = 30
POLISH_ROUNDS = 3
DOUBLE_ROOT_TOL = 1e-8
DERIVATIVE_STEP = 1e-4
NEAR_SINGULAR_COND = 1e12
# gaps below this (relative to ||U||) are within integration error of zero
NEAR_SINGULAR_GAP = 1e-8


# --- matrix square roots ---

def _matrix_at(A, z):
    if isinstance(A, CoefficientMatrix):
        return A.evaluate(z)
    return np.asarray(A, dtype=complex)


def _check_cut(matrix):
    eigs = np.linalg.eigvals(matrix)
    scale = max(1.0, float(np.max(np.abs(eigs))))
    on_cut = (np.abs(eigs.imag) <= CUT_TOL * scale) & (eigs.real <= 0)
    if np.any(on_cut):
        raise BranchCutError(f"spectrum {eigs[on_cut]} touches the square-root cut (-inf, 0]")
    return eigs


def analytic_sqrt(A2, z=None):
    """Principal square root of A2(z) (or of a plain matrix); S^2 = A2 to SQRT_RTOL."""
    matrix = _matrix_at(A2, z)
    _check_cut(matrix)
    root = np.asarray(scipy.linalg.sqrtm(matrix), dtype=complex)
    defect = np.linalg.norm(root @ root - matrix) / max(np.linalg.norm(matrix), 1e-300)
    if defect > SQRT_RTOL:
        raise NumericalError(f"matrix square root defect {defect:.2e} exceeds {SQRT_RTOL:g}")
    return root


def dunford_taylor_sqrt(matrix, nodes=128):
    """sqrt(A) = (2/pi) A int_0^inf (t^2 I + A)^{-1} dt.

    This is the Dunford-Taylor integral with its keyhole contour collapsed onto
    the cut; t = s tan(theta) with s = (|e_min| |e_max|)^(1/4) and Gauss-Legendre
    nodes in theta.
    """
    matrix = np.asarray(matrix, dtype=complex)
    eigs = _check_cut(matrix)
    moduli = np.abs(eigs)
    s = (moduli.min() * moduli.max()) ** 0.25
    theta, weights = np.polynomial.legendre.leggauss(nodes)
    theta = 0.25 * np.pi * (theta + 1.0)
    weights = 0.25 * np.pi * weights
    identity = np.eye(matrix.shape[0])
    total = np.zeros_like(matrix)
    for th, wt in zip(theta, weights):
        t = s * np.tan(th)
        dt = s / np.cos(th) ** 2
        total += wt * dt * np.linalg.inv(t * t * identity + matrix)
    return (2.0 / np.pi) * matrix @ total


def continue_sqrt_along_path(A2, path, jump_rtol=0.5):
    """Principal roots at successive path points, checked for branch continuity."""
    roots = []
    for z in path:
        root = analytic_sqrt(A2, z)
        if roots:
            prev = roots[-1]
            if np.linalg.norm(root - prev) > jump_rtol * max(np.linalg.norm(prev), 1e-300):
                raise BranchCutError(f"square root branch jumps near z = {z}; refine the path")
        roots.append(root)
    return roots


# --- first-order reduction ---

@dataclass(frozen=True, eq=False)
class FirstOrderSystem:
    """z -> A(z, lambda) for the reduced system of a periodic operator."""

    operator: object
    lam: complex
    coefficients: tuple = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "coefficients", self.operator.standard_coefficients())
        object.__setattr__(self, "lam", complex(self.lam))

    @property
    def order(self):
        return self.operator.order

    @property
    def value_count(self):
        return self.operator.size

    @property
    def state_size(self):
        return self.order * self.value_count

    def _leading_solve(self, z, rhs):
        lead = self.coefficients[self.order].evaluate(z)
        if np.linalg.cond(lead) > SINGULAR_COND:
            raise IntegrationError(f"leading coefficient singular on the path at z = {z}")
        return np.linalg.solve(lead, rhs)

    def matrix(self, z):
        K = self.value_count
        identity = np.eye(K)
        a0 = self.coefficients[0].evaluate(z)
        if self.order == 1:
            return self._leading_solve(z, self.lam * identity - a0)
        a1 = self.coefficients[1].evaluate(z)
        lower = self._leading_solve(z, np.hstack([-(a0 - self.lam * identity), -a1]))
        return np.block([[np.zeros((K, K)), identity], [lower]])

    def forcing(self, z, f_value):
        """Inhomogeneous term for (L - lambda) Y = f."""
        g = self._leading_solve(z, np.asarray(f_value, dtype=complex))
        if self.order == 1:
            return g
        return np.concatenate([np.zeros(self.value_count, dtype=complex), g])

    def trace(self, z):
        return complex(np.trace(self.matrix(z)))


@dataclass(frozen=True, eq=False)
class TransferMatrix:
    matrix: np.ndarray
    start: complex
    end: complex
    lam: complex
    wronskian_error: float
    gronwall_integral: float
    steps: int
    preconditioned: bool = False

    @property
    def log_norm(self):
        return float(np.log(np.linalg.norm(self.matrix, 2)))

    @property
    def within_gronwall(self):
        return self.log_norm <= self.gronwall_integral + GRONWALL_SLACK


def gronwall_integral(system, start, end):
    """int_0^1 ||A(z(s))||_2 |end - start| ds along the straight segment."""
    dz = end - start
    value, _ = quad(lambda s: np.linalg.norm(system.matrix(start + s * dz), 2), 0.0, 1.0, limit=200, epsrel=1e-8)
    return float(value * abs(dz))


def _trace_integral(system, start, end, nodes=64):
    x, w = np.polynomial.legendre.leggauss(nodes)
    s = 0.5 * (x + 1.0)
    dz = end - start
    return complex(0.5 * np.sum(w * np.array([system.trace(start + si * dz) for si in s])) * dz)


def _wronskian_error(matrix, trace_integral):
    sign, logabs = np.linalg.slogdet(matrix)
    phase = np.angle(sign * np.exp(-1j * trace_integral.imag))
    return float(np.hypot(logabs - trace_integral.real, phase))


def _solve(rhs, size, rtol, atol, t_eval=None, y0=None):
    y0 = np.eye(size, dtype=complex).ravel() if y0 is None else y0
    sol = solve_ivp(rhs, (0.0, 1.0), y0, method=INTEGRATOR_METHOD, rtol=rtol, atol=atol, t_eval=t_eval)
    if not sol.success:
        raise IntegrationError(f"transfer-matrix integration failed: {sol.message}")
    return sol


class _Preconditioner:
    """B(z) = [[I, I], [mu S^-1, -mu S^-1]] with S^2 = sigma A2, mu^2 = sigma lambda."""

    def __init__(self, system, start, end):
        lead = system.coefficients[2]
        path = [start + s * (end - start) for s in np.linspace(0.0, 1.0, 17)]
        for sigma in (1.0, -1.0):
            try:
                continue_sqrt_along_path(lead.scaled(sigma), path)
            except BranchCutError:
                continue
            self.sigma = sigma
            break
        else:
            raise BranchCutError("neither A2 nor -A2 has a square root branch along the path")
        self.lead = lead.scaled(self.sigma)
        self.lead_prime = self.lead.derivative()
        self.mu = np.sqrt(complex(self.sigma * system.lam))
        self.K = system.value_count

    def parts(self, z):
        S = analytic_sqrt(self.lead, z)
        S_inv = np.linalg.inv(S)
        S_prime = scipy.linalg.solve_sylvester(S, S, self.lead_prime.evaluate(z))
        S_inv_prime = -S_inv @ S_prime @ S_inv
        I, Z = np.eye(self.K), np.zeros((self.K, self.K))
        B = np.block([[I, I], [self.mu * S_inv, -self.mu * S_inv]])
        B_inv = 0.5 * np.block([[I, S / self.mu], [I, -S / self.mu]])
        B_prime = np.block([[Z, Z], [self.mu * S_inv_prime, -self.mu * S_inv_prime]])
        return B, B_inv, B_prime


def transfer_matrix(L, lam, end=2 * np.pi, start=0.0, preconditioned=False,
                    rtol=INTEGRATOR_RTOL, atol=INTEGRATOR_ATOL, diagnostics=True):
    """U(end, lambda) with U(start) = I along z(t) = start + t (end - start).

    With diagnostics the Wronskian identity det U = exp(int tr A) and the
    Gronwall integral are evaluated as well.
    """
    system = FirstOrderSystem(L, lam)
    start, end = complex(start), complex(end)
    dz = end - start
    size = system.state_size

    use_b = preconditioned and system.order == 2 and lam != 0
    if preconditioned and not use_b:
        logger.debug("Preconditioner skipped (order %d, lambda=%s)", system.order, lam)

    if use_b:
        pre = _Preconditioner(system, start, end)

        def rhs(t, y):
            z = start + t * dz
            B, B_inv, B_prime = pre.parts(z)
            W = y.reshape(size, size)
            return (dz * (B_inv @ (system.matrix(z) @ B - B_prime) @ W)).ravel()

        sol = _solve(rhs, size, rtol, atol)
        W_end = sol.y[:, -1].reshape(size, size)
        B_end, _, _ = pre.parts(end)
        _, B0_inv, _ = pre.parts(start)
        U = B_end @ W_end @ B0_inv
    else:
        def rhs(t, y):
            return (dz * (system.matrix(start + t * dz) @ y.reshape(size, size))).ravel()

        sol = _solve(rhs, size, rtol, atol)
        U = sol.y[:, -1].reshape(size, size)

    if not np.all(np.isfinite(U)):
        raise IntegrationError(f"transfer matrix overflowed at lambda = {lam}")
    tm = TransferMatrix(
        matrix=U,
        start=start,
        end=end,
        lam=complex(lam),
        wronskian_error=_wronskian_error(U, _trace_integral(system, start, end)) if diagnostics else np.nan,
        gronwall_integral=gronwall_integral(system, start, end) if diagnostics else np.inf,
        steps=int(sol.nfev),
        preconditioned=use_b,
    )
    if not tm.within_gronwall:
        logger.warning("log||U|| = %.6g exceeds the Gronwall integral %.6g at lambda = %s",
                       tm.log_norm, tm.gronwall_integral, lam)
    return tm


def floquet_determinant(L, lam):
    """d(lambda) = det(I - U(2pi, lambda))."""
    U = transfer_matrix(L, lam, diagnostics=False).matrix
    return complex(np.linalg.det(np.eye(U.shape[0]) - U))


# --- scans ---

@dataclass(frozen=True)
class GronwallScan:
    rows: list
    envelope_constant: float
    violations: int
    overflows: int = 0


def default_lambda_grid(max_modulus=1e4, radii=9, angles=8):
    r = np.logspace(0.0, np.log10(max_modulus), radii)
    phi = 2 * np.pi * np.arange(angles) / angles
    return (r[:, None] * np.exp(1j * phi[None, :])).ravel()


def gronwall_scan(L, lams, threads=1):
    """log||U(2pi, lambda)|| against the Gronwall integral and the sqrt|lambda| envelope.

    A lambda whose transfer matrix leaves the floating-point range is kept as
    an overflowed row with NaN norms.
    """

    def one(lam):
        row = {"re_lambda": float(np.real(lam)), "im_lambda": float(np.imag(lam))}
        try:
            tm = transfer_matrix(L, lam)
        except IntegrationError as e:
            logger.warning("Gronwall scan: %s", e)
            row.update(log_norm=np.nan, gronwall=np.nan, ratio=np.nan, wronskian_error=np.nan, overflowed=True)
            return row
        row.update(
            log_norm=tm.log_norm,
            gronwall=tm.gronwall_integral,
            ratio=tm.log_norm / (1.0 + np.sqrt(abs(lam))),
            wronskian_error=tm.wronskian_error,
            overflowed=False,
        )
        return row

    rows = parallel_map(one, list(lams), threads)
    finite = [r for r in rows if not r["overflowed"]]
    violations = sum(1 for r in finite if r["log_norm"] > r["gronwall"] + GRONWALL_SLACK)
    envelope = max((r["ratio"] for r in finite), default=0.0)
    return GronwallScan(rows, float(envelope), violations, len(rows) - len(finite))


def floquet_scan(L, rectangle, grid=(21, 9), cells=None, threads=1):
    """|d(lambda)| on a grid of the rectangle, tagged with the finest winding cell containing it."""
    re_min, re_max, im_min, im_max = _validated_rectangle(rectangle)
    re = np.linspace(re_min, re_max, grid[0])
    im = np.linspace(im_min, im_max, grid[1])
    lams = [complex(a, b) for b in im for a in re]
    values = parallel_map(lambda lam: floquet_determinant(L, lam), lams, threads)
    rows = []
    for lam, d in zip(lams, values):
        rows.append({
            "re_lambda": lam.real,
            "im_lambda": lam.imag,
            "abs_det": abs(d),
            "winding_cell_id": _containing_cell(cells or [], lam),
        })
    return rows


def _containing_cell(cells, lam):
    best, depth = "", -1
    for cell in cells:
        a, b, c, d = cell.rectangle
        if a <= lam.real <= b and c <= lam.imag <= d and cell.depth > depth:
            best, depth = cell.cell_id, cell.depth
    return best


# --- eigenvalue location ---

@dataclass(frozen=True)
class WindingCell:
    cell_id: str
    rectangle: tuple
    count: int
    depth: int


@dataclass(frozen=True)
class LocatedEigenvalue:
    value: complex
    multiplicity: int
    abs_det: float
    cell_id: str

    def to_row(self, index):
        return {
            "index": index,
            "re_lambda": self.value.real,
            "im_lambda": self.value.imag,
            "multiplicity": self.multiplicity,
            "residual": self.abs_det,
            "trusted": 1,
            "source": "monodromy",
        }


@dataclass(frozen=True)
class LocateResult:
    eigenvalues: list
    cells: list
    rectangle: tuple

    def expanded_values(self):
        """Eigenvalues repeated by multiplicity, sorted by (Re, Im)."""
        values = [e.value for e in self.eigenvalues for _ in range(e.multiplicity)]
        return np.array(sorted(values, key=lambda v: (round(v.real, 8), v.imag)))

    def to_rows(self):
        return [e.to_row(i) for i, e in enumerate(self.eigenvalues)]


class _BoundaryZero(Exception):
    pass


def _validated_rectangle(rectangle):
    try:
        re_min, re_max, im_min, im_max = (float(v) for v in rectangle)
    except (TypeError, ValueError):
        raise ValidationError(f"rectangle must be [re_min, re_max, im_min, im_max], got {rectangle!r}")
    if not (re_min < re_max and im_min < im_max):
        raise ValidationError(f"degenerate rectangle {rectangle!r}")
    return re_min, re_max, im_min, im_max


class _ArgumentPrincipleSearch:
    def __init__(self, L, tol, max_depth, threads):
        self.L = L
        self.tol = tol
        self.max_depth = max_depth
        self.threads = threads
        self.state_size = L.order * L.size
        self.cache = {}

    # d(lambda) with memoization; evaluation batches run on the thread pool
    def values(self, lams):
        missing = [lam for lam in dict.fromkeys(lams) if lam not in self.cache]
        for lam, d in zip(missing, parallel_map(lambda x: floquet_determinant(self.L, x), missing, self.threads)):
            self.cache[lam] = d
        return np.array([self.cache[lam] for lam in lams])

    def edge_phase(self, a, b):
        """Total change of arg d along the segment a -> b."""
        forward = (a.real, a.imag) <= (b.real, b.imag)
        p, q = (a, b) if forward else (b, a)
        length = abs(q - p)
        min_segment = MIN_SEGMENT_RTOL * (1.0 + max(abs(p), abs(q)))
        t = list(np.linspace(0.0, 1.0, EDGE_SEGMENTS + 1))
        points = [complex(p + ti * (q - p)) for ti in t]
        vals = list(self.values(points))
        scale = np.median(np.abs(vals))
        while True:
            refine = [k for k in range(len(t) - 1)
                      if abs(np.angle(vals[k + 1] / vals[k])) > MAX_ARG_STEP and (t[k + 1] - t[k]) * length > min_segment]
            if not refine:
                break
            mids = [0.5 * (t[k] + t[k + 1]) for k in refine]
            mid_vals = self.values([complex(p + m * (q - p)) for m in mids])
            for k, m, v in sorted(zip(refine, mids, mid_vals), reverse=True):
                t.insert(k + 1, m)
                vals.insert(k + 1, v)
        vals = np.asarray(vals)
        if np.min(np.abs(vals)) < BOUNDARY_FLOOR * max(scale, 1e-300):
            raise _BoundaryZero()
        phase = float(np.sum(np.angle(vals[1:] / vals[:-1])))
        return phase if forward else -phase

    def winding(self, rect):
        re_min, re_max, im_min, im_max = rect
        corners = [complex(re_min, im_min), complex(re_max, im_min), complex(re_max, im_max), complex(re_min, im_max)]
        total = sum(self.edge_phase(corners[k], corners[(k + 1) % 4]) for k in range(4))
        turns = total / (2 * np.pi)
        count = int(round(turns))
        if abs(turns - count) > 0.25:
            logger.warning("Winding number %.3f is far from an integer on cell %s", turns, rect)
        return count

    @staticmethod
    def split(rect, ratio):
        re_min, re_max, im_min, im_max = rect
        if re_max - re_min >= im_max - im_min:
            cut = re_min + ratio * (re_max - re_min)
            return (re_min, cut, im_min, im_max), (cut, re_max, im_min, im_max)
        cut = im_min + ratio * (im_max - im_min)
        return (re_min, re_max, im_min, cut), (re_min, re_max, cut, im_max)

    def children(self, cell):
        re_min, re_max, im_min, im_max = cell.rectangle
        ratios = VERTICAL_SPLITS if re_max - re_min >= im_max - im_min else HORIZONTAL_SPLITS
        for ratio in ratios:
            halves = self.split(cell.rectangle, ratio)
            try:
                counts = [self.winding(h) for h in halves]
            except _BoundaryZero:
                continue
            if sum(counts) != cell.count:
                logger.warning("Winding mismatch in cell %s: %d != %s", cell.cell_id, cell.count, counts)
            return [WindingCell(f"{cell.cell_id}.{k}", h, c, cell.depth + 1) for k, (h, c) in enumerate(zip(halves, counts))]
        raise BudgetExhaustedError(f"every split of cell {cell.cell_id} puts a zero on a cut line")

    # --- polishing ---
    def pencil(self, lam):
        """Eigenvalues delta of (I - U(lam)) v = delta dU/dlam v (finite ones)."""
        h = DERIVATIVE_STEP * (1.0 + abs(lam))
        U0, U_plus, U_minus = (transfer_matrix(self.L, x, diagnostics=False).matrix for x in (lam, lam + h, lam - h))
        dU = (U_plus - U_minus) / (2 * h)
        deltas = scipy.linalg.eig(np.eye(self.state_size) - U0, dU, right=False)
        deltas = deltas[np.isfinite(deltas)]
        return deltas[np.argsort(np.abs(deltas))]

    def newton(self, seed, reach):
        """Successive linear problems: lambda += smallest pencil eigenvalue."""
        lam = complex(seed)
        previous = np.inf
        for _ in range(POLISH_STEPS):
            deltas = self.pencil(lam)
            if deltas.size == 0:
                return None
            step = deltas[0]
            lam += step
            if abs(lam - seed) > reach:
                return None
            floor = self.tol * (1.0 + abs(lam))
            # steps that stop shrinking near the floor are integration noise
            if abs(step) <= floor or (abs(step) > 0.5 * previous and abs(step) <= 1e4 * floor):
                return lam
            previous = abs(step)
        return None

    def polish(self, cell):
        re_min, re_max, im_min, im_max = cell.rectangle
        center = complex(0.5 * (re_min + re_max), 0.5 * (im_min + im_max))
        diameter = abs(complex(re_max - re_min, im_max - im_min))
        pending = [center + d for d in self.pencil(center)[:cell.count]]
        roots = []
        for _ in range(POLISH_ROUNDS):
            for seed in pending:
                r = self.newton(seed, 4 * diameter)
                if r is None:
                    return None
                for root in roots:
                    if abs(root[0] - r) <= 2 * DOUBLE_ROOT_TOL * (1.0 + abs(r)):
                        root[1] += 1
                        break
                else:
                    roots.append([r, 1])
            pending = []
            for root in roots:
                deltas = self.pencil(root[0])
                small = int(np.sum(np.abs(deltas) <= DOUBLE_ROOT_TOL * (1.0 + abs(root[0]))))
                if small < root[1]:
                    extra = root[1] - max(small, 1)
                    root[1] = max(small, 1)
                    pending.extend(root[0] + d for d in deltas[max(small, 1):max(small, 1) + extra])
            if not pending:
                break
        if pending or sum(m for _, m in roots) != cell.count:
            return None
        pad = 1e-9 * (1.0 + diameter)
        for r, _ in roots:
            if not (re_min - pad <= r.real <= re_max + pad and im_min - pad <= r.imag <= im_max + pad):
                return None
        return [LocatedEigenvalue(r, m, abs(floquet_determinant(self.L, r)), cell.cell_id) for r, m in roots]

    def run(self, rectangle):
        rect = rectangle
        for attempt in range(DILATION_RETRIES + 1):
            try:
                count = self.winding(rect)
                break
            except _BoundaryZero:
                re_min, re_max, im_min, im_max = rect
                dx, dy = DILATION * (re_max - re_min), DILATION * (im_max - im_min)
                rect = (re_min - dx, re_max + dx, im_min - dy, im_max + dy)
                logger.info("Zero on the search boundary; dilating to %s", rect)
        else:
            raise BudgetExhaustedError(f"zero stays on the search boundary after {DILATION_RETRIES} dilations")

        queue = [WindingCell("0", rect, count, 0)]
        cells, found = [], []
        while queue:
            cell = queue.pop(0)
            cells.append(cell)
            if cell.count == 0:
                continue
            re_min, re_max, im_min, im_max = cell.rectangle
            diameter = abs(complex(re_max - re_min, im_max - im_min))
            if cell.count <= self.state_size and diameter <= CELL_DIAMETER:
                located = self.polish(cell)
                if located is not None:
                    found.extend(located)
                    continue
                logger.debug("Polish inconclusive on cell %s; subdividing", cell.cell_id)
            if cell.depth >= self.max_depth:
                raise BudgetExhaustedError(f"subdivision depth {self.max_depth} reached on cell {cell.cell_id}")
            queue.extend(self.children(cell))
        found.sort(key=lambda e: (round(e.value.real, 8), e.value.imag))
        return LocateResult(found, cells, rect)


def locate_eigenvalues(L, rectangle, tol=1e-10, max_depth=MAX_DEPTH, threads=1):
    """Zeros of d(lambda) in [re_min, re_max] x [im_min, im_max] with multiplicities."""
    rect = _validated_rectangle(rectangle)
    return _ArgumentPrincipleSearch(L, tol, max_depth, threads).run(rect)


# --- periodic resolvent ---

@dataclass(frozen=True, eq=False)
class ResolventResult:
    solution: object
    residual: float
    determinant: complex


def periodic_resolvent(L, lam, f, n_out=None, samples=None):
    """Periodic Y with (L - lambda) Y = f.

    V = U xi + V_p where V_p solves the forced system with V_p(0) = 0 and
    xi = (I - U(2pi))^{-1} V_p(2pi). Y is sampled on the real grid and
    re-expanded.
    """
    if f.value_count != L.size or f.domain != L.domain:
        raise ValidationError("right-hand side does not match the operator's size or strip")
    system = FirstOrderSystem(L, lam)
    size = system.state_size
    n_out = max(2 * f.n_trunc, 16) + 2 * L.n_trunc if n_out is None else n_out
    samples = 4 * n_out + 4 if samples is None else samples
    period = 2 * np.pi

    def rhs(t, y):
        z = t * period
        A = system.matrix(z)
        U = y[: size * size].reshape(size, size)
        V = y[size * size:]
        f_value = np.atleast_1d(evaluate(f, z))
        return period * np.concatenate([(A @ U).ravel(), A @ V + system.forcing(z, f_value)])

    y0 = np.concatenate([np.eye(size, dtype=complex).ravel(), np.zeros(size, dtype=complex)])
    t_eval = np.append(np.arange(samples) / samples, 1.0)
    sol = _solve(rhs, size, RESOLVENT_RTOL, RESOLVENT_ATOL, t_eval=t_eval, y0=y0)
    U_end = sol.y[: size * size, -1].reshape(size, size)
    Vp_end = sol.y[size * size:, -1]
    gap = np.eye(size) - U_end
    determinant = complex(np.linalg.det(gap))
    singular_values = np.linalg.svd(gap, compute_uv=False)
    smallest = singular_values[-1]
    if (smallest <= NEAR_SINGULAR_GAP * max(1.0, np.linalg.norm(U_end, 2))
            or singular_values[0] > NEAR_SINGULAR_COND * smallest):
        raise NearSingularError(f"lambda = {lam} is too close to an eigenvalue: |d(lambda)| = {abs(determinant):.3e}",
                                determinant=determinant)
    xi = np.linalg.solve(gap, Vp_end)

    values = np.empty((L.size, samples), dtype=complex)
    for j in range(samples):
        U_j = sol.y[: size * size, j].reshape(size, size)
        V_j = U_j @ xi + sol.y[size * size:, j]
        values[:, j] = V_j[: L.size]
    Y = from_real_samples(values, L.domain, n_out)
    residual = l2_norm(apply(L, Y) - complex(lam) * Y - f)
    return ResolventResult(Y, residual, determinant)
