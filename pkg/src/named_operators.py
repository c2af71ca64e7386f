"""Bundled operators and conformal families, built by name from config blocks."""
from src.completeness_lab import build_map, exp_cos_family, exp_cos_truncation, first_order_operator, similarity_operator
from src.errors import ValidationError
from src.hardy_core import HardyFunction, StripDomain
from src.operator_model import CoefficientMatrix, OperatorForm, PeriodicOperator


def minus_d2(domain, size=1, shift=0.0):
    """-D^2 + shift on K copies."""
    coeffs = (
        CoefficientMatrix.identity(size, domain, scale=shift) if shift else None,
        None,
        CoefficientMatrix.identity(size, domain, scale=-1.0),
    )
    return PeriodicOperator(2, OperatorForm.STANDARD, coeffs, "-D^2" + (f" + {shift:g}" if shift else ""))


def mathieu(domain, q=1.0, shift=1.0):
    """-D^2 + 2q cos(2z) + shift."""
    potential = HardyFunction.from_modes({-2: q, 0: shift, 2: q}, domain)
    coeffs = (CoefficientMatrix.scalar(potential), None, CoefficientMatrix.identity(1, domain, scale=-1.0))
    return PeriodicOperator(2, OperatorForm.STANDARD, coeffs, f"Mathieu q={q:g}")


def similarity_cos(domain):
    """D - i cos z, similar to D through e^{i sin z}."""
    phi = HardyFunction.from_modes({-1: 0.5j, 1: -0.5j}, domain)
    return similarity_operator(phi)


def sin_phase(domain):
    """phi(z) = sin z."""
    return HardyFunction.from_modes({-1: 0.5j, 1: -0.5j}, domain)


def exp_cos_operator(a, domain, n_trunc=None):
    """C1 exp(a cos z) D."""
    n_trunc = exp_cos_truncation(a, domain.T) if n_trunc is None else n_trunc
    p, _ = exp_cos_family(a, domain, n_trunc)
    return first_order_operator(p)


def exp_cos_map(a, T_max, n_trunc=None):
    """Conformal map of the exp-cos family on |Im z| <= T_max with the exact inverse series."""
    domain = StripDomain(T_max)
    n_trunc = exp_cos_truncation(a, T_max) if n_trunc is None else n_trunc
    p, inverse = exp_cos_family(a, domain, n_trunc)
    return build_map(p, inverse=inverse)


OPERATORS = {
    "minus_d2": lambda domain, **kw: minus_d2(domain, **kw),
    "mathieu": lambda domain, **kw: mathieu(domain, **kw),
    "similarity_cos": lambda domain, **kw: similarity_cos(domain),
    "exp_cos": lambda domain, **kw: exp_cos_operator(kw.get("a", 2.0), domain, kw.get("n_trunc")),
}


def named_operator(name, domain, **params):
    try:
        factory = OPERATORS[name]
    except KeyError:
        raise ValidationError(f"unknown operator {name!r}; choose one of {sorted(OPERATORS)}")
    return factory(domain, **params)


def operator_from_block(block, domain=None):
    """Operator config block: either {"named": name, ...params} or the explicit coefficient schema."""
    try:
        if "named" in block:
            params = {k: v for k, v in block.items() if k not in ("named", "T")}
            domain = domain or StripDomain(block.get("T", 1.0))
            return named_operator(block["named"], domain, **params)
        return PeriodicOperator.from_config(block)
    except (TypeError, ValueError, KeyError, IndexError) as e:
        raise ValidationError(f"bad operator block: {e}")


def first_order_p1(domain):
    """p = 1: D with eigenvalues in."""
    return first_order_operator(HardyFunction.constant(1.0, domain))
