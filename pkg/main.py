import argparse
import logging
import os
import sys
import time
from dataclasses import replace

import numpy as np

from src.completeness_lab import (
    first_order_eigenfunction_evaluators,
    first_order_resolvent_check,
    generalized_eigenfunction_defect,
    kernel_annihilation,
    kernel_difference,
    similarity_example_check,
    span_residuals,
    threshold_scan,
    witness_defect,
)
from src.config_loader import COMMANDS, DEFAULT_OUT_DIR, build_family_map, build_operator, load_run_config
from src.errors import NumericalError, SpectraError
from src.galerkin_spectra import Basis, assemble, growth_fit, spectrum, weyl_bounds
from src.hardy_core import (
    COSH_EXPONENT_LIMIT,
    HardyFunction,
    StripDomain,
    boundary_inner,
    eval_kernel,
    evaluate,
    h_inner,
    h_norm,
    kernel_continuity_bound,
    kernel_distance,
)
from src.monodromy_engine import (
    default_lambda_grid,
    floquet_scan,
    gronwall_scan,
    locate_eigenvalues,
    periodic_resolvent,
)
from src.named_operators import exp_cos_operator, sin_phase
from src.operator_model import regularity_check, selfadjoint_defect
from src.report_writer import write_csv, write_error, write_manifest
from src.semigroup_lab import (
    annihilator_probe,
    build_state,
    contraction_check,
    continuity_probe,
    decay_envelope,
    modal_weights,
    semigroup_defect,
)
from src.utils import config_hash, setup_logging

logger = logging.getLogger(__name__)

DEFAULT_CONFIGS = {
    "spectrum": "data/minus_d2.json",
    "monodromy": "data/mathieu.json",
    "crosscheck": "data/mathieu.json",
    "completeness": "data/exp_cos_a2.json",
    "evolve": "data/mathieu.json",
    "kernel": "data/minus_d2.json",
}
SPECTRUM_COLUMNS = ["index", "re_lambda", "im_lambda", "multiplicity", "residual", "trusted"]
KERNEL_CONTINUITY_RATIO = 0.7
FAMILY_TEST_MODES = 60


def interleaved_modes(count):
    """0, 1, -1, 2, -2, ... (count entries)."""
    return [((k + 1) // 2) * (1 if k % 2 else -1) for k in range(count)]


# --- Pipelines ---

def run_spectrum_pipeline(config, data, digest):
    out = config.output_dir
    print("\n[1/5] Building operator and structural checks...")
    L = build_operator(config, data)
    regularity = regularity_check(L)
    adjoint = selfadjoint_defect(L, config.n_trunc)
    print(f"  {L.name or 'operator'}: K={L.size}, order {L.order}, min|det A2| = {regularity.min_abs_det:.3e}, "
          f"self-adjoint defect {adjoint.defect:.2e}")

    print("\n[2/5] Assembling Galerkin matrix and solving...")
    decomp = spectrum(assemble(L, Basis.L2, config.n_trunc), config.keep)
    files = [write_csv(out, "spectrum.csv", decomp.to_rows(), digest, SPECTRUM_COLUMNS)]
    print(f"  Kept {len(decomp.pairs)} eigenpairs ({len(decomp.trusted_pairs())} trusted) "
          f"from a {decomp.matrix_size}x{decomp.matrix_size} matrix.")

    print("\n[3/5] Weyl band...")
    summary = {"regularity": regularity.to_record(), "selfadjoint": adjoint.to_record()}
    if adjoint.defect <= 1e-10 and adjoint.min_rayleigh > -1e-10:
        weyl = weyl_bounds(decomp)
        summary["weyl"] = weyl.to_record()
        print(f"  beta1^2 = {weyl.beta1_sq:.6f}, beta2^2 = {weyl.beta2_sq:.6f} over {weyl.count} eigenvalues")
    else:
        print("  Skipped: operator is not self-adjoint and positive.")

    print("\n[4/5] Eigenfunction growth envelope...")
    growth = growth_fit(decomp, pairs=decomp.trusted_pairs() or None)
    summary["growth"] = growth.to_record()
    rows = [{"sqrt_lambda": x, "log_max_norm": y} for x, y in zip(growth.sqrt_lambda, growth.log_max_norm)]
    files.append(write_csv(out, "growth.csv", rows, digest))
    print(f"  C1 = {growth.c1:.4g}, C2 = {growth.c2:.4g}, max excess {growth.max_excess:.3e} "
          f"({'PASS' if growth.passed else 'FAIL'})")

    print("\n[5/5] Similarity check...")
    if (data.get("operator") or {}).get("named") == "similarity_cos":
        half = (config.keep or 21) // 2
        similarity = similarity_example_check(sin_phase(config.domain), range(-half, half + 1), config.n_trunc)
        summary["similarity"] = {"max_sine": similarity.max_sine, "max_eigenvalue_error": similarity.max_eigenvalue_error,
                                 "modes": 2 * half + 1}
        print(f"  |n| <= {half}: max subspace sine {similarity.max_sine:.3e}, "
              f"max eigenvalue error {similarity.max_eigenvalue_error:.3e}")
    else:
        print("  Skipped: operator is not the bundled similarity operator.")
    return files, summary


def run_monodromy_pipeline(config, data, digest):
    out = config.output_dir
    print("\n[1/4] Building operator...")
    L = build_operator(config, data)
    regularity = regularity_check(L)
    if not regularity.passed:
        raise NumericalError(f"leading coefficient is singular on the strip (|det| = {regularity.min_abs_det:.3e})")

    print(f"\n[2/4] Locating eigenvalues in {list(config.rectangle)}...")
    located = locate_eigenvalues(L, config.rectangle, config.locate_tol, threads=config.threads)
    files = [write_csv(out, "eigenvalues.csv", located.to_rows(), digest, SPECTRUM_COLUMNS + ["source"])]
    print(f"  Found {len(located.eigenvalues)} distinct eigenvalues "
          f"({len(located.expanded_values())} with multiplicity).")

    print("\n[3/4] Scanning |d(lambda)|...")
    rows = floquet_scan(L, config.rectangle, config.scan_grid, located.cells, config.threads)
    files.append(write_csv(out, "scan.csv", rows, digest))

    print(f"\n[4/4] Gronwall envelope up to |lambda| = {config.lambda_max:g}...")
    scan = gronwall_scan(L, default_lambda_grid(config.lambda_max), config.threads)
    files.append(write_csv(out, "gronwall.csv", scan.rows, digest))
    print(f"  Envelope constant {scan.envelope_constant:.4f}, {scan.violations} violations, {scan.overflows} overflowed")
    summary = {"eigenvalues": len(located.eigenvalues), "envelope_constant": scan.envelope_constant,
               "gronwall_violations": scan.violations, "gronwall_overflows": scan.overflows}
    return files, summary


def _inside(values, rectangle):
    a, b, c, d = rectangle
    return np.array([v for v in values if a <= v.real <= b and c <= v.imag <= d])


def run_crosscheck_pipeline(config, data, digest):
    out = config.output_dir
    print("\n[1/4] Galerkin spectra in both bases...")
    L = build_operator(config, data)
    keep = config.keep or 2 * config.n_trunc + 1
    l2 = _inside(spectrum(assemble(L, Basis.L2, config.n_trunc), keep).eigenvalues, config.rectangle)
    h2 = _inside(spectrum(assemble(L, Basis.H2, config.n_trunc), keep).eigenvalues, config.rectangle)

    print("\n[2/4] Monodromy eigenvalues...")
    located = locate_eigenvalues(L, config.rectangle, config.locate_tol, threads=config.threads)
    mono = located.expanded_values()
    if not (len(l2) == len(h2) == len(mono)):
        raise NumericalError(f"oracles disagree on the eigenvalue count: L2 {len(l2)}, H2 {len(h2)}, "
                             f"monodromy {len(mono)}")

    print("\n[3/4] Agreement table...")
    rows = []
    for k, (a, b, c) in enumerate(zip(l2, h2, mono)):
        rows.append({"index": k, "re_galerkin_l2": a.real, "im_galerkin_l2": a.imag, "re_galerkin_h2": b.real,
                     "im_galerkin_h2": b.imag, "re_monodromy": c.real, "im_monodromy": c.imag,
                     "agreement": max(abs(a - c), abs(b - c), abs(a - b))})
    files = [write_csv(out, "agreement.csv", rows, digest)]
    worst = max((r["agreement"] for r in rows), default=0.0)
    print(f"  {len(rows)} eigenvalues, max disagreement {worst:.3e} "
          f"({'PASS' if worst < config.agreement_tol else 'FAIL'})")

    print("\n[4/4] Periodic resolvent residuals...")
    rng = np.random.default_rng(config.seed)
    rows = []
    for k in range(config.resolvent_samples):
        lam = complex(rng.uniform(*config.rectangle[:2]), rng.uniform(0.1, 1.0))
        f = HardyFunction.random(rng, L.domain, 4, L.size, decay=1.0)
        result = periodic_resolvent(L, lam, f)
        rows.append({"sample": k, "re_lambda": lam.real, "im_lambda": lam.imag, "residual": result.residual,
                     "abs_det": abs(result.determinant)})
    files.append(write_csv(out, "resolvent.csv", rows, digest))
    summary = {"max_agreement": worst, "passed": bool(worst < config.agreement_tol),
               "max_resolvent_residual": max((r["residual"] for r in rows), default=0.0)}
    doubled = 2 * config.n_trunc
    if 2 * doubled * config.strip_height <= COSH_EXPONENT_LIMIT:
        base = spectrum(assemble(L, Basis.L2, config.n_trunc), 1).eigenvalues[0]
        fine = spectrum(assemble(L, Basis.L2, doubled), 1).eigenvalues[0]
        summary["lowest_doubling_shift"] = abs(fine - base)
    return files, summary


def run_completeness_pipeline(config, data, digest):
    out = config.output_dir
    print("\n[1/5] Building conformal map...")
    a, cmap = build_family_map(config, data)
    points = [0.5 + 0.1j, 2.0 - 0.2j, np.pi + 0.3j]
    agreement = cmap.quadrature_agreement(points)
    print(f"  a = {a:g}, strip T <= {cmap.domain.T:g}, {cmap.inverse.n_trunc} map modes, "
          f"quadrature agreement {agreement:.2e}")

    print(f"\n[2/5] Collision threshold scan on [{config.t_min:g}, {config.t_max:g}]...")
    result = threshold_scan(cmap, config.t_min, config.t_max, config.t_steps, config.search_grid,
                            config.polish_tol, label=a)
    files = [write_csv(out, "atlas.csv", result.rows, digest)]
    summary = {"a": a, "t_star": result.t_star, "quadrature_agreement": agreement,
               "certificate_misses": result.certificate_misses}
    if result.t_star is None:
        print("  No collision found on the ladder.")
    else:
        print(f"  T* = {result.t_star:.4f}")
    if result.certificate_misses:
        print(f"  {result.certificate_misses} collision(s) where the injectivity certificate holds")

    print("\n[3/5] Annihilator residuals...")
    if result.witness is not None:
        witness = result.witness
        domain = StripDomain(result.t_star)
        h = kernel_difference(witness, domain)
        modes = interleaved_modes(FAMILY_TEST_MODES)
        evaluators = first_order_eigenfunction_evaluators(cmap, modes, domain)
        table = span_residuals(evaluators, [h])
        files.append(write_csv(out, "residuals_failure.csv", table.to_rows(), digest))
        eigenvalues = [1j * n * cmap.scale for n in modes]
        pairing = annihilator_probe(eigenvalues, evaluators, h, config.time_ladder, np.random.default_rng(config.seed))
        files.append(write_csv(out, "annihilator.csv", pairing, digest))
        summary.update({
            "witness_defect": witness_defect(cmap, witness),
            "kernel_annihilation": kernel_annihilation(evaluators, h),
            "generalized_defect": generalized_eigenfunction_defect(cmap, 1j),
            "witness_norm": float(table.test_norms[0]),
            "final_residual": float(table.residuals[0, -1]),
            "max_pairing": max(r["pairing"] for r in pairing),
        })
        print(f"  ||h|| = {table.test_norms[0]:.6g}, residual after {FAMILY_TEST_MODES} modes "
              f"{table.residuals[0, -1]:.6g}")
    else:
        print("  Skipped: no witness.")

    print("\n[4/5] Positive case...")
    if "operator" in data:
        narrow = replace(config, strip_height=config.completeness_strip)
        L = build_operator(narrow, data)
        decomp = spectrum(assemble(L, Basis.L2, config.n_trunc), config.span_modes)
        tests = [HardyFunction.exponential(n, narrow.domain, config.n_trunc) for n in interleaved_modes(config.test_modes)]
        table = span_residuals(decomp.eigenfunctions, tests)
        files.append(write_csv(out, "residuals_positive.csv", table.to_rows(), digest))
        summary["positive_max_residual"] = float(table.residuals[:, -1].max())
        print(f"  Max residual after {config.span_modes} eigenfunctions: {table.residuals[:, -1].max():.3e}")
    else:
        print("  Skipped: no operator block.")

    print("\n[5/5] First-order resolvent: closed form vs monodromy...")
    rng = np.random.default_rng(config.seed)
    domain = StripDomain(config.completeness_strip)
    L1 = exp_cos_operator(a, domain)
    f = HardyFunction.random(rng, domain, 4, decay=1.0)
    lams = [complex(rng.uniform(0.1, 1.0), rng.uniform(-3.0, 3.0)) for _ in range(config.resolvent_samples)]
    x = 2 * np.pi * np.arange(8) / 8
    rows = first_order_resolvent_check(cmap, L1, lams, f, x)
    files.append(write_csv(out, "first_order_resolvent.csv", rows, digest))
    summary["max_first_order_resolvent_difference"] = max((r["difference"] for r in rows), default=0.0)
    print(f"  {len(rows)} samples, max relative difference {summary['max_first_order_resolvent_difference']:.3e}")
    return files, summary


def run_evolve_pipeline(config, data, digest):
    out = config.output_dir
    print("\n[1/4] Spectral data...")
    L = build_operator(config, data)
    state = build_state(L, config.n_trunc, config.modes, config.shift)
    print(f"  {state.modes} modes, shift mu = {state.shift:g}")
    rng = np.random.default_rng(config.seed)
    f = HardyFunction.random(rng, L.domain, min(8, config.n_trunc), L.size, decay=2.0)
    f = f * (1.0 / h_norm(f))

    print("\n[2/4] Strong continuity ladder...")
    probe = continuity_probe(state, f, config.time_ladder, config.continuity_tol)
    files = [write_csv(out, "continuity.csv", probe.rows, digest, ["t", "norm_H", "norm_L", "tail_bound"])]
    print(f"  final ||S(t)f - f||_H = {probe.rows[-1]['norm_H']:.3e} ({'PASS' if probe.passed else 'FAIL'})")

    print("\n[3/4] Semigroup law and contraction...")
    law = [{"t": t, "s": s, "defect": semigroup_defect(state, f, t, s)} for t in config.times for s in config.times]
    files.append(write_csv(out, "semigroup_law.csv", law, digest))
    samples = [HardyFunction.random(rng, L.domain, min(8, config.n_trunc), L.size, decay=1.0) for _ in range(5)]
    contraction = contraction_check(state, samples, (0.0,) + tuple(config.times))
    max_law_defect = max(r["defect"] for r in law)
    print(f"  max law defect {max_law_defect:.3e}, L2 ratio {contraction.max_ratio_l2:.12f}")

    print("\n[4/4] Modal weights...")
    t = config.times[0]
    weights = modal_weights(state, f, t)
    envelope = decay_envelope(state, t)
    rows = [{"index": k, "lambda": lam, "weight": w, "envelope": e}
            for k, (lam, w, e) in enumerate(zip(state.eigenvalues, weights, envelope))]
    files.append(write_csv(out, "modes.csv", rows, digest))
    summary = {"shift": state.shift, "continuity_passed": probe.passed, "contraction": contraction.to_record()}
    summary["max_law_defect"] = max_law_defect
    return files, summary


def run_kernel_pipeline(config, data, digest):
    out = config.output_dir
    domain = config.domain
    n_trunc = min(config.n_trunc, 16)
    rng = np.random.default_rng(config.seed)
    print(f"\n[1/3] Reproducing property: {config.kernel_samples} functions x {config.kernel_points} points...")
    points = rng.uniform(0, 2 * np.pi, config.kernel_points) + 1j * rng.uniform(-0.9, 0.9, config.kernel_points) * domain.T
    kernels = [eval_kernel(w, domain, n_trunc) for w in points]
    rows, worst = [], 0.0
    for k in range(config.kernel_samples):
        f = HardyFunction.random(rng, domain, n_trunc)
        norm = h_norm(f)
        values = evaluate(f, points)
        errors = [abs(h_inner(f, g.function) - v) / norm for g, v in zip(kernels, values)]
        quadrature = abs(boundary_inner(f, f) - norm**2) / norm**2
        worst = max(worst, max(errors))
        rows.append({"sample": k, "max_reproducing_error": max(errors), "boundary_quadrature_error": quadrature})
    files = [write_csv(out, "reproducing.csv", rows, digest)]
    print(f"  max |<f, g_w> - f(w)| / ||f|| = {worst:.3e}")

    print("\n[2/3] Kernel continuity bound...")
    tau_max = domain.T + np.log(KERNEL_CONTINUITY_RATIO)
    rows, violations = [], 0
    for v in points:
        if abs(v.imag) > tau_max:
            continue
        for w in points:
            if w == v or abs(w.imag) > tau_max:
                continue
            distance_sq = kernel_distance(v, w, domain, n_trunc) ** 2
            bound = kernel_continuity_bound(v, w, domain)
            violations += int(distance_sq > bound)
            rows.append({"re_v": v.real, "im_v": v.imag, "re_w": w.real, "im_w": w.imag,
                         "distance_sq": distance_sq, "bound": bound})
    files.append(write_csv(out, "continuity.csv", rows, digest))
    print(f"  {len(rows)} pairs, {violations} violations")

    print("\n[3/3] Done.")
    return files, {"max_reproducing_error": worst, "continuity_violations": violations, "pairs": len(rows)}


PIPELINES = {
    "spectrum": run_spectrum_pipeline,
    "monodromy": run_monodromy_pipeline,
    "crosscheck": run_crosscheck_pipeline,
    "completeness": run_completeness_pipeline,
    "evolve": run_evolve_pipeline,
    "kernel": run_kernel_pipeline,
}


def run(command, config_path=None, flags=None):
    """Runs one command; returns the process exit code."""
    start_time = time.time()
    digest = None
    out_dir = os.path.join((flags or {}).get("out") or DEFAULT_OUT_DIR, command)
    try:
        config, data = load_run_config(command, config_path, flags)
        out_dir = config.output_dir
        digest = config_hash({"config": data, "run": config.hash_record()})
        print(f"--- Starting {command} ({config.name}, config {digest}, seed {config.seed}) ---")
        files, summary = PIPELINES[command](config, data, digest)
        elapsed = time.time() - start_time
        files.append(write_manifest(out_dir, command, digest, config.seed, files, elapsed, summary))
    except SpectraError as e:
        logger.error("%s: %s", type(e).__name__, e)
        write_error(out_dir, e, digest)
        print(f"\n--- {command} failed ({type(e).__name__}); see error.json ---")
        return e.exit_code
    print(f"\n--- Pipeline Finished in {elapsed // 60:.0f}m {elapsed % 60:.1f}s ---")
    for path in files:
        print(f"   {path}")
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Path to a JSON run config (default: bundled config for the command)")
    common.add_argument("--out", help="Output root directory (default: output)")
    common.add_argument("--n-trunc", type=int, help="Fourier truncation N")
    common.add_argument("--strip-height", type=float, help="Strip half-height T")
    common.add_argument("--keep", type=int, help="Number of eigenpairs to keep")
    common.add_argument("--seed", type=int, help="Random seed")
    common.add_argument("--threads", type=int, help="Worker threads for lambda evaluations")
    common.add_argument("--verbose", action="store_true", help="Debug logging")
    parser = argparse.ArgumentParser(description="Spectral experiments for periodic operators on Hardy spaces of a strip")
    sub = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        sub.add_parser(command, parents=[common], help=f"run the {command} experiment")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    flags = {"out": args.out, "n_trunc": args.n_trunc, "strip_height": args.strip_height, "keep": args.keep,
             "seed": args.seed, "threads": args.threads}
    return run(args.command, args.config or DEFAULT_CONFIGS[args.command], flags)


if __name__ == "__main__":
    sys.exit(main())
