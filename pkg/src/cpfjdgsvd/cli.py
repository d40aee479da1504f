"""Command-line driver: load or generate (A, B), run the solver, write a report."""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import mmio
from .errors import DegeneratePairError, InputError, MatrixMarketError, RegularityError
from .oracle import MAX_ORACLE_N, closest_to_target, dense_full_gsvd, sin_angle
from .report import RunReport, emit_report
from .solver import SolverConfig, mod4_start, ones_start, run
from .sparse import MatrixPair, gen_b0, gen_b1, gen_b2

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_NOT_CONVERGED = 3


@dataclass
class InputSpec:
    matrix_a: str
    matrix_b: str | None = None
    b_gen: str | None = None
    transpose_a: bool = False
    x0: str = "ones"
    output: str | None = None
    vectors: str | None = None
    validate: bool = False


def _positive_float(text):
    value = float(text)
    if not (value > 0 and math.isfinite(value)):
        raise argparse.ArgumentTypeError(f"must be a positive number, got {text}")
    return value


def _count(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def _x0_choice(text):
    if text in ("ones", "mod4") or (text.startswith("file:") and len(text) > 5):
        return text
    raise argparse.ArgumentTypeError("expected ones, mod4 or file:PATH")


def build_parser():
    p = argparse.ArgumentParser(
        prog="cpf-jdgsvd",
        description="Partial GSVD of a sparse pair (A, B): the components closest to a target.",
    )
    p.add_argument("--matrix-a", required=True, metavar="PATH", help="A in Matrix Market format")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--matrix-b", metavar="PATH", help="B in Matrix Market format")
    src.add_argument("--b-gen", choices=("b0", "b1", "b2"),
                     help="generate B: b0 tridiag(1,3,1) n x n, b1 first difference (n-1) x n, "
                          "b2 transposed second difference (n+2) x n")
    p.add_argument("--transpose-a", action="store_true", help="use the transpose of the file given as A")
    p.add_argument("--tau", required=True, type=_positive_float, help="target value (> 0)")
    p.add_argument("--num", type=_count, default=1, help="number of components (default 1)")
    p.add_argument("--tol", type=_positive_float, default=1e-10)
    p.add_argument("--kmin", type=_count, default=3)
    p.add_argument("--kmax", type=_count, default=30)
    p.add_argument("--fixtol", type=float, default=1e-4,
                   help="switch tolerance; 0 never switches, inf always uses the Ritz value")
    p.add_argument("--eps-tilde", type=_positive_float, default=1e-3)
    p.add_argument("--max-outer", type=_count, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--x0", type=_x0_choice, default="ones", help="ones, mod4 or file:PATH")
    p.add_argument("--output", metavar="PATH", help="report file (default: stdout)")
    p.add_argument("--vectors", metavar="DIR", help="write U_c, V_c, X_c as Matrix Market arrays")
    p.add_argument("--validate", action="store_true",
                   help=f"compare against a dense GSVD (n <= {MAX_ORACLE_N})")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def parse_args(argv=None):
    """Return ``(SolverConfig, InputSpec)``; usage errors exit with status 2."""
    parser = build_parser()
    ns = parser.parse_args(argv)
    if ns.fixtol < 0 or math.isnan(ns.fixtol):
        parser.error("--fixtol must be >= 0")
    try:
        cfg = SolverConfig(
            tau=ns.tau, ell=ns.num, tol=ns.tol, k_min=ns.kmin, k_max=ns.kmax,
            fixtol=ns.fixtol, eps_tilde=ns.eps_tilde, max_outer=ns.max_outer, seed=ns.seed,
        )
    except InputError as exc:
        parser.error(str(exc))
    spec = InputSpec(
        matrix_a=ns.matrix_a, matrix_b=ns.matrix_b, b_gen=ns.b_gen, transpose_a=ns.transpose_a,
        x0=ns.x0, output=ns.output, vectors=ns.vectors, validate=ns.validate,
    )
    if ns.verbose:
        logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    return cfg, spec


def load_pair(spec: InputSpec) -> MatrixPair:
    a = mmio.read_matrix_market(spec.matrix_a)
    if spec.transpose_a:
        a = a.transpose()
    n = a.cols
    if spec.matrix_b is not None:
        b = mmio.read_matrix_market(spec.matrix_b)
    elif spec.b_gen == "b0":
        b = gen_b0(n)
    elif spec.b_gen == "b1":
        b = gen_b1(n)
    else:
        b = gen_b2(n).transpose()
    return MatrixPair(a, b)


def resolve_x0(spec: InputSpec, n):
    if spec.x0 == "ones":
        return ones_start(n)
    if spec.x0 == "mod4":
        return mod4_start(n)
    x = mmio.read_array(spec.x0[len("file:"):]).ravel()
    if x.size != n:
        raise InputError(f"start vector has length {x.size}, expected {n}")
    return x


def _config_record(cfg: SolverConfig, spec: InputSpec, pair: MatrixPair):
    rec = {k: v for k, v in asdict(cfg).items() if k != "x0"}
    rec.update(
        x0=spec.x0, matrix_a=spec.matrix_a, matrix_b=spec.matrix_b, b_gen=spec.b_gen,
        transpose_a=spec.transpose_a, m=pair.m, p=pair.p, n=pair.n,
        nnz=pair.a.nnz + pair.b.nnz, norm1_a=pair.norm1_a, norm1_b=pair.norm1_b,
    )
    return rec


def validate_against_oracle(pair, cfg, conv):
    """Compare converged components with the dense GSVD."""
    oracle = dense_full_gsvd(pair)
    expected = closest_to_target(oracle, cfg.tau, min(cfg.ell, int(oracle.nontrivial.sum())))
    exp_sigma = oracle.sigma[expected]
    got = conv.sigma
    got_sorted = sorted(got, key=lambda s: (abs(s - cfg.tau), s))
    errors = [abs(g - e) / abs(e) if e != 0 else abs(g) for g, e in zip(got_sorted, exp_sigma)]
    vec_err = []
    cand = np.flatnonzero(oracle.nontrivial)
    for i, s in enumerate(got):
        j = cand[np.argmin(np.abs(oracle.sigma[cand] - s))]
        eu = sin_angle(conv.u[:, i], oracle.u_full[:, j]) if oracle.alphas[j] > 0 else 0.0
        ev = sin_angle(conv.v[:, i], oracle.v_full[:, j]) if oracle.betas[j] > 0 else 0.0
        ex = sin_angle(conv.x[:, i], oracle.x_full[:, j])
        vec_err.append(math.sqrt(eu**2 + ev**2 + ex**2))
    return {
        "expected_sigma": [float(s) for s in exp_sigma],
        "sigma_rel_errors": [float(e) for e in errors],
        "max_sigma_rel_error": float(max(errors)) if errors else 0.0,
        "vector_errors": vec_err,
        "oracle_norm_x": oracle.norm_x,
    }


def write_vectors(directory, conv):
    os.makedirs(directory, exist_ok=True)
    paths = {}
    for name, block in (("U_c", conv.u), ("V_c", conv.v), ("X_c", conv.x)):
        path = os.path.join(directory, f"{name}.mtx")
        mmio.write_array(path, block)
        paths[name] = path
    path = os.path.join(directory, "CS_c.mtx")
    mmio.write_array(path, np.column_stack([conv.c, conv.s]) if conv.j else np.zeros((0, 2)))
    paths["CS_c"] = path
    return paths


def run_solve(cfg: SolverConfig, spec: InputSpec):
    """Execute a solve described by ``cfg``/``spec``. Returns ``(report, exit_code)``."""
    pair = load_pair(spec)
    cfg = replace(cfg, x0=resolve_x0(spec, pair.n))
    start = time.perf_counter()
    conv, stats = run(pair, cfg)
    elapsed = time.perf_counter() - start

    report = RunReport(config=_config_record(cfg, spec, pair))
    for rec in stats.components:
        report.components.append({
            "alpha": rec.alpha, "beta": rec.beta, "sigma": rec.sigma, "residual_norm": rec.r_norm,
            "outer_iterations": rec.outer, "inner_iterations": rec.inner, "converged": rec.converged,
        })
    report.warnings = [dict(ev) for ev in stats.events]

    if spec.validate:
        if pair.n <= MAX_ORACLE_N and conv.j:
            report.validation = validate_against_oracle(pair, cfg, conv)
        elif pair.n > MAX_ORACLE_N:
            report.warnings.append({"kind": "validation_skipped", "outer": stats.outer,
                                    "message": f"n = {pair.n} exceeds the dense oracle limit {MAX_ORACLE_N}"})
    vectors = write_vectors(spec.vectors, conv) if spec.vectors else None
    report.summary = {
        "requested": cfg.ell, "found": conv.j, "converged": stats.converged,
        "outer_iterations": stats.outer, "inner_iterations": stats.inner,
        "k_min": stats.k_min, "k_max": stats.k_max, "inner_tol_rule": stats.inner_tol_rule,
        "vectors": vectors, "wall_time": elapsed,
    }
    return report, (EXIT_OK if stats.converged else EXIT_NOT_CONVERGED)


def main(argv=None):
    cfg, spec = parse_args(argv)
    try:
        report, code = run_solve(cfg, spec)
        if spec.output:
            emit_report(report, spec.output)
        else:
            sys.stdout.write(report.dumps())
    except (OSError, MatrixMarketError, InputError, RegularityError, DegeneratePairError) as exc:
        print(f"cpf-jdgsvd: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return code


if __name__ == "__main__":
    sys.exit(main())
