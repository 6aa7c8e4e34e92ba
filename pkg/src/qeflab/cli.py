"""Command-line pipeline: JSON config in, CSV results out.

Every subcommand reads one schema-validated configuration, runs a slice
of the pipeline and writes CSV files into the output directory.  Exit
codes: 0 success, 2 configuration problems, 3 numeric pipeline
failures, 4 statistical validation mismatch.  Errors are reported as a
single JSON object on stderr.  Output is deterministic for a fixed
config and seed regardless of QEFLAB_THREADS.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import fock as fockmod
from . import model
from .eigensolver import SpectralBasis, basis_gram, build_basis, nystrom_oracle
from .errors import QeflabError, SchemaViolation
from .kernels import KernelContext, make_context
from .mc import McConfig, estimate_qef_mc
from .qef import compute_qef
from .qkl import build_qkl
from .quadrature import make_grid

PR_RTOL = 1e-12
RECOVERY_RTOL = 1e-8
ALE_RTOL = 1e-8


def _fmt(value) -> str:
    """One CSV cell: integers plain, reals with 17 significant digits."""
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.16e}"


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(cell) for cell in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")
    print(f"wrote {path}")


def load_config(path: str) -> dict:
    """Parse and schema-validate a run configuration."""
    def _reject(token):
        raise SchemaViolation(f"non-finite number {token!r} in config")

    try:
        with open(path) as fh:
            cfg = json.load(fh, parse_constant=_reject)
    except OSError as exc:
        raise SchemaViolation(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"config is not valid JSON: {exc}") from exc
    schema = json.loads(
        resources.files("qeflab").joinpath("config_schema.json").read_text())
    try:
        jsonschema.validate(cfg, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "(root)"
        raise SchemaViolation(f"{where}: {exc.message}") from exc
    thetas = cfg.get("qef", {}).get("theta_list", [])
    if sorted(thetas) != list(thetas):
        raise SchemaViolation("qef.theta_list must be sorted ascending")
    return cfg


def _spec_from(cfg: dict) -> model.OscillatorSpec:
    osc = cfg["oscillator"]
    return model.OscillatorSpec(
        n=osc["n"], m=osc["m"],
        Theta=np.array(osc["Theta"], dtype=float),
        R=np.array(osc["R"], dtype=float),
        M=np.array(osc["M"], dtype=float),
        T=float(osc["T"]), theta=float(osc["theta"]),
    )


def _context_from(cfg: dict) -> KernelContext:
    spec = _spec_from(cfg)
    grid = make_grid(spec.T, panels=cfg["grid"]["panels"],
                     order=cfg["grid"]["nodes_per_panel"])
    return make_context(spec, grid)


def _require(cfg: dict, section: str) -> dict:
    if section not in cfg:
        raise SchemaViolation(f"config section {section!r} is required here")
    return cfg[section]


def _basis_from(cfg: dict, ctx: KernelContext) -> SpectralBasis:
    eig = _require(cfg, "eigen")
    kwargs = {}
    for key in ("omega_min", "omega_max", "samples"):
        if key in eig:
            kwargs[key] = eig[key]
    return build_basis(ctx, eig["capture_fraction"], **kwargs)


def cmd_model_check(cfg: dict, out: Path, seed: int | None) -> int:
    spec = _spec_from(cfg)
    sysm = model.build_system(spec)
    pr_rel = sysm.pr_residual / max(float(np.linalg.norm(sysm.mho)), 1e-300)
    recovered = model.recover_ccr(sysm.A, sysm.mho)
    ccr_rel = float(np.linalg.norm(recovered - spec.Theta)
                    / np.linalg.norm(spec.Theta))
    P0 = model.solve_state_ale(sysm.A, sysm.B).P0
    BBt = sysm.B @ sysm.B.T
    ale_rel = float(np.linalg.norm(sysm.A @ P0 + P0 @ sysm.A.T + BBt)
                    / max(float(np.linalg.norm(BBt)), 1e-300))
    abscissa = float(np.max(np.linalg.eigvals(sysm.A).real))
    checks = [
        ("pr_residual_rel", pr_rel, PR_RTOL, pr_rel <= PR_RTOL),
        ("ccr_roundtrip_rel", ccr_rel, RECOVERY_RTOL, ccr_rel <= RECOVERY_RTOL),
        ("ale_residual_rel", ale_rel, ALE_RTOL, ale_rel <= ALE_RTOL),
        ("spectral_abscissa", abscissa, -model.HURWITZ_MARGIN, sysm.hurwitz),
    ]
    rows = [[name, val, thr, "pass" if ok else "fail"]
            for name, val, thr, ok in checks]
    _write_csv(out / "model.csv", ["check", "value", "threshold", "status"], rows)
    passed = all(ok for *_, ok in checks)
    print("model-check: " + ("PASS" if passed else "FAIL"))
    return 0 if passed else 3


def cmd_eigen(cfg: dict, out: Path, seed: int | None) -> int:
    ctx = _context_from(cfg)
    basis = _basis_from(cfg, ctx)
    rows = [[k, pair.omega, pair.multiplicity, pair.bvp_residual]
            for k, pair in enumerate(basis.pairs)]
    _write_csv(out / "eigen_shooting.csv",
               ["k", "omega", "multiplicity", "bvp_residual"], rows)
    oracle = nystrom_oracle(ctx)
    rows = [[k, w] for k, w in enumerate(oracle.omegas[:2 * len(basis.pairs)])]
    _write_csv(out / "eigen_nystrom.csv", ["k", "omega"], rows)
    gram = basis_gram(basis)
    rows = [[j, k, p, q, gram[j, k, p, q]]
            for j in range(gram.shape[0]) for k in range(gram.shape[1])
            for p in range(2) for q in range(2)]
    _write_csv(out / "basis_gram.csv", ["j", "k", "p", "q", "value"], rows)
    print(f"eigen: {len(basis.pairs)} pairs capture "
          f"{basis.hs_captured / basis.hs_total:.6f} of the HS norm")
    return 0


def cmd_qef(cfg: dict, out: Path, seed: int | None) -> int:
    ctx = _context_from(cfg)
    basis = _basis_from(cfg, ctx)
    thetas = _require(cfg, "qef")["theta_list"]
    P0 = model.solve_state_ale(ctx.sys.A, ctx.sys.B).P0
    qef_rows = []
    qkl_rows = []
    for theta in thetas:
        qkl = build_qkl(basis, theta)
        rep = compute_qef(ctx, qkl, P0)
        qef_rows.append([
            rep.theta, rep.C, rep.tail_C, rep.spectral_radius,
            rep.theta_critical,
            "diverged" if rep.xi is None else rep.xi,
            "diverged" if rep.xi_classical is None else rep.xi_classical,
        ])
        for k, pair in enumerate(basis.pairs):
            qkl_rows.append([theta, k, pair.omega, qkl.tanc_values[k]])
    _write_csv(out / "qef.csv",
               ["theta", "C", "tail_C", "spectral_radius", "theta_critical",
                "xi", "xi_classical"], qef_rows)
    _write_csv(out / "qkl.csv",
               ["theta", "k", "omega_k", "tanhc_theta_omega_k"], qkl_rows)
    return 0


def cmd_validate(cfg: dict, out: Path, seed: int | None) -> int:
    ctx = _context_from(cfg)
    basis = _basis_from(cfg, ctx)
    thetas = _require(cfg, "qef")["theta_list"]
    mc_cfg = _require(cfg, "mc")
    if seed is None:
        seed = mc_cfg["seed"]
    config = McConfig(samples=mc_cfg["samples"], seed=seed,
                      batch=mc_cfg.get("batch", 100),
                      increments_per_panel=mc_cfg.get("increments_per_panel", 8))
    P0 = model.solve_state_ale(ctx.sys.A, ctx.sys.B).P0
    rows = []
    passed = True
    for theta in thetas:
        qkl = build_qkl(basis, theta)
        rep = compute_qef(ctx, qkl, P0)
        if rep.xi is None:
            continue                      # only subcritical thetas are testable
        result = estimate_qef_mc(ctx, qkl, P0, config)
        for name, est in (("Z", result.z), ("N", result.n)):
            rows.append([theta, name, est.mean, est.stderr, est.n_eff,
                         est.diverged_fraction, seed])
            passed = passed and abs(est.mean - rep.xi) <= 3.0 * est.stderr
    _write_csv(out / "mc.csv",
               ["theta", "estimator", "mean", "stderr", "n_eff",
                "diverged_fraction", "seed"], rows)
    print("validate: " + ("PASS" if passed else "FAIL"))
    return 0 if passed else 4


def cmd_fock(cfg: dict, out: Path, seed: int | None) -> int:
    fcfg = _require(cfg, "fock")
    pair = fockmod.build_pair(fcfg["N"])
    quad_order = fcfg["quad_order"]
    step = fcfg.get("ode_step", 1e-3)
    corner_tol = fcfg.get("corner_tol")
    rows = []
    passed = True
    for omega in fcfg["omega_list"]:
        err = fockmod.corner_error(pair, omega, quad_order,
                                   convergence_tol=fcfg.get("convergence_tol"))
        sigma = fockmod.sigma_from_omega(omega)
        ode = fockmod.verify_ode(pair, [sigma], quad_order=quad_order,
                                 step=step).max_residual
        rows.append([fcfg["N"], omega, quad_order, err, ode])
        if corner_tol is not None:
            passed = passed and err <= corner_tol
    _write_csv(out / "fock.csv",
               ["N", "omega", "quad_order", "corner_error", "ode_residual"], rows)
    print("fock: " + ("PASS" if passed else "FAIL"))
    return 0 if passed else 3


COMMANDS = {
    "model-check": cmd_model_check,
    "eigen": cmd_eigen,
    "qef": cmd_qef,
    "validate": cmd_validate,
    "fock": cmd_fock,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="qeflab",
        description="Oscillator spectra and quadratic-exponential functionals")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None,
                       help="override the Monte-Carlo seed")
        p.add_argument("--out", default=None,
                       help="override the configured output directory")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise SchemaViolation("--seed must fit in 64 unsigned bits")
        out = Path(args.out if args.out is not None else cfg["output_dir"])
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out, args.seed)
    except QeflabError as exc:
        print(json.dumps(exc.payload()), file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
