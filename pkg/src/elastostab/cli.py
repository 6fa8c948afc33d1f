"""Command-line interface: ``elastostab <command> --config run.toml``.

Exit codes: 0 success, 1 configuration error, 2 forward solver failure,
3 diagnostics found failing points, 4 singular strain in the kernel
construction, 5 system too large for the spectral probe.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from elastostab import io
from elastostab.config import COMMANDS, ConfigError, RunConfig, load_config
from elastostab.elasticity import MaterialError, MaterialParams, ReferenceState, SolverError, pressure, solve_quasistatic
from elastostab.grid import GridError, ScalarField, VectorField

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_DIAGNOSE, EXIT_SINGULAR, EXIT_SIZE = 0, 1, 2, 3, 4, 5
DEFAULT_OUT = "elastostab_out"

log = logging.getLogger("elastostab")

SECTION_KEYS = {
    "simulate": {"csv"},
    "diagnose": {"conditions"},
    "kernel": {"measurement", "base_point", "n_pairs"},
    "lopatinskii": {"operator", "method", "n_tangent", "stride", "prime", "max_report"},
    "reconstruct": {"truth", "data", "weights", "boundary", "n_measurements"},
    "svd": {"k", "n_measurements", "boundary"},
}


class CommandError(Exception):
    def __init__(self, msg: str, code: int):
        super().__init__(msg)
        self.code = code


# ---------------------------------------------------------------------------
# state construction

def build_params(cfg: RunConfig) -> MaterialParams:
    g = cfg.grid.static()
    f = {k: spec.realize(g, 0) for k, spec in cfg.material.items()}
    return MaterialParams(f["lambda"], f["mu"], f["rho"])


def build_state(cfg: RunConfig) -> ReferenceState:
    if not cfg.measurements:
        raise ConfigError("at least one [[measurement]] is required")
    params = build_params(cfg)
    us = []
    for i, m in enumerate(cfg.measurements):
        if m.displacement is not None:
            us.append(m.displacement.realize(cfg.grid, 3))
            continue
        if cfg.grid.is_dynamic:
            raise ConfigError(f"measurement {i + 1}: forced solves are quasi-static; give a displacement instead")
        F = m.force.realize(cfg.grid, 3)
        bnd = m.boundary.realize(cfg.grid, 3) if m.boundary is not None else None
        try:
            us.append(solve_quasistatic(params, F, rtol=cfg.tol("solver", 1e-8), boundary=bnd))
        except SolverError as exc:
            raise CommandError(f"measurement {i + 1}: {exc}", EXIT_SOLVER) from None
    return ReferenceState(params, us)


def _validate_section(cfg: RunConfig, cmd: str) -> dict:
    sec = cfg.section(cmd)
    bad = set(sec) - SECTION_KEYS[cmd]
    if bad:
        raise ConfigError(f"[{cmd}]: unknown keys {', '.join(sorted(bad))}")
    return sec


# ---------------------------------------------------------------------------
# commands

def cmd_simulate(cfg: RunConfig, out: Path) -> tuple[dict, int]:
    sec = _validate_section(cfg, "simulate")
    state = build_state(cfg)
    rows = []
    for k, (u, eps) in enumerate(zip(state.displacements, state.strains), start=1):
        p = pressure(state.params.lam, u) if not u.is_dynamic else None
        io.write_field(u, out / f"u_{k}.json")
        io.write_field(eps, out / f"eps_{k}.json")
        if p is not None:
            io.write_field(p, out / f"p_{k}.json")
        if sec.get("csv") and not u.is_dynamic:
            io.write_csv(u, out / f"u_{k}.csv")
        rows.append({"measurement": k, "u_max_abs": float(np.abs(u.values).max()),
                     "eps_max_abs": float(np.abs(eps.values).max()),
                     "p_max_abs": None if p is None else float(np.abs(p.values).max())})
    return {"command": "simulate", "grid": list(cfg.grid.dims), "measurements": rows}, EXIT_OK


def cmd_diagnose(cfg: RunConfig, out: Path) -> tuple[dict, int]:
    from elastostab.symbols import CONDITIONS, condition_maps

    sec = _validate_section(cfg, "diagnose")
    wanted = sec.get("conditions", ["mu", "lambda"])
    bad = [c for c in wanted if c not in CONDITIONS]
    if bad:
        raise ConfigError(f"[diagnose]: unknown conditions {bad}; choose from {list(CONDITIONS)}")
    state = build_state(cfg)
    rep = condition_maps(state, cfg.tol("condition", 1e-8))
    summary = rep.summary()
    for name, vals in rep.maps.items():
        io.write_field(ScalarField(state.grid, vals), out / f"{name}.json")
    verdicts = {c: rep.verdict(c) for c in wanted}
    summary.update({"command": "diagnose", "requested": verdicts,
                    "all_pass": all(v == "pass" for v in verdicts.values())})
    return summary, EXIT_OK if summary["all_pass"] else EXIT_DIAGNOSE


def cmd_kernel(cfg: RunConfig, out: Path) -> tuple[dict, int]:
    from elastostab.kernel import SingularStrainError, kernel_certificate

    sec = _validate_section(cfg, "kernel")
    state = build_state(cfg)
    k = int(sec.get("measurement", 1))
    if not 1 <= k <= state.n_measurements:
        raise ConfigError(f"[kernel]: measurement {k} out of range")
    eps = state.strains[k - 1]
    if eps.is_dynamic:
        eps = eps.at(eps.n_snapshots // 2)
    try:
        cert = kernel_certificate(eps, sec.get("base_point"), int(sec.get("n_pairs", 64)), cfg.seed)
    except SingularStrainError as exc:
        pts = np.asarray(exc.locations)[:20].tolist()
        raise CommandError(f"{exc}; first locations {pts}", EXIT_SINGULAR) from None
    io.write_field(cert.delta_mu_star, out / "delta_mu_star.json")
    io.write_field(cert.a, out / "a.json")
    res = cert.summary()
    res.update({"command": "kernel", "measurement": k})
    return res, EXIT_OK


def _lopatinskii_frames(cfg: RunConfig, sec: dict):
    from elastostab.lopatinskii import box_frames

    n = max(cfg.grid.dims)
    stride = int(sec.get("stride", max(1, n // 4)))
    return box_frames(cfg.grid.static(), int(sec.get("n_tangent", 4)), stride)


def cmd_lopatinskii(cfg: RunConfig, out: Path) -> tuple[dict, int]:
    from elastostab import lopatinskii as lp
    from elastostab.symbols import KINDS, build_operator

    sec = _validate_section(cfg, "lopatinskii")
    op = str(sec.get("operator", cfg.kind)).replace("A_", "L_")
    if op not in KINDS[:6]:
        raise ConfigError(f"[lopatinskii]: operator must be one of {list(KINDS[:6])}")
    method = sec.get("method", "analytic" if op in ("L_mu", "L_rho", "L_pmu") else "generic")
    if method not in ("analytic", "generic"):
        raise ConfigError("[lopatinskii]: method must be 'analytic' or 'generic'")
    if method == "analytic" and op not in ("L_mu", "L_rho", "L_pmu"):
        raise ConfigError(f"[lopatinskii]: no analytic check for {op}")
    prime = bool(sec.get("prime", op == "L_pmu"))
    state = build_state(cfg)
    snap = None
    if state.is_dynamic:
        snap = state.grid.snapshots // 2
    eps = state.strains[0] if snap is None else state.strains[0].at(snap)
    acc = state.accels[0]
    acc_vals = None if acc is None else (acc.values if snap is None else acc.at(snap).values)
    eps_m = eps.matrix().reshape(-1, 3, 3)
    acc_scale = 1.0 if acc_vals is None else max(float(np.abs(acc_vals).max()), 1e-300)
    built = build_operator(op, state) if method == "generic" else None
    counts = {lp.SATISFIED: 0, lp.VIOLATED: 0, lp.UNDECIDED: 0}
    report = []
    max_report = int(sec.get("max_report", 20))
    for face, flat, frame in _lopatinskii_frames(cfg, sec):
        if method == "generic":
            v = lp.check_built(built, frame, prime, seed=cfg.seed)
            status, reason = v.status, v.reason
        elif op == "L_mu":
            v = lp.check_L_mu(frame, eps_m[flat])
            status = {True: lp.SATISFIED, False: lp.VIOLATED, None: lp.UNDECIDED}[v.satisfied]
            reason = v.branch
        elif op == "L_rho":
            u_tt = np.zeros(3) if acc_vals is None else acc_vals.reshape(3, -1)[:, flat]
            ok = lp.check_L_rho(frame, u_tt, acc_scale)
            status = lp.SATISFIED if ok else lp.VIOLATED
            reason = "u_tt != 0" if ok else "u_tt = 0 at the boundary point"
        else:
            ok = lp.check_L_pmu(frame, eps_m[flat])
            status = lp.SATISFIED if ok else lp.UNDECIDED
            reason = "normal is not a strain eigenvector" if ok else "sufficient condition not met"
        counts[status] += 1
        if status != lp.SATISFIED and len(report) < max_report:
            report.append({"face": face, "point": frame.y.tolist(), "nu": frame.nu.tolist(),
                           "zeta": frame.zeta.tolist(), "status": status, "reason": reason})
    total = sum(counts.values())
    if counts[lp.VIOLATED]:
        verdict = lp.VIOLATED
    elif counts[lp.UNDECIDED]:
        verdict = lp.UNDECIDED
    else:
        verdict = lp.SATISFIED
    res = {"command": "lopatinskii", "operator": op, "method": method, "prime": prime,
           "frames": total, "counts": counts, "verdict": verdict, "non_satisfied": report}
    return res, EXIT_OK


def _synthesize_data(kind: str, state: ReferenceState, truth: dict, K: int):
    from elastostab.inverse import forward_increment

    if len(truth) != 1:
        raise ConfigError("[reconstruct]: synthetic data needs exactly one truth field")
    (name, field), = truth.items()
    return [forward_increment(kind, state, field, k) for k in range(K)]


def cmd_reconstruct(cfg: RunConfig, out: Path) -> tuple[dict, int]:
    from elastostab.config import FieldSpec
    from elastostab.inverse import ReconstructionError, reconstruct_sweep
    from elastostab.linop import PARAMS, normalize_kind

    sec = _validate_section(cfg, "reconstruct")
    kind = normalize_kind(cfg.kind)
    state = build_state(cfg)
    K = int(sec.get("n_measurements", state.n_measurements))
    if not 1 <= K <= state.n_measurements:
        raise ConfigError(f"[reconstruct]: n_measurements {K} out of range")
    truth = {}
    for name, raw in dict(sec.get("truth", {})).items():
        if name not in PARAMS[kind]:
            raise ConfigError(f"[reconstruct]: {kind} has no parameter {name!r}")
        truth[name] = FieldSpec.parse(raw, 0, cfg.base, f"truth.{name}").realize(cfg.grid.static(), 0).values
    if "data" in sec:
        files = sec["data"]
        if len(files) != K:
            raise ConfigError(f"[reconstruct]: need {K} data files")
        data = [FieldSpec.parse({"file": f}, 3, cfg.base, "data").realize(cfg.grid, 3) for f in files]
    elif truth:
        data = _synthesize_data(kind, state, truth, K)
    else:
        raise ConfigError("[reconstruct]: give 'data' files or a 'truth' field")
    weights = sec.get("weights", list(np.logspace(-5, -2, 6)))
    if not weights or any(float(w) < 0 for w in weights):
        raise ConfigError("[reconstruct]: weights must be a nonempty list of nonnegative numbers")
    boundary = sec.get("boundary", "B")
    try:
        if truth:
            results, best = reconstruct_sweep(kind, state, data, weights, truth, boundary=boundary)
        else:
            results, best = _sweep_without_truth(kind, state, data, weights, boundary)
    except ReconstructionError as exc:
        raise CommandError(str(exc), EXIT_SOLVER) from None
    for name, vals in best.increments.items():
        if name.startswith("du"):
            io.write_field(VectorField(state.grid, vals), out / f"{name}.json")
        elif vals.ndim == 3:
            io.write_field(ScalarField(state.grid, vals), out / f"{name}.json")
    res = {"command": "reconstruct", "kind": kind, "boundary": boundary, "n_measurements": K,
           "sweep": [{"reg_weight": r.reg_weight, "residual": r.residual, "iterations": r.iterations,
                      "rel_errors": r.rel_errors} for r in results],
           "best_reg_weight": best.reg_weight}
    return res, EXIT_OK


def _sweep_without_truth(kind, state, data, weights, boundary):
    """Without ground truth the smallest-residual weight is reported."""
    from elastostab.inverse import NormalSolver, reconstruct
    from elastostab.linop import assemble

    weights = sorted(float(w) for w in weights)
    solver = NormalSolver(assemble(kind, state, len(data), boundary), weights[0])
    results = [reconstruct(kind, state, data, w, None, boundary, solver) for w in weights]
    return results, min(results, key=lambda r: r.residual)


def cmd_svd(cfg: RunConfig, out: Path) -> tuple[dict, int]:
    from elastostab.inverse import SizeLimitError, nullspace_probe
    from elastostab.linop import assemble, normalize_kind

    sec = _validate_section(cfg, "svd")
    kind = normalize_kind(cfg.kind)
    state = build_state(cfg)
    K = int(sec.get("n_measurements", state.n_measurements))
    S = assemble(kind, state, K, sec.get("boundary", "B"))
    try:
        pr = nullspace_probe(S, int(sec.get("k", 4)))
    except SizeLimitError as exc:
        raise CommandError(str(exc), EXIT_SIZE) from None
    for name, vecs in pr.param_vectors.items():
        blk = S.column(name)
        for j in range(vecs.shape[1]):
            v = vecs[:, j].reshape(blk.shape)
            if v.ndim == 3:
                # fix the sign so repeated runs write identical files
                s = np.sign(v.ravel()[np.argmax(np.abs(v))]) or 1.0
                io.write_field(ScalarField(state.grid, s * v), out / f"{name}_sv{j + 1}.json")
    res = {"command": "svd", "kind": kind, "n_measurements": K, "shape": list(S.shape),
           "singular_values": pr.singular_values, "sigma_max": pr.sigma_max,
           "relative": pr.relative(), "kernel_dim": pr.kernel_dim}
    return res, EXIT_OK


HANDLERS = {"simulate": cmd_simulate, "diagnose": cmd_diagnose, "kernel": cmd_kernel,
            "lopatinskii": cmd_lopatinskii, "reconstruct": cmd_reconstruct, "svd": cmd_svd}


# ---------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="elastostab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, type=Path)
        s.add_argument("--out", type=Path)
        s.add_argument("--seed", type=int)
        s.add_argument("--dry-run", action="store_true", help="validate the configuration and exit")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, {"seed": args.seed})
        _validate_section(cfg, args.command)
        out = args.out or cfg.out or Path(DEFAULT_OUT)
        if args.dry_run:
            print(io.dumps({"command": args.command, "config": str(args.config), "valid": True,
                            "grid": list(cfg.grid.dims), "measurements": len(cfg.measurements)}), end="")
            return EXIT_OK
        np.random.seed(cfg.seed)
        out.mkdir(parents=True, exist_ok=True)
        result, code = HANDLERS[args.command](cfg, out)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, GridError, MaterialError, io.FieldFileError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    result["seed"] = cfg.seed
    io.write_json(result, out / f"{args.command}.json")
    print(io.dumps(result), end="")
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
