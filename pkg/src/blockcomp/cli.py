"""Command-line driver: single solves, sweeps, closed-form tables, traces.

Every command is deterministic in (config, seed). Results go to ``--out``
(or stdout) as CSV/JSON, progress to stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import hybrid, kkt, reliability, sca
from .config import ConfigError, SystemConfig, load_config

log = logging.getLogger("blockcomp")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4

# sweep keys and the config field each one sets; n_rf goes to the hybrid stage
SWEEP_KEYS = {
    "eta": "blockage_density",
    "L": "subset_floor",
    "tx_power_dbm": "tx_power_dbm",
    "psi": "best_response_step",
    "beta": "subgrad_step",
    "n_rf": None,
}
SOLVER_ERRORS = (kkt.BisectionError, kkt.DualContractError, sca.BackendError)


class SolverFailure(RuntimeError):
    pass


def _num(text: str):
    value = float(text)
    return int(value) if value.is_integer() and "." not in text and "e" not in text.lower() else value


def parse_sweep(text: str) -> tuple[str, list]:
    """"KEY=V1,V2,..." -> (key, values)."""
    key, sep, values = text.partition("=")
    key = key.strip()
    if not sep or key not in SWEEP_KEYS:
        raise ConfigError(f"sweep must look like KEY=V1,V2 with KEY in {sorted(SWEEP_KEYS)}, got {text!r}")
    try:
        vals = [_num(v) for v in values.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad sweep value in {text!r}") from exc
    if not vals:
        raise ConfigError(f"sweep {key} has no values")
    return key, vals


def _config(args) -> SystemConfig:
    cfg = load_config(args.config) if args.config else SystemConfig()
    if args.seed is not None:
        cfg = cfg.replace(rng_seed=args.seed)
    return cfg


def _hybrid_cfg(args, cfg: SystemConfig, n_rf: Optional[int] = None) -> Optional[hybrid.HybridConfig]:
    if args.hybrid == "off":
        return None
    if args.hybrid == "compromise":
        hc = hybrid.HybridConfig(1, "compromise")
    else:
        hc = hybrid.HybridConfig(n_rf or args.n_rf or cfg.num_users, "per_user")
    hc.validate(cfg.num_users, cfg.antennas_per_rru)
    return hc


def _emit(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    Path(out).write_text(text)


def _cplx(a: np.ndarray) -> list:
    return np.stack([a.real, a.imag], axis=-1).tolist()


def _floats(a) -> list:
    return [float(x) for x in np.asarray(a, dtype=float).ravel()]


# ----------------------------------------------------------------------------
# commands


def cmd_solve(args) -> str:
    cfg = _config(args)
    drop = reliability.draw_drop(cfg, cfg.rng_seed, 0)
    H = drop.channels.estimation
    sets = drop.topology.serving_sets
    hc = _hybrid_cfg(args, cfg)
    log.info("solving one drop with %s (hybrid=%s)", args.solver, args.hybrid)
    try:
        if hc is not None:
            sol = hybrid.hybrid_solve(H, sets, cfg, hc, solver=args.solver)
            res, beams = sol.results[0], sol.beams[0]
        elif args.solver == "sca":
            res = sca.sca_solve(H, sets, cfg)
            beams = res.beams.f
        else:
            res = kkt.solve(H, sets, cfg)
            beams = res.beams.f
    except SOLVER_ERRORS as exc:
        raise SolverFailure(str(exc)) from exc
    doc = {
        "format": "blockcomp.solution/1",
        "seed": cfg.rng_seed,
        "solver": args.solver,
        "hybrid": args.hybrid,
        "config": cfg.to_dict(),
        "rru_positions": drop.topology.rru_positions.tolist(),
        "user_positions": drop.topology.user_positions.tolist(),
        "serving_sets": [list(s) for s in sets],
        "beams": _cplx(beams),
        "gammas": _floats(res.gammas),
        "gamma_targets": _floats(res.gamma_iterate),
        "rates_bits": _floats(np.log2(1.0 + np.asarray(res.gammas))),
        "objective": float(res.objective),
        "duals_subset": _floats(res.duals.a),
        "duals_power": _floats(res.duals.z),
        "iterations": res.iterations,
        "converged": res.converged,
        "objective_trace": _floats(res.objective_trace),
    }
    if res.outer_objectives is not None:
        doc["outer_objectives"] = _floats(res.outer_objectives)
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def _designs(args) -> list[str]:
    return [args.solver] + list(args.baseline or [])


def cmd_sweep(args) -> str:
    base = _config(args)
    if not args.sweep:
        raise ConfigError("sweep needs at least one --sweep KEY=V1,V2")
    specs = [parse_sweep(s) for s in args.sweep]
    keys = [k for k, _ in specs]
    if len(set(keys)) != len(keys):
        raise ConfigError("each sweep key may appear once")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"sweep_{k}" for k in keys] + list(reliability.CSV_COLUMNS) + ["failures"])
    for values in itertools.product(*(v for _, v in specs)):
        changes = {SWEEP_KEYS[k]: v for k, v in zip(keys, values) if SWEEP_KEYS[k]}
        try:
            cfg = base.replace(**changes)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        n_rf = dict(zip(keys, values)).get("n_rf")
        drops = [reliability.draw_drop(cfg, cfg.rng_seed, i) for i in range(args.drops)]
        for design in _designs(args):
            log.info("sweep point %s design %s", dict(zip(keys, values)), design)
            hc = _hybrid_cfg(args, cfg, n_rf) if design in reliability.SOLVERS else None
            if hc is not None:
                fn = hybrid.hybrid_designer(hc, solver=design)
                rep = reliability.monte_carlo_outage(cfg, args.drops, f"{design}+{hc.mode}",
                                                     drop_list=drops, beams_fn=fn)
            else:
                rep = reliability.monte_carlo_outage(cfg, args.drops, design, drop_list=drops)
            w.writerow([repr(v) for v in values] + rep.csv_row() + [rep.failures])
    return buf.getvalue()


def cmd_theory(args) -> str:
    base = _config(args)
    specs = dict(parse_sweep(s) for s in (args.sweep or []))
    unknown = set(specs) - {"eta", "L"}
    if unknown:
        raise ConfigError(f"theory sweeps only eta and L, got {sorted(unknown)}")
    etas = specs.get("eta", [base.blockage_density])
    floors = specs.get("L", [base.subset_floor])
    K = base.num_users
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["eta", "L", "drops", "theory_outage", "bound_outage"]
               + [f"success_{k}" for k in range(K)] + [f"bound_{k}" for k in range(K)])
    topos = [reliability.draw_drop(base, base.rng_seed, i).topology for i in range(args.drops)]
    for eta, L in itertools.product(etas, floors):
        cfg = base.replace(blockage_density=float(eta), subset_floor=int(L))
        p = np.array([[reliability.success_probability(k, t, cfg) for k in range(K)] for t in topos])
        q = np.array([[reliability.success_upper_bound(k, t, cfg) for k in range(K)] for t in topos])
        row = [repr(float(eta)), int(L), len(topos),
               repr(float(np.mean(1.0 - p.prod(axis=1)))), repr(float(np.mean(1.0 - q.prod(axis=1))))]
        w.writerow(row + [repr(float(x)) for x in p.mean(axis=0)] + [repr(float(x)) for x in q.mean(axis=0)])
    return buf.getvalue()


def convergence_traces(cfg: SystemConfig, solvers: Sequence[str]) -> list[tuple[str, str, kkt.SolverResult]]:
    drop = reliability.draw_drop(cfg, cfg.rng_seed, 0)
    H, sets = drop.channels.estimation, drop.topology.serving_sets
    out = []
    for solver in solvers:
        for init in ("mrt", "random"):
            rng = np.random.default_rng(np.random.SeedSequence([cfg.rng_seed, 1]))
            fn = sca.sca_solve if solver == "sca" else kkt.solve
            out.append((solver, init, fn(H, sets, cfg, init=init, rng=rng)))
    return out


def cmd_convergence(args) -> str:
    cfg = _config(args)
    solvers = ["kkt", "sca"] if args.solver == "both" else [args.solver]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["solver", "init", "iteration", "outer_iteration", "objective", "max_violation"])
    try:
        traces = convergence_traces(cfg, solvers)
    except SOLVER_ERRORS as exc:
        raise SolverFailure(str(exc)) from exc
    for solver, init, res in traces:
        log.info("%s/%s: %d iterations, objective %.6g", solver, init, res.iterations, res.objective)
        outer = res.outer_index if res.outer_index is not None else np.zeros(len(res.objective_trace), int)
        for i, (obj, vio, o) in enumerate(zip(res.objective_trace, res.violation_trace, outer)):
            w.writerow([solver, init, i, int(o), repr(float(obj)), repr(float(vio))])
    return buf.getvalue()


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "theory": cmd_theory,
            "convergence": cmd_convergence}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="blockcomp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        c = sub.add_parser(name)
        c.add_argument("--config", help="TOML or JSON config file (defaults when omitted)")
        c.add_argument("--seed", type=int, help="master seed; overrides rng_seed")
        c.add_argument("--out", help="output file (stdout when omitted)")
        c.add_argument("--drops", type=int, default=1, help="random drops per point")
        solvers = ["kkt", "sca", "both"] if name == "convergence" else ["kkt", "sca"]
        c.add_argument("--solver", choices=solvers, default="kkt")
        c.add_argument("--baseline", nargs="*", choices=reliability.BASELINES, default=[])
        c.add_argument("--sweep", action="append", metavar="KEY=V1,V2,...")
        c.add_argument("--hybrid", choices=["off", *hybrid.MODES], default="off")
        c.add_argument("--n-rf", dest="n_rf", type=int, help="RF chains per RRU (per_user mode)")
        c.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        if args.drops < 1:
            raise ConfigError("--drops must be >= 1")
        text = COMMANDS[args.command](args)
        _emit(text, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
