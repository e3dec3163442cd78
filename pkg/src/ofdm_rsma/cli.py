"""Command-line front end: run sweeps, emit complexity tables and traces."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .baselines import Scheme
from .channel import ConfigurationError, SystemConfig
from .harness import (
    ExperimentSpec,
    SpecValidationError,
    complexity_table,
    emit_outputs,
    prepare_output_dir,
    run_experiment,
    run_trace,
)
from .pso import PsoConfig


def load_spec(path: str | Path) -> ExperimentSpec:
    """Build an experiment spec from a TOML file with [system], [pso],
    [sweep], [output] and optional [optimizer] sections."""
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    try:
        sys_d = data["system"]
        sweep = data["sweep"]
        output = data.get("output", {})
        pso_d = data.get("pso", {})
        opt = data.get("optimizer", {})
        g_grid = tuple(int(g) for g in sweep["g"])
        system = SystemConfig(
            K=int(sys_d["K"]),
            Nt=int(sys_d["Nt"]),
            Nc=int(sys_d["Nc"]),
            delta_f=float(sys_d["delta_f"]),
            cp_len=int(sys_d["cp_len"]),
            fc=float(sys_d["fc"]),
            n_paths=int(sys_d["n_paths"]),
            v_max=float(sys_d["v_max"]),
            beta=float(sys_d["beta"]),
            Pt=float(sys_d["Pt"]),
            sigma2=1.0,  # replaced per SNR point
            r_min=tuple(float(r) for r in sys_d.get("r_min", [0.0] * int(sys_d["K"]))),
            n_clusters=g_grid[0],
        )
        pso_cfg = PsoConfig(
            swarm=int(pso_d.get("swarm", 400)),
            iters=int(pso_d.get("iters", 100)),
            c1=float(pso_d.get("c1", 1.4)),
            c2=float(pso_d.get("c2", 1.4)),
            omega_max=float(pso_d.get("omega_max", 0.9)),
            omega_min=float(pso_d.get("omega_min", 0.4)),
        )
        spec = ExperimentSpec(
            system=system,
            pso=pso_cfg,
            snr_grid=tuple(float(s) for s in sweep["snr_db"]),
            g_grid=g_grid,
            schemes=tuple(Scheme(s) for s in sweep["schemes"]),
            trials=int(sweep["trials"]),
            master_seed=int(sweep.get("master_seed", 0)),
            output_dir=str(output.get("dir", "out")),
            output_format=str(output.get("format", "csv")),
            outer_rounds=int(opt.get("outer_rounds", 2)),
            wmmse_tol=float(opt.get("wmmse_tol", 1e-3)),
            wmmse_max_epochs=int(opt.get("wmmse_max_epochs", 30)),
        )
    except KeyError as exc:
        raise SpecValidationError(f"missing spec field: {exc}") from exc
    spec.validate()
    return spec


def _apply_overrides(spec: ExperimentSpec, args) -> ExperimentSpec:
    from dataclasses import replace

    updates = {}
    if args.seed is not None:
        updates["master_seed"] = args.seed
    if args.trials is not None:
        updates["trials"] = args.trials
    if args.out is not None:
        updates["output_dir"] = args.out
    if getattr(args, "format", None) is not None:
        updates["output_format"] = args.format
    return replace(spec, **updates) if updates else spec


def _cmd_run(args) -> int:
    spec = _apply_overrides(load_spec(args.spec), args)
    prepare_output_dir(spec.output_dir)  # fail on unwritable paths before computing
    result = run_experiment(spec)
    paths = emit_outputs(result)
    print(f"wrote {paths['results']}")
    print(f"rows={len(result.rows)} failures={len(result.failures)}")
    if result.failure_rate > 0.2:
        print("failure rate above 20%", file=sys.stderr)
        return 2
    return 0


def _cmd_table1(args) -> int:
    spec = _apply_overrides(load_spec(args.spec), args)
    table = complexity_table(spec)
    lines = ["g,ops,ratio_to_parallel"]
    for row in table:
        lines.append(f"{row['g']},{row['ops']!r},{row['ratio_to_parallel']!r}")
    text = "\n".join(lines) + "\n"
    if args.out:
        out = prepare_output_dir(args.out) / "complexity_table.csv"
        out.write_text(text, encoding="utf-8")
        print(f"wrote {out}")
    else:
        print(text, end="")
    return 0


def _cmd_trace(args) -> int:
    spec = _apply_overrides(load_spec(args.spec), args)
    out_dir = prepare_output_dir(spec.output_dir)
    rows = run_trace(spec, trial=args.trial)
    lines = ["scheme,g,snr_db,epoch,sum_rate"]
    for r in rows:
        lines.append(
            f"{r['scheme']},{r['g']},{r['snr_db']!r},{r['epoch']},{r['sum_rate']!r}"
        )
    out = out_dir / "trace.csv"
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ofdm-rsma",
        description="Rate-splitting MIMO-OFDM sweeps with hybrid SIC receivers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a Monte-Carlo sweep from a TOML spec")
    run_p.add_argument("spec")
    run_p.add_argument("--seed", type=int, default=None, help="override master seed")
    run_p.add_argument("--trials", type=int, default=None)
    run_p.add_argument("--out", default=None, help="override output directory")
    run_p.add_argument("--format", choices=["csv", "json"], default=None)
    run_p.set_defaults(func=_cmd_run)

    t1 = sub.add_parser("table1", help="emit the SIC complexity table only")
    t1.add_argument("spec")
    t1.add_argument("--seed", type=int, default=None)
    t1.add_argument("--trials", type=int, default=None)
    t1.add_argument("--out", default=None)
    t1.set_defaults(func=_cmd_table1)

    tr = sub.add_parser("trace", help="emit a per-epoch convergence trace")
    tr.add_argument("spec")
    tr.add_argument("--trial", type=int, default=0)
    tr.add_argument("--seed", type=int, default=None)
    tr.add_argument("--trials", type=int, default=None)
    tr.add_argument("--out", default=None)
    tr.set_defaults(func=_cmd_trace)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SpecValidationError, ConfigurationError, FileNotFoundError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
