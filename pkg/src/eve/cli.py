"""Command-line front door: initialize, run, verify, and report on runs.

Exit codes: 0 ok, 1 usage error, 2 integrity/lock error, 3 plugin failure.
The bundled synthetic presets make ``eve init R && eve run R && eve report R``
work with zero external dependencies.
"""

from __future__ import annotations

import argparse
import json
import sys
import tempfile
from pathlib import Path

from . import pe as pe_kernels
from .accounting import build_report_rows, render_report_csv, render_report_table
from .errors import IntegrityError, PluginError, UsageError
from .mocks import PRESETS, write_tree
from .model import RunConfig, VARIANT_STATIC_FINAL, VARIANTS
from .orchestrator import Orchestrator, initialize_run, select_best_agent
from .storage import load_state, remove_tree, verify_run

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INTEGRITY = 2
EXIT_PLUGIN = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eve", description="Evolutionary-ensemble orchestration engine"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_dir(p: argparse.ArgumentParser) -> None:
        p.add_argument("run_dir", type=Path, nargs="?")
        p.add_argument("--run-dir", dest="run_dir_opt", type=Path, help=argparse.SUPPRESS)

    p_init = sub.add_parser("init", help="create a run directory and evaluate the seed")
    add_run_dir(p_init)
    p_init.add_argument("--preset", choices=sorted(PRESETS), default="two-phase")
    p_init.add_argument("--config", type=Path, help="JSON file overriding preset config keys")
    p_init.add_argument("--variant", choices=VARIANTS, default="eve")
    p_init.add_argument("--seed", type=int, default=0, help="rng seed of the run")
    p_init.add_argument("--iterations", type=int, help="override total iterations")
    p_init.add_argument(
        "--frozen-agent",
        type=Path,
        help="agent dir (or completed run dir) supplying the static-final guidance",
    )
    p_init.add_argument("--base-repo", type=Path, help="base repository tree")
    p_init.add_argument("--seed-solver", type=Path, help="seed solver file tree")
    p_init.add_argument("--seed-guidance", type=Path, help="seed guidance tree")
    p_init.add_argument("--force", action="store_true", help="replace an existing run dir")

    p_run = sub.add_parser("run", help="run iterations (resumes committed runs)")
    add_run_dir(p_run)
    p_run.add_argument("--iterations", type=int, help="run up to this iteration number")

    p_report = sub.add_parser("report", help="per-iteration trajectory report")
    add_run_dir(p_report)
    p_report.add_argument("--format", choices=("csv", "table"), default="table")

    p_verify = sub.add_parser("verify", help="integrity-check a run directory")
    add_run_dir(p_verify)

    p_pe = sub.add_parser("pe", help="positional-encoding kernel utilities")
    pe_sub = p_pe.add_subparsers(dest="pe_command", required=True)
    p_eval = pe_sub.add_parser("eval", help="evaluate one encoding at one position")
    p_eval.add_argument(
        "--variant",
        required=True,
        choices=(
            "vanilla",
            "role-only",
            "interpolated-demo",
            "structured-function",
            "overflow-gated",
            "demo-role-sqrt",
            "demo-role-tanh",
            "demo-role-linear",
        ),
    )
    p_eval.add_argument("--p", type=int, required=True, help="flat token position")
    p_eval.add_argument("--m-train", type=int, default=5)
    p_eval.add_argument("--m-max", type=float, help="largest example index in the batch")
    p_eval.add_argument("--d", type=int, default=4, help="embedding dimension")
    p_eval.add_argument("--alpha", type=float, default=1.0)
    p_eval.add_argument("--delta", type=float, default=2.0)
    p_eval.add_argument("--tau", type=float, default=3.0)
    p_eval.add_argument("--slope", type=float, default=0.5)
    p_eval.add_argument("--base", type=float, default=10000.0)
    p_eval.add_argument("--local-offset", type=int, default=0)
    p_eval.add_argument("--tables", type=Path, help="JSON table fixture file")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    if getattr(args, "run_dir_opt", None) is not None:
        args.run_dir = args.run_dir_opt
    try:
        if args.command != "pe" and args.run_dir is None:
            raise UsageError("a run directory is required (positional or --run-dir)")
        if args.command == "init":
            return _cmd_init(args)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "report":
            return _cmd_report(args)
        if args.command == "verify":
            return _cmd_verify(args)
        if args.command == "pe":
            return _cmd_pe_eval(args)
        raise UsageError(f"unknown command {args.command!r}")
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IntegrityError as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        for problem in exc.problems:
            print(f"  - {problem}", file=sys.stderr)
        return EXIT_INTEGRITY
    except PluginError as exc:
        print(f"plugin failure: {exc}", file=sys.stderr)
        return EXIT_PLUGIN


def _cmd_init(args: argparse.Namespace) -> int:
    run_dir: Path = args.run_dir
    if run_dir.exists():
        if not args.force:
            raise UsageError(f"{run_dir} already exists (use --force to replace it)")
        remove_tree(run_dir)

    preset = PRESETS[args.preset]
    config_data = preset.default_config()
    if args.config is not None:
        try:
            overrides = json.loads(args.config.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"unreadable config file: {exc}") from exc
        config_data.update(overrides)
    if args.iterations is not None:
        config_data["total_iterations"] = args.iterations
    try:
        config = RunConfig.from_dict(config_data)
        config.validate()
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid config: {exc}") from exc

    frozen_agent_dir = None
    if args.variant == VARIANT_STATIC_FINAL:
        if args.frozen_agent is None:
            raise UsageError("--frozen-agent is required for the static-final variant")
        frozen_agent_dir = _resolve_frozen_agent(args.frozen_agent)

    with tempfile.TemporaryDirectory(prefix="eve-init-") as scratch_str:
        scratch = Path(scratch_str)
        base_repo = args.base_repo
        if base_repo is None:
            base_repo = scratch / "base_repo"
            write_tree(base_repo, preset.base_repo_tree())
        seed_solver = args.seed_solver
        if seed_solver is None:
            seed_solver = scratch / "seed_solver"
            write_tree(seed_solver, preset.seed_solver_tree())
        seed_guidance = args.seed_guidance
        if seed_guidance is None:
            seed_guidance = scratch / "seed_guidance"
            write_tree(seed_guidance, preset.seed_guidance())

        try:
            initialize_run(
                run_dir,
                config,
                args.variant,
                args.seed,
                base_repo_src=base_repo,
                seed_solver_src=seed_solver,
                seed_guidance_src=seed_guidance,
                frozen_agent_dir=frozen_agent_dir,
            )
        except PluginError:
            if run_dir.exists():
                remove_tree(run_dir)
            raise
    print(f"initialized {args.variant} run at {run_dir}")
    return EXIT_OK


def _resolve_frozen_agent(path: Path) -> Path:
    """Accept either an agent directory or a completed run directory."""
    path = Path(path)
    if (path / "guidance").is_dir():
        return path
    if (path / "config.json").is_file():
        state = load_state(path)
        best = select_best_agent(state)
        return path / "populations" / "agents" / best.id
    raise UsageError(f"{path} is neither an agent directory nor a run directory")


def _cmd_run(args: argparse.Namespace) -> int:
    state = load_state(args.run_dir)
    orchestrator = Orchestrator(state)
    orchestrator.run(until=args.iterations)
    done = len(state.iterations)
    print(
        f"run at iteration {done}/{state.config.total_iterations}: "
        f"{len(state.solvers)} solvers, {len(state.agents)} agents, "
        f"best error {state.best_so_far(done):.4f}"
    )
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    state = load_state(args.run_dir, prune=False)
    rows = build_report_rows(state)
    if args.format == "csv":
        sys.stdout.write(render_report_csv(rows))
    else:
        sys.stdout.write(render_report_table(rows))
    return EXIT_OK


def _cmd_verify(args: argparse.Namespace) -> int:
    problems = verify_run(args.run_dir)
    if problems:
        raise IntegrityError(f"{args.run_dir} failed verification", problems)
    print(f"{args.run_dir} passes integrity checks")
    return EXIT_OK


def _default_tables(d: int, m_train: int) -> pe_kernels.EmbeddingTables:
    demo = [[round(i + j / 10, 6) for j in range(d)] for i in range(m_train + 1)]
    role = [[float(10 * (r + 1) + j) for j in range(d)] for r in range(3)]
    type_rows = [[float(100 * (r + 1) + j) for j in range(d)] for r in range(3)]
    gates = {"g_d": 1.0, "g_r": 1.0, "lambda": 1.0, "sigma": 1.0, "gate": 0.0, "overflow_scale": 1.0}
    return pe_kernels.EmbeddingTables(
        demo_table=demo, role_table=role, type_table=type_rows, gates=gates
    )


def _load_tables(path: Path) -> pe_kernels.EmbeddingTables:
    data = json.loads(path.read_text(encoding="utf-8"))
    return pe_kernels.EmbeddingTables(
        demo_table=data["demo_table"],
        role_table=data["role_table"],
        type_table=data.get("type_table"),
        gates=data.get("gates", {}),
    )


def _cmd_pe_eval(args: argparse.Namespace) -> int:
    params = pe_kernels.CompressionParams(
        m_train=args.m_train,
        alpha=args.alpha,
        delta=args.delta,
        tau=args.tau,
        linear_slope=args.slope,
        sinusoid_base=args.base,
    )
    params.validate()
    tables = _load_tables(args.tables) if args.tables else _default_tables(args.d, args.m_train)
    idx = pe_kernels.decompose(args.p)
    m_max = args.m_max if args.m_max is not None else float(idx.m)

    variant = args.variant
    coord: float
    if variant == "vanilla":
        vec = pe_kernels.pe_vanilla(args.p, tables.demo_table)
        coord = float(args.p)
    elif variant == "role-only":
        vec = pe_kernels.pe_role_only(args.p, tables, params)
        coord = float(idx.r)
    elif variant == "interpolated-demo":
        coord = pe_kernels.rescale_global(idx.m, m_max, params.m_train)
        vec = pe_kernels.pe_interpolated_demo(args.p, m_max, tables, params)
    elif variant == "structured-function":
        coord = pe_kernels.rescale_global(idx.m, m_max, params.m_train)
        vec = pe_kernels.pe_structured_function(args.p, m_max, tables, params, args.local_offset)
    elif variant == "overflow-gated":
        coord = pe_kernels.rescale_global(idx.m, m_max, params.m_train)
        vec = pe_kernels.pe_overflow_gated(args.p, m_max, tables, params)
    else:
        flavor = variant.rsplit("-", 1)[-1]
        compress = {
            "sqrt": pe_kernels.compress_sqrt,
            "tanh": pe_kernels.compress_tanh,
            "linear": pe_kernels.compress_linear_clamp,
        }[flavor]
        coord = compress(idx.m, params)
        vec = pe_kernels.pe_structured_demo_role(args.p, tables, params, flavor)

    print(f"p={args.p} m={idx.m} r={idx.r} coordinate={coord!r}")
    print("vector=" + json.dumps(vec))
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
