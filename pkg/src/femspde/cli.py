"""Command-line experiment driver.

Three subcommands cover the workflow:

    femspde verify-element --preset hat1d
    femspde simulate --preset hat1d --problem heat.prob --L 6.2831853 --n 32 --T 0.5
    femspde convergence --preset hat1d --problem heat.prob --L 6.2831853 --n 16 --T 0.5

plus ``femspde replay manifest.json`` which re-executes a recorded run.
Every run writes its outputs under a timestamped directory containing a
manifest sufficient for bit-exact replay: problem and element sources are
inlined, so a manifest is self-contained.

Exit codes: 0 success/PASS, 1 usage or input error, 2 verification FAIL,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from .assembly import AssembledProblem
from .checks import verify_element
from .elements import (
    ElementFormatError,
    FiniteElement,
    build_element,
    parse_element_text,
    validate_element,
    validate_element_structure,
)
from .expr import ExprSyntaxError
from .integrator import IntegrationError, NoisePath, SolverConfig, SolverError, integrate
from .lattice import build_torus, write_grid_function_csv
from .polynomials import GeometryError
from .problem import ProblemFormatError, parse_problem_text
from .richardson import RATIO_QUARTER, RATIO_SIXTEENTH, write_loglog_svg
from .study import StudyConfig, run_convergence_study
from .tensors import compute_reference_tensors

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFY_FAIL = 2
EXIT_NUMERICAL = 3

OUTPUT_DIR_ENV = "FEMSPDE_OUT"

RATIOS = {"quarter": RATIO_QUARTER, "sixteenth": RATIO_SIXTEENTH}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; usage errors are exit 1
        self.print_usage(sys.stderr)
        raise UsageError(message)


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    """Everything needed to re-execute a run bit-exactly."""

    command: str
    preset: str | None = None
    element_text: str | None = None
    problem_text: str | None = None
    L: float = 2.0 * np.pi
    n: int = 32
    T: float = 0.5
    steps: int | None = None
    dt_factor: float = 0.5
    seed: int = 2024
    samples: int = 1
    rho_max: int | None = None
    jbar: int = 1
    ratio: str = "quarter"
    tol: float = 1e-10
    max_iter: int = 2000
    quad_order: int | None = None
    ladder: int = 4
    ref_n: int | None = None
    record: str = "terminal"
    h_sign: str = "plus"
    svg: bool = False
    grid: int = 0  # symbol grid points per axis for verify-element (0 = default)

    def to_manifest(self) -> dict:
        return {
            "femspde_manifest": 1,
            "version": __version__,
            "command": self.command,
            "config": dataclasses.asdict(self),
        }

    @staticmethod
    def from_manifest(doc: dict) -> "RunConfig":
        if doc.get("femspde_manifest") != 1:
            raise UsageError("not a femspde manifest")
        cfg = doc.get("config", {})
        cfg.pop("command", None)
        command = doc.get("command")
        if command not in COMMANDS:
            raise UsageError(f"manifest names an unknown command {command!r}")
        try:
            return RunConfig(command=command, **cfg)
        except TypeError as exc:
            raise UsageError(f"manifest has unrecognized configuration keys: {exc}") from exc


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _make_run_dir(out: str | None, command: str) -> str:
    base = out or os.environ.get(OUTPUT_DIR_ENV) or "runs"
    for attempt in range(100):
        stamp = time.strftime("%Y%m%d-%H%M%S") + f"-{int((time.time() % 1) * 1e6):06d}"
        suffix = "" if attempt == 0 else f"-{attempt}"
        path = os.path.join(base, f"run-{stamp}{suffix}-{command}")
        try:
            os.makedirs(path, exist_ok=False)
            return path
        except FileExistsError:
            continue
    raise OSError(f"could not create a fresh run directory under {base!r}")


def _write_manifest(run_dir: str, config: RunConfig) -> None:
    text = json.dumps(config.to_manifest(), sort_keys=True, indent=2) + "\n"
    with open(os.path.join(run_dir, "manifest.json"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _load_element(config: RunConfig, structural_only: bool = False) -> FiniteElement:
    if config.element_text is not None:
        element = parse_element_text(config.element_text)
    elif config.preset:
        element = build_element(config.preset)
    else:
        raise UsageError("one of --preset or --element-file is required")
    # verify-element reports analytic violations instead of rejecting them
    if structural_only:
        validate_element_structure(element)
    else:
        validate_element(element)
    return element


def _resolve_steps(config: RunConfig, finest_n: int) -> int:
    if config.steps is not None:
        return config.steps
    h_finest = config.L / finest_n
    dt = config.dt_factor * h_finest**2
    return max(1, int(np.ceil(config.T / dt)))


def _h_sign(config: RunConfig) -> float:
    if config.h_sign not in ("plus", "minus"):
        raise UsageError(f"--h-sign must be plus or minus, got {config.h_sign!r}")
    return 1.0 if config.h_sign == "plus" else -1.0


# ---------------------------------------------------------------------------
# subcommand implementations (driven by a RunConfig, replayable)
# ---------------------------------------------------------------------------


def run_verify_element(config: RunConfig, run_dir: str) -> int:
    element = _load_element(config, structural_only=True)
    tensors = compute_reference_tensors(element, config.quad_order)
    report = verify_element(element, tensors, grid_points_per_axis=config.grid)
    lines = [
        f"{'identity':38s} {'target':>14s} {'computed':>24s} {'residual':>12s} verdict"
    ]
    for row in report.details:
        verdict = row.verdict(report.residual_tol)
        lines.append(
            f"{row.name:38s} {row.target:14.6g} {row.computed:24.17g} "
            f"{row.residual:12.3e} {verdict}"
        )
    lines.append(
        f"element {report.element}: delta = {report.delta_estimate:.12g}, "
        f"cardinal {'ok' if report.cardinal_ok else 'VIOLATED'}, "
        f"overall {'PASS' if report.passed else 'FAIL'}"
    )
    table = "\n".join(lines) + "\n"
    sys.stdout.write(table)
    with open(os.path.join(run_dir, "verify_report.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(table)
    _write_manifest(run_dir, config)
    return EXIT_OK if report.passed else EXIT_VERIFY_FAIL


def run_simulate(config: RunConfig, run_dir: str) -> int:
    element = _load_element(config)
    tensors = compute_reference_tensors(element, config.quad_order)
    if config.problem_text is None:
        raise UsageError("simulate needs --problem")
    problem = parse_problem_text(config.problem_text, rho_max=config.rho_max)
    lattice = build_torus(problem.d, config.L / config.n, config.n)
    steps = _resolve_steps(config, config.n)
    config.steps = steps  # manifest records the resolved time grid
    dt = config.T / steps
    assembled = AssembledProblem(
        element, tensors, problem, lattice,
        quad_degree=config.quad_order, h=_h_sign(config) * lattice.h,
    )
    noise = None
    if problem.has_noise:
        noise = NoisePath(config.seed, steps, dt, problem.rho_max)
    cfg = SolverConfig(tol=config.tol, max_iter=config.max_iter)
    traj = integrate(assembled, noise, config.T, steps, record=config.record, cfg=cfg)
    write_grid_function_csv(os.path.join(run_dir, "terminal.csv"), traj.terminal)
    if config.record == "all":
        from .lattice import format_float

        with open(os.path.join(run_dir, "states.csv"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write("step,time,site,value\n")
            for k, state in enumerate(traj.states):
                flat = state.flat()
                tstr = format_float(traj.times[k])
                for site in range(flat.size):
                    fh.write(f"{k},{tstr},{site},{format_float(flat[site])}\n")
    _write_manifest(run_dir, config)
    sys.stdout.write(
        f"simulate: {steps} steps, dt = {dt:.6g}, sup |U|_0h = {traj.sup_norm_0h:.12g}\n"
        f"outputs in {run_dir}\n"
    )
    return EXIT_OK


def run_convergence(config: RunConfig, run_dir: str) -> int:
    element = _load_element(config)
    tensors = compute_reference_tensors(element, config.quad_order)
    if config.problem_text is None:
        raise UsageError("convergence needs --problem")
    problem = parse_problem_text(config.problem_text, rho_max=config.rho_max)
    ladder = [config.n * 2**k for k in range(config.ladder)]
    ref_n = config.ref_n if config.ref_n is not None else 4 * max(ladder)
    study = StudyConfig(
        L=config.L,
        ladder_n=ladder,
        ref_n=ref_n,
        T=config.T,
        jbar=config.jbar,
        ratio=RATIOS[config.ratio],
        samples=config.samples,
        base_seed=config.seed,
        dt_factor=config.dt_factor,
        steps=config.steps,
        quad_degree=config.quad_order,
        solver=SolverConfig(tol=config.tol, max_iter=config.max_iter),
        h_sign=_h_sign(config),
    )
    result = run_convergence_study(element, tensors, problem, study)
    config.steps = result.steps  # manifest records the resolved time grid
    result.base.write_csv(os.path.join(run_dir, "base_report.csv"))
    summary = [
        f"convergence: {result.steps} steps, dt = {result.dt:.6g}, samples = {result.samples}",
        f"base fitted order     = {result.base.fitted_order:.4f}",
    ]
    if result.mixture is not None:
        result.mixture.write_csv(os.path.join(run_dir, "mixture_report.csv"))
        summary.append(f"mixture fitted order  = {result.mixture.fitted_order:.4f}")
    if config.svg:
        write_loglog_svg(os.path.join(run_dir, "convergence.svg"), result.reports())
    _write_manifest(run_dir, config)
    sys.stdout.write("\n".join(summary) + f"\noutputs in {run_dir}\n")
    return EXIT_OK


COMMANDS = {
    "verify-element": run_verify_element,
    "simulate": run_simulate,
    "convergence": run_convergence,
}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", help="built-in element: hat1d, tensor(d), triangle2d")
    p.add_argument("--element-file", help="path to an element definition file")
    p.add_argument("--quad-order", type=int, default=None,
                   help="Gauss exactness degree per sub-cell (default: element-derived)")
    p.add_argument("--out", default=None,
                   help=f"output root (default: ${OUTPUT_DIR_ENV} or ./runs)")


def _add_problem_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--problem", required=True, help="path to a problem file")
    p.add_argument("--L", type=float, default=2.0 * np.pi, help="torus side length")
    p.add_argument("--n", type=int, default=32, help="sites per axis (coarsest for ladders)")
    p.add_argument("--T", type=float, default=0.5, help="final time")
    p.add_argument("--steps", type=int, default=None,
                   help="time steps (default: dt = dt-factor * h_finest^2)")
    p.add_argument("--dt-factor", type=float, default=0.5, help="dt rule constant")
    p.add_argument("--seed", type=int, default=2024, help="base noise seed")
    p.add_argument("--rho-max", type=int, default=None, help="noise truncation")
    p.add_argument("--tol", type=float, default=1e-10, help="linear solver tolerance")
    p.add_argument("--max-iter", type=int, default=2000, help="linear solver iteration cap")
    p.add_argument("--h-sign", choices=("plus", "minus"), default="plus",
                   help="sign of h fed to assembly (the scheme is invariant)")


def build_argparser() -> _Parser:
    parser = _Parser(prog="femspde", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify-element", parents=[], help="check the element assumptions")
    _add_common(p)
    p.add_argument("--grid", type=int, default=0, help="symbol grid points per axis")

    p = sub.add_parser("simulate", help="single solve of a problem")
    _add_common(p)
    _add_problem_args(p)
    p.add_argument("--record", choices=("terminal", "all"), default="terminal")

    p = sub.add_parser("convergence", help="mesh-ladder convergence study")
    _add_common(p)
    _add_problem_args(p)
    p.add_argument("--samples", type=int, default=1, help="Monte Carlo samples")
    p.add_argument("--jbar", type=int, default=1, help="extra extrapolation levels")
    p.add_argument("--ratio", choices=tuple(RATIOS), default="quarter",
                   help="per-halving error factor of the leading term")
    p.add_argument("--ladder", type=int, default=4, help="number of ladder meshes")
    p.add_argument("--ref-n", type=int, default=None,
                   help="reference resolution (default: 4 x finest ladder mesh)")
    p.add_argument("--svg", action="store_true", help="also write a log-log SVG plot")

    p = sub.add_parser("replay", help="re-execute a run from its manifest")
    p.add_argument("manifest", help="path to manifest.json")
    p.add_argument("--out", default=None)
    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    element_text = None
    if getattr(args, "element_file", None):
        try:
            with open(args.element_file, "r", encoding="utf-8") as fh:
                element_text = fh.read()
        except OSError as exc:
            raise UsageError(f"cannot read element file: {exc}") from exc
    problem_text = None
    if getattr(args, "problem", None):
        try:
            with open(args.problem, "r", encoding="utf-8") as fh:
                problem_text = fh.read()
        except OSError as exc:
            raise UsageError(f"cannot read problem file: {exc}") from exc
    cfg = RunConfig(command=args.command)
    cfg.preset = getattr(args, "preset", None)
    cfg.element_text = element_text
    cfg.problem_text = problem_text
    for name in ("L", "n", "T", "steps", "seed", "samples", "jbar", "ratio", "tol",
                 "ladder", "record", "h_sign", "svg", "grid", "max_iter", "rho_max"):
        arg_name = name
        if hasattr(args, arg_name):
            setattr(cfg, name, getattr(args, arg_name))
    if hasattr(args, "dt_factor"):
        cfg.dt_factor = args.dt_factor
    if hasattr(args, "quad_order"):
        cfg.quad_order = args.quad_order
    if hasattr(args, "ref_n"):
        cfg.ref_n = args.ref_n
    return cfg


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    parser = build_argparser()
    try:
        args = parser.parse_args(argv)
        if args.command == "replay":
            try:
                with open(args.manifest, "r", encoding="utf-8") as fh:
                    doc = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise UsageError(f"cannot read manifest: {exc}") from exc
            config = RunConfig.from_manifest(doc)
        else:
            config = _config_from_args(args)
        run_dir = _make_run_dir(getattr(args, "out", None), config.command)
        return COMMANDS[config.command](config, run_dir)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ElementFormatError, ProblemFormatError, ExprSyntaxError, GeometryError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, IntegrationError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
