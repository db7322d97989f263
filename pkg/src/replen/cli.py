from __future__ import annotations

import functools
import json
import logging
import sys
import typing as t
from pathlib import Path

import click
import pandas as pd

from replen import __version__, milp, planner, sdp, sigma, simulator, stationary
from replen.bench import run_bench
from replen.config import Settings
from replen.domain import load_instance
from replen.errors import ModeError, ReplenError
from replen.ui import UI

logger = logging.getLogger(__name__)

DEFAULTS = Settings()
LOG_LEVELS = (logging.WARNING, logging.INFO, logging.DEBUG)


class InventoryRange(click.ParamType):
    """An inclusive inventory range written as LO:HI, e.g. 0:20 or -5:10."""

    name = "LO:HI"

    def convert(self, value, param, ctx):
        if isinstance(value, tuple):
            return value
        try:
            lo, hi = (int(v) for v in value.split(":"))
        except ValueError:
            self.fail(f"{value!r} is not a range like 0:20", param, ctx)
        return lo, hi


RANGE = InventoryRange()


def handle_errors(fn: t.Callable) -> t.Callable:
    """Report replen errors on stderr and exit with the code their class carries."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ReplenError as err:
            ui = UI(file=sys.stderr)
            ui.error(err=err)
            if isinstance(err, ModeError):
                ui.warning("use --mode heuristic for long horizons")
            sys.exit(err.exit_code)

    return wrapper


def emit_json(data: t.Any, out: t.Optional[Path]) -> None:
    text = json.dumps(data, indent=2, default=float)
    if out is None:
        click.echo(text)
    else:
        out.write_text(text + "\n")


def emit_frame(frame: pd.DataFrame, out: t.Optional[Path]) -> None:
    if out is None:
        click.echo(frame.to_csv(index=False), nl=False)
    else:
        frame.to_csv(out, index=False)


def info() -> UI:
    return UI(file=sys.stderr)


out_option = click.option(
    "--out", type=click.Path(dir_okay=False, path_type=Path), help="write here instead of stdout"
)
segments_option = click.option(
    "--segments",
    "-W",
    type=click.IntRange(min=1),
    default=DEFAULTS.segments,
    envvar="REPLEN_SEGMENTS",
    show_default=True,
    help="piecewise segments of every loss function",
)
mode_option = click.option(
    "--mode", type=click.Choice(planner.MODES), default="exact", show_default=True
)
state_cap_option = click.option(
    "--state-cap",
    type=click.IntRange(min=1),
    default=DEFAULTS.sdp_state_cap,
    envvar="REPLEN_SDP_STATE_CAP",
    show_default=True,
    help="largest number of state-period pairs the SDP may tabulate",
)
range_option = click.option(
    "--range",
    "ranges",
    type=RANGE,
    multiple=True,
    required=True,
    help="opening inventory range of one item, repeat once per item",
)
instance_argument = click.argument(
    "instance", type=click.Path(exists=True, dir_okay=False, path_type=Path)
)


@click.group()
@click.version_option(__version__, prog_name="replen")
@click.option("-v", "--verbose", count=True, help="log INFO (-v) or DEBUG (-vv) on stderr")
def cli(verbose: int) -> None:
    """(R,S) policies for the stochastic joint replenishment problem."""
    logging.basicConfig(
        level=LOG_LEVELS[min(verbose, len(LOG_LEVELS) - 1)],
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


@cli.command()
@instance_argument
@segments_option
@mode_option
@out_option
@handle_errors
def solve(instance: Path, segments: int, mode: str, out: t.Optional[Path]) -> None:
    """Plan (R,S) replenishments over a nonstationary horizon."""
    inst = load_instance(instance)
    plan = planner.solve_rs(inst, segments, mode)
    info().result("expected cost", f"{plan.model_cost:.4f}").result(
        "group orders", plan.group_periods
    )
    emit_json(plan.to_dict(), out)


@cli.command("solve-stationary")
@instance_argument
@click.option("--horizon", type=click.IntRange(min=1), help="re-horizon a stationary instance")
@mode_option
@out_option
@handle_errors
def solve_stationary(
    instance: Path, horizon: t.Optional[int], mode: str, out: t.Optional[Path]
) -> None:
    """Plan (R,S) replenishments of a stationary instance by shortest paths."""
    inst = load_instance(instance)
    plan = stationary.solve_stationary(inst, horizon, mode)
    info().result("expected cost", f"{plan.model_cost:.4f}").result(
        "cost per period", f"{plan.cost_per_period:.4f}"
    )
    emit_json(plan.to_dict(), out)


@cli.command("sdp")
@instance_argument
@state_cap_option
@click.option("--table", type=click.Path(dir_okay=False, path_type=Path), help="value table CSV")
@click.option("--range", "ranges", type=RANGE, multiple=True, help="surface range of one item")
@click.option(
    "--surface", type=click.Path(dir_okay=False, path_type=Path), help="cost surface CSV"
)
@out_option
@handle_errors
def sdp_command(
    instance: Path,
    state_cap: int,
    table: t.Optional[Path],
    ranges: t.Sequence[t.Tuple[int, int]],
    surface: t.Optional[Path],
    out: t.Optional[Path],
) -> None:
    """Solve the exact stochastic dynamic program of a small instance."""
    inst = load_instance(instance)
    vf = sdp.solve_sdp(inst, state_cap=state_cap)
    opening = [int(i) for i in inst.initial_inventory]
    cost = vf.cost_to_go(1, opening)
    info().result("C_1", f"{cost:.4f}")
    if table is not None:
        sdp.value_table(vf).to_csv(table, index=False)
    if surface is not None:
        if not ranges:
            raise click.UsageError("--surface needs one --range per item")
        sdp.cost_grid(inst, vf, ranges).to_frame().to_csv(surface, index=False)
    emit_json(
        {
            "cost": cost,
            "action": list(sdp.optimal_policy_actions(vf, opening, 1)),
            "grid": {"lo": list(vf.grid.lo), "hi": list(vf.grid.hi)},
        },
        out,
    )


@cli.command("sigma-map")
@instance_argument
@range_option
@click.option("--period", "-k", type=click.IntRange(min=1), default=1, show_default=True)
@segments_option
@click.option("--mode", type=click.Choice(planner.MODES), help="default: exact when short")
@out_option
@handle_errors
def sigma_map(
    instance: Path,
    ranges: t.Sequence[t.Tuple[int, int]],
    period: int,
    segments: int,
    mode: t.Optional[str],
    out: t.Optional[Path],
) -> None:
    """Order/no-order regions approximated with (R,S) plans."""
    inst = load_instance(instance)
    smap = sigma.sigma_map(inst, ranges, period, segments, mode)
    _report_map(smap)
    emit_frame(smap.to_frame(), out)


@cli.command("sdp-sigma-map")
@instance_argument
@range_option
@click.option("--period", "-k", type=click.IntRange(min=1), default=1, show_default=True)
@state_cap_option
@out_option
@handle_errors
def sdp_sigma_map(
    instance: Path,
    ranges: t.Sequence[t.Tuple[int, int]],
    period: int,
    state_cap: int,
    out: t.Optional[Path],
) -> None:
    """Order/no-order regions of the optimal SDP policy."""
    inst = load_instance(instance)
    vf = sdp.solve_sdp(inst, state_cap=state_cap)
    smap = sigma.sdp_sigma_map(vf, ranges, period)
    _report_map(smap)
    emit_frame(smap.to_frame(), out)


def _report_map(smap: sigma.SigmaMap) -> None:
    ordering = sum(d.in_sigma for d in smap.decisions.values())
    ui = info().result("ordering cells", f"{ordering} of {len(smap.decisions)}")
    violations = sigma.staircase_violations(smap)
    if violations:
        ui.warning(f"{len(violations)} cells leave the order region along an axis")


@cli.command("export-model")
@instance_argument
@click.option(
    "--formulation", type=click.Choice(["rs", "stationary"]), default="rs", show_default=True
)
@click.option(
    "--format", "fmt", type=click.Choice(["mps", "lp"]), default="mps", show_default=True
)
@segments_option
@click.option("--horizon", type=click.IntRange(min=1), help="stationary formulation horizon")
@click.option("--solve", is_flag=True, help="also solve the model by enumeration")
@click.option(
    "--solution", type=click.Path(dir_okay=False, path_type=Path), help="solution file of --solve"
)
@click.option(
    "--binary-limit",
    type=click.IntRange(min=1),
    default=DEFAULTS.binary_limit,
    envvar="REPLEN_BINARY_LIMIT",
    show_default=True,
)
@out_option
@handle_errors
def export_model(
    instance: Path,
    formulation: str,
    fmt: str,
    segments: int,
    horizon: t.Optional[int],
    solve: bool,
    solution: t.Optional[Path],
    binary_limit: int,
    out: t.Optional[Path],
) -> None:
    """Write the mixed-integer model of an instance as MPS or LP."""
    inst = load_instance(instance)
    if formulation == "rs":
        model = milp.build_rs_model(inst, segments)
    else:
        model = stationary.stationary_model(inst, horizon)
    info().result(
        "model", f"{len(model.variables)} variables, {len(model.constraints)} constraints"
    )
    text = milp.export(model, fmt)
    if out is None:
        click.echo(text, nl=False)
    else:
        out.write_text(text)
    if solve:
        result = milp.brute_force_solve(model, binary_limit)
        info().result("brute force", f"{result.status}, objective {result.objective}")
        if solution is not None:
            solution.write_text(result.to_text())


@cli.command("check-solution")
@click.argument("model_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("solution_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--format", "fmt", type=click.Choice(["mps", "lp"]), help="default: from suffix")
@out_option
@handle_errors
def check_solution(
    model_file: Path, solution_file: Path, fmt: t.Optional[str], out: t.Optional[Path]
) -> None:
    """Check a name=value solution against an exported model."""
    fmt = fmt or ("lp" if model_file.suffix.lower() == ".lp" else "mps")
    model = milp.parse_model(model_file.read_text(), fmt)
    solution = milp.read_solution(solution_file.read_text())
    evaluation = milp.evaluate(model, solution.values)
    emit_json(
        {
            "feasible": evaluation.feasible,
            "objective": evaluation.objective,
            "violations": [{"row": v.row, "slack": v.slack} for v in evaluation.violations],
        },
        out,
    )
    if not evaluation.feasible:
        info().failure(f"{len(evaluation.violations)} violated rows or bounds")
        sys.exit(1)


@cli.command()
@instance_argument
@click.option(
    "--plan", "plan_file", type=click.Path(exists=True, dir_okay=False, path_type=Path)
)
@click.option("--sdp", "use_sdp", is_flag=True, help="simulate the optimal SDP policy")
@click.option(
    "--reps",
    type=click.IntRange(min=1),
    default=DEFAULTS.replications,
    envvar="REPLEN_REPLICATIONS",
    show_default=True,
)
@click.option("--seed", type=int, default=DEFAULTS.seed, envvar="REPLEN_SEED", show_default=True)
@click.option("--warmup", type=click.IntRange(min=0), default=0, show_default=True)
@click.option("--horizon", type=click.IntRange(min=1), help="simulate the first periods only")
@state_cap_option
@out_option
@handle_errors
def simulate(
    instance: Path,
    plan_file: t.Optional[Path],
    use_sdp: bool,
    reps: int,
    seed: int,
    warmup: int,
    horizon: t.Optional[int],
    state_cap: int,
    out: t.Optional[Path],
) -> None:
    """Monte Carlo cost of a plan or of the SDP policy."""
    if (plan_file is None) == (not use_sdp):
        raise click.UsageError("give exactly one of --plan or --sdp")
    inst = load_instance(instance)
    cfg = simulator.SimConfig(replications=reps, seed=seed, warmup=warmup, horizon=horizon)
    if use_sdp:
        report = simulator.simulate_policy(inst, sdp.solve_sdp(inst, state_cap=state_cap), cfg)
    else:
        plan = planner.Plan.from_dict(json.loads(plan_file.read_text()))
        report = simulator.simulate_plan(inst, plan, cfg)
    info().result("mean cost", f"{report.mean_total:.4f} ± {report.half_width:.4f}")
    emit_json(report.to_dict(), out)


@cli.command()
@click.option("--ours", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--literature", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option(
    "--gaps",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="published gap table to back-compute literature costs from",
)
@out_option
@handle_errors
def compare(
    ours: t.Optional[Path],
    literature: t.Optional[Path],
    gaps: t.Optional[Path],
    out: t.Optional[Path],
) -> None:
    """Percentage gaps of literature policies against our costs."""
    if gaps is not None:
        costs, lit = simulator.costs_from_gaps(gaps)
        if ours is not None:
            costs = simulator.read_costs(ours)
    elif ours is not None and literature is not None:
        costs, lit = simulator.read_costs(ours), literature
    else:
        raise click.UsageError("give --ours and --literature, or --gaps")
    table = simulator.compare_literature(costs, lit)
    emit_frame(table.round(4), out)


@cli.command()
@click.option(
    "--suite", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True
)
@click.option("--env", help="environment of the suite to merge over its params")
@click.option("--jobs", type=click.IntRange(min=1), default=1, show_default=True)
@out_option
@handle_errors
def bench(suite: Path, env: t.Optional[str], jobs: int, out: t.Optional[Path]) -> None:
    """Run a bench suite and check every expectation."""
    result = run_bench(
        suite, env=env, jobs=jobs, settings=Settings.from_env(), ui=info(), out=out
    )
    if out is None:
        click.echo(result.table.to_csv(index=False), nl=False)
    sys.exit(result.exit_code)


def main() -> None:
    cli(prog_name="replen")


if __name__ == "__main__":
    main()
