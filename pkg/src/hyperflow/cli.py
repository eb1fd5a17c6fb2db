"""CLI interface for hyperflow."""

import functools
import logging
import sys
from pathlib import Path
from typing import Optional

import click
import numpy as np
from rich.console import Console
from rich.table import Table

from hyperflow import __version__
from hyperflow.artifacts import emit, to_json, trajectory_csv, trajectory_dict
from hyperflow.config import HyperflowSettings, setup_logging
from hyperflow.errors import (
    EXIT_USAGE,
    EXIT_VALIDATION,
    HyperflowError,
    InvalidStructureError,
    ScenarioError,
)
from hyperflow.expressions import ScalarExpression
from hyperflow.flows import (
    DiracSystem,
    OscillatorSystem,
    asymptotic_field,
    closed_form_flow,
    dirac_flow,
    integrate_rk4,
    run_batch,
    sample_times,
)
from hyperflow.hamiltonian import hh_field, oscillator_field
from hyperflow.invariants import (
    block_radii,
    conservation_report,
    hopf_check,
    initial_rank,
    invariants_json,
)
from hyperflow.scenario import Scenario
from hyperflow.structures import (
    Orientation,
    canonical_reduction,
    dual_commutation_check,
    dual_triple,
    format_form,
    orientation_of,
    pfaffian4,
    reduce_blockwise,
    standard_triple,
    symplectic_forms,
    verify_quaternionic,
)
from hyperflow.symmetry import (
    closure_check,
    detect_oscillator,
    solve_invariance,
    sphere_samples,
    split_components,
    symmetry_json,
)

console = Console()
logger = logging.getLogger("hyperflow.cli")


class HyperflowGroup(click.Group):
    """Click group that reports usage errors (unknown command or option) with exit 64."""

    def make_context(self, *args, **kwargs):
        try:
            return super().make_context(*args, **kwargs)
        except click.UsageError as e:
            e.exit_code = EXIT_USAGE
            raise

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except click.UsageError as e:
            e.exit_code = EXIT_USAGE
            raise


def reports_errors(fn):
    """Turn library errors into a JSON object on stderr and the error's exit code."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except HyperflowError as e:
            logger.debug("command failed", exc_info=True)
            click.echo(to_json(e.to_dict()).rstrip(), err=True)
            sys.exit(e.exit_code)

    return wrapper


def scenario_option(fn):
    return click.option(
        "--scenario",
        "-s",
        "scenario_path",
        required=True,
        type=click.Path(dir_okay=False, path_type=Path),
        help="Scenario JSON file",
    )(fn)


def out_option(fn):
    return click.option(
        "--out",
        "-o",
        type=click.Path(file_okay=False, path_type=Path),
        default=None,
        help="Directory for artifacts (default: stdout)",
    )(fn)


def tol_option(fn):
    return click.option("--tol", type=float, default=None, help="Tolerance override")(fn)


def workers_option(fn):
    return click.option(
        "--workers", type=int, default=None, help="Threads for batches of initial conditions"
    )(fn)


def time_options(fn):
    fn = click.option("--dt", type=float, default=None, help="Step / sampling interval")(fn)
    fn = click.option("--t-end", "t_end", type=float, default=None, help="Final time")(fn)
    return fn


def report_format(fn):
    return click.option(
        "--format",
        "fmt",
        type=click.Choice(["json", "table"]),
        default="json",
        help="Report format",
    )(fn)


def trajectory_format(fn):
    return click.option(
        "--format",
        "fmt",
        type=click.Choice(["csv", "json"]),
        default="csv",
        help="Trajectory format",
    )(fn)


def _time_grid(scenario: Scenario, settings: HyperflowSettings, t_end, dt):
    spec = scenario.time
    t_end = t_end if t_end is not None else (spec.t_end if spec else None)
    if t_end is None:
        raise ScenarioError("no final time: set time.t_end or pass --t-end", field="time.t_end")
    dt = dt if dt is not None else (spec.dt if spec and spec.dt else settings.dt)
    stride = spec.sample_stride if spec else 1
    return t_end, dt, stride


def _emit_trajectories(trajectories, fmt, out, q_coefficients=None):
    for i, traj in enumerate(trajectories):
        if fmt == "csv":
            c = q_coefficients[i] if q_coefficients is not None else None
            text = trajectory_csv(traj, c)
        else:
            text = to_json(trajectory_dict(traj))
        if out is None and i > 0:
            sys.stdout.write("\n")
        emit(text, f"trajectory_{i}.{fmt}", out, sys.stdout)


def _requested(scenario: Scenario, own: str) -> set:
    return set(scenario.outputs) or {own}


def _invariants_payload(trajectories, system, rank_tol: float) -> dict:
    """Drift reports; Hopf residuals and ranks only when `system` is an OscillatorSystem."""
    payload = invariants_json([conservation_report(traj, system) for traj in trajectories])
    if system is not None:
        payload["hopf_residuals"] = [hopf_check(traj, system) for traj in trajectories]
        payload["ranks"] = [initial_rank(traj, system, rank_tol) for traj in trajectories]
    return payload


def _emit_invariants(payload: dict, fmt: str, out) -> None:
    if fmt == "table":
        ranks = payload.get("ranks")
        for i, per_traj in enumerate(payload["trajectories"]):
            title = f"trajectory {i}"
            if "hopf_residuals" in payload:
                title += f" (hopf residual {payload['hopf_residuals'][i]:.2e}"
                title += f", rank {ranks[i]})" if ranks[i] is not None else ")"
            table = Table(title=title)
            table.add_column("invariant", style="cyan")
            table.add_column("initial", justify="right")
            table.add_column("max drift", justify="right")
            for name, report in per_traj.items():
                table.add_row(name, f"{report['initial']:.12g}", f"{report['max_drift']:.3e}")
            console.print(table)
        return
    emit(to_json(payload), "invariants.json", out, sys.stdout)


def _emit_artifacts(requested, trajectories, fmt, out, settings, system=None, q_coefficients=None):
    """Trajectories and/or the invariants report; blank line between them on stdout."""
    if "trajectory" in requested:
        _emit_trajectories(trajectories, fmt, out, q_coefficients)
    if "invariants" in requested:
        if out is None and "trajectory" in requested:
            sys.stdout.write("\n")
        _emit_invariants(_invariants_payload(trajectories, system, settings.rank_tol), "json", out)


def _require_standard_pair(scenario: Scenario, what: str) -> None:
    """Dirac and asymptotic systems live on the positive standard structure and its dual."""
    if scenario.structure is not None:
        raise ScenarioError(
            f"{what} use the standard structures; an explicit 'structure' is not supported",
            field="structure",
        )
    if any(s is not Orientation.POSITIVE for s in scenario.orientation_signature()):
        raise ScenarioError(
            f"{what} take c on positive blocks and c_hat on their duals; "
            "'signature' must be all '+'",
            field="signature",
        )


def _checked_structure(scenario: Scenario, tol: float):
    structure = scenario.build_structure()
    report = verify_quaternionic(structure, tol)
    if not report.ok:
        raise InvalidStructureError(
            f"not a quaternionic structure (residual {report.max_residual:.3e})"
        )
    return structure


def _standard_positive_r4(scenario: Scenario, structure) -> bool:
    if scenario.n != 1 or scenario.orientation_signature() != (Orientation.POSITIVE,):
        return False
    standard = standard_triple(Orientation.POSITIVE)
    return all(np.array_equal(structure[a], standard[a]) for a in range(3))


@click.group(cls=HyperflowGroup)
@click.version_option(__version__, "--version", "-v", prog_name="hyperflow")
@click.option(
    "--log-level",
    default=None,
    help="Log level (default from HYPERFLOW_LOG, else WARNING)",
)
@click.option("--seed", type=int, default=None, help="Seed for randomized sample points")
@click.pass_context
def cli(ctx, log_level, seed):
    """Hyperhamiltonian dynamics on R^(4n): structures, flows, invariants and symmetries."""
    settings = HyperflowSettings.load()
    if log_level:
        settings.log = log_level
    if seed is not None:
        settings.seed = seed
    setup_logging(settings.log_level)
    ctx.obj = settings


@cli.command()
@scenario_option
@out_option
@tol_option
@click.pass_obj
@reports_errors
def verify(settings, scenario_path, out, tol):
    """Check the quaternionic relations, orientations and the dual structure."""
    scenario = Scenario.load(scenario_path)
    structure = scenario.build_structure()
    tol = tol if tol is not None else settings.tol

    report = verify_quaternionic(structure, tol)
    payload = {
        "ok": report.ok,
        "max_residual": report.max_residual,
        "relation_residual": report.relation_residual,
        "skew_residual": report.skew_residual,
        "forms": [format_form(f) for f in symplectic_forms(structure, tol)],
    }
    if report.ok and structure.is_block_diagonal(tol):
        blocks = [structure.block(k) for k in range(structure.n)]
        payload["blocks"] = [
            {
                "orientation": orientation_of(b, settings.orientation_tol).value,
                "pfaffians": [pfaffian4(m) for m in b],
            }
            for b in blocks
        ]
        dual = dual_triple(structure)
        payload["dual_commutator"] = dual_commutation_check(
            tol, positive=structure, negative=dual
        ).max_residual
    emit(to_json(payload), "verify.json", out, sys.stdout)
    if not report.ok:
        sys.exit(EXIT_VALIDATION)


@cli.command()
@scenario_option
@out_option
@tol_option
@click.pass_obj
@reports_errors
def reduce(settings, scenario_path, out, tol):
    """Find R with R L R^T equal to the standard triple, block by block."""
    scenario = Scenario.load(scenario_path)
    structure = scenario.build_structure()
    tol = tol if tol is not None else settings.tol

    if structure.dim == 4:
        rotation, orientation = canonical_reduction(structure, tol)
        signature = (orientation,)
    else:
        rotation, signature = reduce_blockwise(structure, tol)
    reduced = structure.conjugated(rotation)
    target = [standard_triple(s) for s in signature]
    mismatch = max(
        float(np.max(np.abs(reduced.block(k)[a] - target[k][a])))
        for k in range(structure.n)
        for a in range(3)
    )
    payload = {
        "signature": [s.value for s in signature],
        "rotation": rotation.tolist(),
        "determinant": float(np.linalg.det(rotation)),
        "mismatch": mismatch,
    }
    emit(to_json(payload), "reduce.json", out, sys.stdout)


@cli.command()
@scenario_option
@out_option
@trajectory_format
@time_options
@tol_option
@workers_option
@click.pass_obj
@reports_errors
def flow(settings, scenario_path, out, fmt, t_end, dt, tol, workers):
    """Closed-form trajectories of quaternionic and Dirac oscillators."""
    scenario = Scenario.load(scenario_path)
    profile = scenario.build_profile()
    t_end, dt, stride = _time_grid(scenario, settings, t_end, dt)
    times = sample_times(t_end, dt, stride)
    states = scenario.initial_states()
    workers = workers if workers is not None else settings.workers
    tol = tol if tol is not None else settings.tol

    q_coefficients = None
    if profile.is_dirac:
        _require_standard_pair(scenario, "Dirac systems")
        system = DiracSystem(profile)
        trajectories = run_batch(_dirac, states, workers, system=system, times=times, tol=tol)
        checked = None
    else:
        system = OscillatorSystem(scenario.build_structure(), profile)
        trajectories = run_batch(
            _closed_form, states, workers, system=system, times=times, tol=tol
        )
        if _standard_positive_r4(scenario, system.structure):
            q_coefficients = [profile.coefficients(block_radii(x0)) for x0 in states]
        checked = system
    _emit_artifacts(
        _requested(scenario, "trajectory"), trajectories, fmt, out, settings, checked,
        q_coefficients,
    )


def _closed_form(x0, system, times, tol):
    return closed_form_flow(system, x0, times, tol)


def _dirac(x0, system, times, tol):
    return dirac_flow(system, x0, times, tol)


def _simulate_one(x0, field, t_end, dt, stride):
    return integrate_rk4(field, x0, t_end, dt, sample_stride=stride)


@cli.command()
@scenario_option
@out_option
@trajectory_format
@time_options
@tol_option
@workers_option
@click.pass_obj
@reports_errors
def simulate(settings, scenario_path, out, fmt, t_end, dt, tol, workers):
    """RK4 integration of a hyperhamiltonian, oscillator or asymptotic field."""
    scenario = Scenario.load(scenario_path)
    if (scenario.profile is None) == (scenario.hamiltonians is None):
        raise ScenarioError("simulate needs exactly one of 'profile' and 'hamiltonians'")
    t_end, dt, stride = _time_grid(scenario, settings, t_end, dt)
    workers = workers if workers is not None else settings.workers
    tol = tol if tol is not None else settings.tol

    system = None
    if scenario.hamiltonians is not None:
        structure = _checked_structure(scenario, tol)
        field = functools.partial(hh_field, scenario.build_hamiltonians(), structure)
    else:
        profile = scenario.build_profile()
        f0 = scenario.build_f0()
        if f0 is not None or profile.is_dirac:
            _require_standard_pair(scenario, "Dirac and asymptotic systems")
            if f0 is None:
                f0 = ScalarExpression.constant(0, scenario.dim)
            field = functools.partial(asymptotic_field, f0, profile.c, profile.c_hat)
        else:
            system = OscillatorSystem(_checked_structure(scenario, tol), profile)
            field = system.field

    trajectories = run_batch(
        _simulate_one, scenario.initial_states(), workers, field=field, t_end=t_end, dt=dt,
        stride=stride,
    )
    _emit_artifacts(_requested(scenario, "trajectory"), trajectories, fmt, out, settings, system)


@cli.command()
@scenario_option
@out_option
@report_format
@time_options
@tol_option
@workers_option
@click.option(
    "--method",
    type=click.Choice(["closed_form", "rk4"]),
    default="closed_form",
    help="How trajectories are produced",
)
@click.pass_obj
@reports_errors
def invariants(settings, scenario_path, out, fmt, t_end, dt, tol, workers, method):
    """Drift of the radii and of the Q/B constants of motion along trajectories."""
    scenario = Scenario.load(scenario_path)
    profile = scenario.build_profile()
    if profile.is_dirac:
        raise ScenarioError("invariants are reported for quaternionic oscillators only", "profile")
    system = OscillatorSystem(scenario.build_structure(), profile)
    t_end, dt, stride = _time_grid(scenario, settings, t_end, dt)
    workers = workers if workers is not None else settings.workers
    tol = tol if tol is not None else settings.tol

    states = scenario.initial_states()
    if method == "closed_form":
        times = sample_times(t_end, dt, stride)
        trajectories = run_batch(
            _closed_form, states, workers, system=system, times=times, tol=tol
        )
    else:
        trajectories = run_batch(
            _simulate_one, states, workers, field=system.field, t_end=t_end, dt=dt, stride=stride
        )

    requested = _requested(scenario, "invariants")
    if "trajectory" in requested:
        _emit_trajectories(trajectories, "csv", out)
        if out is None and "invariants" in requested:
            sys.stdout.write("\n")
    if "invariants" in requested:
        _emit_invariants(_invariants_payload(trajectories, system, settings.rank_tol), fmt, out)


@cli.command()
@scenario_option
@out_option
@report_format
@tol_option
@click.pass_obj
@reports_errors
def symmetry(settings, scenario_path, out, fmt, tol):
    """Linear symmetry algebra so(2) + sp(n) of the oscillator at the scenario radii."""
    scenario = Scenario.load(scenario_path)
    profile = scenario.build_profile()
    structure = scenario.build_structure()
    radii = scenario.radii()
    c = profile.coefficients(radii)

    basis = solve_invariance(structure, c, tol if tol is not None else settings.null_space_tol)
    split = split_components(basis, c)
    closure = closure_check(basis)
    payload = {"radii": radii.tolist(), "c": c.tolist(), **symmetry_json(basis, split, closure)}

    if fmt == "table":
        table = Table(title="symmetry algebra", show_header=False)
        table.add_column("", style="cyan")
        table.add_column("", justify="right")
        for key in ("dimension", "commutant_dimension", "closure_residual", "singular_value_gap"):
            table.add_row(key, str(payload[key]))
        console.print(table)
        return
    emit(to_json(payload), "symmetry.json", out, sys.stdout)


@cli.command()
@scenario_option
@out_option
@tol_option
@click.option("--samples", type=int, default=None, help="Random points per radius group")
@click.pass_obj
@reports_errors
def detect(settings, scenario_path, out, tol, samples):
    """Decide whether a vector field is a quaternionic oscillator and recover c."""
    scenario = Scenario.load(scenario_path)
    field = scenario.build_field()
    structure = scenario.build_structure()

    groups = [block_radii(x0) for x0 in scenario.initial_conditions]
    if scenario.rho is not None:
        groups.append(np.array(scenario.rho))
    if not groups:
        groups = [np.ones(scenario.n), 2.0 * np.ones(scenario.n)]
    rng = np.random.default_rng(settings.seed)
    per_group = samples if samples is not None else settings.detect_samples
    points = [np.array(x0, dtype=float) for x0 in scenario.initial_conditions]
    points += sphere_samples(groups, per_group, rng)

    kwargs = {"tol": tol} if tol is not None else {}
    report = detect_oscillator(field, structure, points, h=settings.fd_step, **kwargs)
    emit(to_json(report.to_dict()), "detect.json", out, sys.stdout)


@cli.command()
def schema():
    """Print the JSON schema of scenario files."""
    click.echo(Scenario.json_schema_text())


def main(argv: Optional[list] = None):
    cli.main(args=argv, prog_name="hyperflow")


if __name__ == "__main__":
    main()
