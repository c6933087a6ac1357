import os
import sys

import click
import simplejson as json
from munch import Munch

from driftlab import _version, defaults, exceptions, utils
from driftlab.config import Config
from driftlab.plots import emit_plots
from driftlab.scenario import ERROR, FAILED, PASSED, Scenario, run_job, run_scenario

CTX_OUT_DIR = 'OUT_DIR'
CTX_WORKERS = 'WORKERS'
CTX_TOLERANCE_PROFILE = 'TOLERANCE_PROFILE'
CTX_DEBUG = 'DEBUG'
CTX_OUTPUT_JSON = 'CTX_OUTPUT_JSON'

EXIT_PASS = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _config():
    try:
        ctx = click.get_current_context()
        return Config(
            out_dir=ctx.obj.get(CTX_OUT_DIR),
            workers=ctx.obj.get(CTX_WORKERS),
            tolerance_profile=ctx.obj.get(CTX_TOLERANCE_PROFILE),
            debug=ctx.obj.get(CTX_DEBUG)
        )
    except exceptions.ConfigException as e:
        _print_error(e, title="configuration error", exit_code=EXIT_CONFIG)


def _pl(label, offset, value=None):
    lo = " " * offset
    if value is None:
        print(f"{lo}{label.capitalize().replace('_', ' ')}")
        return
    lj = 53 - len(lo)
    lv = f"{label.capitalize().replace('_', ' ')} ".ljust(lj, '_')
    print(f"{lo}{lv} {value}")


def _po(label, value, offset=0):
    """
    pretty printer
    :param label: the entry label
    :param value: a scalar, dict or list, printed recursively
    :param offset: the indentation
    """
    if isinstance(value, dict):
        _pl(f"<{label}>", offset)
        for k, v in value.items():
            _po(k, v, offset + 2)
        _pl(f"</{label}>", offset)
    elif isinstance(value, list) and any(isinstance(x, (dict, list)) for x in value):
        _pl(f"<{label} {len(value)}>", offset)
        for i, x in enumerate(value):
            _po(f"{label} #{i + 1}", x, offset + 2)
        _pl(f"</{label}>", offset)
    else:
        if isinstance(value, float):
            value = f"{value:.6g}"
        _pl(label, offset, value=value)


def _print_object(data, title):
    ctx = click.get_current_context()
    data = utils.to_plain(data)
    if ctx.obj.get(CTX_OUTPUT_JSON, False):
        print(json.dumps(data, indent=2, sort_keys=True, ignore_nan=True))
        return
    _po(title, data)


def _print_error(err, title="error", exit_code=0):
    _print_object({"message": str(err)}, title)
    sys.exit(exit_code)


def _exit_code(record):
    if record.status == PASSED:
        return EXIT_PASS
    if record.status == FAILED:
        return EXIT_FAILURE
    if record.status == ERROR and record.error == "solver":
        return EXIT_SOLVER
    # errors in the inputs and unmet preconditions
    return EXIT_CONFIG


def _params(pairs):
    """key=value options, values read as JSON when possible"""
    params = Munch()
    for item in pairs:
        if "=" not in item:
            raise exceptions.ConfigException(f"parameter {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        try:
            params[key.strip()] = json.loads(raw)
        except ValueError:
            params[key.strip()] = raw
    return params


def _run_single(scenario_name, job, title):
    """Run one ad-hoc job against a scenario and exit with its code"""
    job = Munch.fromDict(job)
    try:
        config = _config()
        scenario = Scenario.load(scenario_name) if scenario_name is not None else None
        sol, levels = None, []
        needs_solution = job.kind in ("estimate", "calibration", "identity")
        if scenario is not None and scenario.solution is not None and needs_solution:
            sol = scenario.solve()
            levels = [sol] + [scenario.solve(f) for f in scenario.refinements]
        ctx = Munch(config=config, scenario=scenario, sol=sol, levels=levels,
                    space=scenario.space if scenario else None, G=scenario.G if scenario else None)
        record = run_job(job, ctx)
    except exceptions.SolverAbort as e:
        _print_error(e, title="solver abort", exit_code=EXIT_SOLVER)
    except exceptions.ConfigException as e:
        _print_error(e, title="configuration error", exit_code=EXIT_CONFIG)
    except exceptions.DriftLabException as e:
        _print_error(e, title="invalid scenario", exit_code=EXIT_CONFIG)
    result = record.result if isinstance(record.result, dict) else {}
    result.pop("table", None)
    _print_object({"status": record.status, "reason": record.reason, "result": result}, title=title)
    sys.exit(_exit_code(record))


# Commands
CONTEXT_SETTINGS = dict(help_option_names=['-h', '--help'])

_global_options = [
    click.option('--json', 'json_', is_flag=True, default=False, help='Print output in JSON format'),
]

_param_options = [
    click.option('--param', '-p', 'params', multiple=True, metavar='KEY=VALUE',
                 help='A parameter of the check, the value is read as JSON'),
]


def global_options(func):
    for option in reversed(_global_options):
        func = option(func)
    return func


def param_options(func):
    for option in reversed(_param_options):
        func = option(func)
    return func


def set_global_options(json_):
    ctx = click.get_current_context()
    # the flag may be given before or after the command
    ctx.obj[CTX_OUTPUT_JSON] = json_ or ctx.obj.get(CTX_OUTPUT_JSON, False)


@click.group(context_settings=CONTEXT_SETTINGS)
@click.pass_context
@click.option('--out', 'out_dir', default='driftlab-out', envvar='DRIFTLAB_OUT', help='Output directory', metavar='DIR',
              show_default=True)
@click.option('--workers', type=int, default=defaults.WORKERS, help='Jobs run in parallel', show_default=True)
@click.option('--tolerance-profile', type=click.Choice(sorted(defaults.TOLERANCE_PROFILES)), default='default',
              help='Margin and residual tolerances', show_default=True)
@click.option('--debug', is_flag=True, default=False, help='Enable debug logging')
@global_options
@click.version_option(version=_version())
def cli(ctx, out_dir, workers, tolerance_profile, debug, json_):
    """
    Numerical lab for gradient estimates of the drifting heat equation on radial weighted manifolds
    """
    ctx.obj[CTX_OUT_DIR] = out_dir
    ctx.obj[CTX_WORKERS] = workers
    ctx.obj[CTX_TOLERANCE_PROFILE] = tolerance_profile
    ctx.obj[CTX_DEBUG] = debug
    ctx.obj[CTX_OUTPUT_JSON] = json_


@cli.command('config', help="Print the effective configuration")
@global_options
def config_cmd(json_):
    set_global_options(json_)
    cfg = _config()
    _print_object(cfg.to_dict(), title="driftcli settings")


@cli.command('solve', help="Solve the scenario and archive the solution as CSV")
@click.argument('scenario')
@click.option('--refinement', type=int, default=1, help='Divide the grid spacing by this factor', show_default=True)
@global_options
def solve_cmd(scenario, refinement, json_):
    set_global_options(json_)
    try:
        config = _config()
        sc = Scenario.load(scenario)
        sol = sc.solve(refinement)
        directory = utils.ensure_dir(os.path.join(config.out_dir, utils.slug(sc.name)))
        path, meta = sol.write_csv(os.path.join(directory, f"solution_x{refinement}.csv"))
        mass = sol.mass()
        _print_object({
            "scenario": sc.name,
            "levels": sol.levels,
            "dr": sol.dr,
            "t": [sol.t[0], sol.t[-1]],
            "min_w": float(sol.w.min()),
            "max_w": float(sol.w.max()),
            "mass_drift": float(abs(mass[-1] - mass[0]) / abs(mass[0])),
            "path": path,
        }, title="solution")
    except exceptions.SolverAbort as e:
        _print_error(e, title="solver abort", exit_code=EXIT_SOLVER)
    except exceptions.ConfigException as e:
        _print_error(e, title="configuration error", exit_code=EXIT_CONFIG)
    except exceptions.DriftLabException as e:
        _print_error(e, title="invalid scenario", exit_code=EXIT_CONFIG)


@cli.command('estimate', help="Run one gradient or Li-Yau estimate on the scenario solution")
@click.argument('scenario')
@click.argument('check')
@param_options
@global_options
def estimate_cmd(scenario, check, params, json_):
    set_global_options(json_)
    try:
        job = {"id": check, "kind": "estimate", "check": check, "params": _params(params)}
    except exceptions.ConfigException as e:
        _print_error(e, title="configuration error", exit_code=EXIT_CONFIG)
    _run_single(scenario, job, title="estimate")


@cli.command('harnack', help="Check the parabolic Harnack inequality between space-time points")
@click.argument('scenario')
@click.option('--alpha', type=float, required=True, help='The Li-Yau parameter, alpha > 1')
@click.option('--pair', 'pairs', multiple=True, required=True, metavar='R1,T1,R2,T2',
              help='Two space-time points on a ray, t2 > t1')
@click.option('--global', 'global_variant', is_flag=True, default=False, help='Use the global estimate')
@click.option('--gamma-e-radius', type=click.Choice(["R", "2R"]), default="R", show_default=True)
@param_options
@global_options
def harnack_cmd(scenario, alpha, pairs, global_variant, gamma_e_radius, params, json_):
    set_global_options(json_)
    try:
        points = []
        for pair in pairs:
            values = [float(v) for v in pair.split(",")]
            if len(values) != 4:
                raise exceptions.ConfigException(f"pair {pair!r} needs four numbers r1,t1,r2,t2")
            points.append([[values[0], values[1]], [values[2], values[3]]])
        extra = _params(params)
    except (ValueError, exceptions.ConfigException) as e:
        _print_error(e, title="configuration error", exit_code=EXIT_CONFIG)
    job = {"id": "harnack", "kind": "estimate", "check": "parabolic_harnack",
           "params": dict(extra, alpha=alpha, pairs=points, global_variant=global_variant,
                          gamma_E_radius=gamma_e_radius)}
    _run_single(scenario, job, title="harnack")


@cli.command('identities', help="Residual check of one identity on the scenario space or solution")
@click.argument('scenario')
@click.argument('identity')
@param_options
@global_options
def identities_cmd(scenario, identity, params, json_):
    set_global_options(json_)
    try:
        job = {"id": identity, "kind": "identity", "identity": identity, "params": _params(params)}
    except exceptions.ConfigException as e:
        _print_error(e, title="configuration error", exit_code=EXIT_CONFIG)
    _run_single(scenario, job, title="identity")


@cli.command('liouville', help="Check a Liouville predicate and run the relaxation demo")
@click.argument('scenario')
@click.argument('theorem')
@click.option('--initial', default='bump(1, 1)', help='Initial profile of the relaxation', show_default=True)
@click.option('--max-time', type=float, default=defaults.LIOUVILLE_TIME, show_default=True)
@click.option('--nonlinearity', 'nonlinearity', default=None, metavar='JSON',
              help='The nonlinearity as JSON, the scenario one by default')
@param_options
@global_options
def liouville_cmd(scenario, theorem, initial, max_time, nonlinearity, params, json_):
    set_global_options(json_)
    try:
        job = {"id": theorem, "kind": "liouville", "theorem": theorem, "initial": initial, "max_time": max_time,
               "params": _params(params)}
        if nonlinearity is not None:
            job["nonlinearity"] = json.loads(nonlinearity)
    except ValueError as e:
        _print_error(f"--nonlinearity is not valid JSON: {e}", title="configuration error", exit_code=EXIT_CONFIG)
    except exceptions.ConfigException as e:
        _print_error(e, title="configuration error", exit_code=EXIT_CONFIG)
    _run_single(scenario, job, title="liouville")


@cli.command('cutoff', help="Build and certify a cutoff function")
@click.option('--R', 'R', type=float, required=True, help='The localisation radius')
@click.option('--T', 'T', type=float, default=None, help='Time window length, builds the space-time cutoff')
@click.option('--t0', type=float, default=None, help='Final time of the window')
@click.option('--tau', type=float, default=None, help='Start of the plateau in time')
@click.option('--density', type=int, default=defaults.CUTOFF_DENSITY, show_default=True)
@global_options
def cutoff_cmd(R, T, t0, tau, density, json_):
    set_global_options(json_)
    if T is None:
        params = {"R": R, "density": density}
        kind = "spatial"
    else:
        t0 = T if t0 is None else t0
        params = {"R": R, "T": T, "t0": t0, "tau": t0 if tau is None else tau, "density": density}
        kind = "space_time"
    _run_single(None, {"id": "cutoff", "kind": "cutoff", "cutoff": kind, "params": params}, title="cutoff")


@cli.command('run', help="Run scenario files or bundled scenarios")
@click.argument('scenarios', nargs=-1, required=True)
@global_options
def run_cmd(scenarios, json_):
    set_global_options(json_)
    config = _config()
    code = EXIT_PASS
    for scenario in scenarios:
        try:
            manifest = run_scenario(scenario, config)
        except exceptions.SolverAbort as e:
            _print_error(e, title="solver abort", exit_code=EXIT_SOLVER)
        except exceptions.ConfigException as e:
            _print_error(e, title="configuration error", exit_code=EXIT_CONFIG)
        except exceptions.DriftLabException as e:
            # warp, dimension and domain errors while loading the scenario
            _print_error(e, title="invalid scenario", exit_code=EXIT_CONFIG)
        _print_object({
            "scenario": manifest.scenario,
            "scenario_hash": manifest.scenario_hash,
            "directory": manifest.directory,
            "jobs": [{"id": r.id, "status": r.status, "reason": r.reason} for r in manifest.jobs],
            "exit_code": manifest.exit_code,
        }, title="run")
        code = max(code, manifest.exit_code)
    sys.exit(code)


@cli.command('plots', help="Draw the figures of jobs in a run manifest")
@click.argument('manifest_path', type=click.Path(exists=True, dir_okay=False))
@click.argument('jobs', nargs=-1)
@global_options
def plots_cmd(manifest_path, jobs, json_):
    set_global_options(json_)
    try:
        manifest = utils.read_json(manifest_path)
        manifest.directory = os.path.dirname(os.path.abspath(manifest_path))
        paths = emit_plots(manifest, list(jobs))
        _print_object({"figures": paths}, title="plots")
    except exceptions.MissingJob as e:
        _print_error(e, exit_code=EXIT_FAILURE)


# run the client
def run():
    cli(obj={})
    exit(0)


if __name__ == "__main__":
    run()
