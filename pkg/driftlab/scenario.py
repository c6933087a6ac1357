"""
Batch scenarios: one model space, one nonlinearity, one solution and a list of verification jobs.

A scenario file is JSON:

    {
      "name": "euclidean_kernel_liyau",
      "space": {"n": 3, "m": 3, "warp": "euclidean", "potential": "zero", "R_max": 12},
      "nonlinearity": {"family": "Zero"},
      "solution": {"initial": "heat_kernel(1)", "grid": {"dr": 0.05, "R_max": 4, "pad": 6},
                   "time": {"t_start": 1, "T": 1, "levels": 21}},
      "refinements": [2],
      "jobs": [{"id": "li_yau", "kind": "estimate", "check": "li_yau", "params": {"alpha": 2}}]
    }

The solution is either solved ("initial") or sampled from a closed form in r and t
("closed_form"). Jobs run in parallel; their files are written afterwards by the caller thread.
"""
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pkg_resources
from munch import Munch

from driftlab import _version, defaults, exceptions, utils
from driftlab.config import Config
from driftlab.cutoff import build_space_time_cutoff, build_spatial_cutoff, certify
from driftlab.estimates import CHECKS, calibrate_constant, liouville_demo, CONSISTENT, NONEXISTENCE, NOT_APPLICABLE
from driftlab.expressions import derivative, evaluate, parse
from driftlab.geometry import make_model_space
from driftlab.identities import IDENTITIES, cd_condition_check, quadratic_lemma_check
from driftlab.nonlinearity import Nonlinearity
from driftlab.plots import emit_plots, plottable
from driftlab.predicates import liouville_predicate
from driftlab.solver import Grid, SolutionField, solve_parabolic

logger = logging.getLogger(__name__)

PASSED = "passed"
FAILED = "failed"
SKIPPED = "skipped"
ERROR = "error"

JOB_KINDS = ("estimate", "calibration", "identity", "predicate", "liouville", "cutoff")
# identities run on the solution levels instead of the model space
EVOLUTION_IDENTITIES = ("h_evolution", "H_evolution", "F_beta_evolution", "liyau_F_evolution", "delta_phi_G")
CALIBRATED_CHECKS = ("souplet_zhang", "hamilton")
# failed preconditions mark a job skipped instead of errored
PRECONDITIONS = (exceptions.ParameterOrder, exceptions.HypothesisUnverified, exceptions.NeedFiniteM,
                 exceptions.MissingCalibration, exceptions.NotStationary, exceptions.BoundViolated,
                 exceptions.OutOfDomain, exceptions.TimeOrder, exceptions.NotSameRay, exceptions.DomainViolation)


def bundled_scenarios():
    """Names of the scenarios shipped with the package"""
    names = pkg_resources.resource_listdir("driftlab", "scenarios")
    return sorted(n[:-len(".json")] for n in names if n.endswith(".json"))


def scenario_path(name_or_path):
    """A scenario file path, bundled scenarios are found by name"""
    if os.path.exists(name_or_path):
        return name_or_path
    name = name_or_path[:-len(".json")] if name_or_path.endswith(".json") else name_or_path
    if name in bundled_scenarios():
        return pkg_resources.resource_filename("driftlab", f"scenarios/{name}.json")
    raise exceptions.ConfigException(f"scenario {name_or_path!r} is neither a file nor a bundled scenario, "
                                     f"bundled: {bundled_scenarios()}")


def _require(data, key, where):
    if key not in data:
        raise exceptions.ConfigException(f"{where} is missing the key {key!r}", payload={"key": key})
    return data[key]


class Scenario:
    def __init__(self, name, space, G, solution, jobs, refinements=(), plots=True, raw=None):
        self.name = name
        self.space = space
        self.G = G
        self.solution = solution
        self.jobs = jobs
        self.refinements = tuple(int(f) for f in refinements)
        self.plots = plots
        self.raw = raw or {}

    @classmethod
    def from_dict(cls, data):
        """
        Validate a scenario

        :raises ConfigException: naming the offending key
        :raises ParseError: with the offset of a malformed expression
        """
        if not isinstance(data, dict):
            raise exceptions.ConfigException("a scenario must be a JSON object")
        name = str(data.get("name", "scenario"))
        spec = _require(data, "space", "scenario")
        space = make_model_space(_require(spec, "n", "space"), spec.get("m", spec["n"]),
                                 spec.get("warp", "euclidean"), spec.get("potential", "zero"),
                                 _require(spec, "R_max", "space"))
        G = Nonlinearity.from_dict(data["nonlinearity"]) if data.get("nonlinearity") else None
        solution = data.get("solution")
        if solution is not None:
            _require(solution, "grid", "solution")
            _require(solution, "time", "solution")
            if ("initial" in solution) == ("closed_form" in solution):
                raise exceptions.ConfigException("solution needs exactly one of 'initial' and 'closed_form'")
            if "closed_form" in solution:
                parse(solution["closed_form"], ("r", "t"))
            Grid.from_dict(solution["grid"], solution["time"])
        jobs, seen = [], set()
        for i, job in enumerate(data.get("jobs", [])):
            job = Munch.fromDict(job)
            job.setdefault("id", f"job{i}")
            if job.id in seen:
                raise exceptions.ConfigException(f"duplicate job id {job.id!r}")
            seen.add(job.id)
            if job.get("kind") not in JOB_KINDS:
                raise exceptions.ConfigException(f"job {job.id!r} has kind {job.get('kind')!r}, expected one of "
                                                 f"{list(JOB_KINDS)}")
            job.setdefault("params", Munch())
            jobs.append(job)
        refinements = data.get("refinements", [])
        if any(int(f) < 2 for f in refinements):
            raise exceptions.ConfigException(f"refinement factors must be at least 2, got {refinements}")
        return cls(name, space, G, solution, jobs, refinements=refinements, plots=data.get("plots", True), raw=data)

    @classmethod
    def load(cls, name_or_path):
        path = scenario_path(name_or_path)
        try:
            data = utils.read_json(path)
        except ValueError as e:
            raise exceptions.ConfigException(f"{path} is not valid JSON: {e}")
        return cls.from_dict(data)

    @property
    def hash(self):
        return utils.sha256_hex(self.raw)

    def solve(self, refinement=1):
        """
        The scenario solution at grid spacing dr / refinement; stored levels are refined
        with the same factor so that the level spacing follows dr
        """
        if self.solution is None:
            raise exceptions.ConfigException(f"scenario {self.name} has no solution")
        spec = self.solution
        time_spec = dict(spec["time"])
        grid = Grid.from_dict(spec["grid"], time_spec)
        grid = Grid(grid.dr / refinement, grid.R_max, pad=grid.pad, nt=(grid.nt - 1) * refinement + 1, cfl=grid.cfl)
        T = float(_require(time_spec, "T", "time"))
        t_start = float(time_spec.get("t_start", 0.0))
        if "closed_form" in spec:
            expr = parse(spec["closed_form"], ("r", "t"))
            dt_expr = derivative(expr, "t")
            r = grid.r
            t = t_start + np.linspace(0.0, T, grid.nt)
            return SolutionField.from_callable(self.space, lambda rr, tt: evaluate(expr, r=rr, t=tt), r, t,
                                               dtw=lambda rr, tt: evaluate(dt_expr, r=rr, t=tt), G=self.G,
                                               R_max=grid.R_max, metadata={"grid": grid.to_dict()})
        return solve_parabolic(self.space, self.G, spec["initial"], grid, T, t_start=t_start)

    def needs_levels(self):
        for job in self.jobs:
            if job.kind == "calibration" or (job.kind == "identity" and job.get("identity") in EVOLUTION_IDENTITIES):
                return True
            if job.kind == "estimate" and job.params.get("calibrate"):
                return True
        return False


#      _     _
#   _ | |___| |__ ___
#  | || / _ \ '_ (_-<
#   \__/\___/_.__/__/
#

def _tuples(value):
    if isinstance(value, list):
        return tuple(_tuples(v) for v in value)
    return value


def _judge_residual(report, config):
    finest = report.levels[-1].max_residual
    if finest <= config.residual_tolerance:
        return True
    return report.order is not None and not report.flagged


def _estimate(job, ctx):
    name = job.get("check")
    if name not in CHECKS:
        raise exceptions.ConfigException(f"job {job.id!r}: unknown check {name!r}, expected one of {sorted(CHECKS)}")
    params = {k: _tuples(v) for k, v in job.params.items() if k != "calibrate"}
    if job.params.get("calibrate") and name == "elliptic_harnack" and "C" not in params:
        shared = {k: params[k] for k in ("D", "R", "k") if k in params}
        reports = [CHECKS["souplet_zhang"](sol, ctx.space, ctx.G, **shared) for sol in ctx.levels]
        params["calibration"] = calibrate_constant(reports)
    report = CHECKS[name](ctx.sol, ctx.space, ctx.G, **params)
    if report.get("mode") == "structural":
        passed = report.holds
    else:
        passed = report.margin >= -ctx.config.margin_tolerance
    return passed, report


def _calibration(job, ctx):
    name = job.get("check")
    if name not in CALIBRATED_CHECKS:
        raise exceptions.ConfigException(f"job {job.id!r}: only {list(CALIBRATED_CHECKS)} have a free constant")
    params = {k: _tuples(v) for k, v in job.params.items()}
    reports = [CHECKS[name](sol, ctx.space, ctx.G, **params) for sol in ctx.levels]
    result = calibrate_constant(reports)
    return result.stability <= ctx.config.calibration_stability, result


def _identity(job, ctx):
    name = job.get("identity")
    params = dict(job.params)
    if name == "quadratic_lemma":
        result = quadratic_lemma_check(**params)
        return result.violations == 0, result
    if name == "cd_condition":
        result = cd_condition_check(ctx.space, **params)
        return result.margin >= -ctx.config.margin_tolerance, result
    if name not in IDENTITIES:
        raise exceptions.ConfigException(f"job {job.id!r}: unknown identity {name!r}")
    if name in EVOLUTION_IDENTITIES:
        report = IDENTITIES[name](ctx.levels, **params)
    else:
        report = IDENTITIES[name](ctx.space, **params)
    passed = _judge_residual(report, ctx.config)
    if "slack_ok" in report:
        passed = passed and report.slack_ok
    return passed, report


def _nonlinearity(job, ctx):
    if job.get("nonlinearity"):
        return Nonlinearity.from_dict(job.nonlinearity)
    if ctx.G is None:
        raise exceptions.ConfigException(f"job {job.id!r} needs a nonlinearity")
    return ctx.G


def _predicate(job, ctx):
    result = liouville_predicate(_nonlinearity(job, ctx), _require(job, "theorem", f"job {job.id!r}"),
                                 w_window=job.get("w_window"), params=job.params)
    # a job may record that the hypotheses are expected to fail
    return result.holds == bool(job.get("expect", True)), result


def _liouville(job, ctx):
    grid = Grid.from_dict(job.grid) if job.get("grid") else None
    result = liouville_demo(ctx.space, _nonlinearity(job, ctx), _require(job, "theorem", f"job {job.id!r}"),
                            initial=job.get("initial", "bump(1, 1)"), grid=grid, params=job.params,
                            max_time=float(job.get("max_time", defaults.LIOUVILLE_TIME)))
    if result.verdict == NOT_APPLICABLE:
        return None, result
    return result.verdict in (CONSISTENT, NONEXISTENCE), result


def _cutoff(job, ctx):
    kind = job.get("cutoff", "spatial")
    p = job.params
    if kind == "spatial":
        cutoff = build_spatial_cutoff(float(_require(p, "R", f"job {job.id!r}")))
    elif kind == "space_time":
        R, T, t0, tau = [float(_require(p, key, f"job {job.id!r}")) for key in ("R", "T", "t0", "tau")]
        cutoff = build_space_time_cutoff(R, T, t0, tau)
    else:
        raise exceptions.ConfigException(f"job {job.id!r}: cutoff must be spatial or space_time, got {kind!r}")
    result = certify(cutoff, density=int(p.get("density", defaults.CUTOFF_DENSITY)))
    return result.valid, result


HANDLERS = {
    "estimate": _estimate,
    "calibration": _calibration,
    "identity": _identity,
    "predicate": _predicate,
    "liouville": _liouville,
    "cutoff": _cutoff,
}


def run_job(job, ctx):
    """
    Run one job; errors are recorded, never raised
    :return: Munch(id, kind, status, reason, error, result, wall_time)
    """
    start = time.perf_counter()
    record = Munch(id=job.id, kind=job.kind, status=None, reason=None, error=None, result=None)
    needs_solution = job.kind in ("estimate", "calibration") or (
        job.kind == "identity" and job.get("identity") in EVOLUTION_IDENTITIES)
    try:
        if needs_solution and ctx.sol is None:
            raise exceptions.ConfigException(f"job {job.id!r} needs the scenario solution")
        passed, result = HANDLERS[job.kind](job, ctx)
        record.result = result
        if passed is None:
            record.status, record.reason = SKIPPED, result.get("reason")
        else:
            record.status = PASSED if passed else FAILED
    except PRECONDITIONS as e:
        record.status, record.reason = SKIPPED, e.args[0] if e.args else type(e).__name__
    except exceptions.SolverAbort as e:
        record.status, record.reason, record.error = ERROR, str(e), "solver"
    except exceptions.ConfigException as e:
        record.status, record.reason, record.error = ERROR, str(e), "config"
    except (TypeError, ValueError, KeyError) as e:
        record.status, record.reason, record.error = ERROR, f"invalid parameters: {e}", "config"
    except exceptions.DriftLabException as e:
        record.status, record.reason, record.error = ERROR, str(e), type(e).__name__
    except Exception as e:
        logger.exception(f"job {job.id} raised {type(e).__name__}")
        record.status, record.reason, record.error = ERROR, str(e), type(e).__name__
    record.wall_time = time.perf_counter() - start
    logger.info(f"job {job.id}: {record.status}" + (f" ({record.reason})" if record.reason else ""))
    return record


def _exit_code(records):
    errors = {r.error for r in records if r.status == ERROR}
    if "config" in errors:
        return 2
    if "solver" in errors:
        return 3
    if errors or any(r.status == FAILED for r in records):
        return 1
    return 0


def _collect(record, directory):
    """Write a job's files; the per-point table of an estimate goes to CSV"""
    artifacts = Munch()
    result = record.result
    if isinstance(result, dict) and result.get("table") is not None:
        table = result.pop("table")
        name = f"{utils.slug(record.id)}.csv"
        utils.write_table(os.path.join(directory, name),
                          {"r": table.r, "t": table.t, "lhs": table.lhs, "rhs": table.rhs,
                           "margin": np.asarray(table.rhs) - np.asarray(table.lhs)})
        artifacts.table = name
    if result is not None:
        name = f"{utils.slug(record.id)}.json"
        utils.write_json(os.path.join(directory, name), result)
        artifacts.report = name
    record.artifacts = artifacts
    return record


def run_scenario(path, config=None):
    """
    Run a scenario: solve, then every job, then write reports, tables and figures

    Args:
        path (str): a scenario file or the name of a bundled scenario
        config (Config): output directory, worker count and tolerances
    Returns:
        RunManifest Munch(tool_version, scenario, scenario_hash, directory, solution, jobs, artifacts,
        exit_code, wall_time), also written to manifest.json
    Raises:
        ConfigException, ParseError: when the scenario does not validate
        SolverAbort: when the scenario solution cannot be computed
    """
    config = config or Config()
    start = time.perf_counter()
    scenario = Scenario.load(path)
    directory = utils.ensure_dir(os.path.join(config.out_dir, utils.slug(scenario.name)))
    artifacts = Munch()
    sol, levels, solution_info = None, [], None
    if scenario.solution is not None:
        sol = scenario.solve()
        levels = [sol]
        if scenario.needs_levels():
            levels += [scenario.solve(f) for f in scenario.refinements]
        sol.write_csv(os.path.join(directory, "solution.csv"))
        artifacts.solution = "solution.csv"
        solution_info = Munch(levels=sol.levels, dr=sol.dr, R_max=sol.R_max, t=[float(sol.t[0]), float(sol.t[-1])],
                              refinements=list(scenario.refinements), metadata=sol.metadata)
    ctx = Munch(scenario=scenario, config=config, space=scenario.space, G=scenario.G, sol=sol, levels=levels)
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        records = list(pool.map(lambda job: run_job(job, ctx), scenario.jobs))
    # single writer
    records = [_collect(record, directory) for record in records]
    manifest = Munch(
        tool_version=_version(),
        scenario=scenario.name,
        scenario_hash=scenario.hash,
        tolerance_profile=config.tolerance_profile,
        directory=directory,
        solution=solution_info,
        jobs=records,
        artifacts=artifacts,
        exit_code=_exit_code(records),
    )
    if config.plots and scenario.plots:
        selection = [r.id for r in records if plottable(r)]
        artifacts.plots = [os.path.basename(p) for p in emit_plots(manifest, selection)]
    manifest.wall_time = time.perf_counter() - start
    utils.write_json(os.path.join(directory, "manifest.json"), manifest)
    logger.info(f"scenario {scenario.name}: exit code {manifest.exit_code}")
    return manifest


def deterministic_view(manifest):
    """The manifest without wall-time fields, the part reproduced bit for bit by a rerun"""
    plain = utils.to_plain(manifest)
    plain.pop("wall_time", None)
    for job in plain.get("jobs", []):
        job.pop("wall_time", None)
    return plain
