import os

import pytest
from munch import Munch
from pytest import raises

from driftlab import exceptions, scenario, utils
from driftlab.config import Config
from driftlab.scenario import Scenario, run_scenario

SPACE = {"n": 3, "m": 3, "warp": "euclidean", "potential": "zero", "R_max": 4}
KERNEL_SOLUTION = {"closed_form": "(4*pi*t)^(-3/2) * exp(-r^2/(4*t))", "grid": {"dr": 0.1, "R_max": 4},
                   "time": {"t_start": 1, "T": 1, "levels": 11}}


def test_scenario_quick_kernel(scenario_fixture, tempdir):
    path = os.path.join(scenario_fixture, "quick_kernel.json")
    manifest = run_scenario(path, Config(out_dir=tempdir, workers=2))
    statuses = {record.id: record.status for record in manifest.jobs}
    assert statuses == {
        "li_yau": scenario.PASSED,
        "souplet_zhang": scenario.PASSED,
        "hamilton_bad_order": scenario.SKIPPED,
        "bochner": scenario.PASSED,
        "kpp_ancient": scenario.PASSED,
        "spatial_cutoff": scenario.PASSED,
    }
    assert manifest.exit_code == 0
    assert manifest.scenario == "quick_kernel"
    assert manifest.scenario_hash == utils.sha256_hex(utils.read_json(path))
    assert manifest.solution.levels == 11
    # jobs are reported in file order
    assert [record.id for record in manifest.jobs][:2] == ["li_yau", "souplet_zhang"]

    directory = manifest.directory
    for name in ("manifest.json", "solution.csv", "solution.csv.json", "li_yau.csv", "li_yau.json", "bochner.json"):
        assert os.path.exists(os.path.join(directory, name)), name
    assert set(manifest.artifacts.plots) >= {"li_yau.svg", "souplet_zhang.svg", "bochner.svg"}
    table = utils.read_table(os.path.join(directory, "li_yau.csv"))
    assert min(table.margin) > 0
    # the table lives in the CSV only
    assert "table" not in utils.read_json(os.path.join(directory, "li_yau.json"))

    skipped = [record for record in manifest.jobs if record.id == "hamilton_bad_order"][0]
    assert "alpha" in skipped.reason


def test_scenario_deterministic(scenario_fixture, tempdir):
    path = os.path.join(scenario_fixture, "quick_kernel.json")
    config = Config(out_dir=tempdir, workers=3, plots=False)
    first = scenario.deterministic_view(run_scenario(path, config))
    second = scenario.deterministic_view(run_scenario(path, config))
    assert "wall_time" not in first
    assert utils.canonical_json(first) == utils.canonical_json(second)


def test_scenario_failing_and_invalid(scenario_fixture, tempdir):
    manifest = run_scenario(os.path.join(scenario_fixture, "failing_estimate.json"), Config(out_dir=tempdir))
    assert manifest.exit_code == 1
    assert manifest.jobs[0].status == scenario.FAILED
    assert manifest.jobs[0].result.mode == "fixed"
    assert "plots" not in manifest.artifacts

    with raises(exceptions.ParseError) as e:
        run_scenario(os.path.join(scenario_fixture, "bad_expression.json"), Config(out_dir=tempdir))
    assert e.value.offset == 6
    with raises(exceptions.ConfigException):
        run_scenario("no_such_scenario", Config(out_dir=tempdir))


def test_scenario_validation():
    # input (scenario, expected exception)
    args = [
        ([], exceptions.ConfigException),
        ({"name": "x"}, exceptions.ConfigException),
        ({"space": {"n": 3}}, exceptions.ConfigException),
        ({"space": SPACE, "jobs": [{"id": "a", "kind": "cutoff"}, {"id": "a", "kind": "cutoff"}]},
         exceptions.ConfigException),
        ({"space": SPACE, "jobs": [{"kind": "benchmark"}]}, exceptions.ConfigException),
        ({"space": SPACE, "refinements": [1]}, exceptions.ConfigException),
        ({"space": SPACE, "solution": dict(KERNEL_SOLUTION, initial="1")}, exceptions.ConfigException),
        ({"space": SPACE, "solution": {"initial": "1", "grid": {"dr": 0.1, "R_max": 4}}}, exceptions.ConfigException),
        ({"space": SPACE, "solution": dict(KERNEL_SOLUTION, closed_form="exp(-r^2")}, exceptions.ParseError),
        ({"space": SPACE, "nonlinearity": {"preset": "logistic"}}, exceptions.ConfigException),
    ]
    for data, error in args:
        with raises(error):
            Scenario.from_dict(data)

    sc = Scenario.from_dict({"space": SPACE, "solution": KERNEL_SOLUTION, "refinements": [2],
                             "jobs": [{"kind": "cutoff", "params": {"R": 1}}]})
    assert sc.jobs[0].id == "job0"
    assert not sc.needs_levels()
    sol = sc.solve(2)
    assert sol.dr == 0.05
    assert sol.levels == 21
    assert sol.t[-1] == 2.0


def test_scenario_bundled():
    assert scenario.bundled_scenarios() == ["cutoff_certificates", "euclidean_kernel_identities",
                                            "euclidean_kernel_liyau", "kernel_calibration", "liouville_predicates"]
    for name in scenario.bundled_scenarios():
        sc = Scenario.load(name)
        assert sc.name == name
        assert sc.jobs
    assert Scenario.load("kernel_calibration").needs_levels()
    assert scenario.scenario_path("cutoff_certificates.json").endswith("cutoff_certificates.json")


def test_scenario_run_job():
    sc = Scenario.from_dict({"space": SPACE, "jobs": []})
    ctx = Munch(scenario=sc, config=Config(), space=sc.space, G=None, sol=None, levels=[])
    # input (job, status, error)
    args = [
        ({"id": "a", "kind": "estimate", "check": "li_yau", "params": {"alpha": 2}}, scenario.ERROR, "config"),
        ({"id": "b", "kind": "identity", "identity": "bochner", "params": {"u": "r^2", "path": "analytic"}},
         scenario.PASSED, None),
        ({"id": "c", "kind": "identity", "identity": "bochner", "params": {"u": "r^2", "radius": 9}},
         scenario.SKIPPED, None),
        ({"id": "d", "kind": "identity", "identity": "bochner", "params": {"u": "r^2", "colour": 1}},
         scenario.ERROR, "config"),
        ({"id": "e", "kind": "identity", "identity": "quadratic_lemma", "params": {"samples": 1000}},
         scenario.PASSED, None),
        ({"id": "f", "kind": "predicate", "theorem": "ancient"}, scenario.ERROR, "config"),
        ({"id": "g", "kind": "predicate", "theorem": "noether", "nonlinearity": {"family": "Zero"}},
         scenario.ERROR, "UnknownPredicate"),
        ({"id": "h", "kind": "cutoff", "cutoff": "space_time", "params": {"R": 4, "T": 1, "t0": 1, "tau": 2}},
         scenario.ERROR, "BadWindow"),
        ({"id": "i", "kind": "identity", "identity": "cd_condition", "params": {"u": "exp(-r^2)", "k": 0}},
         scenario.PASSED, None),
        ({"id": "j", "kind": "cutoff", "params": {"R": "one"}}, scenario.ERROR, "config"),
    ]
    for job, status, error in args:
        record = scenario.run_job(Munch.fromDict(dict(job, params=job.get("params", {}))), ctx)
        assert record.status == status, f"{job['id']}: {record.reason}"
        assert record.error == error
        assert record.wall_time >= 0


def test_scenario_exit_codes():
    def records(*pairs):
        return [Munch(status=status, error=error) for status, error in pairs]

    # input (records, exit code)
    args = [
        (records((scenario.PASSED, None), (scenario.SKIPPED, None)), 0),
        (records((scenario.PASSED, None), (scenario.FAILED, None)), 1),
        (records((scenario.ERROR, "BadWindow")), 1),
        (records((scenario.ERROR, "solver"), (scenario.FAILED, None)), 3),
        (records((scenario.ERROR, "solver"), (scenario.ERROR, "config")), 2),
        ([], 0),
    ]
    for found, code in args:
        assert scenario._exit_code(found) == code


def test_scenario_job_errors_stay_in_the_record(tempdir):
    path = utils.write_json(os.path.join(tempdir, "mixed_jobs.json"), {
        "name": "mixed_jobs",
        "space": SPACE,
        "jobs": [
            {"id": "good", "kind": "cutoff", "cutoff": "spatial", "params": {"R": 2}},
            {"id": "bad", "kind": "cutoff", "cutoff": "spatial", "params": {"R": "one"}},
        ],
    })
    manifest = run_scenario(path, Config(out_dir=tempdir, plots=False))
    records = {record.id: record for record in manifest.jobs}
    assert records["good"].status == scenario.PASSED
    assert records["bad"].status == scenario.ERROR
    assert records["bad"].error == "config"
    assert "one" in records["bad"].reason
    assert manifest.exit_code == 2


@pytest.mark.slow
@pytest.mark.parametrize("name", scenario.bundled_scenarios())
def test_scenario_bundled_runs(name, tempdir):
    manifest = run_scenario(name, Config(out_dir=tempdir, plots=False))
    failing = [(record.id, record.status, record.reason) for record in manifest.jobs
               if record.status not in (scenario.PASSED, scenario.SKIPPED)]
    assert manifest.exit_code == 0, failing
    assert manifest.jobs
