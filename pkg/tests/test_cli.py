"""Command line: subcommands and exit codes"""

import json
import os

import numpy as np
import pandas as pd
import pytest

import dblacam_cli
from bench_runner import RESULT_COLUMNS, RunReport
from clustering import ClusterMethod
from dblacam_cli import (
    EXIT_ERROR, EXIT_INVALID, EXIT_OK, EXIT_TIMEOUT, _parse_params, bench_exit_code, build_parser, config_from_args,
    main,
)
from dynamics import ModelId, make_model, rollout
from geometry import CollisionShape, RobotShape, Workspace
from primitives import load_set
from scenarios import RobotEntry, RobotTrajectory, Scenario, Solution, save_scenario, save_solution

UNICYCLE = make_model(ModelId.UNICYCLE_1ST)
SHAPE = RobotShape.for_model(UNICYCLE, CollisionShape.sphere(0.2))
FAST = ["--primitive-count", "80", "--horizon", "10", "--timelimit", "20"]


@pytest.fixture(autouse=True)
def quiet_cli(monkeypatch):
    monkeypatch.setattr(dblacam_cli, "setup_logging", lambda *args, **kwargs: None)
    for var in list(os.environ):
        if var.startswith("DBLACAM_"):
            monkeypatch.delenv(var)


@pytest.fixture
def lane(tmp_path):
    ws = Workspace(2, np.zeros(2), np.array([4.0, 3.0]))
    robot = RobotEntry(UNICYCLE, SHAPE, np.array([1.0, 1.5, 0.0]), np.array([2.0, 1.5, 0.0]))
    scenario = Scenario("lane", ws, [robot])
    return scenario, str(save_scenario(scenario, tmp_path / "lane.json"))


def test_gen_scenarios_writes_one_file_per_seed(tmp_path, capsys):
    out = tmp_path / "scenarios"
    code = main(["gen-scenarios", "random2d", "--n", "2", "--param", "size=6.0", "--seeds", "0", "1", "--out", str(out)])
    assert code == EXIT_OK
    assert sorted(p.name for p in out.iterdir()) == ["random2d-n2-s0.json", "random2d-n2-s1.json"]
    assert "2 robots" in capsys.readouterr().out


def test_gen_scenarios_bad_parameter_is_an_error(tmp_path):
    assert main(["gen-scenarios", "headon2", "--n", "4", "--out", str(tmp_path)]) == EXIT_ERROR


def test_unknown_scenario_kind_is_rejected_by_the_parser(tmp_path):
    with pytest.raises(SystemExit):
        main(["gen-scenarios", "maze", "--out", str(tmp_path)])


def test_gen_primitives(tmp_path, capsys):
    path = tmp_path / "unicycle.json"
    code = main(["gen-primitives", "--model", "unicycle_1st", "--count", "12", "--horizon", "5", "--out", str(path)])
    assert code == EXIT_OK
    assert len(load_set(path, UNICYCLE)) == 12
    assert "12 primitives" in capsys.readouterr().out


def test_validate_exit_codes(tmp_path, lane, capsys):
    scenario, scenario_file = lane
    controls = np.array([[0.5, 0.0]] * 20)
    states, _ = rollout(UNICYCLE, scenario.robots[0].start, controls)
    good = save_solution(Solution("lane", [RobotTrajectory(states, controls, 20, 0.1)]), tmp_path / "good.json")
    short = save_solution(Solution("lane", [RobotTrajectory(states[:6], controls[:5], 5, 0.1)]),
                          tmp_path / "short.json")

    assert main(["validate", scenario_file, str(good)]) == EXIT_OK
    assert "solution valid" in capsys.readouterr().out
    assert main(["validate", scenario_file, str(short)]) == EXIT_INVALID
    assert "goal" in capsys.readouterr().out
    assert main(["validate", scenario_file, str(tmp_path / "absent.json")]) == EXIT_ERROR


def test_plan_writes_a_valid_solution(tmp_path, lane):
    _, scenario_file = lane
    out = tmp_path / "solution.json"
    assert main(["plan", scenario_file, "--out", str(out), *FAST]) == EXIT_OK
    data = json.loads(out.read_text())
    assert data["metadata"]["planner"] == "dblacam"
    assert main(["validate", scenario_file, str(out)]) == EXIT_OK


def test_plan_timeout_exit_code(tmp_path, lane):
    _, scenario_file = lane
    args = ["plan", scenario_file, "--out", str(tmp_path / "s.json"), *FAST, "--timelimit", "0"]
    assert main(args) == EXIT_TIMEOUT
    assert not (tmp_path / "s.json").exists()


def test_plan_missing_scenario(tmp_path):
    assert main(["plan", str(tmp_path / "nope.json"), *FAST]) == EXIT_ERROR


def test_bench_without_scenarios(tmp_path, capsys):
    assert main(["bench", "--out", str(tmp_path / "bench")]) == EXIT_OK
    assert "no cells were run" in capsys.readouterr().out
    assert (tmp_path / "bench" / "results.csv").exists()


def test_bench_only_timeouts(tmp_path, lane):
    _, scenario_file = lane
    code = main(["bench", scenario_file, "--trials", "2", "--out", str(tmp_path / "bench"), *FAST,
                 "--timelimit", "0"])
    assert code == EXIT_TIMEOUT
    results = pd.read_csv(tmp_path / "bench" / "results.csv")
    assert results["seed"].tolist() == [0, 1]


def report_with(statuses, valid=None):
    rows = []
    for i, status in enumerate(statuses):
        ok = valid[i] if valid is not None else status == "solved"
        rows.append({**{c: None for c in RESULT_COLUMNS}, "seed": i, "status": status,
                     "success": status == "solved" and ok, "valid": ok})
    return RunReport(pd.DataFrame(rows, columns=RESULT_COLUMNS))


@pytest.mark.parametrize("statuses,valid,expected", [
    ([], None, EXIT_OK),
    (["solved", "solved"], None, EXIT_OK),
    (["solved", "timeout"], None, EXIT_TIMEOUT),
    (["solved", "timeout", "stuck"], None, EXIT_ERROR),
    (["solved", "error"], None, EXIT_ERROR),
    (["solved", "timeout"], [False, False], EXIT_INVALID),
])
def test_bench_exit_code(statuses, valid, expected):
    assert bench_exit_code(report_with(statuses, valid)) == expected


def test_parse_params():
    params = _parse_params(["size=12", "obstacle-density=0.2", "model=unicycle_1st"])
    assert params == {"size": 12, "obstacle_density": 0.2, "model": "unicycle_1st"}
    assert _parse_params(None) == {}


def test_flags_override_defaults():
    args = build_parser().parse_args([
        "plan", "x.json", "--cluster", "scgoc", "--n", "3", "--tau", "0.5", "--explored-res", "0.1", "0.2",
        "--livelock", "off", "--primitive-count", "50", "--primitive-dir", "prims", "--seed", "9",
    ])
    config = config_from_args(args)
    assert config.cluster.method == ClusterMethod.SCGOC
    assert (config.cluster.n, config.cluster.tau) == (3, 0.5)
    assert (config.explored_res_linear, config.explored_res_angle) == (0.1, 0.2)
    assert config.livelock is False
    assert (config.primitives.count, config.primitives.directory) == (50, "prims")
    assert config.seed == 9
    assert config.planner == "dblacam"


def test_unset_flags_keep_defaults():
    config = config_from_args(build_parser().parse_args(["bench"]))
    assert config.livelock is True
    assert config.incremental_primitives is False
    assert config.timelimit == 60.0


def test_livelock_takes_on_or_off():
    parser = build_parser()
    assert config_from_args(parser.parse_args(["bench", "--livelock", "on"])).livelock is True
    with pytest.raises(SystemExit):
        parser.parse_args(["bench", "--no-livelock"])
    with pytest.raises(SystemExit):
        parser.parse_args(["bench", "--livelock", "maybe"])
