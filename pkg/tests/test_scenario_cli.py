import csv
import io
import json

import pytest

from gridecon.cli import main
from gridecon.economy import price_at
from gridecon.scenario import (
    CSV_COLUMNS,
    RunSummary,
    ScenarioError,
    ScenarioParseError,
    build_world,
    bundled_path,
    load_scenario,
    parse_scenario,
    report,
    run,
)


@pytest.fixture(scope="module")
def wwg():
    return load_scenario("wwg")


@pytest.fixture(scope="module")
def wwg_runs(wwg):
    return {m: run(wwg, mode=m) for m in ("cost_opt", "time_opt")}


def raw_wwg():
    return json.loads(bundled_path("wwg").read_text())


def problems(data):
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(data)
    return dict(exc.value.problems)


def test_bundled_wwg(wwg):
    assert len(wwg.providers) == 6 and len(wwg.brokers) == 1
    assert [price_at(p.schedule, 0) for p in wwg.providers] == [2, 3, 3, 4, 7, 8]
    b = wwg.brokers[0]
    assert (b.jobs, b.job_seconds, b.requirements.deadline, b.requirements.budget) == (165, 300, 7200, 396000)
    assumed = {p.provider_id: p.assumed for p in wwg.providers}
    assert assumed["monash"] and assumed["tokyo"]


def test_unknown_offer_named(wwg):
    data = raw_wwg()
    data["brokers"][0]["offers"] = ["monash-cpu", "nowhere-cpu"]
    assert "unknown offer 'nowhere-cpu'" in problems(data)["$.brokers[0].offers[1]"]


def test_broker_without_providers():
    data = raw_wwg()
    data["providers"] = []
    assert "$.providers" in problems(data)


def test_every_problem_is_reported():
    data = raw_wwg()
    data["providers"][0]["node_count"] = -1
    data["brokers"][0]["mode"] = "fastest"
    data["brokers"][0]["budget"] = "lots"
    found = problems(data)
    assert {"$.providers[0].node_count", "$.brokers[0].mode", "$.brokers[0].budget"} <= set(found)


def test_parse_errors_are_distinct(tmp_path):
    bad = tmp_path / "bad.scenario"
    bad.write_text("{ nope")
    with pytest.raises(ScenarioParseError):
        load_scenario(bad)
    with pytest.raises(ScenarioParseError):
        load_scenario(tmp_path / "missing.scenario")


def test_wwg_modes_both_feasible(wwg_runs):
    cost, time = wwg_runs["cost_opt"], wwg_runs["time_opt"]
    for s in wwg_runs.values():
        b = s.brokers[0]
        assert b.jobs_completed == 165 and b.deadline_met and b.total_cost <= 396000 and s.balanced
    assert cost.broker_spend < time.broker_spend
    assert time.brokers[0].makespan <= cost.brokers[0].makespan


def test_json_round_trip(wwg_runs):
    s = wwg_runs["time_opt"]
    back = RunSummary.from_json(report(s, "json"))
    assert back == s and back.to_json() == s.to_json()


def test_csv_layout(wwg_runs):
    rows = list(csv.reader(io.StringIO(report(wwg_runs["cost_opt"], "csv"))))
    assert tuple(rows[0]) == CSV_COLUMNS == ("resource", "price", "jobs", "cost", "makespan")
    assert len(rows) == 1 + 6 + 1 and rows[-1][0] == "total"
    assert sum(int(r[2]) for r in rows[1:-1]) == int(rows[-1][2]) == 165


def test_table_has_row_per_resource(wwg_runs):
    text = report(wwg_runs["time_opt"], "table")
    for rid in ("monash", "tokyo", "prosecco", "barbera", "anl", "isi"):
        assert sum(line.startswith(rid) for line in text.splitlines()) == 1
    assert "Total" in text and "Time to complete" in text


def test_unknown_format(wwg_runs):
    with pytest.raises(ValueError):
        report(wwg_runs["cost_opt"], "xml")


def test_data_site_scenario():
    data = {"seed": 1, "providers": [], "brokers": [], "stop_time": 3 * 86400,
            "data_sites": [{"id": "cern", "tb_per_day": 10, "users": {"a": 1, "b": 1},
                            "requests": [{"at": 36000, "user": "a", "mb": 1000},
                                         {"at": 36001, "user": "b", "mb": 10**6}]}]}
    s = run(parse_scenario(data))
    site = s.data_sites[0]
    assert site["provisioned"] == 10_000_000
    assert site["spent_today"] + sum(site["balances"].values()) + site["unallocated"] == 10_000_000


def test_data_site_unknown_user():
    data = {"providers": [], "data_sites": [{"id": "s", "mb_per_day": 5, "users": {"a": 1},
                                             "requests": [{"at": 0, "user": "zed", "mb": 1}]}]}
    assert "$.data_sites[0].requests[0].user" in problems(data)


# -- command line --------------------------------------------------------------------

def test_cli_run_writes_traces(tmp_path, capsys):
    assert main(["run", "wwg", "--trace", str(tmp_path)]) == 0
    assert "Time to complete" in capsys.readouterr().out
    names = {p.name for p in tmp_path.iterdir()}
    assert {"trace.csv", "trace.jsonl", "summary.json", "summary.txt"} <= names
    csv_rows = (tmp_path / "trace.csv").read_text().splitlines()
    jsonl_rows = (tmp_path / "trace.jsonl").read_text().splitlines()
    assert len(csv_rows) == len(jsonl_rows) + 1


def test_cli_trace_env(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("GRIDECON_TRACE_DIR", str(tmp_path))
    assert main(["run", "wwg", "--format", "json"]) == 0
    assert json.loads(capsys.readouterr().out)["scenario"] == "wwg"
    assert (tmp_path / "trace.jsonl").exists()


def test_cli_same_seed_same_bytes(tmp_path):
    for d in ("a", "b"):
        assert main(["run", "wwg", "--seed", "42", "--trace", str(tmp_path / d)]) == 0
    for f in ("trace.csv", "trace.jsonl", "summary.txt"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    a, b = (json.loads((tmp_path / d / "summary.json").read_text()) for d in "ab")
    # only the recorded output paths differ
    assert a.pop("trace_files") != b.pop("trace_files") and a == b


def test_cli_both_modes(capsys):
    assert main(["run", "wwg", "--mode", "both"]) == 0
    out = capsys.readouterr().out
    assert "cost_opt" in out and "time_opt" in out and "Total cost" in out


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.scenario"
    bad.write_text("[]")
    data = raw_wwg()
    data["brokers"][0]["budget"] = 1000
    poor = tmp_path / "poor.scenario"
    poor.write_text(json.dumps(data))
    assert main(["run", str(bad)]) == 3
    assert main(["validate", str(bad)]) == 3
    assert main(["validate", "wwg"]) == 0
    assert main(["run", str(poor)]) == 4
    assert main(["run"]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["run", "wwg", "--jobs", "0"]) == 2
    assert main(["--help"]) == 0
    capsys.readouterr()


def test_cli_parallel_matches_serial(tmp_path, capsys):
    data = raw_wwg()
    data["brokers"][0]["jobs"] = 20
    small = tmp_path / "small.scenario"
    small.write_text(json.dumps(data))
    assert main(["run", "wwg", str(small), "--format", "csv", "--jobs", "2"]) == 0
    parallel = capsys.readouterr().out
    assert main(["run", "wwg", str(small), "--format", "csv"]) == 0
    assert capsys.readouterr().out == parallel


def test_cli_worst_code_wins(tmp_path, capsys):
    bad = tmp_path / "bad.scenario"
    bad.write_text("{")
    assert main(["run", "wwg", str(bad)]) == 3
    capsys.readouterr()


def test_dump_directory(capsys):
    assert main(["dump-directory", "wwg"]) == 0
    dump = json.loads(capsys.readouterr().out)
    assert "monash-cpu" in json.dumps(dump)


def test_world_offers_match_scenario(wwg):
    world = build_world(wwg)
    assert set(world.grid.resources) == {"monash", "tokyo", "prosecco", "barbera", "anl", "isi"}
