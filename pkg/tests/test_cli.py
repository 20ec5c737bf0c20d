import csv
import io
import json
from fractions import Fraction
from pathlib import Path

import pytest
from click.testing import CliRunner

from guardstrength.cli import CSV_HEADER, main

from helpers import ruin

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture
def run():
    runner = CliRunner()

    def go(*args):
        return runner.invoke(main, list(args), catch_exceptions=False)

    return go


def _csv(text):
    return list(csv.reader(io.StringIO(text)))


def test_sweep_csv_matches_golden_file(run):
    r = run("sweep", "--corpus", "1dbrw", "--emit", "csv")
    assert r.exit_code == 0
    got = _csv(r.output)
    want = _csv((GOLDEN / "1dbrw_sweep.csv").read_text())
    assert got[0] == want[0] == CSV_HEADER
    assert [row[:-1] for row in got[1:]] == [row[:-1] for row in want[1:]]
    assert all(float(row[-1]) >= 0 for row in got[1:])


def test_solve_walk_gives_ruin_probability(run):
    r = run("solve", "--corpus", "1dbrw", "-p", "M=10", "--post", "[n<=0]", "--init", "n=1", "--emit", "json")
    assert r.exit_code == 0
    data = json.loads(r.output)
    assert data["results"][0]["exact"] == str(ruin(1, 10))
    assert data["chain_states"] == 11 and not data["truncated"]


def test_solve_false_guard_returns_post(run, tmp_path):
    p = tmp_path / "stop.pgcl"
    p.write_text("while (false) { n := n + 1 }")
    r = run("solve", "--program", str(p), "--post", "n + 2", "--init", "n=3", "--emit", "json")
    assert r.exit_code == 0
    assert json.loads(r.output)["results"][0]["exact"] == "5"


def test_solve_zeroconf(run):
    r = run("solve", "--corpus", "zeroconf", "-p", "M=10", "--emit", "json")
    assert r.exit_code == 0
    v = Fraction(json.loads(r.output)["results"][0]["exact"])
    assert v >= Fraction("0.99999999999")


def test_solve_truncated_exits_2(run):
    r = run("solve", "--corpus", "1dbrw", "-p", "M=40", "--max-states", "5")
    assert r.exit_code == 2
    assert "truncated=yes" in r.output


@pytest.mark.parametrize("args", [
    ("solve", "--corpus", "no-such-example"),
    ("solve", "--corpus", "1dbrw", "-p", "M=10", "--post", "[n<=0"),
    ("solve",),
])
def test_errors_exit_1_with_diagnostic_on_stderr(args):
    r = CliRunner().invoke(main, list(args))
    assert r.exit_code == 1
    assert r.stdout == "" and r.stderr.startswith("error:")


def test_sweep_decrease_is_an_error():
    r = CliRunner().invoke(main, ["sweep", "--corpus", "1dbrw", "--values", "10,5"])
    assert r.exit_code == 1
    assert "decreased" in r.stderr


def test_sweep_constant_family(run):
    r = run("sweep", "--corpus", "1dbrw", "--strengthen", "n < 7", "--values", "1,2,3",
            "--init", "n=2", "--emit", "csv")
    assert r.exit_code == 0
    assert len({row[2] for row in _csv(r.output)[1:]}) == 1


def test_sweep_jobs_same_output(run):
    a = run("sweep", "--corpus", "1dbrw", "--emit", "json")
    b = run("sweep", "--corpus", "1dbrw", "--emit", "json", "--jobs", "2")
    strip = lambda out: [{k: v for k, v in row.items() if k != "millis"} for row in json.loads(out)["rows"]]
    assert strip(a.output) == strip(b.output)


@pytest.mark.parametrize("name", ["1dbrw", "petersburg"])
def test_certify_examples(run, name):
    r = run("certify", "--corpus", name, "--emit", "json")
    assert r.exit_code == 0
    cert = json.loads(r.output)
    assert cert["verdict"] == "CERTIFIED" and cert["inner_rule"] == "HARK"


def test_certify_wrong_bound_fails_with_witness(run):
    r = run("certify", "--corpus", "1dbrw", "--bound", "[n<0] + [0<=n<=M] * ((1/2)^n + (1/2)^M)",
            "--emit", "json")
    assert r.exit_code == 1
    cert = json.loads(r.output)
    assert cert["verdict"] == "FAILED"
    sub = next(c for c in cert["side_conditions"] if c["kind"] == "SUBINVARIANT")
    assert sub["status"] == "FAILED" and sub["evidence"]["witness"]


def test_certificate_replay(run, tmp_path):
    out = tmp_path / "cert.json"
    assert run("certify", "--corpus", "1dbrw", "--out", str(out)).exit_code == 0
    r = run("certify", "--replay", str(out))
    assert r.exit_code == 0 and "identical" in r.output


def test_diff_identity(run):
    r = run("diff", "--corpus", "wpdiff", "--region", "n=1..10", "--emit", "json")
    assert r.exit_code == 0
    data = json.loads(r.output)
    assert data["identity"] and len(data["records"]) == 10


def test_simulate_json(run):
    r = run("simulate", "--corpus", "1dbrw", "-p", "M=10", "--post", "[n<=0]", "--trials", "2000",
            "--seed", "3", "--emit", "json")
    assert r.exit_code == 0
    est = json.loads(r.output)[0]
    assert set(est) == {"state", "mean", "trials", "cutoff_fraction", "half_width", "seed"}
    assert est["trials"] == 2000 and est["seed"] == 3
    assert abs(est["mean"] - float(ruin(1, 10))) <= 4 * est["half_width"]
    human = run("simulate", "--corpus", "1dbrw", "-p", "M=10", "--trials", "100")
    assert "CUTOFF FRACTION" in human.output


def test_parse_round_trip(run):
    r = run("parse", "--corpus", "3dsrw", "--emit", "json")
    assert r.exit_code == 0 and json.loads(r.output)["round_trip"]


def test_dump_chain(run, tmp_path):
    out = tmp_path / "chain.txt"
    r = run("solve", "--corpus", "1dbrw", "-p", "M=4", "--dump-chain", str(out))
    assert r.exit_code == 0
    assert out.read_text().splitlines()[0] == "guardstrength-chain 1"
