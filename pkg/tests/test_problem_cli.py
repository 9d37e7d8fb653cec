import io
import json
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from isoflow import problem as pr
from isoflow.cli import main
from isoflow.phase import INF
from isoflow.verify import schlesinger_state

ROOT = Path(__file__).resolve().parents[1]
PROBLEMS = ROOT / "problems"


def run(*argv):
    buf = io.StringIO()
    code = main([str(a) for a in argv], out=buf)
    return code, buf.getvalue()


@pytest.mark.parametrize("name", sorted(p.name for p in PROBLEMS.glob("*.json")))
def test_round_trip(name):
    data = json.loads((PROBLEMS / name).read_text())
    once = pr.parse(data).to_json()
    assert pr.parse(once).to_json() == once


def test_number_encoding():
    for x in (3, Fraction(2, 3), 1.5, 1 - 2j):
        assert pr.decode_number(pr.encode_number(x)) == x
    assert pr.decode_number("inf") is INF


def test_state_round_trip(tmp_path):
    s = schlesinger_state(np.random.default_rng(0), 2, 3)
    f = tmp_path / "s.json"
    f.write_text(pr.dumps(pr.from_state(s)))
    back = pr.load(f).state()
    assert np.allclose(back.gamma, s.gamma) and np.allclose(back.times, s.times)


@pytest.mark.parametrize(
    "data,where",
    [
        ({"version": 2}, "$.version"),
        ({"version": 1, "extra": 1}, "$.extra"),
        ({"version": 1, "graph": {"core": [1, 1]}, "d": [1, 1, 1]}, "$.d"),
        ({"version": 1, "graph": {"core": [1, 1]}, "d": [1, 1], "lambda": [1, 1]}, "$.lambda"),
        ({"version": 1, "phase": {"fourier": [0, "inf"], "times": [0, 0], "dims": [[1], [1]], "blocks": {"0,1": [[1, 2]]}}}, "$.phase.blocks.0,1"),
        ({"version": 1, "phase": {"fourier": [0, "inf"], "times": [0, 0, 0], "dims": [[1, 1], [1]]}}, "$.phase.times"),
    ],
)
def test_parse_errors_name_location(data, where):
    with pytest.raises(pr.ProblemError) as exc:
        pr.parse(data)
    assert exc.value.where == where


def test_cli_roots_and_dim():
    code, out = run("roots", "--file", PROBLEMS / "affine_d4.json")
    assert code == 0 and "imaginary root" in out and "Delta = 2" in out
    code, out = run("dim", "--file", PROBLEMS / "affine_d4.json")
    assert code == 0 and out.strip().endswith("= 2")


def test_cli_roots_real_and_nonroot(tmp_path):
    f = tmp_path / "e.json"
    f.write_text(json.dumps({"version": 1, "graph": {"core": [1, 1]}, "d": [1, 0]}))
    code, out = run("roots", "--file", f)
    assert code == 0 and "real root" in out and "Delta = 0" in out
    f.write_text(json.dumps({"version": 1, "graph": {"core": [1, 1]}, "d": [2, 1]}))
    code, out = run("roots", "--file", f)
    assert code == 0 and "not a root" in out


def test_cli_reflect_refuses_zero_parameter(tmp_path):
    f = tmp_path / "z.json"
    f.write_text(json.dumps({"version": 1, "graph": {"core": [1, 1]}, "d": [1, 1], "lambda": [0, 0]}))
    code, _ = run("reflect", "--file", f, "--node", 0)
    assert code == 2


def test_cli_orbit_depth_zero():
    code, out = run("orbit", "--file", PROBLEMS / "a2pp.json", "--depth", 0)
    assert code == 0
    rows = [l for l in out.splitlines()[1:] if l.strip()]
    assert len(rows) == 1 and rows[0].startswith("id")


def test_cli_exists_and_readings():
    code, out = run("exists", "--file", PROBLEMS / "affine_d4.json")
    assert code == 0 and "nonempty" in out
    code, out = run("readings", "--file", PROBLEMS / "affine_d4.json")
    ranks = sorted(int(l.split()[-3]) for l in out.splitlines()[1:] if l.strip())
    assert code == 0 and ranks == [2, 3, 5]


def test_cli_integrate_writes_outputs(tmp_path):
    base = tmp_path / "traj"
    code, out = run("integrate", "--file", PROBLEMS / "schlesinger.json", "--step", 0.02, "--output", base)
    assert code == 0
    data = json.loads(base.with_suffix(".json").read_text())
    assert data and base.with_suffix(".csv").read_text().startswith("s,")


def test_cli_tau_loop():
    code, out = run("tau", "--file", PROBLEMS / "jmms_loop.json", "--step", 0.05)
    assert code == 0 and "order" in out


def test_cli_verify_vacuous(capsys):
    code, out = run("verify", "orbits", "--trials", 0)
    assert code == 0 and "3/3" in out
    assert "trials = 0" in capsys.readouterr().err


def test_cli_bad_file(tmp_path):
    f = tmp_path / "bad.json"
    f.write_text("{ not json")
    code, _ = run("roots", "--file", f)
    assert code == 2
    code, _ = run("roots", "--file", tmp_path / "missing.json")
    assert code == 2
