import csv
import json

import pytest

from hkfloer import cli

FAST = ["verify-hypercontact", "spectrum", "critical-points", "index", "connect", "floer", "slice-check"]
SLOW = ["adiabatic", "monitors"]


def run_main(tmp_path, name, *args):
    out = tmp_path / name
    status = cli.main([*args, "--out", str(out)])
    return status, out


def summary(out):
    return json.loads((out / "summary.json").read_text())


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    res = {}
    for cmd in FAST + SLOW:
        out = base / cmd
        res[cmd] = (cli.main([cmd, "--out", str(out)]), out)
    return res


@pytest.mark.parametrize("cmd", FAST + SLOW)
def test_command_passes(runs, cmd):
    status, out = runs[cmd]
    s = summary(out)
    assert status == 0, s
    assert s["passed"] is True
    assert s["checks"] and all(s["checks"].values())
    assert len(s["config_hash"]) == 64
    assert s["tolerances"] == cli.DEFAULTS["tolerances"]
    for name in s["files"]:
        assert (out / name).exists()


def test_hypercontact_summary(runs):
    s = summary(runs["verify-hypercontact"][1])
    assert s["results"]["kappa"] == 2.0
    assert s["results"]["max_violation"] <= 1e-12


def test_spectrum_csv_contains_examples(tmp_path):
    status, out = run_main(tmp_path, "sp", "spectrum", "--domain", "sphere", "--degree", "2")
    assert status == 0
    rows = list(csv.DictReader((out / "spectrum.csv").open()))
    values = {round(float(r["eigenvalue"]), 8) for r in rows}
    assert {-4.0, -3.0, 0.0, 1.0} <= values
    assert (out / "spectrum.svg").read_text().startswith("<svg")


def test_floer_t4(tmp_path):
    status, out = run_main(tmp_path, "fl", "floer", "--target", "t4")
    s = summary(out)
    assert status == 0
    assert s["results"]["homology"] == [1, 4, 6, 4, 1]
    assert s["results"]["boundary_squared_zero"] is True
    complex_ = json.loads((out / "complex.json").read_text())
    assert complex_["multiplicities"] == [1, 4, 6, 4, 1]


def test_connect_outputs(runs):
    out = runs["connect"][1]
    s = summary(out)
    assert s["results"]["oscillation"] <= 1e-8
    assert s["results"]["energy_error"] <= 1e-6
    rows = list(csv.DictReader((out / "diagnostics.csv").open()))
    actions = [float(r["action"]) for r in rows]
    assert all(b <= a + 1e-12 for a, b in zip(actions, actions[1:]))


def test_critical_points_csv(runs):
    out = runs["critical-points"][1]
    rows = list(csv.DictReader((out / "critical_points.csv").open()))
    assert len(rows) == 16
    assert all(int(r["mu"]) + int(r["morse_index"]) == 4 for r in rows)


def test_adiabatic_ratios(runs):
    s = summary(runs["adiabatic"][1])
    assert s["results"]["eps"] == [0.2, 0.1, 0.05]
    assert all(0.75 <= r <= 1.25 for r in s["results"]["ratios"])


def test_config_file_and_flags(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"domain": {"degree": 1}, "seed": 3}))
    status, out = run_main(tmp_path, "hc", "verify-hypercontact", "--config", str(cfg), "--degree", "2")
    assert status == 0
    base = cli.load_config(None, {"command": "verify-hypercontact", "seed": 3, "domain": {"degree": 2},
                                  "out": str(out)})
    assert summary(out)["config_hash"] == cli.config_hash(base)


class TestUsageErrors:
    def test_unknown_key(self, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"solver": {"tol": 1e-10, "colour": 3}}))
        assert cli.main(["connect", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "ConfigError"
        assert "colour" in err["message"]

    def test_unparseable_file(self, tmp_path):
        cfg = tmp_path / "bad.json"
        cfg.write_text("{not json")
        assert cli.main(["connect", "--config", str(cfg)]) == 2

    def test_negative_tolerance(self, tmp_path):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"tolerances": {"energy": -1.0}}))
        assert cli.main(["connect", "--config", str(cfg)]) == 2

    def test_unknown_command(self):
        assert cli.main(["fly"]) == 2

    def test_bad_flag(self):
        assert cli.main(["connect", "--target", "q3"]) == 2

    def test_missing_file(self, tmp_path):
        assert cli.main(["connect", "--config", str(tmp_path / "nope.json")]) == 2

    def test_unknown_preset(self, tmp_path):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"hamiltonian": "mystery"}))
        assert cli.main(["floer", "--config", str(cfg)]) == 2


class TestFailures:
    def test_numerical_failure_writes_error_json(self, tmp_path, monkeypatch):
        def boom(cfg, out):
            raise FloatingPointError("overflow in solve")

        monkeypatch.setitem(cli.HANDLERS, "connect", boom)
        status, out = run_main(tmp_path, "f", "connect")
        assert status == 1
        s = summary(out)
        assert s["error"] == "FloatingPointError"
        assert s["passed"] is False

    def test_failed_check_exits_one(self, tmp_path):
        cfg = tmp_path / "tight.json"
        cfg.write_text(json.dumps({"tolerances": {"hypercontact": 1e-30}}))
        status, out = run_main(tmp_path, "t", "verify-hypercontact", "--config", str(cfg))
        assert status == 1
        assert summary(out)["checks"]["max_violation"] is False

    def test_strict_turns_warnings_into_failure(self, tmp_path, monkeypatch):
        def warns(cfg, out):
            out.check("fine", True)
            out.warn("monitor drifted")

        monkeypatch.setitem(cli.HANDLERS, "monitors", warns)
        cfg = cli.load_config(None, {"command": "monitors", "out": str(tmp_path / "s")})
        assert cli.run("monitors", cfg, strict=False)[0] == 0
        status, summ = cli.run("monitors", cfg, strict=True)
        assert status == 1
        assert summ["warnings"] == ["monitor drifted"]


class TestDeterminism:
    @pytest.mark.parametrize("cmd", ["critical-points", "floer", "slice-check", "connect"])
    def test_byte_identical(self, tmp_path, cmd):
        a = tmp_path / "a"
        b = tmp_path / "b"
        assert cli.main([cmd, "--out", str(a), "--seed", "5"]) == 0
        assert cli.main([cmd, "--out", str(b), "--seed", "5"]) == 0
        # the output path is part of the config, so compare everything else
        sa, sb = summary(a), summary(b)
        sa.pop("config_hash"), sb.pop("config_hash")
        assert sa == sb
        for name in sa["files"]:
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_normalize(self):
        assert cli.normalize(0.1 + 0.2) == 0.3
        assert cli.normalize(-0.0) == 0.0
        assert cli.normalize(float("inf")) == "inf"
        assert cli.normalize({"a": (1, 2.0)}) == {"a": [1, 2.0]}
