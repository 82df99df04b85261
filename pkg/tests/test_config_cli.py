import copy
import json

import numpy as np
import pytest

from barrierltl import cli
from barrierltl.config import ConfigError, bundled, load_config, parse_config
from barrierltl.schemas import SCHEMAS, validate

TOY = {
    "name": "toy",
    "state_vars": ["x"],
    "noise": {"vars": ["w"], "distributions": [{"type": "normal", "mean": 0, "std": 1}]},
    "dynamics": ["0.9*x + 0.05*w"],
    "regions": {
        "A": {"parts": [["x >= -0.3", "x <= 0.3"]]},
        "B": {"parts": [["x >= 1", "x <= 2"], ["x >= -2", "x <= -1"]]},
    },
    "labels": {"A": "a", "B": "b"},
    "default_label": "c",
    "formula": "a & G !b",
    "N": 4,
    "domain": {"box": [[-2.5], [2.5]]},
    "synthesis": {"degrees": [[2, 2]]},
    "monte_carlo": {"trials": 2000, "confidence": 0.99, "seed": 3, "initial": "claimed"},
}


def write(tmp_path, data, name="toy.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


class TestConfig:
    def test_running_example(self):
        cfg = load_config(bundled("running_example.json"))
        assert cfg.props == ("p0", "p1", "p2", "p3")
        assert cfg.n_steps == 5
        x = np.array([[1.0, 2.0]])
        w = np.array([[0.5, -0.5]])
        want = [1.0 - 0.01 * 4 + 0.05, 2.0 - 0.01 * 2 - 0.05]
        assert np.allclose(cfg.system.step(x, w), [want])
        assert cfg.labels.label(np.array([-1.0, -1.0])) == "p0"
        assert cfg.labels.label(np.array([1.0, 1.0])) == "p1"
        assert cfg.labels.label(np.array([-1.0, 1.0])) == "p2"
        assert cfg.labels.label(np.array([15.0, 15.0])) == "p3"

    @pytest.mark.parametrize("name", ["running_example.json", "ten_room.json", "lorenz.json"])
    def test_bundled_load(self, name):
        cfg = load_config(bundled(name))
        assert cfg.formula is not None and cfg.n_steps >= 1

    def test_missing_dynamics(self):
        data = copy.deepcopy(TOY)
        del data["dynamics"]
        with pytest.raises(ConfigError) as err:
            parse_config(data)
        assert err.value.pointer == "/dynamics"

    def test_bad_type_pointer(self):
        data = copy.deepcopy(TOY)
        data["N"] = "five"
        with pytest.raises(ConfigError) as err:
            parse_config(data)
        assert err.value.pointer == "/N"

    def test_formula_and_dfa_exclusive(self):
        data = copy.deepcopy(TOY)
        data["dfa"] = "fig1b_dfa.json"
        with pytest.raises(ConfigError, match="mutually exclusive"):
            parse_config(data)

    def test_dynamics_count(self):
        data = copy.deepcopy(TOY)
        data["dynamics"] = ["x", "x"]
        with pytest.raises(ConfigError) as err:
            parse_config(data)
        assert err.value.pointer == "/dynamics"

    def test_formula_error_points_at_formula(self):
        data = copy.deepcopy(TOY)
        data["formula"] = "a U"
        with pytest.raises(ConfigError) as err:
            parse_config(data)
        assert err.value.pointer == "/formula"

    def test_unknown_label_region(self):
        data = copy.deepcopy(TOY)
        data["labels"]["Z"] = "z"
        with pytest.raises(ConfigError) as err:
            parse_config(data)
        assert err.value.pointer == "/labels/Z"


class TestCli:
    def test_verify_json(self, tmp_path, capsys):
        path = write(tmp_path, TOY)
        code, out, _ = run(["verify", path, "--format", "json", "--out-dir", str(tmp_path / "o")], capsys)
        assert code == cli.EXIT_OK
        rep = json.loads(out)
        validate("report", rep)
        assert rep["lower_bound"] > 0.9
        assert rep["monte_carlo"]["interval"][1] >= rep["lower_bound"]
        for f in (tmp_path / "o" / "certificates").iterdir():
            validate("certificate", json.loads(f.read_text()))
        assert (tmp_path / "o" / "report.txt").exists()

    def test_verify_text(self, tmp_path, capsys):
        code, out, _ = run(["verify", write(tmp_path, TOY), "--no-mc"], capsys)
        assert code == 0 and "P(satisfaction)" in out

    def test_vacuous_exit(self, tmp_path, capsys):
        data = copy.deepcopy(TOY)
        data["formula"] = "a & G !c"  # c is unbounded, so no certificate exists
        code, out, _ = run(["verify", write(tmp_path, data), "--no-mc", "--format", "json"], capsys)
        assert code == cli.EXIT_VACUOUS
        assert json.loads(out)["lower_bound"] == 0.0

    def test_missing_file(self, tmp_path, capsys):
        code, _, err = run(["verify", str(tmp_path / "nope.json")], capsys)
        assert code == cli.EXIT_INPUT and "not found" in err

    def test_bad_json(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        p.write_text("{ nope")
        code, _, _ = run(["verify", str(p)], capsys)
        assert code == cli.EXIT_INPUT

    def test_schema_error_message(self, tmp_path, capsys):
        data = copy.deepcopy(TOY)
        del data["dynamics"]
        code, _, err = run(["verify", write(tmp_path, data)], capsys)
        assert code == cli.EXIT_INPUT and "/dynamics" in err

    def test_numerical_exit(self, tmp_path, capsys, monkeypatch):
        def boom(*a, **k):
            raise np.linalg.LinAlgError("singular")

        monkeypatch.setattr(cli, "verify", boom)
        code, _, err = run(["verify", write(tmp_path, TOY)], capsys)
        assert code == cli.EXIT_NUMERICAL and "numerical" in err

    def test_translate_true(self, capsys):
        code, out, _ = run(["translate", "--formula", "true", "--format", "json"], capsys)
        assert code == 0
        dfa = json.loads(out)
        validate("automaton", dfa)
        assert dfa["accepting"] and len(dfa["states"]) == 2

    def test_translate_dot(self, capsys):
        code, out, _ = run(["translate", "--formula", "G a", "--negate"], capsys)
        assert code == 0 and out.lstrip().startswith("digraph")

    def test_translate_syntax_error(self, capsys):
        code, _, err = run(["translate", "--formula", "a U"], capsys)
        assert code == cli.EXIT_INPUT and "offset 4" in err

    def test_decompose_fig1b(self, capsys):
        code, out, _ = run(["decompose", "--dfa", "fig1b_dfa.json", "--N", "5", "--format", "json"], capsys)
        assert code == 0
        data = json.loads(out)
        validate("decomposition", data)
        assert len(data["runs"]) == 4

    def test_decompose_needs_input(self, capsys):
        code, _, _ = run(["decompose"], capsys)
        assert code == cli.EXIT_INPUT

    def test_simulate(self, tmp_path, capsys):
        csv_path = tmp_path / "t.csv"
        code, out, _ = run(["simulate", write(tmp_path, TOY), "--format", "json", "--trials", "500",
                            "--csv", str(csv_path)], capsys)
        assert code == 0
        est = json.loads(out)
        validate("estimate", est)
        assert est["trials"] == 500 and csv_path.exists()
        _, again, _ = run(["simulate", write(tmp_path, TOY), "--format", "json", "--trials", "500"], capsys)
        assert json.loads(again)["successes"] == est["successes"]

    def test_check_certificate(self, tmp_path, capsys):
        path = write(tmp_path, TOY)
        run(["verify", path, "--no-mc", "--out-dir", str(tmp_path / "o")], capsys)
        (cert,) = (tmp_path / "o" / "certificates").iterdir()
        code, out, _ = run(["check-certificate", path, str(cert), "--format", "json"], capsys)
        assert code == 0
        data = json.loads(out)
        validate("check", data)
        assert data["status"] == "verified"

    def test_check_bad_certificate(self, tmp_path, capsys):
        path = write(tmp_path, TOY)
        bad = {"vars": ["x"], "B": [], "gamma": 0.0, "c": 0.0, "horizon": 3, "bound": 0.0, "status": "verified",
               "task": {"triple": ["q0", "q1", "q2"], "horizon": 3, "source": ["a"], "target": ["b"]}}
        cert = tmp_path / "bad.json"
        cert.write_text(json.dumps(bad))
        code, out, _ = run(["check-certificate", path, str(cert), "--format", "json"], capsys)
        assert code == cli.EXIT_VACUOUS
        assert json.loads(out)["status"] == "failed"

    def test_export_sdp(self, tmp_path, capsys):
        code, out, _ = run(["export-sdp", write(tmp_path, TOY), "--out-dir", str(tmp_path / "s")], capsys)
        assert code == 0
        data = json.loads(out)
        validate("export", data)
        assert len(data["files"]) == 1
        text = (tmp_path / "s" / data["files"][0]["file"]).read_text()
        body = [ln for ln in text.splitlines() if not ln.startswith(('"', "*"))]
        assert body[0].split()[0] == str(data["files"][0]["constraints"])


def test_schemas_are_valid_documents():
    import jsonschema

    for s in SCHEMAS.values():
        jsonschema.Draft202012Validator.check_schema(s)
