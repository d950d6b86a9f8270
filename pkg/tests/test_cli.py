from __future__ import annotations

import json

import numpy as np
import pytest

import flowsteer as fs
from flowsteer import jsonio
from flowsteer.cli import main

CELLULAR_CHECK = """\
field:
  kind: builtin
  name: cellular
seed: 0
field_check:
  box: {{lo: [-3.0, -3.0], hi: [3.0, 3.0]}}
  divergence_points: 100
  vmd_threshold: 0.02
"""

CONSTANT_CHECK = """\
field:
  kind: builtin
  name: constant
  c: [1.0, 0.0]
seed: 0
field_check:
  box: {{lo: [-1.0, -1.0], hi: [1.0, 1.0]}}
"""


def run(args):
    return main(args)


class TestFieldCheck:
    def test_cellular_passes(self, tmp_path, capsys):
        cfg = tmp_path / "c.yaml"
        cfg.write_text(CELLULAR_CHECK.format())
        code = run(["field-check", "--config", str(cfg), "--out", str(tmp_path),
                    "--json"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)["field_check"]
        assert report["drift"]["verdict"] == "vanishing"
        assert (tmp_path / "field_check.json").exists()

    def test_constant_fails_vmd(self, tmp_path, capsys):
        cfg = tmp_path / "c.yaml"
        cfg.write_text(CONSTANT_CHECK.format())
        code = run(["field-check", "--config", str(cfg)])
        assert code == 1
        err = json.loads(capsys.readouterr().err)
        assert err["detail"]["drift"]["verdict"] == "nonvanishing"

    def test_malformed_config_exits_2(self, tmp_path, capsys):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("field:\n  kind: builtin\n  name: cellular\nbogus_key: 1\n")
        assert run(["field-check", "--config", str(cfg)]) == 2
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "ConfigError"

    def test_missing_file_exits_2(self, tmp_path):
        assert run(["field-check", "--config", str(tmp_path / "nope.yaml")]) == 2

    def test_unknown_nested_key_rejected(self, tmp_path):
        cfg = tmp_path / "c.yaml"
        cfg.write_text(
            "field:\n  kind: builtin\n  name: cellular\n"
            "field_check:\n  surprising: 3\n")
        assert run(["field-check", "--config", str(cfg)]) == 2


class TestRecurrenceCommand:
    def test_rotation_period(self, tmp_path, capsys):
        cfg = tmp_path / "r.yaml"
        cfg.write_text(
            "field:\n  kind: builtin\n  name: rotation\n"
            "recurrence:\n  center: [1.0, 0.0]\n  delta: 0.1\n"
            "  return_radius: 1.0e-6\n  T_min: 1.0\n  T_max: 10.0\n")
        code = run(["recurrence", "--config", str(cfg), "--json"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)["recurrence"]
        assert payload["T"] == pytest.approx(2 * np.pi, abs=1e-6)

    def test_no_return_exit_1(self, tmp_path, capsys):
        cfg = tmp_path / "r.yaml"
        cfg.write_text(
            "field:\n  kind: builtin\n  name: constant\n  c: [1.0, 0.0]\n"
            "recurrence:\n  center: [0.0, 0.0]\n  delta: 0.1\n"
            "  return_radius: 1.0e-3\n  T_min: 1.0\n  T_max: 20.0\n")
        assert run(["recurrence", "--config", str(cfg)]) == 1
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "NoReturnFound"


class TestCorrectCommand:
    def test_rotation_correct_and_certify(self, tmp_path, capsys):
        cfg = tmp_path / "c.yaml"
        cfg.write_text(
            "field:\n  kind: builtin\n  name: rotation\n"
            "correct:\n  epsilon: 0.1\n"
            "  box: {lo: [-2.0, -2.0], hi: [2.0, 2.0]}\n"
            "  resolution: 64\n  certify_points: 6\n  certify_T_max: 10.0\n")
        code = run(["correct", "--config", str(cfg), "--out", str(tmp_path)])
        assert code == 0
        payload = jsonio.read_json(tmp_path / "correction.json")
        assert payload["correction"]["sup_delta"] < 1e-12
        assert payload["certify"]["passed"]


@pytest.fixture(scope="module")
def plan_config(tmp_path_factory):
    V = fs.builtin_field("cellular")
    rho, _ = fs.choose_rho_tau(V, 0.2)
    d = tmp_path_factory.mktemp("plancfg")
    cfg = d / "plan.yaml"
    cfg.write_text(
        "field:\n  kind: builtin\n  name: cellular\n"
        "seed: 3\n"
        "plan:\n"
        f"  p: [0.2, 0.3]\n"
        f"  q: [{0.2 + 0.85 * rho / 4.0!r}, 0.3]\n"
        "  epsilon: 0.2\n"
        "  n_candidates: 4\n"
        "  correction_resolution: 512\n")
    return cfg


class TestPlanCommand:
    def test_plan_writes_artifacts_and_verifies(self, plan_config, tmp_path):
        out = tmp_path / "out"
        code = run(["plan", "--config", str(plan_config), "--out", str(out)])
        assert code == 0
        for name in ("control.json", "trajectory.csv", "certificate.json",
                     "plotdata.csv", "verify.json"):
            assert (out / name).exists()
        assert jsonio.read_json(out / "verify.json")["passed"]

    def test_repeat_runs_byte_identical(self, plan_config, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert run(["plan", "--config", str(plan_config), "--out", str(out1)]) == 0
        assert run(["plan", "--config", str(plan_config), "--out", str(out2)]) == 0
        for name in ("control.json", "certificate.json", "trajectory.csv",
                     "plotdata.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name

    def test_verify_command_roundtrip(self, plan_config, tmp_path):
        out = tmp_path / "out"
        assert run(["plan", "--config", str(plan_config), "--out", str(out)]) == 0
        vcfg = tmp_path / "v.yaml"
        vcfg.write_text(
            "field:\n  kind: builtin\n  name: cellular\n"
            "verify:\n"
            f"  control: {out / 'control.json'}\n"
            f"  certificate: {out / 'certificate.json'}\n")
        assert run(["verify", "--config", str(vcfg)]) == 0

    def test_verify_command_flags_tamper(self, plan_config, tmp_path, capsys):
        out = tmp_path / "out"
        assert run(["plan", "--config", str(plan_config), "--out", str(out)]) == 0
        control = jsonio.read_json(out / "control.json")
        for seg in control["segments"]:
            for part in seg["params"].get("parts", []):
                if part["kind"] == "steer":
                    a = np.asarray(part["params"]["alpha"])
                    scale = 1.0 + 2e-3 / (np.linalg.norm(a) * part["params"]["tau"])
                    part["params"]["alpha"] = [float(v) for v in scale * a]
        jsonio.write_json(out / "control.json", control)
        vcfg = tmp_path / "v.yaml"
        vcfg.write_text(
            "field:\n  kind: builtin\n  name: cellular\n"
            "verify:\n"
            f"  control: {out / 'control.json'}\n"
            f"  certificate: {out / 'certificate.json'}\n")
        assert run(["verify", "--config", str(vcfg)]) == 1
        err = json.loads(capsys.readouterr().err)
        assert "terminal_error" in err["error"]

    def test_p_equals_q_empty_control(self, tmp_path):
        cfg = tmp_path / "p.yaml"
        cfg.write_text(
            "field:\n  kind: builtin\n  name: cellular\n"
            "plan:\n  p: [1.0, 1.0]\n  q: [1.0, 1.0]\n  epsilon: 0.2\n")
        out = tmp_path / "out"
        assert run(["plan", "--config", str(cfg), "--out", str(out)]) == 0
        control = jsonio.read_json(out / "control.json")
        assert control["segments"] == []

    def test_vmd_violation_exit_1(self, tmp_path, capsys):
        cfg = tmp_path / "p.yaml"
        cfg.write_text(
            "field:\n  kind: builtin\n  name: constant\n  c: [1.0, 0.0]\n"
            "plan:\n  p: [0.0, 0.0]\n  q: [1.0, 1.0]\n  epsilon: 0.2\n")
        assert run(["plan", "--config", str(cfg)]) == 1
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "VMDViolation"


class TestTorusCommand:
    def test_connect_writes_certificate(self, tmp_path):
        cfg = tmp_path / "t.yaml"
        cfg.write_text(
            "field:\n  kind: builtin\n  name: winding\n"
            "torus:\n  p: [0.0, 0.0]\n  q: [3.141592653589793, 3.141592653589793]\n"
            "  epsilon: 0.4\n  T_max: 6000.0\n  n_starts: 6\n  need_c1: false\n")
        out = tmp_path / "out"
        assert run(["torus-connect", "--config", str(cfg), "--out", str(out)]) == 0
        cert = jsonio.read_json(out / "certificate.json")
        assert cert["hit_error"] < 1e-6

    def test_no_transit_exit_1(self, tmp_path, capsys):
        cfg = tmp_path / "t.yaml"
        cfg.write_text(
            "field:\n  kind: builtin\n  name: winding\n  velocity: [1.0, 1.0]\n"
            "torus:\n  p: [0.0, 0.0]\n  q: [3.141592653589793, 0.0]\n"
            "  epsilon: 0.4\n  T_max: 100.0\n  n_starts: 2\n  need_c1: false\n")
        assert run(["torus-connect", "--config", str(cfg)]) == 1
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "NoTransitFound"


class TestSeedOverride:
    def test_flag_overrides_config_seed(self, tmp_path, capsys):
        cfg = tmp_path / "r.yaml"
        cfg.write_text(
            "field:\n  kind: builtin\n  name: rotation\n"
            "seed: 1\n"
            "recurrence:\n  center: [1.0, 0.0]\n  delta: 0.1\n"
            "  return_radius: 1.0e-6\n  T_min: 1.0\n  T_max: 10.0\n")
        assert run(["recurrence", "--config", str(cfg), "--seed", "9",
                    "--json"]) == 0
        a = json.loads(capsys.readouterr().out)["recurrence"]
        assert run(["recurrence", "--config", str(cfg), "--seed", "9",
                    "--json"]) == 0
        b = json.loads(capsys.readouterr().out)["recurrence"]
        assert a == b


class TestTorusFieldDeclaration:
    def test_explicit_domain_and_period(self, tmp_path):
        cfg = tmp_path / "t.yaml"
        cfg.write_text(
            "field:\n  kind: builtin\n  name: winding\n"
            "  domain: torus\n  period: 6.283185307179586\n"
            "torus:\n  p: [0.0, 0.0]\n  q: [3.141592653589793, 3.141592653589793]\n"
            "  epsilon: 0.4\n  T_max: 6000.0\n  n_starts: 6\n  need_c1: false\n")
        out = tmp_path / "out"
        assert run(["torus-connect", "--config", str(cfg), "--out", str(out)]) == 0
        assert (out / "bump_constants.json").exists()

    def test_euclidean_field_rejected_for_torus(self, tmp_path, capsys):
        cfg = tmp_path / "t.yaml"
        cfg.write_text(
            "field:\n  kind: builtin\n  name: cellular\n  domain: euclidean\n"
            "torus:\n  p: [0.0, 0.0]\n  q: [1.0, 1.0]\n  epsilon: 0.4\n")
        assert run(["torus-connect", "--config", str(cfg)]) == 2
