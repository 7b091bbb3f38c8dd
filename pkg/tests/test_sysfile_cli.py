"""System-definition files and the command-line interface."""

import json
import os

import pytest

from triflat.cli import main
from triflat.sysfile import SysFileError, load_sysfile, parse_sysfile

CORPUS = os.path.join(os.path.dirname(__file__), "..", "src", "triflat", "corpus")


def corpus(name):
    return os.path.join(CORPUS, name)


MINIMAL = """
name = demo
[states]
x1 x2
[inputs]
u1 u2
[drift]
x1 = x2
[b1]
x2 = 1
[b2]
x1 = eps
[params]
eps = 0.5
[domain]
x1 = 0.1 : 0.4
[hints]
x1 + x2
phi1 = x1
"""


def test_parse_minimal():
    d = parse_sysfile(MINIMAL)
    assert d.name == "demo"
    assert d.states == ["x1", "x2"]
    assert d.inputs == ["u1", "u2"]
    assert d.params == {"eps": 0.5}
    assert d.domains == {"x1": (0.1, 0.4)}
    assert len(d.hints) == 1 and d.phi1 is not None
    sysm = d.system()
    assert sysm.frame == ("x1", "x2")
    sp = d.sampler()
    assert sp.domains["x1"] == (0.1, 0.4)
    lo, hi = sp.domains["eps"]
    assert lo < 0.5 < hi and hi - lo < 1e-6


def test_parse_general_system():
    d = load_sysfile(corpus("sin.sys"))
    assert d.general
    sysm = d.system()
    assert sysm.frame == ("x1", "x2", "x3", "u1", "u2")
    assert sysm.input_syms == ("u1_1", "u2_1")


def test_reject_one_input():
    with pytest.raises(SysFileError):
        parse_sysfile("[states]\nx\n[inputs]\nu1\n")


def test_reject_unknown_state_in_component():
    bad = "[states]\nx\n[inputs]\nu1 u2\n[drift]\ny = 1\n"
    with pytest.raises(SysFileError):
        parse_sysfile(bad)


def test_reject_undeclared_symbol():
    bad = "[states]\nx\n[inputs]\nu1 u2\n[drift]\nx = q\n"
    with pytest.raises(SysFileError):
        parse_sysfile(bad)


def test_reject_bad_domain():
    bad = "[states]\nx\n[inputs]\nu1 u2\n[domain]\nx = 2 : 1\n"
    with pytest.raises(SysFileError):
        parse_sysfile(bad)


def test_reject_general_with_fields():
    bad = "[states]\nx\n[inputs]\ngeneral = true\nu1 u2\n[b1]\nx = 1\n"
    with pytest.raises(SysFileError):
        parse_sysfile(bad)


# --- CLI ----------------------------------------------------------------------

def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


def test_cli_check_template(capsys):
    code, out = run_cli(capsys, "check", corpus("template.sys"), "--variant")
    assert code == 0
    assert out["verdict"] is True
    assert out["reports"][0]["case"] == "TwoChains"
    assert out["equal_length_variant"]["verdict"] is False
    assert out["sampler"]["seed"] == 42


def test_cli_check_failure_exit_code(capsys):
    code, out = run_cli(capsys, "check", corpus("chained4.sys"))
    assert code == 1
    assert out["verdict"] is False


def test_cli_check_linearizable_short_circuit(capsys, tmp_path):
    f = tmp_path / "di.sys"
    f.write_text(
        "[states]\nx1 x2\n[inputs]\nu1 u2\n[drift]\n[b1]\nx1 = 1\n[b2]\nx2 = 1\n"
    )
    code, out = run_cli(capsys, "check", str(f))
    assert code == 0
    assert out["verdict"] == "static-feedback-linearizable"


def test_cli_parse_error_exit_code(capsys, tmp_path):
    f = tmp_path / "bad.sys"
    f.write_text("[states]\nx\n[inputs]\nu1 u2\n[drift]\nx = sin(\n")
    code = main(["check", str(f)])
    captured = capsys.readouterr()
    assert code == 2


def test_cli_flat_output_template(capsys):
    code, out = run_cli(capsys, "flat-output", corpus("template.sys"))
    assert code == 0
    assert out["phi1"] == "w1_1" and out["phi2"] == "w2_1"


def test_cli_flat_output_needs_phi1(capsys, tmp_path):
    # strip the phi1 hint from the bundled sqrt file
    text = open(corpus("sqrt.sys")).read().split("[hints]")[0]
    f = tmp_path / "sqrt_nohint.sys"
    f.write_text(text)
    code, out = run_cli(capsys, "flat-output", str(f))
    assert code == 3
    assert "admissible_phi1" in out


def test_cli_transform_verify_round_trip(capsys, tmp_path):
    save = tmp_path / "map.json"
    code, out = run_cli(
        capsys, "transform", corpus("template.sys"), "--save", str(save)
    )
    assert code == 0 and out["verdict"] is True
    code, out = run_cli(
        capsys, "verify", corpus("template.sys"), "--transform", str(save)
    )
    assert code == 0 and out["verified"] is True
    payload = json.loads(save.read_text())
    key = sorted(payload["state_map"])[0]
    payload["state_map"][key] = "-(" + payload["state_map"][key] + ")"
    save.write_text(json.dumps(payload))
    code, out = run_cli(
        capsys, "verify", corpus("template.sys"), "--transform", str(save)
    )
    assert code == 1 and out["verified"] is False


def test_cli_reports_deterministic(capsys):
    code1, out1 = run_cli(capsys, "check", corpus("template.sys"))
    code2, out2 = run_cli(capsys, "check", corpus("template.sys"))
    assert (code1, out1) == (code2, out2)


def test_cli_prolong_flag(capsys):
    code, out = run_cli(
        capsys, "verify", corpus("chained4.sys"), "--prolong", "u2=2"
    )
    assert code == 0
    assert out["linearizable"] is True
    assert out["prolonged"] == [{"input": "u2", "order": 2}]
