from __future__ import annotations

import json

import pytest
from helpers import fixture_path

from bermudan_dynkin.cli import main
from bermudan_dynkin.errors import BadDimensions, InstanceParseError, InstanceValidationError
from bermudan_dynkin.instance import (
    dumps,
    gen_instance,
    gen_instance_dict,
    instance_to_dict,
    load_instance,
    parse_instance,
)
from bermudan_dynkin.strategy import count_theta

D2 = fixture_path("d2.game")


def _d2_data():
    with open(D2) as fh:
        return json.load(fh)


def _write(tmp_path, name, data):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def test_load_d2_fixture():
    g = load_instance(D2)
    assert g.tree.n_nodes == 2
    assert count_theta(g.schedule) == 2


def test_a2_violation_names_the_leaf(tmp_path):
    data = _d2_data()
    data["payoffs"]["X1"]["1"] = -1.0
    with pytest.raises(InstanceValidationError) as err:
        load_instance(_write(tmp_path, "bad.game", data))
    assert err.value.kind == "A2" and err.value.nodes == [1]


def test_a1_violation(tmp_path):
    data = _d2_data()
    data["payoffs"]["X2"]["0"] = 3.0
    with pytest.raises(InstanceValidationError) as err:
        load_instance(_write(tmp_path, "bad.game", data))
    assert err.value.kind == "A1" and err.value.nodes == [0]


@pytest.mark.parametrize(
    "edit,kind",
    [
        (lambda d: d["tree"]["nodes"][0]["children"][0].update(prob=0.5), "tree"),
        (lambda d: d.update(schedule={"theta": [[1], [1]]}), "schedule"),
        (lambda d: d["operators"].update(agent1={"kind": "entropic", "gamma": 0}), "operator"),
        (lambda d: d["operators"].update(agent2={"kind": "quantile"}), "operator"),
        (lambda d: d["payoffs"]["Y1"].pop("1"), "payoff"),
    ],
)
def test_validation_kinds(edit, kind):
    data = _d2_data()
    edit(data)
    with pytest.raises(InstanceValidationError) as err:
        parse_instance(data)
    assert err.value.kind == kind


def test_parse_errors(tmp_path):
    bad = tmp_path / "x.game"
    bad.write_text("{not json")
    with pytest.raises(InstanceParseError):
        load_instance(str(bad))
    data = _d2_data()
    del data["payoffs"]
    with pytest.raises(InstanceParseError):
        parse_instance(data)


def test_gen_example():
    g = gen_instance(1, 2, 2, ["linear"])
    assert g.tree.n_nodes == 7
    assert g.rho1.kind == g.rho2.kind == "linear"


def test_gen_grid_and_repairs():
    data = gen_instance_dict(4, 3, 3, ["multiprior", "entropic:0.5"])
    for values in data["payoffs"].values():
        for v in values.values():
            assert -8 <= v <= 8 and (8 * v).is_integer()
    g = parse_instance(data)
    assert g.rho1.kind == "multiprior" and len(g.rho1.priors[0]) == 2
    assert g.rho2.gamma == 0.5


def test_gen_rejects_bad_dimensions():
    with pytest.raises(BadDimensions):
        gen_instance(1, 9, 2)
    with pytest.raises(BadDimensions):
        gen_instance(1, 2, 5)


def test_gen_is_byte_deterministic(tmp_path):
    a, b = tmp_path / "a.game", tmp_path / "b.game"
    gen_instance(1, 2, 2, ["entropic:1", "multiprior"], path=a)
    gen_instance(1, 2, 2, ["entropic:1", "multiprior"], path=b)
    assert a.read_bytes() == b.read_bytes()
    assert dumps(instance_to_dict(load_instance(a))) == a.read_text()


def test_cli_solve_and_verify(tmp_path):
    report = tmp_path / "r.report"
    assert main(["solve", "--instance", D2, "--out", str(report)]) == 0
    data = json.loads(report.read_text())
    eq = data["equilibrium"]
    assert eq["tau1_star"] == [0] and eq["tau2_star"] == [1]
    assert (eq["J1"], eq["J2"]) == (1.0, 2.0)
    assert [r["tau"] for r in data["trace"]] == [[1], [1], [0], [1], [0], [1]]
    assert main(["verify", "--instance", D2, "--equilibrium", str(report)]) == 0
    # the embedded instance is enough
    out = tmp_path / "v.json"
    assert main(["verify", "--equilibrium", str(report), "--out", str(out)]) == 0
    assert json.loads(out.read_text())["passed"] is True


def test_cli_verify_flags_a_bad_equilibrium(tmp_path):
    report = tmp_path / "r.report"
    main(["solve", "--instance", D2, "--out", str(report)])
    data = json.loads(report.read_text())
    data["equilibrium"]["tau2_star"] = [0]
    report.write_text(json.dumps(data))
    assert main(["verify", "--equilibrium", str(report)]) == 2


def test_cli_axioms(tmp_path):
    out = tmp_path / "ax.json"
    args = ["axioms", "--operator", "entropic", "--gamma", "2", "--trials", "500", "--seed", "7"]
    assert main(args + ["--instance", D2, "--out", str(out)]) == 0
    assert json.loads(out.read_text())["reports"][0]["passed"] is True


def test_cli_gen_and_inspect(tmp_path, capsys):
    path = tmp_path / "g.game"
    assert main(["gen", "--seed", "1", "--depth", "2", "--branching", "2", "--out", str(path)]) == 0
    assert main(["inspect", "--instance", str(path)]) == 0
    text = capsys.readouterr().out
    assert "nodes: 7" in text and "strategies per agent: 5" in text


def test_cli_errors(tmp_path, capsys):
    assert main(["gen", "--seed", "1", "--depth", "9", "--branching", "2"]) == 1
    assert main(["solve", "--instance", str(tmp_path / "missing.game")]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["verify"]) == 1
    capsys.readouterr()
