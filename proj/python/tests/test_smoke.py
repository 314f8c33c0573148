import os
from pathlib import Path

import pytest

import disasm

DATA = Path(os.environ.get("DISASM_DATA_DIR", Path(__file__).resolve().parents[2] / "data"))
MOTOR = str(DATA / "products" / "electric_motor.json")
TWO_LID = str(DATA / "products" / "two_lid_motor.json")
GRINDER = str(DATA / "products" / "angle_grinder.json")
CELL_A = str(DATA / "cells" / "cell_a.json")
CELL_B = str(DATA / "cells" / "cell_b.json")


def test_graph_and_oracle():
    g = disasm.build_graph(MOTOR, CELL_B)
    assert g.node_count == 27
    assert "mill(lid)" in g.root_actions()
    vi = disasm.value_iteration(g)
    assert vi["root_action"] == "screwdriver(screw4)"
    assert vi["v_root"] < 0
    assert disasm.success_probability(g, vi["policy"]) == pytest.approx(1.0)


def test_q_learning_matches_oracle():
    g = disasm.build_graph(TWO_LID, CELL_B)
    vi = disasm.value_iteration(g)
    ql = disasm.q_learn(g, seed=3)
    assert ql["root_action"] == vi["root_action"]
    assert ql["policy"]["hyperparameters"]["gamma"] == 0.99
    assert disasm.q_learn(g, seed=3)["policy"] == ql["policy"]


def test_grinder_success_probability():
    g = disasm.build_graph(GRINDER, CELL_A, priors={"stuck_screw1": 0.3})
    vi = disasm.value_iteration(g)
    assert disasm.success_probability(g, vi["policy"]) == pytest.approx(0.7)


def test_errors():
    with pytest.raises(disasm.ResourceCapError):
        disasm.build_graph(TWO_LID, CELL_B, max_nodes=5)
    with pytest.raises(disasm.InputError):
        disasm.build_graph(str(DATA / "nope.json"), CELL_B)
    other = disasm.build_graph(MOTOR, CELL_B, priors={"stuck_screw1": 0.5})
    policy = disasm.value_iteration(disasm.build_graph(MOTOR, CELL_B))["policy"]
    with pytest.raises(disasm.IncompatibleError):
        disasm.success_probability(other, policy)
    assert issubclass(disasm.InputError, disasm.DisasmError)


def test_evaluate_and_rollout():
    scen = str(DATA / "scenarios" / "two_lid_motor.json")
    one = disasm.evaluate(scen, episodes=200, workers=1, controllers=["oracle", "deterministic"])
    three = disasm.evaluate(scen, episodes=200, workers=3, controllers=["oracle", "deterministic"])
    assert one == three
    first = {(e["scenario"], e["controller"]): e for e in one["entries"]}
    assert first[("I", "oracle")]["mean_s"] == first[("I", "deterministic")]["mean_s"]

    trace = disasm.rollout(str(DATA / "scenarios" / "electric_motor_golden.json"), "screw4_stuck")
    actions = [s["action"] for s in trace["steps"]]
    assert actions == ["screwdriver(screw4)", "mill(lid)", "gripper(rotor)"]
    assert trace["steps"][0]["observations"] == ["stuck(screw4)"]


def test_relations_and_filter():
    fx = DATA / "fixtures" / "block_on_slab"
    grid = disasm.extract_relation(str(fx / "block.stl"), str(fx / "slab.stl"))
    assert len(grid) == 512
    assert sum(grid) == 256
    p, b = disasm.feasibility([grid])
    assert p == 1.0 and b == 0

    post = disasm.bayes_update(MOTOR, CELL_B, [0.9, 0.0, 0.0, 0.2], "screw1", "stuck")
    assert post[0] == 1.0
    assert post[3] == 0.2
