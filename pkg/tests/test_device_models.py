import math

import numpy as np
import pytest

from ProtectionHub.models.device_models import (
    GROUND, ModelError, NodePhase, build_device, companion_coefficients, evaluate_device, make_dc_source,
    make_fault_branch, make_ideal_source, make_rl_branch, make_rl_load, parse_node_phase,
)


def test_parse_node_phase():
    assert parse_node_phase("B3.A") == NodePhase("B3", "A")
    assert str(NodePhase("B1", "C")) == "B1.C"
    assert parse_node_phase("GND.N") == GROUND
    for bad in ("B3", "B3.X", ".A"):
        with pytest.raises(ModelError):
            parse_node_phase(bad)


def test_rl_branch_layout_and_residuals():
    branch = make_rl_branch(0.3, 0.002, "B1.A", "B2.A", name="line")
    assert branch.state_labels == ("v0", "v1", "i")
    assert (branch.terminal_count, branch.internal_count) == (2, 1)
    assert branch.is_linear

    x = np.array([1.0, 0.4, 2.0])
    xdot = np.array([0.0, 0.0, 50.0])
    through, linear, quadratic = evaluate_device(branch, x, xdot=xdot)
    np.testing.assert_allclose(through, [2.0, -2.0])
    np.testing.assert_allclose(linear, [1.0 - 0.4 - 0.3 * 2.0 - 0.002 * 50.0])
    assert quadratic.size == 0


@pytest.mark.parametrize("R, L, a, b", [
    (-1.0, 0.1, "B1.A", "B2.A"),
    (0.0, 0.0, "B1.A", "B2.A"),
    (1.0, 0.1, "B1.A", "B1.A"),
    (math.inf, 0.1, "B1.A", "B2.A"),
])
def test_rl_branch_rejects_bad_parameters(R, L, a, b):
    with pytest.raises(ModelError):
        make_rl_branch(R, L, a, b)


def test_rl_load_goes_to_ground():
    load = make_rl_load(45.0, 0.05, "B3.B")
    assert load.terminals == (NodePhase("B3", "B"), GROUND)
    assert load.kind == "rl_load"


def test_ideal_source_satisfied_by_its_waveform():
    source = make_ideal_source(1.2, 0.4, "B1.A", frequency=60.0)
    for t in (0.0, 0.0013, 0.021):
        v = 1.2 * math.cos(2 * math.pi * 60.0 * t + 0.4)
        _, linear, _ = evaluate_device(source, [v, 0.7], u=source.controls(t))
        assert abs(linear[0]) < 1e-12


def test_dc_source_and_fault_branch():
    source = make_dc_source(5.0, "N1.A")
    _, linear, _ = evaluate_device(source, [5.0, 0.0], u=source.controls(0.3))
    assert linear[0] == pytest.approx(0.0)

    fault = make_fault_branch("BM.A", 0.01)
    assert fault.kind == "fault"
    assert fault.parameters == {"R": 0.01, "L": 0.0}
    with pytest.raises(ModelError):
        make_fault_branch("BM.A", 0.0)
    with pytest.raises(ModelError):
        make_ideal_source(1.0, 0.0, "GND.N")


def test_companion_coefficients():
    G, K = companion_coefficients(1.0, 1e-3, 1e-4)
    assert G == pytest.approx(1.0 / 21.0)
    assert K == pytest.approx(19.0 / 21.0)
    with pytest.raises(ModelError):
        companion_coefficients(1.0, 1e-3, 0.0)


def test_quadratic_device_symmetrizes_f():
    device = build_device(
        "power", "meter", ("B1.A",), ("p",), row_sizes=(1, 0, 1),
        Y_eqx1=[[0.0, 0.0]], Y_eqx3=[[0.0, -1.0]], F_eqx3=[[[0.0, 2.0], [0.0, 0.0]]],
    )
    np.testing.assert_allclose(device.F_eqx3[0], [[0.0, 1.0], [1.0, 0.0]])
    assert not device.is_linear
    _, _, quadratic = evaluate_device(device, [3.0, 6.0])
    assert quadratic[0] == pytest.approx(3.0 * 6.0 * 2.0 - 6.0)


def test_validate_rejects_wrong_row_count():
    with pytest.raises(ModelError):
        build_device("bad", "custom", ("B1.A",), ("a", "b"), row_sizes=(1, 1, 0))
