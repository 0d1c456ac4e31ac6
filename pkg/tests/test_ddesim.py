import math

import numpy as np
import pytest

from delaymargin.bldc import BL3056, LoopParams, MotorParams, ce_loop
from delaymargin.ddesim import (
    TRACE_HEADER,
    BldcLoop,
    BracketInvalid,
    HistoryBuffer,
    LinearDDE,
    SimConfig,
    SimulationDiverged,
    Trace,
    default_settings,
    delay_system_to_dde,
    envelope_rate,
    export_trace,
    integrate,
    is_unstable,
    qp_to_dde,
    read_trace,
    simulate,
    stability_oracle,
)
from delaymargin.margin import tau_max
from delaymargin.rtds import DelaySystem, QuasiPolynomial, characteristic_qp
from delaymargin.tuning_rules import row

LOOP = LoopParams(Vdc=24.0, kf=1.0, tau_f=3.48e-3, tau_s=1e-3)
EXAMPLE = DelaySystem([[-2.0, 0.0], [0.0, -0.9]], [[-1.0, 0.0], [-1.0, -1.0]])
SCALAR = QuasiPolynomial([[0.0, 1.0], [1.0]])
W6000 = 6000 * 2 * math.pi / 60


def steps_oracle(t):
    """x'(t) = -x(t-1), x = 1 on [-1, 0]; method of steps on [0, 2]."""
    return np.where(t <= 1, 1 - t, 1 - t + (t - 1) ** 2 / 2)


def test_history_hermite_exact_for_cubics():
    dt = 0.1
    buf = HistoryBuffer(np.array([0.0]), dt, span=1.0)
    f = lambda t: t**3 - 2 * t
    df = lambda t: 3 * t**2 - 2
    for g in range(12):
        t = g * dt
        buf.push([f(t)], [df(t)])
    for t in (0.33, 0.71, 0.95, 1.1):
        assert buf.lookup(t)[0] == pytest.approx(f(t), abs=1e-12)


def test_history_prehistory_and_bounds():
    buf = HistoryBuffer(np.array([2.0, -1.0]), 0.1, span=0.3)
    np.testing.assert_array_equal(buf.lookup(-0.5), [2.0, -1.0])
    for g in range(20):
        buf.push([g, g], [1.0, 1.0])
    with pytest.raises(ValueError, match="left the ring"):
        buf.lookup(0.5)
    with pytest.raises(ValueError, match="beyond"):
        buf.lookup(5.0)
    assert buf.lookup(1.75)[0] == pytest.approx(17.5)


def test_integrate_delay_free_exponential():
    sys = LinearDDE(np.array([[-1.0]]), np.zeros((0, 1, 1)), np.zeros(0), np.zeros(1), np.zeros(1))
    t, X, bad = integrate(sys, [1.0], 1e-3, 2.0)
    assert bad is None
    np.testing.assert_allclose(X[:, 0], np.exp(-t), rtol=1e-10)


def test_integrate_method_of_steps():
    dde = qp_to_dde(SCALAR, 1.0)
    t, X, _ = integrate(dde, [1.0], 1e-3, 2.0)
    np.testing.assert_allclose(X[:, 0], steps_oracle(t), atol=1e-9)


def test_integrate_rejects_coarse_step():
    with pytest.raises(ValueError, match="two steps"):
        integrate(qp_to_dde(SCALAR, 0.01), [1.0], 0.01, 1.0)


def test_companion_form_characteristic():
    qp = characteristic_qp(EXAMPLE)
    dde = qp_to_dde(qp, 2.0)
    s, tau = 0.2 + 0.7j, 2.0
    n = dde.n
    M = s * np.eye(n) - dde.A0 - sum(dde.Ad[k] * np.exp(-s * d) for k, d in enumerate(dde.delays))
    assert np.linalg.det(M) == pytest.approx(qp(s, tau) / qp.terms[0].lead, rel=1e-10)


def test_delay_system_mapping():
    dde = delay_system_to_dde(EXAMPLE, 3.0)
    np.testing.assert_array_equal(dde.Ad[0], EXAMPLE.A1)
    assert dde.delays.tolist() == [3.0]


def test_zero_input_zero_state_gives_zero_trace():
    cfg = SimConfig(dt=1e-5, t_end=0.05, target=0.0)
    tr = simulate(BL3056, row("CHR-load").pi(), LOOP, 3.667e-3, cfg)
    assert not np.any(tr.speed) and not np.any(tr.current) and not np.any(tr.control)


def test_trace_shape_and_grid():
    cfg = SimConfig(dt=1e-5, t_end=0.01, target=10.0)
    tr = simulate(BL3056, row("CHR-load").pi(), LOOP, 3.667e-3, cfg)
    assert len(tr.time) == len(tr.speed) == len(tr.current) == len(tr.control) == 1001
    np.testing.assert_allclose(np.diff(tr.time), 1e-5, rtol=1e-9)


def test_delay_free_ti_response_is_monotone():
    cfg = SimConfig(dt=1e-5, t_end=5.0, target=100.0)
    tr = simulate(BL3056, row("TI").pi(), LOOP, 0.0, cfg)
    assert np.all(np.diff(tr.speed) >= -1e-9)
    assert tr.speed.max() <= 100.0 * (1 + 1e-9)


def test_starts_in_equilibrium():
    cfg = SimConfig(dt=1e-5, t_end=0.05, target=W6000, initial_speed=W6000)
    tr = simulate(BL3056, row("CHR-load").pi(), LOOP, 3.667e-3, cfg)
    np.testing.assert_allclose(tr.speed, W6000, rtol=1e-12)


def test_load_step_recovers():
    cfg = SimConfig(dt=1e-5, t_end=0.5, input="load_step", target=5e-3, t0=0.05, initial_speed=W6000)
    tr = simulate(BL3056, row("CHR-load").pi(), LOOP, 3.667e-3, cfg)
    dip = tr.speed.min()
    assert dip < W6000 * 0.999
    assert tr.speed[-1] == pytest.approx(W6000, rel=1e-3)
    assert tr.current[-1] == pytest.approx(5e-3 / BL3056.kt, rel=1e-2)


def test_example_system_brackets_margin():
    s = default_settings(EXAMPLE, 0.9 * 6.1726, 1.1 * 6.1726)
    assert not is_unstable(EXAMPLE, 0.9 * 6.1726, s)
    assert is_unstable(EXAMPLE, 1.1 * 6.1726, s)


def test_oracle_scalar_equation():
    assert stability_oracle(SCALAR, 0.8, 2.4) == pytest.approx(math.pi / 2, rel=0.05)


def test_oracle_bracket_invalid():
    with pytest.raises(BracketInvalid, match="bracket invalid"):
        stability_oracle(SCALAR, 0.2, 0.4)


def test_oracle_rejects_unsorted_bracket():
    with pytest.raises(ValueError):
        stability_oracle(SCALAR, 2.0, 1.0)


@pytest.mark.parametrize("name", ["example", "scalar", "CHR-load", "Z-N"])
@pytest.mark.parametrize("factor", [0.8, 1.2])
def test_oracle_verdict_agrees_with_engine(name, factor):
    if name == "example":
        system, tm = EXAMPLE, tau_max(characteristic_qp(EXAMPLE)).tau_max
    elif name == "scalar":
        system, tm = SCALAR, math.pi / 2
    else:
        pi = row(name).pi()
        system, tm = BldcLoop(BL3056, pi, LOOP), tau_max(ce_loop(BL3056, pi, LOOP)).tau_max
    settings = default_settings(system, 0.8 * tm, 1.2 * tm)
    assert is_unstable(system, factor * tm, settings) == (factor > 1)


def test_envelope_rate_of_damped_sine():
    t = np.linspace(0, 50, 20001)
    y = np.exp(-0.1 * t) * np.sin(3 * t)
    assert envelope_rate(t, y) == pytest.approx(-0.1, rel=1e-2)
    assert envelope_rate(t, np.exp(0.05 * t)) == pytest.approx(0.05, rel=1e-2)


def test_energy_non_increasing_without_drive():
    m = MotorParams(R=2.3, L=0.56e-3, J=16e-7, ke=0.0223, Bm=1e-6)
    cfg = SimConfig(dt=1e-5, t_end=0.1, initial_speed=300.0, closed_loop=False)
    tr = simulate(m, row("CHR-load").pi(), LOOP, 0.0, cfg)
    energy = 0.5 * m.L * tr.current**2 + 0.5 * m.J * tr.speed**2
    assert np.all(np.diff(energy) <= 1e-12 * energy[0])
    assert energy[-1] < energy[0]


def test_divergence_reported():
    cfg = SimConfig(dt=1e-5, t_end=15.0, target=100.0)
    with pytest.raises(SimulationDiverged, match="simulation diverged at t"):
        simulate(BL3056, row("Z-N").pi(), LOOP, 30e-3, cfg)


def test_config_resolution_guard():
    cfg = SimConfig(dt=1e-4, t_end=1.0)
    with pytest.raises(ValueError, match="too coarse"):
        simulate(BL3056, row("TI").pi(), LOOP, 3.667e-3, cfg)


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(dt=0.0, t_end=1.0)
    with pytest.raises(ValueError):
        SimConfig(dt=1e-3, t_end=1e-2)
    with pytest.raises(ValueError):
        SimConfig(dt=1e-3, t_end=1.0, input="ramp")


def test_export_empty_trace(tmp_path):
    path = tmp_path / "empty.csv"
    export_trace(Trace.empty(), path)
    assert path.read_text() == ",".join(TRACE_HEADER) + "\n"


def test_export_three_samples(tmp_path):
    path = tmp_path / "three.csv"
    tr = Trace(np.array([0.0, 0.1, 0.2]), np.ones(3), np.zeros(3), np.full(3, 2.0))
    export_trace(tr, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 4
    assert lines[0] == "time_s,speed_rad_s,current_a,control_v"


def test_export_round_trip(tmp_path):
    cfg = SimConfig(dt=1e-5, t_end=0.02, target=W6000)
    tr = simulate(BL3056, row("CHR-load").pi(), LOOP, 3.667e-3, cfg)
    path = tmp_path / "trace.csv"
    export_trace(tr, path)
    back = read_trace(path)
    for a, b in ((tr.time, back.time), (tr.speed, back.speed), (tr.current, back.current), (tr.control, back.control)):
        np.testing.assert_allclose(b, a, rtol=1e-9, atol=1e-9)
