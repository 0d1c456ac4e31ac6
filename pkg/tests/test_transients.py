import numpy as np
import pytest
from scenarios import SCENARIOS, calibrated_loop, delay_at, speed, is_oscillatory, step_metrics

from delaymargin.bldc import BL3056
from delaymargin.ddesim import simulate
from delaymargin.tuning_rules import row


@pytest.fixture(scope="module")
def traces():
    lp = calibrated_loop()
    cache = {}

    def get(name):
        if name not in cache:
            rule, rpm, cfg = SCENARIOS[name]
            cache[name] = simulate(BL3056, row(rule).pi(), lp, delay_at(rpm), cfg)
        return cache[name]
    return get


def test_ti_step_not_oscillatory(traces):
    tr = traces("ti_step_1000rpm")
    assert not is_oscillatory(tr.speed, speed(1000))
    assert tr.speed[-1] == pytest.approx(speed(1000), rel=1e-3)


def test_chr_load_rise_time(traces):
    tr = traces("chr_load_step_6000rpm")
    _, rise = step_metrics(tr.time, tr.speed, 0.0, speed(6000))
    assert rise == pytest.approx(10e-3, rel=0.5)


@pytest.mark.xfail(strict=True, reason="the linear loop model overshoots about 6 %, well short of 30 %")
def test_chr_load_overshoot(traces):
    tr = traces("chr_load_step_6000rpm")
    overshoot, _ = step_metrics(tr.time, tr.speed, 0.0, speed(6000))
    assert abs(overshoot - 0.30) <= 0.10


def test_ise_load_no_overshoot(traces):
    tr = traces("ise_load_step_6000rpm")
    overshoot, _ = step_metrics(tr.time, tr.speed, 0.0, speed(6000))
    assert overshoot <= 1e-6


def test_zn_overshoots_more_than_chr(traces):
    zn, chr_ = traces("zn_step_6000rpm"), traces("chr_load_step_6000rpm")
    zn_os, _ = step_metrics(zn.time, zn.speed, 0.0, speed(6000))
    chr_os, _ = step_metrics(chr_.time, chr_.speed, 0.0, speed(6000))
    assert zn_os > chr_os


def test_torque_step_is_rejected(traces):
    tr = traces("chr_load_torque_6000rpm")
    before = tr.speed[tr.time < 0.05]
    np.testing.assert_allclose(before, speed(6000), rtol=1e-12)
    assert tr.speed.min() < speed(6000)
    assert tr.speed[-1] == pytest.approx(speed(6000), rel=1e-3)
