import numpy as np
import pytest

from rohcge.chain import StateSpaceTooLarge, recurrent_states, solve
from rohcge.channel import from_eps_lb
from rohcge.model_closed import p_oos_exact
from rohcge.model_full import build_model1, is_oos, oos_breakdown, p_oos_model1
from rohcge.sim import RohcConfig

CH = from_eps_lb(0.02, 5)


def test_zero_error_channel():
    assert p_oos_model1(RohcConfig(irt=100), from_eps_lb(0.0, 5)) == 0.0


def test_w29_within_factor_two_of_closed_form():
    p1 = p_oos_model1(RohcConfig(irt=300), CH)
    ref = p_oos_exact(CH, 29, 300)
    assert ref == pytest.approx(1.885e-3, rel=1e-3)
    assert 0.5 <= p1 / ref <= 2.0


def test_monotone_in_irt():
    vals = [p_oos_model1(RohcConfig(irt=irt), CH) for irt in (100, 200, 300, 400)]
    assert all(a < b for a, b in zip(vals, vals[1:]))


def test_crc_false_negative_is_secondary():
    a = p_oos_model1(RohcConfig(irt=300, crc_fn=0.0), CH)
    b = p_oos_model1(RohcConfig(irt=300), CH)
    assert abs(b - a) / b <= 0.20


@pytest.mark.parametrize("w, irt", [(29, 300), (13, 100), (5, 50), (40, 400)])
def test_degenerates_to_closed_form(w, irt):
    cfg = RohcConfig(irt=irt, w=w, l=1, fot=None, kofn=False, crc_fn=0.0)
    p1 = p_oos_model1(cfg, CH, geometric_ir=True)
    assert p1 == pytest.approx(p_oos_exact(CH, w, irt), abs=1e-9)


def test_row_stochastic_and_single_recurrent_class():
    chain = build_model1(RohcConfig(irt=60, l=2, fot=20), CH)
    rows = np.asarray(chain.matrix.sum(axis=1)).ravel()
    np.testing.assert_allclose(rows, 1.0, atol=1e-12)
    rec = recurrent_states(chain.matrix)
    assert rec.size > 0


def test_w_zero_state_is_good():
    chain = build_model1(RohcConfig(irt=50), CH)
    for lab in chain.labels:
        if lab.regime == "sync" and lab.w == 0:
            assert lab.channel == "G"
        if lab.regime == "sync" and lab.w > 0:
            assert lab.channel == "B"


def test_monotone_grid():
    # non-increasing in W, non-decreasing in IRT
    ws = (10, 20, 30)
    irts = (60, 120, 240)
    grid = np.array([[p_oos_model1(RohcConfig(irt=i, w=w), CH) for i in irts] for w in ws])
    assert np.all(np.diff(grid, axis=0) <= 1e-15)
    assert np.all(np.diff(grid, axis=1) >= -1e-15)


def test_breakdown_sums_to_one():
    br = oos_breakdown(RohcConfig(irt=200), CH)
    assert sum(br.values()) == pytest.approx(1.0, abs=1e-12)
    oos = sum(v for k, v in br.items() if k.startswith("oos"))
    assert oos == pytest.approx(p_oos_model1(RohcConfig(irt=200), CH), abs=1e-12)


def test_state_cap():
    with pytest.raises(StateSpaceTooLarge):
        build_model1(RohcConfig(irt=300), CH, max_states=1000)


def test_multi_flow_rejected():
    with pytest.raises(ValueError):
        build_model1(RohcConfig(m=2, w_o=10), CH)


def test_fo_refresh_helps():
    # more frequent FO refreshes repair damaged contexts sooner
    a = p_oos_model1(RohcConfig(irt=300, fot=None), CH)
    b = p_oos_model1(RohcConfig(irt=300, fot=50), CH)
    assert b <= a


def test_k_of_n_range_keeps_agreement():
    ref = p_oos_exact(CH, 29, 300)
    for k1 in (1, 2, 3):
        for n1 in range(k1, 7):
            p = p_oos_model1(RohcConfig(irt=300, k1=k1, n1=n1), CH)
            assert 0.5 <= p / ref <= 2.0
