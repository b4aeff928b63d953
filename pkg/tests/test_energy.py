import pytest
from hypothesis import given, settings, strategies as st

from llnsim.energy import (STATES, EnergyLedger, LedgerError, RadioStateProfile, ShuntConfig,
                           current_from_adc, current_lsb_mA, energy, periodic_samples,
                           sample_from_power, samples_to_csv, shunt_adc_voltage)
from llnsim.kernel import SECOND

PROFILE = RadioStateProfile()


def ledger(*segs, node=1):
    led = EnergyLedger(node)
    for state, a, b in segs:
        led.record_state(state, a, b)
    return led


def test_all_sleep_second():
    s = energy(ledger(("sleep", 0, SECOND)), (0, SECOND), PROFILE)
    assert s.avg_current_mA == pytest.approx(0.02)
    assert s.avg_power_mW == pytest.approx(0.066)
    assert s.energy_mJ == pytest.approx(0.066)


def test_mixed_window_weighted_average():
    led = ledger(("rx_listen", 0, 10_000), ("sleep", 10_000, SECOND))
    s = energy(led, (0, SECOND), PROFILE)
    # hand: (20 mA * 0.01 s + 0.02 mA * 0.99 s) / 1 s
    assert s.avg_current_mA == pytest.approx(0.2198)
    assert s.energy_mJ == s.avg_power_mW * s.duration_s


def test_power_window_identity_examples():
    assert sample_from_power(4, (0, 4 * SECOND), 0.24).energy_mJ == pytest.approx(0.96)
    assert sample_from_power(2, (0, 119 * SECOND), 0.18).energy_mJ == pytest.approx(21.42)
    with pytest.raises(LedgerError):
        sample_from_power(1, (5, 5), 1.0)


def test_ledger_rejects_overlap_and_empty():
    led = ledger(("tx", 0, 100))
    with pytest.raises(LedgerError):
        led.record_state("sleep", 50, 200)
    with pytest.raises(LedgerError):
        led.record_state("sleep", 100, 100)
    with pytest.raises(LedgerError):
        led.record_state("warp", 100, 200)


def test_window_outside_coverage():
    led = ledger(("sleep", 0, 100))
    with pytest.raises(LedgerError):
        led.time_in_states(0, 200)


def test_transition_and_close():
    led = EnergyLedger(3)
    led.transition("cca", 50)
    led.transition("rx_listen", 80)
    led.transition("sleep", 300)
    led.close(1000)
    assert [(s.state, s.start, s.end) for s in led.segments] == [
        ("off", 0, 50), ("cca", 50, 80), ("rx_listen", 80, 300), ("sleep", 300, 1000)]
    assert led.gaps(0, 1000) == []


def test_close_cuts_changes_announced_past_the_end():
    led = EnergyLedger(3)
    led.transition("sleep", 0)
    led.transition("rx_listen", 900)
    led.transition("sleep", 1100)
    led.close(1000)
    assert [(s.state, s.start, s.end) for s in led.segments] == [("sleep", 0, 900), ("rx_listen", 900, 1000)]


def test_profile_invariants():
    with pytest.raises(ValueError):
        RadioStateProfile(tx=10, rx_listen=20)
    with pytest.raises(ValueError):
        RadioStateProfile(sleep=-1)
    with pytest.raises(ValueError):
        ShuntConfig(resistance=0)


def test_adc_roundtrip_and_saturation():
    cfg = ShuntConfig()
    lsb = current_lsb_mA(cfg)
    for mA in (0.0, 0.02, 1.0, 19.7, 24.0):
        r = shunt_adc_voltage(mA, cfg)
        assert not r.saturated
        assert abs(current_from_adc(r, cfg) - mA) <= lsb
    big = shunt_adc_voltage(500.0, cfg)
    assert big.saturated and big.code == 2 ** cfg.adc_bits - 1


def test_csv_layout():
    text = samples_to_csv(periodic_samples(ledger(("sleep", 0, 2 * SECOND)), 0, 2 * SECOND, PROFILE))
    rows = text.splitlines()
    assert rows[0] == "node_id,window_start_s,window_end_s,avg_mA,avg_mW,mJ"
    assert rows[1].startswith("1,0.000000,1.000000,0.020000")
    assert len(rows) == 3


@settings(max_examples=200, deadline=None)
@given(durations=st.lists(st.tuples(st.sampled_from(STATES), st.integers(1, 400_000)), min_size=1, max_size=30))
def test_identity_and_tiling_property(durations):
    led = EnergyLedger(1)
    t = 0
    for state, d in durations:
        led.record_state(state, t, t + d)
        t += d
    assert led.gaps(0, t) == []
    assert sum(led.time_in_states(0, t).values()) == t
    s = energy(led, (0, t), PROFILE)
    assert s.energy_mJ == s.avg_power_mW * s.duration_s
    lo, hi = min(PROFILE.current(x) for x in STATES), max(PROFILE.current(x) for x in STATES)
    assert lo - 1e-9 <= s.avg_current_mA <= hi + 1e-9
