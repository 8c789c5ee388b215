import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shadowsim.analytics import RectRegion
from shadowsim.engine import scenario_suite
from shadowsim.propagation import (
    HIGH_POWER_DBM,
    RANGE_250M,
    TABLE1,
    PowerDbm,
    PowerWatts,
    RadioParams,
    calibrate_k,
    dbm_to_watts,
    mean_path_loss_db,
    mean_received_power_dbm,
    path_loss_pdf,
    predicted_delivery_ratio,
    prob_above_threshold,
    received_power_tworay,
    ref_path_loss_db,
    sample_received_power,
    shadowing_median_range,
    tworay_range,
    watts_to_dbm,
)

# Oracle: literal formulas with c = 299792458 m/s, evaluated outside the package.
PL0_914MHZ = 31.666707136560003
PL_ANCHORS = {4: 49.728506876398875, 40: 79.72850687639888, 80: 88.7594067463183, 186: 99.7520954630975}
TWORAY_TABLE1 = 166.72472125510626
TWORAY_HP_15M = 300.15201211115163
MEDIAN_RANGE = 80.74390738766152
P_ABOVE_40M = 0.9988576878790096
P_ABOVE_80M = 0.5160322647782716


# ----------------------------------------------------------------- units

def test_dbm_to_watts_examples():
    assert dbm_to_watts(24.50) == pytest.approx(0.28184, abs=1e-4)
    assert dbm_to_watts(HIGH_POWER_DBM) == pytest.approx(0.58432, abs=1e-3)
    assert dbm_to_watts(0.0) == 0.001


@pytest.mark.parametrize("bad", [0.0, -1e-3])
def test_watts_to_dbm_rejects_nonpositive(bad):
    with pytest.raises(ValueError):
        watts_to_dbm(bad)
    with pytest.raises(ValueError):
        PowerWatts(bad)


def test_power_wrappers_round_trip():
    assert PowerDbm(24.5).to_watts().to_dbm().value == pytest.approx(24.5, rel=1e-12)


@settings(max_examples=1000, deadline=None)
@given(p=st.floats(min_value=-120.0, max_value=40.0))
def test_dbm_watts_round_trip(p):
    back = watts_to_dbm(dbm_to_watts(p))
    assert back == pytest.approx(p, rel=1e-12, abs=1e-12)


# ------------------------------------------------------------- params

def test_table_defaults():
    p = RadioParams()
    assert (p.tx_power, p.rx_threshold, p.shadow_sigma, p.ref_distance) == (24.50, -64.38, 3.0, 1.0)
    assert (p.path_loss_exponent, p.carrier_freq) == (3.0, 914e6)
    assert (p.tx_gain, p.rx_gain, p.tx_height, p.rx_height) == (1.0, 1.0, 1.0, 1.0)
    assert p.carrier_sense_threshold < p.rx_threshold


@pytest.mark.parametrize("changes", [
    dict(tx_power=-70.0),
    dict(carrier_sense_threshold=-60.0),
    dict(shadow_sigma=-1.0),
    dict(ref_distance=0.0),
    dict(path_loss_exponent=0.0),
    dict(tx_height=0.0),
])
def test_params_validation(changes):
    with pytest.raises(ValueError):
        TABLE1.with_(**changes)


# ----------------------------------------------------------- path loss

def test_reference_loss_at_914mhz():
    assert ref_path_loss_db(TABLE1) == pytest.approx(PL0_914MHZ, abs=1e-9)
    assert ref_path_loss_db(TABLE1) == pytest.approx(31.66, abs=0.05)


def test_reference_loss_unit_argument_and_doubling():
    p = TABLE1.with_(ref_distance=TABLE1.wavelength / (4 * math.pi))
    assert ref_path_loss_db(p) == pytest.approx(0.0, abs=1e-12)
    p2 = TABLE1.with_(ref_distance=2.0)
    assert ref_path_loss_db(p2) - ref_path_loss_db(TABLE1) == pytest.approx(20 * math.log10(2), abs=1e-12)


@pytest.mark.parametrize("d,figure_value", [(4, 50), (40, 80), (80, 88), (186, 100)])
def test_path_loss_anchor_points(d, figure_value):
    pl = mean_path_loss_db(TABLE1, d)
    assert pl == pytest.approx(PL_ANCHORS[d], abs=1e-9)
    assert abs(pl - figure_value) <= 1.0


def test_path_loss_at_reference_and_inside():
    assert mean_path_loss_db(TABLE1, 1.0) == ref_path_loss_db(TABLE1)
    with pytest.raises(ValueError):
        mean_path_loss_db(TABLE1, 0.5)
    with pytest.raises(ValueError):
        sample_received_power(TABLE1, 0.5, np.random.default_rng(0))


def test_path_loss_accepts_arrays():
    d = np.array([1.0, 10.0, 100.0])
    assert np.allclose(mean_path_loss_db(TABLE1, d), PL0_914MHZ + np.array([0, 30, 60]))


@settings(max_examples=1000, deadline=None)
@given(d=st.floats(min_value=1.0, max_value=1e5), n=st.floats(min_value=1.5, max_value=6.0))
def test_path_loss_decade_slope(d, n):
    p = TABLE1.with_(path_loss_exponent=n)
    assert mean_path_loss_db(p, 10 * d) - mean_path_loss_db(p, d) == pytest.approx(10 * n, abs=1e-9)


# ------------------------------------------------------------ sampling

def test_zero_sigma_is_deterministic():
    p = TABLE1.with_(shadow_sigma=0.0)
    rng = np.random.default_rng(1)
    for d in (1.0, 50.0, 123.4):
        assert sample_received_power(p, d, rng) == p.tx_power - mean_path_loss_db(p, d)


def test_sample_mean_and_exceedance_at_80m():
    rng = np.random.default_rng(11)
    draws = sample_received_power(TABLE1, np.full(1_000_000, 80.0), rng)
    assert draws.mean() == pytest.approx(24.5 - PL_ANCHORS[80], abs=0.05)
    assert (draws > TABLE1.rx_threshold).mean() == pytest.approx(prob_above_threshold(TABLE1, 80.0), abs=0.01)


def test_sampling_is_reproducible_per_seed():
    a = sample_received_power(TABLE1, np.full(100, 60.0), np.random.default_rng(5))
    b = sample_received_power(TABLE1, np.full(100, 60.0), np.random.default_rng(5))
    assert np.array_equal(a, b)


def test_exceedance_grid_within_three_standard_errors():
    rng = np.random.default_rng(2)
    n = 1_000_000
    for d in np.linspace(1.0, 250.0, 50):
        p = prob_above_threshold(TABLE1, float(d))
        emp = (sample_received_power(TABLE1, np.full(n, d), rng) > TABLE1.rx_threshold).mean()
        se = math.sqrt(max(p * (1 - p), 1e-12) / n)
        assert abs(emp - p) <= max(3 * se, 1.5 / n), (d, emp, p)


# ---------------------------------------------------------------- density

def test_pdf_peak_and_normalisation():
    d = 80.0
    mu = mean_path_loss_db(TABLE1, d)
    assert path_loss_pdf(TABLE1, d, mu) == pytest.approx(1 / (3 * math.sqrt(2 * math.pi)))
    from scipy.integrate import quad

    total, _ = quad(lambda x: path_loss_pdf(TABLE1, d, x), mu - 24, mu + 24, epsabs=1e-12)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_pdf_undefined_without_shadowing():
    with pytest.raises(ValueError):
        path_loss_pdf(TABLE1.with_(shadow_sigma=0.0), 10.0, 60.0)


# ----------------------------------------------------------- exceedance

def test_exceedance_examples():
    assert prob_above_threshold(TABLE1, MEDIAN_RANGE) == pytest.approx(0.5, abs=1e-12)
    assert shadowing_median_range(TABLE1) == pytest.approx(MEDIAN_RANGE, rel=1e-12)
    assert prob_above_threshold(TABLE1, 40.0) == pytest.approx(P_ABOVE_40M, abs=1e-10)
    assert prob_above_threshold(TABLE1, 40.0) == pytest.approx(0.999, abs=1e-3)
    assert prob_above_threshold(TABLE1, 80.0) == pytest.approx(P_ABOVE_80M, abs=1e-10)


def test_exceedance_step_when_sigma_zero():
    p = TABLE1.with_(shadow_sigma=0.0)
    assert prob_above_threshold(p, 50.0) == 1.0
    assert prob_above_threshold(p, 120.0) == 0.0
    assert np.array_equal(prob_above_threshold(p, np.array([50.0, 120.0])), [1.0, 0.0])


def test_exceedance_vectorised():
    d = np.array([40.0, 80.0, 120.0])
    assert np.allclose(prob_above_threshold(TABLE1, d), [prob_above_threshold(TABLE1, float(x)) for x in d])


mid_d = st.floats(min_value=30.0, max_value=160.0)


@settings(max_examples=1000, deadline=None)
@given(d=mid_d, frac=st.floats(min_value=1e-3, max_value=0.5))
def test_exceedance_strictly_decreasing_in_distance(d, frac):
    assert prob_above_threshold(TABLE1, d * (1 + frac)) < prob_above_threshold(TABLE1, d)


@settings(max_examples=1000, deadline=None)
@given(d=mid_d, dp=st.floats(min_value=0.01, max_value=3.0))
def test_exceedance_strictly_increasing_in_power(d, dp):
    hi = TABLE1.with_(tx_power=TABLE1.tx_power + dp)
    assert prob_above_threshold(hi, d) > prob_above_threshold(TABLE1, d)


@settings(max_examples=1000, deadline=None)
@given(d=st.floats(min_value=1.0, max_value=300.0), off=st.floats(min_value=-20.0, max_value=20.0))
def test_exceedance_invariant_under_common_offset(d, off):
    shifted = TABLE1.with_(tx_power=TABLE1.tx_power + off, rx_threshold=TABLE1.rx_threshold + off,
                           carrier_sense_threshold=TABLE1.carrier_sense_threshold + off)
    assert prob_above_threshold(shifted, d) == pytest.approx(prob_above_threshold(TABLE1, d), abs=1e-12)


# ---------------------------------------------------------------- two-ray

def test_tworay_unit_factors_and_doubling():
    assert received_power_tworay(TABLE1, 1.0) == pytest.approx(TABLE1.tx_power)
    diff = received_power_tworay(TABLE1, 50.0) - received_power_tworay(TABLE1, 100.0)
    assert diff == pytest.approx(40 * math.log10(2), abs=1e-12)
    with pytest.raises(ValueError):
        received_power_tworay(TABLE1, 0.0)


def test_tworay_ranges():
    assert tworay_range(TABLE1) == pytest.approx(TWORAY_TABLE1, abs=1e-9)
    assert tworay_range(TABLE1) == pytest.approx(166.7, abs=0.1)
    assert 160 <= tworay_range(TABLE1) <= 170
    assert tworay_range(RANGE_250M) == pytest.approx(250.0, abs=5.0)
    hp = RANGE_250M.with_(tx_power=HIGH_POWER_DBM)
    assert tworay_range(hp) == pytest.approx(TWORAY_HP_15M, abs=1e-9)
    assert tworay_range(hp) == pytest.approx(300.0, abs=5.0)


def test_tworay_range_doubles_with_12db():
    up = TABLE1.with_(tx_power=TABLE1.tx_power + 40 * math.log10(2))
    assert tworay_range(up) == pytest.approx(2 * tworay_range(TABLE1), rel=1e-12)


@settings(max_examples=1000, deadline=None)
@given(pt=st.floats(min_value=0.0, max_value=40.0), h=st.floats(min_value=0.5, max_value=3.0))
def test_tworay_power_at_range_equals_threshold(pt, h):
    p = TABLE1.with_(tx_power=pt, tx_height=h, rx_height=h)
    assert received_power_tworay(p, tworay_range(p)) == pytest.approx(p.rx_threshold, abs=1e-9)


# ------------------------------------------------------------- prediction

def test_prediction_small_region_near_one():
    reg = RectRegion(60, 60)  # mean link distance about 31 m
    assert predicted_delivery_ratio(TABLE1, reg, 1.0) == pytest.approx(1.0, abs=1e-3)


def test_prediction_clamped_and_k_validated():
    reg = RectRegion(60, 60)
    assert predicted_delivery_ratio(TABLE1, reg, 5.0) == 1.0
    with pytest.raises(ValueError):
        predicted_delivery_ratio(TABLE1, reg, -1.0)


def test_calibrated_prediction_is_monotone_and_reproduces_anchor():
    regions = [c.region for c in scenario_suite()]
    k = calibrate_k(TABLE1, regions[0], 0.6)
    curve = [predicted_delivery_ratio(TABLE1, r, k) for r in regions]
    assert curve[0] == pytest.approx(0.6)
    assert all(b <= a for a, b in zip(curve, curve[1:]))


@settings(max_examples=300, deadline=None)
@given(side=st.floats(min_value=10.0, max_value=1000.0), s=st.floats(min_value=1.0, max_value=3.0),
       aspect=st.floats(min_value=0.2, max_value=1.0))
def test_prediction_never_increases_with_scale(side, s, aspect):
    small = RectRegion(side * aspect, side)
    big = RectRegion(side * aspect * s, side * s)
    assert predicted_delivery_ratio(TABLE1, big) <= predicted_delivery_ratio(TABLE1, small)


def test_mean_received_power_consistent():
    assert mean_received_power_dbm(TABLE1, 80.0) == pytest.approx(24.5 - PL_ANCHORS[80])
