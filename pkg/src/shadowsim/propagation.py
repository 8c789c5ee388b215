"""Propagation models: two-ray ground reflection and log-normal shadowing.

Powers are carried in dBm at every public boundary; the two-ray model is
evaluated in watts and converted back. Gaussian shadowing draws come from a
caller-owned :class:`numpy.random.Generator` (``Generator.normal``), and the
exceedance probability uses :func:math.erf, so results are reproducible per
seed and the closed form is accurate to double precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .analytics import RectRegion, mean_link_distance

SPEED_OF_LIGHT = 299_792_458.0


def dbm_to_watts(p_dbm: float) -> float:
    return 10.0 ** (p_dbm / 10.0) / 1000.0


def watts_to_dbm(p_watts: float) -> float:
    if p_watts <= 0:
        raise ValueError(f"power must be positive to express in dBm, got {p_watts} W")
    return 10.0 * math.log10(p_watts * 1000.0)


@dataclass(frozen=True)
class PowerDbm:
    value: float

    def to_watts(self) -> "PowerWatts":
        return PowerWatts(dbm_to_watts(self.value))


@dataclass(frozen=True)
class PowerWatts:
    value: float

    def __post_init__(self):
        if self.value <= 0:
            raise ValueError(f"received power must be positive, got {self.value} W")

    def to_dbm(self) -> PowerDbm:
        return PowerDbm(watts_to_dbm(self.value))


@dataclass(frozen=True)
class RadioParams:
    """Physical-layer parameters. Defaults are the simulation table values."""

    tx_power: float = 24.50  # dBm
    rx_threshold: float = -64.38  # dBm
    carrier_sense_threshold: float = -78.0  # dBm
    tx_gain: float = 1.0
    rx_gain: float = 1.0
    tx_height: float = 1.0  # m
    rx_height: float = 1.0  # m
    shadow_sigma: float = 3.0  # dB
    ref_distance: float = 1.0  # m
    path_loss_exponent: float = 3.0
    carrier_freq: float = 914e6  # Hz

    def __post_init__(self):
        if not self.tx_power > self.rx_threshold:
            raise ValueError("tx_power must exceed rx_threshold")
        if self.carrier_sense_threshold > self.rx_threshold:
            raise ValueError("carrier_sense_threshold must not exceed rx_threshold")
        if self.shadow_sigma < 0:
            raise ValueError("shadow_sigma must be >= 0")
        for name in ("ref_distance", "path_loss_exponent", "carrier_freq", "tx_gain", "rx_gain",
                     "tx_height", "rx_height"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq

    def with_(self, **changes) -> "RadioParams":
        return replace(self, **changes)


TABLE1 = RadioParams()
# 1.5 m antennas give the 250 m two-ray range quoted for the default power.
RANGE_250M = RadioParams(tx_height=1.5, rx_height=1.5)
HIGH_POWER_DBM = 27.67

PRESETS = {"table1": TABLE1, "range250": RANGE_250M}


def ref_path_loss_db(params: RadioParams) -> float:
    """Free-space loss at the reference distance, ``20 log10(4 pi d0 / lambda)``."""
    return 20.0 * math.log10(4.0 * math.pi * params.ref_distance / params.wavelength)


def mean_path_loss_db(params: RadioParams, d):
    """Distance-dependent mean path loss. Scalar or array ``d`` (metres, ``>= d0``)."""
    d_arr = np.asarray(d, dtype=float)
    if np.any(d_arr < params.ref_distance):
        raise ValueError(f"distance below reference distance {params.ref_distance} m")
    pl = ref_path_loss_db(params) + 10.0 * params.path_loss_exponent * np.log10(d_arr / params.ref_distance)
    return float(pl) if np.ndim(d) == 0 else pl


def mean_received_power_dbm(params: RadioParams, d):
    return params.tx_power - mean_path_loss_db(params, d)


def sample_received_power(params: RadioParams, d, rng: np.random.Generator):
    """One shadowed received-power draw (dBm) per distance in ``d``."""
    mean = mean_received_power_dbm(params, d)
    if params.shadow_sigma == 0:
        return mean
    if np.ndim(d) == 0:
        return mean - params.shadow_sigma * float(rng.standard_normal())
    return mean - params.shadow_sigma * rng.standard_normal(np.shape(mean))


def path_loss_pdf(params: RadioParams, d: float, x):
    """Gaussian density of the path loss ``x`` (dB) at distance ``d``."""
    sigma = params.shadow_sigma
    if sigma == 0:
        raise ValueError("path-loss density undefined for sigma = 0")
    mu = mean_path_loss_db(params, d)
    z = (np.asarray(x, dtype=float) - mu) / sigma
    val = np.exp(-0.5 * z * z) / (math.sqrt(2.0 * math.pi) * sigma)
    return float(val) if np.ndim(x) == 0 else val


def prob_above_threshold(params: RadioParams, d):
    """Probability that the shadowed received power exceeds ``rx_threshold``.

    With ``shadow_sigma == 0`` this degenerates to the step function
    ``1{mean power > threshold}``.
    """
    margin = mean_received_power_dbm(params, d) - params.rx_threshold
    if params.shadow_sigma == 0:
        out = np.where(np.asarray(margin) > 0, 1.0, 0.0)
        return float(out) if np.ndim(d) == 0 else out
    scale = params.shadow_sigma * math.sqrt(2.0)
    if np.ndim(d) == 0:
        return 0.5 - 0.5 * math.erf(-margin / scale)
    return np.array([0.5 - 0.5 * math.erf(-m / scale) for m in np.ravel(margin)]).reshape(np.shape(margin))


def received_power_tworay(params: RadioParams, d):
    """Two-ray received power in dBm, ``Pt Gt Gr ht^2 hr^2 / d^4`` with no crossover."""
    d_arr = np.asarray(d, dtype=float)
    if np.any(d_arr <= 0):
        raise ValueError("two-ray model needs d > 0")
    gain_db = 10.0 * math.log10(params.tx_gain * params.rx_gain * params.tx_height**2 * params.rx_height**2)
    pr = params.tx_power + gain_db - 40.0 * np.log10(d_arr)
    return float(pr) if np.ndim(d) == 0 else pr


def tworay_range(params: RadioParams) -> float:
    """Distance at which the two-ray power falls to ``rx_threshold``."""
    pt_w = dbm_to_watts(params.tx_power)
    pth_w = dbm_to_watts(params.rx_threshold)
    num = pt_w * params.tx_gain * params.rx_gain * params.tx_height**2 * params.rx_height**2
    return (num / pth_w) ** 0.25


def shadowing_median_range(params: RadioParams) -> float:
    """Distance where the mean shadowing power equals ``rx_threshold`` (50 % reception)."""
    margin = params.tx_power - params.rx_threshold - ref_path_loss_db(params)
    return params.ref_distance * 10.0 ** (margin / (10.0 * params.path_loss_exponent))


def predicted_delivery_ratio(params: RadioParams, region: RectRegion, k: float = 1.0) -> float:
    """``k`` times the exceedance probability at the region's mean link distance, clamped to [0, 1]."""
    if k < 0:
        raise ValueError("k must be non-negative")
    d = max(mean_link_distance(region).mean_distance, params.ref_distance)
    return min(1.0, max(0.0, k * prob_above_threshold(params, d)))


def calibrate_k(params: RadioParams, region: RectRegion, simulated_ratio: float) -> float:
    """Scale factor that makes the prediction reproduce ``simulated_ratio`` at ``region``."""
    d = max(mean_link_distance(region).mean_distance, params.ref_distance)
    p = prob_above_threshold(params, d)
    if p <= 0:
        raise ValueError("exceedance probability is zero at the calibration region")
    return simulated_ratio / p
