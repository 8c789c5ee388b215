"""Experiment files: a flat ``key = value`` format with ``[section]`` headers.

Keys carry their unit in the name (``tx_power_dbm``, ``sim_duration_s``); a
value may repeat the unit (``24.5 dBm``) but any other unit is rejected.
Unset radio fields fall back to the simulation-table defaults. Parse errors
name the file line that caused them.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional

from .analytics import RectRegion
from .dsr import DsrParams
from .engine import PROPAGATION_MODELS, SHADOW_MODES, ScenarioConfig, scenario_suite
from .mac import MacParams
from .propagation import PRESETS, RadioParams


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, path: Optional[str] = None):
        self.line = line
        self.path = path
        where = f"{path or '<config>'}:{line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


@dataclass
class ExperimentSpec:
    name: str
    base: ScenarioConfig
    sweep: list[dict]
    n_seeds: int = 10
    output_path: str = "results.csv"
    per_seed_path: Optional[str] = None
    workers: int = 1

    def __post_init__(self):
        if not self.sweep:
            raise ConfigError("sweep produced no points")
        if self.n_seeds < 1:
            raise ConfigError("n_seeds must be >= 1")

    def point_configs(self) -> list[ScenarioConfig]:
        return [apply_overrides(self.base, point) for point in self.sweep]


def _num(kind: type, unit: Optional[str]) -> Callable[[str], float]:
    def conv(text: str):
        parts = text.split()
        if len(parts) == 2:
            if unit is None or parts[1].lower() != unit.lower():
                raise ValueError(f"unit violation: expected {unit or 'no unit'}, got {parts[1]!r}")
        elif len(parts) != 1:
            raise ValueError(f"cannot parse {text!r}")
        value = float(parts[0])
        if kind is int:
            if not value.is_integer():
                raise ValueError(f"expected an integer, got {parts[0]!r}")
            return int(value)
        return value
    return conv


def _region(text: str) -> RectRegion:
    try:
        a, b = text.lower().replace(" ", "").rstrip("m").split("x")
        return RectRegion.from_dims(float(a.rstrip("m")), float(b))
    except ValueError:
        raise ValueError(f"region must look like 400x300, got {text!r}") from None


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _choice(options) -> Callable[[str], str]:
    def conv(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text
    return conv


# key -> (target attribute, converter)
RADIO_KEYS = {
    "tx_power_dbm": ("tx_power", _num(float, "dBm")),
    "rx_threshold_dbm": ("rx_threshold", _num(float, "dBm")),
    "carrier_sense_threshold_dbm": ("carrier_sense_threshold", _num(float, "dBm")),
    "tx_gain": ("tx_gain", _num(float, None)),
    "rx_gain": ("rx_gain", _num(float, None)),
    "tx_height_m": ("tx_height", _num(float, "m")),
    "rx_height_m": ("rx_height", _num(float, "m")),
    "shadow_sigma_db": ("shadow_sigma", _num(float, "dB")),
    "ref_distance_m": ("ref_distance", _num(float, "m")),
    "path_loss_exponent": ("path_loss_exponent", _num(float, None)),
    "carrier_freq_hz": ("carrier_freq", _num(float, "Hz")),
}
MAC_KEYS = {
    "slot_time_s": ("slot_time", _num(float, "s")),
    "sifs_s": ("sifs", _num(float, "s")),
    "difs_s": ("difs", _num(float, "s")),
    "cw_min": ("cw_min", _num(int, None)),
    "cw_max": ("cw_max", _num(int, None)),
    "long_retry_limit": ("long_retry_limit", _num(int, None)),
    "short_retry_limit": ("short_retry_limit", _num(int, None)),
    "data_rate_bps": ("data_rate", _num(float, "bps")),
    "rts_threshold_bytes": ("rts_threshold", _num(int, "bytes")),
    "queue_limit": ("queue_limit", _num(int, None)),
}
TRAFFIC_KEYS = {
    "connections": ("connections", _num(int, None)),
    "cbr_rate_pps": ("cbr_rate", _num(float, "pps")),
    "payload_bytes": ("payload_bytes", _num(int, "bytes")),
    "cbr_start_max_s": ("cbr_start_max", _num(float, "s")),
}
SCENARIO_KEYS = {
    "region": ("region", _region),
    "node_count": ("node_count", _num(int, None)),
    "propagation": ("propagation", _choice(PROPAGATION_MODELS)),
    "shadow_mode": ("shadow_mode", _choice(SHADOW_MODES)),
    "sim_duration_s": ("sim_duration", _num(float, "s")),
    "seed": ("seed", _num(int, None)),
    "radio_preset": ("radio_preset", _choice(tuple(PRESETS))),
}
DSR_KEYS = {
    "send_buffer_size": ("send_buffer_size", _num(int, None)),
    "send_buffer_timeout_s": ("send_buffer_timeout", _num(float, "s")),
    "discovery_timeout_s": ("discovery_timeout", _num(float, "s")),
    "discovery_timeout_max_s": ("discovery_timeout_max", _num(float, "s")),
    "rebroadcast_jitter_s": ("rebroadcast_jitter", _num(float, "s")),
    "reply_from_cache": ("reply_from_cache", _bool),
}
EXPERIMENT_KEYS = {
    "name": ("name", str),
    "n_seeds": ("n_seeds", _num(int, None)),
    "output": ("output_path", str),
    "per_seed_output": ("per_seed_path", str),
    "workers": ("workers", _num(int, None)),
}
SWEEP_KEYS = {
    "suite": "suite",
    "propagation": "propagation",
    "tx_power_dbm": "tx_power",
    "long_retry_limit": "long_retry_limit",
}
SECTIONS = {
    "experiment": EXPERIMENT_KEYS,
    "scenario": SCENARIO_KEYS,
    "radio": RADIO_KEYS,
    "mac": MAC_KEYS,
    "traffic": TRAFFIC_KEYS,
    "dsr": DSR_KEYS,
    "sweep": SWEEP_KEYS,
}


def _split_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _parse_sweep(values: dict, lines: dict, path) -> list[dict]:
    axes: list[list[tuple[str, object]]] = []
    suite = values.get("suite", "none").strip().lower()
    if suite not in ("none", ""):
        if suite == "all":
            idx = list(range(8))
        else:
            try:
                idx = [int(t) for t in _split_list(suite)]
            except ValueError:
                raise ConfigError(f"bad suite selection {suite!r}", lines.get("suite"), path) from None
            if any(not 0 <= i < 8 for i in idx):
                raise ConfigError("suite indices must be in 0..7", lines.get("suite"), path)
        axes.append([("suite_index", i) for i in idx])
    converters = {
        "propagation": _choice(PROPAGATION_MODELS),
        "tx_power": _num(float, "dBm"),
        "long_retry_limit": _num(int, None),
    }
    for key in ("propagation", "tx_power_dbm", "long_retry_limit"):
        if key not in values:
            continue
        attr = SWEEP_KEYS[key]
        try:
            axes.append([(attr, converters[attr](t)) for t in _split_list(values[key])])
        except ValueError as exc:
            raise ConfigError(str(exc), lines.get(key), path) from None
    if not axes:
        return [{}]
    return [dict(combo) for combo in itertools.product(*axes)]


def apply_overrides(base: ScenarioConfig, point: dict) -> ScenarioConfig:
    cfg = base
    if "suite_index" in point:
        cfg = scenario_suite(cfg)[point["suite_index"]]
    if "propagation" in point:
        cfg = cfg.with_(propagation=point["propagation"])
    if "tx_power" in point:
        cfg = cfg.with_(radio=cfg.radio.with_(tx_power=point["tx_power"]))
    if "long_retry_limit" in point:
        cfg = cfg.with_(mac=replace(cfg.mac, long_retry_limit=point["long_retry_limit"]))
    return cfg


def parse_text(text: str, path: Optional[str] = None) -> ExperimentSpec:
    sections: dict[str, dict[str, str]] = {name: {} for name in SECTIONS}
    lines: dict[str, dict[str, int]] = {name: {} for name in SECTIONS}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            if current not in SECTIONS:
                raise ConfigError(f"unknown section [{current}]", lineno, path)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno, path)
        if current is None:
            raise ConfigError("key outside of any section", lineno, path)
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lower()
        if key not in SECTIONS[current]:
            raise ConfigError(f"unknown key {key!r} in [{current}]", lineno, path)
        if key in sections[current]:
            raise ConfigError(f"duplicate key {key!r} in [{current}]", lineno, path)
        sections[current][key] = value
        lines[current][key] = lineno

    def convert(section: str) -> dict:
        out = {}
        for key, value in sections[section].items():
            attr, conv = SECTIONS[section][key]
            try:
                out[attr] = conv(value)
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}", lines[section][key], path) from None
        return out

    def build(cls, kwargs, section, base=None):
        try:
            if base is not None:
                return replace(base, **kwargs)
            return cls(**kwargs)
        except (ValueError, TypeError) as exc:
            first = min(lines[section].values()) if lines[section] else None
            raise ConfigError(f"[{section}] {exc}", first, path) from None

    scen = convert("scenario")
    preset = PRESETS[scen.pop("radio_preset", "table1")]
    radio = build(RadioParams, convert("radio"), "radio", base=preset)
    mac = build(MacParams, convert("mac"), "mac")
    dsr = build(DsrParams, convert("dsr"), "dsr")
    scen.update(convert("traffic"))
    try:
        base = ScenarioConfig(radio=radio, mac=mac, dsr=dsr, **scen)
    except (ValueError, TypeError) as exc:
        offending = {**lines["scenario"], **lines["traffic"]}
        first = min(offending.values()) if offending else None
        # point at the line of the offending field when it can be identified
        for key, ln in offending.items():
            attr = (SCENARIO_KEYS.get(key) or TRAFFIC_KEYS.get(key))[0]
            if attr in str(exc):
                first = ln
                break
        raise ConfigError(str(exc), first, path) from None

    exp = convert("experiment")
    sweep = _parse_sweep(sections["sweep"], lines["sweep"], path)
    exp.setdefault("name", Path(path).stem if path else "experiment")
    try:
        spec = ExperimentSpec(base=base, sweep=sweep, **exp)
        spec.point_configs()  # surfaces invalid sweep combinations now
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc), None, path) from None
    return spec


def parse_config(path) -> ExperimentSpec:
    path = str(path)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", None, path) from None
    return parse_text(text, path)


def config_fields() -> dict[str, list[str]]:
    """Accepted keys per section, for ``--help`` style listings."""
    return {name: list(keys) for name, keys in SECTIONS.items()}


__all__ = ["ConfigError", "ExperimentSpec", "parse_config", "parse_text", "apply_overrides", "config_fields"]
