"""Scenario configuration files.

INI syntax (``configparser``). Sections:

``[scenario]``
    name, models (comma list of dcs/ssp/drp/dsp), pool_capacity, lease_quantum,
    setup_cost_per_node, strict_scan, dr2_enabled, speedup
``[tre NAME]`` (one per TRE)
    trace (path relative to the config file, or ``builtin:nasa`` /
    ``builtin:blue`` / ``builtin:montage``), kind (htc/mtc, default from the
    file extension), scale_to, slice_start, slice_duration, fixed_size,
    initial_resources, threshold_ratio, scan_interval, idle_check_interval,
    start, lifetime (seconds, or ``drained``)
``[sweep]``
    tre, initial_resources (comma list), threshold_ratio (comma list)
``[tco]``
    every field of :class:`tresim.metrics.TcoInput`

Unknown sections and keys are rejected so that typos fail loudly.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, fields
from importlib import resources
from typing import Optional

from .domain import PolicyParams, Workload, WorkloadKind
from .ingest import IngestError, TraceSlice, parse_dag, parse_swf, scale_trace, slice_trace
from .metrics import TcoInput
from .models import ModelKind, ScenarioConfig, TreEntry

BUILTIN = {
    "nasa": "nasa_ipsc_synth.swf",
    "blue": "sdsc_blue_synth.swf",
    "montage": "montage_1000.dag",
}

_SCENARIO_KEYS = {"name", "models", "pool_capacity", "lease_quantum", "setup_cost_per_node",
                  "strict_scan", "dr2_enabled", "speedup"}
_TRE_KEYS = {"trace", "kind", "scale_to", "slice_start", "slice_duration", "fixed_size",
             "initial_resources", "threshold_ratio", "scan_interval", "idle_check_interval",
             "start", "lifetime"}
_SWEEP_KEYS = {"tre", "initial_resources", "threshold_ratio"}
_TCO_KEYS = {f.name for f in fields(TcoInput)}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SweepSpec:
    tre: str
    initial_resources: tuple
    threshold_ratios: tuple


@dataclass(frozen=True)
class Config:
    name: str
    models: tuple
    scenario: ScenarioConfig
    sweep: Optional[SweepSpec] = None
    tco: Optional[TcoInput] = None


def _check_keys(section: str, keys, allowed) -> None:
    bad = sorted(set(keys) - allowed)
    if bad:
        raise ConfigError(f"[{section}]: unknown key(s) {', '.join(bad)}")


def _int(sec, key: str, default=None, minimum: Optional[int] = None):
    raw = sec.get(key)
    if raw is None:
        return default
    try:
        val = int(raw)
    except ValueError:
        raise ConfigError(f"[{sec.name}] {key}: expected an integer, got {raw!r}") from None
    if minimum is not None and val < minimum:
        raise ConfigError(f"[{sec.name}] {key}: must be >= {minimum}, got {val}")
    return val


def _float(sec, key: str, default=None):
    raw = sec.get(key)
    if raw is None:
        return default
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"[{sec.name}] {key}: expected a number, got {raw!r}") from None


def _bool(sec, key: str, default: bool) -> bool:
    if key not in sec:
        return default
    try:
        return sec.getboolean(key)
    except ValueError:
        raise ConfigError(f"[{sec.name}] {key}: expected a boolean, got {sec[key]!r}") from None


def _list(sec, key: str, conv) -> tuple:
    raw = sec.get(key)
    if not raw:
        raise ConfigError(f"[{sec.name}] {key}: required")
    try:
        return tuple(conv(v.strip()) for v in raw.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"[{sec.name}] {key}: bad list {raw!r}") from None


def read_trace_text(ref: str, base_dir: str) -> tuple[str, str]:
    """Return (text, file name) for a trace reference."""
    if ref.startswith("builtin:"):
        key = ref.split(":", 1)[1]
        if key not in BUILTIN:
            raise ConfigError(f"unknown builtin trace {key!r}; choose from {sorted(BUILTIN)}")
        fname = BUILTIN[key]
        return resources.files("tresim.data").joinpath(fname).read_text(encoding="utf-8"), fname
    path = ref if os.path.isabs(ref) else os.path.join(base_dir, ref)
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read(), os.path.basename(path)
    except OSError as e:
        raise IngestError(f"cannot read trace {path}: {e.strerror}") from None


def load_workload(sec, name: str, base_dir: str) -> Workload:
    ref = sec.get("trace")
    if not ref:
        raise ConfigError(f"[{sec.name}] trace: required")
    text, fname = read_trace_text(ref, base_dir)
    kind = sec.get("kind") or ("mtc" if fname.endswith(".dag") else "htc")
    if kind not in ("htc", "mtc"):
        raise ConfigError(f"[{sec.name}] kind: expected htc or mtc, got {kind!r}")
    if kind == "mtc":
        return parse_dag(text, name, workflow_id=name)
    w = parse_swf(text, name)
    scale = _int(sec, "scale_to", minimum=1)
    if scale is not None:
        w = scale_trace(w, scale)
    if "slice_start" in sec or "slice_duration" in sec:
        w = slice_trace(w, TraceSlice(_int(sec, "slice_start", 0, 0),
                                      _int(sec, "slice_duration", TraceSlice.duration, 1)))
    return w


def _tre_entry(sec, name: str, base_dir: str) -> TreEntry:
    _check_keys(sec.name, sec.keys(), _TRE_KEYS)
    w = load_workload(sec, name, base_dir)
    params = None
    if "initial_resources" in sec or "threshold_ratio" in sec:
        b = _int(sec, "initial_resources", minimum=1)
        r = _float(sec, "threshold_ratio")
        if b is None or r is None:
            raise ConfigError(f"[{sec.name}] initial_resources and threshold_ratio go together")
        if not r > 0:
            raise ConfigError(f"[{sec.name}] threshold_ratio must be > 0")
        base = PolicyParams.for_kind(w.kind, b, r)
        params = PolicyParams(b, r, _int(sec, "scan_interval", base.scan_interval, 1),
                              _int(sec, "idle_check_interval", base.idle_check_interval, 1))
    lifetime_raw = sec.get("lifetime", "drained")
    lifetime = None if lifetime_raw == "drained" else _int(sec, "lifetime", minimum=1)
    return TreEntry(name, w, fixed_size=_int(sec, "fixed_size", minimum=1), params=params,
                    start=_int(sec, "start", 0, 0), lifetime=lifetime)


def parse_config(text: str, base_dir: str = ".") -> Config:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(str(e).splitlines()[0]) from None
    if "scenario" not in cp:
        raise ConfigError("missing [scenario] section")
    sc = cp["scenario"]
    _check_keys("scenario", sc.keys(), _SCENARIO_KEYS)
    try:
        models = tuple(ModelKind(m.strip()) for m in sc.get("models", "dcs,ssp,drp,dsp").split(",") if m.strip())
    except ValueError as e:
        raise ConfigError(f"[scenario] models: {e}") from None

    entries = []
    sweep = tco = None
    for section in cp.sections():
        if section == "scenario":
            continue
        if section.startswith("tre "):
            entries.append(_tre_entry(cp[section], section[4:].strip(), base_dir))
        elif section == "sweep":
            sw = cp[section]
            _check_keys(section, sw.keys(), _SWEEP_KEYS)
            sweep = SweepSpec(sw.get("tre", ""), _list(sw, "initial_resources", int),
                              _list(sw, "threshold_ratio", float))
        elif section == "tco":
            _check_keys(section, cp[section].keys(), _TCO_KEYS)
            kw = {}
            for f in fields(TcoInput):
                if f.name in cp[section]:
                    conv = _int if f.type in ("int", int) else _float
                    kw[f.name] = conv(cp[section], f.name)
            try:
                tco = TcoInput(**kw)
            except ValueError as e:
                raise ConfigError(f"[tco] {e}") from None
        else:
            raise ConfigError(f"unknown section [{section}]")

    for e in entries:
        if ModelKind.DSP in models and e.params is None:
            raise ConfigError(f"[tre {e.name}] DSP runs need initial_resources and threshold_ratio")
        if {ModelKind.DCS, ModelKind.SSP} & set(models) and e.fixed_size is None:
            raise ConfigError(f"[tre {e.name}] fixed-partition runs need fixed_size")
    if sweep is not None:
        names = [e.name for e in entries]
        if sweep.tre not in names:
            raise ConfigError(f"[sweep] tre: {sweep.tre!r} is not one of {names}")
        if any(b < 1 for b in sweep.initial_resources) or any(r <= 0 for r in sweep.threshold_ratios):
            raise ConfigError("[sweep] values must be B >= 1 and R > 0")

    try:
        scenario = ScenarioConfig(
            entries=tuple(entries),
            pool_capacity=_int(sc, "pool_capacity", minimum=1),
            lease_quantum=_int(sc, "lease_quantum", 3600, 1),
            setup_cost_per_node=_float(sc, "setup_cost_per_node", 15.743),
            strict_scan=_bool(sc, "strict_scan", False),
            dr2_enabled=_bool(sc, "dr2_enabled", True),
            speedup=_int(sc, "speedup", 100, 1),
        )
    except ValueError as e:
        raise ConfigError(f"[scenario] {e}") from None
    return Config(sc.get("name", "scenario"), models, scenario, sweep, tco)


def load_config(path: str) -> Config:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror}") from None
    return parse_config(text, os.path.dirname(os.path.abspath(path)))
