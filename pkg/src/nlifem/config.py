"""JSON study configuration: parsing, dotted overrides and validation before any compute."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Sequence

from .assembly import QuadSettings
from .geometry import GeometryError
from .kernels import KernelError, make_kernel
from .studies import STUDY_KINDS, TABLES, StudyConfig

_TOP = {"example", "kind", "k", "levels", "delta", "delta_multiples", "coupling", "samples_per_element"}
_SECTIONS = {
    "mesh": {"h", "levels"},
    "quad": {"stiffness_order", "error_order", "load_order"},
    "study": {"delta0", "halvings", "ratios", "h_ratio", "boundary", "flux_data", "fields",
              "seeds", "seed", "max_deltas"},
    "kernel": {"kind", "coefficients", "delta"},
    "custom": {"a", "b", "interfaces", "kernel", "branches", "name"},
    "output": {"dir", "prefix", "svg", "png", "manifest"},
}
OUTPUT_DEFAULTS = {"dir": ".", "prefix": None, "svg": True, "png": False, "manifest": True}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


def parse_value(text: str):
    """JSON literal if it parses, else ``2^-e`` as a float, else the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    if text.startswith("2^"):
        try:
            return 2.0 ** int(text[2:])
        except ValueError:
            pass
    return text


def apply_overrides(raw: dict, overrides: Sequence[str]) -> dict:
    """Apply ``section.key=value`` (or ``key=value``) strings to a raw config dict."""
    out = json.loads(json.dumps(raw))
    for item in overrides:
        key, sep, val = item.lstrip("-").partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not of the form --section.key=value")
        parts = key.split(".")
        if len(parts) > 2:
            raise ConfigError(f"override key {key!r} nests too deeply")
        node = out
        if len(parts) == 2:
            node = out.setdefault(parts[0], {})
            if not isinstance(node, dict):
                raise ConfigError(f"{parts[0]!r} is not a section")
        node[parts[-1]] = parse_value(val)
    return out


def _check_keys(raw: dict) -> None:
    for key, val in raw.items():
        if key in _SECTIONS:
            if not isinstance(val, dict):
                raise ConfigError(f"section {key!r} must be an object")
            for sub in val:
                if sub not in _SECTIONS[key]:
                    raise ConfigError(f"unknown key {key}.{sub!r}; allowed: {sorted(_SECTIONS[key])}")
        elif key not in _TOP:
            raise ConfigError(f"unknown key {key!r}; allowed: {sorted(_TOP | set(_SECTIONS))}")


def _level_of(h: float) -> int:
    e = -math.log2(h) if h > 0 else math.nan
    if not math.isfinite(e) or abs(e - round(e)) > 1e-12:
        raise ConfigError(f"mesh.h = {h!r} is not of the form 2^-e")
    return int(round(e))


def _commensurate(delta: float, h: float) -> bool:
    q = delta / h
    return abs(q - round(q)) <= 1e-9 * max(1.0, q) and round(q) >= 1


def _validate(cfg: StudyConfig, min_levels: int = 2) -> None:
    if cfg.kind not in STUDY_KINDS:
        raise ConfigError(f"kind {cfg.kind!r} not in {STUDY_KINDS}")
    if not isinstance(cfg.k, int) or cfg.k < 1:
        raise ConfigError(f"k must be a positive integer, got {cfg.k!r}")
    if cfg.coupling not in ("identified", "decoupled"):
        raise ConfigError(f"coupling {cfg.coupling!r} must be 'identified' or 'decoupled'")
    try:
        ex = cfg.problem()
        make_kernel(ex.kernel, ex.kernel_params)
    except (KeyError, ValueError, TypeError, KernelError) as err:
        raise ConfigError(str(err).strip("'\"")) from None
    n = ex.nfields
    for name in ("delta", "delta_multiples"):
        val = getattr(cfg, name)
        if val is not None and (not isinstance(val, list) or len(val) != n):
            raise ConfigError(f"{name} must list {n} values for example {ex.name!r}")
    if cfg.kind in ("fixed_delta", "coupled"):
        lv = cfg.levels
        if not isinstance(lv, list) or len(lv) < min_levels or any(not isinstance(e, int) for e in lv):
            raise ConfigError(f"levels must be a list of at least {min_levels} integers")
        if any(b <= a for a, b in zip(lv, lv[1:])):
            raise ConfigError(f"levels {lv} must be strictly increasing")
        if cfg.kind == "coupled" and cfg.delta_multiples is None:
            raise ConfigError("coupled studies need delta_multiples")
        if cfg.delta_multiples is not None:
            if any(not isinstance(m, (int, float)) or float(m) != int(m) or m < 1 for m in cfg.delta_multiples):
                raise ConfigError(f"delta_multiples {cfg.delta_multiples} must be positive integers")
        hmin = 2.0 ** -max(lv)
        for d in cfg.deltas_for(hmin):
            if not _commensurate(d, hmin):
                raise ConfigError(f"delta {d!r} is not an integer multiple of the smallest h = 2^-{max(lv)}")
        # region checks (ordering, zone containment) for the coarsest level
        try:
            ex.regions(cfg.deltas_for(2.0 ** -min(lv)))
        except GeometryError as err:
            raise ConfigError(f"invalid horizons: {err}") from None
    if cfg.boundary not in ("corrected", "plain"):
        raise ConfigError(f"study.boundary {cfg.boundary!r} must be 'corrected' or 'plain'")
    if cfg.flux_data not in ("layer", "literal", "normalized"):
        raise ConfigError(f"study.flux_data {cfg.flux_data!r} not recognised")
    if cfg.fields not in ("branches", "linear", "constant"):
        raise ConfigError(f"study.fields {cfg.fields!r} not recognised")
    if cfg.kind in ("local_limit", "flux_consistency"):
        if n < 2 and cfg.kind == "flux_consistency":
            raise ConfigError("flux consistency needs an interface")
        if not (isinstance(cfg.halvings, int) and cfg.halvings >= 1):
            raise ConfigError("study.halvings must be a positive integer")
        if len(cfg.sweep_ratios()) != n:
            raise ConfigError(f"study.ratios must list {n} values")


def build_config(raw: dict, min_levels: int = 2) -> tuple:
    """Validated (StudyConfig, output options) from a raw nested dict.

    ``min_levels=1`` admits single-level configs (used by ``solve``).
    """
    if not isinstance(raw, dict):
        raise ConfigError("top level of the config must be an object")
    _check_keys(raw)
    kw = {k: raw[k] for k in _TOP if k in raw}
    mesh = raw.get("mesh", {})
    if "h" in mesh and "levels" in mesh:
        raise ConfigError("mesh: give either h or levels, not both")
    if "h" in mesh:
        kw["levels"] = [_level_of(float(mesh["h"]))]
    if "levels" in mesh:
        kw["levels"] = mesh["levels"]
    kw.update(raw.get("study", {}))
    if "quad" in raw:
        try:
            kw["quad"] = QuadSettings(**raw["quad"])
        except TypeError as err:
            raise ConfigError(f"quad: {err}") from None
    if "custom" in raw:
        kw["custom"] = dict(raw["custom"])
    kern = dict(raw.get("kernel", {}))
    if "delta" in kern:
        d = kern.pop("delta")
        if "delta" not in kw and "delta_multiples" not in kw:
            kw["_uniform_delta"] = float(d)
    if kern:
        kw["kernel"] = kern
    uniform = kw.pop("_uniform_delta", None)
    try:
        cfg = StudyConfig(**kw)
    except TypeError as err:
        raise ConfigError(str(err)) from None
    if uniform is not None:
        try:
            cfg.delta = [uniform] * cfg.problem().nfields
        except (KeyError, ValueError) as err:
            raise ConfigError(str(err).strip("'\"")) from None
    _validate(cfg, min_levels=min_levels)
    out = dict(OUTPUT_DEFAULTS)
    out.update(raw.get("output", {}))
    return cfg, out


def load_raw(path) -> dict:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: line {err.lineno}, column {err.colno}: {err.msg}") from None


def parse_config(path, overrides: Sequence[str] = ()) -> StudyConfig:
    """Read, override and validate a JSON study config."""
    return build_config(apply_overrides(load_raw(path), overrides))[0]


def table_raw(name: str, k: int) -> dict:
    if name not in TABLES:
        raise ConfigError(f"unknown table {name!r}; choose from {sorted(TABLES)}")
    return {**TABLES[name], "k": k}
