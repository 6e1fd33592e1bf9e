"""Experiment configuration files.

A configuration is a JSON object::

    {
      "system": "sys_b",            # bundled name, path, or inline map
      "seed": 0,
      "search_config": {...},
      "periods": [1, 2, 3],
      "primes": [2, 3, 5, 7],
      "sdm": {"z0": [0, 0], "mode": "max", "n_list": [1, 2, 3]},
      "vanish": {"z0": [0, 0], "R": 0.1, "epsilon": 1.0},
      "output": {"path": "out.json", "format": "json"}
    }

Every block is optional.  Unknown keys are rejected with the line on which
they occur.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .action import SearchConfig
from .errors import ConfigError
from .symmap import FactorizedMap

__all__ = ["ExperimentConfig", "load_config", "load_system", "bundled_systems", "BLOCK_DEFAULTS"]

# defaults per block
BLOCK_DEFAULTS = {
    "map": {"points": None, "samples": 1000},
    "maslov": {"n_max": 12, "orbit": None, "period": 1},
    "sdm": {"z0": None, "mode": "max", "n_list": [1, 2, 3, 4, 5, 6, 7, 8]},
    "vanish": {"z0": None, "R": 0.1, "epsilon": 1.0, "n": None, "n_prime": None, "r": None,
               "sample_count": 4096, "boundary_count": 4096, "t_steps": 11, "safety": 0.9},
    "spectrum": {"window": None, "reference": None, "accumulation": None},
    "conley": {"experiment": "auto", "dichotomy_primes": None},
    "verify": {"periods": [1, 2, 3], "n_max": 12, "samples": 1000},
    "plot": {"input": None, "reference": None, "title": ""},
    "output": {"path": None, "format": "json", "plot": None},
}
_TOP = {"system", "seed", "search_config", "periods", "primes"} | set(BLOCK_DEFAULTS)
_TOLERANCE_KEYS = {"R", "epsilon", "r", "newton_tol", "merge_tol", "tol_null", "safety"}


def bundled_systems() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("sympal").joinpath("data").iterdir()
                  if p.name.endswith(".json"))


def _line_of(text: str | None, key: str, after: int = 0) -> str:
    if not text:
        return ""
    m = re.compile(r'"' + re.escape(key) + r'"\s*:').search(text, after)
    return f" (line {text.count(chr(10), 0, m.start()) + 1})" if m else ""


def _parse_json(text: str, source: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def load_system(ref, base_dir: Path | None = None) -> FactorizedMap:
    """Resolve a system reference.

    ``ref`` may be a mapping (inline system), a path to a JSON file (relative
    paths are tried against ``base_dir`` and the working directory), or the
    name of a bundled system such as ``"sys_b"`` / ``"sys_b.json"``.
    """
    if isinstance(ref, FactorizedMap):
        return ref
    if isinstance(ref, dict):
        return FactorizedMap.from_dict(ref)
    if not isinstance(ref, (str, Path)):
        raise ConfigError("system must be a name, a path or an inline object")
    ref = str(ref)
    candidates = [Path(ref)]
    if base_dir is not None and not Path(ref).is_absolute():
        candidates.insert(0, Path(base_dir) / ref)
    for cand in candidates:
        if cand.is_file():
            data = _parse_json(cand.read_text(), str(cand))
            return FactorizedMap.from_dict(data)
    name = Path(ref).name
    name = name[:-5] if name.endswith(".json") else name
    if name in bundled_systems():
        text = resources.files("sympal").joinpath("data", name + ".json").read_text()
        return FactorizedMap.from_dict(_parse_json(text, name))
    raise ConfigError(f"system {ref!r} is neither a file nor a bundled system {bundled_systems()}")


def _int_list(value, key: str, line: str) -> list[int]:
    if isinstance(value, int) and not isinstance(value, bool):
        value = [value]
    if not isinstance(value, list) or not value or not all(
            isinstance(v, int) and not isinstance(v, bool) and v >= 1 for v in value):
        raise ConfigError(f"{key}{line}: expected a non-empty list of positive integers")
    return value


def _check_block(name: str, data, text: str | None) -> dict:
    defaults = BLOCK_DEFAULTS[name]
    start = 0
    if text:
        m = re.search(r'"' + name + r'"\s*:', text)
        start = m.end() if m else 0
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{name}{_line_of(text, name)}: expected an object")
    unknown = sorted(set(data) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown key {name}.{unknown[0]}{_line_of(text, unknown[0], start)}; "
                          f"allowed: {sorted(defaults)}")
    out = dict(defaults)
    out.update(data)
    for key in _TOLERANCE_KEYS & set(out):
        v = out[key]
        if v is not None and (isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0):
            raise ConfigError(f"{name}.{key}{_line_of(text, key, start)}: must be a positive number")
    for key in ("n_list", "periods"):
        if key in out:
            out[key] = _int_list(out[key], f"{name}.{key}", _line_of(text, key, start))
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment configuration."""

    system: FactorizedMap
    seed: int = 0
    search_config: SearchConfig = field(default_factory=SearchConfig)
    periods: tuple = (1, 2, 3)
    primes: tuple = (2, 3, 5, 7)
    blocks: dict = field(default_factory=dict)
    system_ref: str = ""

    def block(self, name: str) -> dict:
        return dict(self.blocks.get(name) or BLOCK_DEFAULTS[name])

    def with_overrides(self, **kw) -> "ExperimentConfig":
        blocks = {k: dict(v) for k, v in self.blocks.items()}
        for name, upd in kw.pop("blocks", {}).items():
            blocks.setdefault(name, dict(BLOCK_DEFAULTS[name])).update(upd)
        cfg = replace(self, blocks=blocks, **kw)
        if "seed" in kw:
            cfg = replace(cfg, search_config=replace(cfg.search_config, seed=kw["seed"]))
        return cfg

    @classmethod
    def from_dict(cls, data: dict, text: str | None = None, base_dir: Path | None = None,
                  system=None) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        unknown = sorted(set(data) - _TOP)
        if unknown:
            raise ConfigError(f"unknown key {unknown[0]!r}{_line_of(text, unknown[0])}; allowed: {sorted(_TOP)}")
        ref = system if system is not None else data.get("system")
        if ref is None:
            raise ConfigError("no system given (set 'system' or pass --system)")
        fmap = load_system(ref, base_dir)
        seed = data.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ConfigError(f"seed{_line_of(text, 'seed')}: must be a non-negative integer")
        search = dict(data.get("search_config") or {})
        search.setdefault("seed", seed)
        # the default grid is per dimension; keep d = 2 searches at 4^4 starts
        search.setdefault("grid_per_dim", 8 if fmap.d == 1 else 4)
        try:
            search_cfg = SearchConfig.from_dict(search)
        except TypeError as exc:
            raise ConfigError(f"search_config{_line_of(text, 'search_config')}: {exc}") from exc
        except ConfigError as exc:
            raise ConfigError(f"{exc}{_line_of(text, 'search_config')}") from exc
        periods = _int_list(data.get("periods", [1, 2, 3]), "periods", _line_of(text, "periods"))
        primes = _int_list(data.get("primes", [2, 3, 5, 7]), "primes", _line_of(text, "primes"))
        blocks = {name: _check_block(name, data.get(name), text) for name in BLOCK_DEFAULTS}
        fmt = blocks["output"]["format"]
        if fmt not in ("json", "csv"):
            raise ConfigError(f"output.format{_line_of(text, 'format')}: must be 'json' or 'csv'")
        if blocks["sdm"]["mode"] not in ("max", "min"):
            raise ConfigError(f"sdm.mode{_line_of(text, 'mode')}: must be 'max' or 'min'")
        if blocks["conley"]["experiment"] not in ("auto", "single", "pair"):
            raise ConfigError("conley.experiment must be 'auto', 'single' or 'pair'")
        label = ref if isinstance(ref, str) else fmap.label
        return cls(fmap, seed, search_cfg, tuple(periods), tuple(primes), blocks, str(label))


def load_config(path=None, system=None) -> ExperimentConfig:
    """Read and validate a configuration file (or build one from ``system`` alone)."""
    if path is None:
        return ExperimentConfig.from_dict({}, system=system)
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    data = _parse_json(text, str(path))
    return ExperimentConfig.from_dict(data, text, path.parent, system=system)
