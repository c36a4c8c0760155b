"""Run configuration for the command-line pipeline.

A run config is a YAML mapping::

    system: {...}                 # inline system (see rescert.system), or
    system_file: path.yaml        # relative to the config file
    net: {width: 400, seed: 0, scale: 1.0}
    collocation: {kind: halton, count: 4096, seed: 0}
    trainer: {ridge: null, ridge_rel: 1.0e-10, weighting: relative,
              max_iters: 30, tol: 1.0e-9, initial_policy: lqr}
    verifier: {max_boxes: 2000000, max_depth: 60, min_box_width: 1.0e-9,
               chunk_size: 2048}
    certify: {alpha: 1.0, rho: 0.1, eps_hi: 0.5, rel_bracket: 0.05,
              max_iters: 20, sublevel: null, rho_pd: 0.1}
    oracle: {rtol: 1.0e-10, stop_radius: 1.0e-5, t_max: 200.0, grid: 21,
             samples: 10000, reference: null}
    output_dir: runs/name

``certify.sublevel`` is ``null`` (whole domain), a positive level ``c`` or
``auto`` (largest level certified separated from the boundary).
``oracle.reference: riccati`` compares HJB checks against the exact LQR value
of the linearization, which is the optimal value for linear-quadratic systems.

Bundled configs are addressed by name (``pendulum_lyap`` etc.).
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import yaml

from .errors import ConfigError
from .system import SystemModel, system_from_mapping
from .verifier import BnbConfig

DEFAULTS: dict[str, dict[str, Any]] = {
    "net": {"width": 400, "seed": 0, "scale": 1.0},
    "collocation": {"kind": "halton", "count": 4096, "seed": 0},
    "trainer": {"ridge": None, "ridge_rel": 1e-10, "weighting": "relative", "max_iters": 30,
                "tol": 1e-9, "initial_policy": "lqr"},
    "verifier": {"max_boxes": 2_000_000, "max_depth": 60, "min_box_width": 1e-9,
                 "chunk_size": 2048},
    "certify": {"alpha": 1.0, "rho": 0.1, "eps_hi": 0.5, "rel_bracket": 0.05, "max_iters": 20,
                "sublevel": None, "rho_pd": 0.1},
    "oracle": {"rtol": 1e-10, "stop_radius": 1e-5, "t_max": 200.0, "grid": 21,
               "samples": 10_000, "reference": None},
}

BUNDLED = ("pendulum_lyap", "pendulum_hjb", "linear2d_lyap", "lqr_di", "scalar_exp")


@dataclass(frozen=True)
class RunConfig:
    name: str
    system: SystemModel
    raw: dict
    net: dict
    collocation: dict
    trainer: dict
    verifier: dict
    certify: dict
    oracle: dict
    output_dir: Path

    @property
    def hash(self) -> str:
        return config_hash(self.raw)

    def bnb(self, workers: int = 1) -> BnbConfig:
        v = self.verifier
        return BnbConfig(max_boxes=int(v["max_boxes"]), max_depth=int(v["max_depth"]),
                         min_box_width=float(v["min_box_width"]), workers=workers,
                         chunk_size=int(v["chunk_size"]))


def config_hash(raw: Mapping) -> str:
    """SHA-256 of the canonical JSON form of a resolved config."""
    text = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("rescert") / "configs" / f"{name}.yaml"))


def _read_yaml(path: Path) -> Any:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}", "config") from exc
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}", "config") from exc


def _section(doc: Mapping, key: str) -> dict:
    given = doc.get(key) or {}
    if not isinstance(given, Mapping):
        raise ConfigError("expected a mapping", key)
    unknown = set(given) - set(DEFAULTS[key])
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", key)
    merged = dict(DEFAULTS[key])
    merged.update(given)
    return merged


def _check_ranges(sections: dict) -> None:
    def positive(sec, key, integer=False):
        v = sections[sec][key]
        ok = isinstance(v, int) if integer else isinstance(v, (int, float))
        if isinstance(v, bool) or not ok or not v > 0:
            raise ConfigError(f"must be a positive {'integer' if integer else 'number'}, "
                              f"got {v!r}", f"{sec}.{key}")

    positive("net", "width", integer=True)
    positive("net", "scale")
    positive("collocation", "count", integer=True)
    positive("certify", "alpha")
    positive("certify", "rho")
    positive("certify", "rho_pd")
    positive("oracle", "rtol")
    positive("oracle", "stop_radius")
    positive("oracle", "t_max")
    positive("oracle", "grid", integer=True)
    positive("oracle", "samples", integer=True)
    positive("verifier", "max_boxes", integer=True)
    positive("verifier", "min_box_width")
    eps_hi = sections["certify"]["eps_hi"]
    if not isinstance(eps_hi, (int, float)) or not 0 < eps_hi < 1:
        raise ConfigError(f"must lie in (0, 1), got {eps_hi!r}", "certify.eps_hi")
    sub = sections["certify"]["sublevel"]
    if sub is not None and sub != "auto" and not (isinstance(sub, (int, float)) and sub > 0):
        raise ConfigError("must be null, 'auto' or a positive level", "certify.sublevel")
    ref = sections["oracle"]["reference"]
    if ref not in (None, "riccati"):
        raise ConfigError("must be null or 'riccati'", "oracle.reference")


def load_run_config(source: str | Path) -> RunConfig:
    """Load a run config from a path or a bundled config name."""
    path = Path(source)
    name = path.stem
    if not path.is_file():
        if str(source) in BUNDLED:
            path = bundled_path(str(source))
        else:
            raise ConfigError(f"config file {source} not found (bundled configs: "
                              f"{', '.join(BUNDLED)})", "config")
    doc = _read_yaml(path)
    if not isinstance(doc, Mapping):
        raise ConfigError("run config must be a mapping", "config")
    known = {"system", "system_file", "output_dir", *DEFAULTS}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", "config")
    if ("system" in doc) == ("system_file" in doc):
        raise ConfigError("give exactly one of 'system' and 'system_file'", "system")
    if "system_file" in doc:
        sys_path = path.parent / str(doc["system_file"])
        if not sys_path.exists():
            raise ConfigError(f"system file {sys_path} not found", "system_file")
        sys_doc = _read_yaml(sys_path)
        if isinstance(sys_doc, Mapping) and "system" in sys_doc:
            sys_doc = sys_doc["system"]
    else:
        sys_doc = doc["system"]
    system = system_from_mapping(sys_doc)
    sections = {key: _section(doc, key) for key in DEFAULTS}
    _check_ranges(sections)
    raw = {"system": copy.deepcopy(dict(sys_doc)), **copy.deepcopy(sections)}
    output_dir = Path(doc.get("output_dir", Path("runs") / name))
    return RunConfig(name=name, system=system, raw=raw, output_dir=output_dir, **sections)
