"""Experiment configuration: a YAML file with ``scenario``, ``run`` and ``output`` blocks.

Unknown keys are rejected, missing required keys are reported by their dotted
path, and ``--set key=value`` style overrides are applied to the raw mapping
before validation.  Complex matrix entries may be written as numbers or as
strings such as ``"0.5j"``; they are emitted in Python's round-trip ``repr``.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Optional, Tuple

import numpy as np
import yaml

from .errors import ConfigError, DomainError
from .io import format_complex
from .scenario import (
    DeterministicTarget,
    FluctuatingTarget,
    REFERENCE_RX,
    Scenario,
    TEXTURE_SHARING,
    build_steering_matrix,
    build_toeplitz_cov,
)
from .specfun import TextureParams

__all__ = [
    "ScenarioConfig",
    "RunConfig",
    "OutputConfig",
    "ExperimentConfig",
    "load_config",
    "read_raw",
    "apply_overrides",
    "preset",
]

THRESHOLD_MODES = ("analytic", "mc")
FORMATS = ("csv", "jsonl")


def _complex(v, key):
    try:
        return complex(v.replace(" ", "")) if isinstance(v, str) else complex(v)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: cannot parse {v!r} as a complex number", key) from exc


def _take(d: dict, key: str, path: str, required=True, default=None):
    if key in d:
        return d.pop(key)
    if required:
        raise ConfigError(f"missing required key '{path}.{key}'", f"{path}.{key}")
    return default


def _no_extra(d: dict, path: str):
    if d:
        k = sorted(d)[0]
        raise ConfigError(f"unknown key '{path}.{k}'", f"{path}.{k}")


def _mapping(v, path):
    if not isinstance(v, dict):
        raise ConfigError(f"'{path}' must be a mapping", path)
    return dict(v)


def _int(v, path):
    if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
        raise ConfigError(f"'{path}' must be an integer", path)
    return int(v)


def _float(v, path):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"'{path}' must be a number", path)
    return float(v)


@dataclass(frozen=True)
class ScenarioConfig:
    N: int
    r: int
    K: int
    alpha: float
    beta: float
    target: str = "deterministic"
    x: Optional[Tuple[complex, ...]] = None
    Rx: Optional[Tuple[Tuple[complex, ...], ...]] = None
    one_lag: float = 0.9
    kappa0: float = 1.0
    texture_sharing: str = "per-cell-iid"

    @classmethod
    def from_dict(cls, raw) -> "ScenarioConfig":
        d = _mapping(raw, "scenario")
        N = _int(_take(d, "N", "scenario"), "scenario.N")
        r = _int(_take(d, "r", "scenario"), "scenario.r")
        K = _int(_take(d, "K", "scenario"), "scenario.K")
        tex = _mapping(_take(d, "texture", "scenario"), "scenario.texture")
        alpha = _float(_take(tex, "alpha", "scenario.texture"), "scenario.texture.alpha")
        beta = _float(_take(tex, "beta", "scenario.texture"), "scenario.texture.beta")
        _no_extra(tex, "scenario.texture")
        tgt = _mapping(_take(d, "target", "scenario", False, {"kind": "deterministic"}), "scenario.target")
        kind = _take(tgt, "kind", "scenario.target")
        x = Rx = None
        if kind == "deterministic":
            xs = _take(tgt, "x", "scenario.target", False)
            if xs is not None:
                x = tuple(_complex(v, "scenario.target.x") for v in xs)
        elif kind == "fluctuating":
            rows = _take(tgt, "Rx", "scenario.target", False)
            if rows is not None:
                Rx = tuple(tuple(_complex(v, "scenario.target.Rx") for v in row) for row in rows)
        else:
            raise ConfigError(f"scenario.target.kind must be deterministic or fluctuating, got {kind!r}", "scenario.target.kind")
        _no_extra(tgt, "scenario.target")
        one_lag = _float(_take(d, "one_lag", "scenario", False, 0.9), "scenario.one_lag")
        kappa0 = _float(_take(d, "kappa0", "scenario", False, 1.0), "scenario.kappa0")
        sharing = _take(d, "texture_sharing", "scenario", False, "per-cell-iid")
        if sharing not in TEXTURE_SHARING:
            raise ConfigError(f"scenario.texture_sharing must be one of {TEXTURE_SHARING}", "scenario.texture_sharing")
        _no_extra(d, "scenario")
        cfg = cls(N, r, K, alpha, beta, kind, x, Rx, one_lag, kappa0, sharing)
        cfg.build()  # surfaces dimension / covariance problems at load time
        return cfg

    def to_dict(self) -> dict:
        tgt: dict = {"kind": self.target}
        if self.x is not None:
            tgt["x"] = [format_complex(v) for v in self.x]
        if self.Rx is not None:
            tgt["Rx"] = [[format_complex(v) for v in row] for row in self.Rx]
        return {
            "N": self.N,
            "r": self.r,
            "K": self.K,
            "texture": {"alpha": self.alpha, "beta": self.beta},
            "target": tgt,
            "one_lag": self.one_lag,
            "kappa0": self.kappa0,
            "texture_sharing": self.texture_sharing,
        }

    @property
    def texture(self) -> TextureParams:
        return TextureParams(self.alpha, self.beta)

    def build(self) -> Scenario:
        try:
            A = build_steering_matrix(self.N, self.r)
            R = build_toeplitz_cov(self.N, self.one_lag, 1.0)
            if self.target == "deterministic":
                x = np.ones(self.r) / np.sqrt(self.r) if self.x is None else np.array(self.x)
                tgt = DeterministicTarget(x)
            else:
                tgt = FluctuatingTarget(REFERENCE_RX if self.Rx is None else np.array(self.Rx))
            return Scenario(A, R, self.K, self.texture, tgt, self.kappa0, self.texture_sharing,
                            meta={"one_lag": self.one_lag})
        except DomainError as exc:
            raise ConfigError(f"invalid scenario: {exc}", "scenario") from exc


@dataclass(frozen=True)
class RunConfig:
    detectors: Tuple[str, ...] = ("ngamd", "asd", "glrt1s")
    snr_db: Tuple[float, ...] = (-5.0, 0.0, 5.0, 10.0, 15.0, 20.0)
    pfa_target: float = 1e-2
    trials: int = 10_000
    calibration_trials: int = 100_000
    seed: int = 20240607
    threshold_mode: str = "analytic"
    textures: Tuple[Tuple[float, float], ...] = ((2.0, 0.5), (5.0, 2.0))
    powers: Tuple[float, ...] = (0.1, 1.0, 10.0)
    workers: int = 1

    @classmethod
    def from_dict(cls, raw) -> "RunConfig":
        d = _mapping(raw or {}, "run")
        base = cls()
        dets = tuple(_take(d, "detectors", "run", False, base.detectors))
        for det in dets:
            if det not in ("ngamd", "asd", "glrt1s"):
                raise ConfigError(f"unknown detector {det!r}", "run.detectors")
        snr = tuple(_float(v, "run.snr_db") for v in _take(d, "snr_db", "run", False, base.snr_db))
        pfa = _float(_take(d, "pfa_target", "run", False, base.pfa_target), "run.pfa_target")
        if not 0 < pfa < 1:
            raise ConfigError("run.pfa_target must lie in (0, 1)", "run.pfa_target")
        trials = _int(_take(d, "trials", "run", False, base.trials), "run.trials")
        cal = _int(_take(d, "calibration_trials", "run", False, base.calibration_trials), "run.calibration_trials")
        seed = _int(_take(d, "seed", "run", False, base.seed), "run.seed")
        mode = _take(d, "threshold_mode", "run", False, base.threshold_mode)
        if mode not in THRESHOLD_MODES:
            raise ConfigError(f"run.threshold_mode must be one of {THRESHOLD_MODES}", "run.threshold_mode")
        tex = tuple(
            (_float(a, "run.textures"), _float(b, "run.textures"))
            for a, b in _take(d, "textures", "run", False, base.textures)
        )
        powers = tuple(_float(v, "run.powers") for v in _take(d, "powers", "run", False, base.powers))
        workers = _int(_take(d, "workers", "run", False, base.workers), "run.workers")
        _no_extra(d, "run")
        return cls(dets, snr, pfa, trials, cal, seed, mode, tex, powers, workers)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["detectors"] = list(self.detectors)
        out["snr_db"] = list(self.snr_db)
        out["textures"] = [list(t) for t in self.textures]
        out["powers"] = list(self.powers)
        return out


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    formats: Tuple[str, ...] = ("csv",)

    @classmethod
    def from_dict(cls, raw) -> "OutputConfig":
        d = _mapping(raw or {}, "output")
        directory = str(_take(d, "directory", "output", False, cls.directory))
        formats = tuple(_take(d, "formats", "output", False, cls.formats))
        for f in formats:
            if f not in FORMATS:
                raise ConfigError(f"output format must be one of {FORMATS}", "output.formats")
        _no_extra(d, "output")
        return cls(directory, formats)

    def to_dict(self) -> dict:
        return {"directory": self.directory, "formats": list(self.formats)}


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig
    run: RunConfig = field(default_factory=RunConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    @classmethod
    def from_dict(cls, raw) -> "ExperimentConfig":
        d = _mapping(raw, "config")
        if "scenario" not in d:
            raise ConfigError("missing required block 'scenario'", "scenario")
        sc = ScenarioConfig.from_dict(d.pop("scenario"))
        run = RunConfig.from_dict(d.pop("run", None))
        out = OutputConfig.from_dict(d.pop("output", None))
        if d:
            k = sorted(d)[0]
            raise ConfigError(f"unknown top-level key '{k}'", k)
        return cls(sc, run, out)

    def to_dict(self) -> dict:
        return {"scenario": self.scenario.to_dict(), "run": self.run.to_dict(), "output": self.output.to_dict()}

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def apply_overrides(raw: dict, overrides) -> dict:
    """Set dotted keys (``"run.trials=1000"``) on a copy of a raw config mapping."""
    out = copy.deepcopy(raw)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        node = out
        for p in parts[:-1]:
            nxt = node.setdefault(p, {})
            if not isinstance(nxt, dict):
                raise ConfigError(f"cannot descend into non-mapping at '{p}'", key)
            node = nxt
        node[parts[-1]] = yaml.safe_load(text)
    return out


def read_raw(path) -> dict:
    """Parse a YAML config file into a raw mapping (no validation)."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}", "config") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}", "config") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a mapping", "config")
    return raw


def load_config(path, overrides=()) -> ExperimentConfig:
    return ExperimentConfig.from_dict(apply_overrides(read_raw(path), overrides))


REFERENCE_SCENARIO = {"N": 6, "r": 2, "K": 16, "one_lag": 0.9, "texture": {"alpha": 2.0, "beta": 0.5}}

_FIGURES = {
    "fig1": ("deterministic", ("ngamd",)),
    "fig2": ("fluctuating", ("ngamd",)),
    "fig3": ("deterministic", ("ngamd", "glrt1s", "asd")),
    "fig4": ("fluctuating", ("ngamd", "glrt1s", "asd")),
}


def preset(name: str) -> dict:
    """Raw config mapping for one of the reference figures."""
    if name not in _FIGURES:
        raise ConfigError(f"unknown figure preset {name!r}; choose from {sorted(_FIGURES)}", "figure")
    kind, dets = _FIGURES[name]
    target = {"kind": kind}
    if kind == "fluctuating":
        target["Rx"] = [[format_complex(complex(v)) for v in row] for row in REFERENCE_RX]
    return {
        "scenario": {**copy.deepcopy(REFERENCE_SCENARIO), "target": target},
        "run": {
            "detectors": list(dets),
            "pfa_target": 1e-2,
            "threshold_mode": "analytic" if dets == ("ngamd",) else "mc",
        },
        "output": {"directory": "out", "formats": ["csv"]},
    }
