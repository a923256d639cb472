"""INI run configurations.

Sections: ``[model]`` (see :func:`levy_malliavin.model.validate_model`),
``[run]`` (``master_seed`` or ``seed``, ``out``, ``n_paths``, ``n_inner``, ``steps``) and
``[tolerances]`` (``se_multiplier``, relative tolerances).  Command-specific
sections ``[simulate]``, ``[doleans]``, ``[chaos]``, ``[clark_ocone]`` and
``[max]`` are optional; missing keys take documented defaults.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, ModelError
from .model import LevyModel, validate_model

REQUIRED_SECTIONS = ("model", "run")

DEFAULTS = {
    "run": {"seed": None, "out": "out", "n_paths": "10000", "n_inner": "200", "steps": "256"},
    "tolerances": {"se_multiplier": "3", "energy_rtol": "0.05", "tail_rtol": "0.10", "residual_rtol": "0.05",
                   "exact_rtol": "1e-10", "nested_fraction": "0.95"},
    "simulate": {"n_paths": "10", "steps": "64", "moment_paths": "100000"},
    "doleans": {"h": "1.0", "gbar": "0.0", "checkpoints": "0.2,0.4,0.6,0.8,1.0", "n_paths": "100000",
                "steps": "256"},
    "chaos": {"h": "1.35", "gbar": "1.0", "max_order": "4", "n_paths": "100000", "steps": "1024",
              "orth_paths": "100000", "orth_steps": "1024", "orth_length": "3"},
    "clark_ocone": {"functional": "xt2", "ladder": "64,128,256,512", "n_paths": "10000", "check_paths": "20",
                    "check_steps": "16", "check_times": "5", "table_paths": "200000"},
    "max": {"table_paths": "1000000", "ladder": "128,256,512,1024", "n_paths": "10000",
            "reference_paths": "1000000", "reference_steps": "100", "sy_paths": "200", "sy_inner": "2000",
            "sy_steps": "256", "sy_table_paths": "200000"},
}


@dataclass
class RunConfig:
    model: LevyModel
    sections: dict[str, dict[str, str]]
    path: Path | None = None
    overrides: dict[str, str] = field(default_factory=dict)

    def raw(self, section: str, key: str) -> str:
        sec = self.sections.get(section, {})
        if key in sec:
            return sec[key]
        default = DEFAULTS.get(section, {}).get(key)
        if default is None:
            raise ConfigError(f"missing key '{section}.{key}'", f"{section}.{key}")
        return default

    def get_int(self, section: str, key: str) -> int:
        text = self.raw(section, key)
        try:
            value = int(text)
        except ValueError:
            raise ConfigError(f"key '{section}.{key}' must be an integer, got {text!r}", f"{section}.{key}") from None
        if value < 0:
            raise ConfigError(f"key '{section}.{key}' must be >= 0, got {value}", f"{section}.{key}")
        return value

    def get_float(self, section: str, key: str) -> float:
        text = self.raw(section, key)
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"key '{section}.{key}' must be a number, got {text!r}", f"{section}.{key}") from None

    def get_floats(self, section: str, key: str) -> list[float]:
        text = self.raw(section, key)
        try:
            return [float(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"key '{section}.{key}' must be a comma list of numbers", f"{section}.{key}") from None

    def get_ints(self, section: str, key: str) -> list[int]:
        text = self.raw(section, key)
        try:
            values = [int(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"key '{section}.{key}' must be a comma list of integers", f"{section}.{key}") from None
        if not values or any(v < 1 for v in values):
            raise ConfigError(f"key '{section}.{key}' needs positive integers", f"{section}.{key}")
        return values

    def get_str(self, section: str, key: str) -> str:
        return self.raw(section, key).strip()

    @property
    def seed(self) -> int:
        if "seed" in self.overrides:
            return int(self.overrides["seed"])
        run = self.sections.get("run", {})
        key = "master_seed" if "master_seed" in run else "seed"
        text = run.get(key)
        if text is None:
            raise ConfigError("missing key 'run.master_seed' (seeds must be explicit)", "run.master_seed")
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"key 'run.{key}' must be an integer, got {text!r}", f"run.{key}") from None

    @property
    def out_dir(self) -> Path:
        return Path(self.overrides.get("out") or self.raw("run", "out"))


def parse_config(text: str, path: Path | None = None, overrides: dict | None = None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys such as "T" are case sensitive
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        key = getattr(exc, "option", None) or getattr(exc, "section", None)
        raise ConfigError(f"malformed config: {exc}", key) from None
    for name in REQUIRED_SECTIONS:
        if not parser.has_section(name):
            raise ConfigError(f"missing section [{name}]", name)
    sections = {name: dict(parser.items(name)) for name in parser.sections()}
    try:
        model = validate_model(sections["model"])
    except ModelError as exc:
        raise ConfigError(f"invalid [model]: {exc}", _model_key(str(exc))) from None
    cfg = RunConfig(model, sections, path, dict(overrides or {}))
    cfg.seed  # fail early on a missing or malformed seed
    return cfg


def _model_key(message: str) -> str:
    for key in ("jump.intensity", "jump.law", "jump.z1", "jump.p1", "jump.z2", "jump.p2", "jump.mean", "jump.std",
                "jump.low", "jump.high", "sigma", "mu", "T"):
        if f"'{key}'" in message or message.startswith(key):
            return f"model.{key}"
    if "sigma" in message:
        return "model.sigma"
    if "intensity" in message:
        return "model.jump.intensity"
    if "jump" in message or "probabilit" in message:
        return "model.jump.law"
    return "model"


def load_config(path, overrides: dict | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}", "--config") from None
    return parse_config(text, path, overrides)
