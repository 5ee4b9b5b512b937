"""Run configuration: plain key-value text with sections (INI style).

Precedence is preset < config file < command-line flags.  Unknown sections
or keys are rejected, and every run echoes its fully resolved configuration
into the output JSON so a run can be reproduced from its own artifacts.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "ConfigError",
    "RunConfig",
    "COMMANDS",
    "PRESETS",
    "load_config_file",
    "build_run_config",
    "parse_vector",
    "parse_matrix",
    "parse_int_list",
]

COMMANDS = ("exponent", "drift", "expansion", "distortion", "properties",
            "cutoff", "horofunction")


class ConfigError(ValueError):
    """Raised for malformed configuration (maps to exit code 2)."""


_GENERATOR_KEYS = {
    "mode", "form", "activation", "dim",
    "weight", "weight_scale", "weight_lo", "weight_hi", "weight_capped",
    "bias", "bias_value", "bias_lo", "bias_hi",
    "w", "w2", "bias_value2", "p",
}

# Allowed sections and keys per command.
_SCHEMAS: dict[str, dict[str, set[str]]] = {
    "exponent": {"generator": _GENERATOR_KEYS,
                 "exponent": {"n", "x0", "metric", "metric_p"}},
    "drift": {"generator": _GENERATOR_KEYS,
              "drift": {"n", "x0", "order"}},
    "expansion": {"generator": _GENERATOR_KEYS,
                  "expansion": {"n", "pairs", "lo", "hi", "pair_seed"}},
    "distortion": {"generator": _GENERATOR_KEYS,
                   "distortion": {"n", "points", "lo", "hi", "point_seed"}},
    "properties": {"layer": {"form", "activation", "dim",
                             "weight", "weight_scale", "weight_lo", "weight_hi",
                             "weight_capped", "w", "bias_value"},
                   "properties": {"checks", "expect", "trials", "tolerance",
                                  "metric", "metric_p", "criterion_b"}},
    "cutoff": {"cutoff": {"widths", "activation", "scaling", "ensemble",
                          "max_depth", "precision", "epsilon", "x0"}},
    "horofunction": {"horofunction": {"metric", "metric_p", "x", "basepoint",
                                      "direction", "ns"}},
}

_RUN_KEYS = {"seed", "out", "threads"}

PRESETS: dict[str, dict] = {
    # Reference cut-off experiments: tanh at widths 1 and 2, and the
    # smooth-relu variant at width 1, all at the published precision and
    # ensemble size.
    "paper-fig1": {
        "command": "cutoff",
        "seed": "1234",
        "sections": {"cutoff": {
            "widths": "1,2", "activation": "tanh", "scaling": "heuristic",
            "ensemble": "100000", "max_depth": "30", "precision": "0.001",
        }},
    },
    "paper-fig3": {
        "command": "cutoff",
        "seed": "1234",
        "sections": {"cutoff": {
            "widths": "1", "activation": "silu", "scaling": "heuristic",
            "ensemble": "100000", "max_depth": "30", "precision": "0.001",
        }},
    },
}
PRESETS["paper-fig2"] = PRESETS["paper-fig1"]


@dataclass
class RunConfig:
    """A fully resolved run: command, run-level values, and string sections."""

    command: str
    seed: int = 0
    out: Path = Path("out")
    threads: int = 1
    sections: dict = field(default_factory=dict)

    def get(self, section: str, key: str, default: str | None = None) -> str | None:
        return self.sections.get(section, {}).get(key, default)

    def require(self, section: str, key: str) -> str:
        value = self.get(section, key)
        if value is None:
            raise ConfigError(f"missing required key '{key}' in section [{section}]")
        return value

    def echo(self) -> dict:
        return {
            "command": self.command,
            "seed": self.seed,
            "out": str(self.out),
            "threads": self.threads,
            "sections": {s: dict(kv) for s, kv in sorted(self.sections.items())},
        }

    @classmethod
    def from_echo(cls, echoed: dict) -> "RunConfig":
        cfg = cls(command=echoed["command"], seed=int(echoed["seed"]),
                  out=Path(echoed["out"]), threads=int(echoed["threads"]),
                  sections={s: dict(kv) for s, kv in echoed["sections"].items()})
        _validate_sections(cfg.command, cfg.sections)
        return cfg


def _validate_sections(command: str, sections: dict) -> None:
    if command not in _SCHEMAS:
        raise ConfigError(f"unknown command {command!r}")
    schema = _SCHEMAS[command]
    for section, kv in sections.items():
        if section == "run":
            unknown = set(kv) - _RUN_KEYS
            if unknown:
                raise ConfigError(f"unknown key(s) in [run]: {sorted(unknown)}")
            continue
        if section not in schema:
            raise ConfigError(f"section [{section}] is not valid for "
                              f"command '{command}'")
        unknown = set(kv) - schema[section]
        if unknown:
            raise ConfigError(f"unknown key(s) in [{section}]: {sorted(unknown)}")


def load_config_file(path: str | Path) -> dict:
    """Read an INI file into {section: {key: value}} without validation."""
    parser = configparser.ConfigParser()
    parser.optionxform = str.lower
    try:
        text = Path(path).read_text()
        parser.read_file(io.StringIO(text), source=str(path))
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from exc
    return {s: dict(parser.items(s)) for s in parser.sections()}


def build_run_config(command: str, config_path: str | None = None,
                     preset: str | None = None, seed: int | None = None,
                     out: str | None = None, threads: int | None = None,
                     env_threads: str | None = None) -> RunConfig:
    """Merge preset, config file, and flags into a validated RunConfig."""
    sections: dict[str, dict[str, str]] = {}
    run_seed, run_out, run_threads = 0, "out", 1

    # The environment only supplies the default thread count; config files
    # and flags both override it.
    if env_threads is not None:
        try:
            run_threads = int(env_threads)
        except ValueError as exc:
            raise ConfigError(f"bad thread count in environment: {env_threads!r}") from exc

    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; "
                              f"known: {sorted(PRESETS)}")
        p = PRESETS[preset]
        if p["command"] != command:
            raise ConfigError(f"preset {preset!r} belongs to command "
                              f"'{p['command']}', not '{command}'")
        run_seed = int(p.get("seed", run_seed))
        for s, kv in p["sections"].items():
            sections.setdefault(s, {}).update(kv)

    if config_path is not None:
        for s, kv in load_config_file(config_path).items():
            sections.setdefault(s, {}).update(kv)

    run_kv = sections.pop("run", {})
    try:
        run_seed = int(run_kv.get("seed", run_seed))
        run_out = run_kv.get("out", run_out)
        run_threads = int(run_kv.get("threads", run_threads))
    except ValueError as exc:
        raise ConfigError(f"bad value in [run]: {exc}") from exc

    if seed is not None:
        run_seed = seed
    if out is not None:
        run_out = out
    if threads is not None:
        run_threads = threads
    if run_threads < 1:
        raise ConfigError(f"thread count must be >= 1, got {run_threads}")

    _validate_sections(command, sections)
    return RunConfig(command=command, seed=run_seed, out=Path(run_out),
                     threads=run_threads, sections=sections)


def parse_vector(text: str) -> np.ndarray:
    """Parse '1,2,3' (or 'ones:4' / 'zeros:4') into a float vector."""
    text = text.strip()
    for tag, fill in (("ones:", 1.0), ("zeros:", 0.0)):
        if text.startswith(tag):
            try:
                n = int(text[len(tag):])
            except ValueError:
                raise ConfigError(f"bad vector literal {text!r}") from None
            return np.full(n, fill)
    try:
        return np.array([float(t) for t in text.split(",")])
    except ValueError:
        raise ConfigError(f"bad vector literal {text!r}") from None


def parse_matrix(text: str) -> np.ndarray:
    """Parse '1,0;0,1' (rows split by ';') into a float matrix."""
    try:
        rows = [[float(t) for t in row.split(",")] for row in text.strip().split(";")]
        mat = np.array(rows)
    except ValueError:
        raise ConfigError(f"bad matrix literal {text!r}") from None
    if mat.ndim != 2:
        raise ConfigError(f"bad matrix literal {text!r}")
    return mat


def parse_int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",")]
    except ValueError:
        raise ConfigError(f"bad integer list {text!r}") from None
