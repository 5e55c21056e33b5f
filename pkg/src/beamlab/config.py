"""Scenario configuration: INI-style ``key = value`` files with sections.

Every key has a default; unknown sections or keys are errors.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

from .model import LAWS, ModelError, ModelSpec, TipBody, make_law

COMMANDS = ("spectrum", "resolvent", "simulate", "decay", "compare")

# section -> key -> (parser, default)
_float = float
_int = int


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _ints(s):
    return [int(p) for p in s.replace(",", " ").split()]


def _floats(s):
    return [float(p) for p in s.replace(",", " ").split()]


def _words(s):
    return [p for p in s.replace(",", " ").split()]


def _opt_float(s):
    return None if s.strip().lower() in ("", "auto", "none") else float(s)


def _choice(*options):
    def parse(s):
        v = s.strip()
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {v!r}")
        return v
    return parse


SCHEMA = {
    "run": {
        "commands": (_words, ["spectrum"]),
    },
    "model": {
        "law": (_choice(*LAWS), "elastic"),
        "boundary": (_choice("hybrid", "free"), "hybrid"),
        "rho": (_float, 1.0),
        "length": (_float, 1.0),
        "alpha": (_float, 1.0),
        "alpha0": (_float, 0.05),
        "m_couple": (_float, 0.1),
        "c_heat": (_float, 1.0),
        "kappa": (_float, 1.0),
        "k_star": (_float, 1.0),
        "mu": (_float, 1.0),
    },
    "tip": {
        "m_tip": (_float, 1.0),
        "d": (_float, 0.1),
        "J": (_float, 0.1),
        "gamma": (_float, 1.0),
        "gamma_star": (_float, 0.5),
    },
    "discretization": {
        "n_elements": (_int, 64),
        "coupling": (_choice("energy", "printed"), "energy"),
        "temp_refinement": (_int, 2),
    },
    "spectrum": {
        "method": (_choice("auto", "dense", "shift-invert"), "auto"),
        "expect_abscissa_max": (_opt_float, None),
    },
    "resolvent": {
        "n_elements": (_int, 128),
        "lam_min": (_opt_float, None),
        "lam_max": (_opt_float, None),
        "points_per_decade": (_int, 20),
        "expect_slope": (_opt_float, None),
        "slope_tol": (_float, 0.3),
    },
    "simulate": {
        "dt": (_float, 0.01),
        "t_final": (_float, 10.0),
        "initial": (_choice("first_mode", "smooth_polynomial", "file"), "first_mode"),
        "initial_file": (str, ""),
        "record_every": (_int, 0),
        "max_balance_residual": (_float, 1e-10),
    },
    "decay": {
        "n_elements": (_int, 128),
        "dt": (_float, 0.02),
        "t_final": (_float, 4000.0),
        "model": (_choice("algebraic", "exponential"), "algebraic"),
        "t0": (_opt_float, None),
        "t1": (_opt_float, None),
        "expect_exponent": (_floats, []),
    },
    "compare": {
        "levels": (_ints, [16, 32, 64]),
        "shrink_factor": (_float, 2.0),
        "max_variation": (_float, 0.25),
        "expect_match": (_bool, True),
    },
    "output": {
        "dir": (str, "out"),
    },
}


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    values: dict[str, dict]
    source: str = "<defaults>"

    def __getitem__(self, section):
        return self.values[section]

    @property
    def commands(self) -> list[str]:
        return self.values["run"]["commands"]

    def model_spec(self) -> ModelSpec:
        m = self.values["model"]
        try:
            law = make_law(m["law"], **m)
            tip = TipBody(**self.values["tip"]) if m["boundary"] == "hybrid" else None
            return ModelSpec(law, m["rho"], m["length"], tip)
        except ModelError as exc:
            raise ConfigError(f"[model]/[tip]: {exc}") from exc

    def assemble_kwargs(self) -> dict:
        d = self.values["discretization"]
        return {"coupling": d["coupling"], "temp_refinement": d["temp_refinement"]}

    def resolved(self) -> dict:
        """Every parameter including defaults, JSON-ready."""
        return {sec: dict(vals) for sec, vals in self.values.items()}


def defaults() -> dict[str, dict]:
    return {sec: {k: (list(v) if isinstance(v, list) else v) for k, (_, v) in keys.items()}
            for sec, keys in SCHEMA.items()}


def parse_config(text: str, source: str = "<string>") -> ScenarioConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keys are case-sensitive (J vs j)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    values = defaults()
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]; expected one of {', '.join(SCHEMA)}")
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            conv = SCHEMA[section][key][0]
            try:
                values[section][key] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from exc
    for cmd in values["run"]["commands"]:
        if cmd not in COMMANDS:
            raise ConfigError(f"[run] commands: unknown command {cmd!r}; expected {', '.join(COMMANDS)}")
    cfg = ScenarioConfig(values, source)
    cfg.model_spec()
    return cfg


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))
