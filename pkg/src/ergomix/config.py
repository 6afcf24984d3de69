"""INI experiment configuration: parsing, validation and serialization."""
from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields
from typing import Optional, Tuple

import numpy as np

from .maps import BUILTIN_FAMILIES

EXPERIMENTS = (
    "check_assumptions", "invariant_density", "transfer_iterate", "persistent_monotonicity",
    "glm2", "llm", "ggm_counterexample", "slicing_bound", "hitting_residues", "birkhoff",
    "laminar_scan", "distortion_scan",
)
OBSERVABLES = ("sin_phi", "sin2_phi", "residue", "constant")
DEFAULT_SEED = 20180901


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Numerics:
    grid_size: int = 4096
    n_max: int = 200
    N_samples: int = 100000
    q: int = 3
    delta: float = 0.5
    theta_grid: str = "-5:5:41"
    k_max: int = 200
    schedule_depth: float = 200.0
    n_list: str = "1,5,20"
    k_schedule: str = "sqrt"
    pair_samples: int = 1000
    j_max: int = 100
    stride: int = 1
    workers: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    family: str
    experiment: str
    alpha: Optional[float] = None
    observable: str = "sin_phi"
    seed_density: str = ""
    seed: int = DEFAULT_SEED
    numerics: Numerics = field(default_factory=Numerics)
    output_dir: str = "ergomix_out"

    def map_params(self) -> dict:
        return {"alpha": self.alpha} if self.family == "t_alpha" else {}

    def thetas(self) -> np.ndarray:
        return parse_theta_grid(self.numerics.theta_grid)

    def n_values(self) -> Tuple[int, ...]:
        return parse_int_list(self.numerics.n_list, "n_list")


def parse_theta_grid(text: str) -> np.ndarray:
    """``lo:hi:count`` for an evenly spaced grid."""
    try:
        lo, hi, count = text.split(":")
        lo, hi, count = float(lo), float(hi), int(count)
    except ValueError:
        raise ConfigError(f"theta_grid={text!r}: expected lo:hi:count") from None
    if count < 2 or not hi > lo:
        raise ConfigError(f"theta_grid={text!r}: need hi > lo and count >= 2")
    return np.linspace(lo, hi, count)


def parse_int_list(text: str, key: str) -> Tuple[int, ...]:
    try:
        vals = tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise ConfigError(f"{key}={text!r}: expected comma-separated integers") from None
    if not vals or min(vals) < 0:
        raise ConfigError(f"{key}={text!r}: expected nonnegative integers")
    return vals


_SECTIONS = {
    "map": {"family", "alpha"},
    "experiment": {"name", "observable", "seed_density", "seed"},
    "numerics": {f.name for f in fields(Numerics)},
    "output": {"dir"},
}
_NUMERIC_TYPES = {f.name: f.type for f in fields(Numerics)}


def _convert(key: str, raw: str, kind):
    kind = {"int": int, "float": float, "str": str}.get(kind, kind)
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{key}={raw!r}: expected {kind.__name__}") from None


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.family not in BUILTIN_FAMILIES:
        raise ConfigError(f"family={cfg.family!r}: choose from {', '.join(BUILTIN_FAMILIES)}")
    if cfg.family == "t_alpha":
        if cfg.alpha is None:
            raise ConfigError("alpha is required for family t_alpha (range (0,1))")
        if not 0.0 < cfg.alpha < 1.0:
            raise ConfigError(f"alpha={cfg.alpha!r} outside the valid range (0,1)")
    elif cfg.alpha is not None:
        raise ConfigError(f"alpha is only used by t_alpha, not {cfg.family}")
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"name={cfg.experiment!r}: choose from {', '.join(EXPERIMENTS)}")
    if cfg.observable not in OBSERVABLES:
        raise ConfigError(f"observable={cfg.observable!r}: choose from {', '.join(OBSERVABLES)}")
    if not 0 <= cfg.seed < 2 ** 64:
        raise ConfigError(f"seed={cfg.seed}: must be a 64-bit unsigned integer")
    nm = cfg.numerics
    positive = {"grid_size": 16, "n_max": 0, "N_samples": 1, "q": 2, "k_max": 1,
                "pair_samples": 1, "j_max": 1, "stride": 1, "workers": 0}
    for key, lo in positive.items():
        if getattr(nm, key) < lo:
            raise ConfigError(f"{key}={getattr(nm, key)}: must be >= {lo}")
    if not nm.delta > 0:
        raise ConfigError(f"delta={nm.delta}: must be positive")
    if not nm.schedule_depth > 0:
        raise ConfigError(f"schedule_depth={nm.schedule_depth}: must be positive")
    parse_theta_grid(nm.theta_grid)
    parse_int_list(nm.n_list, "n_list")
    if nm.k_schedule != "sqrt":
        try:
            if int(nm.k_schedule) < 1:
                raise ValueError
        except ValueError:
            raise ConfigError(f"k_schedule={nm.k_schedule!r}: a positive integer or 'sqrt'") from None


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate an INI experiment description, filling defaults."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unparsable config: {exc}") from None
    for sec in cp.sections():
        if sec not in _SECTIONS:
            raise ConfigError(f"unknown section [{sec}]")
        for key in cp[sec]:
            if key not in _SECTIONS[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]")
    for sec in ("map", "experiment"):
        if not cp.has_section(sec):
            raise ConfigError(f"missing [{sec}] section")
    mp, ex = cp["map"], cp["experiment"]
    if "family" not in mp:
        raise ConfigError("missing key 'family' in [map]")
    if "name" not in ex:
        raise ConfigError("missing key 'name' in [experiment]")
    num = {}
    if cp.has_section("numerics"):
        for key, raw in cp["numerics"].items():
            num[key] = _convert(key, raw, _NUMERIC_TYPES[key])
    kwargs = dict(family=mp["family"].strip(), experiment=ex["name"].strip(),
                  numerics=Numerics(**num))
    if "alpha" in mp:
        kwargs["alpha"] = _convert("alpha", mp["alpha"], float)
    for key in ("observable", "seed_density"):
        if key in ex:
            kwargs[key] = ex[key].strip()
    if "seed" in ex:
        kwargs["seed"] = _convert("seed", ex["seed"], int)
    if cp.has_section("output") and "dir" in cp["output"]:
        kwargs["output_dir"] = cp["output"]["dir"].strip()
    cfg = ExperimentConfig(**kwargs)
    _validate(cfg)
    return cfg


def serialize(cfg: ExperimentConfig) -> str:
    """INI text that parses back to ``cfg``."""
    lines = ["[map]", f"family = {cfg.family}"]
    if cfg.alpha is not None:
        lines.append(f"alpha = {cfg.alpha!r}")
    lines += ["", "[experiment]", f"name = {cfg.experiment}", f"observable = {cfg.observable}"]
    if cfg.seed_density:
        lines.append(f"seed_density = {cfg.seed_density}")
    lines += [f"seed = {cfg.seed}", "", "[numerics]"]
    for key, val in asdict(cfg.numerics).items():
        lines.append(f"{key} = {val!r}" if isinstance(val, float) else f"{key} = {val}")
    lines += ["", "[output]", f"dir = {cfg.output_dir}", ""]
    return "\n".join(lines)
