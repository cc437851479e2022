"""Experiment configuration read from an INI-style file.

Example::

    [grid]
    dim = 2
    resolution = 64

    [flow]
    nu = 0.01
    initial_condition = random
    seed = 0
    peak_wavenumber = 3.0
    amplitude = 1.0

    [time]
    dt = 1e-3
    n_steps = 100
    snapshot_times = 0.0, 0.05, 0.1

    [levels]
    mode = quantile
    values = 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8

    [converge]
    resolutions = 64, 128, 256
    strip_quantiles = 0.3, 0.7

    [output]
    dir = out
    mesh_dump = false

    [tolerances]
    strip_equality = 0.05

Every key is optional; missing keys take the defaults below.  Comments
start with ``;`` or ``#``, also after a value.  Tolerances
default to the acceptance thresholds and any override is listed in reports.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .dynamics import INITIAL_CONDITIONS
from .errors import ConfigError

DEFAULT_TOLERANCES = {
    "divergence_free": 1e-10,
    "well_resolved": 1e-8,
    "lemma21": 1e-7,
    "global_energy": 1e-8,
    "strip_equality": 0.05,
    "sign_constraints": 0.02,
    "zero_flux": 1e-3,
    "convergence_order": 1.5,
}

DEFAULT_LEVELS = (0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8)

_SECTIONS = {
    "grid": {"dim", "resolution"},
    "flow": {"nu", "initial_condition", "seed", "peak_wavenumber", "amplitude", "a", "b", "c"},
    "time": {"dt", "n_steps", "snapshot_times"},
    "levels": {"mode", "values"},
    "converge": {"resolutions", "strip_quantiles"},
    "output": {"dir", "mesh_dump"},
    "tolerances": set(DEFAULT_TOLERANCES),
}


def _parser() -> configparser.ConfigParser:
    return configparser.ConfigParser(inline_comment_prefixes=(";", "#"))


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(",", " ").split()]


@dataclass
class ExperimentConfig:
    dim: int = 2
    resolution: int = 64
    nu: float = 0.01
    initial_condition: str = "taylor_green"
    seed: int = 0
    peak_wavenumber: float = 3.0
    amplitude: float = 1.0
    A: float = 1.0
    B: float = 1.0
    C: float = 1.0
    dt: float = 1e-3
    n_steps: int = 0
    snapshot_times: list[float] = field(default_factory=list)
    level_mode: str = "quantile"
    levels: list[float] = field(default_factory=lambda: list(DEFAULT_LEVELS))
    resolutions: list[int] = field(default_factory=lambda: [64, 128, 256])
    strip_quantiles: tuple[float, float] = (0.3, 0.7)
    output_dir: str = "out"
    mesh_dump: bool = False
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))

    def __post_init__(self):
        self.validate()

    @property
    def flow_params(self) -> dict:
        return {
            "seed": self.seed,
            "peak_wavenumber": self.peak_wavenumber,
            "amplitude": self.amplitude,
            "A": self.A,
            "B": self.B,
            "C": self.C,
        }

    @property
    def overridden_tolerances(self) -> dict:
        return {k: v for k, v in self.tolerances.items() if DEFAULT_TOLERANCES[k] != v}

    @property
    def resolved_snapshot_times(self) -> list[float]:
        """Requested times, or the start and end of the run when none are given."""
        if self.snapshot_times:
            return list(self.snapshot_times)
        end = self.n_steps * self.dt
        return [0.0] if self.n_steps == 0 else [0.0, end]

    def snapshot_steps(self) -> list[int]:
        """Step index of every snapshot time."""
        steps = []
        for t in self.resolved_snapshot_times:
            k = round(t / self.dt)
            if not math.isclose(k * self.dt, t, rel_tol=1e-9, abs_tol=1e-12):
                raise ConfigError(f"snapshot time {t} is not a multiple of dt = {self.dt}")
            steps.append(k)
        return steps

    def validate(self) -> None:
        if self.dim not in (2, 3):
            raise ConfigError(f"dim must be 2 or 3, got {self.dim}")
        if self.resolution < 8 or self.resolution % 2:
            raise ConfigError(f"resolution must be even and >= 8, got {self.resolution}")
        if not (self.nu >= 0 and math.isfinite(self.nu)):
            raise ConfigError(f"nu must be a finite non-negative number, got {self.nu}")
        if self.initial_condition not in INITIAL_CONDITIONS:
            known = ", ".join(sorted(INITIAL_CONDITIONS))
            raise ConfigError(f"unknown initial_condition {self.initial_condition!r} ({known})")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 0:
            raise ConfigError(f"n_steps must be non-negative, got {self.n_steps}")
        if self.peak_wavenumber <= 0 or self.amplitude <= 0:
            raise ConfigError("peak_wavenumber and amplitude must be positive")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")
        end = self.n_steps * self.dt
        for t in self.snapshot_times:
            if t < 0 or t > end * (1 + 1e-12) + 1e-12:
                raise ConfigError(f"snapshot time {t} outside [0, {end}]")
        if list(self.snapshot_times) != sorted(self.snapshot_times):
            raise ConfigError("snapshot_times must be sorted")
        self.snapshot_steps()
        if self.level_mode not in ("quantile", "absolute"):
            raise ConfigError(f"levels mode must be 'quantile' or 'absolute', got {self.level_mode!r}")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ConfigError("level values must be strictly increasing")
        if self.level_mode == "quantile" and any(not 0 < q < 1 for q in self.levels):
            raise ConfigError("quantile levels must lie strictly between 0 and 1")
        if any(n < 8 or n % 2 for n in self.resolutions):
            raise ConfigError("convergence resolutions must be even and >= 8")
        qa, qb = self.strip_quantiles
        if not 0 < qa < qb < 1:
            raise ConfigError("strip_quantiles must satisfy 0 < a < b < 1")
        unknown = set(self.tolerances) - set(DEFAULT_TOLERANCES)
        if unknown:
            raise ConfigError(f"unknown tolerances: {sorted(unknown)}")
        for k, v in self.tolerances.items():
            if not (v > 0 and math.isfinite(v)):
                raise ConfigError(f"tolerance {k} must be positive, got {v}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["strip_quantiles"] = list(self.strip_quantiles)
        return d

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        parser = _parser()
        try:
            parser.read_string(path.read_text())
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        return cls.from_parser(parser)

    @classmethod
    def from_string(cls, text: str) -> "ExperimentConfig":
        parser = _parser()
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
        return cls.from_parser(parser)

    @classmethod
    def from_parser(cls, parser: configparser.ConfigParser) -> "ExperimentConfig":
        for section in parser.sections():
            if section not in _SECTIONS:
                raise ConfigError(f"unknown section [{section}]")
            extra = set(parser[section]) - _SECTIONS[section]
            if extra:
                raise ConfigError(f"unknown keys in [{section}]: {sorted(extra)}")
        kw = {}
        try:
            g = parser["grid"] if parser.has_section("grid") else {}
            if "dim" in g:
                kw["dim"] = int(g["dim"])
            if "resolution" in g:
                kw["resolution"] = int(g["resolution"])
            f = parser["flow"] if parser.has_section("flow") else {}
            for key, conv in (("nu", float), ("seed", int), ("peak_wavenumber", float), ("amplitude", float)):
                if key in f:
                    kw[key] = conv(f[key])
            if "initial_condition" in f:
                kw["initial_condition"] = f["initial_condition"].strip()
            for key in ("A", "B", "C"):
                if key.lower() in f:
                    kw[key] = float(f[key.lower()])
            t = parser["time"] if parser.has_section("time") else {}
            if "dt" in t:
                kw["dt"] = float(t["dt"])
            if "n_steps" in t:
                kw["n_steps"] = int(t["n_steps"])
            if "snapshot_times" in t:
                kw["snapshot_times"] = _floats(t["snapshot_times"])
            lv = parser["levels"] if parser.has_section("levels") else {}
            if "mode" in lv:
                kw["level_mode"] = lv["mode"].strip()
            if "values" in lv:
                kw["levels"] = _floats(lv["values"])
            cv = parser["converge"] if parser.has_section("converge") else {}
            if "resolutions" in cv:
                kw["resolutions"] = [int(x) for x in _floats(cv["resolutions"])]
            if "strip_quantiles" in cv:
                q = _floats(cv["strip_quantiles"])
                if len(q) != 2:
                    raise ConfigError("strip_quantiles needs exactly two values")
                kw["strip_quantiles"] = (q[0], q[1])
            out = parser["output"] if parser.has_section("output") else {}
            if "dir" in out:
                kw["output_dir"] = out["dir"].strip()
            if "mesh_dump" in out:
                kw["mesh_dump"] = parser.getboolean("output", "mesh_dump")
            tol = dict(DEFAULT_TOLERANCES)
            if parser.has_section("tolerances"):
                for key, value in parser["tolerances"].items():
                    tol[key] = float(value)
            kw["tolerances"] = tol
        except ValueError as exc:
            raise ConfigError(f"bad value in config: {exc}") from exc
        return cls(**kw)
