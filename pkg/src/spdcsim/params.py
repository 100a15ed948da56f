"""Source configuration, analyzer settings and count records.

All values here are immutable; modules pass them around freely.
"""
from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np


class ValidationError(ValueError):
    """A parameter set or input violates a documented invariant."""


class NumericalError(RuntimeError):
    """A numerical routine failed (no bracket, no convergence, ...)."""


class PairDistribution(str, Enum):
    POISSON = "poisson"
    THERMAL = "thermal"

    @classmethod
    def parse(cls, value: "str | PairDistribution") -> "PairDistribution":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValidationError(f"unknown pair distribution {value!r} (expected poisson or thermal)") from None


@dataclass(frozen=True)
class SourceParams:
    """Physical configuration of a pulsed entangled-pair source and its detection chain.

    Rates are per second, times in seconds, angles are not part of this type.
    ``mixing_p`` is the singlet weight seen in the diagonal (A-D) basis and
    ``mixing_p_hv`` the one seen in the H-V basis; equal values give a Werner state.
    """

    alpha: float = 0.01
    eta_signal: float = 0.095
    eta_idler: float = 0.095
    mixing_p: float = 1.0
    mixing_p_hv: float = 1.0
    rep_rate: float = 31.1e6
    coinc_window: float = 1.8e-9
    dark_rate_signal: float = 50.0
    dark_rate_idler: float = 50.0
    fluor_fraction: float = 0.05
    pair_distribution: PairDistribution = PairDistribution.POISSON

    def __post_init__(self) -> None:
        object.__setattr__(self, "pair_distribution", PairDistribution.parse(self.pair_distribution))

    def replace(self, **changes) -> "SourceParams":
        return dataclasses.replace(self, **changes)

    @property
    def dark_prob_signal(self) -> float:
        """Probability of a dark click on the signal arm within one coincidence window."""
        return self.dark_rate_signal * self.coinc_window

    @property
    def dark_prob_idler(self) -> float:
        return self.dark_rate_idler * self.coinc_window

    @property
    def eta(self) -> float:
        """Common detection efficiency; only defined for symmetric arms."""
        if self.eta_signal != self.eta_idler:
            raise ValidationError("asymmetric efficiencies: eta_signal != eta_idler")
        return self.eta_signal

    def params_hash(self) -> str:
        return params_hash(self)

    def as_items(self) -> list[tuple[str, str]]:
        """(key, text) pairs in config-file syntax, in field order."""
        out = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            out.append((f.name, value.value if isinstance(value, Enum) else repr(float(value))))
        return out


FIELD_NAMES = tuple(f.name for f in dataclasses.fields(SourceParams))

_PROBABILITIES = ("eta_signal", "eta_idler", "mixing_p", "mixing_p_hv")
_RATES = ("rep_rate", "dark_rate_signal", "dark_rate_idler")


def validate(params: SourceParams) -> SourceParams:
    """Return ``params`` unchanged, or raise ValidationError naming the first broken invariant."""
    for name in FIELD_NAMES:
        value = getattr(params, name)
        if name != "pair_distribution" and not math.isfinite(value):
            raise ValidationError(f"{name} not finite")
    if params.alpha < 0:
        raise ValidationError("alpha negative")
    for name in _PROBABILITIES:
        value = getattr(params, name)
        if not 0.0 <= value <= 1.0:
            raise ValidationError(f"{name} outside [0, 1]")
    if params.mixing_p > params.mixing_p_hv:
        raise ValidationError("mixing_p exceeds mixing_p_hv")
    for name in _RATES:
        if getattr(params, name) < 0:
            raise ValidationError(f"{name} negative")
    if params.rep_rate == 0:
        raise ValidationError("rep_rate zero")
    if params.coinc_window <= 0:
        raise ValidationError("coinc_window not positive")
    if params.fluor_fraction < 0:
        raise ValidationError("fluor_fraction negative")
    if params.rep_rate * params.coinc_window > 1.0:
        raise ValidationError("rep_rate·coinc_window > 1")
    if params.dark_prob_signal > 1.0 or params.dark_prob_idler > 1.0:
        raise ValidationError("dark_rate·coinc_window > 1")
    return params


def params_hash(params: SourceParams) -> str:
    text = ";".join(f"{k}={v}" for k, v in params.as_items())
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _polarization(theta: float) -> np.ndarray:
    return np.array([math.cos(theta), math.sin(theta)], dtype=complex)


@dataclass(frozen=True)
class AnalyzerPair:
    """Linear polarization analyzer angles (radians from H, positive toward V).

    ``orth_s``/``orth_i`` select the orthogonal output of each analyzer,
    i.e. add pi/2 to that arm's angle.
    """

    theta_s: float
    theta_i: float
    orth_s: bool = False
    orth_i: bool = False

    @property
    def effective(self) -> tuple[float, float]:
        half = math.pi / 2
        return (self.theta_s + half * self.orth_s, self.theta_i + half * self.orth_i)

    def jones(self) -> tuple[np.ndarray, np.ndarray]:
        ts, ti = self.effective
        return _polarization(ts), _polarization(ti)

    def label(self) -> str:
        ts, ti = self.effective
        return f"{math.degrees(ts):g},{math.degrees(ti):g}"


@dataclass(frozen=True)
class CountRecord:
    pulses: int
    singles_s: int
    singles_i: int
    coincidences: int
    seed: int
    params_hash: str
    generator: str = "Philox"

    def __post_init__(self) -> None:
        if min(self.pulses, self.singles_s, self.singles_i, self.coincidences) < 0:
            raise ValidationError("negative count in CountRecord")
        if self.coincidences > min(self.singles_s, self.singles_i):
            raise ValidationError("coincidences exceed singles")

    def __add__(self, other: "CountRecord") -> "CountRecord":
        if self.params_hash != other.params_hash:
            raise ValidationError("cannot merge records from different configurations")
        return CountRecord(
            self.pulses + other.pulses,
            self.singles_s + other.singles_s,
            self.singles_i + other.singles_i,
            self.coincidences + other.coincidences,
            self.seed,
            self.params_hash,
            self.generator,
        )

    def rates(self, rep_rate: float) -> tuple[float, float, float]:
        """Singles and coincidence rates per second of pulses at ``rep_rate``."""
        seconds = self.pulses / rep_rate
        return self.singles_s / seconds, self.singles_i / seconds, self.coincidences / seconds

    def accidental_estimate(self) -> float:
        """Expected uncorrelated coincidences, from the singles product per pulse."""
        if self.pulses == 0:
            return 0.0
        return self.singles_s * self.singles_i / self.pulses


# -- config files ----------------------------------------------------------


class ConfigError(ValidationError):
    pass


def _convert(name: str, text: str):
    if name == "pair_distribution":
        return PairDistribution.parse(text)
    return float(text)


def parse_config_text(text: str, source: str = "<string>") -> dict[str, object]:
    """Parse ``key = value`` lines into a dict of typed overrides."""
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, value = (part.strip() for part in line.partition("="))
        if key not in FIELD_NAMES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _convert(key, value)
        except (ValueError, ValidationError):
            raise ConfigError(f"{source}:{lineno}: malformed value for {key}: {value!r}") from None
    return values


def parse_config(path: "str | Path | None", overrides: "dict[str, object] | None" = None,
                 base: SourceParams | None = None) -> SourceParams:
    """Resolve a SourceParams from defaults, then a config file, then explicit overrides."""
    values: dict[str, object] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        values.update(parse_config_text(path.read_text(), str(path)))
    for key, value in (overrides or {}).items():
        if key not in FIELD_NAMES:
            raise ConfigError(f"unknown key {key!r}")
        if value is not None:
            values[key] = value
    params = dataclasses.replace(base or SourceParams(), **values)
    return validate(params)


def format_config(params: SourceParams) -> str:
    return "".join(f"{k} = {v}\n" for k, v in params.as_items())
