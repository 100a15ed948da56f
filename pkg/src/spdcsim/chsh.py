"""CHSH S parameter from coincidence counts or directly from a state."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .params import AnalyzerPair, SourceParams, ValidationError
from .states import TwoQubitState, coincidence_prob

# (theta_s, theta_s', theta_i, theta_i')
DEFAULT_ANGLES = (-math.pi / 4, 0.0, 5 * math.pi / 8, 7 * math.pi / 8)

# settings in the order of S = E(s, i) + E(s, i') - E(s', i) + E(s', i')
_SETTINGS = ((0, 2, +1), (0, 3, +1), (1, 2, -1), (1, 3, +1))
_SUBSETTINGS = ((False, False), (False, True), (True, False), (True, True))  # ++, +-, -+, --
TERM_NAMES = ("E(s,i)", "E(s,i')", "E(s',i)", "E(s',i')")


def default_angles() -> tuple[float, float, float, float]:
    return DEFAULT_ANGLES


def setting_pairs(angles=DEFAULT_ANGLES) -> list[list[AnalyzerPair]]:
    """The 16 analyzer settings, grouped per correlation term as (++, +-, -+, --)."""
    out = []
    for js, ji, _ in _SETTINGS:
        out.append([AnalyzerPair(angles[js], angles[ji], os_, oi) for os_, oi in _SUBSETTINGS])
    return out


def expectation(c_pp: float, c_pm: float, c_mp: float, c_mm: float) -> tuple[float, float]:
    """Correlation E from four coincidence counts, with Poisson error."""
    total = c_pp + c_pm + c_mp + c_mm
    if total <= 0:
        raise ValidationError("no coincidences in setting")
    e = float((c_pp - c_pm - c_mp + c_mm) / total)
    # dE/dc = (+-1 - E) / total, each count with variance = count
    var = ((1 - e) ** 2 * (c_pp + c_mm) + (1 + e) ** 2 * (c_pm + c_mp)) / total ** 2
    return e, float(math.sqrt(var))


@dataclass(frozen=True)
class ChshResult:
    e_values: tuple[float, float, float, float]
    e_errors: tuple[float, float, float, float]
    s: float
    s_err: float
    counts: tuple[tuple[float, float, float, float], ...]

    @property
    def violation_sigma(self) -> float:
        return (self.s - 2.0) / self.s_err if self.s_err > 0 else math.inf


def s_from_counts(counts) -> ChshResult:
    """S from 16 counts, shaped 4 settings x (++, +-, -+, --)."""
    counts = np.asarray(counts, dtype=float)
    if counts.shape != (4, 4):
        raise ValidationError("expected 16 counts as 4 settings x 4 sub-settings")
    es, errs = [], []
    for k, row in enumerate(counts):
        try:
            e, err = expectation(*row)
        except ValidationError:
            raise ValidationError(f"setting {k + 1} {TERM_NAMES[k]} has no coincidences") from None
        es.append(e)
        errs.append(err)
    signed = sum(sign * e for (_, _, sign), e in zip(_SETTINGS, es))
    s_err = math.sqrt(sum(err ** 2 for err in errs))
    return ChshResult(tuple(es), tuple(errs), float(abs(signed)), s_err, tuple(tuple(r) for r in counts.tolist()))


def expected_counts(state: TwoQubitState, n_per_setting: float, angles=DEFAULT_ANGLES) -> np.ndarray:
    return np.array([[n_per_setting * coincidence_prob(state, a) for a in group]
                     for group in setting_pairs(angles)])


def sample_counts(state: TwoQubitState, n_per_setting: float, seed: int, angles=DEFAULT_ANGLES) -> np.ndarray:
    """Poisson-distributed counts about the expectation."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    return rng.poisson(expected_counts(state, n_per_setting, angles)).astype(float)


def s_exact(state: TwoQubitState, angles=DEFAULT_ANGLES) -> float:
    return s_from_counts(expected_counts(state, 1.0, angles)).s


def exact_result(state: TwoQubitState, angles=DEFAULT_ANGLES) -> ChshResult:
    """Noiseless result: probabilities in place of counts, zero uncertainties."""
    res = s_from_counts(expected_counts(state, 1.0, angles))
    return replace(res, e_errors=(0.0, 0.0, 0.0, 0.0), s_err=0.0)


def simulated_counts(params: SourceParams, n_pulses: int, seed: int, angles=DEFAULT_ANGLES,
                     workers: int = 1) -> np.ndarray:
    """16 coincidence counts from the pulse-level simulator."""
    from .simulate import simulate_run

    return np.array([[simulate_run(params, a, n_pulses, seed, 3, g, k, workers=workers).coincidences
                      for k, a in enumerate(group)]
                     for g, group in enumerate(setting_pairs(angles))], dtype=float)
