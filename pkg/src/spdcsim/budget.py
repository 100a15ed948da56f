"""Accidental-coincidence budget for pulsed sources and operating-point selection."""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

from scipy import optimize

from . import multipair
from .params import AnalyzerPair, NumericalError, PairDistribution, SourceParams, ValidationError, validate
from .states import joint_outcome_probs, source_state


class OverlapWarning(UserWarning):
    """rep_rate * coinc_window > 1: windows of consecutive pulses overlap."""


def accidental_ratio(rep_rate: float, coinc_window: float) -> tuple[float, float]:
    """(f_cw / f_pulsed, f_pulsed / f_cw) for equal average pump power.

    The pulsed rate is larger by 1 / (R_p T_c), the factor by which a cw
    source could be pumped harder for the same accidental rate.
    """
    if rep_rate <= 0 or coinc_window <= 0:
        raise ValidationError("rep_rate and coinc_window must be positive")
    ratio = rep_rate * coinc_window
    if ratio > 1:
        warnings.warn("rep_rate * coinc_window > 1: coincidence windows of successive pulses overlap",
                      OverlapWarning, stacklevel=2)
    return ratio, 1.0 / ratio


def _miss(dist: PairDistribution, alpha: float, x: float) -> float:
    """1 - G(1 - x) for the pair-number generating function G."""
    if dist is PairDistribution.POISSON:
        return -math.expm1(-alpha * x)
    return alpha * x / (1 + alpha * x)


@dataclass(frozen=True)
class ClickProbabilities:
    """Per-pulse probabilities from the generating-function closed form."""

    singles_s: float
    singles_i: float
    coincidence: float


def click_probabilities(params: SourceParams, analyzers) -> ClickProbabilities:
    """Exact per-pulse click and coincidence probabilities for the full chain."""
    validate(params)
    pol_s, pol_i = analyzers.jones()
    q = joint_outcome_probs(source_state(params), pol_s, pol_i)
    es, ei = params.eta_signal, params.eta_idler
    xs = es * (q[0] + q[1])
    xi = ei * (q[0] + q[2])
    xsi = xs + xi - es * ei * q[0]
    dist, a = params.pair_distribution, params.alpha
    fl = params.fluor_fraction * a
    # log-probabilities that an arm (or both) stays dark
    log_dark_s = math.log1p(-params.dark_prob_signal) if params.dark_prob_signal < 1 else -math.inf
    log_dark_i = math.log1p(-params.dark_prob_idler) if params.dark_prob_idler < 1 else -math.inf
    none_s = math.log1p(-_miss(dist, a, xs)) - fl * es / 2 + log_dark_s
    none_i = math.log1p(-_miss(dist, a, xi)) - fl * ei / 2 + log_dark_i
    none_si = math.log1p(-_miss(dist, a, xsi)) - fl * (es + ei) / 2 + log_dark_s + log_dark_i
    p_s = -math.expm1(none_s)
    p_i = -math.expm1(none_i)
    # P(s and i) = 1 - P(no s) - P(no i) + P(neither)
    coinc = p_s + p_i - (-math.expm1(none_si))
    return ClickProbabilities(p_s, p_i, max(coinc, 0.0))


@dataclass(frozen=True)
class BudgetReport:
    ratio_cw_over_pulsed: float
    cw_power_advantage: float
    multi_pair: float
    fluorescence: float
    fluor_fluor: float
    dark_cross: float
    dark_dark: float
    accidental_total: float
    singles_rate_s: float
    singles_rate_i: float
    coincidence_rate: float
    v_target: float
    max_alpha: float | None

    @property
    def dark(self) -> float:
        return self.dark_cross + self.dark_dark

    def as_row(self) -> dict:
        return asdict(self)


def accidental_budget(params: SourceParams, v_target: float = 0.99) -> BudgetReport:
    """Accidental coincidence rates per second, by origin.

    Terms are products of single-arm click probabilities per pulse (linear
    analyzers, so each unpolarized marginal passes with probability 1/2):
    multi-pair floor, pair x fluorescence (both orders), fluorescence x
    fluorescence, dark x light (both orders) and dark x dark.  The expected
    singles and coincidence rates are for orthogonal H-V analyzers.
    """
    validate(params)
    ratio, advantage = accidental_ratio(params.rep_rate, params.coinc_window)
    rp = params.rep_rate
    dist, a = params.pair_distribution, params.alpha
    es, ei = params.eta_signal, params.eta_idler
    pair_s = _miss(dist, a, es / 2)
    pair_i = _miss(dist, a, ei / 2)
    fl = params.fluor_fraction * a
    fl_s = -math.expm1(-fl * es / 2)
    fl_i = -math.expm1(-fl * ei / 2)
    ds, di = params.dark_prob_signal, params.dark_prob_idler

    if es == ei:
        multi = multipair.coincidence_extrema(params).c_min
    else:
        # parallel analyzers on a singlet: no pair ever fires both arms
        multi = pair_s + pair_i - _miss(dist, a, (es + ei) / 2)
    light_s = 1 - (1 - pair_s) * (1 - fl_s)
    light_i = 1 - (1 - pair_i) * (1 - fl_i)
    terms = {
        "multi_pair": multi,
        "fluorescence": pair_s * fl_i + fl_s * pair_i,
        "fluor_fluor": fl_s * fl_i,
        "dark_cross": ds * light_i + di * light_s,
        "dark_dark": ds * di,
    }
    rates = {k: float(v * rp) for k, v in terms.items()}
    clicks = click_probabilities(params, AnalyzerPair(0.0, math.pi / 2))
    try:
        a_max = max_alpha(v_target, params) if 0 < v_target < 1 and es == ei and es > 0 else None
    except NumericalError:
        a_max = None
    return BudgetReport(
        ratio_cw_over_pulsed=ratio,
        cw_power_advantage=advantage,
        accidental_total=float(sum(rates.values())),
        singles_rate_s=clicks.singles_s * rp,
        singles_rate_i=clicks.singles_i * rp,
        coincidence_rate=clicks.coincidence * rp,
        v_target=v_target,
        max_alpha=a_max,
        **rates,
    )


def max_alpha(v_target: float, params: SourceParams) -> float:
    """Largest mean pair number keeping the multi-pair visibility at ``v_target``."""
    return multipair.invert_visibility(v_target, params.eta, params.pair_distribution)


def solve_eta_for_singles(params: SourceParams, singles_rate: float, analyzers=None) -> float:
    """Common per-arm efficiency giving ``singles_rate`` clicks/s on the signal arm."""
    analyzers = analyzers or AnalyzerPair(0.0, math.pi / 2)

    def f(eta):
        p = params.replace(eta_signal=eta, eta_idler=eta)
        return click_probabilities(p, analyzers).singles_s * params.rep_rate - singles_rate

    if f(0.0) > 0 or f(1.0) < 0:
        raise NumericalError(f"no efficiency in [0, 1] gives {singles_rate:g} singles/s")
    return float(optimize.brentq(f, 0.0, 1.0, xtol=1e-14))
