"""Closed-form multi-pair visibility model for non-resolving detectors.

A pulse carries ``n`` independent singlet pairs with probability ``p_n(alpha)``.
For parallel analyzers a coincidence needs photons from two different pairs;
for orthogonal analyzers any pair will do.  Summing the per-``n`` coincidence
coefficients over the pair-number distribution gives C_min, C_max and the
visibility (C_max - C_min) / (C_max + C_min).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .params import NumericalError, PairDistribution, SourceParams, ValidationError

TAIL_MASS = 1e-12
BRUTE_FORCE_MAX_N = 12
ALPHA_HI = 10.0

# Regression bounds from a sweep of the exact model over alpha <= 0.1, frozen:
#   |V - (1 - alpha)| <= FIRST_ORDER_K alpha^2            (max found 1.95, eta in {0.05 .. 1})
#   |V(eta=0.05) - V(eta=0.5)| <= ETA_K alpha^2, alpha <= 0.05   (max found 0.388)
#   |V_poisson - V_thermal| <= THERMAL_BOUND                (max found 0.0760)
FIRST_ORDER_K = 2.0
ETA_K = 0.4
THERMAL_BOUND = 0.08


def pair_weight(n: int, alpha: float, dist: PairDistribution | str = PairDistribution.POISSON) -> float:
    """Probability of exactly ``n`` pairs in a pulse with mean pair number ``alpha``."""
    dist = PairDistribution.parse(dist)
    if n < 0:
        raise ValidationError("pair number negative")
    if alpha < 0:
        raise ValidationError("alpha negative")
    if alpha == 0:
        return 1.0 if n == 0 else 0.0
    if dist is PairDistribution.POISSON:
        return math.exp(-alpha + n * math.log(alpha) - math.lgamma(n + 1))
    # single-mode thermal (Bose-Einstein)
    return math.exp(n * math.log(alpha) - (n + 1) * math.log1p(alpha))


def pair_weights(alpha: float, dist: PairDistribution | str = PairDistribution.POISSON,
                 tail: float = TAIL_MASS) -> np.ndarray:
    """``p_0 .. p_nmax`` with ``nmax`` the first index where the remaining tail is below ``tail``."""
    dist = PairDistribution.parse(dist)
    weights = [pair_weight(0, alpha, dist)]
    total = weights[0]
    n = 0
    while 1.0 - total >= tail:
        n += 1
        weights.append(pair_weight(n, alpha, dist))
        total += weights[-1]
        if n > 100_000:
            raise NumericalError("pair distribution truncation did not converge")
        # float roundoff can stall the sum just above 1 - tail; stop once terms vanish
        if weights[-1] < tail * 1e-6 and n > alpha * 10 + 50:
            break
    return np.array(weights)


def _half_binomial(n: int) -> np.ndarray:
    """C(n, k) / 2^n for k = 0..n by multiplicative recurrence."""
    w = np.empty(n + 1)
    w[0] = 0.5 ** n
    for k in range(n):
        w[k + 1] = w[k] * (n - k) / (k + 1)
    return w


def _hit(k, eta: float):
    """1 - (1 - eta)^k: at least one of k transmitted photons is detected."""
    k = np.asarray(k, dtype=float)
    if eta >= 1.0:
        return (k > 0).astype(float)
    return -np.expm1(k * math.log1p(-eta))


def c_n_extrema(n: int, eta: float) -> tuple[float, float]:
    """Per-n coincidence probabilities (c_min, c_max) for parallel / orthogonal analyzers."""
    if n < 1:
        raise ValidationError("c_n_extrema needs n >= 1")
    if not 0.0 <= eta <= 1.0:
        raise ValidationError("eta outside [0, 1]")
    w = _half_binomial(n)
    k = np.arange(n + 1)
    hit_k = _hit(k, eta)
    hit_rest = _hit(n - k, eta)
    c_min = float(np.sum(w[1:n] * hit_k[1:n] * hit_rest[1:n]))
    c_max = float(np.sum(w[1:] * hit_k[1:] ** 2))
    return c_min, c_max


def c_n_extrema_exact(n: int, eta: Fraction | int) -> tuple[Fraction, Fraction]:
    """Rational-arithmetic evaluation of the same sums; cross-check for small n."""
    eta = Fraction(eta)
    miss = 1 - eta
    scale = Fraction(1, 2 ** n)
    c_min = sum(math.comb(n, k) * (1 - miss ** k) * (1 - miss ** (n - k)) for k in range(1, n))
    c_max = sum(math.comb(n, k) * (1 - miss ** k) ** 2 for k in range(1, n + 1))
    return scale * c_min, scale * c_max


def _at_least_one(k: int, eta: float) -> float:
    # inclusion-exclusion over "photon j detected" events
    return sum((-1) ** (j + 1) * math.comb(k, j) * eta ** j for j in range(1, k + 1))


def brute_force_c_n(n: int, eta: float) -> tuple[float, float]:
    """Enumerate all 2^n H/V arrangements of n independent singlet pairs.

    Analyzers: signal H always; idler H (parallel, c_min) or V (orthogonal, c_max).
    In each arrangement pair j has its signal photon H (idler V) or the reverse.
    """
    if n < 1:
        raise ValidationError("brute_force_c_n needs n >= 1")
    if n > BRUTE_FORCE_MAX_N:
        raise ValidationError(f"brute_force_c_n limited to n <= {BRUTE_FORCE_MAX_N}")
    prob = 0.5 ** n
    cache: dict[int, float] = {}

    def p_arm(k: int) -> float:
        if k not in cache:
            cache[k] = _at_least_one(k, eta)
        return cache[k]

    c_min = c_max = 0.0
    for arrangement in itertools.product((True, False), repeat=n):
        signal_h = sum(arrangement)  # these pairs have their idler photon V
        idler_h = n - signal_h
        c_min += prob * p_arm(signal_h) * p_arm(idler_h)
        c_max += prob * p_arm(signal_h) * p_arm(signal_h)
    return c_min, c_max


@dataclass(frozen=True)
class CoincidenceExtrema:
    c_min: float
    c_max: float
    truncation_n: int

    @property
    def visibility(self) -> float | None:
        """None when no coincidences are possible (C_max = 0)."""
        return visibility(self.c_max, self.c_min)


def visibility(c_max: float, c_min: float) -> float | None:
    if c_max + c_min <= 0:
        return None
    return (c_max - c_min) / (c_max + c_min)


def extrema(alpha: float, eta: float, dist: PairDistribution | str = PairDistribution.POISSON) -> CoincidenceExtrema:
    if alpha < 0:
        raise ValidationError("alpha negative")
    if not 0.0 <= eta <= 1.0:
        raise ValidationError("eta outside [0, 1]")
    p = pair_weights(alpha, dist)
    nmax = len(p) - 1
    c_min = c_max = 0.0
    for n in range(1, nmax + 1):
        lo, hi = c_n_extrema(n, eta)
        c_min += p[n] * lo
        c_max += p[n] * hi
    return CoincidenceExtrema(float(c_min), float(c_max), nmax)


def coincidence_extrema(params: SourceParams) -> CoincidenceExtrema:
    """C_min, C_max per pulse for an ideal singlet source with the params' alpha and eta."""
    if params.eta_signal != params.eta_idler:
        raise ValidationError("asymmetric efficiencies not supported by the closed-form model")
    return extrema(params.alpha, params.eta_signal, params.pair_distribution)


def model_visibility(alpha: float, eta: float, dist: PairDistribution | str = PairDistribution.POISSON) -> float | None:
    return extrema(alpha, eta, dist).visibility


def small_alpha(alpha: float, eta: float) -> tuple[float, float, float]:
    """Two-pair truncation: (C_min, C_max, V) with V to first order in alpha."""
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError("small_alpha needs 0 <= alpha <= 1")
    if not 0.0 <= eta <= 1.0:
        raise ValidationError("eta outside [0, 1]")
    c_min = eta ** 2 * alpha ** 2 / 4
    c_max = eta ** 2 * alpha / 2 * (1 + alpha / 4 * (2 - 4 * eta + eta ** 2))
    return c_min, c_max, 1.0 - alpha


def generating_extrema(alpha: float, eta: float, dist: PairDistribution | str = PairDistribution.POISSON) -> tuple[float, float]:
    """Independent closed form via the pair-number generating function G(u) = E[u^n].

    With pairs independent, P(no click on an arm) = G(u_arm) and
    P(coincidence) = 1 - G(u_s) - G(u_i) + G(u_si).
    """
    dist = PairDistribution.parse(dist)

    def g_miss(x):  # 1 - G(1 - x), computed without cancellation
        if dist is PairDistribution.POISSON:
            return -math.expm1(-alpha * x)
        return alpha * x / (1 + alpha * x)

    one = g_miss(eta / 2)
    # C = 1 - 2 G(1 - eta/2) + G(1 - x_both) = 2 (1 - G(.)) - (1 - G(1 - x_both))
    c_min = 2 * one - g_miss(eta)
    c_max = 2 * one - g_miss(eta - eta ** 2 / 2)
    return c_min, c_max


def invert_visibility(v_target: float, eta: float, dist: PairDistribution | str = PairDistribution.POISSON,
                      alpha_hi: float = ALPHA_HI, tol: float = 1e-6) -> float:
    """Mean pair number giving visibility ``v_target`` under the full model (bisection)."""
    if not 0.0 < v_target < 1.0:
        raise ValidationError("v_target must lie strictly between 0 and 1")
    if eta <= 0:
        raise ValidationError("eta must be positive")

    def vis(a: float) -> float:
        return 1.0 if a == 0 else model_visibility(a, eta, dist)

    grid = np.linspace(0.0, alpha_hi, 41)
    values = np.array([vis(a) for a in grid])
    if np.any(np.diff(values) > 1e-12):
        raise NumericalError("visibility not monotone on the search bracket")
    if values[-1] > v_target:
        raise NumericalError(f"no alpha below {alpha_hi} reaches visibility {v_target}")
    lo, hi = 0.0, alpha_hi
    v_lo, v_hi = 1.0, values[-1]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        v_mid = vis(mid)
        if v_mid > v_target:
            lo, v_lo = mid, v_mid
        else:
            hi, v_hi = mid, v_mid
        if v_lo - v_hi < tol:
            break
    # linear interpolation inside the final bracket
    if v_lo == v_hi:
        return 0.5 * (lo + hi)
    return lo + (v_lo - v_target) / (v_lo - v_hi) * (hi - lo)


def model_curve(alphas, eta: float, dist: PairDistribution | str = PairDistribution.POISSON) -> list[dict]:
    rows = []
    for a in alphas:
        ext = extrema(float(a), eta, dist)
        rows.append({
            "alpha": float(a),
            "c_min": ext.c_min,
            "c_max": ext.c_max,
            "visibility": ext.visibility,
            "visibility_first_order": 1.0 - float(a),
        })
    return rows
