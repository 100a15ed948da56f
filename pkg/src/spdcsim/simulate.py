"""Pulse-by-pulse Monte Carlo of the source and the two-detector coincidence chain.

Per pulse: a pair number is drawn from the pair distribution, each pair's joint
analyzer outcome is drawn from the per-pair state, transmitted photons are
detected with the arm efficiency, fluorescence photons and dark clicks are
added, and each non-resolving detector clicks on one or more detections.

Pulses in which nothing at all is emitted (no pair, no fluorescence photon,
no dark click) cannot produce a click, so the block engine draws how many
pulses are *active* and simulates only those, exactly conditioned on being
active.  ``sample_pulses`` is the plain dense version and serves as a
reference in the tests.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .params import AnalyzerPair, CountRecord, PairDistribution, SourceParams, ValidationError, validate
from .states import joint_outcome_probs, source_state

BLOCK_SIZE = 1 << 20
GENERATOR = "Philox"


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Counter-based generator for the stream named by ``keys`` under ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class PulseOutcome:
    """Per-pulse results (arrays of equal length)."""

    n_pairs: np.ndarray
    detected_s: np.ndarray
    detected_i: np.ndarray
    pair_s: np.ndarray
    pair_i: np.ndarray
    fluor_s: np.ndarray
    fluor_i: np.ndarray
    dark_s: np.ndarray
    dark_i: np.ndarray

    def __len__(self) -> int:
        return len(self.n_pairs)

    @property
    def coincident(self) -> np.ndarray:
        return self.detected_s & self.detected_i


@dataclass(frozen=True)
class _Setup:
    alpha: float
    dist: PairDistribution
    q_cum: np.ndarray
    eta_s: float
    eta_i: float
    fluor_mean: float
    dark_s: float
    dark_i: float

    @classmethod
    def build(cls, params: SourceParams, analyzers) -> "_Setup":
        validate(params)
        pol_s, pol_i = analyzers.jones()
        q = joint_outcome_probs(source_state(params), pol_s, pol_i)
        return cls(params.alpha, params.pair_distribution, np.cumsum(q)[:3], params.eta_signal,
                   params.eta_idler, params.fluor_fraction * params.alpha,
                   params.dark_prob_signal, params.dark_prob_idler)

    # log-probability that each emission component is empty in one pulse
    def log_zero(self) -> np.ndarray:
        if self.dist is PairDistribution.POISSON:
            pairs = -self.alpha
        else:
            pairs = -math.log1p(self.alpha)
        return np.array([pairs, -self.fluor_mean, -self.fluor_mean,
                         math.log1p(-self.dark_s) if self.dark_s < 1 else -math.inf,
                         math.log1p(-self.dark_i) if self.dark_i < 1 else -math.inf])


def _pairs(rng, dist, alpha, size, at_least_one=False):
    if size == 0 or alpha == 0:
        return np.full(size, 1 if at_least_one else 0, dtype=np.int64)
    if dist is PairDistribution.THERMAL:
        g = rng.geometric(1.0 / (1.0 + alpha), size)  # support >= 1
        return g if at_least_one else g - 1
    return _poisson(rng, alpha, size, at_least_one)


def _poisson(rng, lam, size, at_least_one=False):
    if not at_least_one:
        return rng.poisson(lam, size)
    # first arrival time of a unit-rate process, conditioned to fall before lam
    u = rng.random(size)
    t = -np.log1p(-u * -math.expm1(-lam))
    return 1 + rng.poisson(np.maximum(lam - t, 0.0))


def _any_per_pulse(owner, hits, n):
    return np.bincount(owner[hits], minlength=n) > 0


def _detect(rng, setup: _Setup, n_pairs, m_s, m_i, dark_s, dark_i) -> PulseOutcome:
    n = len(n_pairs)
    owner = np.repeat(np.arange(n), n_pairs)
    outcome = np.searchsorted(setup.q_cum, rng.random(len(owner)), side="right")
    # outcome 0: (pass, pass), 1: (pass, block), 2: (block, pass), 3: (block, block)
    pass_s = outcome < 2
    pass_i = (outcome & 1) == 0
    det_s = pass_s & (rng.random(len(owner)) < setup.eta_s)
    det_i = pass_i & (rng.random(len(owner)) < setup.eta_i)
    pair_s = _any_per_pulse(owner, det_s, n)
    pair_i = _any_per_pulse(owner, det_i, n)

    # unpolarized fluorescence: transmitted with probability 1/2, then detected
    fl = []
    for m, eta in ((m_s, setup.eta_s), (m_i, setup.eta_i)):
        f_owner = np.repeat(np.arange(n), m)
        hits = (rng.random(len(f_owner)) < 0.5) & (rng.random(len(f_owner)) < eta)
        fl.append(_any_per_pulse(f_owner, hits, n))
    fluor_s, fluor_i = fl
    return PulseOutcome(
        n_pairs=n_pairs,
        detected_s=pair_s | fluor_s | dark_s,
        detected_i=pair_i | fluor_i | dark_i,
        pair_s=pair_s, pair_i=pair_i, fluor_s=fluor_s, fluor_i=fluor_i,
        dark_s=dark_s, dark_i=dark_i,
    )


def sample_pulses(params: SourceParams, analyzers, n_pulses: int, seed: int, *keys: int) -> PulseOutcome:
    """Dense simulation of ``n_pulses`` pulses, every pulse drawn unconditionally."""
    setup = _Setup.build(params, analyzers)
    rng = make_rng(seed, *keys)
    n_pairs = _pairs(rng, setup.dist, setup.alpha, n_pulses)
    m_s = _poisson(rng, setup.fluor_mean, n_pulses)
    m_i = _poisson(rng, setup.fluor_mean, n_pulses)
    dark_s = rng.random(n_pulses) < setup.dark_s
    dark_i = rng.random(n_pulses) < setup.dark_i
    return _detect(rng, setup, n_pairs, m_s, m_i, dark_s, dark_i)


def _active_pulses(rng, setup: _Setup, n_pulses: int) -> PulseOutcome:
    """Simulate only the pulses with at least one emission event."""
    log_z = setup.log_zero()
    p_active = -math.expm1(log_z.sum())
    k = int(rng.binomial(n_pulses, p_active)) if p_active > 0 else 0
    if k == 0:
        empty = np.zeros(0, dtype=bool)
        return PulseOutcome(np.zeros(0, dtype=np.int64), *([empty] * 8))
    # index of the first non-empty component, in the fixed order of log_zero()
    before = np.concatenate(([0.0], np.cumsum(log_z)[:-1]))
    w = np.exp(before) * -np.expm1(log_z)
    first = rng.choice(5, size=k, p=w / w.sum())

    def component(i, draw):
        out = np.zeros(k, dtype=np.int64)
        eq = first == i
        gt = first < i
        out[eq] = draw(int(eq.sum()), True)
        out[gt] = draw(int(gt.sum()), False)
        return out

    n_pairs = component(0, lambda size, one: _pairs(rng, setup.dist, setup.alpha, size, one))
    m_s = component(1, lambda size, one: _poisson(rng, setup.fluor_mean, size, one) if setup.fluor_mean > 0 else np.zeros(size, np.int64))
    m_i = component(2, lambda size, one: _poisson(rng, setup.fluor_mean, size, one) if setup.fluor_mean > 0 else np.zeros(size, np.int64))
    dark_s = component(3, lambda size, one: np.ones(size, np.int64) if one else (rng.random(size) < setup.dark_s)).astype(bool)
    dark_i = component(4, lambda size, one: np.ones(size, np.int64) if one else (rng.random(size) < setup.dark_i)).astype(bool)
    return _detect(rng, setup, n_pairs, m_s, m_i, dark_s, dark_i)


def block_sizes(n_pulses: int, block_size: int = BLOCK_SIZE) -> list[int]:
    full, rest = divmod(int(n_pulses), block_size)
    return [block_size] * full + ([rest] if rest else [])


def _simulate_block(setup, n_pulses, seed, keys, index, phash) -> CountRecord:
    rng = make_rng(seed, *keys, index)
    out = _active_pulses(rng, setup, n_pulses)
    s = int(out.detected_s.sum())
    i = int(out.detected_i.sum())
    c = int(out.coincident.sum())
    return CountRecord(n_pulses, s, i, c, int(seed), phash, GENERATOR)


def simulate_blocks(params: SourceParams, analyzers, n_pulses: int, seed: int, *keys: int,
                    block_size: int = BLOCK_SIZE, workers: int = 1) -> list[CountRecord]:
    """Per-block CountRecords.

    Block ``b`` always draws from stream ``(*keys, b)``, so the result does not
    depend on ``workers`` (how many shards run concurrently).
    """
    if n_pulses < 1:
        raise ValidationError("n_pulses must be >= 1")
    setup = _Setup.build(params, analyzers)
    phash = params.params_hash()
    sizes = block_sizes(n_pulses, block_size)
    args = [(setup, size, seed, keys, b, phash) for b, size in enumerate(sizes)]
    if workers > 1 and len(args) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda a: _simulate_block(*a), args))
    return [_simulate_block(*a) for a in args]


def merge(records) -> CountRecord:
    records = list(records)
    total = records[0]
    for r in records[1:]:
        total = total + r
    return total


def simulate_run(params: SourceParams, analyzers, n_pulses: int, seed: int, *keys: int,
                 block_size: int = BLOCK_SIZE, workers: int = 1) -> CountRecord:
    """Total counts over ``n_pulses`` pulses; deterministic in (params, analyzers, n_pulses, seed, keys)."""
    return merge(simulate_blocks(params, analyzers, n_pulses, seed, *keys,
                                 block_size=block_size, workers=workers))


# -- experiment-style scans --------------------------------------------------

BASIS_SIGNAL_ANGLE = {"HV": 0.0, "AD": math.pi / 4}


@dataclass(frozen=True)
class FringePoint:
    theta_i: float
    mean: float
    std: float
    counts: tuple[int, ...]


def fringe_scan(params: SourceParams, theta_s: float, theta_i_grid, pulses_per_point: int,
                repeats: int = 30, seed: int = 0, workers: int = 1) -> list[FringePoint]:
    """Coincidences vs idler angle; ``repeats`` independent runs per point."""
    grid = [float(t) for t in theta_i_grid]
    if not grid:
        raise ValidationError("empty angle grid")
    if repeats < 1:
        raise ValidationError("repeats must be >= 1")
    out = []
    for j, theta_i in enumerate(grid):
        pair = AnalyzerPair(theta_s, theta_i)
        counts = tuple(
            simulate_run(params, pair, pulses_per_point, seed, 1, j, r, workers=workers).coincidences
            for r in range(repeats)
        )
        arr = np.array(counts, dtype=float)
        std = float(arr.std(ddof=1)) if repeats > 1 else math.sqrt(arr[0])
        out.append(FringePoint(theta_i, float(arr.mean()), std, counts))
    return out


def visibility_estimate(c_max: float, c_min: float) -> tuple[float | None, float | None]:
    """Visibility and its Poisson-propagated 1-sigma error from raw counts.

    A zero count is given unit variance so that an empty C_min still carries
    the uncertainty of not having seen a rare event.
    """
    total = c_max + c_min
    if total <= 0:
        return None, None
    v = (c_max - c_min) / total
    var_max = max(c_max, 1.0)
    var_min = max(c_min, 1.0)
    err = 2.0 / total ** 2 * math.sqrt(c_min ** 2 * var_max + c_max ** 2 * var_min)
    return v, err


@dataclass(frozen=True)
class VisibilityRow:
    alpha: float
    coinc_max: int
    coinc_min: int
    visibility: float | None
    visibility_err: float | None


def extrema_settings(basis: str) -> tuple[AnalyzerPair, AnalyzerPair]:
    """(orthogonal, parallel) analyzer pairs: C_max and C_min settings for a singlet."""
    basis = basis.upper()
    if basis not in BASIS_SIGNAL_ANGLE:
        raise ValidationError(f"unknown basis {basis!r} (expected HV or AD)")
    t = BASIS_SIGNAL_ANGLE[basis]
    return AnalyzerPair(t, t, orth_i=True), AnalyzerPair(t, t)


def visibility_vs_alpha(template: SourceParams, alpha_grid, basis: str, pulses_per_point: int,
                        seed: int = 0, workers: int = 1) -> list[VisibilityRow]:
    """Simulated C_max / C_min visibility for each mean pair number."""
    set_max, set_min = extrema_settings(basis)
    rows = []
    tag = 0 if basis.upper() == "HV" else 1
    for j, a in enumerate(alpha_grid):
        a = float(a)
        if not 0.0 <= a <= 1.0:
            raise ValidationError("alpha grid must lie within [0, 1]")
        p = template.replace(alpha=a)
        hi = simulate_run(p, set_max, pulses_per_point, seed, 2, tag, j, 0, workers=workers).coincidences
        lo = simulate_run(p, set_min, pulses_per_point, seed, 2, tag, j, 1, workers=workers).coincidences
        v, err = visibility_estimate(hi, lo)
        rows.append(VisibilityRow(a, hi, lo, v, err))
    return rows
