"""Two-qubit state tomography from 16 product-projector coincidence counts.

The estimate is parametrized as rho = T^dag T / Tr(T^dag T) with T lower
triangular, which keeps it Hermitian, positive and unit-trace for every
parameter vector.  The overall count scale is carried by the unnormalized
T^dag T, so the number of pulses per setting does not need to be known.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .params import NumericalError, ValidationError
from .states import NAMED_POLARIZATIONS, TwoQubitState, fidelity_to_singlet, projector, tangle

SETTING_BASIS = "HVDR"
MAX_ITERATIONS = 10_000
REL_TOL = 1e-10


@dataclass(frozen=True)
class Setting:
    """Product projector; ``jones()`` matches the AnalyzerPair interface used by the simulator."""

    label: str

    def jones(self):
        return NAMED_POLARIZATIONS[self.label[0]], NAMED_POLARIZATIONS[self.label[1]]

    def operator(self) -> np.ndarray:
        s, i = self.jones()
        return np.kron(projector(s), projector(i))


def standard_settings() -> list[Setting]:
    return [Setting(a + b) for a, b in itertools.product(SETTING_BASIS, repeat=2)]


def design_matrix(settings) -> np.ndarray:
    """Rows are vec(P_k)^*, so that (A @ vec(rho)) gives Tr(P_k rho)."""
    return np.array([s.operator().conj().ravel() for s in settings])


def check_complete(settings) -> None:
    rank = np.linalg.matrix_rank(design_matrix(settings))
    if rank < 16:
        raise ValidationError(f"tomography settings are not complete (rank {rank} < 16)")


def forward_counts(state: TwoQubitState, settings, n_per_setting: float, seed: int | None = None) -> np.ndarray:
    """Expected counts (``seed=None``) or Poisson draws about them."""
    if n_per_setting < 1:
        raise ValidationError("n_per_setting must be >= 1")
    probs = np.array([np.trace(s.operator() @ state.rho).real for s in settings])
    expected = n_per_setting * np.clip(probs, 0, None)
    if seed is None:
        return expected
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    return rng.poisson(expected).astype(float)


_TRIL = np.tril_indices(4)
_DIAG = np.array([k for k, (r, c) in enumerate(zip(*_TRIL)) if r == c])
_OFF = np.array([k for k, (r, c) in enumerate(zip(*_TRIL)) if r != c])


def _t_from_params(t: np.ndarray) -> np.ndarray:
    vals = np.zeros(10, dtype=complex)
    vals[_DIAG] = t[:4]
    vals[_OFF] = t[4:10] + 1j * t[10:16]
    T = np.zeros((4, 4), dtype=complex)
    T[_TRIL] = vals
    return T


def _params_from_t(T: np.ndarray) -> np.ndarray:
    vals = T[_TRIL]
    return np.concatenate([vals[_DIAG].real, vals[_OFF].real, vals[_OFF].imag])


def _gram(t: np.ndarray) -> np.ndarray:
    T = _t_from_params(t)
    return T.conj().T @ T


_ROWS, _COLS = _TRIL


def _gram_jacobian(ops: np.ndarray, t: np.ndarray) -> np.ndarray:
    """d Tr(P_k T^dag T) / d t_j for every setting k and parameter j."""
    T = _t_from_params(t)
    # d Tr(P T^dag T) = 2 Re Tr(P T^dag dT); dT has a single entry at (r, c)
    M = ops @ T.conj().T
    entries = M[:, _COLS, _ROWS]
    return np.concatenate([
        2 * entries[:, _DIAG].real,
        2 * entries[:, _OFF].real,
        -2 * entries[:, _OFF].imag,
    ], axis=1)


def linear_inversion(counts, settings) -> np.ndarray:
    """Unnormalized matrix M with Tr(P_k M) = counts_k (least squares)."""
    A = design_matrix(settings)
    vec, *_ = np.linalg.lstsq(A, np.asarray(counts, dtype=complex), rcond=None)
    m = vec.reshape(4, 4)
    return (m + m.conj().T) / 2


def _initial_params(counts, settings) -> np.ndarray:
    m = linear_inversion(counts, settings)
    w, v = np.linalg.eigh(m)
    w = np.clip(w, 0, None)
    scale = max(w.sum(), 1e-300)
    # a small full-rank admixture keeps the Cholesky factor well defined
    m = (v * w) @ v.conj().T + 1e-9 * scale * np.eye(4)
    return _params_from_t(_lower_factor(m))


def _lower_factor(m: np.ndarray) -> np.ndarray:
    """Lower-triangular T with T^dag T = m (reverse-order Cholesky)."""
    J = np.eye(4)[::-1]
    L = np.linalg.cholesky(J @ m.conj() @ J)  # J m* J = L L^dag
    return (J @ L @ J).T


@dataclass(frozen=True)
class TomoResult:
    rho_hat: TwoQubitState
    fidelity: float
    tangle: float
    purity: float
    fit_residual: float
    iterations: int
    scale: float


def reconstruct(counts, settings=None, method: str = "least_squares",
                max_iterations: int = MAX_ITERATIONS, rel_tol: float = REL_TOL) -> TomoResult:
    """Estimate the density matrix from coincidence counts.

    ``method="least_squares"`` minimizes sum (n_k - N p_k)^2 / max(n_k, 1);
    ``method="likelihood"`` minimizes the Poisson negative log-likelihood.
    Both use BFGS with analytic gradients and stop once the cost changes by
    less than ``rel_tol`` (relative) between iterations or after
    ``max_iterations`` iterations.
    """
    settings = standard_settings() if settings is None else list(settings)
    counts = np.asarray(counts, dtype=float)
    if counts.shape != (len(settings),) or len(settings) != 16:
        raise ValidationError("need 16 counts for 16 settings")
    if np.any(counts < 0) or not np.all(np.isfinite(counts)):
        raise ValidationError("counts must be finite and non-negative")
    check_complete(settings)
    if counts.sum() <= 0:
        raise NumericalError("no coincidences recorded: nothing to reconstruct (residual 0)")
    ops = np.array([s.operator() for s in settings])
    weights = 1.0 / np.maximum(counts, 1.0)

    def predicted(t):
        return np.einsum("kij,ji->k", ops, _gram(t)).real

    def ls_cost(t):
        r = predicted(t) - counts
        return float(np.sum(weights * r * r)), 2 * _gram_jacobian(ops, t).T @ (weights * r)

    def nll_cost(t):
        pred = np.maximum(predicted(t), 1e-300)
        value = float(np.sum(pred - counts * np.log(pred)))
        return value, _gram_jacobian(ops, t).T @ (1 - counts / pred)

    if method == "least_squares":
        cost_fn = ls_cost
    elif method == "likelihood":
        cost_fn = nll_cost
    else:
        raise ValidationError(f"unknown reconstruction method {method!r}")

    history = [cost_fn(_initial_params(counts, settings))[0]]

    def converged(intermediate_result):
        f = float(intermediate_result.fun)
        prev = history[-1]
        history.append(f)
        if abs(prev - f) <= rel_tol * max(abs(prev), abs(f), 1e-300):
            raise StopIteration

    res = optimize.minimize(cost_fn, _initial_params(counts, settings), jac=True, method="BFGS",
                            callback=converged, options={"maxiter": max_iterations, "gtol": 1e-12})
    # status 1 is the iteration cap and 2 a line search unable to improve further:
    # both are accepted stops; 3 means the cost became NaN
    if res.status == 3 or not np.all(np.isfinite(res.x)):
        raise NumericalError(f"tomography optimizer failed: {res.message} (best residual {min(history):.3g})")
    m = _gram(res.x)
    scale = float(np.trace(m).real)
    if not scale > 0:
        raise NumericalError(f"tomography collapsed to zero matrix (residual {history[-1]:.3g})")
    residual = float(np.sum(weights * (predicted(res.x) - counts) ** 2))
    rho = TwoQubitState.from_unnormalized(m / scale)
    return TomoResult(rho, fidelity_to_singlet(rho), tangle(rho), rho.purity(), residual, int(res.nit), scale)
