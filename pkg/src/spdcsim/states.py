"""Two-qubit polarization states in the basis {HH, HV, VH, VV} (signal x idler)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import ValidationError

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-10

SIGMA_Y = np.array([[0, -1j], [1j, 0]])
_YY = np.kron(SIGMA_Y, SIGMA_Y)

H = np.array([1, 0], dtype=complex)
V = np.array([0, 1], dtype=complex)
D = np.array([1, 1], dtype=complex) / math.sqrt(2)
A = np.array([1, -1], dtype=complex) / math.sqrt(2)
R = np.array([1, 1j], dtype=complex) / math.sqrt(2)
L = np.array([1, -1j], dtype=complex) / math.sqrt(2)
NAMED_POLARIZATIONS = {"H": H, "V": V, "D": D, "A": A, "R": R, "L": L}


def linear(theta: float) -> np.ndarray:
    """Jones vector of linear polarization at ``theta`` radians from H."""
    return np.array([math.cos(theta), math.sin(theta)], dtype=complex)


def orthogonal(vec: np.ndarray) -> np.ndarray:
    """The polarization orthogonal to ``vec`` (the blocked port of its analyzer)."""
    a, b = vec
    return np.array([-np.conj(b), np.conj(a)])


def projector(vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=complex)
    vec = vec / np.linalg.norm(vec)
    return np.outer(vec, vec.conj())


class TwoQubitState:
    """A validated 4x4 density matrix.

    Matrices that miss positivity by less than ``PSD_TOL`` are clipped back
    onto the PSD cone and renormalized; larger violations are rejected.
    """

    __slots__ = ("rho",)

    def __init__(self, rho):
        rho = np.array(rho, dtype=complex)
        if rho.shape != (4, 4):
            raise ValidationError(f"density matrix must be 4x4, got {rho.shape}")
        if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL:
            raise ValidationError("density matrix not Hermitian")
        rho = (rho + rho.conj().T) / 2
        if abs(np.trace(rho).real - 1.0) > TRACE_TOL:
            raise ValidationError(f"density matrix trace {np.trace(rho).real!r} != 1")
        w, v = np.linalg.eigh(rho)
        if w[0] < -PSD_TOL:
            raise ValidationError(f"density matrix not positive semidefinite (min eigenvalue {w[0]:.3g})")
        if w[0] < 0:
            w = np.clip(w, 0, None)
            rho = (v * w) @ v.conj().T
            rho /= np.trace(rho).real
        self.rho = rho
        self.rho.setflags(write=False)

    @classmethod
    def from_vector(cls, psi) -> "TwoQubitState":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def from_unnormalized(cls, m) -> "TwoQubitState":
        """Hermitian-symmetrize, clip negative eigenvalues and renormalize."""
        m = np.asarray(m, dtype=complex)
        m = (m + m.conj().T) / 2
        w, v = np.linalg.eigh(m)
        w = np.clip(w, 0, None)
        if w.sum() <= 0:
            raise ValidationError("matrix has no positive part")
        return cls((v * (w / w.sum())) @ v.conj().T)

    def __repr__(self) -> str:
        return f"TwoQubitState({np.array2string(self.rho, precision=4)})"

    def purity(self) -> float:
        return float(np.trace(self.rho @ self.rho).real)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.rho)

    def to_pairs(self) -> list[tuple[float, float]]:
        """16 (re, im) pairs, row-major."""
        return [(float(z.real), float(z.imag)) for z in self.rho.ravel()]

    @classmethod
    def from_pairs(cls, pairs) -> "TwoQubitState":
        pairs = list(pairs)
        if len(pairs) != 16:
            raise ValidationError(f"expected 16 (re, im) entries, got {len(pairs)}")
        return cls(np.array([complex(re, im) for re, im in pairs]).reshape(4, 4))


PSI_MINUS = np.array([0, 1, -1, 0], dtype=complex) / math.sqrt(2)


def singlet() -> TwoQubitState:
    return TwoQubitState.from_vector(PSI_MINUS)


def werner(p: float) -> TwoQubitState:
    """p |psi-><psi-| + (1 - p) I/4."""
    if not 0.0 <= p <= 1.0:
        raise ValidationError("Werner weight outside [0, 1]")
    return TwoQubitState(p * singlet().rho + (1 - p) * np.eye(4) / 4)


def defect_state(p_ad: float, p_hv: float | None = None) -> TwoQubitState:
    """Singlet with a basis-dependent defect.

    Linear-analyzer fringe visibility is ``p_hv`` in the H-V basis and ``p_ad``
    in the A-D basis: the state is a singlet fraction ``p_ad``, an H-V dephased
    singlet fraction ``p_hv - p_ad`` and white noise for the rest.
    ``p_hv == p_ad`` reduces to ``werner(p_ad)``.
    """
    if p_hv is None:
        p_hv = p_ad
    if not 0.0 <= p_ad <= p_hv <= 1.0:
        raise ValidationError("need 0 <= p_ad <= p_hv <= 1")
    dephased = np.diag([0, 0.5, 0.5, 0]).astype(complex)
    rho = p_ad * singlet().rho + (p_hv - p_ad) * dephased + (1 - p_hv) * np.eye(4) / 4
    return TwoQubitState(rho)


def source_state(params) -> TwoQubitState:
    """Per-pair polarization state emitted by a source with these params."""
    return defect_state(params.mixing_p, params.mixing_p_hv)


def joint_outcome_probs(state: TwoQubitState, pol_s, pol_i) -> np.ndarray:
    """Probabilities of (pass, pass), (pass, block), (block, pass), (block, block).

    ``pol_s``/``pol_i`` are the Jones vectors transmitted by each analyzer.
    """
    out = np.empty(4)
    ports_s = (pol_s, orthogonal(pol_s))
    ports_i = (pol_i, orthogonal(pol_i))
    for k, (a, b) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
        psi = np.kron(ports_s[a], ports_i[b])
        psi = psi / np.linalg.norm(psi)
        out[k] = float(np.real(psi.conj() @ state.rho @ psi))
    out = np.clip(out, 0.0, None)
    return out / out.sum()


def coincidence_prob(state: TwoQubitState, analyzers) -> float:
    """Tr{rho Pi_s x Pi_i} for an AnalyzerPair (or anything with ``.jones()``)."""
    pol_s, pol_i = analyzers.jones()
    op = np.kron(projector(pol_s), projector(pol_i))
    return float(np.trace(state.rho @ op).real)


def fidelity_to_singlet(state: TwoQubitState) -> float:
    return float(np.real(PSI_MINUS.conj() @ state.rho @ PSI_MINUS))


def state_fidelity(a: TwoQubitState, b: TwoQubitState) -> float:
    """Uhlmann fidelity (Tr sqrt(sqrt(a) b sqrt(a)))^2."""
    w, v = np.linalg.eigh(a.rho)
    sqrt_a = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
    m = sqrt_a @ b.rho @ sqrt_a
    ev = np.clip(np.linalg.eigvalsh((m + m.conj().T) / 2), 0, None)
    return float(min(np.sum(np.sqrt(ev)) ** 2, 1.0))


def concurrence(state: TwoQubitState) -> float:
    """Wootters concurrence.

    The decreasing lambdas are the singular values of sqrt(rho) (Y x Y) sqrt(rho)*,
    which avoids square roots of tiny, noisy eigenvalues of rho rho~.
    """
    w, v = np.linalg.eigh(state.rho)
    root = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
    lam = np.linalg.svd(root @ _YY @ root.conj(), compute_uv=False)
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def tangle(state: TwoQubitState) -> float:
    """Squared Wootters concurrence."""
    return concurrence(state) ** 2


def local_unitary(u_s: np.ndarray, u_i: np.ndarray, state: TwoQubitState) -> TwoQubitState:
    u = np.kron(u_s, u_i)
    return TwoQubitState(u @ state.rho @ u.conj().T)
