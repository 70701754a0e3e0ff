"""Two-qubit polarization states and entanglement metrics.

States are expressed in the product basis (HH, HV, VH, VV), where H/V are
the horizontal/vertical single-photon kets. All functions are pure and
operate on immutable value objects, so they are safe to share across
threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: Two-qubit basis ordering used by every matrix and file in this package.
BASIS = ("HH", "HV", "VH", "VV")

_SQRT2 = np.sqrt(2.0)

#: Single-photon polarization kets in the (H, V) basis.
KET_H = np.array([1.0, 0.0], dtype=complex)
KET_V = np.array([0.0, 1.0], dtype=complex)
KET_D = np.array([1.0, 1.0], dtype=complex) / _SQRT2
KET_A = np.array([1.0, -1.0], dtype=complex) / _SQRT2
KET_R = np.array([1.0, -1.0j], dtype=complex) / _SQRT2
KET_L = np.array([1.0, 1.0j], dtype=complex) / _SQRT2

SINGLE_KETS = {"H": KET_H, "V": KET_V, "D": KET_D, "A": KET_A, "R": KET_R, "L": KET_L}

PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
PAULI_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)

_SYSY = np.kron(PAULI_Y, PAULI_Y)

_NORM_TOL = 1e-12
_HERM_TOL = 1e-10
_TRACE_TOL = 1e-10
_PSD_TOL = 1e-9


def linear_ket(angle: float) -> np.ndarray:
    """Single-photon ket linearly polarized at `angle` radians from H."""
    return np.array([np.cos(angle), np.sin(angle)], dtype=complex)


def ket(which) -> np.ndarray:
    """Resolve a single-photon ket from a label (H, V, D, A, R, L) or an angle.

    A float/int argument is interpreted as a linear-polarization angle in
    radians. Unknown labels are rejected.
    """
    if isinstance(which, str):
        try:
            return SINGLE_KETS[which].copy()
        except KeyError:
            raise ValueError(f"unknown polarization label {which!r}; "
                             f"expected one of {sorted(SINGLE_KETS)}") from None
    return linear_ket(float(which))


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PureState:
    """Normalized two-qubit pure state, amplitudes ordered as `BASIS`."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape != (4,):
            raise ValueError("pure state needs exactly 4 amplitudes")
        norm_sq = float(np.sum(np.abs(amps) ** 2))
        if abs(norm_sq - 1.0) > _NORM_TOL:
            raise ValueError(f"amplitudes not normalized: |psi|^2 = {norm_sq!r}")
        object.__setattr__(self, "amplitudes", _freeze(amps))

    @classmethod
    def from_product(cls, ket_1: np.ndarray, ket_2: np.ndarray) -> "PureState":
        """Tensor product of two single-photon kets."""
        return cls(np.kron(np.asarray(ket_1, dtype=complex),
                           np.asarray(ket_2, dtype=complex)))

    def overlap(self, other: "PureState") -> complex:
        """Inner product <self|other>."""
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """4x4 Hermitian, unit-trace, positive-semidefinite two-qubit state.

    Construction validates Hermiticity (entry-wise, 1e-10), unit trace
    (1e-10) and positivity (eigenvalues >= -1e-9, the numerical floor
    tolerated for linear-inversion outputs).
    """

    matrix: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        if mat.shape != (4, 4):
            raise ValueError("density matrix must be 4x4")
        if np.max(np.abs(mat - mat.conj().T)) > _HERM_TOL:
            raise ValueError("density matrix is not Hermitian")
        tr = complex(np.trace(mat))
        if abs(tr - 1.0) > _TRACE_TOL:
            raise ValueError(f"density matrix trace {tr!r} != 1")
        mat = 0.5 * (mat + mat.conj().T)
        if float(np.linalg.eigvalsh(mat).min()) < -_PSD_TOL:
            raise ValueError("density matrix has a negative eigenvalue "
                             "beyond tolerance")
        object.__setattr__(self, "matrix", _freeze(mat))

    def to_json_dict(self) -> dict:
        """JSON form: real and imaginary parts as row-major 4x4 arrays."""
        return {
            "re": self.matrix.real.tolist(),
            "im": self.matrix.imag.tolist(),
        }

    @classmethod
    def from_json_dict(cls, payload: dict) -> "DensityMatrix":
        re = np.asarray(payload["re"], dtype=float)
        im = np.asarray(payload["im"], dtype=float)
        return cls(re + 1j * im)


@dataclass(frozen=True)
class MetricReport:
    """Derived metrics of a state against a pure target."""

    concurrence: float
    fidelity_target: float
    purity: float
    eigen_spectrum: tuple[float, float, float, float]

    def to_json_dict(self) -> dict:
        return {
            "concurrence": self.concurrence,
            "fidelity_target": self.fidelity_target,
            "purity": self.purity,
            "eigen_spectrum": list(self.eigen_spectrum),
        }


_BELL_AMPLITUDES = {
    "phi+": np.array([1.0, 0.0, 0.0, 1.0]) / _SQRT2,
    "phi-": np.array([1.0, 0.0, 0.0, -1.0]) / _SQRT2,
    "psi+": np.array([0.0, 1.0, 1.0, 0.0]) / _SQRT2,
    "psi-": np.array([0.0, 1.0, -1.0, 0.0]) / _SQRT2,
}

# Accept the unicode spellings alongside the ASCII ones.
_BELL_ALIASES = {
    "Φ⁺": "phi+", "Φ+": "phi+",
    "Φ⁻": "phi-", "Φ-": "phi-",
    "Ψ⁺": "psi+", "Ψ+": "psi+",
    "Ψ⁻": "psi-", "Ψ-": "psi-",
}


def bell_state(kind: str) -> PureState:
    """One of the four maximally entangled Bell states.

    `kind` is "phi+", "phi-", "psi+" or "psi-" (unicode spellings are
    accepted); phi+ has amplitudes (1, 0, 0, 1)/sqrt(2).
    """
    label = _BELL_ALIASES.get(kind.strip(), kind.strip().lower())
    if label not in _BELL_AMPLITUDES:
        raise ValueError(f"unknown Bell state label {kind!r}")
    return PureState(_BELL_AMPLITUDES[label])


def schmidt_pure(theta: float) -> PureState:
    """Schmidt-form state cos(theta)|HH> + sin(theta)|VV>, theta in [0, pi/2]."""
    if not 0.0 <= theta <= np.pi / 2:
        raise ValueError(f"theta {theta!r} outside [0, pi/2]")
    return PureState(np.array([np.cos(theta), 0.0, 0.0, np.sin(theta)], dtype=complex))


def to_density(psi: PureState) -> DensityMatrix:
    """Rank-1 density matrix |psi><psi|."""
    amps = psi.amplitudes
    return DensityMatrix(np.outer(amps, amps.conj()))


def maximally_mixed() -> DensityMatrix:
    return DensityMatrix(np.eye(4, dtype=complex) / 4.0)


def _as_matrix(rho) -> np.ndarray:
    if isinstance(rho, DensityMatrix):
        return rho.matrix
    # Validate raw arrays through the DensityMatrix invariants.
    return DensityMatrix(np.asarray(rho, dtype=complex)).matrix


def concurrence(rho) -> float:
    """Entanglement monotone C(rho) in [0, 1].

    C = max(0, l1 - l2 - l3 - l4) where l_i are the decreasingly sorted
    square roots of the eigenvalues of rho (sy x sy) conj(rho) (sy x sy).
    They are computed as the singular values of X^T (sy x sy) X with
    rho = X X^H, which avoids the precision loss of a non-Hermitian
    eigenvalue problem.
    """
    mat = _as_matrix(rho)
    evals, evecs = np.linalg.eigh(mat)
    factor = evecs * np.sqrt(np.clip(evals, 0.0, None))
    lams = np.linalg.svd(factor.T @ _SYSY @ factor, compute_uv=False)
    return float(max(0.0, lams[0] - lams[1] - lams[2] - lams[3]))


def fidelity_with_pure(rho, psi: PureState) -> float:
    """Overlap <psi|rho|psi> of a (mixed) state with a pure target."""
    mat = _as_matrix(rho)
    amps = psi.amplitudes
    value = float(np.real(amps.conj() @ mat @ amps))
    return min(max(value, 0.0), 1.0)


def purity(rho) -> float:
    """trace(rho^2), between 0.25 (maximally mixed) and 1 (pure)."""
    mat = _as_matrix(rho)
    return float(np.real(np.trace(mat @ mat)))


def eigen_hermitian(rho) -> tuple[np.ndarray, tuple[PureState, ...]]:
    """Spectral decomposition, eigenvalues sorted descending.

    Eigenvector phases are fixed by making the largest-magnitude component
    real and positive, so decompositions are directly comparable.
    """
    mat = _as_matrix(rho)
    evals, evecs = np.linalg.eigh(mat)
    order = np.argsort(evals)[::-1]
    evals = evals[order].real
    states = []
    for idx in order:
        vec = evecs[:, idx].copy()
        pivot = int(np.argmax(np.abs(vec)))
        phase = vec[pivot] / abs(vec[pivot])
        vec = vec / phase
        vec = vec / np.linalg.norm(vec)
        states.append(PureState(vec))
    return evals, tuple(states)


def metric_report(rho, target: PureState) -> MetricReport:
    """Bundle concurrence, target fidelity, purity and spectrum of `rho`."""
    evals, _ = eigen_hermitian(rho)
    return MetricReport(
        concurrence=concurrence(rho),
        fidelity_target=fidelity_with_pure(rho, target),
        purity=purity(rho),
        eigen_spectrum=tuple(float(v) for v in evals),
    )


def random_pure(rng: np.random.Generator) -> PureState:
    """Haar-random two-qubit pure state."""
    vec = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    return PureState(vec / np.linalg.norm(vec))


def random_density(rng: np.random.Generator, rank: int = 4) -> DensityMatrix:
    """Random mixed state from a Ginibre factor of the given rank."""
    if not 1 <= rank <= 4:
        raise ValueError("rank must be in 1..4")
    g = rng.standard_normal((4, rank)) + 1j * rng.standard_normal((4, rank))
    mat = g @ g.conj().T
    return DensityMatrix(mat / np.trace(mat))
