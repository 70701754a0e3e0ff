"""Density-matrix reconstruction from coincidence counts.

A linear (Gram-inverse) estimate seeds a maximum-likelihood refinement
over a Cholesky parameterization, which keeps the iterate physical by
construction. The likelihood is the Gaussian approximation of Poissonian
counting statistics; its gradient is analytic. Bootstrap resampling of the
counts attaches standard deviations to every derived metric.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from biphoton import bell
from biphoton.qstate import (DensityMatrix, MetricReport, PureState,
                             bell_state, concurrence, fidelity_with_pure,
                             metric_report)
from biphoton.sim import _BOOTSTRAP_STREAM, stream

_PROB_FLOOR = 1e-12
_GRAM_COND_LIMIT = 1e6
_INIT_EIGEN_FLOOR = 1e-6

# Orthonormal Hermitian basis: Pauli products / 2, so tr(G_k G_l) = delta_kl.
_PAULIS = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)
_HERM_BASIS = np.stack([np.kron(a, b) / 2.0 for a in _PAULIS for b in _PAULIS])

# Positions of the complex lower-triangular entries in parameter order.
_LOWER_INDICES = ((1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2))


@dataclass(frozen=True, eq=False)
class CholeskyParams:
    """16 real parameters of a lower-triangular T with rho = T T^H / tr."""

    t: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(-1)
        if t.shape != (16,):
            raise ValueError("Cholesky parameterization needs 16 reals")
        t.setflags(write=False)
        object.__setattr__(self, "t", t)

    def lower_triangular(self) -> np.ndarray:
        return _lower_from_params(self.t)

    def density(self) -> DensityMatrix:
        return DensityMatrix(_density_from_params(self.t))


def _lower_from_params(t: np.ndarray) -> np.ndarray:
    tri = np.zeros((4, 4), dtype=complex)
    tri[0, 0], tri[1, 1], tri[2, 2], tri[3, 3] = t[0], t[1], t[2], t[3]
    for i, (r, c) in enumerate(_LOWER_INDICES):
        tri[r, c] = t[4 + 2 * i] + 1j * t[5 + 2 * i]
    return tri


def _params_from_lower(tri: np.ndarray) -> np.ndarray:
    t = np.empty(16)
    t[0:4] = np.real(np.diag(tri))
    for i, (r, c) in enumerate(_LOWER_INDICES):
        t[4 + 2 * i] = tri[r, c].real
        t[5 + 2 * i] = tri[r, c].imag
    return t


def _density_from_params(t: np.ndarray) -> np.ndarray:
    tri = _lower_from_params(t)
    gram = tri @ tri.conj().T
    return gram / np.real(np.trace(gram))


def params_from_density(rho, floor: float = _INIT_EIGEN_FLOOR) -> CholeskyParams:
    """Parameters whose induced state matches `rho` after flooring eigenvalues.

    Eigenvalues below `floor` are raised to it (and the state renormalized)
    so the Cholesky factor exists even for rank-deficient inputs.
    """
    mat = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    evals, evecs = np.linalg.eigh(mat)
    evals = np.clip(evals, floor, None)
    mat = (evecs * evals) @ evecs.conj().T
    mat /= np.real(np.trace(mat))
    return CholeskyParams(_params_from_lower(np.linalg.cholesky(mat)))


def record_arrays(records) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    projectors = np.stack([rec.setting.projector() for rec in records])
    counts = np.array([rec.counts for rec in records], dtype=float)
    pairs = np.array([rec.expected_pairs for rec in records], dtype=float)
    return projectors, counts, pairs


def linear_inversion(records) -> np.ndarray:
    """Gram-inverse estimate from count frequencies.

    Returns a Hermitian, unit-trace 4x4 matrix that may carry small
    negative eigenvalues. Rejects plans whose projectors do not span the
    operator space (condition number above 1e6).
    """
    projectors, counts, pairs = record_arrays(records)
    design = np.real(np.einsum("nij,kji->nk", projectors, _HERM_BASIS))
    singulars = np.linalg.svd(design, compute_uv=False)
    if singulars[-1] <= 0 or singulars[0] / singulars[-1] > _GRAM_COND_LIMIT:
        raise ValueError("measurement plan is rank deficient: projectors do "
                         "not span the two-qubit operator space")
    freqs = counts / pairs
    coeffs = np.linalg.lstsq(design, freqs, rcond=None)[0]
    mat = np.einsum("k,kij->ij", coeffs, _HERM_BASIS)
    mat = 0.5 * (mat + mat.conj().T)
    return mat / np.real(np.trace(mat))


def objective_and_gradient(t: np.ndarray, counts: np.ndarray,
                           pairs: np.ndarray,
                           projectors: np.ndarray) -> tuple[float, np.ndarray]:
    """Gaussian-approximation Poisson objective and its analytic gradient.

    objective = sum_v (n_v - N_v p_v)^2 / (2 N_v max(p_v, floor)) over the
    records; the gradient is with respect to the 16 Cholesky parameters.
    """
    tri = _lower_from_params(np.asarray(t, dtype=float))
    gram = tri @ tri.conj().T
    trace = float(np.real(np.trace(gram)))
    rho = gram / trace
    probs = np.real(np.einsum("nij,ji->n", projectors, rho))
    floored = np.maximum(probs, _PROB_FLOOR)
    residuals = counts - pairs * probs
    value = float(np.sum(residuals ** 2 / (2.0 * pairs * floored)))

    # d(objective)/d(p_v); the floor freezes the denominator when active.
    dldp = -residuals / floored
    free = probs > _PROB_FLOOR
    dldp[free] -= residuals[free] ** 2 / (2.0 * pairs[free] * probs[free] ** 2)

    weight = np.einsum("n,nij->ij", dldp, projectors)
    weight = (weight - np.sum(dldp * probs) * np.eye(4)) / trace
    gmat = 2.0 * weight @ tri
    grad = np.empty(16)
    grad[0:4] = np.real(np.diag(gmat))
    for i, (r, c) in enumerate(_LOWER_INDICES):
        grad[4 + 2 * i] = gmat[r, c].real
        grad[5 + 2 * i] = gmat[r, c].imag
    return value, grad


@dataclass(frozen=True)
class TomographyResult:
    """Reconstructed state with metrics, diagnostics and (optional) errors."""

    rho: DensityMatrix
    metrics: MetricReport
    uncertainties: dict | None
    likelihood: float
    iterations: int
    converged: bool
    plan_id: str | None
    objective_trace: tuple

    def to_json_dict(self) -> dict:
        return {
            "rho": self.rho.to_json_dict(),
            "metrics": self.metrics.to_json_dict(),
            "uncertainties": self.uncertainties,
            "likelihood": self.likelihood,
            "iterations": self.iterations,
            "converged": self.converged,
            "plan": self.plan_id,
        }


def mle_reconstruct(records, init=None, *, target: PureState | None = None,
                    plan_id: str | None = None, max_iterations: int = 10_000,
                    ftol: float = 1e-9) -> TomographyResult:
    """Maximum-likelihood reconstruction over the Cholesky parameterization.

    `init` seeds the optimizer (matrix or DensityMatrix); by default the
    linear-inversion estimate is used, falling back to the maximally mixed
    state when the plan is ill-conditioned for inversion. The optimizer is
    L-BFGS-B with the analytic gradient; it stops when the objective
    improvement per iteration falls below `ftol` or at `max_iterations`
    (in which case the result is flagged via `converged=False`).

    `target` selects the pure state the fidelity metric is reported
    against (default: phi+).
    """
    records = list(records)
    if not records:
        raise ValueError("no records to reconstruct from")
    projectors, counts, pairs = record_arrays(records)
    if target is None:
        target = bell_state("phi+")

    if init is None:
        try:
            init_mat = linear_inversion(records)
        except ValueError:
            init_mat = np.eye(4, dtype=complex) / 4.0
    else:
        init_mat = init.matrix if isinstance(init, DensityMatrix) else np.asarray(init, dtype=complex)
    t0 = params_from_density(init_mat).t

    trace_values: list[float] = []

    def fun(t):
        return objective_and_gradient(t, counts, pairs, projectors)

    def record_iterate(tk):
        trace_values.append(objective_and_gradient(tk, counts, pairs, projectors)[0])

    trace_values.append(fun(t0)[0])
    res = minimize(fun, t0, jac=True, method="L-BFGS-B",
                   callback=record_iterate,
                   options={"maxiter": max_iterations, "ftol": ftol,
                            "gtol": 1e-10, "maxfun": 10 * max_iterations})
    rho = CholeskyParams(res.x).density()
    converged = bool(res.success) and res.nit < max_iterations
    return TomographyResult(
        rho=rho,
        metrics=metric_report(rho, target),
        uncertainties=None,
        likelihood=float(res.fun),
        iterations=int(res.nit),
        converged=converged,
        plan_id=plan_id,
        objective_trace=tuple(trace_values),
    )


def bootstrap_errors(records, replicas: int = 200, seed: int = 0, *,
                     resample: bool = True, target: PureState | None = None,
                     plan: "bell.ChshPlan | None" = None) -> dict:
    """Standard deviations of concurrence, fidelity and S over resampled data.

    Each replica redraws every count as Poisson(n_v) (stream derived from
    (seed, replica index)), re-runs the reconstruction and recomputes the
    metrics; `resample=False` replays the original counts, which must give
    identically zero spread. The CHSH statistic is evaluated on each
    replica's state at `plan` (default: the optimal analyzer set).
    """
    if replicas < 2:
        raise ValueError("bootstrap needs at least 2 replicas")
    records = list(records)
    if target is None:
        target = bell_state("phi+")
    if plan is None:
        plan = bell.OPTIMAL_PLAN
    conc = np.empty(replicas)
    fid = np.empty(replicas)
    s_val = np.empty(replicas)
    for r in range(replicas):
        if resample:
            rng = stream(seed, _BOOTSTRAP_STREAM, r)
            replica = [dataclasses.replace(rec, counts=float(rng.poisson(rec.counts)))
                       for rec in records]
        else:
            replica = records
        result = mle_reconstruct(replica, target=target)
        conc[r] = concurrence(result.rho)
        fid[r] = fidelity_with_pure(result.rho, target)
        s_val[r] = bell.chsh_S(result.rho, plan).S
    return {
        "concurrence": float(np.std(conc, ddof=1)),
        "fidelity": float(np.std(fid, ddof=1)),
        "S": float(np.std(s_val, ddof=1)),
    }
