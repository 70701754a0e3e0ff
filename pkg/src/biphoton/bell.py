"""CHSH estimation from states or from coincidence counts.

Analyzer settings are linear-polarization angles; each measurement is the
+/-1-valued observable P(theta) - P(theta + pi/2). The statistic follows
the sign pattern S = E11 - E12 + E21 + E22 over the four setting pairs,
bounded by 2 for local hidden-variable models and by 2*sqrt(2) for
quantum states.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from biphoton.qstate import DensityMatrix
from biphoton.sim import (CountRecord, MeasurementSetting, _CHSH_STREAM,
                          coincidence_probability, sample_counts, stream)

#: Sign of each correlation in S, indexed [alice setting][bob setting].
SIGNS = np.array([[1.0, -1.0], [1.0, 1.0]])


@dataclass(frozen=True)
class ChshPlan:
    """Two analyzer angles per party, radians."""

    alice: tuple[float, float]
    bob: tuple[float, float]

    def __post_init__(self):
        alice = tuple(float(a) for a in self.alice)
        bob = tuple(float(b) for b in self.bob)
        if len(alice) != 2 or len(bob) != 2:
            raise ValueError("each party needs exactly two analyzer angles")
        if abs(alice[0] - alice[1]) < 1e-12 or abs(bob[0] - bob[1]) < 1e-12:
            raise ValueError("analyzer angles must be distinct within a party")
        object.__setattr__(self, "alice", alice)
        object.__setattr__(self, "bob", bob)

    def to_json_dict(self) -> dict:
        return {"alice": list(self.alice), "bob": list(self.bob)}


#: Analyzer set maximizing S for phi+ (Tsirelson value 2*sqrt(2)).
OPTIMAL_PLAN = ChshPlan((0.0, np.pi / 4), (np.pi / 8, 3 * np.pi / 8))


@dataclass(frozen=True, eq=False)
class ChshResult:
    """Correlation matrix, S and its Poissonian uncertainty."""

    E: np.ndarray
    S: float
    sigma_S: float
    plan: ChshPlan

    def __post_init__(self):
        e = np.asarray(self.E, dtype=float)
        if e.shape != (2, 2):
            raise ValueError("E must be 2x2")
        e.setflags(write=False)
        object.__setattr__(self, "E", e)
        if self.sigma_S < 0:
            raise ValueError("sigma_S must be non-negative")

    def to_json_dict(self) -> dict:
        return {
            "plan": self.plan.to_json_dict(),
            "E": self.E.tolist(),
            "S": self.S,
            "sigma_S": self.sigma_S,
        }


def _observable(angle: float) -> np.ndarray:
    vec = np.array([np.cos(angle), np.sin(angle)], dtype=complex)
    proj = np.outer(vec, vec.conj())
    return 2.0 * proj - np.eye(2)


def correlation(rho: DensityMatrix, a: float, b: float) -> float:
    """Expectation of the joint +/-1 observable at analyzer angles (a, b)."""
    joint = np.kron(_observable(a), _observable(b))
    return float(np.real(np.trace(rho.matrix @ joint)))


def chsh_S(rho: DensityMatrix, plan: ChshPlan = OPTIMAL_PLAN) -> ChshResult:
    """Exact-probability CHSH statistic (sigma_S = 0)."""
    e = np.array([[correlation(rho, a, b) for b in plan.bob]
                  for a in plan.alice])
    return ChshResult(e, float(np.sum(SIGNS * e)), 0.0, plan)


def _outcome_settings(a: float, b: float) -> list[MeasurementSetting]:
    # Outcome order per pair: ++, +-, -+, --
    half_pi = np.pi / 2
    return [MeasurementSetting.of(a, b),
            MeasurementSetting.of(a, b + half_pi),
            MeasurementSetting.of(a + half_pi, b),
            MeasurementSetting.of(a + half_pi, b + half_pi)]


def _pair_angles(plan: ChshPlan) -> list[tuple[float, float]]:
    return [(a, b) for a in plan.alice for b in plan.bob]


def exact_chsh_counts(rho: DensityMatrix, plan: ChshPlan,
                      mean_pairs: float) -> list[CountRecord]:
    """Expected (infinite-statistics) counts for the 16 outcome settings."""
    records = []
    for a, b in _pair_angles(plan):
        for setting in _outcome_settings(a, b):
            p = coincidence_probability(rho, setting)
            records.append(CountRecord(setting, p * mean_pairs, float(mean_pairs)))
    return records


def simulate_chsh_counts(rho: DensityMatrix, plan: ChshPlan,
                         mean_pairs: float, seed: int) -> list[CountRecord]:
    """Poisson-sampled counts, `mean_pairs` pairs per setting pair."""
    records = []
    index = 0
    for a, b in _pair_angles(plan):
        for setting in _outcome_settings(a, b):
            p = coincidence_probability(rho, setting)
            n = sample_counts(p, mean_pairs, stream(seed, _CHSH_STREAM, index))
            records.append(CountRecord(setting, float(n), float(mean_pairs)))
            index += 1
    return records


def chsh_from_counts(records, plan: ChshPlan = OPTIMAL_PLAN) -> ChshResult:
    """S and sigma_S from 16 outcome counts (4 per setting pair).

    Records follow the layout of `simulate_chsh_counts`: setting pairs in
    the order (a1,b1), (a1,b2), (a2,b1), (a2,b2), outcomes ++, +-, -+, --
    within each pair. sigma_S propagates Poissonian count variances to
    first order.
    """
    records = list(records)
    if len(records) != 16:
        raise ValueError(f"expected 16 outcome records, got {len(records)}")
    signs = np.array([1.0, -1.0, -1.0, 1.0])
    e = np.empty((2, 2))
    var_e = np.empty((2, 2))
    for pair_idx in range(4):
        chunk = records[4 * pair_idx:4 * pair_idx + 4]
        counts = np.array([rec.counts for rec in chunk], dtype=float)
        total = counts.sum()
        if total <= 0:
            raise ValueError(f"setting pair {pair_idx} has zero total counts")
        corr = float(np.dot(signs, counts) / total)
        i, j = divmod(pair_idx, 2)
        e[i, j] = corr
        var_e[i, j] = float(np.sum(((signs - corr) / total) ** 2 * counts))
    s_val = float(np.sum(SIGNS * e))
    return ChshResult(e, s_val, float(np.sqrt(var_e.sum())), plan)
