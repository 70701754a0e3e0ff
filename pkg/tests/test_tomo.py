"""Tests for linear inversion, MLE reconstruction and bootstrap errors."""

import dataclasses

import numpy as np
import pytest

from biphoton.qstate import (bell_state, fidelity_with_pure, maximally_mixed,
                             random_density, to_density)
from biphoton.sim import (CountRecord, MeasurementSetting, acquire_tomography,
                          exact_tomography, tomography_plan)
from biphoton.tomo import (CholeskyParams, bootstrap_errors, linear_inversion,
                           mle_reconstruct, objective_and_gradient,
                           params_from_density, record_arrays)

PLAN = tomography_plan()


def sampled_records(rho, mean_pairs, seed):
    return acquire_tomography(rho, PLAN, mean_pairs, seed)


class TestCholeskyParams:
    def test_any_parameters_give_physical_state(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            params = CholeskyParams(rng.standard_normal(16) * 3)
            rho = params.density()
            assert np.trace(rho.matrix).real == pytest.approx(1.0, abs=1e-12)
            assert np.linalg.eigvalsh(rho.matrix).min() >= -1e-12

    def test_round_trip_through_density(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            rho = random_density(rng)
            rebuilt = params_from_density(rho).density()
            assert np.linalg.norm(rebuilt.matrix - rho.matrix) <= 1e-5

    def test_wrong_length_rejected(self):
        with pytest.raises(ValueError):
            CholeskyParams(np.zeros(15))


class TestLinearInversion:
    def test_exact_phi_plus(self):
        rho = to_density(bell_state("phi+"))
        estimate = linear_inversion(exact_tomography(rho, PLAN, 10000))
        assert np.max(np.abs(estimate - rho.matrix)) <= 1e-10

    def test_exact_maximally_mixed(self):
        rho = maximally_mixed()
        estimate = linear_inversion(exact_tomography(rho, PLAN, 10000))
        assert np.max(np.abs(estimate - rho.matrix)) <= 1e-10

    def test_finite_count_error_scale(self):
        # Monte-Carlo oracle: at N = 1e4/setting the 95th-percentile
        # Frobenius error measures ~0.059 over 100 seeds.
        rho = to_density(bell_state("phi+"))
        errors = []
        for seed in range(100):
            estimate = linear_inversion(sampled_records(rho, 10000, seed))
            errors.append(np.linalg.norm(estimate - rho.matrix))
        assert np.percentile(errors, 95) <= 0.065
        assert np.median(errors) <= 0.045

    def test_rank_deficient_plan_rejected(self):
        rho = to_density(bell_state("phi+"))
        setting = MeasurementSetting.of("H", "H")
        records = [CountRecord(setting, 100.0, 1000.0)] * 16
        with pytest.raises(ValueError, match="rank deficient"):
            linear_inversion(records)


class TestGradient:
    def test_matches_central_differences(self):
        rng = np.random.default_rng(11)
        rho = random_density(rng)
        projectors, counts, pairs = record_arrays(sampled_records(rho, 5000, 1))
        step = 1e-6
        for _ in range(20):
            t = rng.standard_normal(16)
            _, grad = objective_and_gradient(t, counts, pairs, projectors)
            numeric = np.empty(16)
            for k in range(16):
                plus, minus = t.copy(), t.copy()
                plus[k] += step
                minus[k] -= step
                numeric[k] = (objective_and_gradient(plus, counts, pairs, projectors)[0]
                              - objective_and_gradient(minus, counts, pairs, projectors)[0]) / (2 * step)
            rel = np.linalg.norm(grad - numeric) / np.linalg.norm(numeric)
            assert rel < 1e-5


class TestMleReconstruct:
    def test_round_trip_fidelity(self):
        rho = to_density(bell_state("phi+"))
        result = mle_reconstruct(sampled_records(rho, 10000, 21))
        assert fidelity_with_pure(result.rho, bell_state("phi+")) >= 0.99
        assert result.converged

    def test_exact_init_stays_put(self):
        rng = np.random.default_rng(13)
        rho = random_density(rng)
        records = exact_tomography(rho, PLAN, 10000)
        result = mle_reconstruct(records, init=rho)
        assert result.iterations <= 1
        assert np.max(np.abs(result.rho.matrix - rho.matrix)) <= 1e-9

    def test_agrees_with_linear_inversion_on_exact_data(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            rho = random_density(rng)
            records = exact_tomography(rho, PLAN, 10000)
            mle = mle_reconstruct(records).rho.matrix
            lin = linear_inversion(records)
            assert np.linalg.norm(mle - lin) <= 1e-8

    def test_always_physical_even_for_adversarial_counts(self):
        rng = np.random.default_rng(19)
        for _ in range(20):
            counts = rng.choice([0.0, 1.0, 50.0, 1e5], size=16)
            records = [CountRecord(s, float(c), 1000.0)
                       for s, c in zip(PLAN, counts)]
            result = mle_reconstruct(records)
            mat = result.rho.matrix
            assert np.trace(mat).real == pytest.approx(1.0, abs=1e-12)
            assert np.linalg.eigvalsh(mat).min() >= -1e-12

    def test_objective_trace_is_monotone(self):
        rho = to_density(bell_state("phi+"))
        result = mle_reconstruct(sampled_records(rho, 10000, 23))
        trace = result.objective_trace
        assert all(trace[i + 1] <= trace[i] + 1e-9 for i in range(len(trace) - 1))

    def test_permutation_invariance(self):
        # identical up to floating-point path differences in the optimizer,
        # far below the statistical scale of the estimate
        rng = np.random.default_rng(29)
        rho = random_density(rng)
        records = sampled_records(rho, 5000, 31)
        shuffled = list(records)
        rng.shuffle(shuffled)
        a = mle_reconstruct(records).rho.matrix
        b = mle_reconstruct(shuffled).rho.matrix
        assert np.linalg.norm(a - b) <= 1e-6

    def test_iteration_cap_flags_result(self):
        rho = to_density(bell_state("phi+"))
        result = mle_reconstruct(sampled_records(rho, 10000, 37), max_iterations=1)
        assert not result.converged

    def test_json_payload(self):
        rho = to_density(bell_state("phi+"))
        result = mle_reconstruct(sampled_records(rho, 2000, 39), plan_id="hvdr16")
        payload = result.to_json_dict()
        assert payload["plan"] == "hvdr16"
        assert set(payload["rho"]) == {"re", "im"}
        assert payload["iterations"] == result.iterations


class TestBootstrapErrors:
    def test_no_resampling_gives_zero_spread(self):
        rho = to_density(bell_state("phi+"))
        records = exact_tomography(rho, PLAN, 5000)
        errors = bootstrap_errors(records, replicas=5, seed=0, resample=False)
        assert errors == {"concurrence": 0.0, "fidelity": 0.0, "S": 0.0}

    def test_positive_and_deterministic(self):
        rho = to_density(bell_state("phi+"))
        records = sampled_records(rho, 3000, 41)
        first = bootstrap_errors(records, replicas=20, seed=7)
        second = bootstrap_errors(records, replicas=20, seed=7)
        assert first == second
        assert all(v > 0 for v in first.values())

    def test_replica_floor(self):
        rho = to_density(bell_state("phi+"))
        with pytest.raises(ValueError):
            bootstrap_errors(sampled_records(rho, 1000, 2), replicas=1, seed=0)

    def test_replace_preserves_settings(self):
        rec = CountRecord(MeasurementSetting.of("H", "V"), 12.0, 100.0)
        clone = dataclasses.replace(rec, counts=15.0)
        assert clone.setting is rec.setting
        assert clone.counts == 15.0
