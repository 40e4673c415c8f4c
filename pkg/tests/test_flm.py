import json

import numpy as np
import pytest

from wfda.errors import (
    ConfigurationError,
    DomainError,
    InsufficientDataError,
    UndefinedScoreError,
)
from wfda.flm import (
    cve,
    fit_wflm,
    loocvs,
    model_from_dict,
    model_to_dict,
    predict,
    select_num_components,
)
from wfda.fpca import FunctionalDataset, FunctionalSample, compute_scores
from wfda.numerics import Domain, StepWeight, UniformWeight, build_grid
from wfda.wfpca import wfpca_fit

UNIT = Domain(0.0, 1.0)
S2_STEP = StepWeight((0.0, 0.25, 0.5, 0.75, 1.0), (0.0, 1 / 6, 1 / 3, 1 / 2))


def dense_dataset(value_rows, grid, responses=None):
    samples = tuple(
        FunctionalSample(f"s{i}", grid.points, row) for i, row in enumerate(value_rows)
    )
    return FunctionalDataset(samples, grid.domain, responses)


def rank_two_curves(grid, n, seed, rho=(4.0, 1.0), noise=0.0):
    rng = np.random.default_rng(seed)
    t = grid.points
    # orthonormal pair on [0, 1]
    basis = np.vstack([np.sqrt(2) * np.cos(np.pi * t), np.sqrt(2) * np.sin(np.pi * t)])
    xi = rng.normal(size=(n, 2)) * np.sqrt(rho)
    rows = 0.5 + 2 * t + xi @ basis
    if noise:
        rows = rows + rng.normal(0, noise, size=rows.shape)
    return rows, xi, rng


class TestFit:
    def test_recovers_single_component_coefficient(self):
        # Y = 3 * xi_1 exactly; the fitted coefficient function (orientation
        # free, unlike the signed component coefficient) approaches 3 * psi_1
        grid = build_grid(UNIT, 101)
        rows, xi, rng = rank_two_curves(grid, 500, seed=1)
        y = 3.0 * xi[:, 0]
        data = dense_dataset(rows, grid, responses=y)
        model = fit_wflm(data, UniformWeight(), grid, 1)
        truth = 3.0 * np.sqrt(2) * np.cos(np.pi * grid.points)
        assert np.max(np.abs(model.beta_values - truth)) < 0.05 * np.max(np.abs(truth))

    def test_noise_only_responses_give_small_coefficients(self):
        grid = build_grid(UNIT, 51)
        hits = 0
        reps = 100
        for seed in range(reps):
            rows, xi, rng = rank_two_curves(grid, 100, seed=seed)
            y = rng.normal(size=100)
            data = dense_dataset(rows, grid, responses=y)
            model = fit_wflm(data, UniformWeight(), grid, 2)
            rho = model.eig.eigenvalues[:2]
            bound = 3.0 * np.sqrt(rho * np.var(y) / 100) / rho
            hits += int(np.all(np.abs(model.beta_k) < bound))
        assert hits / reps >= 0.95

    def test_zero_truncation_predicts_mean(self):
        grid = build_grid(UNIT, 31)
        rows, _, _ = rank_two_curves(grid, 20, seed=2)
        y = np.arange(20.0)
        data = dense_dataset(rows, grid, responses=y)
        model = fit_wflm(data, UniformWeight(), grid, 0)
        preds = predict(model, data, grid)
        np.testing.assert_allclose(preds, np.full(20, y.mean()))

    def test_requested_truncation_capped_with_warning(self):
        grid = build_grid(UNIT, 31)
        rows, xi, _ = rank_two_curves(grid, 30, seed=3)
        data = dense_dataset(rows, grid, responses=xi[:, 0])
        with pytest.warns(UserWarning, match="truncating"):
            model = fit_wflm(data, UniformWeight(), grid, 10)
        assert model.m <= 3

    def test_missing_responses(self):
        grid = build_grid(UNIT, 31)
        rows, _, _ = rank_two_curves(grid, 10, seed=4)
        data = dense_dataset(rows, grid)
        with pytest.raises(ConfigurationError):
            fit_wflm(data, UniformWeight(), grid, 1)

    def test_beta_tables_match_component_sums(self):
        grid = build_grid(UNIT, 51)
        rows, xi, _ = rank_two_curves(grid, 80, seed=5)
        y = xi[:, 0] - 0.5 * xi[:, 1]
        data = dense_dataset(rows, grid, responses=y)
        model = fit_wflm(data, S2_STEP.normalized(), grid, 2)
        recomputed = model.beta_k @ model.eig.phi_z[: model.m]
        np.testing.assert_allclose(model.beta_w_values, recomputed, atol=1e-12)


class TestPredict:
    def test_mean_curve_predicts_mu_y(self):
        grid = build_grid(UNIT, 51)
        rows, xi, _ = rank_two_curves(grid, 40, seed=6)
        y = xi[:, 0] + 0.3
        data = dense_dataset(rows, grid, responses=y)
        model = fit_wflm(data, UniformWeight(), grid, 2)
        new = dense_dataset(model.eig.mean.values[None, :], grid)
        assert predict(model, new, grid)[0] == pytest.approx(model.mu_y, abs=1e-12)

    def test_hand_built_arithmetic(self):
        grid = build_grid(UNIT, 51)
        rows, xi, _ = rank_two_curves(grid, 40, seed=7)
        data = dense_dataset(rows, grid, responses=xi[:, 0])
        model = fit_wflm(data, UniformWeight(), grid, 1)
        # curve = mean + 0.5 * phi_1 has score exactly 0.5
        curve = model.eig.mean.values + 0.5 * model.eig.phi_z[0]
        new = dense_dataset(curve[None, :], grid)
        expected = model.mu_y + model.beta_k[0] * 0.5
        assert predict(model, new, grid)[0] == pytest.approx(expected, abs=1e-10)

    def test_out_of_domain_sample_rejected(self):
        grid = build_grid(UNIT, 31)
        rows, xi, _ = rank_two_curves(grid, 20, seed=8)
        data = dense_dataset(rows, grid, responses=xi[:, 0])
        model = fit_wflm(data, UniformWeight(), grid, 1)
        outside = FunctionalDataset(
            (FunctionalSample("new", np.array([0.5, 1.5]), np.array([0.0, 0.0])),),
            Domain(0.0, 2.0),
        )
        with pytest.raises(DomainError):
            predict(model, outside, grid)

    def test_prediction_linear_in_mixtures(self):
        grid = build_grid(UNIT, 51)
        rows, xi, _ = rank_two_curves(grid, 60, seed=9)
        y = 2 * xi[:, 0] - xi[:, 1]
        data = dense_dataset(rows, grid, responses=y)
        model = fit_wflm(data, UniformWeight(), grid, 2)
        mu = model.eig.mean.values
        a = 0.3
        x1 = mu + 1.3 * model.eig.phi_z[0]
        x2 = mu - 0.7 * model.eig.phi_z[1]
        mix = mu + a * (x1 - mu) + (1 - a) * (x2 - mu)
        preds = predict(model, dense_dataset(np.vstack([x1, x2, mix]), grid), grid)
        combo = model.mu_y + a * (preds[0] - model.mu_y) + (1 - a) * (preds[1] - model.mu_y)
        assert preds[2] == pytest.approx(combo, abs=1e-10)

    def test_scale_equivariance(self):
        grid = build_grid(UNIT, 51)
        rows, xi, _ = rank_two_curves(grid, 50, seed=10)
        y = xi[:, 0] + 0.2 * xi[:, 1] + 0.1
        c = 3.7
        base = dense_dataset(rows, grid, responses=y)
        scaled = dense_dataset(rows, grid, responses=c * y)
        m1 = fit_wflm(base, UniformWeight(), grid, 2)
        m2 = fit_wflm(scaled, UniformWeight(), grid, 2)
        np.testing.assert_allclose(m2.beta_k, c * m1.beta_k, rtol=1e-12)
        p1 = predict(m1, base, grid)
        p2 = predict(m2, base, grid)
        np.testing.assert_allclose(p2 - m2.mu_y, c * (p1 - m1.mu_y), rtol=1e-10)
        cve1 = cve(base, UniformWeight(), grid, 2)
        cve2 = cve(scaled, UniformWeight(), grid, 2)
        assert cve2 == pytest.approx(c**2 * cve1, rel=1e-10)


class TestCve:
    def test_hand_arithmetic_m0(self):
        grid = build_grid(UNIT, 21)
        rows = np.vstack([np.sin(grid.points), np.cos(grid.points), grid.points])
        y = np.array([0.0, 0.0, 3.0])
        data = dense_dataset(rows, grid, responses=y)
        for mode in ("fast", "exact"):
            assert cve(data, UniformWeight(), grid, 0, mode) == pytest.approx(4.5, abs=1e-12)

    def test_fast_equals_exact_for_noiseless_rank_m(self):
        grid = build_grid(UNIT, 41)
        rows, xi, rng = rank_two_curves(grid, 10, seed=11)
        y = rng.normal(size=10)  # arbitrary responses; X exactly rank 2
        data = dense_dataset(rows, grid, responses=y)
        fast = cve(data, UniformWeight(), grid, 2, "fast")
        exact = cve(data, UniformWeight(), grid, 2, "exact")
        assert abs(fast - exact) < 1e-12

    def test_perfect_linear_model_interpolates(self):
        grid = build_grid(UNIT, 51)
        rows, xi, _ = rank_two_curves(grid, 50, seed=12)
        y = 1.5 * xi[:, 0] - 0.8 * xi[:, 1] + 2.0
        data = dense_dataset(rows, grid, responses=y)
        assert cve(data, UniformWeight(), grid, 2) < 1e-6

    def test_needs_three_samples(self):
        grid = build_grid(UNIT, 11)
        rows = np.ones((2, 11))
        data = dense_dataset(rows, grid, responses=np.array([1.0, 2.0]))
        with pytest.raises(InsufficientDataError):
            cve(data, UniformWeight(), grid, 0)

    def test_exact_matches_naive_refit_loop(self):
        grid = build_grid(UNIT, 41)
        rows, xi, rng = rank_two_curves(grid, 12, seed=13, noise=0.3)
        y = xi[:, 0] + rng.normal(0, 0.2, size=12)
        data = dense_dataset(rows, grid, responses=y)
        got = cve(data, UniformWeight(), grid, 2, "exact")
        total = 0.0
        for i in range(12):
            keep = [j for j in range(12) if j != i]
            train = data.subset(keep)
            model = fit_wflm(train, UniformWeight(), grid, 2)
            pred = predict(model, data.subset([i]), grid)[0]
            total += (y[i] - pred) ** 2
        assert got == pytest.approx(total / 12, abs=1e-12)


class TestSelect:
    def test_single_candidate(self):
        grid = build_grid(UNIT, 31)
        rows, xi, _ = rank_two_curves(grid, 30, seed=14)
        data = dense_dataset(rows, grid, responses=xi[:, 0])
        m, trace = select_num_components(data, UniformWeight(), grid, [2])
        assert m == 2
        assert len(trace) == 1

    def test_one_component_truth_selected(self):
        # rank-1 curves with measurement noise: the second retained component
        # is pure noise and leave-one-out selection should reject it
        hits = 0
        grid = build_grid(UNIT, 51)
        t = grid.points
        psi1 = np.sqrt(2) * np.cos(np.pi * t)
        for seed in range(100):
            rng = np.random.default_rng(seed)
            xi = rng.normal(0, 2.0, size=200)
            rows = 0.5 + 2 * t + xi[:, None] * psi1 + rng.normal(0, 0.25, size=(200, 51))
            data = dense_dataset(rows, grid, responses=2.0 * xi)
            m, _ = select_num_components(data, UniformWeight(), grid, [1, 2])
            hits += int(m == 1)
        assert hits >= 80

    def test_empty_candidates(self):
        grid = build_grid(UNIT, 11)
        rows = np.ones((5, 11))
        data = dense_dataset(rows, grid, responses=np.arange(5.0))
        with pytest.raises(ConfigurationError):
            select_num_components(data, UniformWeight(), grid, [])


class TestLoocvs:
    def test_hand_arithmetic(self):
        grid = build_grid(UNIT, 21)
        rows = np.vstack([np.sin(grid.points), np.cos(grid.points), grid.points])
        y = np.array([0.0, 0.0, 3.0])
        data = dense_dataset(rows, grid, responses=y)
        # numerator 13.5, denominator 6
        assert loocvs(data, UniformWeight(), grid, 0) == pytest.approx(2.25, abs=1e-12)

    def test_perfect_predictions_score_zero(self):
        grid = build_grid(UNIT, 51)
        rows, xi, _ = rank_two_curves(grid, 50, seed=15)
        y = xi[:, 0]
        data = dense_dataset(rows, grid, responses=y)
        assert loocvs(data, UniformWeight(), grid, 2) < 1e-6

    def test_zero_variance_rejected(self):
        grid = build_grid(UNIT, 21)
        rows = np.vstack([np.sin(grid.points), np.cos(grid.points), grid.points])
        data = dense_dataset(rows, grid, responses=np.ones(3))
        with pytest.raises(UndefinedScoreError):
            loocvs(data, UniformWeight(), grid, 0)


class TestSerialization:
    def test_round_trip_preserves_predictions(self):
        grid = build_grid(UNIT, 51)
        rows, xi, rng = rank_two_curves(grid, 60, seed=16, noise=0.2)
        y = xi[:, 0] - xi[:, 1] + rng.normal(0, 0.1, size=60)
        data = dense_dataset(rows, grid, responses=y)
        model = fit_wflm(data, S2_STEP.normalized(), grid, 2)
        payload = json.loads(json.dumps(model_to_dict(model)))
        restored = model_from_dict(payload)
        p1 = predict(model, data, grid)
        p2 = predict(restored, data, restored.grid)
        np.testing.assert_allclose(p1, p2, atol=1e-9)

    def test_weight_spec_survives(self):
        grid = build_grid(UNIT, 31)
        rows, xi, _ = rank_two_curves(grid, 20, seed=17)
        data = dense_dataset(rows, grid, responses=xi[:, 0])
        model = fit_wflm(data, S2_STEP.normalized(), grid, 1)
        restored = model_from_dict(model_to_dict(model))
        assert restored.eig.weight == model.eig.weight
