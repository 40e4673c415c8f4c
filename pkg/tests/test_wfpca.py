import numpy as np
import pytest

from wfda.errors import ConfigurationError, ShapeError
from wfda.fpca import (
    FunctionalDataset,
    FunctionalSample,
    MeanFunction,
    compute_scores,
    fit_fpca,
)
from wfda.numerics import (
    Domain,
    ExponentialWeight,
    StepWeight,
    UniformWeight,
    build_grid,
    evaluate_weight,
    inner_product_nu,
)
from wfda.wfpca import (
    RadonNikodymRatio,
    change_of_measure,
    transform_to_z,
    wfpca_fit,
    wfpca_scores,
)

UNIT = Domain(0.0, 1.0)
HALFLINE = Domain(0.0)
S2_STEP = StepWeight((0.0, 0.25, 0.5, 0.75, 1.0), (0.0, 1 / 6, 1 / 3, 1 / 2))


def dense_dataset(value_rows, grid, responses=None):
    samples = tuple(
        FunctionalSample(f"s{i}", grid.points, row) for i, row in enumerate(value_rows)
    )
    return FunctionalDataset(samples, grid.domain, responses)


def three_component_dataset(grid, n=200, seed=8, noise=0.0):
    rng = np.random.default_rng(seed)
    t = grid.points
    basis = np.vstack(
        [
            np.sqrt(2) * np.cos(np.pi * t),
            np.sqrt(2) * np.sin(2 * np.pi * t),
            np.sqrt(2) * np.cos(3 * np.pi * t),
        ]
    )
    rho = np.array([6.0, 3.0, 1.0])
    xi = rng.normal(size=(n, 3)) * np.sqrt(rho)
    rows = 1.0 + t + xi @ basis
    if noise:
        rows = rows + rng.normal(0, noise, size=rows.shape)
    return dense_dataset(rows, grid)


class TestTransform:
    def test_uniform_weight_with_zero_mean_is_identity(self):
        grid = build_grid(UNIT, 21)
        data = dense_dataset(np.arange(42.0).reshape(2, 21), grid)
        mean = MeanFunction(grid, np.zeros(21))
        z = transform_to_z(data, mean, UniformWeight())
        for orig, trans in zip(data.samples, z.samples):
            np.testing.assert_array_equal(orig.values, trans.values)

    def test_zero_weight_region_kills_values(self):
        grid = build_grid(UNIT, 101)
        data = dense_dataset(np.full((2, 101), 7.0), grid)
        mean = MeanFunction(grid, np.zeros(101))
        z = transform_to_z(data, mean, S2_STEP)
        mask = grid.points < 0.25
        for sample in z.samples:
            assert np.all(sample.values[mask] == 0.0)

    def test_hand_arithmetic(self):
        # residual 2 at a point with w = 1/2 maps to sqrt(2)
        grid = build_grid(UNIT, 101)
        mean = MeanFunction(grid, np.zeros(101))
        sample = FunctionalSample("a", np.array([0.8]), np.array([2.0]))
        other = FunctionalSample("b", np.array([0.1, 0.9]), np.array([0.0, 0.0]))
        data = FunctionalDataset((sample, other), UNIT)
        z = transform_to_z(data, mean, S2_STEP)
        assert z.samples[0].values[0] == pytest.approx(np.sqrt(2.0), rel=1e-15)

    def test_responses_carried(self):
        grid = build_grid(UNIT, 11)
        data = dense_dataset(np.ones((2, 11)), grid, responses=np.array([1.0, 2.0]))
        z = transform_to_z(data, MeanFunction(grid, np.zeros(11)), UniformWeight())
        np.testing.assert_array_equal(z.responses, [1.0, 2.0])


class TestWfpcaFit:
    def test_uniform_reduces_to_classical_bitwise(self):
        grid = build_grid(UNIT, 51)
        data = three_component_dataset(grid, n=60, noise=0.3)
        weighted = wfpca_fit(data, UniformWeight(), grid, 3)
        classical = fit_fpca(data, grid, 3)
        np.testing.assert_array_equal(weighted.eigenvalues, classical.eigenvalues)
        np.testing.assert_array_equal(weighted.phi_z, classical.phi_z)
        np.testing.assert_array_equal(weighted.phi_w, classical.phi_z)
        np.testing.assert_array_equal(weighted.mean.values, classical.mean.values)
        s1 = compute_scores(data, weighted, grid)
        s2 = compute_scores(data, classical, grid)
        np.testing.assert_array_equal(s1, s2)

    def test_weighted_orthonormality(self):
        grid = build_grid(UNIT, 101)
        data = three_component_dataset(grid)
        for spec in (S2_STEP.normalized(), UniformWeight()):
            eig = wfpca_fit(data, spec, grid, 3)
            m = eig.n_components
            gram = np.array(
                [
                    [inner_product_nu(eig.phi_w[j], eig.phi_w[k], spec, grid) for k in range(m)]
                    for j in range(m)
                ]
            )
            assert np.max(np.abs(gram - np.eye(m))) < 1e-6

    def test_exponential_weight_orthonormality(self):
        rng = np.random.default_rng(10)
        spec = ExponentialWeight(1.0)
        grid = build_grid(HALFLINE, 101, spec)
        t = grid.points
        basis = np.vstack([np.ones_like(t), 1.0 - t, 1.0 - 2 * t + t**2 / 2])
        xi = rng.normal(size=(200, 3)) * np.sqrt([4.0, 2.0, 1.0])
        rows = xi @ basis
        data = dense_dataset(rows, grid)
        eig = wfpca_fit(data, spec, grid, 3)
        m = eig.n_components
        gram = np.array(
            [
                [inner_product_nu(eig.phi_w[j], eig.phi_w[k], spec, grid) for k in range(m)]
                for j in range(m)
            ]
        )
        assert np.max(np.abs(gram - np.eye(m))) < 1e-6

    def test_zero_weight_region_zeroes_phi_w(self):
        grid = build_grid(UNIT, 101)
        data = three_component_dataset(grid, noise=0.2)
        eig = wfpca_fit(data, S2_STEP.normalized(), grid, 3)
        mask = grid.points < 0.25
        assert np.all(eig.phi_w[:, mask] == 0.0)


class TestScores:
    def test_form_equivalence_per_sample(self):
        grid = build_grid(UNIT, 101)
        data = three_component_dataset(grid, noise=0.2)
        for spec in (S2_STEP.normalized(), UniformWeight()):
            eig = wfpca_fit(data, spec, grid, 3)
            z_form = wfpca_scores(data, eig, grid, form="z")
            nu_form = wfpca_scores(data, eig, grid, form="nu")
            assert np.max(np.abs(z_form - nu_form)) < 1e-8

    def test_zero_process_zero_scores(self):
        grid = build_grid(UNIT, 51)
        data = dense_dataset(np.zeros((5, 51)), grid)
        eig = wfpca_fit(
            three_component_dataset(grid), S2_STEP.normalized(), grid, 2
        )
        # replace mean with zero so residuals vanish identically
        from wfda.fpca import Eigensystem

        eig0 = Eigensystem(
            eig.eigenvalues, eig.phi_z, eig.phi_w, MeanFunction(grid, np.zeros(51)), eig.weight
        )
        scores = wfpca_scores(data, eig0, grid)
        assert np.max(np.abs(scores)) == 0.0

    def test_unknown_form(self):
        grid = build_grid(UNIT, 21)
        data = three_component_dataset(grid, n=10)
        eig = wfpca_fit(data, UniformWeight(), grid, 2)
        with pytest.raises(ConfigurationError):
            wfpca_scores(data, eig, grid, form="bogus")


class TestChangeOfMeasure:
    def test_unit_ratio_is_identity(self):
        grid = build_grid(UNIT, 51)
        data = three_component_dataset(grid, n=80)
        eig = wfpca_fit(data, UniformWeight(), grid, 3)
        out = change_of_measure(eig, RadonNikodymRatio(grid, np.ones(51)))
        np.testing.assert_array_equal(out.eigenvalues, eig.eigenvalues)
        np.testing.assert_array_equal(out.phi_z, eig.phi_z)
        np.testing.assert_array_equal(out.phi_w, eig.phi_w)
        assert out.weight == eig.weight

    def test_lebesgue_to_weighted_matches_back_transform(self):
        grid = build_grid(UNIT, 101)
        data = three_component_dataset(grid, noise=0.1)
        spec = S2_STEP.normalized()
        fitted = wfpca_fit(data, spec, grid, 3)
        ratio = RadonNikodymRatio(grid, evaluate_weight(spec, grid.points, UNIT))
        mapped = change_of_measure(fitted, ratio, target_weight=spec)
        assert np.max(np.abs(mapped.phi_w - fitted.phi_w)) < 1e-12
        np.testing.assert_array_equal(mapped.eigenvalues, fitted.eigenvalues)

    def test_synthetic_orthonormality_under_target(self):
        grid = build_grid(UNIT, 101)
        data = three_component_dataset(grid)
        spec = S2_STEP.normalized()
        fitted = wfpca_fit(data, spec, grid, 3)
        ratio = RadonNikodymRatio(grid, evaluate_weight(spec, grid.points, UNIT))
        mapped = change_of_measure(fitted, ratio, target_weight=spec)
        m = mapped.n_components
        gram = np.array(
            [
                [
                    inner_product_nu(mapped.phi_w[j], mapped.phi_w[k], spec, grid)
                    for k in range(m)
                ]
                for j in range(m)
            ]
        )
        assert np.max(np.abs(gram - np.eye(m))) < 1e-6

    def test_grid_mismatch(self):
        grid = build_grid(UNIT, 21)
        other = build_grid(UNIT, 31)
        data = three_component_dataset(grid, n=12)
        eig = wfpca_fit(data, UniformWeight(), grid, 2)
        with pytest.raises(ShapeError):
            change_of_measure(eig, RadonNikodymRatio(other, np.ones(31)))

    def test_eigenvalues_never_change(self):
        grid = build_grid(UNIT, 41)
        data = three_component_dataset(grid, n=50)
        eig = wfpca_fit(data, UniformWeight(), grid, 3)
        rng = np.random.default_rng(2)
        ratio = RadonNikodymRatio(grid, rng.uniform(0.2, 2.0, size=41))
        out = change_of_measure(eig, ratio)
        np.testing.assert_array_equal(out.eigenvalues, eig.eigenvalues)
