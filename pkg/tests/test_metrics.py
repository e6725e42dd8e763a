"""Core variance-decomposition math, checked against independently computed
oracle values (two-pass / exact-fraction arithmetic, frozen before the build)
and against the documented invariants."""

import numpy as np
import pytest

from shapr2 import (
    ShapleyMatrix,
    baseline_r2,
    classical_r2,
    decompose,
    feature_r2_decomposition,
    sample_variance,
    shapley_modified_predictions,
    unique_variance_ratio,
)
from shapr2.errors import (
    DegenerateInput,
    InvalidValue,
    ModelExplainsNothing,
    ShapeError,
)

# golden 6-row fixture and its frozen step-by-step oracle values
GOLDEN_Y = [2.3, 4.1, 1.7, 5.6, 3.9, 4.8]
GOLDEN_YHAT = [2.0, 4.4, 2.1, 5.0, 3.5, 5.2]
GOLDEN_PHI = np.column_stack(
    [[-1.1, 0.9, -1.3, 1.2, 0.1, 1.0], [-0.4, 0.5, -0.2, 0.3, -0.5, 0.6]]
)
GOLDEN = {
    "baseline_r2": 0.9073170731707317,
    "feature_r2": (0.7547944828345676, 0.15252259033616408),
    "shares": (0.8318971450596041, 0.1681028549403959),
    "ratios": (0.13380281690140844, 0.824966078697422),
    "sigma_raw": 0.6802208835341366,
    "sigma_raw_printed": 0.8837014725568942,
}


def golden_matrix() -> ShapleyMatrix:
    return ShapleyMatrix(phi=GOLDEN_PHI, phi0=None, feature_names=("a", "b"))


class TestSampleVariance:
    def test_constant_vector(self):
        assert sample_variance([1, 1, 1, 1]) == 0.0

    def test_two_points(self):
        assert sample_variance([0, 2]) == 2.0

    def test_two_pass_oracle(self):
        # oracle: exact fractions, (0-1.5)^2+... over N-1=3 -> 5/3
        assert sample_variance([0, 1, 2, 3]) == pytest.approx(5 / 3, abs=1e-15)

    def test_too_short(self):
        with pytest.raises(DegenerateInput):
            sample_variance([1.0])

    def test_non_finite(self):
        with pytest.raises(InvalidValue):
            sample_variance([1.0, np.nan, 2.0])
        with pytest.raises(InvalidValue):
            sample_variance([1.0, np.inf])


class TestClassicalR2:
    def test_identity_predictions(self):
        y = [0.5, 1.5, 3.0, -2.0]
        assert classical_r2(y, y) == 1.0

    def test_constant_predictions(self):
        assert classical_r2([0, 1, 2, 3], [5, 5, 5, 5]) == 0.0

    def test_scaled_predictions_oracle(self):
        # var(2y) = 4 var(y); direct evaluation oracle
        assert classical_r2([0, 1, 2, 3], [0, 2, 4, 6]) == pytest.approx(4.0, abs=1e-12)

    def test_may_exceed_one(self):
        assert classical_r2([0, 1], [0, 3]) > 1.0

    def test_degenerate_outcome(self):
        with pytest.raises(DegenerateInput):
            classical_r2([2, 2, 2], [1, 2, 3])

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            classical_r2([1, 2, 3], [1, 2])


class TestBaselineR2:
    def test_perfect_fit(self):
        y = [1.0, 2.0, 5.0]
        assert baseline_r2(y, y) == 1.0

    def test_constant_predictions(self):
        assert baseline_r2([0, 1, 2, 3], [1, 1, 1, 1]) == 0.0

    def test_direct_formula_oracle(self):
        # frozen oracle: var_yhat = 83/48, var_res = 11/48 -> 83/94
        value = baseline_r2([0, 1, 2, 3], [0.5, 1.0, 1.5, 3.5])
        assert value == pytest.approx(83 / 94, abs=1e-15)
        assert value == pytest.approx(0.883, abs=5e-4)

    def test_bounded_even_when_overfit(self):
        rng = np.random.default_rng(0)
        y = rng.standard_normal(50)
        yhat = 10 * rng.standard_normal(50)
        assert 0.0 <= baseline_r2(y, yhat) <= 1.0

    def test_constant_perfectly_predicted(self):
        with pytest.raises(DegenerateInput):
            baseline_r2([3, 3, 3], [3, 3, 3])


class TestShapleyModifiedPredictions:
    def test_null_attribution_column(self):
        yhat = np.array([1.0, 2.0, 3.0])
        phi = np.column_stack([np.zeros(3), [0.5, 0.5, 0.5]])
        out = shapley_modified_predictions(yhat, phi)
        assert np.array_equal(out[:, 0], yhat)

    def test_single_feature_with_exact_additivity(self):
        # with F=1 and phi0 + phi = yhat, the modified column is constant phi0
        phi0 = 2.5
        yhat = np.array([1.0, 4.0, -3.0])
        phi = (yhat - phi0)[:, None]
        out = shapley_modified_predictions(yhat, phi)
        assert np.allclose(out[:, 0], phi0, atol=0)

    def test_elementwise_subtraction(self):
        out = shapley_modified_predictions([1.0, 2.0], np.array([[0.5], [-0.5]]))
        assert np.array_equal(out, np.array([[0.5], [2.5]]))

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            shapley_modified_predictions([1.0, 2.0, 3.0], np.zeros((2, 2)))


class TestFeatureR2Decomposition:
    def test_golden_6row_oracle(self):
        result = decompose(GOLDEN_Y, GOLDEN_YHAT, golden_matrix())
        assert result.baseline_r2 == pytest.approx(GOLDEN["baseline_r2"], abs=1e-12)
        assert result.feature_r2 == pytest.approx(GOLDEN["feature_r2"], abs=1e-12)
        assert result.feature_shares == pytest.approx(GOLDEN["shares"], abs=1e-12)
        assert result.variance_ratios == pytest.approx(GOLDEN["ratios"], abs=1e-12)
        assert result.sigma_unique_raw == pytest.approx(GOLDEN["sigma_raw"], abs=1e-12)
        assert result.sigma_unique == result.sigma_unique_raw  # inside [0, 1]
        assert result.ranking == (0, 1)
        assert not result.all_features_null
        assert result.warnings == ()

    def test_single_feature_takes_whole_baseline(self):
        y = np.array([1.0, 2.0, 4.0, 8.0])
        yhat = np.array([1.5, 2.5, 3.5, 7.0])
        phi = (yhat - yhat.mean())[:, None]
        result = feature_r2_decomposition(y, yhat, phi)
        assert result.feature_r2[0] == pytest.approx(result.baseline_r2, abs=1e-15)
        assert result.feature_shares[0] == pytest.approx(1.0, abs=1e-15)

    def test_null_column_gets_zero(self):
        phi = np.column_stack([GOLDEN_PHI[:, 0], np.zeros(6)])
        result = feature_r2_decomposition(GOLDEN_Y, GOLDEN_YHAT, phi)
        assert result.feature_r2[0] == pytest.approx(result.baseline_r2, abs=1e-15)
        assert result.feature_r2[1] == 0.0
        assert result.variance_ratios[1] == 1.0

    def test_identity_fixture(self):
        y = np.array([0.0, 1.0, 2.0, 5.0])
        phi = (y - y.mean())[:, None]
        result = decompose(y, y, phi)
        assert result.baseline_r2 == 1.0
        assert result.feature_r2[0] == pytest.approx(1.0, abs=1e-15)

    def test_all_null_outcome(self):
        # a model that explains variance but attributes none of it
        y = GOLDEN_Y
        yhat = GOLDEN_YHAT
        phi = np.zeros((6, 3))
        result = decompose(y, yhat, phi)
        assert result.all_features_null
        assert np.array_equal(result.feature_r2, np.zeros(3))
        assert np.array_equal(result.feature_shares, np.zeros(3))
        assert result.baseline_r2 == pytest.approx(GOLDEN["baseline_r2"], abs=1e-12)
        assert result.sigma_unique_raw == 0.0  # zero increase in every column
        assert any("no feature increases" in w for w in result.warnings)

    def test_all_null_with_explains_nothing_model(self):
        # constant predictions: baseline 0, no sigma defined, still no crash
        y = np.array([1.0, 2.0, 3.0, 4.0])
        yhat = np.full(4, 2.5)
        result = decompose(y, yhat, np.zeros((4, 2)))
        assert result.all_features_null
        assert result.baseline_r2 == 0.0
        assert result.sigma_unique is None and result.sigma_unique_raw is None
        assert any("explains no variance" in w for w in result.warnings)

    def test_ranking_tiebreak_ascending_index(self):
        phi = np.column_stack([GOLDEN_PHI[:, 1], GOLDEN_PHI[:, 1], GOLDEN_PHI[:, 0]])
        result = feature_r2_decomposition(GOLDEN_Y, GOLDEN_YHAT, phi)
        assert result.feature_r2[0] == result.feature_r2[1]
        assert result.ranking == (2, 0, 1)

    def test_degenerate_outcome_rejected(self):
        with pytest.raises(DegenerateInput):
            feature_r2_decomposition([1, 1, 1], [0, 1, 2], np.zeros((3, 1)))


class TestUniqueVarianceRatio:
    def test_zero_attributions_zero_raw(self):
        raw, clamped = unique_variance_ratio(GOLDEN_Y, GOLDEN_YHAT, np.zeros((6, 4)))
        assert raw == 0.0 and clamped == 0.0

    def test_orthogonal_ols_equals_one(self):
        # OLS residuals are orthogonal to each regressor; with exactly
        # orthogonal centered features the explained variance equals the sum
        # of per-feature increases, so the ratio is 1.
        from shapr2 import Dataset, fit_ols, linear_shapley

        rng = np.random.default_rng(11)
        n = 64
        q, _ = np.linalg.qr(
            np.column_stack([np.ones(n), rng.standard_normal((n, 3))])
        )
        x = q[:, 1:]
        y = x @ np.array([1.5, -2.0, 0.8]) + 0.3 * rng.standard_normal(n)
        ds = Dataset(x=x, y=y)
        model = fit_ols(ds)
        yhat = model.predict_batch(x)
        matrix = linear_shapley(model.coefficients, model.intercept, ds)
        raw, clamped = unique_variance_ratio(y, yhat, matrix)
        assert raw == pytest.approx(1.0, abs=1e-8)
        assert clamped == pytest.approx(1.0, abs=1e-8)

    def test_correlated_features_about_half(self):
        # moderate uniform correlation: roughly half the explained variance
        # is shared between features rather than uniquely assignable
        from shapr2 import UniformCorrelationSpec, run_cell

        spec = UniformCorrelationSpec(
            rho=0.5,
            n_samples=2000,
            coefficients=(1.0, 1.0, 1.0),
            noise_sd=np.sqrt(3),
            seed=123,
        )
        cell = run_cell(spec)
        assert cell.status == "completed"
        assert cell.sigma_unique == pytest.approx(0.5, abs=0.15)

    def test_printed_form_oracle(self):
        raw, _ = unique_variance_ratio(
            GOLDEN_Y, GOLDEN_YHAT, golden_matrix(), eq7_as_printed=True
        )
        assert raw == pytest.approx(GOLDEN["sigma_raw_printed"], abs=1e-12)

    def test_model_explains_nothing(self):
        y = np.array([0.0, 1.0, 2.0, 3.0])
        yhat = -y  # anti-predictive: residual variance exceeds outcome variance
        with pytest.raises(ModelExplainsNothing):
            unique_variance_ratio(y, yhat, np.zeros((4, 1)))


def random_fixture(rng, n=None, f=None):
    n = n or int(rng.integers(10, 200))
    f = f or int(rng.integers(1, 10))
    y = rng.standard_normal(n)
    slope = rng.uniform(0.3, 1.0)
    yhat = slope * y + 0.3 * rng.standard_normal(n)
    phi = rng.standard_normal((n, f))
    return y, yhat, phi


class TestInvariants:
    def test_sum_identity_and_bounds(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            y, yhat, phi = random_fixture(rng)
            result = decompose(y, yhat, phi)
            if result.all_features_null:
                assert np.array_equal(result.feature_r2, np.zeros(phi.shape[1]))
                continue
            assert abs(result.feature_r2.sum() - result.baseline_r2) <= 1e-10
            assert np.all(result.feature_r2 >= 0.0)
            assert np.all(result.feature_r2 <= result.baseline_r2 + 1e-15)
            assert abs(result.feature_shares.sum() - 1.0) <= 1e-10

    def test_null_feature_appended(self):
        rng = np.random.default_rng(8)
        for _ in range(25):
            y, yhat, phi = random_fixture(rng)
            base = decompose(y, yhat, phi)
            extended = decompose(y, yhat, np.column_stack([phi, np.zeros(len(y))]))
            if base.all_features_null:
                continue
            assert extended.baseline_r2 == base.baseline_r2
            assert extended.feature_r2[-1] == 0.0
            assert extended.feature_r2[:-1] == pytest.approx(
                base.feature_r2, abs=1e-12
            )

    def test_scale_invariance(self):
        rng = np.random.default_rng(9)
        for scale in (2.0, -3.5, 1e-3, 1e4):
            y, yhat, phi = random_fixture(rng)
            base = decompose(y, yhat, phi)
            scaled = decompose(scale * y, scale * yhat, scale * phi)
            if base.all_features_null:
                assert scaled.all_features_null
                continue
            assert scaled.baseline_r2 == pytest.approx(base.baseline_r2, abs=1e-12)
            assert scaled.feature_r2 == pytest.approx(base.feature_r2, abs=1e-12)
            assert scaled.feature_shares == pytest.approx(
                base.feature_shares, abs=1e-12
            )
            assert scaled.ranking == base.ranking

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(10)
        y, yhat, phi = random_fixture(rng, n=60, f=6)
        perm = rng.permutation(6)
        base = decompose(y, yhat, phi)
        permuted = decompose(y, yhat, phi[:, perm])
        assert np.array_equal(permuted.feature_r2, base.feature_r2[perm])

    def test_clamp_never_negative(self):
        # adversarial attributions: removing them *improves* the fit
        rng = np.random.default_rng(12)
        for _ in range(25):
            y, yhat, _ = random_fixture(rng, n=50, f=3)
            residual = np.asarray(y) - np.asarray(yhat)
            phi = np.column_stack(
                [-0.9 * residual, 0.5 * residual, rng.standard_normal(50)]
            )
            result = decompose(y, yhat, phi)
            assert np.all(result.feature_r2 >= 0.0)
            assert np.all(result.variance_ratios <= 1.0)

    def test_clamp_activation_warns(self):
        y = np.array(GOLDEN_Y)
        yhat = np.array(GOLDEN_YHAT)
        phi = np.column_stack([GOLDEN_PHI[:, 0], -0.9 * (y - yhat)])
        result = decompose(y, yhat, phi)
        assert result.variance_ratios[1] == 1.0
        assert any("clamped" in w for w in result.warnings)


class TestShapleyMatrixType:
    def test_rejects_non_finite(self):
        with pytest.raises(InvalidValue):
            ShapleyMatrix(phi=np.array([[np.nan]]), phi0=0.0)

    def test_additivity_gap(self):
        yhat = np.array([1.0, 2.0, 3.0])
        phi = (yhat - 2.0)[:, None]
        matrix = ShapleyMatrix(phi=phi, phi0=2.0)
        assert matrix.additivity_gap(yhat) <= 1e-15
        bad = ShapleyMatrix(phi=phi, phi0=2.5)
        assert bad.additivity_gap(yhat) > 0.1

    def test_default_feature_names(self):
        matrix = ShapleyMatrix(phi=np.zeros((2, 3)), phi0=None)
        assert matrix.feature_names == ("x1", "x2", "x3")
