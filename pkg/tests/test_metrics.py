"""
Tests for evaluation metrics - R², coherence, Babel and code statistics.
"""

from itertools import combinations

import numpy as np
import pytest

from core.dictionary import Dictionary, EncoderConfig, Variant
from core.encoders import SparseCode, encode_batch
from core.errors import ConfigError, DimensionError, InvariantError, NoEligibleSampleError, NumericError
from core.metrics import (
    activation_stats,
    babel,
    babel_curve,
    coactivation_babel,
    mutual_coherence,
    r_squared,
    residual_curve,
    selection_positions,
)
from core.numeric import make_rng


def _unit_columns(rng, m, p):
    d = rng.standard_normal((m, p))
    return d / np.linalg.norm(d, axis=0)


def _brute_force_babel(D, r):
    """max over j and |S| = r with j ∉ S of sum_{i in S} |D_i^T D_j|."""
    gram = np.abs(D.T @ D)
    p = D.shape[1]
    best = 0.0
    for j in range(p):
        others = [i for i in range(p) if i != j]
        for subset in combinations(others, r):
            best = max(best, float(sum(gram[i, j] for i in subset)))
    return best


class TestRSquared:
    """Test cases for r_squared."""

    def test_perfect_reconstruction(self):
        """Test R² = 1 for X_hat = X."""
        X = make_rng(0).standard_normal((5, 3))
        assert r_squared(X, X) == 1.0

    def test_mean_model(self):
        """Test R² = 0 when every reconstruction is the batch mean."""
        X = make_rng(1).standard_normal((6, 4))
        assert r_squared(X, np.tile(X.mean(axis=0), (6, 1))) == pytest.approx(0.0, abs=1e-12)

    def test_two_sample_example(self):
        """Test x = (0,0),(2,0) against x_hat = (1,0),(1,0)."""
        X = np.array([[0.0, 0.0], [2.0, 0.0]])
        X_hat = np.array([[1.0, 0.0], [1.0, 0.0]])
        assert r_squared(X, X_hat) == pytest.approx(0.0)

    def test_order_invariant(self):
        """Test that permuting samples leaves R² unchanged."""
        rng = make_rng(2)
        X = rng.standard_normal((8, 3))
        X_hat = X + 0.1 * rng.standard_normal((8, 3))
        order = rng.permutation(8)
        assert r_squared(X[order], X_hat[order]) == pytest.approx(r_squared(X, X_hat), rel=1e-12)

    def test_constant_batch(self):
        """Test that zero variance raises NumericError."""
        with pytest.raises(NumericError):
            r_squared(np.ones((3, 2)), np.ones((3, 2)))

    def test_single_sample(self):
        """Test that one sample is rejected."""
        with pytest.raises(DimensionError):
            r_squared(np.zeros((1, 2)), np.zeros((1, 2)))


class TestCoherence:
    """Test cases for mutual_coherence and babel."""

    def test_identity(self):
        """Test that an orthonormal basis has zero coherence and Babel."""
        assert mutual_coherence(np.eye(4)) == 0.0
        assert babel(np.eye(4), 3) == 0.0

    def test_duplicated_column(self):
        """Test coherence 1 for parallel atoms."""
        D = np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        assert mutual_coherence(D) == pytest.approx(1.0)

    def test_two_atom_example(self):
        """Test columns (1,0),(0.6,0.8) give 0.6."""
        D = np.array([[1.0, 0.6], [0.0, 0.8]])
        assert mutual_coherence(D) == pytest.approx(0.6)

    def test_babel_order_one_is_coherence(self):
        """Test mu_1(1) = mutual coherence exactly."""
        D = _unit_columns(make_rng(3), 5, 9)
        assert babel(D, 1) == mutual_coherence(D)

    def test_babel_matches_subset_search(self):
        """Test the closed form against a brute-force subset search on random dictionaries."""
        rng = make_rng(4)
        for _ in range(60):
            m = int(rng.integers(2, 6))
            p = int(rng.integers(2, 8))
            D = _unit_columns(rng, m, p)
            for r in range(1, p):
                assert babel(D, r) == pytest.approx(_brute_force_babel(D, r), abs=1e-12)

    def test_babel_non_decreasing(self):
        """Test that the curve grows with r."""
        D = _unit_columns(make_rng(5), 6, 12)
        curve = babel_curve(D, range(1, 12))
        assert all(b >= a for a, b in zip(curve.values, curve.values[1:]))
        assert curve.values[4] == pytest.approx(babel(D, 5))

    def test_order_out_of_range(self):
        """Test that r outside [1, p-1] raises ConfigError."""
        D = np.eye(3)
        with pytest.raises(ConfigError):
            babel(D, 0)
        with pytest.raises(ConfigError):
            babel(D, 3)
        with pytest.raises(ConfigError):
            babel_curve(D, [1, 5])

    def test_unnormalized_rejected(self):
        """Test that non-unit columns raise InvariantError."""
        with pytest.raises(InvariantError):
            mutual_coherence(np.array([[2.0, 0.0], [0.0, 1.0]]))

    def test_single_atom(self):
        """Test that coherence needs two atoms."""
        with pytest.raises(DimensionError):
            mutual_coherence(np.array([[1.0], [0.0]]))


class TestCoactivationBabel:
    """Test cases for coactivation_babel."""

    def test_two_atom_support(self):
        """Test one sample using (1,0) and (0.6,0.8) gives 0.6."""
        D = np.array([[1.0, 0.6, 0.0], [0.0, 0.8, 1.0]])
        code = SparseCode(p=3, indices=np.array([0, 1]), values=np.array([1.0, 0.5]))
        summary = coactivation_babel([code], D, r=1)
        assert summary.mean == pytest.approx(0.6)
        assert summary.max == pytest.approx(0.6)
        assert summary.evaluated == 1 and summary.skipped == 0

    def test_orthogonal_supports(self):
        """Test mean 0 when every sample uses orthogonal atoms."""
        D = np.eye(4)
        codes = [SparseCode(p=4, indices=np.array([0, 2]), values=np.ones(2)) for _ in range(3)]
        assert coactivation_babel(codes, D).mean == 0.0

    def test_repeated_mp_atoms_deduplicated(self):
        """Test that an atom picked twice counts once in the support."""
        D = np.array([[1.0, 0.6], [0.0, 0.8]])
        code = SparseCode(p=2, indices=np.array([0, 1, 0]), values=np.array([1.0, 0.2, 0.1]))
        assert coactivation_babel([code], D).mean == pytest.approx(0.6)

    def test_topk_one_has_no_eligible_sample(self):
        """Test that k = 1 codes are all skipped and raise."""
        rng = make_rng(6)
        D = _unit_columns(rng, 4, 6)
        model = Dictionary(d=D, b_pre=np.zeros(4), encoder_weights=D.copy(), encoder_bias=np.zeros(6))
        codes = encode_batch(model, EncoderConfig(variant=Variant.TOPK, k=1), rng.standard_normal((5, 4))).codes()
        with pytest.raises(NoEligibleSampleError, match="skipped"):
            coactivation_babel(codes, D, r=1)

    def test_support_order(self):
        """Test r = None uses |S| - 1 per sample and labels itself."""
        D = np.array([[1.0, 0.6, 0.0], [0.0, 0.8, 1.0]])
        codes = [
            SparseCode(p=3, indices=np.array([0, 1, 2]), values=np.ones(3)),
            SparseCode(p=3, indices=np.array([2]), values=np.ones(1)),
        ]
        summary = coactivation_babel(codes, D, r=None)
        assert summary.evaluated == 1 and summary.skipped == 1
        assert summary.mean == pytest.approx(babel(D, 2))
        assert summary.order_label == "support-1"

    def test_quantiles_ordered(self):
        """Test five non-decreasing quantiles bounded by max."""
        rng = make_rng(7)
        D = _unit_columns(rng, 5, 10)
        codes = [SparseCode(p=10, indices=rng.choice(10, 3, replace=False), values=np.ones(3)) for _ in range(40)]
        summary = coactivation_babel(codes, D, r=2)
        assert len(summary.quantiles) == 5
        assert summary.quantiles == sorted(summary.quantiles)
        assert summary.quantiles[-1] <= summary.max

    @pytest.mark.parametrize("r", [1, 2, 3])
    def test_restricted_bounded_by_global(self, r):
        """Test that every per-sample value is at most mu_1(r) of the whole dictionary."""
        rng = make_rng(10)
        D = _unit_columns(rng, 4, 9)
        codes = [SparseCode(p=9, indices=rng.choice(9, 5, replace=False), values=np.ones(5)) for _ in range(30)]
        summary = coactivation_babel(codes, D, r=r)
        assert summary.max <= babel(D, r) + 1e-12
        for code in codes:
            support = code.support()
            assert babel(D[:, support], r) <= babel(D, r) + 1e-12


class TestActivationStats:
    """Test cases for activation_stats and selection_positions."""

    def test_constant_atom(self):
        """Test freq and mean value when atom 0 is always 2.0."""
        codes = [SparseCode(p=2, indices=np.array([0]), values=np.array([2.0])) for _ in range(4)]
        stats = activation_stats(codes, 2)
        assert stats.freq.tolist() == [1.0, 0.0]
        assert stats.mean_value.tolist() == [2.0, 0.0]
        assert np.isnan(stats.mean_value_when_active[1])

    def test_two_sample_example(self):
        """Test freq 0.5, mean 0.5 and conditional mean 1.0."""
        codes = [
            SparseCode(p=1, indices=np.array([0]), values=np.array([1.0])),
            SparseCode(p=1, indices=np.array([], dtype=np.int64), values=np.array([])),
        ]
        stats = activation_stats(codes, 1)
        assert stats.freq[0] == 0.5
        assert stats.mean_value[0] == 0.5
        assert stats.mean_value_when_active[0] == 1.0

    def test_mp_first_pick(self):
        """Test that an atom always chosen first has mean selection step 1."""
        codes = [
            SparseCode(p=6, indices=np.array([5, 2]), values=np.array([1.0, 0.3]), selection_order=np.array([1, 2]))
            for _ in range(3)
        ]
        stats = activation_stats(codes, 6)
        assert stats.mean_selection_step[5] == 1.0
        assert stats.mean_selection_step[2] == 2.0

    def test_shallow_positions_by_value(self):
        """Test that shallow codes rank entries by descending value."""
        code = SparseCode(p=4, indices=np.array([0, 1, 3]), values=np.array([0.2, 0.9, 0.5]))
        assert selection_positions(code).tolist() == [3, 1, 2]

    def test_frequency_weighted_mean(self):
        """Test mean_value = freq x mean_value_when_active for nonnegative codes."""
        rng = make_rng(8)
        codes = []
        for _ in range(30):
            support = rng.choice(8, 3, replace=False)
            codes.append(SparseCode(p=8, indices=support, values=rng.random(3)))
        stats = activation_stats(codes, 8)
        used = stats.freq > 0
        assert np.allclose(stats.mean_value[used], (stats.freq * stats.mean_value_when_active)[used], atol=1e-9)

    def test_rankings(self):
        """Test frequency and value rankings with lower-index tie-break."""
        codes = [
            SparseCode(p=3, indices=np.array([2]), values=np.array([1.0])),
            SparseCode(p=3, indices=np.array([1, 2]), values=np.array([3.0, 1.0])),
        ]
        stats = activation_stats(codes, 3)
        assert stats.rank_by_frequency().tolist() == [2, 1, 0]
        assert stats.rank_by_value().tolist() == [1, 2, 0]

    def test_empty_batch(self):
        """Test that no codes raise DimensionError."""
        with pytest.raises(DimensionError):
            activation_stats([], 3)

    def test_repeated_mp_atom_uses_first_pick(self):
        """Test that an atom picked at steps 1 and 3 reports step 1."""
        code = SparseCode(
            p=2, indices=np.array([0, 1, 0]), values=np.array([1.0, 0.2, 0.1]), selection_order=np.array([1, 2, 3])
        )
        stats = activation_stats([code], 2)
        assert stats.mean_selection_step.tolist() == [1.0, 2.0]

    def test_frequencies_sum_to_mean_l0(self):
        """Test that sum(freq) equals the mean support size."""
        rng = make_rng(9)
        codes = [
            SparseCode(p=10, indices=rng.choice(10, size, replace=False), values=rng.random(size))
            for size in rng.integers(0, 6, 25)
        ]
        stats = activation_stats(codes, 10)
        mean_l0 = np.mean([code.support().size for code in codes])
        assert stats.freq.sum() == pytest.approx(mean_l0, abs=1e-12)


class TestResidualCurve:
    """Test cases for residual_curve."""

    def test_mp_orthonormal_reaches_zero(self):
        """Test exact recovery at k = m on an orthonormal complete dictionary."""
        rng = make_rng(9)
        q = np.linalg.qr(rng.standard_normal((4, 4)))[0]
        model = Dictionary(d=q, b_pre=np.zeros(4))
        X = rng.standard_normal((10, 4))
        cfg = EncoderConfig(variant=Variant.MP, k=4, absolute_argmax=True)
        curve = residual_curve(model, cfg, X, 4)
        assert curve.ks == [1, 2, 3, 4]
        assert curve.mean_errors[-1] < 1e-20

    def test_mp_non_increasing(self):
        """Test that the MP curve never rises, including past early exits."""
        rng = make_rng(10)
        model = Dictionary(d=_unit_columns(rng, 3, 8), b_pre=np.zeros(3))
        X = rng.standard_normal((20, 3))
        X[0] = 0.0
        curve = residual_curve(model, EncoderConfig(variant=Variant.MP, k=3), X, 15)
        errors = curve.mean_errors
        assert all(b <= a + 1e-15 for a, b in zip(errors, errors[1:]))

    def test_relu_flat(self):
        """Test that ReLU reports the same error at every k."""
        rng = make_rng(11)
        D = _unit_columns(rng, 3, 5)
        model = Dictionary(d=D, b_pre=np.zeros(3), encoder_weights=D.copy(), encoder_bias=np.zeros(5))
        curve = residual_curve(model, EncoderConfig(variant=Variant.RELU), rng.standard_normal((6, 3)), 4)
        assert len(set(curve.mean_errors)) == 1

    def test_topk_uses_each_k(self):
        """Test that TopK errors vary with k."""
        model = Dictionary(d=np.eye(3), b_pre=np.zeros(3), encoder_weights=np.eye(3), encoder_bias=np.zeros(3))
        X = np.array([[3.0, 2.0, 1.0]])
        curve = residual_curve(model, EncoderConfig(variant=Variant.TOPK, k=1), X, 3)
        assert curve.mean_errors == pytest.approx([5.0, 1.0, 0.0])

    def test_k_max_positive(self):
        """Test that k_max = 0 raises ConfigError."""
        with pytest.raises(ConfigError):
            residual_curve(Dictionary(d=np.eye(2), b_pre=np.zeros(2)), EncoderConfig(variant=Variant.MP, k=1), np.ones((2, 2)), 0)
