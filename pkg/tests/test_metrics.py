import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from perturbrnn.errors import ContractError
from perturbrnn.metrics import (
    NAN,
    WEIGHT_EXPLOSION,
    RunStatus,
    decorrelation_loss,
    detect_instability,
    sequence_loss,
    step_loss,
    step_losses,
)
from perturbrnn.rnn_core import forward_clean, init_params

# a grid keeps squared differences clear of underflow
finite = st.integers(-800, 800).map(lambda k: k / 8)


def brute_covariance(x):
    M, H = x.shape
    mu = [sum(x[m, i] for m in range(M)) / M for i in range(H)]
    cov = np.zeros((H, H))
    for i in range(H):
        for j in range(H):
            cov[i, j] = sum((x[m, i] - mu[i]) * (x[m, j] - mu[j]) for m in range(M)) / M
    return cov


class TestStepLoss:
    @pytest.mark.parametrize("y, target, expected", [
        ([0.3, -2.0], [0.3, -2.0], 0.0),
        ([1.0, 2.0], [0.0, 0.0], 5.0),
        ([-1.0], [1.0], 4.0),
    ])
    def test_values(self, y, target, expected):
        assert step_loss(y, target) == expected

    def test_mismatch(self):
        with pytest.raises(ContractError):
            step_loss([1.0, 2.0], [1.0])

    @given(arrays(float, 4, elements=finite), arrays(float, 4, elements=finite))
    def test_nonnegative_and_zero_iff_equal(self, y, t):
        loss = step_loss(y, t)
        assert loss >= 0
        assert (loss == 0) == bool(np.all(y == t))


class TestSequenceLoss:
    def test_zero(self):
        y = np.ones((4, 2))
        assert sequence_loss(y, y) == 0.0

    def test_two_steps(self):
        y = np.array([[1.0], [np.sqrt(3.0)]])
        assert sequence_loss(y, np.zeros((2, 1))) == pytest.approx(2.0, abs=1e-15)

    def test_matches_per_step_oracle(self):
        rng = np.random.default_rng(0)
        y, t = rng.normal(size=(2, 30, 3))
        expected = sum(step_loss(y[i], t[i]) for i in range(30)) / 30
        assert sequence_loss(y, t) == pytest.approx(expected, rel=1e-14)

    def test_accepts_trace(self):
        p = init_params((2, 5, 3), seed=0)
        u = np.random.default_rng(1).normal(size=(6, 2))
        tr = forward_clean(p, u)
        t = np.zeros((6, 3))
        assert sequence_loss(tr, t) == sequence_loss(tr.y, t)

    def test_batched(self):
        rng = np.random.default_rng(2)
        y, t = rng.normal(size=(2, 7, 4, 2))
        per = sequence_loss(y, t, per_sequence=True)
        assert per.shape == (4,)
        for i in range(4):
            assert per[i] == pytest.approx(sequence_loss(y[:, i], t[:, i]), rel=1e-14)
        assert sequence_loss(y, t) == pytest.approx(per.mean(), rel=1e-14)

    def test_mask(self):
        y = np.array([[1.0], [2.0], [3.0]])
        ell = step_losses(y, np.zeros_like(y), mask=[0, 1, 1])
        np.testing.assert_array_equal(ell, [0, 4, 9])
        assert sequence_loss(y, np.zeros_like(y), mask=[0, 0, 1]) == 3.0

    def test_length_mismatch(self):
        with pytest.raises(ContractError):
            sequence_loss(np.zeros((3, 1)), np.zeros((2, 1)))
        with pytest.raises(ContractError):
            step_losses(np.zeros((3, 1)), np.zeros((3, 1)), mask=[1, 1])


class TestDecorrelationLoss:
    def test_orthogonal_one_hot(self):
        # signed one-hot patterns: zero mean, unit variance, one unit active per step
        x = np.vstack([np.eye(4), -np.eye(4)]) * 2.0
        assert decorrelation_loss(x) == 0.0

    def test_unsigned_one_hot_is_centered(self):
        # plain one-hot rows have a shared mean, so centred covariances are -1/H^2
        x = np.tile(np.eye(4), (3, 1))
        cov = brute_covariance(x)
        assert cov[1, 0] == pytest.approx(-1 / 16)
        assert decorrelation_loss(x) == pytest.approx(np.mean(cov[np.tril_indices(4, -1)] ** 2))

    def test_uncorrelated_signs(self):
        # columns of a Hadamard matrix: zero mean, unit variance, orthogonal
        h = np.array([[1, 1, 1, 1], [1, -1, 1, -1], [1, 1, -1, -1], [1, -1, -1, 1]], float)
        assert decorrelation_loss(h[:, 1:]) == 0.0

    def test_perfectly_correlated(self):
        a = np.array([1.0, -1.0, 1.0, -1.0])
        assert decorrelation_loss(np.column_stack([a, a])) == 1.0

    def test_brute_force(self):
        x = np.random.default_rng(3).normal(size=(40, 5))
        cov = brute_covariance(x)
        expected = np.mean(cov[np.tril_indices(5, -1)] ** 2)
        assert abs(decorrelation_loss(x) - expected) < 1e-12

    def test_batched_sequences_pool_samples(self):
        x = np.random.default_rng(4).normal(size=(10, 3, 4))
        assert decorrelation_loss(x) == decorrelation_loss(x.reshape(30, 4))

    def test_correlation_switch(self):
        a = np.array([1.0, -1.0, 1.0, -1.0])
        x = np.column_stack([3 * a, 0.5 * a])
        assert decorrelation_loss(x) == pytest.approx(2.25)
        assert decorrelation_loss(x, correlation=True) == pytest.approx(1.0)

    def test_too_few_samples(self):
        with pytest.raises(ContractError):
            decorrelation_loss(np.ones((1, 3)))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2 ** 31), st.integers(2, 6))
    def test_permutation_invariant(self, seed, H):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(12, H))
        perm = rng.permutation(H)
        assert decorrelation_loss(x[:, perm]) == pytest.approx(decorrelation_loss(x), rel=1e-12, abs=1e-15)


class TestInstability:
    def test_fresh_params_stable(self):
        status = detect_instability(init_params((2, 10, 1), seed=0), 0.5)
        assert status.stable and status.label() == "Stable"

    def test_nan_loss(self):
        status = detect_instability(init_params((2, 10, 1), seed=0), float("nan"), epoch=3)
        assert status == RunStatus.unstable(3, NAN)

    def test_nan_weight(self):
        p = init_params((2, 10, 1), seed=0)
        p.R[0, 0] = np.inf
        assert detect_instability(p, 1.0).cause == NAN

    def test_explosion(self):
        p = init_params((2, 10, 1), seed=0)
        p.A *= 1e7 / np.linalg.norm(p.A)
        status = detect_instability(p, 1.0, epoch=7)
        assert status.cause == WEIGHT_EXPLOSION
        assert status.label() == "Unstable(WeightExplosion@7)"

    def test_threshold_configurable(self):
        p = init_params((2, 10, 1), seed=0)
        assert not detect_instability(p, 1.0, threshold=1e-3).stable

    def test_monotone(self):
        p = init_params((2, 10, 1), seed=0)
        p.B *= 1e8
        assert not any(detect_instability(p, 1.0).stable for _ in range(3))
