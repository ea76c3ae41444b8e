import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perturbrnn.errors import ConfigurationError, ContractError, DataError
from perturbrnn.learning_rules import UpdateSet
from perturbrnn.rnn_core import (
    NODE,
    WEIGHT,
    NoiseStream,
    RnnParams,
    apply_updates,
    forward_clean,
    forward_node_noisy,
    forward_weight_noisy,
    init_params,
    load_params,
    sample_noise,
    save_params,
)

# tanh(1), tanh(0.5 tanh(1)), tanh(1.1), tanh(1.5) from the standard library
X1 = 0.7615941559557649
X2 = 0.3633994843890525
XN1 = 0.8004990217606297
XW1 = 0.9051482536448664


def scalar_net(**kw):
    return RnnParams(np.array([[1.0]]), np.array([[0.5]]), np.array([[2.0]]), **kw)


def trace_equal(a, b):
    np.testing.assert_array_equal(a.alpha, b.alpha)
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.y, b.y)


class TestInitParams:
    def test_deterministic(self):
        a = init_params((1, 4, 1), seed=7)
        b = init_params((1, 4, 1), seed=7)
        for k in a.matrices():
            np.testing.assert_array_equal(a.matrices()[k], b.matrices()[k])

    def test_uniform_bound(self):
        p = init_params((3, 100, 2), seed=0, scheme="uniform-scaled")
        assert np.all(np.abs(p.A) <= 1 / np.sqrt(3))
        assert np.all(np.abs(p.R) <= 1 / np.sqrt(100))

    def test_gaussian_scale(self):
        p = init_params((1, 400, 1), seed=0, scheme="gaussian")
        assert abs(p.R.std() - 0.05) < 0.002

    @pytest.mark.parametrize("dims", [(1, 0, 1), (0, 3, 1), (2, 3, -1)])
    def test_bad_dims(self, dims):
        with pytest.raises(ConfigurationError):
            init_params(dims, seed=0)

    def test_decorrelation_identity(self):
        p = init_params((2, 5, 1), seed=0, decorrelation=True)
        np.testing.assert_array_equal(p.D, np.eye(5))

    def test_float32(self):
        p = init_params((2, 5, 1), seed=0, dtype=np.float32)
        tr = forward_clean(p, np.ones((3, 2)))
        assert tr.y.dtype == np.float32


class TestForwardClean:
    def test_zero_weights(self):
        p = RnnParams(np.zeros((3, 2)), np.zeros((3, 3)), np.zeros((1, 3)))
        tr = forward_clean(p, np.random.default_rng(0).normal(size=(6, 2)))
        assert not tr.x.any() and not tr.y.any()

    def test_scalar_recursion(self):
        tr = forward_clean(scalar_net(), np.array([[1.0], [0.0]]))
        np.testing.assert_allclose(tr.x[:, 0], [X1, X2], rtol=1e-15)
        np.testing.assert_allclose(tr.y[1, 0], 2 * X2, rtol=1e-15)
        np.testing.assert_array_equal(tr.y, tr.beta)

    def test_identity_decorrelation(self):
        p = init_params((2, 6, 3), seed=1)
        pd = RnnParams(p.A, p.R, p.B, np.eye(6))
        u = np.random.default_rng(1).normal(size=(8, 2))
        trace_equal(forward_clean(p, u), forward_clean(pd, u))
        np.testing.assert_array_equal(forward_clean(pd, u).x_star, forward_clean(p, u).x)

    def test_decorrelated_wiring(self):
        rng = np.random.default_rng(3)
        p = init_params((2, 4, 1), seed=3, decorrelation=True)
        p.D = p.D + 0.3 * rng.normal(size=(4, 4))
        u = rng.normal(size=(3, 2))
        tr = forward_clean(p, u)
        s = np.zeros(4)
        for t in range(3):
            x = np.tanh(p.A @ u[t] + p.R @ s)
            s = p.D @ x
            np.testing.assert_allclose(tr.y[t], p.B @ s, rtol=1e-13)

    def test_leaky_state(self):
        p = scalar_net(leak=4.0)
        tr = forward_clean(p, np.array([[1.0], [0.0]]))
        x1 = 0.25 * X1
        np.testing.assert_allclose(tr.x[:, 0], [x1, 0.25 * np.tanh(0.5 * x1) + 0.75 * x1], rtol=1e-15)

    def test_batch_matches_single(self):
        p = init_params((2, 5, 2), seed=2, decorrelation=True)
        u = np.random.default_rng(2).normal(size=(7, 3, 2))
        batch = forward_clean(p, u)
        for i in range(3):
            single = forward_clean(p, u[:, i])
            np.testing.assert_allclose(batch.y[:, i], single.y, rtol=1e-14, atol=1e-15)

    def test_contract_errors(self):
        p = init_params((2, 3, 1), seed=0)
        with pytest.raises(ContractError):
            forward_clean(p, np.ones((4, 3)))
        with pytest.raises(ContractError):
            forward_clean(p, np.ones((0, 2)))
        with pytest.raises(DataError):
            forward_clean(p, np.array([[1.0, np.nan]]))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), scale=st.floats(0.1, 20.0))
    def test_states_bounded(self, seed, scale):
        p = init_params((2, 6, 1), seed=seed)
        u = scale * np.random.default_rng(seed).normal(size=(10, 2))
        tr = forward_clean(p, u)
        assert np.all(np.abs(tr.x) <= 1.0)
        assert np.all(np.abs(tr.x[np.abs(tr.alpha) < 15]) < 1.0)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), tau=st.floats(1.0, 30.0), x0=st.floats(-5.0, 5.0))
    def test_leaky_states_in_hull(self, seed, tau, x0):
        p = init_params((1, 3, 1), seed=seed, leak=tau)
        tr = forward_clean(p, np.random.default_rng(seed).normal(size=(12, 1)), x0=np.full(3, x0))
        lo, hi = min(x0, -1.0), max(x0, 1.0)
        assert np.all(tr.x >= lo - 1e-12) and np.all(tr.x <= hi + 1e-12)

    def test_pure(self):
        p = init_params((2, 5, 2), seed=4)
        before = p.copy()
        u = np.ones((4, 2))
        trace_equal(forward_clean(p, u), forward_clean(p, u))
        np.testing.assert_array_equal(p.R, before.R)


class TestNodeNoisy:
    def test_zero_noise_is_clean(self):
        p = init_params((2, 5, 2), seed=5, decorrelation=True)
        u = np.random.default_rng(5).normal(size=(6, 2))
        clean = forward_clean(p, u)
        noisy = forward_node_noisy(p, u, NoiseStream.zeros_like_node(clean))
        trace_equal(clean, noisy)

    def test_scalar_noise(self):
        noise = NoiseStream(NODE, 1e-2, np.array([[0.1], [0.0]]), np.zeros((2, 1)))
        tr = forward_node_noisy(scalar_net(), np.array([[1.0], [0.0]]), noise)
        np.testing.assert_allclose(tr.alpha[:, 0], [1.1, 0.5 * XN1], rtol=1e-15)
        np.testing.assert_allclose(tr.x[0, 0], XN1, rtol=1e-15)

    def test_output_noise_added(self):
        noise = NoiseStream(NODE, 1e-2, np.zeros((2, 1)), np.array([[0.2], [-0.1]]))
        clean = forward_clean(scalar_net(), np.array([[1.0], [0.0]]))
        tr = forward_node_noisy(scalar_net(), np.array([[1.0], [0.0]]), noise)
        np.testing.assert_allclose(tr.y - clean.y, [[0.2], [-0.1]], rtol=1e-12)

    def test_length_mismatch(self):
        noise = NoiseStream(NODE, 1e-2, np.zeros((3, 1)), np.zeros((3, 1)))
        with pytest.raises(ContractError):
            forward_node_noisy(scalar_net(), np.ones((2, 1)), noise)

    def test_kind_mismatch(self):
        noise = sample_noise(WEIGHT, (1, 1, 1), 2, 1e-2, 0)
        with pytest.raises(ContractError):
            forward_node_noisy(scalar_net(), np.ones((2, 1)), noise)


class TestWeightNoisy:
    def test_zero_noise_is_clean(self):
        p = init_params((2, 5, 2), seed=6)
        u = np.random.default_rng(6).normal(size=(6, 2))
        z = sample_noise(WEIGHT, p.dims, 6, 1.0, 0)
        z = NoiseStream(WEIGHT, 1.0, 0 * z.xi, 0 * z.nu, 0 * z.zeta)
        trace_equal(forward_clean(p, u), forward_weight_noisy(p, u, z))

    def test_scalar_noise(self):
        noise = NoiseStream(WEIGHT, 1e-2, np.array([[[0.5]], [[0.0]]]), np.zeros((2, 1, 1)),
                            np.zeros((2, 1, 1)))
        tr = forward_weight_noisy(scalar_net(), np.array([[1.0], [0.0]]), noise)
        np.testing.assert_allclose(tr.x[0, 0], XW1, rtol=1e-15)

    def test_matches_explicit_loop(self):
        rng = np.random.default_rng(8)
        p = init_params((2, 3, 2), seed=8)
        u = rng.normal(size=(4, 2))
        noise = sample_noise(WEIGHT, p.dims, 4, 0.05, 9)
        tr = forward_weight_noisy(p, u, noise)
        x = np.zeros(3)
        for t in range(4):
            x = np.tanh((p.A + noise.xi[t]) @ u[t] + (p.R + noise.nu[t]) @ x)
            np.testing.assert_allclose(tr.y[t], (p.B + noise.zeta[t]) @ x, rtol=1e-13)

    def test_node_noise_rejected(self):
        noise = sample_noise(NODE, (1, 1, 1), 2, 1e-2, 0)
        with pytest.raises(ContractError):
            forward_weight_noisy(scalar_net(), np.ones((2, 1)), noise)

    def test_shape_mismatch(self):
        noise = sample_noise(WEIGHT, (1, 2, 1), 2, 1e-2, 0)
        with pytest.raises(ContractError):
            forward_weight_noisy(scalar_net(), np.ones((2, 1)), noise)


class TestSampleNoise:
    def test_deterministic(self):
        a = sample_noise(NODE, (1, 4, 2), 5, 1e-2, 11)
        b = sample_noise(NODE, (1, 4, 2), 5, 1e-2, 11)
        np.testing.assert_array_equal(a.xi, b.xi)
        np.testing.assert_array_equal(a.nu, b.nu)

    def test_variance(self):
        s = sample_noise(NODE, (1, 1000, 1), 5000, 1e-2, np.random.default_rng(0))
        assert abs(s.xi.var() / 1e-2 - 1) < 0.05
        assert abs(s.xi.mean()) < 1e-3

    def test_distinct_timesteps(self):
        s = sample_noise(NODE, (1, 8, 1), 3, 1e-2, 0)
        assert not np.array_equal(s.xi[0], s.xi[1])

    @pytest.mark.parametrize("sigma2", [0.0, -1e-3])
    def test_bad_sigma(self, sigma2):
        with pytest.raises(ConfigurationError):
            sample_noise(NODE, (1, 2, 1), 3, sigma2, 0)


class TestApplyUpdates:
    def test_zero_rates(self):
        p = init_params((2, 3, 1), seed=0, decorrelation=True)
        upd = UpdateSet(np.ones((3, 2)), np.ones((3, 3)), np.ones((1, 3)), np.ones((3, 3)))
        q = apply_updates(p, upd, 0.0, 0.0)
        for k in p.matrices():
            np.testing.assert_array_equal(p.matrices()[k], q.matrices()[k])

    def test_arithmetic(self):
        p = RnnParams(np.array([[1.0]]), np.zeros((1, 1)), np.zeros((1, 1)))
        upd = UpdateSet(np.array([[2.0]]), np.zeros((1, 1)), np.zeros((1, 1)))
        assert apply_updates(p, upd, 0.5).A[0, 0] == 0.0

    def test_missing_dD(self):
        p = init_params((2, 3, 1), seed=0, decorrelation=True)
        upd = UpdateSet(np.ones((3, 2)), np.ones((3, 3)), np.ones((1, 3)))
        np.testing.assert_array_equal(apply_updates(p, upd, 0.1, 0.1).D, p.D)

    def test_epsilon_on_D(self):
        p = init_params((2, 3, 1), seed=0, decorrelation=True)
        upd = UpdateSet(np.zeros((3, 2)), np.zeros((3, 3)), np.zeros((1, 3)), np.ones((3, 3)))
        np.testing.assert_allclose(apply_updates(p, upd, 1.0, 0.25).D, np.eye(3) - 0.25)

    def test_shape_mismatch(self):
        p = init_params((2, 3, 1), seed=0)
        upd = UpdateSet(np.ones((2, 2)), np.ones((3, 3)), np.ones((1, 3)))
        with pytest.raises(ContractError):
            apply_updates(p, upd, 0.1)


class TestCheckpoint:
    @pytest.mark.parametrize("decorrelation,leak", [(False, None), (True, None), (False, 10.0)])
    def test_roundtrip_bit_exact(self, tmp_path, decorrelation, leak):
        p = init_params((3, 7, 2), seed=12, decorrelation=decorrelation, leak=leak)
        if decorrelation:
            p.D = p.D + np.random.default_rng(0).normal(size=p.D.shape) / 3
        q = load_params(save_params(p, tmp_path / "ck.npz"))
        assert q.leak == p.leak and q.decorrelated == p.decorrelated
        for k, v in p.matrices().items():
            assert q.matrices()[k].tobytes() == v.tobytes()
