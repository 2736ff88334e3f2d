import numpy as np
import pytest

from sinkflow.errors import ConfigurationError, DimensionError, TrainingError
from sinkflow.gradcheck import relative_error
from sinkflow.model import (
    BatchArrays,
    LossConfig,
    ModelInput,
    ModelParams,
    Sample,
    checkpoint_dict,
    init_params,
    input_size,
    load_checkpoint,
    loss,
    loss_and_grad,
    make_samples,
    predict_plan,
    predict_plans,
    rollout,
    total_loss,
    train,
)
from sinkflow.dataio import write_json
from sinkflow.ot_layer import SinkhornConfig

TIGHT = SinkhornConfig(max_iters=100_000, tol=1e-13, backward_max_iters=100_000, backward_tol=1e-13)


def zero_params(k, hidden=(3,)):
    p = init_params(k, hidden, seed=0)
    return p.with_flat(np.zeros_like(p.flat()))


def random_input(rng, k):
    xs = rng.dirichlet(np.ones(k), size=3)
    bs = np.stack([x[:, None] * rng.dirichlet(np.ones(k), size=k) for x in xs[:2][::-1]])
    return ModelInput(xs, bs)


class TestInput:
    def test_vector_layout(self):
        xs = np.array([[0.1, 0.9], [0.2, 0.8], [0.3, 0.7]])
        bs = np.arange(8, dtype=float).reshape(2, 2, 2)
        v = ModelInput(xs, bs).vector()
        assert v.shape == (input_size(2),) == (14,)
        np.testing.assert_array_equal(v, [0.1, 0.9, 0, 1, 2, 3, 0.2, 0.8, 4, 5, 6, 7, 0.3, 0.7])

    def test_from_history_and_padding(self):
        marg = np.array([[1.0, 0.0], [0.5, 0.5], [0.25, 0.75]])
        plans = np.array([[[0.5, 0.5], [0.0, 0.0]], [[0.25, 0.25], [0.0, 0.5]]])
        inp = ModelInput.from_history(marg, plans, 2)
        np.testing.assert_array_equal(inp.marginals, marg[::-1])
        np.testing.assert_array_equal(inp.flows, plans[::-1])
        early = ModelInput.from_history(marg, plans, 0)
        np.testing.assert_array_equal(early.marginals[1:], 0)
        np.testing.assert_array_equal(early.flows, 0)

    def test_make_samples_needs_full_window(self):
        marg = np.full((6, 2), 0.5)
        plans = np.full((5, 2, 2), 0.25)
        s = make_samples(marg, plans, range(5))
        assert len(s) == 3
        np.testing.assert_array_equal(s[0].x_next, marg[3])

    def test_shape_error(self):
        with pytest.raises(DimensionError):
            ModelInput(np.zeros((2, 3)), np.zeros((2, 3, 3)))


class TestPredict:
    def test_uniform_potentials(self):
        inp = ModelInput([[0.3, 0.7], [0.5, 0.5], [0.5, 0.5]], np.full((2, 2, 2), 0.25))
        P = predict_plan(inp, zero_params(2))
        np.testing.assert_allclose(P, [[0.15, 0.15], [0.35, 0.35]], atol=1e-15)
        np.testing.assert_allclose(P.sum(axis=1), [0.3, 0.7], atol=1e-15)
        np.testing.assert_allclose(P.sum(axis=0), [0.5, 0.5], atol=1e-15)

    def test_zero_row(self, rng):
        inp = random_input(rng, 4)
        inp.marginals[0] = [0.0, 0.5, 0.25, 0.25]
        P = predict_plan(inp, init_params(4, seed=1))
        assert np.all(P[0] == 0)

    def test_rows_reproduce_marginal(self, rng):
        params = init_params(4, seed=2)
        inputs = [random_input(rng, 4) for _ in range(50)]
        P = predict_plans(inputs, params)
        x = np.stack([i.x_now for i in inputs])
        assert np.abs(P.sum(axis=2) - x).max() <= 1e-6
        assert P.min() >= 0

    def test_wrong_k(self, rng):
        with pytest.raises(ConfigurationError):
            predict_plan(random_input(rng, 3), init_params(4))

    def test_params_check(self):
        p = init_params(3, (5,))
        p.check()
        bad = ModelParams(4, p.hidden_sizes, p.seed, p.weights, p.biases)
        with pytest.raises(ConfigurationError):
            bad.check()


class TestLoss:
    P_true = [[0.5, 0.0], [0.0, 0.5]]
    P_hat = [[0.4, 0.1], [0.0, 0.5]]

    def test_plan_term(self):
        assert loss(self.P_true, self.P_hat, [0.5, 0.5], 0.0) == pytest.approx(0.02, abs=1e-15)

    def test_marginal_term(self):
        assert loss(self.P_true, self.P_hat, [0.4, 0.6], LossConfig(loss_mix=1.0)) == pytest.approx(0.0, abs=1e-15)

    def test_perfect(self):
        assert loss(self.P_true, self.P_true, [0.5, 0.5], 0.5) == 0.0

    def test_linear_in_mix(self):
        a = loss(self.P_true, self.P_hat, [0.3, 0.7], 0.0)
        b = loss(self.P_true, self.P_hat, [0.3, 0.7], 1.0)
        assert loss(self.P_true, self.P_hat, [0.3, 0.7], 0.25) == pytest.approx(0.75 * a + 0.25 * b)

    def test_shape_error(self):
        with pytest.raises(DimensionError):
            loss(self.P_true, [[1.0]], [0.5, 0.5], 0.5)

    def test_config_validation(self):
        for kw in (dict(loss_mix=1.5), dict(learning_rate=0), dict(epochs=-1), dict(optimizer="sgd2")):
            with pytest.raises(ConfigurationError):
                LossConfig(**kw)


def _samples(rng, k, n):
    out = []
    for _ in range(n):
        inp = random_input(rng, k)
        x_next = rng.dirichlet(np.ones(k))
        target = inp.x_now[:, None] * rng.dirichlet(np.ones(k), size=k)
        out.append(Sample(inp, target, x_next))
    return out


class TestGradient:
    @pytest.mark.parametrize("mix", [0.0, 0.5, 1.0])
    def test_matches_finite_differences(self, mix):
        rng = np.random.default_rng(42)
        k = 4
        params = init_params(k, (8,), seed=3)
        samples = _samples(rng, k, 3)
        batch = BatchArrays.from_samples(samples)
        _, _, (dWs, dbs) = loss_and_grad(params, batch, mix, TIGHT)
        g = np.concatenate([p.ravel() for pair in zip(dWs, dbs) for p in pair])
        theta = params.flat()
        fd = np.empty_like(theta)
        h = 1e-6
        for i in range(theta.size):
            e = np.zeros_like(theta)
            e[i] = h
            fd[i] = (total_loss(params.with_flat(theta + e), samples, mix, TIGHT)
                     - total_loss(params.with_flat(theta - e), samples, mix, TIGHT)) / (2 * h)
        assert relative_error(g, fd) <= 1e-3


class TestTrain:
    def test_zero_epochs(self, rng):
        params = init_params(3, (4,), seed=5)
        res = train(_samples(rng, 3, 4), params, LossConfig(epochs=0))
        np.testing.assert_array_equal(res.params.flat(), params.flat())
        assert res.loss_trace == []

    def test_overfit_single_realizable_sample(self):
        rng = np.random.default_rng(0)
        k = 3
        K = np.array([[0.7, 0.2, 0.1], [0.1, 0.6, 0.3], [0.2, 0.2, 0.6]])  # doubly stochastic
        inp = random_input(rng, k)
        target = inp.x_now[:, None] * K
        sample = Sample(inp, target, target.sum(axis=0))
        cfg = LossConfig(loss_mix=0.5, learning_rate=0.01, epochs=3000, optimizer="adam")
        res = train([sample], init_params(k, (9,), seed=0), cfg, SinkhornConfig(max_iters=1000, tol=1e-10))
        assert res.loss_trace[-1] < 1e-4

    def test_deterministic_and_decreasing(self, small_synthetic):
        _, data = small_synthetic
        samples = make_samples(data.marginals, data.plans, range(40))
        cfg = LossConfig(learning_rate=0.1, epochs=40)
        a = train(samples, init_params(4, seed=1), cfg)
        b = train(samples, init_params(4, seed=1), cfg)
        np.testing.assert_array_equal(a.params.flat(), b.params.flat())
        assert a.loss_trace == b.loss_trace
        assert a.loss_trace[-1] < a.loss_trace[0]
        assert all(y <= x * (1 + 1e-9) for x, y in zip(a.loss_trace, a.loss_trace[1:]))

    @pytest.mark.parametrize("opt", ["momentum", "adam"])
    def test_other_optimizers_reduce_loss(self, small_synthetic, opt):
        _, data = small_synthetic
        samples = make_samples(data.marginals, data.plans, range(40))
        lr = 0.02 if opt == "momentum" else 0.005
        res = train(samples, init_params(4, seed=1), LossConfig(learning_rate=lr, epochs=30, optimizer=opt))
        assert res.loss_trace[-1] < res.loss_trace[0]

    def test_divergence_reported(self, small_synthetic):
        _, data = small_synthetic
        samples = make_samples(data.marginals, data.plans, range(40))
        with pytest.raises(TrainingError):
            train(samples, init_params(4, seed=1), LossConfig(learning_rate=1e6, epochs=50))

    def test_empty_dataset(self):
        with pytest.raises(ConfigurationError):
            train([], init_params(3))


class TestRollout:
    def test_one_step_equals_predict(self, rng):
        params = init_params(3, seed=4)
        inp = random_input(rng, 3)
        np.testing.assert_array_equal(rollout(inp, params, 1)[0], predict_plan(inp, params))

    def test_feeds_predictions_back(self, rng):
        params = init_params(3, seed=4)
        inp = random_input(rng, 3)
        plans = rollout(inp, params, 3)
        assert len(plans) == 3
        for a, b in zip(plans, plans[1:]):
            np.testing.assert_allclose(b.sum(axis=1), a.sum(axis=0), atol=1e-6)
        second = predict_plan(inp.advance(plans[0]), params)
        np.testing.assert_array_equal(second, plans[1])

    def test_steps_validated(self, rng):
        with pytest.raises(ConfigurationError):
            rollout(random_input(rng, 3), init_params(3), 0)


def test_checkpoint_round_trip(tmp_path):
    params = init_params(3, (5, 4), seed=9)
    lc, sc = LossConfig(loss_mix=0.25), SinkhornConfig(max_iters=50)
    write_json(tmp_path / "ck.json", checkpoint_dict(params, lc, sc))
    p2, lc2, sc2 = load_checkpoint(tmp_path / "ck.json")
    np.testing.assert_array_equal(p2.flat(), params.flat())
    assert (p2.k, p2.hidden_sizes, p2.seed) == (3, (5, 4), 9)
    assert lc2 == lc and sc2 == sc
