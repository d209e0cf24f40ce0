import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metaprior.errors import DivergenceError, StructuralError
from metaprior.nn import WeightVector, init_weights, mlp_layout, mse_loss_grad
from metaprior.reptile import (
    MetaState, ReptileConfig, inner_adapt, meta_step, post_adaptation_loss, train,
)
from metaprior.tasks import TaskClassConfig, sample_minibatch, sample_task

TASKS = TaskClassConfig()


def test_config_defaults():
    cfg = ReptileConfig()
    assert (cfg.inner_step, cfg.inner_batch, cfg.outer_step, cfg.outer_iters, cfg.meta_batch) == \
        (0.02, 5, 0.1, 10_000, 10)


@pytest.mark.parametrize("kwargs", [dict(inner_step=0.0), dict(outer_step=-1.0),
                                    dict(meta_batch=0), dict(inner_batch=0), dict(seed=-1)])
def test_config_validation(kwargs):
    with pytest.raises(StructuralError):
        ReptileConfig(**kwargs).validate()


class TestInnerAdapt:
    def test_zero_iterations_is_identity(self):
        theta = init_weights(mlp_layout(8), 0)
        task = sample_task(TASKS, np.random.default_rng(0))
        out = inner_adapt(theta, task, TASKS, ReptileConfig(inner_iters=0), np.random.default_rng(1))
        assert np.array_equal(out.values, theta.values)

    def test_zero_step_is_identity(self):
        theta = init_weights(mlp_layout(8), 0)
        task = sample_task(TASKS, np.random.default_rng(0))
        out = inner_adapt(theta, task, TASKS, ReptileConfig(inner_step=0.0), np.random.default_rng(1))
        assert np.array_equal(out.values, theta.values)

    def test_theta_unmodified(self):
        theta = init_weights(mlp_layout(8), 0)
        before = theta.values.copy()
        inner_adapt(theta, sample_task(TASKS, np.random.default_rng(0)), TASKS, ReptileConfig(),
                    np.random.default_rng(1))
        assert np.array_equal(before, theta.values)

    def test_adaptation_usually_reduces_heldout_loss(self):
        cfg = ReptileConfig()
        improved = 0
        for trial in range(100):
            rng = np.random.default_rng([9, trial])
            theta = init_weights(mlp_layout(), trial)
            task = sample_task(TASKS, rng)
            heldout = sample_minibatch(task, TASKS, 64, np.random.default_rng([10, trial]))
            adapted = inner_adapt(theta, task, TASKS, cfg, rng)
            improved += mse_loss_grad(adapted, heldout)[0] <= mse_loss_grad(theta, heldout)[0]
        assert improved >= 90

    def test_divergence_names_step(self):
        theta = init_weights(mlp_layout(8), 0)
        cfg = ReptileConfig(inner_step=1e300)
        with pytest.raises(DivergenceError) as info:
            inner_adapt(theta, sample_task(TASKS, np.random.default_rng(0)), TASKS, cfg,
                        np.random.default_rng(1))
        assert info.value.iteration is not None


class TestMetaStep:
    def _vec(self, values):
        from metaprior.nn import LayerSpec
        layout = (LayerSpec(1, 1, "identity"),)
        return WeightVector(values, layout)

    def test_hand_example(self):
        state = MetaState(self._vec([0.0, 0.0]))
        out = meta_step(state, [self._vec([1, 1]), self._vec([3, 3])], ReptileConfig(outer_step=0.5))
        assert list(out.theta.values) == [1.0, 1.0]
        assert out.iteration == 1

    def test_fixed_point(self):
        theta = self._vec([0.3, -1.2])
        out = meta_step(MetaState(theta, 4), [theta, theta, theta], ReptileConfig())
        assert np.array_equal(out.theta.values, theta.values)
        assert out.iteration == 5

    def test_full_interpolation(self):
        W = self._vec([2.5, 7.0])
        out = meta_step(MetaState(self._vec([0.1, 0.2])), [W], ReptileConfig(outer_step=1.0))
        assert np.array_equal(out.theta.values, W.values)

    @given(st.integers(0, 2 ** 32 - 1), st.floats(0.01, 1.0), st.integers(1, 6))
    @settings(max_examples=50)
    def test_convex_interpolation(self, seed, alpha, n):
        rng = np.random.default_rng(seed)
        theta = self._vec(rng.normal(size=2))
        cands = [self._vec(rng.normal(size=2)) for _ in range(n)]
        out = meta_step(MetaState(theta), cands, ReptileConfig(outer_step=alpha))
        expected = (1 - alpha) * theta.values + alpha * np.mean([c.values for c in cands], axis=0)
        np.testing.assert_allclose(out.theta.values, expected, rtol=1e-12, atol=1e-12)

    def test_layout_mismatch(self):
        state = MetaState(init_weights(mlp_layout(4), 0))
        with pytest.raises(StructuralError):
            meta_step(state, [init_weights(mlp_layout(5), 0)], ReptileConfig())

    def test_empty_candidates(self):
        with pytest.raises(StructuralError):
            meta_step(MetaState(init_weights(mlp_layout(4), 0)), [], ReptileConfig())


class TestTrain:
    def test_zero_iterations_returns_init(self):
        state = train(ReptileConfig(outer_iters=0, seed=3), TASKS, mlp_layout(8))
        assert np.array_equal(state.theta.values, init_weights(mlp_layout(8), 3).values)
        assert state.iteration == 0

    def test_worker_count_does_not_change_bits(self):
        cfg = ReptileConfig(outer_iters=6, meta_batch=4, seed=5)
        a = train(cfg, TASKS, mlp_layout(16), workers=1)
        b = train(cfg, TASKS, mlp_layout(16), workers=3)
        assert a.theta.values.tobytes() == b.theta.values.tobytes()

    def test_progress_and_checkpoint_hooks(self):
        records, saved = [], []
        train(ReptileConfig(outer_iters=10, meta_batch=2), TASKS, mlp_layout(8),
              progress=records.append, log_every=4, checkpoint=saved.append, checkpoint_every=5)
        assert [r["iteration"] for r in records] == [4, 8, 10]
        assert all(np.isfinite(r["mean_inner_loss"]) for r in records)
        assert [s.iteration for s in saved] == [5, 10]

    def test_resume_matches_uninterrupted(self):
        cfg = ReptileConfig(outer_iters=8, meta_batch=3)
        full = train(cfg, TASKS, mlp_layout(8))
        half = train(ReptileConfig(outer_iters=4, meta_batch=3), TASKS, mlp_layout(8))
        resumed = train(cfg, TASKS, mlp_layout(8), initial=half)
        assert np.array_equal(full.theta.values, resumed.theta.values)

    def test_divergence_reports_outer_iteration(self):
        with pytest.raises(DivergenceError) as info:
            train(ReptileConfig(outer_iters=3, inner_step=1e300, meta_batch=2), TASKS, mlp_layout(8))
        assert info.value.iteration == 0

    def test_meta_training_helps_adaptation(self):
        cfg = ReptileConfig(outer_iters=300, seed=2)
        layout = mlp_layout()
        init = init_weights(layout, cfg.seed)
        trained = train(cfg, TASKS, layout).theta
        tasks = [sample_task(TASKS, np.random.default_rng([77, i])) for i in range(32)]
        assert post_adaptation_loss(trained, tasks, TASKS, cfg, seed=1) <= \
            post_adaptation_loss(init, tasks, TASKS, cfg, seed=1)
