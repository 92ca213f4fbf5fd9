import numpy as np
import pytest

from causalbed.design import DesignConfig, design_experiment, optimize_value


def test_config_validation():
    with pytest.raises(ValueError):
        DesignConfig(n_bo_rounds=0)
    with pytest.raises(ValueError):
        DesignConfig(domain=(3.0, 3.0))
    cfg = DesignConfig()
    assert cfg.gamma == 1.0 and cfg.n_bo_rounds == 8 and cfg.grid_size == 512
    assert cfg.domain == (-7.0, 7.0)


def test_optimize_value_eval_count_and_incumbent():
    calls = []

    def f(x):
        calls.append(x)
        return -((x - 2.0) ** 2)

    cfg = DesignConfig()
    rng = np.random.default_rng(0)
    x, u = optimize_value(f, cfg, rng)
    assert len(calls) == cfg.n_bo_rounds
    assert calls[0] == 0.0  # midpoint of [-7, 7]
    assert u == max(-((c - 2.0) ** 2) for c in calls)  # best observed
    assert u == -((x - 2.0) ** 2)


def test_bo_finds_smooth_maximum():
    # bump at x = 3 with width ~1: findable within 8 evaluations
    f = lambda x: np.exp(-0.5 * (x - 3.0) ** 2)
    found = 0
    for seed in range(20):
        x, u = optimize_value(f, DesignConfig(), np.random.default_rng(seed))
        if abs(x - 3.0) < 0.75:
            found += 1
    assert found >= 16


def test_optimize_value_deterministic_given_rng():
    f = lambda x: np.sin(x) + 0.1 * x
    a = optimize_value(f, DesignConfig(), np.random.default_rng(5))
    b = optimize_value(f, DesignConfig(), np.random.default_rng(5))
    assert a == b


def test_design_picks_dominant_target():
    # target 2 strictly dominates; optimum at value 1.0
    def utility(spec):
        if spec.is_observational:
            return 0.1
        (node, val), = spec.targets
        if node == 2:
            return 5.0 - (val - 1.0) ** 2
        return 0.2

    out = design_experiment(utility, d=4, cfg=DesignConfig(), rng=np.random.default_rng(1))
    assert out.spec.target_nodes == (2,)
    assert abs(out.spec.targets[0][1] - 1.0) < 0.75
    assert len(out.per_target) == 5  # observational + 4 targets
    assert out.utility == max(r.utility for r in out.per_target)


def test_observational_evaluated_once_and_wins_ties():
    n_obs_calls = [0]

    def utility(spec):
        if spec.is_observational:
            n_obs_calls[0] += 1
        return 1.0  # exact tie everywhere

    out = design_experiment(utility, d=3, cfg=DesignConfig(), rng=np.random.default_rng(2))
    assert n_obs_calls[0] == 1
    assert out.spec.is_observational


def test_tie_without_observational_prefers_lowest_index():
    out = design_experiment(
        lambda spec: 1.0,
        d=3,
        cfg=DesignConfig(),
        rng=np.random.default_rng(3),
        include_observational=False,
    )
    assert out.spec.target_nodes == (0,)
    assert len(out.per_target) == 3


def test_values_stay_in_domain():
    cfg = DesignConfig(domain=(-2.0, 2.0))
    rng = np.random.default_rng(4)
    out = design_experiment(
        lambda spec: float(np.random.default_rng(abs(hash(spec.targets)) % 2**32).normal()),
        d=3,
        cfg=cfg,
        rng=rng,
    )
    for r in out.per_target:
        if r.target is not None:
            assert -2.0 <= r.value <= 2.0


def test_restricted_target_set():
    out = design_experiment(
        lambda spec: 1.0 if spec.target_nodes == (3,) else 0.0,
        d=5,
        cfg=DesignConfig(),
        rng=np.random.default_rng(6),
        targets=(1, 3),
        include_observational=False,
    )
    assert out.spec.target_nodes == (3,)
    assert {r.target for r in out.per_target} == {1, 3}
