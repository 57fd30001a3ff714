import numpy as np
import pytest

from roadfair import trainers
from roadfair.data import Dataset, SyntheticConfig, local_bias_config, standardize, synthesize
from roadfair.errors import ConfigurationError
from roadfair.metrics import accuracy, global_di
from roadfair.nn import DenseNetwork, LayerSpec, forward, make_rng, mlp, sgd_step
from roadfair.ratio import Normalization, RatioNetwork, broad_weights
from roadfair.trainers import (
    Algorithm,
    TrainConfig,
    adversary_input,
    adversary_objective,
    load_model,
    predictor_objective,
    ratio_objective,
    save_model,
    train,
    train_biased,
    train_broad,
    train_global_fair,
    train_road,
)

SMALL = dict(f_hidden=(8,), g_hidden=(8,), h_hidden=(8,), batch_size=32)


@pytest.fixture(scope="module")
def small_data():
    ds = synthesize(local_bias_config(n=400, seed=1))
    return standardize(ds)[0]


def test_adversary_input_shapes():
    np.testing.assert_array_equal(adversary_input([0.3], None, "dp"), [[0.3]])
    np.testing.assert_array_equal(adversary_input([0.3], [1], "eo"), [[0.3, 1.0]])


def test_eo_adversary_has_two_inputs(small_data):
    m = train(small_data, TrainConfig(algorithm="road", lambda_g=1, fairness_mode="eo", epochs=1, **SMALL))
    assert m.adversary.input_dim == 2
    assert m.ratio_head.head.input_dim == small_data.d + 1


def test_entry_points_check_algorithm(small_data):
    with pytest.raises(ConfigurationError):
        train_road(small_data, TrainConfig(algorithm="broad"))
    for fn, algo in ((train_biased, "biased"), (train_global_fair, "globalfair"), (train_road, "road"),
                     (train_broad, "broad")):
        assert fn(small_data, TrainConfig(algorithm=algo, epochs=1, **SMALL)).config.algorithm == Algorithm(algo)


def test_config_validation_and_round_trip():
    with pytest.raises(ConfigurationError):
        TrainConfig(lambda_g=-1)
    with pytest.raises(ConfigurationError):
        TrainConfig(lr_f=0)
    cfg = TrainConfig(algorithm="road", tau=0.2, f_hidden=(4, 2), normalization="global")
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


def test_tau_zero_is_floored_with_warning(small_data):
    with pytest.warns(RuntimeWarning, match="floored"):
        m = train(small_data, TrainConfig(algorithm="broad", lambda_g=1, tau=0.0, epochs=1, **SMALL))
    assert m.config.tau == trainers.TAU_FLOOR


def test_fair_training_needs_both_groups():
    ds = Dataset(np.zeros((10, 2)), [0, 1] * 5, [1] * 10, ("a", "b"))
    with pytest.raises(ConfigurationError):
        train(ds, TrainConfig(algorithm="globalfair", lambda_g=1, epochs=1, **SMALL))
    train(ds, TrainConfig(algorithm="biased", epochs=1, **SMALL))


def predictor_trajectory(data, cfg):
    steps = []
    train(data, cfg, callback=lambda stage, m: stage == "f" and steps.append(m.predictor.flat_parameters()))
    return steps


@pytest.mark.parametrize("algo", ["globalfair", "road", "broad"])
def test_lambda_zero_matches_biased_bitwise(small_data, algo):
    common = dict(lambda_g=0.0, seed=11, max_steps=50, epochs=10, lr_f=0.05, **SMALL)
    ref = predictor_trajectory(small_data, TrainConfig(algorithm="biased", **common))
    got = predictor_trajectory(small_data, TrainConfig(algorithm=algo, **common))
    assert len(ref) == len(got) == 50
    for a, b in zip(ref, got):
        assert a.tobytes() == b.tobytes()


def test_update_order_and_gradient_isolation(small_data):
    cfg = TrainConfig(algorithm="road", lambda_g=2, n_g=3, n_r=2, epochs=1, seed=2, **SMALL)
    events = []
    last = {}

    def cb(stage, m):
        now = {"f": m.predictor.checksum(), "g": m.adversary.checksum(), "r": m.ratio_head.head.checksum()}
        if last:
            for other in "fgr":
                if other != stage:
                    assert now[other] == last[other], f"{stage} step changed {other}"
        last.update(now)
        events.append(stage)

    train(small_data, cfg, callback=cb)
    sequence = "".join(events)
    assert sequence == "gggrrf" * (len(events) // 6)
    assert len(events) > 0


def test_weights_used_by_predictor_are_conditionally_valid(small_data, monkeypatch):
    seen = []
    original = trainers.predictor_objective

    def spy(f, g, x, y, s, lam, weights=None, mode="dp"):
        if weights is not None:
            for v in (0, 1):
                seen.append(abs(weights[s == v].mean() - 1.0))
        return original(f, g, x, y, s, lam, weights, mode)

    monkeypatch.setattr(trainers, "predictor_objective", spy)
    for algo in ("road", "broad"):
        train(small_data, TrainConfig(algorithm=algo, lambda_g=2, tau=0.1, epochs=2, lr_r=0.1, **SMALL))
    assert len(seen) > 0 and max(seen) < 1e-9


def test_training_is_reproducible(small_data):
    cfg = TrainConfig(algorithm="road", lambda_g=1, epochs=2, seed=5, **SMALL)
    a, b = train(small_data, cfg), train(small_data, cfg)
    for x, y in ((a.predictor, b.predictor), (a.adversary, b.adversary), (a.ratio_head.head, b.ratio_head.head)):
        assert x.checksum() == y.checksum()


def test_single_group_batches_are_skipped_for_every_algorithm():
    # one S=1 sample among S=0 rows: with batch 2 most batches hold a single group
    x = make_rng(0).normal(size=(12, 2))
    s = np.zeros(12, int)
    s[0] = 1
    ds = Dataset(x, [0, 1] * 6, s, ("a", "b"))
    for algo in ("biased", "globalfair"):
        m = train(ds, TrainConfig(algorithm=algo, lambda_g=1, epochs=1, **dict(SMALL, batch_size=2)))
        assert m.trace["skipped_batches"] == [5]


def test_adversary_descent_with_frozen_predictor(small_data):
    rng = make_rng(3)
    f = mlp(small_data.d, (8,), "sigmoid", rng)
    g = mlp(1, (8, 4), "sigmoid", rng)
    ok = total = 0
    for _ in range(40):
        idx = rng.choice(small_data.n, 32, replace=False)
        scores = forward(f, small_data.features[idx])[0].ravel()
        s = small_data.sensitive[idx]
        values = []
        for _ in range(5):
            v, grads = adversary_objective(g, scores, None, s, "dp")
            values.append(v)
            sgd_step(g, grads, 0.01)
        values.append(adversary_objective(g, scores, None, s, "dp")[0])
        total += 1
        ok += all(b <= a for a, b in zip(values, values[1:]))
    assert ok / total >= 0.9


def test_ratio_objective_descends(small_data):
    rng = make_rng(4)
    ok = total = 0
    for trial in range(40):
        head = RatioNetwork.create(small_data.d, (8,), rng)
        idx = rng.choice(small_data.n, 32, replace=False)
        x, s = small_data.features[idx], small_data.sensitive[idx]
        if np.unique(s).size < 2:
            continue
        losses = rng.uniform(0.1, 1.5, 32)
        values = []
        for _ in range(5):
            v, grads = ratio_objective(head, x, s, losses, 0.5, Normalization.CONDITIONAL)
            values.append(v)
            sgd_step(head.head, grads, 1e-3)
        values.append(ratio_objective(head, x, s, losses, 0.5, Normalization.CONDITIONAL)[0])
        total += 1
        ok += all(b < a for a, b in zip(values, values[1:]))
    assert ok / total >= 0.9


def one_hot_harness(seed=0, n=16):
    """A batch whose features are one-hot sample ids, so a linear head can output any per-sample score."""
    rng = make_rng(seed)
    x = np.eye(n)
    y = rng.integers(0, 2, n)
    s = np.array([0, 1] * (n // 2))
    f = mlp(n, (6,), "sigmoid", rng)
    g = mlp(1, (6,), "sigmoid", rng)
    return rng, x, y, s, f, g


@pytest.mark.parametrize("mode", list(Normalization))
def test_broad_equals_road_with_preset_head(mode):
    tau = 0.7
    rng, x, y, s, f, g = one_hot_harness()
    scores = forward(f, x)[0].ravel()
    losses = trainers.binary_cross_entropy(forward(g, scores[:, None])[0], s)[1]
    n = x.shape[0]
    w = np.vstack([(-losses / tau)[:, None], np.zeros((1, 1))])  # last input column is s
    head = RatioNetwork(DenseNetwork([LayerSpec(n + 1, 1)], [w], [np.zeros(1)]))
    r_road = head.weights(x, s, mode).weights
    r_broad = broad_weights(losses, s, tau, mode).weights
    np.testing.assert_allclose(r_road, r_broad, rtol=1e-13)
    _, g_road = predictor_objective(f, g, x, y, s, 3.0, r_road)
    _, g_broad = predictor_objective(f, g, x, y, s, 3.0, r_broad)
    for a, b in zip(g_road.parameters(), g_broad.parameters()):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)


def test_constant_losses_reduce_broad_to_global_fair():
    _, x, y, s, f, g = one_hot_harness(seed=1)
    losses = np.full(s.size, 0.6)
    r = broad_weights(losses, s, 0.5)
    assert np.all(r.weights == 1.0)
    _, a = predictor_objective(f, g, x, y, s, 3.0, r.weights)
    _, b = predictor_objective(f, g, x, y, s, 3.0, None)
    for u, v in zip(a.parameters(), b.parameters()):
        np.testing.assert_array_equal(u, v)


def test_broad_high_tau_tracks_global_fair(small_data):
    common = dict(lambda_g=3.0, epochs=3, seed=9, lr_f=0.05, lr_g=0.2, **SMALL)
    gf = train(small_data, TrainConfig(algorithm="globalfair", **common))
    br = train(small_data, TrainConfig(algorithm="broad", tau=1e6, **common))
    np.testing.assert_allclose(br.trace["loss_y"], gf.trace["loss_y"], rtol=1e-6)


def test_predictor_gradient_matches_finite_differences():
    from .helpers import central_difference, relative_error

    rng, x, y, s, f, g = one_hot_harness(seed=2, n=8)
    r = rng.uniform(0.2, 2.0, 8)
    _, grads = predictor_objective(f, g, x, y, s, 2.0, r)
    for p, a in zip(f.parameters(), grads.parameters()):
        numeric = central_difference(lambda: predictor_objective(f, g, x, y, s, 2.0, r)[0], p)
        assert relative_error(a, numeric) < 1e-4


def test_save_load_round_trip(tmp_path, small_data):
    _, st_ = standardize(synthesize(local_bias_config(n=400, seed=1)))
    for algo in ("biased", "road", "broad"):
        m = train(small_data, TrainConfig(algorithm=algo, lambda_g=1, epochs=1, fairness_mode="eo", **SMALL))
        m.standardizer = st_
        path = tmp_path / f"{algo}.model"
        save_model(m, path)
        back = load_model(path)
        assert back.config == m.config
        assert back.predict_proba(small_data.features).tobytes() == m.predict_proba(small_data.features).tobytes()
        assert np.array_equal(back.sample_weights(small_data), m.sample_weights(small_data))
        assert back.standardizer.to_dict() == st_.to_dict()


def test_load_rejects_foreign_file(tmp_path):
    p = tmp_path / "x.model"
    p.write_text("hello\n")
    with pytest.raises(ConfigurationError):
        load_model(p)


def test_biased_learns_linearly_separable_data():
    rng = make_rng(0)
    x = rng.uniform(-1, 1, (300, 2))
    margin = x[:, 0] - 0.5 * x[:, 1]
    keep = np.abs(margin) > 0.1
    x, y = x[keep], (margin[keep] > 0).astype(int)
    ds = Dataset(x, y, rng.integers(0, 2, y.size), ("a", "b"))
    m = train_biased(ds, TrainConfig(algorithm="biased", epochs=200, lr_f=0.05, f_hidden=(8,), batch_size=32))
    assert accuracy(m.predict(ds), ds.labels) > 0.95


def test_biased_model_reproduces_label_gap():
    # S must be recoverable from the features (sharp proxy) for a Bayes-like fit
    cfg = SyntheticConfig(n=10000, seed=0, base_bias=0.3, label_noise=0.1, proxy_noise=0.1)
    ds, _ = standardize(synthesize(cfg))
    label_gap = ds.labels[ds.sensitive == 1].mean() - ds.labels[ds.sensitive == 0].mean()
    m = train(ds, TrainConfig(algorithm="biased", epochs=15, lr_f=0.1, f_hidden=(16,), seed=0))
    assert abs(global_di(m.predict(ds), ds.sensitive) - label_gap) < 0.05


def test_global_fair_lowers_di():
    wins = 0
    for seed in range(5):
        ds, _ = standardize(synthesize(local_bias_config(n=2000, seed=seed)))
        common = dict(epochs=30, lr_f=0.05, lr_g=0.5, seed=seed)
        biased = train(ds, TrainConfig(algorithm="biased", **common))
        fair = train(ds, TrainConfig(algorithm="globalfair", lambda_g=3, **common))
        wins += global_di(fair.predict(ds), ds.sensitive) < global_di(biased.predict(ds), ds.sensitive)
    assert wins >= 4
