import numpy as np
import pytest

from p2pbackdoor import data, learner
from p2pbackdoor.learner import ModelSpec, TrainConfig

SMALL = ModelSpec(input_dim=12, hidden_dim=5, num_classes=4)


def test_dim():
    assert ModelSpec().dim == 50890
    assert learner.init_model(ModelSpec(), 0).shape == (50890,)


@pytest.mark.parametrize("activation", ["tanh", "softplus"])
def test_gradient_matches_finite_differences(activation):
    spec = ModelSpec(12, 5, 4, activation)
    rng = np.random.default_rng(0)
    f = learner.init_model(spec, 1) + rng.normal(0, 0.1, spec.dim)
    x = rng.random((7, 12))
    y = rng.integers(0, 4, 7)
    _, g = learner.loss_and_grad(spec, f, x, y)
    h = 1e-6
    num = np.empty_like(f)
    for i in range(spec.dim):
        e = np.zeros_like(f)
        e[i] = h
        num[i] = (learner.loss_and_grad(spec, f + e, x, y)[0] - learner.loss_and_grad(spec, f - e, x, y)[0]) / (2 * h)
    rel = np.linalg.norm(g - num) / max(np.linalg.norm(num), 1e-12)
    assert rel < 1e-4


def test_init_deterministic_glorot_bounds():
    f = learner.init_model(SMALL, 3)
    assert np.array_equal(f, learner.init_model(SMALL, 3))
    assert not np.array_equal(f, learner.init_model(SMALL, 4))
    w1, b1, w2, b2 = SMALL.unpack(f)
    assert np.all(np.abs(w1) <= np.sqrt(6 / 17)) and np.all(b1 == 0) and np.all(b2 == 0)


def _shard(n=40, seed=0):
    return data.partition_iid(data.synthetic(n, seed=seed), 1)[0]


def test_zero_learning_rate_gives_zero_delta():
    f = learner.init_model(ModelSpec(), 0)
    delta = learner.local_update(f, _shard(), TrainConfig(learning_rate=0.0))
    assert np.all(delta == 0.0)


def test_local_update_seeded():
    f = learner.init_model(ModelSpec(), 0)
    s = _shard()
    a = learner.local_update(f, s, TrainConfig(seed=5))
    assert np.array_equal(a, learner.local_update(f, s, TrainConfig(seed=5)))
    assert not np.array_equal(a, learner.local_update(f, s, TrainConfig(seed=6)))
    assert np.array_equal(f, learner.init_model(ModelSpec(), 0))  # input untouched


def test_local_update_reduces_loss():
    spec = ModelSpec()
    f = learner.init_model(spec, 0)
    s = _shard(200)
    delta = learner.local_update(f, s, TrainConfig(local_epochs=5, seed=1), spec)
    assert learner.dataset_loss(spec, f + delta, s.train) < learner.dataset_loss(spec, f, s.train)


def test_local_update_empty_shard():
    empty = data.Dataset(images=np.zeros((0, 28, 28), np.float32), labels=np.zeros(0, np.int64))
    with pytest.raises(ValueError):
        learner.local_update(learner.init_model(ModelSpec(), 0), empty, TrainConfig())


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-1)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)


def test_evaluate_counts():
    spec = ModelSpec()
    d = data.synthetic(30)
    f = learner.init_model(spec, 0)
    pred = learner.predict(spec, f, d.flat)
    acc, rate = learner.evaluate(f, d, target=2, spec=spec)
    assert acc == pytest.approx(np.mean(pred == d.labels))
    assert rate == pytest.approx(np.mean(pred == 2))


def test_vector_ops():
    a, b = np.array([3.0, 4.0]), np.array([1.0, 1.0])
    assert learner.l2_norm(a) == 5.0
    assert np.array_equal(learner.add(a, b), [4.0, 5.0])
    assert np.array_equal(learner.scale(a, 2), [6.0, 8.0])
    assert np.array_equal(learner.mean([a, b]), [2.0, 2.5])
    with pytest.raises(ValueError):
        learner.add(a, np.zeros(3))
    with pytest.raises(ValueError):
        learner.mean([])


def test_param_blob_roundtrip(tmp_path):
    f = learner.init_model(SMALL, 0)
    blob = learner.params_to_bytes(f)
    assert blob[:4] == b"PV32" and len(blob) == 12 + 4 * SMALL.dim
    back = learner.params_from_bytes(blob)
    assert np.array_equal(back, f.astype(np.float32).astype(np.float64))
    learner.save_params(f, tmp_path / "m.bin")
    assert np.array_equal(learner.load_params(tmp_path / "m.bin"), back)
    with pytest.raises(ValueError):
        learner.params_from_bytes(blob[:-4])
    with pytest.raises(ValueError):
        learner.params_from_bytes(b"XXXX" + blob[4:])
    with pytest.raises(ValueError):
        learner.params_to_bytes(np.array([np.nan]))
