import numpy as np
import pytest

from conrank.errors import ContractError
from conrank.numerics import (
    MlpModel,
    backward,
    forward,
    init_model,
    init_optimizer,
    learning_rate,
    load_checkpoint,
    save_checkpoint,
    sgd_step,
    softmax,
)

from oracles import finite_difference, naive_forward, relative_error, softmax_row


def small_model(seed=0, sizes=(2, 4, 3), activation="relu"):
    return init_model(list(sizes), activation=activation, seed=seed)


def test_forward_zero_parameters_gives_zero_logits():
    model = small_model()
    for w in model.weights:
        w[:] = 0.0
    logits, _ = forward(model, np.random.default_rng(0).normal(size=(5, 2)))
    assert np.all(logits == 0.0)


def test_forward_identity_single_layer():
    model = MlpModel(layer_sizes=[2, 2], weights=[np.eye(2)], biases=[np.zeros(2)])
    logits, _ = forward(model, np.array([[1.0, 2.0]]))
    assert np.allclose(logits, [[1.0, 2.0]], atol=0)


@pytest.mark.parametrize("activation", ["relu", "tanh"])
def test_forward_matches_triple_loop_oracle(activation):
    rng = np.random.default_rng(42)
    model = init_model([3, 5, 4, 2], activation=activation, seed=7)
    batch = rng.normal(size=(6, 3))
    logits, _ = forward(model, batch)
    expected = naive_forward(model, batch)
    assert np.max(np.abs(logits - np.asarray(expected))) < 1e-12


def test_forward_rejects_wrong_width():
    model = small_model()
    with pytest.raises(ContractError):
        forward(model, np.zeros((3, 5)))


def test_softmax_uniform_row():
    assert np.allclose(softmax(np.array([[0.0, 0.0, 0.0]])), 1.0 / 3.0)


def test_softmax_extreme_logits_stay_finite():
    probs = softmax(np.array([[1000.0, 0.0]]))
    assert np.all(np.isfinite(probs))
    assert probs[0, 0] == pytest.approx(1.0)
    assert probs.sum() == pytest.approx(1.0)


def test_softmax_closed_form_row():
    probs = softmax(np.array([[1.0, 2.0, 3.0]]))
    expected = softmax_row([1.0, 2.0, 3.0])
    assert np.max(np.abs(probs[0] - expected)) < 1e-15
    assert np.allclose(probs[0], [0.09003057, 0.24472847, 0.66524096], atol=1e-8)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(3)
    probs = softmax(rng.normal(size=(20, 5)) * 10)
    assert np.max(np.abs(probs.sum(axis=1) - 1.0)) < 1e-12
    assert np.all(probs > 0.0) or np.all(probs >= 0.0)


def test_backward_zero_upstream_gives_zero_gradients():
    model = small_model()
    logits, cache = forward(model, np.ones((4, 2)))
    grads = backward(model, cache, np.zeros_like(logits))
    assert all(np.all(g == 0.0) for g in grads.weights + grads.biases)


def test_backward_rejects_stale_cache():
    model = small_model()
    logits, cache = forward(model, np.ones((4, 2)))
    state = init_optimizer(model, lr_schedule=((1, 0.1),))
    grads = backward(model, cache, np.ones_like(logits) / 12.0)
    sgd_step(model, state, grads, epoch=1)
    with pytest.raises(ContractError):
        backward(model, cache, np.ones_like(logits))


def test_backward_rejects_mismatched_shape():
    model = small_model()
    _, cache = forward(model, np.ones((4, 2)))
    with pytest.raises(ContractError):
        backward(model, cache, np.ones((4, 7)))


def _flatten_params(model):
    return np.concatenate([a.ravel() for a in model.weights + model.biases])


def _write_params(model, flat):
    pos = 0
    for arr in model.weights + model.biases:
        arr[:] = np.reshape(flat[pos : pos + arr.size], arr.shape)
        pos += arr.size


@pytest.mark.parametrize("activation", ["relu", "tanh"])
@pytest.mark.parametrize("instance", range(5))
def test_backward_matches_finite_differences(activation, instance):
    rng = np.random.default_rng(100 + instance)
    model = init_model([3, 4, 2], activation=activation, seed=instance)
    batch = rng.normal(size=(5, 3))
    target = rng.normal(size=(5, 2))

    def loss_of(flat):
        probe = model.copy()
        _write_params(probe, np.asarray(flat))
        logits, _ = forward(probe, batch)
        return 0.5 * float(((logits - target) ** 2).sum())

    logits, cache = forward(model, batch)
    grads = backward(model, cache, logits - target)
    analytic = np.concatenate([g.ravel() for g in grads.weights + grads.biases])
    numeric = finite_difference(loss_of, _flatten_params(model).tolist())
    assert relative_error(analytic.tolist(), numeric) < 1e-4


def test_backward_linear_squared_error_closed_form():
    rng = np.random.default_rng(9)
    model = MlpModel(layer_sizes=[3, 2], weights=[rng.normal(size=(3, 2))], biases=[rng.normal(size=2)])
    x = rng.normal(size=(6, 3))
    y = rng.normal(size=(6, 2))
    logits, cache = forward(model, x)
    grads = backward(model, cache, (logits - y) / 6.0)
    assert np.max(np.abs(grads.weights[0] - x.T @ (logits - y) / 6.0)) < 1e-10


def test_sgd_zero_gradient_keeps_parameters():
    model = small_model()
    before = _flatten_params(model).copy()
    state = init_optimizer(model, lr_schedule=((1, 0.1),), momentum=0.9, weight_decay=0.0)
    zero = backward(model, forward(model, np.ones((1, 2)))[1], np.zeros((1, 3)))
    sgd_step(model, state, zero, epoch=1)
    assert np.array_equal(_flatten_params(model), before)


def test_sgd_plain_step_subtracts_scaled_gradient():
    model = small_model()
    state = init_optimizer(model, lr_schedule=((1, 0.1),), momentum=0.0, weight_decay=0.0)
    logits, cache = forward(model, np.ones((2, 2)))
    grads = backward(model, cache, np.ones_like(logits))
    before = _flatten_params(model).copy()
    flat_grads = np.concatenate([g.ravel() for g in grads.weights + grads.biases])
    sgd_step(model, state, grads, epoch=1)
    assert np.allclose(_flatten_params(model), before - 0.1 * flat_grads, atol=0)


def test_sgd_two_step_momentum_recurrence():
    model = MlpModel(layer_sizes=[1, 1], weights=[np.array([[1.0]])], biases=[np.array([0.0])])
    state = init_optimizer(model, lr_schedule=((1, 0.1),), momentum=0.9, weight_decay=0.0)
    from conrank.numerics import Gradients

    g1 = Gradients(weights=[np.array([[2.0]])], biases=[np.array([0.0])])
    g2 = Gradients(weights=[np.array([[3.0]])], biases=[np.array([0.0])])
    sgd_step(model, state, g1, epoch=1)
    sgd_step(model, state, g2, epoch=1)
    # hand unroll: v1 = 2, w = 1 - .2 = .8; v2 = .9*2 + 3 = 4.8, w = .8 - .48
    assert model.weights[0][0, 0] == pytest.approx(0.32, abs=1e-15)


def test_sgd_weight_decay_enters_buffer():
    model = MlpModel(layer_sizes=[1, 1], weights=[np.array([[2.0]])], biases=[np.array([0.0])])
    state = init_optimizer(model, lr_schedule=((1, 0.5),), momentum=0.0, weight_decay=0.1)
    from conrank.numerics import Gradients

    sgd_step(model, state, Gradients(weights=[np.array([[0.0]])], biases=[np.array([0.0])]), epoch=1)
    assert model.weights[0][0, 0] == pytest.approx(2.0 - 0.5 * 0.2)


def test_learning_rate_schedule_lookup():
    schedule = ((1, 0.1), (150, 0.01), (250, 0.001))
    assert learning_rate(schedule, 1) == 0.1
    assert learning_rate(schedule, 149) == 0.1
    assert learning_rate(schedule, 150) == 0.01
    assert learning_rate(schedule, 400) == 0.001
    with pytest.raises(ContractError):
        learning_rate(((5, 0.1),), 2)


def test_schedule_thresholds_must_increase():
    model = small_model()
    with pytest.raises(ContractError):
        init_optimizer(model, lr_schedule=((1, 0.1), (1, 0.2)))


def test_training_is_deterministic():
    def run():
        model = init_model([2, 4, 3], seed=5)
        state = init_optimizer(model, lr_schedule=((1, 0.05),), momentum=0.9, weight_decay=1e-4)
        rng = np.random.default_rng(11)
        for epoch in range(1, 6):
            batch = rng.normal(size=(8, 2))
            logits, cache = forward(model, batch)
            probs = softmax(logits)
            d = probs.copy()
            d[:, 0] -= 1.0
            grads = backward(model, cache, d / 8.0)
            sgd_step(model, state, grads, epoch)
        return _flatten_params(model)

    assert np.array_equal(run(), run())


def test_checkpoint_round_trip_is_exact(tmp_path):
    model = init_model([3, 5, 2], activation="tanh", seed=1)
    path = tmp_path / "model.json"
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    assert loaded.layer_sizes == model.layer_sizes
    assert loaded.activation == model.activation
    for a, b in zip(loaded.weights + loaded.biases, model.weights + model.biases):
        assert np.array_equal(a, b)


def test_checkpoint_rejects_unknown_format(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"format": "other"}')
    with pytest.raises(ContractError):
        load_checkpoint(path)


def test_init_glorot_bounds():
    model = init_model([10, 7, 4], seed=3)
    limit0 = np.sqrt(6.0 / (10 + 7))
    assert np.all(np.abs(model.weights[0]) <= limit0)
    assert np.all(model.biases[0] == 0.0)
