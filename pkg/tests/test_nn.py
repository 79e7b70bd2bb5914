import numpy as np
import pytest

from grpcoll.core.errors import (
    BadMagicError,
    CheckpointError,
    LabelRangeError,
    ShapeError,
    TruncatedFileError,
    UnsupportedVersionError,
)
from grpcoll.schemas.nn import LayerKind, TrainConfig
from grpcoll.services.nn.checkpoint import HEADER, MODEL_VERSION, decode_model, encode_model, load_model, save_model
from grpcoll.services.nn.layers import Conv2D, Dense, Dropout, Flatten, MaxPool2D, ReLU, Softmax, softmax
from grpcoll.services.nn.network import build_mlp, build_mnist_cnn, build_model, build_spam_mlp, build_toy_mlp
from grpcoll.services.nn.training import evaluate, loss_and_gradients, predict, predict_proba, train

EPS = 1e-6
RTOL = 1e-4
ATOL = 1e-7


def _numeric_gradient(f, array, indices=None):
    grad = np.zeros_like(array)
    positions = indices if indices is not None else list(np.ndindex(array.shape))
    for pos in positions:
        saved = array[pos]
        array[pos] = saved + EPS
        plus = f()
        array[pos] = saved - EPS
        minus = f()
        array[pos] = saved
        grad[pos] = (plus - minus) / (2 * EPS)
    return grad, positions


def _check_layer(layer, x, dropout_seed=None):
    def fresh_rng():
        return np.random.default_rng(dropout_seed) if dropout_seed is not None else None

    out = layer.forward(x, True, fresh_rng())
    upstream = np.random.default_rng(99).standard_normal(out.shape)
    dx = layer.backward(upstream)
    analytic = {name: g.copy() for name, g in layer.grads.items()}

    def objective():
        return float(np.sum(layer.forward(x, True, fresh_rng()) * upstream))

    numeric_dx, _ = _numeric_gradient(objective, x)
    assert np.allclose(dx, numeric_dx, rtol=RTOL, atol=ATOL)
    for name, value in layer.params.items():
        numeric, _ = _numeric_gradient(objective, value)
        assert np.allclose(analytic[name], numeric, rtol=RTOL, atol=ATOL), name


def test_dense_gradients(rng):
    _check_layer(Dense(5, 4, rng), rng.standard_normal((3, 5)))


def test_conv_gradients(rng):
    layer = Conv2D(2, 3, 3, rng)
    layer.params["b"] = rng.standard_normal(3)
    _check_layer(layer, rng.standard_normal((2, 2, 6, 6)))


def test_maxpool_gradients(rng):
    # odd sides exercise the dropped trailing row and column
    _check_layer(MaxPool2D(2), rng.standard_normal((2, 3, 5, 5)))


def test_relu_flatten_softmax_gradients(rng):
    _check_layer(ReLU(), rng.standard_normal((4, 6)))
    _check_layer(Flatten(), rng.standard_normal((2, 3, 2, 2)))
    _check_layer(Softmax(), rng.standard_normal((3, 5)))


def test_dropout_gradients(rng):
    _check_layer(Dropout(0.5), rng.standard_normal((4, 8)), dropout_seed=3)


def test_dropout_modes(rng):
    layer = Dropout(0.5)
    x = rng.standard_normal((4, 8))
    assert layer.forward(x, False, None) is x
    assert np.array_equal(Dropout(0.0).forward(x, True, rng), x)
    with pytest.raises(ValueError):
        layer.forward(x, True, None)
    ones = np.ones((200, 500))
    kept = layer.forward(ones, True, rng)
    assert set(np.unique(kept)) <= {0.0, 2.0}
    assert kept.mean() == pytest.approx(1.0, abs=0.02)


@pytest.mark.parametrize("scale", [1e-3, 1.0, 50.0, 1e3])
def test_softmax_rows_sum_to_one(scale, rng):
    for _ in range(50):
        logits = rng.standard_normal((8, 10)) * scale
        p = softmax(logits)
        assert np.all(np.isfinite(p))
        assert np.all(p >= 0)
        assert np.allclose(p.sum(axis=1), 1.0, atol=1e-12)


def _model_gradient_check(model, batch, labels, weight_decay, samples_per_param=None, seed=0):
    _, grads = loss_and_gradients(model, batch, labels, weight_decay=weight_decay)
    pick = np.random.default_rng(seed)
    for layer, layer_grads in zip(model.layers, grads):
        for name, value in layer.params.items():

            def objective():
                return loss_and_gradients(model, batch, labels, weight_decay=weight_decay)[0]

            indices = None
            if samples_per_param is not None and value.size > samples_per_param:
                flat = pick.choice(value.size, samples_per_param, replace=False)
                indices = [np.unravel_index(i, value.shape) for i in flat]
            numeric, positions = _numeric_gradient(objective, value, indices)
            for pos in positions:
                assert layer_grads[name][pos] == pytest.approx(numeric[pos], rel=RTOL, abs=ATOL)


def test_mlp_loss_gradients_with_weight_decay(rng):
    model = build_toy_mlp(input_dim=3, hidden=(6, 5), classes=3, seed=4)
    batch = rng.standard_normal((7, 3))
    labels = rng.integers(0, 3, size=7)
    _model_gradient_check(model, batch, labels, weight_decay=0.01)


def test_cnn_loss_gradients_sampled(rng):
    model = build_mnist_cnn(input_dim=784, class_count=10, seed=2)
    batch = rng.random((2, 784))
    labels = np.array([3, 7])
    _model_gradient_check(model, batch, labels, weight_decay=0.0, samples_per_param=12)


def test_weight_decay_adds_squared_norm(rng):
    model = build_toy_mlp(input_dim=2, seed=1)
    batch, labels = rng.standard_normal((5, 2)), np.array([0, 1, 1, 0, 1])
    plain, _ = loss_and_gradients(model, batch, labels)
    decayed, _ = loss_and_gradients(model, batch, labels, weight_decay=0.5)
    assert decayed - plain == pytest.approx(0.5 * model.squared_norm())


def test_cnn_shapes():
    model = build_mnist_cnn(784, 10, seed=0)
    dense = [spec for spec in model.summary().layers if spec.kind == LayerKind.DENSE]
    assert dense[0].in_features == 320
    assert model.input_shape == (1, 28, 28)
    assert predict_proba(model, np.zeros((3, 784))).shape == (3, 10)

    projected = build_mnist_cnn(336, 10, seed=0)
    assert projected.input_shape == (1, 19, 19)
    assert predict_proba(projected, np.zeros(336)).shape == (1, 10)

    with pytest.raises(ShapeError):
        build_mnist_cnn(100, 10)


def test_model_builders():
    spam = build_spam_mlp()
    assert [s.kind for s in spam.summary().layers].count(LayerKind.DROPOUT) == 3
    assert spam.class_count == 2
    assert build_model("toy_mlp", 10, 2).input_dim == 10
    with pytest.raises(ValueError):
        build_model("resnet", 10, 2)
    with pytest.raises(ShapeError):
        build_mlp("broken", 0, [4], 2)


def test_input_checks(rng):
    model = build_toy_mlp(input_dim=2)
    with pytest.raises(ShapeError):
        predict(model, np.zeros((3, 4)))
    with pytest.raises(LabelRangeError):
        loss_and_gradients(model, rng.standard_normal((2, 2)), np.array([0, 5]))
    with pytest.raises(ShapeError):
        loss_and_gradients(model, rng.standard_normal((2, 2)), np.array([0]))


def test_ties_predict_lowest_class():
    model = build_toy_mlp(input_dim=2, classes=4)
    for layer in model.layers:
        for value in layer.params.values():
            value[...] = 0.0
    assert predict(model, np.ones((3, 2))).tolist() == [0, 0, 0]


def test_training_learns_separable_task(toy2d):
    train_set, test_set = toy2d
    config = TrainConfig(learning_rate=0.05, batch_size=16, epochs=15, seed=3)
    model, history = train(build_toy_mlp(seed=3), train_set, config)
    assert len(history.epochs) == 15
    assert history.epochs[-1].loss < history.epochs[0].loss
    assert evaluate(model, test_set) >= 0.95


def test_training_is_deterministic(toy2d):
    train_set, _ = toy2d
    config = TrainConfig(learning_rate=0.05, batch_size=16, epochs=3, seed=9)
    a, _ = train(build_toy_mlp(seed=1), train_set, config)
    b, _ = train(build_toy_mlp(seed=1), train_set, config)
    for (_, _, va), (_, _, vb) in zip(a.parameters(), b.parameters()):
        assert va.tobytes() == vb.tobytes()


def test_zero_epochs_leaves_model_untouched(toy2d):
    train_set, _ = toy2d
    model = build_toy_mlp(seed=2)
    before = encode_model(model)
    _, history = train(model, train_set, TrainConfig(epochs=0))
    assert history.final_accuracy is None
    assert encode_model(model) == before


def test_checkpoint_preserves_predictions(tmp_path, rng):
    model = build_mnist_cnn(336, 10, seed=5)
    batch = rng.random((4, 336))
    restored = decode_model(encode_model(model))
    assert restored.name == "mnist_cnn"
    assert np.array_equal(predict_proba(restored, batch), predict_proba(model, batch))

    spam = build_spam_mlp(seed=6)
    path = tmp_path / "spam.grpn"
    save_model(spam, path)
    loaded = load_model(path)
    assert [s.rate for s in loaded.summary().layers] == [s.rate for s in spam.summary().layers]
    x = rng.random((5, 57))
    assert np.array_equal(predict_proba(loaded, x), predict_proba(spam, x))


def test_checkpoint_errors():
    model = build_toy_mlp(seed=0)
    blob = encode_model(model)
    with pytest.raises(BadMagicError):
        decode_model(b"XXXX" + blob[4:])
    with pytest.raises(TruncatedFileError):
        decode_model(blob[:-3])
    with pytest.raises(TruncatedFileError):
        decode_model(blob[:6])
    newer = bytearray(blob)
    newer[4:6] = (MODEL_VERSION + 1).to_bytes(2, "little")
    with pytest.raises(UnsupportedVersionError):
        decode_model(bytes(newer))
    first_layer = HEADER.size + 4 * len(model.input_shape) + 2 + len(model.name)
    corrupt = bytearray(blob)
    corrupt[first_layer] = 200
    with pytest.raises(CheckpointError):
        decode_model(bytes(corrupt))
