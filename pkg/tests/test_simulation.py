import numpy as np
import pytest

from grpcoll.core.errors import EmptyDatasetError, InvalidDimensionError, ShapeError
from grpcoll.schemas.dataset import Dataset
from grpcoll.schemas.nn import TrainConfig
from grpcoll.schemas.report import Mode
from grpcoll.services.assembly import assemble, wire_round
from grpcoll.services.nn.network import build_toy_mlp
from grpcoll.services.obfuscation import dp_with_scale, grp_from_matrix, obfuscate_dataset
from grpcoll.services.simulation import make_schemes, simulate, simulate_run

CONFIG = TrainConfig(learning_rate=0.05, batch_size=16, epochs=4, seed=1)


def builder(d, classes):
    return build_toy_mlp(input_dim=d, classes=classes, seed=2)


def test_schemes_are_independent_per_participant(toy10d):
    train_set, _ = toy10d
    keys = [s.key.matrix for s in make_schemes("grp", 4, train_set, seed=3, k=6)]
    assert all(m.shape == (6, 10) for m in keys)
    assert len({m.tobytes() for m in keys}) == 4
    again = make_schemes("grp", 5, train_set, seed=3, k=6)
    assert np.array_equal(again[0].key.matrix, keys[0])

    dp = make_schemes("dp", 2, train_set, seed=3, epsilon=10.0)
    assert dp[0].budget.epsilon == 10.0
    assert dp[0].seed != dp[1].seed
    fixed = make_schemes("dp", 2, train_set, seed=3, noise_scale=0.5)
    assert fixed[0].budget.scale == pytest.approx(0.5)
    with pytest.raises(ValueError):
        make_schemes("dp", 2, train_set, seed=3)
    with pytest.raises(ValueError):
        make_schemes("xor", 2, train_set, seed=3)


def test_identity_key_matches_plain_training(toy2d):
    train_set, test_set = toy2d
    plain, _ = simulate_run(train_set, test_set, make_schemes("none", 1, train_set, 0), builder, CONFIG)
    identity, _ = simulate_run(train_set, test_set, [grp_from_matrix(np.eye(2))], builder, CONFIG)
    assert identity.accuracy == plain.accuracy
    assert identity.k == 2 and identity.rho == 1.0


def test_collaborative_run(toy10d):
    train_set, test_set = toy10d
    schemes = make_schemes("grp", 4, train_set, seed=8, k=10)
    run, models = simulate_run(train_set, test_set, schemes, builder, CONFIG, label="grp-dnn-n4")
    assert run.label == "grp-dnn-n4"
    assert run.participants == 4 and len(models) == 1
    assert sum(p.train_samples for p in run.per_participant) == train_set.size
    assert sum(p.test_samples for p in run.per_participant) == test_set.size
    assert run.accuracy >= 0.8


def test_non_collaborative_run(toy10d):
    train_set, test_set = toy10d
    schemes = make_schemes("grp", 3, train_set, seed=8, k=10)
    run, models = simulate_run(train_set, test_set, schemes, builder, CONFIG, mode=Mode.NON_COLLABORATIVE)
    assert len(models) == 3
    accuracies = [p.accuracy for p in run.per_participant]
    assert run.accuracy_min == min(accuracies)
    assert run.accuracy_max == max(accuracies)
    assert run.accuracy_min <= run.accuracy <= run.accuracy_max


def test_simulation_is_deterministic(toy10d):
    train_set, test_set = toy10d
    schemes = make_schemes("dp", 2, train_set, seed=4, epsilon=30.0)
    a = simulate(train_set, test_set, schemes, builder, CONFIG, shard_seed=5)
    b = simulate(train_set, test_set, schemes, builder, CONFIG, shard_seed=5)
    assert a.runs[0].accuracy == b.runs[0].accuracy
    assert a.seeds == {"train": 1, "shard": 5}


def test_simulate_argument_checks(toy2d, toy10d):
    with pytest.raises(InvalidDimensionError):
        simulate_run(toy2d[0], toy2d[1], [], builder, CONFIG)
    with pytest.raises(InvalidDimensionError):
        simulate_run(toy2d[0], toy10d[1], make_schemes("none", 1, toy2d[0], 0), builder, CONFIG)


def test_assembly_is_order_independent(rng):
    a = (rng.standard_normal((5, 3)), np.array([0, 1, 0, 1, 1]))
    b = (rng.standard_normal((4, 3)), np.array([1, 0, 0, 1]))
    first = assemble([a, b], 2)
    second = assemble([b, a], 2)
    assert np.array_equal(first.vectors, second.vectors)
    assert np.array_equal(first.labels, second.labels)
    assert first.size == 9
    with pytest.raises(EmptyDatasetError):
        assemble([], 2)
    with pytest.raises(ShapeError):
        assemble([a, (np.ones((1, 4)), np.array([0]))], 2)


def test_wire_round_is_single_precision():
    x = np.array([0.1, 1 / 3])
    assert np.array_equal(wire_round(x), x.astype(np.float32).astype(np.float64))


def test_dp_noise_is_fresh_for_every_vector(toy2d):
    train_set, _ = toy2d
    scheme = dp_with_scale(0.5, seed=4)
    repeated = Dataset(
        vectors=np.tile(train_set.vectors[:1], (50, 1)),
        labels=np.zeros(50, dtype=np.int64),
        class_count=2,
        lower=train_set.lower,
        upper=train_set.upper,
    )
    train_noisy, _ = obfuscate_dataset(repeated, scheme, stream=0)
    noise = train_noisy.vectors - repeated.vectors
    assert len({row.tobytes() for row in noise}) == 50

    test_noisy, _ = obfuscate_dataset(repeated, scheme, stream=1)
    assert not np.any(np.all(test_noisy.vectors == train_noisy.vectors[0], axis=1))
    again, _ = obfuscate_dataset(repeated, scheme, stream=0)
    assert np.array_equal(again.vectors, train_noisy.vectors)
