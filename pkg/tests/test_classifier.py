import numpy as np
import pytest

from tube_teller.classifiers import (
    AugmentPolicy,
    Label,
    Prediction,
    Sample,
    augment,
    get_classifier,
    load_classifier,
)
from tube_teller.classifiers.oracle import OracleClassifier
from tube_teller.classifiers.reference import (
    TRAINABLE,
    Hyperparams,
    ReferenceModel,
    train_classifier,
)
from tube_teller.errors import ConfigError, DataError, TrainingError
from tube_teller.io import BinaryMask, PixelCoord
from tube_teller.solver import Patch
from tube_teller.training import SampleSet


def sample_set(patches, labels):
    patches = np.asarray(patches, dtype=np.float32)
    return SampleSet(
        patches=patches,
        labels=np.asarray(labels, dtype=np.uint8),
        anchors=np.zeros((len(patches), 2), dtype=np.int64),
        iterations=np.zeros(len(patches), dtype=np.int64),
        schemes=np.full(len(patches), "test", dtype="<U16"),
    )


def separable_samples(rng, count=60, size=5):
    """Bright middle columns against flat background patches."""
    positives = np.clip(0.2 + rng.normal(0, 0.05, size=(count, size, size)), 0, 1)
    positives[:, :, size // 2] = np.clip(0.8 + rng.normal(0, 0.05, size=(count, size)), 0, 1)
    negatives = np.clip(0.2 + rng.normal(0, 0.05, size=(count, size, size)), 0, 1)
    return sample_set(
        np.concatenate([positives, negatives]), [1] * count + [0] * count
    )


def test_decision_threshold():
    assert Prediction.from_score(0.5).label is Label.FG
    assert Prediction.from_score(0.4999).label is Label.BG
    assert not Prediction.from_score(0.1).is_foreground


@pytest.mark.parametrize("seed", range(10))
def test_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    model = ReferenceModel.initialize(3, 3, rng)
    model.params["mean"] = rng.normal(size=9) * 0.1
    model.params["scale"] = rng.uniform(0.5, 1.5, size=9)
    model.params["b2"] = np.array([0.3])
    x = rng.uniform(size=(6, 9))
    y = rng.integers(0, 2, size=6).astype(np.float64)
    weights = rng.uniform(0.5, 2.0, size=6)

    _, gradients = model.loss_and_gradients(x, y, weights, l2=0.1)

    eps = 1e-6
    for key in TRAINABLE:
        numeric = np.zeros_like(model.params[key])
        for index in np.ndindex(*model.params[key].shape):
            original = model.params[key][index]
            model.params[key][index] = original + eps
            upper, _ = model.loss_and_gradients(x, y, weights, l2=0.1)
            model.params[key][index] = original - eps
            lower, _ = model.loss_and_gradients(x, y, weights, l2=0.1)
            model.params[key][index] = original
            numeric[index] = (upper - lower) / (2 * eps)
        assert np.allclose(gradients[key], numeric, rtol=1e-5, atol=1e-7), key


def test_model_files(tmp_path, rng):
    model = ReferenceModel.initialize(5, 7, rng)
    path = tmp_path / "model.bin"
    model.save(path)

    blob = path.read_bytes()
    assert blob[:4] == b"TTRM"
    count = ReferenceModel.parameter_count_for(5, 7)
    assert len(blob) == 28 + 8 * count

    loaded = ReferenceModel.load(path)
    assert loaded.patch_shape == (7, 5)
    assert np.array_equal(loaded.flat_parameters(), model.flat_parameters())

    patch = Patch(rng.uniform(size=(7, 5)))
    assert loaded.classify(patch) == model.classify(patch)
    assert load_classifier(path).patch_shape == (7, 5)


@pytest.mark.parametrize(
    "corrupt",
    [
        lambda blob: b"XXXX" + blob[4:],
        lambda blob: blob[:-8],
        lambda blob: blob[:10],
    ],
)
def test_corrupt_model_files(tmp_path, rng, corrupt):
    path = tmp_path / "model.bin"
    ReferenceModel.initialize(3, 3, rng).save(path)
    path.write_bytes(corrupt(path.read_bytes()))
    with pytest.raises(DataError):
        ReferenceModel.load(path)


def test_patch_shape_mismatch(rng):
    model = ReferenceModel.initialize(5, 5, rng)
    with pytest.raises(DataError, match="expects"):
        model.classify(Patch(np.zeros((5, 3))))


def test_degenerate_training_sets(rng):
    with pytest.raises(TrainingError):
        train_classifier(sample_set(np.zeros((0, 3, 3)), []))
    with pytest.raises(TrainingError, match="both classes"):
        train_classifier(sample_set(rng.uniform(size=(4, 3, 3)), [1, 1, 1, 1]))


def test_learns_a_separable_problem(rng):
    samples = separable_samples(rng)
    hyperparams = Hyperparams(learning_rate=0.01, epochs=50, batch_size=16)
    model = train_classifier(samples, hyperparams)

    predictions = [model.classify(sample.patch).label for sample in samples]
    accuracy = np.mean([label == sample.label for label, sample in zip(predictions, samples)])
    assert accuracy >= 0.95
    assert model.history[-1] < model.history[0]


def test_training_continues_from_an_initial_model(rng):
    hyperparams = Hyperparams(epochs=2, batch_size=16)
    first = train_classifier(separable_samples(rng), hyperparams)
    before = first.flat_parameters().copy()

    shifted = separable_samples(rng)
    shifted.patches[:] = np.clip(shifted.patches + 0.1, 0, 1)
    continued = train_classifier(shifted, hyperparams, initial=first)

    assert np.array_equal(first.flat_parameters(), before)
    assert np.array_equal(continued.params["mean"], first.params["mean"])
    assert np.array_equal(continued.params["scale"], first.params["scale"])
    assert not np.array_equal(continued.params["w1"], first.params["w1"])

    with pytest.raises(TrainingError, match="Can't continue"):
        train_classifier(separable_samples(rng, size=3), hyperparams, initial=first)


@pytest.mark.parametrize("threads", [1, 2])
def test_training_is_deterministic(rng, threads):
    samples = separable_samples(rng, count=20)
    hyperparams = Hyperparams(epochs=2, batch_size=8, threads=threads)
    first = train_classifier(samples, hyperparams)
    second = train_classifier(samples, hyperparams)
    assert np.array_equal(first.flat_parameters(), second.flat_parameters())


def test_augmentation(rng):
    values = rng.uniform(size=(5, 3))
    sample = Sample(Patch(values, anchor=PixelCoord(1, 2)), Label.FG)
    variants = augment(sample, AugmentPolicy(rotations=1), rng)

    assert len(variants) == 4
    assert all(item.label is Label.FG for item in variants)
    assert all(item.patch.anchor == PixelCoord(1, 2) for item in variants)
    assert np.array_equal(variants[0].patch.values, values)
    assert np.array_equal(variants[1].patch.values, values[:, ::-1])
    assert np.array_equal(variants[2].patch.values, values[::-1, :])
    assert variants[3].patch.values.shape == (5, 3)

    assert len(augment(sample, AugmentPolicy(flips=False, rotations=0))) == 1
    with pytest.raises(ConfigError):
        AugmentPolicy(max_rotation=10.0)


def test_registry(band_mask):
    oracle = get_classifier("oracle", gt=band_mask, patch_width=5, trace_length=5)
    assert isinstance(oracle, OracleClassifier)
    assert oracle.patch_shape == (5, 5)
    with pytest.raises(ConfigError, match="Unknown classifier"):
        get_classifier("nonexistent")


def test_oracle(band_mask):
    oracle = OracleClassifier(band_mask)
    assert oracle.classify(Patch(np.zeros((3, 3)), anchor=PixelCoord(0, 5))).is_foreground
    assert not oracle.classify(Patch(np.zeros((3, 3)), anchor=PixelCoord(0, 0))).is_foreground
    with pytest.raises(DataError, match="anchor"):
        oracle.classify(Patch(np.zeros((3, 3))))


def test_oracle_ignores_patch_contents():
    gt = BinaryMask(np.eye(3, dtype=bool))
    oracle = OracleClassifier(gt)
    bright, dark = np.ones((3, 3)), np.zeros((3, 3))
    anchor = PixelCoord(1, 1)
    assert oracle.classify(Patch(bright, anchor)) == oracle.classify(Patch(dark, anchor))
