import dataclasses
import statistics

import numpy as np
import pytest

from infpriv.data import Dataset, gen_blobs, gen_fine_coarse_blobs, load_dataset, save_dataset
from infpriv.model import Layer, LayeredModel, predict
from infpriv.training import (TrainConfig, TrainingDiverged, finetune_noisy, fit, init_model,
                              loss_and_grads, mlp_arch, noisy_accuracy, train)


# -- data --------------------------------------------------------------------

def test_blobs_are_deterministic():
    a, b = gen_blobs(50, 2, 2, seed=3), gen_blobs(50, 2, 2, seed=3)
    assert a.equals(b)
    assert not a.equals(gen_blobs(50, 2, 2, seed=4))


def test_blobs_shape_and_histogram():
    d = gen_blobs(200, 3, 4, seed=0)
    assert d.features.shape == (600, 4)
    assert np.bincount(d.labels).tolist() == [200, 200, 200]
    for c in range(3):
        tags = d.splits[d.labels == c]
        assert [(tags == s).sum() for s in ("train", "val", "test")] == [128, 32, 40]


def test_zero_spread_is_perfectly_separable():
    d = gen_blobs(30, 4, 2, spread=0.0, seed=1)
    model = train(d, [8], TrainConfig(epochs=60, learning_rate=0.1, seed=0))
    x, y = d.split("test")
    assert np.mean(predict(model, x) == y) == 1.0


def test_blob_centres_are_separated():
    d = gen_blobs(1, 5, 3, spread=0.5, seed=0)
    centres = np.array([d.features[d.labels == c].mean(axis=0) for c in range(5)])
    dists = np.linalg.norm(centres[:, None] - centres[None], axis=2)
    # one draw per class at spread 0.5 from centres 3 apart
    assert np.all(dists[np.triu_indices(5, 1)] > 0)


def test_dataset_csv_round_trip(tmp_path):
    d = gen_fine_coarse_blobs(40, seed=2)
    path = tmp_path / "d.csv"
    save_dataset(d, path)
    assert load_dataset(path).equals(d)
    header = path.read_text().splitlines()[0]
    assert header == ",".join([f"f{i}" for i in range(8)] + ["label", "split"])


def test_dataset_rejects_bad_rows(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("f0,label,split\n1.0,0,train\n2.0,1\n")
    with pytest.raises(ValueError, match=":3:"):
        load_dataset(path)
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 1)), [0, 3], 2, ["train", "test"])
    with pytest.raises(ValueError):
        Dataset(np.zeros((1, 1)), [0], 1, ["holdout"])


# -- training ----------------------------------------------------------------

def test_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    widths, acts = mlp_arch([7, 5], 3)
    worst = 0.0
    for probe in range(100):
        model = init_model(4, widths, acts, seed=probe)
        x = rng.normal(size=(3, 4))
        y = rng.integers(0, 3, size=3)
        _, grads = loss_and_grads(model, x, y)
        li = int(rng.integers(len(model.layers)))
        is_bias = bool(rng.integers(2))
        target = model.layers[li].bias if is_bias else model.layers[li].weight
        idx = tuple(int(rng.integers(s)) for s in target.shape)
        step = 1e-5

        def loss_at(delta):
            arr = target.copy()
            arr[idx] += delta
            layers = list(model.layers)
            old = layers[li]
            layers[li] = Layer(old.weight if is_bias else arr, arr if is_bias else old.bias,
                               old.activation)
            return loss_and_grads(dataclasses.replace(model, layers=tuple(layers)), x, y)[0]

        numeric = (loss_at(step) - loss_at(-step)) / (2 * step)
        analytic = grads[li][1 if is_bias else 0][idx]
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)
        worst = max(worst, err)
    assert worst <= 1e-4


def test_training_reaches_high_accuracy():
    d = gen_blobs(200, 2, 8, spread=1.0, seed=7)
    model = train(d, [16], TrainConfig(epochs=30, learning_rate=0.05, seed=1))
    x, y = d.split("test")
    assert np.mean(predict(model, x) == y) >= 0.95


def test_training_is_deterministic():
    d = gen_blobs(60, 3, 4, seed=2)
    cfg = TrainConfig(epochs=5, seed=9)
    assert train(d, [8], cfg).equals(train(d, [8], cfg))
    noisy = dataclasses.replace(cfg, noise_sigma=0.3)
    assert train(d, [8], noisy).equals(train(d, [8], noisy))


def test_zero_learning_rate_keeps_initialisation():
    d = gen_blobs(40, 2, 3, seed=0)
    cfg = TrainConfig(epochs=3, learning_rate=0.0, seed=5)
    widths, acts = mlp_arch([6], 2)
    assert train(d, [6], cfg).equals(init_model(3, widths, acts, 5))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_names_the_epoch():
    d = gen_blobs(40, 2, 3, seed=0)
    x, y = d.split("train")
    widths, acts = mlp_arch([6], 2)
    model = init_model(3, widths, acts, 0)
    with pytest.raises(TrainingDiverged, match="epoch"):
        fit(model, x * 1e150, y, TrainConfig(epochs=3, learning_rate=1e10))


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-1)
    with pytest.raises(ValueError):
        TrainConfig(sigma_grid=(0.0, -0.5))


def test_noisy_accuracy_common_random_numbers():
    d = gen_blobs(50, 2, 4, seed=1)
    x, y = d.split("val")
    a = train(d, [4], TrainConfig(epochs=3, seed=0))
    first = noisy_accuracy(a, x, y, 0.5, seed=3, draws=5)
    assert np.array_equal(first, noisy_accuracy(a, x, y, 0.5, seed=3, draws=5))
    assert np.all(noisy_accuracy(a, x, y, 0.0, seed=3, draws=4) == np.mean(predict(a, x) == y))


def test_finetune_degenerate_grid_is_plain_finetune():
    d = gen_blobs(60, 2, 4, seed=4)
    base = train(d, [8], TrainConfig(epochs=5, seed=0))
    cfg = TrainConfig(epochs=3, seed=1, sigma_grid=(0.0,))
    tuned, report = finetune_noisy(base, d, cfg, target_sigma=0.0, draws=3)
    x, y = d.split("val")
    assert report["selected_sigma"] == 0.0
    assert report["selected_mean_acc"] == np.mean(predict(tuned, x) == y)
    plain, _ = fit(base, *d.split("train"), cfg, purpose="finetune")
    assert tuned.equals(plain)


def test_finetune_returns_grid_argmax():
    d = gen_fine_coarse_blobs(150, seed=3)
    base = train(d, [16], TrainConfig(epochs=10, seed=0))
    cfg = TrainConfig(epochs=5, seed=2, sigma_grid=(0.0, 0.5, 1.0))
    tuned, report = finetune_noisy(base, d, cfg, target_sigma=0.5, draws=5)
    means = [c["mean_acc"] for c in report["candidates"]]
    assert [c["sigma"] for c in report["candidates"]] == [0.0, 0.5, 1.0]
    assert report["selected_mean_acc"] == max(means)
    assert report["selected_sigma"] == report["candidates"][means.index(max(means))]["sigma"]
    x, y = d.split("val")
    again = noisy_accuracy(tuned, x, y, 0.5, cfg.seed, 5, "finetune/eval")
    assert statistics.fmean(again.tolist()) == report["selected_mean_acc"]


def test_finetune_rejects_bad_arguments():
    d = gen_blobs(20, 2, 2, seed=0)
    base = train(d, [2], TrainConfig(epochs=1))
    with pytest.raises(ValueError):
        finetune_noisy(base, d, TrainConfig(epochs=1, sigma_grid=()), 0.5)
    with pytest.raises(ValueError):
        finetune_noisy(base, d, TrainConfig(epochs=1), -1.0)
