import pathlib

import numpy as np
import pytest

import dfd

CONFIGS = pathlib.Path(__file__).resolve().parents[2] / "configs"


def test_precision_is_training_build():
    assert dfd.precision == "f32"


def test_parameter_count_matches_cli_value():
    model = dfd.Model.from_config(str(CONFIGS / "tiny.ini"))
    assert model.arch == "cmvit"
    assert model.parameter_count == 42050


def test_overrides_and_errors():
    model = dfd.Model.from_config(str(CONFIGS / "tiny.ini"), ["model.arch=xception"])
    assert model.arch == "xception"
    with pytest.raises(dfd.ParseError):
        dfd.Model.from_config("", ["model.bogus=1"])
    with pytest.raises(ValueError):
        dfd.Model.from_config("", ["model.num_heads=5"])


@pytest.mark.parametrize("arch", ["cmvit", "cmvit_lbp", "xception"])
def test_probabilities_and_checkpoint(tmp_path, arch):
    model = dfd.Model.from_config(str(CONFIGS / "tiny.ini"), [f"model.arch={arch}"])
    images = np.random.default_rng(0).random((5, 3, 32, 32), dtype=np.float32)
    probs = model.predict_proba(images)
    assert probs.shape == (5, 2)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)
    path = tmp_path / "m.ckpt"
    model.save(str(path))
    again = dfd.Model.load(str(path)).predict_proba(images)
    assert np.array_equal(again, probs)
    with pytest.raises(dfd.ShapeError):
        model.predict_proba(np.zeros((1, 3, 16, 16), dtype=np.float32))


def test_fft_matches_numpy():
    x = np.random.default_rng(1).standard_normal(64) + 1j * np.random.default_rng(2).standard_normal(64)
    np.testing.assert_allclose(dfd.fft(x), np.fft.fft(x), atol=1e-9)
    with pytest.raises(ValueError):
        dfd.fft(np.zeros(6))


def test_magnitude_spectrum_matches_numpy():
    plane = np.random.default_rng(3).random((8, 16), dtype=np.float32)
    np.testing.assert_allclose(dfd.magnitude_spectrum(plane), np.abs(np.fft.fft2(plane)), rtol=1e-4, atol=1e-4)


def test_lbp_flat_image_and_histogram():
    flat = np.full((6, 7), 90, dtype=np.uint8)
    assert (dfd.lbp_map(flat) == 255).all()
    hist = dfd.lbp_histogram(flat)
    assert len(hist) == 256
    assert hist[255] == pytest.approx(1.0)


def test_synthetic_data_train_and_classify(tmp_path):
    root = tmp_path / "synth"
    assert dfd.gen_synthetic(str(root), n_per_class=12, size=32, seed=3) == 24
    image = dfd.load_image(str(root / "fake" / "fake_0000.ppm"))
    assert image.shape == (32, 32, 3) and image.dtype == np.uint8
    result = dfd.train(str(CONFIGS / "tiny.ini"), str(root), ["train.epochs=2", "train.batch_size=8"])
    assert len(result["history"]) == 2
    assert 0.0 <= result["validation"]["accuracy"] <= 1.0
    ckpt = tmp_path / "best.ckpt"
    result["model"].save(str(ckpt))
    label, probs = dfd.classify(root / "fake" / "fake_0000.ppm", ckpt)
    assert label in dfd.LABELS
    assert probs.sum() == pytest.approx(1.0, abs=1e-6)
