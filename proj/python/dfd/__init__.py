"""Deepfake image detectors backed by a C++ core (32-bit build)."""

from ._dfd import (
    ContractError,
    IoError,
    LoadError,
    Model,
    ParseError,
    ShapeError,
    fft,
    gen_synthetic,
    lbp_histogram,
    lbp_map,
    load_image,
    magnitude_spectrum,
    precision,
    train,
)

LABELS = ("real", "fake")


def classify(image_path, checkpoint_path):
    """Returns (label, probabilities) for one PPM image."""
    model = Model.load(str(checkpoint_path))
    probs = model.predict_proba(load_image(str(image_path))[None])[0]
    return LABELS[int(probs.argmax())], probs


__all__ = [
    "LABELS",
    "ContractError",
    "IoError",
    "LoadError",
    "Model",
    "ParseError",
    "ShapeError",
    "classify",
    "fft",
    "gen_synthetic",
    "lbp_histogram",
    "lbp_map",
    "load_image",
    "magnitude_spectrum",
    "precision",
    "train",
]
