"""Synthetic benchmark: determinism, class structure, dataset file I/O."""

import json

import numpy as np
import pytest

from rgbtseg.data import (CLASS_NAMES, ManifestError, NOISE_SIGMA, gen_sample,
                          gen_synthetic, load_dataset, save_dataset)


def test_deterministic_generation():
    a = gen_sample((64, 64), seed=5, index=3)
    b = gen_sample((64, 64), seed=5, index=3)
    assert np.array_equal(a.rgb, b.rgb)
    assert np.array_equal(a.thermal, b.thermal)
    assert np.array_equal(a.labels, b.labels)


def test_samples_independent_of_batch_position():
    solo = gen_sample((64, 64), seed=5, index=3)
    batch = gen_synthetic(5, (64, 64), seed=5)
    assert np.array_equal(solo.labels, batch[3].labels)


def test_all_classes_present():
    for s in gen_synthetic(8, (64, 64), seed=11):
        assert set(np.unique(s.labels)) == {0, 1, 2, 3}


def test_thermal_only_is_rgb_camouflaged():
    """Class 2 pixels match the background color up to pixel noise, and are
    hot; this is what makes the fusion ablation well-posed."""
    for s in gen_synthetic(6, (64, 64), seed=21):
        bg = s.rgb[s.labels == 0]
        hidden = s.rgb[s.labels == 2]
        # compare medians: both classes share one pre-noise color
        assert np.abs(np.median(bg, axis=0) - np.median(hidden, axis=0)).max() \
            <= 4 * NOISE_SIGMA
        assert np.median(s.thermal[s.labels == 2]) \
            > np.median(s.thermal[s.labels == 0]) + 0.3


def test_rgb_only_is_thermally_cold():
    for s in gen_synthetic(6, (64, 64), seed=22):
        assert np.median(s.thermal[s.labels == 3]) \
            < np.median(s.thermal[s.labels == 0])


def test_value_ranges():
    s = gen_sample((64, 64), seed=0, index=0)
    assert s.rgb.min() >= 0.0 and s.rgb.max() <= 1.0
    assert s.thermal.min() >= 0.0 and s.thermal.max() <= 1.0


def test_save_load_round_trip(tmp_path):
    samples = gen_synthetic(3, (32, 32), seed=2, split="test")
    save_dataset(samples, tmp_path / "ds")
    loaded, classes = load_dataset(tmp_path / "ds" / "manifest.json")
    assert classes == CLASS_NAMES
    assert len(loaded) == 3
    assert all(s.split == "test" for s in loaded)
    # labels survive exactly; images within 8-bit quantization
    for orig, got in zip(samples, loaded):
        assert np.array_equal(orig.labels, got.labels)
        assert np.abs(orig.rgb - got.rgb).max() <= 1.0 / 255.0


def test_manifest_errors(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text("{]")
    with pytest.raises(ManifestError):
        load_dataset(path)
    path.write_text(json.dumps({"classes": ["a"]}))
    with pytest.raises(ManifestError):
        load_dataset(path)
