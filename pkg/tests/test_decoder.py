"""Mask decoder: LoRA init identity, output shapes, text path equivariance."""

import numpy as np

from rgbtseg.config import RunConfig
from rgbtseg.model import RgbtSegModel
from rgbtseg.prompts import ClassVocabulary, PointPrompt


def _model(**flags):
    cfg = RunConfig()
    for k, v in flags.items():
        setattr(cfg.model, k, v)
    return RgbtSegModel(cfg)


def _inputs(rng):
    return rng.uniform(size=(64, 64, 3)), rng.uniform(size=(64, 64, 1))


def test_decoder_lora_identity_at_init(rng, vocab):
    rgb, th = _inputs(rng)
    with_lora = _model().forward(rgb, th, vocab)
    without = _model(enable_decoder_lora=False).forward(rgb, th, vocab)
    assert np.array_equal(with_lora.logits.data, without.logits.data)


def test_logits_cover_image_and_classes(rng, vocab):
    rgb, th = _inputs(rng)
    out = _model().forward(rgb, th, vocab)
    assert out.logits.shape == (64, 64, vocab.num_classes)


def test_text_free_head_shape(rng, vocab):
    rgb, th = _inputs(rng)
    out = _model(enable_text=False).forward(rgb, th, vocab)
    assert out.logits.shape == (64, 64, 4)


def test_class_permutation_equivariance_bitwise(rng):
    rgb, th = _inputs(rng)
    model = _model()
    names = ["a", "b", "c", "d", "e"]
    vocab = ClassVocabulary.from_names(names, 32, seed=2)
    perm = np.array([4, 2, 0, 1, 3])
    permuted = ClassVocabulary([names[i] for i in perm],
                               vocab.embeddings[perm], 32)
    logits = model.forward(rgb, th, vocab).logits.data
    logits_p = model.forward(rgb, th, permuted).logits.data
    assert np.array_equal(logits[..., perm], logits_p)


def test_point_prompts_change_output(rng, vocab):
    rgb, th = _inputs(rng)
    model = _model()
    plain = model.forward(rgb, th, vocab).logits.data
    pointed = model.forward(rgb, th, vocab,
                            PointPrompt([(10.0, 12.0, 1)])).logits.data
    assert plain.shape == pointed.shape
    assert not np.array_equal(plain, pointed)


def test_forward_is_deterministic(rng, vocab):
    rgb, th = _inputs(rng)
    model = _model()
    a = model.forward(rgb, th, vocab).logits.data
    b = model.forward(rgb, th, vocab).logits.data
    assert np.array_equal(a, b)
