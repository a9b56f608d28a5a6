"""Shared fixtures: a small dataset and default configs."""

import numpy as np
import pytest

from rgbtseg.config import RunConfig
from rgbtseg.data import CLASS_NAMES, gen_synthetic
from rgbtseg.prompts import ClassVocabulary


@pytest.fixture(scope="session")
def default_cfg():
    cfg = RunConfig()
    cfg.validate()
    return cfg


@pytest.fixture(scope="session")
def vocab(default_cfg):
    return ClassVocabulary.from_names(CLASS_NAMES, default_cfg.model.d_t,
                                      default_cfg.backbone_seed)


@pytest.fixture(scope="session")
def tiny_dataset():
    return gen_synthetic(4, (64, 64), seed=7, split="train")


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
