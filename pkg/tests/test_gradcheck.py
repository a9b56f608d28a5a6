"""Finite-difference checker: catches wrong gradients, validates its own
preconditions."""

import numpy as np
import pytest

from rgbtseg import tensor as T
from rgbtseg.gradcheck import gradcheck
from rgbtseg.tensor import GradCheckError, Tensor


def test_passes_on_smooth_function():
    x = Tensor(np.random.default_rng(0).normal(size=(4, 4)))
    report = gradcheck(lambda t: (T.sigmoid(t) * t).sum(), x)
    assert report.passed
    assert report.max_rel_err <= 1e-4


def test_catches_wrong_gradient():
    y = Tensor(np.random.default_rng(2).normal(size=(3,)))

    def wrong_grad(t):
        # value is sum(x^2) + const, but only the linear term is on the graph,
        # so the analytic gradient is 1 while the numeric one is 2x
        return Tensor(t.data ** 2).sum() + t.sum() - Tensor(t.data).sum()

    report = gradcheck(wrong_grad, y, eps=1e-5)
    assert not report.passed


def test_eps_must_be_positive():
    with pytest.raises(GradCheckError):
        gradcheck(lambda t: t.sum(), Tensor(np.ones(2)), eps=0.0)


def test_nondeterministic_f_rejected():
    rng = np.random.default_rng(3)

    def noisy(t):
        return (t * Tensor(rng.normal(size=t.shape))).sum()

    with pytest.raises(GradCheckError):
        gradcheck(noisy, Tensor(np.ones(3)))


def test_restores_requires_grad_flag():
    x = Tensor(np.ones(2))
    assert not x.requires_grad
    gradcheck(lambda t: (t * t).sum(), x)
    assert not x.requires_grad
