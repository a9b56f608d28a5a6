"""Finite-difference verification of reverse-mode gradients.

``gradcheck`` compares ``backward()`` gradients against central differences
(f(x+eps*e) - f(x-eps*e)) / (2*eps) per coordinate. For large inputs a seeded
subset of coordinates can be sampled to keep runtime bounded; the comparison
itself is unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import GradCheckError, Tensor


@dataclass
class GradCheckReport:
    max_rel_err: float
    passed: bool
    tol: float
    checked_coords: int
    worst_input: int = 0
    per_input: list = field(default_factory=list)


def _rel_err(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(1.0, abs(analytic), abs(numeric))


def gradcheck(
    f,
    inputs,
    eps: float = 1e-5,
    tol: float = 1e-4,
    max_coords_per_input: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradCheckReport:
    """Check analytic gradients of scalar-valued ``f`` against central differences.

    ``inputs`` is a Tensor or a list of Tensors; each gets ``requires_grad``
    forced on for the duration of the check. ``f`` must be deterministic;
    a double-evaluation mismatch raises GradCheckError.
    """
    if eps <= 0:
        raise GradCheckError(f"eps must be positive, got {eps}")
    if isinstance(inputs, Tensor):
        inputs = [inputs]
    rng = rng or np.random.default_rng(0)

    saved_flags = [t.requires_grad for t in inputs]
    for t in inputs:
        t.requires_grad = True
        t.grad = None
    try:
        loss = f(*inputs)
        if not isinstance(loss, Tensor) or loss.size != 1:
            raise GradCheckError("f must return a scalar Tensor")
        loss_value = loss.item()
        if f(*inputs).item() != loss_value:
            raise GradCheckError("f is not deterministic: repeated evaluation differs")
        loss.backward()
        analytic = [
            np.zeros_like(t.data) if t.grad is None else np.array(t.grad)
            for t in inputs
        ]

        max_err = 0.0
        worst_input = 0
        per_input = []
        n_checked = 0
        for i, t in enumerate(inputs):
            flat = t.data.reshape(-1)
            n = flat.size
            if max_coords_per_input is not None and n > max_coords_per_input:
                coords = rng.choice(n, size=max_coords_per_input, replace=False)
            else:
                coords = range(n)
            input_err = 0.0
            for j in coords:
                orig = flat[j]
                flat[j] = orig + eps
                fp = f(*inputs).item()
                flat[j] = orig - eps
                fm = f(*inputs).item()
                flat[j] = orig
                numeric = (fp - fm) / (2.0 * eps)
                err = _rel_err(analytic[i].reshape(-1)[j], numeric)
                input_err = max(input_err, err)
                n_checked += 1
            per_input.append(input_err)
            if input_err > max_err:
                max_err = input_err
                worst_input = i
    finally:
        for t, flag in zip(inputs, saved_flags):
            t.requires_grad = flag
            t.grad = None

    return GradCheckReport(
        max_rel_err=max_err,
        passed=max_err <= tol,
        tol=tol,
        checked_coords=n_checked,
        worst_input=worst_input,
        per_input=per_input,
    )
