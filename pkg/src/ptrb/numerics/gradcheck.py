"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, clear_tape, no_grad


class GradientCheckError(FloatingPointError):
    pass


@dataclass
class GradReport:
    name: str
    max_rel_error: float
    tol: float
    per_input: list = field(default_factory=list)

    @property
    def passed(self):
        return self.max_rel_error < self.tol

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: max rel err {self.max_rel_error:.3e} (tol {self.tol:.0e})"


def check_gradients(op, inputs, tol=1e-4, step=1e-5, max_entries=None, seed=0, name=None,
                    floor=1e-6):
    """Compare reverse-mode gradients of scalar ``op(*inputs)`` with central differences.

    The error for each input tensor is ``max|analytic - numeric|`` divided by
    ``max(max|analytic|, max|numeric|, floor)``; the report carries the worst
    one. The floor keeps parameters whose true gradient is exactly zero (a
    bias feeding a batch-statistics BatchNorm) from comparing noise to noise.
    ``max_entries`` caps how many coordinates per tensor are probed (chosen
    at random with ``seed``) to keep large checks cheap.
    """
    single = isinstance(inputs, Tensor)
    inputs = [inputs] if single else list(inputs)
    name = name or getattr(op, "__name__", "op")
    saved = [t.requires_grad for t in inputs]
    for t in inputs:
        t.requires_grad = True
        t.grad = None
    clear_tape()
    try:
        out = op(*inputs)
        if out.size != 1:
            raise GradientCheckError(f"{name}: output must be scalar, got shape {out.shape}")
        out.backward()
        analytic = [np.zeros(t.shape) if t.grad is None else t.grad.copy() for t in inputs]
    finally:
        clear_tape()
    rng = np.random.default_rng(seed)
    worst = 0.0
    per_input = []
    with no_grad():
        for t, ga in zip(inputs, analytic):
            if not np.all(np.isfinite(ga)):
                raise GradientCheckError(f"{name}: non-finite analytic gradient")
            flat = t.data.reshape(-1)
            coords = np.arange(flat.size)
            if max_entries is not None and flat.size > max_entries:
                coords = np.sort(rng.choice(flat.size, max_entries, replace=False))
            num = np.empty(coords.size)
            for j, i in enumerate(coords):
                orig = flat[i]
                flat[i] = orig + step
                fp = float(op(*inputs).data)
                flat[i] = orig - step
                fm = float(op(*inputs).data)
                flat[i] = orig
                num[j] = (fp - fm) / (2 * step)
            if not np.all(np.isfinite(num)):
                raise GradientCheckError(f"{name}: non-finite numeric gradient")
            an = ga.reshape(-1)[coords]
            scale = max(np.abs(an).max(initial=0.0), np.abs(num).max(initial=0.0), floor)
            err = float(np.abs(an - num).max(initial=0.0) / scale)
            per_input.append(err)
            worst = max(worst, err)
    for t, flag in zip(inputs, saved):
        t.requires_grad = flag
    return GradReport(name, worst, tol, per_input)
