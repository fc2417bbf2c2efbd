"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tensor


def grad_check(f: Callable[[], Tensor], params: list[Tensor], h: float = 1e-5) -> float:
    """Max relative error between backprop gradients and central differences.

    ``f`` rebuilds the scalar loss from the current values of ``params`` each
    time it is called. The error per component is
    ``|analytic - numeric| / max(1e-8, |analytic| + |numeric|)``.
    """
    for p in params:
        p.grad = None
    loss = f()
    if not np.all(np.isfinite(loss.data)):
        raise FloatingPointError("loss is not finite at the evaluation point")
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        grad_flat = a.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            up = f().item()
            flat[idx] = orig - h
            down = f().item()
            flat[idx] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise FloatingPointError(f"loss is not finite near {p.name or 'param'}[{idx}]")
            numeric = (up - down) / (2.0 * h)
            err = abs(grad_flat[idx] - numeric) / max(1e-8, abs(grad_flat[idx]) + abs(numeric))
            worst = max(worst, err)
    for p in params:
        p.grad = None
    return worst
