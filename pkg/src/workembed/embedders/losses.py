"""Loss terms shared by the neural encoders.

All functions take and return ``Tensor`` objects so they compose inside one
differentiable graph.
"""

from __future__ import annotations

import numpy as np

from ..nn import Tensor, masked_logsumexp


def squared_error(pred: Tensor, target) -> Tensor:
    """Per-row squared Euclidean distance ``||pred - target||^2``."""
    return (pred - target).square().sum(axis=1)


def triplet_loss(z_a: Tensor, z_p: Tensor, z_n: Tensor, alpha: float) -> Tensor:
    """Per-triplet hinge ``max(0, |a - p|^2 - |a - n|^2 + alpha)``.

    Accepts single vectors or row-aligned batches; returns a scalar tensor or
    one value per row respectively.
    """
    if z_a.shape != z_p.shape or z_a.shape != z_n.shape:
        raise ValueError("anchor, positive and negative embeddings must share a shape")
    axis = z_a.ndim - 1
    pos = (z_a - z_p).square().sum(axis=axis)
    neg = (z_a - z_n).square().sum(axis=axis)
    return (pos - neg + alpha).relu()


def gaussian_kl(mu: Tensor, logvar: Tensor) -> Tensor:
    """Per-row KL(N(mu, diag exp(logvar)) || N(0, I))."""
    return 0.5 * (mu.square() + logvar.exp() - 1.0 - logvar).sum(axis=1)


def frobenius_sq(jac: Tensor) -> Tensor:
    """Per-sample squared Frobenius norm of a batch of Jacobians (n, a, b)."""
    return jac.square().sum(axis=2).sum(axis=1)


def snn_masks(workloads, configs) -> tuple[np.ndarray, np.ndarray]:
    """Numerator and denominator membership for the soft nearest neighbour term.

    Numerator of point (j, i): same workload j, different configuration.
    Denominator: different workload and different configuration.
    """
    w = np.asarray(workloads)
    c = np.asarray(configs)
    same_w = w[:, None] == w[None, :]
    same_c = c[:, None] == c[None, :]
    num = same_w & ~same_c
    den = ~same_w & ~same_c
    return num, den


def snn_loss(z: Tensor, workloads, configs, temperature: float) -> Tensor:
    """Mean over the batch of ``-log(sum_num exp(-d/T) / sum_den exp(-d/T))``.

    ``d`` is the squared Euclidean distance between embeddings. Every point
    needs a non-empty numerator and denominator.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    num, den = snn_masks(workloads, configs)
    bad = np.flatnonzero(~num.any(axis=1) | ~den.any(axis=1))
    if bad.size:
        raise ValueError(f"soft nearest neighbour batch has points without a same-workload "
                         f"or different-workload partner: rows {bad.tolist()}")
    n, k = z.shape
    diff = z.reshape(n, 1, k) - z.reshape(1, n, k)
    logits = diff.square().sum(axis=2) * (-1.0 / temperature)
    return (masked_logsumexp(logits, den, axis=1) - masked_logsumexp(logits, num, axis=1)).mean()
