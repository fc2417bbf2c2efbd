"""Autoencoder encoders: custom split bottleneck, its contractive variant, beta-VAE."""

from __future__ import annotations

import numpy as np

from ..hyper import Hyper
from ..nn import MLP, Tensor
from ..nn.layers import SMOOTH_ACTIVATIONS
from ..traces import TraceSet
from .base import DecoderHead, NeuralEmbedder, fit_loop, row_batches
from .losses import frobenius_sq, gaussian_kl, squared_error

LOGVAR_CLAMP = 10.0


def _sizes(p: int, hidden, out: int) -> list[int]:
    return [p, *hidden, out]


def build_custom_ae(p: int, s: int, hyper: Hyper, seed: int) -> tuple[MLP, MLP]:
    rng = np.random.default_rng(seed)
    enc_seed, dec_seed = (int(v) for v in rng.integers(0, 2**31 - 1, size=2))
    encoder = MLP(_sizes(p, hyper.hidden, s + hyper.k), enc_seed, hidden=hyper.activation, name="encoder")
    decoder = MLP(_sizes(s + hyper.k, tuple(reversed(hyper.hidden)), p), dec_seed,
                  hidden=hyper.activation, name="decoder")
    return encoder, decoder


def contractive_penalty(encoder: MLP, x, cols: slice) -> Tensor:
    """Per-sample ``||J||_F^2`` of the encoder outputs ``cols`` w.r.t. the input."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    _, jac = encoder.forward_with_jacobian(x, cols)
    return frobenius_sq(jac)


def custom_ae_loss(encoder: MLP, decoder: MLP, x: np.ndarray, v: np.ndarray,
                   gamma: float, lam: float = 0.0) -> Tensor:
    """Mean of ``|x~ - x|^2 + gamma |v~ - v|^2 (+ lam |J_iv|_F^2)`` over the batch.

    The first ``s = v.shape[1]`` bottleneck outputs approximate the
    configuration; the rest form the workload encoding.
    """
    s = v.shape[1]
    if lam:
        bottleneck, jac = encoder.forward_with_jacobian(Tensor(x), slice(s, None))
    else:
        bottleneck = encoder(Tensor(x))
    loss = squared_error(decoder(bottleneck), x) + gamma * squared_error(bottleneck[:, :s], v)
    if lam:
        loss = loss + lam * frobenius_sq(jac)
    return loss.mean()


def _train_split_ae(kind: str, train: TraceSet, hyper: Hyper, lam: float,
                    scaler_id: str | None) -> tuple[NeuralEmbedder, DecoderHead]:
    x, v = train.metrics, train.configs
    s = v.shape[1]
    encoder, decoder = build_custom_ae(x.shape[1], s, hyper, hyper.seed)
    params = encoder.parameters() + decoder.parameters()
    history = fit_loop(
        params, hyper.epochs, hyper.lr, row_batches(len(x), hyper.batch_size, hyper.seed),
        lambda rows: custom_ae_loss(encoder, decoder, x[rows], v[rows], hyper.gamma, lam),
        label=kind,
    )
    emb = NeuralEmbedder(kind, encoder, (s, s + hyper.k), hyper, scaler_id)
    emb.history = history
    return emb, DecoderHead(decoder, (0, s))


def train_custom_ae(train: TraceSet, hyper: Hyper, scaler_id: str | None = None):
    return _train_split_ae("custom_ae", train, hyper, 0.0, scaler_id)


def train_contractive_ae(train: TraceSet, hyper: Hyper, scaler_id: str | None = None):
    if hyper.activation not in SMOOTH_ACTIVATIONS:
        raise ValueError(f"contractive penalty needs a smooth encoder activation, got {hyper.activation!r}")
    return _train_split_ae("contractive_ae", train, hyper, hyper.lam, scaler_id)


def build_vae(p: int, hyper: Hyper, seed: int) -> tuple[MLP, MLP]:
    rng = np.random.default_rng(seed)
    enc_seed, dec_seed = (int(v) for v in rng.integers(0, 2**31 - 1, size=2))
    encoder = MLP(_sizes(p, hyper.hidden, 2 * hyper.k), enc_seed, hidden=hyper.activation, name="encoder")
    decoder = MLP(_sizes(hyper.k, tuple(reversed(hyper.hidden)), p), dec_seed,
                  hidden=hyper.activation, name="decoder")
    return encoder, decoder


def vae_loss(encoder: MLP, decoder: MLP, x: np.ndarray, eps: np.ndarray, beta: float) -> Tensor:
    """Reconstruction plus ``beta`` times the Gaussian KL, with z = mu + sigma * eps."""
    k = eps.shape[1]
    out = encoder(Tensor(x))
    mu = out[:, :k]
    logvar = out[:, k:].clip(-LOGVAR_CLAMP, LOGVAR_CLAMP)
    z = mu + (logvar * 0.5).exp() * eps
    loss = squared_error(decoder(z), x)
    if beta:
        loss = loss + beta * gaussian_kl(mu, logvar)
    return loss.mean()


def train_beta_vae(train: TraceSet, hyper: Hyper, scaler_id: str | None = None):
    if hyper.beta < 0:
        raise ValueError("beta must be >= 0")
    x = train.metrics
    encoder, decoder = build_vae(x.shape[1], hyper, hyper.seed)
    noise = np.random.default_rng([hyper.seed, 1])
    history = fit_loop(
        encoder.parameters() + decoder.parameters(), hyper.epochs, hyper.lr,
        row_batches(len(x), hyper.batch_size, hyper.seed),
        lambda rows: vae_loss(encoder, decoder, x[rows], noise.normal(size=(len(rows), hyper.k)), hyper.beta),
        label="beta_vae",
    )
    emb = NeuralEmbedder("beta_vae", encoder, (0, hyper.k), hyper, scaler_id)
    emb.history = history
    return emb, DecoderHead(decoder)
