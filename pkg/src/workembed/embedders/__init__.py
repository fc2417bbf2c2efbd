"""Workload encoders: baselines, autoencoders, siamese and hybrid networks."""

from __future__ import annotations

import numpy as np

from ..hyper import Hyper
from ..traces import TraceSet
from .autoencoders import (contractive_penalty, custom_ae_loss, train_beta_vae,
                           train_contractive_ae, train_custom_ae, vae_loss)
from .base import (DecoderHead, Embedder, IdentityEmbedder, KPCAEmbedder, NeuralEmbedder,
                   PCAEmbedder, TrainingError, embedder_from_json)
from .embedding_arch import (EmbeddingMatrix, EmbeddingModel, embedding_loss, incremental_embed,
                             train_embedding_arch)
from .linear import jacobi_eigh, kpca, pca, symmetric_eigh
from .losses import gaussian_kl, snn_loss, triplet_loss
from .siamese import (MiningError, TripletBatch, TripletMiner, config_labels, hybrid1_loss,
                      hybrid2_loss, mine_triplets, siamese_loss, stratified_batches,
                      train_hybrid1, train_hybrid2, train_siamese)


def fit_pca(x: np.ndarray, k: int, hyper: Hyper | None = None, scaler_id: str | None = None) -> PCAEmbedder:
    return PCAEmbedder(pca(x, k), hyper, scaler_id)


def fit_kpca(x: np.ndarray, k: int, gamma: float | None = None, hyper: Hyper | None = None,
             scaler_id: str | None = None) -> KPCAEmbedder:
    x = np.asarray(x, dtype=np.float64)
    model, _ = kpca(x, k, gamma if gamma else 1.0 / x.shape[1])
    return KPCAEmbedder(model, hyper, scaler_id)


def train_embedder(method: str, train: TraceSet, hyper: Hyper, scaler_id: str | None = None):
    """Train the encoder for ``method`` on a scaled TraceSet.

    Returns ``(embedder, decoder_or_None)``. The embedding-lookup method is
    not an Embedder and is trained through ``train_embedding_arch``.
    """
    if method == "identity":
        return IdentityEmbedder(train.p, hyper, scaler_id), None
    if method == "pca":
        return fit_pca(train.metrics, min(hyper.k, len(train), train.p), hyper, scaler_id), None
    if method == "kpca":
        return fit_kpca(train.metrics, min(hyper.k, len(train)), hyper.kpca_gamma or None,
                        hyper, scaler_id), None
    if method == "custom_ae":
        return train_custom_ae(train, hyper, scaler_id)
    if method == "contractive_ae":
        return train_contractive_ae(train, hyper, scaler_id)
    if method == "beta_vae":
        return train_beta_vae(train, hyper, scaler_id)
    if method == "siamese":
        return train_siamese(train, hyper, scaler_id=scaler_id), None
    if method == "hybrid1":
        return train_hybrid1(train, hyper, scaler_id=scaler_id)
    if method == "hybrid2":
        return train_hybrid2(train, hyper, scaler_id)
    raise ValueError(f"{method!r} is not an encoder method")


__all__ = [
    "DecoderHead", "Embedder", "EmbeddingMatrix", "EmbeddingModel", "IdentityEmbedder",
    "KPCAEmbedder", "MiningError", "NeuralEmbedder", "PCAEmbedder", "TrainingError",
    "TripletBatch", "TripletMiner", "config_labels", "contractive_penalty", "custom_ae_loss",
    "embedder_from_json", "embedding_loss", "fit_kpca", "fit_pca", "gaussian_kl", "hybrid1_loss",
    "hybrid2_loss", "incremental_embed", "jacobi_eigh", "kpca", "mine_triplets", "pca",
    "siamese_loss", "snn_loss", "stratified_batches", "symmetric_eigh", "train_beta_vae",
    "train_contractive_ae", "train_custom_ae", "train_embedder", "train_embedding_arch",
    "train_hybrid1", "train_hybrid2", "train_siamese", "triplet_loss", "vae_loss",
]
