"""Embedding-lookup architecture: one learned row per workload plus an FC regressor.

The workload encoding is read from the embedding matrix by workload id, so it
cannot vary with the configuration that admitted the workload. New workloads
get a fresh row fitted with every other weight frozen.
"""

from __future__ import annotations

import numpy as np

from ..hyper import Hyper
from ..nn import MLP, Adam, Tensor, concat, param
from ..traces import ScalerStats, TraceSet
from .base import TrainingError, fit_loop, mlp_from_json, mlp_to_json, row_batches


class EmbeddingMatrix:
    def __init__(self, z: np.ndarray, ids: list[str]):
        z = np.asarray(z, dtype=np.float64)
        if z.ndim != 2 or z.shape[0] != len(ids):
            raise ValueError("embedding matrix rows must match the workload ids")
        self.z = z
        self.index = {w: i for i, w in enumerate(ids)}

    @property
    def k(self) -> int:
        return self.z.shape[1]

    @property
    def ids(self) -> list[str]:
        return list(self.index)

    def lookup(self, workload_id: str) -> np.ndarray:
        try:
            return self.z[self.index[workload_id]]
        except KeyError:
            raise KeyError(f"workload {workload_id!r} has no embedding row; "
                           "run incremental_embed first") from None

    def with_row(self, workload_id: str, row: np.ndarray) -> "EmbeddingMatrix":
        if workload_id in self.index:
            z = self.z.copy()
            z[self.index[workload_id]] = row
            return EmbeddingMatrix(z, self.ids)
        return EmbeddingMatrix(np.vstack([self.z, row]), self.ids + [workload_id])


class EmbeddingModel:
    """Trained embedding matrix plus the FC network ``f(z || v)`` on scaled latency."""

    kind = "embedding"

    def __init__(self, matrix: EmbeddingMatrix, net: MLP, hyper: Hyper, scaler: ScalerStats | None = None):
        self.matrix = matrix
        self.net = net
        self.hyper = hyper
        self.scaler = scaler

    @property
    def k(self) -> int:
        return self.matrix.k

    def predict_scaled(self, z: np.ndarray, configs: np.ndarray) -> np.ndarray:
        configs = np.atleast_2d(configs)
        z = np.broadcast_to(np.asarray(z, dtype=np.float64), (configs.shape[0], self.k))
        return self.net(Tensor(np.hstack([z, configs]))).data[:, 0]

    def predict_workload(self, workload_id: str, configs: np.ndarray) -> np.ndarray:
        return self.predict_scaled(self.matrix.lookup(workload_id), configs)

    def to_json(self) -> dict:
        return {"schema_version": 1, "kind": self.kind, "hyper": self.hyper.to_json(),
                "ids": self.matrix.ids, "z": self.matrix.z.tolist(), "net": mlp_to_json(self.net)}

    @classmethod
    def from_json(cls, doc: dict, scaler: ScalerStats | None = None) -> "EmbeddingModel":
        z = np.array(doc["z"], dtype=np.float64).reshape(len(doc["ids"]), -1)
        return cls(EmbeddingMatrix(z, doc["ids"]), mlp_from_json(doc["net"]),
                   Hyper.from_json(doc["hyper"]), scaler)


def embedding_loss(z_table: Tensor, net: MLP, rows_to_workload: np.ndarray, v: np.ndarray,
                   y: np.ndarray) -> Tensor:
    """Mean squared error of ``f(Z[w] || v)`` against scaled latency."""
    inputs = concat([z_table[rows_to_workload], Tensor(v)], axis=1)
    return (net(inputs)[:, 0] - y).square().mean()


def _targets(train: TraceSet, scaler: ScalerStats | None) -> np.ndarray:
    return scaler.scale_latency(train.latency) if scaler is not None else train.latency.copy()


def train_embedding_arch(train: TraceSet, hyper: Hyper, scaler: ScalerStats | None = None) -> EmbeddingModel:
    ids = train.workloads()
    which = np.array([ids.index(w) for w in train.workload_ids])
    y = _targets(train, scaler)
    rng = np.random.default_rng(hyper.seed)
    z_table = param(rng.normal(0.0, 0.1, size=(len(ids), hyper.k)), name="embedding")
    net = MLP([hyper.k + train.s, *hyper.reg_hidden, 1], int(rng.integers(2**31 - 1)),
              hidden=hyper.activation, name="regressor")
    v = train.configs
    history = fit_loop(
        [z_table] + net.parameters(), hyper.epochs, hyper.lr,
        row_batches(len(train), hyper.batch_size, hyper.seed),
        lambda rows: embedding_loss(z_table, net, which[rows], v[rows], y[rows]),
        label="embedding",
    )
    model = EmbeddingModel(EmbeddingMatrix(z_table.data.copy(), ids), net, hyper, scaler)
    model.history = history
    return model


def incremental_embed(model: EmbeddingModel, workload_id: str, configs: np.ndarray,
                      latency: np.ndarray, seed: int = 0) -> EmbeddingMatrix:
    """Fit a fresh embedding row for ``workload_id``; every other weight stays frozen.

    ``configs`` are scaled; ``latency`` is in seconds when the model carries a
    scaler, otherwise already in target units. Needs at least ``k``
    observations.
    """
    configs = np.atleast_2d(np.asarray(configs, dtype=np.float64))
    latency = np.asarray(latency, dtype=np.float64).reshape(-1)
    if len(configs) < model.k:
        raise ValueError(f"incremental embedding needs at least k={model.k} observations, "
                         f"got {len(configs)}")
    y = model.scaler.scale_latency(latency) if model.scaler is not None else latency
    frozen = MLP(model.net.sizes, 0, hidden=model.net.hidden, output=model.net.output)
    for dst, src in zip(frozen.parameters(), model.net.parameters()):
        dst.data = src.data
        dst.requires_grad = False
    rng = np.random.default_rng([seed, len(model.matrix.ids)])
    row = param(rng.normal(0.0, 0.1, size=(1, model.k)), name="new_row")
    opt = Adam([row], lr=model.hyper.incr_lr)
    which = np.zeros(len(configs), dtype=int)
    for step in range(model.hyper.incr_steps):
        opt.zero_grad()
        loss = embedding_loss(row, frozen, which, configs, y)
        if not np.isfinite(loss.item()):
            raise TrainingError(f"incremental embedding diverged at step {step}")
        loss.backward()
        opt.step()
    return model.matrix.with_row(workload_id, row.data[0].copy())
