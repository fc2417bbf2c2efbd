"""Embedder types, artifact serialization and the shared training loop."""

from __future__ import annotations

import logging
from typing import Callable, Iterable

import numpy as np

from ..hyper import Hyper
from ..nn import MLP, Adam, Tensor, load_into, params_from_json, params_to_json
from .linear import KPCAModel, PCAModel

log = logging.getLogger(__name__)

EMBEDDER_SCHEMA_VERSION = 1


class TrainingError(FloatingPointError):
    """Raised when a loss or parameter becomes non-finite during training."""


def mlp_to_json(net: MLP) -> dict:
    return {"sizes": net.sizes, "hidden": net.hidden, "output": net.output, "name": net.name,
            "params": params_to_json(net.named_parameters())}


def mlp_from_json(doc: dict) -> MLP:
    net = MLP(doc["sizes"], seed=0, hidden=doc["hidden"], output=doc["output"], name=doc["name"])
    load_into(net.named_parameters(), params_from_json(doc["params"]))
    return net


def _as_matrix(x, p: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.ndim != 2 or x.shape[1] != p:
        raise ValueError(f"expected metric vectors of length {p}, got shape {x.shape}")
    return x, single


class Embedder:
    """Maps scaled metric vectors of length ``p`` to embeddings of length ``k``."""

    kind = "base"
    trainable = False

    def __init__(self, p: int, k: int, hyper: Hyper | None = None, scaler_id: str | None = None):
        self.p = p
        self.k = k
        self.hyper = hyper or Hyper()
        self.scaler_id = scaler_id

    def encode(self, x) -> np.ndarray:
        x, single = _as_matrix(x, self.p)
        z = self._encode(x)
        return z[0] if single else z

    def _encode(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def encode_graph(self, x: Tensor) -> Tensor:
        """In-graph encoding, used when fine-tuning through the regressor."""
        return Tensor(self._encode(x.data))

    def parameters(self) -> list[Tensor]:
        return []

    def to_json(self) -> dict:
        return {"schema_version": EMBEDDER_SCHEMA_VERSION, "kind": self.kind, "p": self.p,
                "k": self.k, "scaler_id": self.scaler_id, "hyper": self.hyper.to_json(),
                **self._payload()}

    def _payload(self) -> dict:
        return {}


class IdentityEmbedder(Embedder):
    """All-metrics baseline: the scaled metric vector is its own encoding."""

    kind = "identity"

    def __init__(self, p: int, hyper: Hyper | None = None, scaler_id: str | None = None):
        super().__init__(p, p, hyper, scaler_id)

    def _encode(self, x):
        return x.copy()

    def encode_graph(self, x):
        return x


class PCAEmbedder(Embedder):
    kind = "pca"

    def __init__(self, model: PCAModel, hyper=None, scaler_id=None):
        super().__init__(model.mean.size, model.k, hyper, scaler_id)
        self.model = model

    def _encode(self, x):
        return self.model.transform(x)

    def _payload(self):
        m = self.model
        return {"mean": m.mean.tolist(), "components": m.components.tolist(),
                "eigenvalues": m.eigenvalues.tolist(), "total_variance": m.total_variance}


class KPCAEmbedder(Embedder):
    kind = "kpca"

    def __init__(self, model: KPCAModel, hyper=None, scaler_id=None):
        super().__init__(model.train.shape[1], model.k, hyper, scaler_id)
        self.model = model

    def _encode(self, x):
        return self.model.transform(x)

    def _payload(self):
        m = self.model
        return {"train": m.train.tolist(), "gamma": m.gamma, "alphas": m.alphas.tolist(),
                "eigenvalues": m.eigenvalues.tolist(),
                "kernel_col_mean": m.kernel_col_mean.tolist(), "kernel_mean": m.kernel_mean}


class NeuralEmbedder(Embedder):
    """Encoder network whose workload encoding is the column block ``z_cols``."""

    trainable = True

    def __init__(self, kind: str, encoder: MLP, z_cols: tuple[int, int], hyper=None, scaler_id=None):
        super().__init__(encoder.sizes[0], z_cols[1] - z_cols[0], hyper, scaler_id)
        self.kind = kind
        self.encoder = encoder
        self.z_cols = tuple(z_cols)

    def encode_graph(self, x: Tensor) -> Tensor:
        return self.encoder(x)[:, slice(*self.z_cols)]

    def _encode(self, x):
        return self.encode_graph(Tensor(x)).data

    def parameters(self):
        return self.encoder.parameters()

    def _payload(self):
        return {"encoder": mlp_to_json(self.encoder), "z_cols": list(self.z_cols)}


class DecoderHead:
    """Decoder from the full bottleneck back to metrics.

    ``config_cols`` marks the bottleneck block that approximates the
    configuration, when the method has one.
    """

    def __init__(self, decoder: MLP, config_cols: tuple[int, int] | None = None):
        self.decoder = decoder
        self.config_cols = tuple(config_cols) if config_cols else None

    def decode(self, bundle) -> np.ndarray:
        return self.decoder(Tensor(np.atleast_2d(bundle))).data

    def parameters(self):
        return self.decoder.parameters()

    def to_json(self) -> dict:
        return {"schema_version": EMBEDDER_SCHEMA_VERSION, "decoder": mlp_to_json(self.decoder),
                "config_cols": list(self.config_cols) if self.config_cols else None}

    @classmethod
    def from_json(cls, doc: dict) -> "DecoderHead":
        return cls(mlp_from_json(doc["decoder"]), doc.get("config_cols"))


def embedder_from_json(doc: dict) -> Embedder:
    if doc.get("schema_version") != EMBEDDER_SCHEMA_VERSION:
        raise ValueError(f"unsupported embedder schema_version {doc.get('schema_version')!r}")
    kind = doc["kind"]
    hyper = Hyper.from_json(doc["hyper"])
    sid = doc.get("scaler_id")
    a = lambda key: np.array(doc[key], dtype=np.float64)  # noqa: E731
    if kind == "identity":
        return IdentityEmbedder(doc["p"], hyper, sid)
    if kind == "pca":
        model = PCAModel(a("mean"), a("components").reshape(doc["p"], doc["k"]), a("eigenvalues"),
                         float(doc["total_variance"]))
        return PCAEmbedder(model, hyper, sid)
    if kind == "kpca":
        train = a("train").reshape(-1, doc["p"])
        model = KPCAModel(train, float(doc["gamma"]), a("alphas").reshape(train.shape[0], doc["k"]),
                          a("eigenvalues"), a("kernel_col_mean"), float(doc["kernel_mean"]))
        return KPCAEmbedder(model, hyper, sid)
    if "encoder" in doc:
        return NeuralEmbedder(kind, mlp_from_json(doc["encoder"]), tuple(doc["z_cols"]), hyper, sid)
    raise ValueError(f"unknown embedder kind {kind!r}")


def fit_loop(params: list[Tensor], epochs: int, lr: float,
             batches: Callable[[int], Iterable], step_loss: Callable[[object], Tensor],
             label: str) -> list[float]:
    """Minibatch Adam; returns the mean loss of every epoch.

    ``batches(epoch)`` yields the batch descriptors for one epoch and
    ``step_loss(batch)`` builds the scalar loss for one of them.
    """
    opt = Adam(params, lr=lr)
    history = []
    for epoch in range(epochs):
        total, count = 0.0, 0
        for step, batch in enumerate(batches(epoch)):
            opt.zero_grad()
            loss = step_loss(batch)
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingError(f"{label}: non-finite loss {value} at epoch {epoch}, step {step} "
                                    f"(lr={lr}); last epoch mean "
                                    f"{history[-1] if history else 'n/a'}")
            loss.backward()
            opt.step()
            if not all(np.all(np.isfinite(p.data)) for p in params):
                raise TrainingError(f"{label}: parameters became non-finite at epoch {epoch}, "
                                    f"step {step} (lr={lr})")
            total += value
            count += 1
        history.append(total / max(count, 1))
        log.debug("%s epoch %d loss %.6g", label, epoch, history[-1])
    return history


def row_batches(n: int, batch_size: int, seed: int) -> Callable[[int], list[np.ndarray]]:
    """Shuffled row minibatches, reshuffled deterministically every epoch."""
    def batches(epoch: int):
        order = np.random.default_rng([seed, epoch]).permutation(n)
        return [order[i:i + batch_size] for i in range(0, n, batch_size)]
    return batches
