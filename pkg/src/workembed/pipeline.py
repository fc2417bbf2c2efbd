"""End-to-end model: scaler, workload encoder and latency regressor bound together.

``fit_pipeline`` trains every piece from a raw training TraceSet. The
resulting ``Pipeline`` admits a new workload from a few observations and
predicts its latency for arbitrary configurations.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .embedders import (DecoderHead, EmbeddingModel, embedder_from_json, incremental_embed,
                        train_embedder, train_embedding_arch)
from .hyper import Hyper, for_method
from .nn import dumps
from .predictor import Regressor, train_regressor
from .traces import ScalerStats, TraceSet, apply_scaler, fit_scaler, shared_configs


class NotAdmissible(ValueError):
    """The method cannot admit a workload from this few observations."""


class Pipeline:
    def __init__(self, method: str, hyper: Hyper, scaler: ScalerStats, pool: np.ndarray,
                 embedder=None, decoder: DecoderHead | None = None, regressor: Regressor | None = None,
                 emb_model: EmbeddingModel | None = None, history: dict | None = None):
        self.method = method
        self.hyper = hyper
        self.scaler = scaler
        self.pool = np.asarray(pool, dtype=np.float64).reshape(-1, len(scaler.knob_names))
        self.embedder = embedder
        self.decoder = decoder
        self.regressor = regressor
        self.emb_model = emb_model
        self.history = history or {}

    # -- inference ---------------------------------------------------------

    def scale(self, ts: TraceSet) -> TraceSet:
        return apply_scaler(self.scaler, ts)

    def encode(self, metrics_scaled: np.ndarray) -> np.ndarray:
        if self.embedder is None:
            raise NotAdmissible("the embedding-lookup method has no metric encoder")
        return self.embedder.encode(metrics_scaled)

    def admit(self, ts_scaled: TraceSet, rows, seed: int = 0) -> np.ndarray:
        """Workload encoding from the given rows of one workload (scaled TraceSet)."""
        rows = np.asarray(rows, dtype=int)
        ids = {ts_scaled.workload_ids[r] for r in rows}
        if len(ids) != 1:
            raise ValueError(f"admission rows span several workloads: {sorted(ids)}")
        if self.emb_model is not None:
            if len(rows) < self.emb_model.k:
                raise NotAdmissible(f"embedding method needs >= {self.emb_model.k} observations")
            wid = ids.pop()
            matrix = incremental_embed(self.emb_model, wid, ts_scaled.configs[rows],
                                       ts_scaled.latency[rows], seed=seed)
            return matrix.lookup(wid)
        return self.encode(ts_scaled.metrics[rows]).mean(axis=0)

    def predict(self, z, configs_scaled) -> np.ndarray:
        """Latency in seconds for each scaled configuration row."""
        configs_scaled = np.atleast_2d(configs_scaled)
        if self.emb_model is not None:
            return self.scaler.unscale_latency(self.emb_model.predict_scaled(z, configs_scaled))
        return self.regressor.predict(z, configs_scaled)

    # -- persistence -------------------------------------------------------

    def save(self, out_dir) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = {
            "scaler.json": self.scaler.to_json(),
            "model.json": {"schema_version": 1, "method": self.method, "hyper": self.hyper.to_json(),
                           "shared_pool": self.pool.tolist()},
            "train_log.json": {k: [float(v) for v in vals] for k, vals in sorted(self.history.items())},
        }
        if self.emb_model is not None:
            files["embedding_model.json"] = self.emb_model.to_json()
        else:
            files["embedder.json"] = self.embedder.to_json()
            files["regressor.json"] = self.regressor.to_json()
            if self.decoder is not None:
                files["decoder.json"] = self.decoder.to_json()
        written = []
        for name, doc in files.items():
            path = out / name
            path.write_text(dumps(doc))
            written.append(path)
        return written

    @classmethod
    def load(cls, model_dir) -> "Pipeline":
        d = Path(model_dir)
        read = lambda name: json.loads((d / name).read_text())  # noqa: E731
        meta = read("model.json")
        scaler = ScalerStats.from_json(read("scaler.json"))
        hyper = Hyper.from_json(meta["hyper"])
        history = read("train_log.json") if (d / "train_log.json").exists() else {}
        if (d / "embedding_model.json").exists():
            emb_model = EmbeddingModel.from_json(read("embedding_model.json"), scaler)
            return cls(meta["method"], hyper, scaler, meta["shared_pool"], emb_model=emb_model,
                       history=history)
        embedder = embedder_from_json(read("embedder.json"))
        regressor = Regressor.from_json(read("regressor.json"), embedder, scaler)
        decoder = DecoderHead.from_json(read("decoder.json")) if (d / "decoder.json").exists() else None
        return cls(meta["method"], hyper, scaler, meta["shared_pool"], embedder=embedder,
                   decoder=decoder, regressor=regressor, history=history)


def fit_pipeline(method: str, train: TraceSet, hyper: Hyper | None = None) -> Pipeline:
    """Fit scaler, encoder and regressor on a raw (unscaled) training TraceSet."""
    hyper = hyper or for_method(method)
    scaler = fit_scaler(train)
    scaled = apply_scaler(scaler, train)
    pool = np.array(shared_configs(scaled)).reshape(-1, scaled.s)
    if method == "embedding":
        model = train_embedding_arch(scaled, hyper, scaler)
        return Pipeline(method, hyper, scaler, pool, emb_model=model,
                        history={"embedding": model.history})
    embedder, decoder = train_embedder(method, scaled, hyper, scaler.fingerprint())
    regressor = train_regressor(embedder, scaled, scaler, hyper)
    history = {"regressor": regressor.history}
    if hasattr(embedder, "history"):
        history["encoder"] = embedder.history
    return Pipeline(method, hyper, scaler, pool, embedder=embedder, decoder=decoder,
                    regressor=regressor, history=history)
