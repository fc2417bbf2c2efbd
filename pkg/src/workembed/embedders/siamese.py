"""Triplet mining, the siamese encoder and the two hybrid encoder/decoders."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..hyper import Hyper
from ..nn import MLP, Tensor
from ..traces import TraceSet, shared_configs
from .base import DecoderHead, NeuralEmbedder, fit_loop
from .losses import snn_loss, squared_error, triplet_loss


class MiningError(ValueError):
    pass


def config_labels(configs: np.ndarray) -> np.ndarray:
    """Integer label per row; rows with identical configurations share a label."""
    _, inverse = np.unique(np.asarray(configs), axis=0, return_inverse=True)
    return inverse.reshape(-1)


@dataclass(frozen=True)
class TripletBatch:
    anchor_rows: np.ndarray
    positive_rows: np.ndarray
    negative_rows: np.ndarray
    alpha: float

    def __len__(self) -> int:
        return len(self.anchor_rows)

    def chunks(self, size: int):
        for i in range(0, len(self), size):
            yield (self.anchor_rows[i:i + size], self.positive_rows[i:i + size],
                   self.negative_rows[i:i + size])


class TripletMiner:
    """Per epoch, one triplet for every (workload, shared configuration) anchor.

    Positive: same workload, any other configuration. Negative: a different
    workload, drawn uniformly, observed under the anchor's configuration.
    """

    def __init__(self, train: TraceSet, pool: np.ndarray, seed: int, alpha: float = 1.0):
        self.train = train
        self.seed = seed
        self.alpha = alpha
        pool = np.atleast_2d(np.asarray(pool, dtype=np.float64))
        workloads = train.workloads()
        if len(workloads) < 2:
            raise MiningError("triplet mining needs at least two workloads (no valid negatives)")
        if pool.size == 0:
            raise MiningError("shared configuration pool is empty")
        # at[w][c] = row of workload w under shared config c
        self.at: dict[str, list[int]] = {}
        missing = []
        for w in workloads:
            rows = train.rows_of(w)
            lookup = {tuple(train.configs[r]): int(r) for r in rows}
            found = []
            for c, cfg in enumerate(pool):
                r = lookup.get(tuple(cfg))
                if r is None:
                    missing.append((w, c))
                found.append(r)
            if len(rows) < 2:
                raise MiningError(f"workload {w!r} has a single observation; no positive exists")
            self.at[w] = found
        if missing:
            listing = ", ".join(f"{w}@shared[{c}]" for w, c in missing[:10])
            raise MiningError(f"workloads missing shared configurations: {listing}"
                              + (" ..." if len(missing) > 10 else ""))
        self.workloads = workloads
        self.pool_size = len(pool)

    def epoch(self, e: int) -> TripletBatch:
        rng = np.random.default_rng([self.seed, e])
        n_w = len(self.workloads)
        anchors, positives, negatives = [], [], []
        for a_idx, w in enumerate(self.workloads):
            rows = self.train.rows_of(w)
            for c in range(self.pool_size):
                anchor = self.at[w][c]
                others = rows[rows != anchor]
                positives.append(int(others[rng.integers(len(others))]))
                j = int(rng.integers(n_w - 1))
                j = j + 1 if j >= a_idx else j
                negatives.append(self.at[self.workloads[j]][c])
                anchors.append(anchor)
        order = rng.permutation(len(anchors))
        return TripletBatch(np.array(anchors)[order], np.array(positives)[order],
                            np.array(negatives)[order], self.alpha)


def mine_triplets(train: TraceSet, pool=None, seed: int = 0, alpha: float = 1.0,
                  epochs: int = 1):
    """Yield one ``TripletBatch`` per epoch."""
    miner = TripletMiner(train, shared_configs(train) if pool is None else pool, seed, alpha)
    for e in range(epochs):
        yield miner.epoch(e)


def _triplet_batches(miner: TripletMiner, batch_size: int):
    return lambda epoch: list(miner.epoch(epoch).chunks(batch_size))


def _encoder(p: int, out: int, hyper: Hyper, seed: int) -> MLP:
    return MLP([p, *hyper.hidden, out], seed, hidden=hyper.activation, name="encoder")


def _two_seeds(seed: int) -> tuple[int, int]:
    a, b = np.random.default_rng(seed).integers(0, 2**31 - 1, size=2)
    return int(a), int(b)


def siamese_loss(encoder: MLP, xa, xp, xn, alpha: float) -> Tensor:
    return triplet_loss(encoder(Tensor(xa)), encoder(Tensor(xp)), encoder(Tensor(xn)), alpha).mean()


def train_siamese(train: TraceSet, hyper: Hyper, pool=None, scaler_id: str | None = None) -> NeuralEmbedder:
    x = train.metrics
    miner = TripletMiner(train, shared_configs(train) if pool is None else pool, hyper.seed, hyper.alpha)
    encoder = _encoder(x.shape[1], hyper.k, hyper, _two_seeds(hyper.seed)[0])
    history = fit_loop(
        encoder.parameters(), hyper.epochs, hyper.lr, _triplet_batches(miner, hyper.batch_size),
        lambda t: siamese_loss(encoder, x[t[0]], x[t[1]], x[t[2]], hyper.alpha),
        label="siamese",
    )
    emb = NeuralEmbedder("siamese", encoder, (0, hyper.k), hyper, scaler_id)
    emb.history = history
    return emb


def hybrid1_loss(encoder: MLP, decoder: MLP | None, xs: tuple, vs: tuple, alpha: float,
                 gamma: float, lam: float) -> Tensor:
    """Mean over triplets of ``L_T + gamma L_R + lam L_C``.

    With ``lam > 0`` the first ``s`` bottleneck outputs approximate the
    configuration and the remaining ones are the workload encoding.
    """
    s = vs[0].shape[1] if lam else 0
    outs = [encoder(Tensor(x)) for x in xs]
    zs = [o[:, s:] if s else o for o in outs]
    loss = triplet_loss(*zs, alpha)
    if gamma:
        loss = loss + gamma * sum((squared_error(decoder(o), x) for o, x in zip(outs, xs)), start=0.0)
    if lam:
        loss = loss + lam * sum((squared_error(o[:, :s], v) for o, v in zip(outs, vs)), start=0.0)
    return loss.mean()


def train_hybrid1(train: TraceSet, hyper: Hyper, pool=None, scaler_id: str | None = None):
    x, v = train.metrics, train.configs
    s = v.shape[1] if hyper.lam else 0
    miner = TripletMiner(train, shared_configs(train) if pool is None else pool, hyper.seed, hyper.alpha)
    enc_seed, dec_seed = _two_seeds(hyper.seed)
    encoder = _encoder(x.shape[1], s + hyper.k, hyper, enc_seed)
    decoder = MLP([s + hyper.k, *reversed(hyper.hidden), x.shape[1]], dec_seed,
                  hidden=hyper.activation, name="decoder")
    params = encoder.parameters() + (decoder.parameters() if hyper.gamma else [])

    def step(t):
        return hybrid1_loss(encoder, decoder, (x[t[0]], x[t[1]], x[t[2]]),
                            (v[t[0]], v[t[1]], v[t[2]]), hyper.alpha, hyper.gamma, hyper.lam)

    history = fit_loop(params, hyper.epochs, hyper.lr, _triplet_batches(miner, hyper.batch_size),
                       step, label="hybrid1")
    emb = NeuralEmbedder("hybrid1", encoder, (s, s + hyper.k), hyper, scaler_id)
    emb.history = history
    return emb, DecoderHead(decoder, (0, s) if s else None)


def stratified_batches(train: TraceSet, n_workloads: int, n_obs: int, seed: int):
    """Batches of ``n_workloads`` workloads x ``n_obs`` observations each.

    Every epoch each workload's rows are shuffled and chunked; chunks from
    distinct workloads are grouped into batches. Leftover rows and workloads
    that do not fill a group are skipped for that epoch.
    """
    ids = train.workloads()
    if n_workloads < 2 or n_obs < 2:
        raise ValueError("stratified batches need at least 2 workloads x 2 observations")
    n_workloads = min(n_workloads, len(ids))
    short = [w for w in ids if len(train.rows_of(w)) < n_obs]
    if len(ids) < 2 or short:
        raise ValueError(f"cannot stratify: {len(ids)} workloads, too few observations for "
                         f"{short[:5]}")

    def batches(epoch: int):
        rng = np.random.default_rng([seed, epoch])
        chunks = {}
        for w in ids:
            rows = rng.permutation(train.rows_of(w))
            chunks[w] = [rows[i:i + n_obs] for i in range(0, len(rows) - n_obs + 1, n_obs)]
        out = []
        for c in range(max(len(v) for v in chunks.values())):
            ready = [w for w in ids if c < len(chunks[w])]
            ready = [ready[i] for i in rng.permutation(len(ready))]
            for g in range(0, len(ready) - n_workloads + 1, n_workloads):
                out.append(np.concatenate([chunks[w][c] for w in ready[g:g + n_workloads]]))
        order = rng.permutation(len(out))
        return [out[i] for i in order]

    return batches


def hybrid2_loss(encoder: MLP, decoder: MLP, x: np.ndarray, workloads, configs,
                 lam: float, temperature: float, sign: float = 1.0) -> Tensor:
    """Mean reconstruction error plus ``sign * lam`` times the soft nearest neighbour term."""
    z = encoder(Tensor(x))
    loss = squared_error(decoder(z), x).mean()
    if lam:
        loss = loss + (sign * lam) * snn_loss(z, workloads, configs, temperature)
    return loss


def train_hybrid2(train: TraceSet, hyper: Hyper, scaler_id: str | None = None):
    x = train.metrics
    wl = np.array(train.workload_ids)
    cl = config_labels(train.configs)
    batches = stratified_batches(train, hyper.snn_workloads, hyper.snn_configs, hyper.seed)
    enc_seed, dec_seed = _two_seeds(hyper.seed)
    encoder = _encoder(x.shape[1], hyper.k, hyper, enc_seed)
    decoder = MLP([hyper.k, *reversed(hyper.hidden), x.shape[1]], dec_seed,
                  hidden=hyper.activation, name="decoder")
    history = fit_loop(
        encoder.parameters() + decoder.parameters(), hyper.epochs, hyper.lr, batches,
        lambda rows: hybrid2_loss(encoder, decoder, x[rows], wl[rows], cl[rows],
                                  hyper.lam, hyper.temperature, hyper.snn_sign),
        label="hybrid2",
    )
    emb = NeuralEmbedder("hybrid2", encoder, (0, hyper.k), hyper, scaler_id)
    emb.history = history
    return emb, DecoderHead(decoder)
