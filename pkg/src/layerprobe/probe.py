"""Distance probe over scalar-mixed embeddings.

Per target layer l the probe owns mixing logits a (length l+1), a scale
gamma, and a projection B. Mixed embeddings are
m_i = gamma * sum_k softmax(a)_k h_i^k, predicted distances
||B m_i - B m_j||_2, and the training loss per sentence is the mean
absolute gap to the gold tree distances over unordered pairs, normalised
by T^2. Gradients are analytic; parameters live in float32, all
accumulation happens in float64.
"""

from __future__ import annotations

import csv
import os
import tempfile
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bundles import read_header, write_header

CKPT_MAGIC = b"DPCKPT01"

# one training item: (hidden [l+1, T, d] , gold distance matrix [T, T])
TrainItem = tuple[np.ndarray, np.ndarray]


class ProbeError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    pass


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


@dataclass
class ProbeParams:
    layer: int
    mix_logits: np.ndarray  # (layer+1,) float32
    gamma: float
    proj: np.ndarray  # (rank, dim) float32

    def __post_init__(self) -> None:
        self.mix_logits = np.asarray(self.mix_logits, dtype=np.float32)
        self.proj = np.asarray(self.proj, dtype=np.float32)
        # keep gamma float32-representable so checkpoints round-trip bitwise
        self.gamma = float(np.float32(self.gamma))
        if self.mix_logits.shape != (self.layer + 1,):
            raise ProbeError(
                f"mix_logits must have length layer+1={self.layer + 1}, got {self.mix_logits.shape}"
            )
        if self.proj.ndim != 2:
            raise ProbeError(f"projection must be 2-D, got shape {self.proj.shape}")
        if self.proj.shape[0] > self.proj.shape[1]:
            raise ProbeError(f"projection rank {self.proj.shape[0]} exceeds dim {self.proj.shape[1]}")
        if not (np.isfinite(self.mix_logits).all() and np.isfinite(self.proj).all() and np.isfinite(self.gamma)):
            raise ProbeError("non-finite probe parameters")

    @property
    def rank(self) -> int:
        return self.proj.shape[0]

    @property
    def dim(self) -> int:
        return self.proj.shape[1]

    @property
    def mix_weights(self) -> np.ndarray:
        return softmax(self.mix_logits)

    def copy(self) -> "ProbeParams":
        return ProbeParams(self.layer, self.mix_logits.copy(), self.gamma, self.proj.copy())


def init_params(layer: int, dim: int, rank: int | None, rng: np.random.Generator) -> ProbeParams:
    """Neutral start: uniform mixing, unit scale, small uniform projection."""
    rank = dim if rank is None else rank
    bound = 1.0 / np.sqrt(dim)
    proj = rng.uniform(-bound, bound, size=(rank, dim)).astype(np.float32)
    return ProbeParams(layer, np.zeros(layer + 1, dtype=np.float32), 1.0, proj)


def mix_embeddings(params: ProbeParams, hidden: np.ndarray) -> np.ndarray:
    """m_i = gamma * sum_k softmax(a)_k h_i^k over layers 0..l."""
    hidden = np.asarray(hidden)
    if hidden.ndim != 3 or hidden.shape[0] != params.layer + 1:
        raise ProbeError(
            f"expected {params.layer + 1} layer slices, got hidden shape {hidden.shape}"
        )
    return params.gamma * np.tensordot(params.mix_weights, hidden, axes=1)


def predict_distance(params: ProbeParams, m_i: np.ndarray, m_j: np.ndarray) -> float:
    return float(np.linalg.norm(params.proj.astype(np.float64) @ (np.asarray(m_i, dtype=np.float64) - np.asarray(m_j, dtype=np.float64))))


def _pair_distances(params: ProbeParams, hidden: np.ndarray):
    """Mixed pairwise machinery shared by loss and gradients (float64)."""
    hidden64 = np.asarray(hidden, dtype=np.float64)
    w = softmax(params.mix_logits)
    m_raw = np.tensordot(w, hidden64, axes=1)  # unscaled mixture (T, d)
    T = m_raw.shape[0]
    iu, ju = np.triu_indices(T, 1)
    U = m_raw[iu] - m_raw[ju]  # (P, d)
    V = params.gamma * U
    proj64 = params.proj.astype(np.float64)
    PV = V @ proj64.T  # (P, rank)
    dists = np.sqrt((PV * PV).sum(axis=1))
    return hidden64, w, iu, ju, U, V, proj64, PV, dists


def sentence_loss(params: ProbeParams, hidden: np.ndarray, gold: np.ndarray) -> float:
    """Mean absolute distance gap over i<j pairs, normalised by T^2."""
    *_, iu, ju, _, _, _, _, dists = _pair_distances(params, hidden)
    gold = np.asarray(gold, dtype=np.float64)
    T = hidden.shape[1]
    return float(np.abs(gold[iu, ju] - dists).sum() / (T * T))


@dataclass
class Gradients:
    d_proj: np.ndarray
    d_mix_logits: np.ndarray
    d_gamma: float
    loss: float
    zero_distance_pairs: int = 0


def gradients(params: ProbeParams, batch: Sequence[TrainItem]) -> Gradients:
    """Analytic gradient of the mean sentence loss over a batch.

    Pairs with predicted distance exactly 0 take subgradient 0 and are
    counted in ``zero_distance_pairs``.
    """
    if not batch:
        raise ProbeError("empty batch")
    d_proj = np.zeros_like(params.proj, dtype=np.float64)
    g_w = np.zeros(params.layer + 1, dtype=np.float64)
    d_gamma = 0.0
    total_loss = 0.0
    zero_pairs = 0
    w = softmax(params.mix_logits)
    scale = 1.0 / len(batch)
    for hidden, gold in batch:
        hidden64, _, iu, ju, U, V, proj64, PV, dists = _pair_distances(params, hidden)
        gold = np.asarray(gold, dtype=np.float64)
        T = hidden.shape[1]
        resid = gold[iu, ju] - dists
        total_loss += np.abs(resid).sum() / (T * T) * scale
        coef = -np.sign(resid) / (T * T) * scale  # dLoss/d(dist) per pair
        pos = dists > 0.0
        zero_pairs += int((~pos).sum())
        inv = np.divide(1.0, dists, out=np.zeros_like(dists), where=pos)
        s = coef * inv
        d_proj += proj64 @ ((V * s[:, None]).T @ V)
        Q = (PV * inv[:, None]) @ proj64  # B^T B v / dist, (P, d)
        Qc = Q * coef[:, None]
        d_gamma += float((Qc * U).sum())
        DH = hidden64[:, iu, :] - hidden64[:, ju, :]  # (l+1, P, d)
        g_w += params.gamma * np.einsum("pd,kpd->k", Qc, DH)
    d_mix = w * (g_w - float(w @ g_w))  # chain rule through softmax
    return Gradients(d_proj, d_mix, d_gamma, total_loss, zero_pairs)


def dataset_loss(params: ProbeParams, items: Sequence[TrainItem]) -> float:
    if not items:
        raise ProbeError("empty dataset")
    return float(np.mean([sentence_loss(params, h, g) for h, g in items]))


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 40
    batch_size: int = 32
    scheduler_factor: float = 0.5
    scheduler_patience: int = 1
    scheduler_min_delta: float = 0.0
    probe_rank: int | None = None  # None: full rank (= hidden dim)
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def validate(self) -> None:
        if self.learning_rate < 0:
            raise ProbeError("learning_rate must be >= 0")
        if self.epochs < 1:
            raise ProbeError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ProbeError("batch_size must be >= 1")


class Adam:
    """Per-array Adam with bias correction; moments in float64."""

    def __init__(self, shapes: Sequence[tuple[int, ...]], cfg: TrainConfig):
        self.cfg = cfg
        self.lr = cfg.learning_rate
        self.t = 0
        self.m = [np.zeros(s, dtype=np.float64) for s in shapes]
        self.v = [np.zeros(s, dtype=np.float64) for s in shapes]

    def step(self, arrays: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> list[np.ndarray]:
        self.t += 1
        b1, b2, eps = self.cfg.adam_beta1, self.cfg.adam_beta2, self.cfg.adam_eps
        out = []
        with np.errstate(invalid="ignore"):
            for i, (arr, grad) in enumerate(zip(arrays, grads)):
                g = np.asarray(grad, dtype=np.float64)
                self.m[i] = b1 * self.m[i] + (1 - b1) * g
                self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
                m_hat = self.m[i] / (1 - b1**self.t)
                v_hat = self.v[i] / (1 - b2**self.t)
                out.append(np.asarray(arr, dtype=np.float64) - self.lr * m_hat / (np.sqrt(v_hat) + eps))
        return out


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    dev_loss: float
    learning_rate: float
    lr_reduced: bool = False


@dataclass
class TrainResult:
    params: ProbeParams  # best dev-loss parameters
    history: list[EpochStats]
    best_epoch: int
    zero_distance_pairs: int


def train_probe(
    layer: int,
    train_items: Sequence[TrainItem],
    dev_items: Sequence[TrainItem],
    cfg: TrainConfig = TrainConfig(),
) -> TrainResult:
    """Train one probe for ``layer``; deterministic for a fixed seed.

    ``train_items`` hidden tensors must carry exactly layer+1 slices;
    callers slice bundles with ``hidden[:layer + 1]``.
    """
    cfg.validate()
    if not train_items or not dev_items:
        raise ProbeError("train and dev sets must be non-empty")
    dim = train_items[0][0].shape[2]
    rng = np.random.default_rng(cfg.seed)
    params = init_params(layer, dim, cfg.probe_rank, rng)
    adam = Adam([params.mix_logits.shape, (), params.proj.shape], cfg)

    best = params.copy()
    best_dev = np.inf
    best_epoch = 0
    bad_epochs = 0
    history: list[EpochStats] = []
    zero_pairs = 0

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train_items))
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(order), cfg.batch_size):
            batch = [train_items[i] for i in order[start : start + cfg.batch_size]]
            grads = gradients(params, batch)
            if not np.isfinite(grads.loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch {n_batches}")
            zero_pairs += grads.zero_distance_pairs
            new_mix, new_gamma, new_proj = adam.step(
                [params.mix_logits, np.float64(params.gamma), params.proj],
                [grads.d_mix_logits, grads.d_gamma, grads.d_proj],
            )
            params = ProbeParams(
                layer, new_mix.astype(np.float32), float(new_gamma), new_proj.astype(np.float32)
            )
            epoch_loss += grads.loss
            n_batches += 1
        train_loss = epoch_loss / n_batches
        dev_loss = dataset_loss(params, dev_items)
        if not np.isfinite(dev_loss):
            raise TrainingDiverged(f"non-finite dev loss at epoch {epoch}")

        reduced = False
        if dev_loss < best_dev - cfg.scheduler_min_delta:
            best_dev = dev_loss
            best = params.copy()
            best_epoch = epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs > cfg.scheduler_patience:
                adam.lr *= cfg.scheduler_factor
                bad_epochs = 0
                reduced = True
        history.append(EpochStats(epoch, train_loss, dev_loss, adam.lr, reduced))

    return TrainResult(best, history, best_epoch, zero_pairs)


def save_history_csv(
    path: str | os.PathLike, history: Sequence[EpochStats], meta: dict | None = None
) -> None:
    with open(path, "w", newline="") as fh:
        if meta:
            fh.write("# " + " ".join(f"{k}={v}" for k, v in sorted(meta.items())) + "\n")
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "dev_loss", "learning_rate", "lr_reduced"])
        for h in history:
            writer.writerow([h.epoch, f"{h.train_loss:.10g}", f"{h.dev_loss:.10g}", f"{h.learning_rate:.10g}", int(h.lr_reduced)])


def save_checkpoint(
    path: str | os.PathLike,
    params: ProbeParams,
    seed: int | None = None,
    config_hash: str | None = None,
) -> None:
    """Checkpoint = header (DPCKPT01 + manifest JSON) + float32 LE payload.

    Payload order: mix_logits, gamma, projection (row-major).
    """
    from . import __version__

    manifest = {
        "layer": params.layer,
        "hidden_dim": params.dim,
        "probe_rank": params.rank,
        "num_mix": params.layer + 1,
        "dtype": "float32",
        "byte_order": "little",
        "seed": seed,
        "config_hash": config_hash,
        "code_version": __version__,
    }
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            write_header(fh, CKPT_MAGIC, manifest)
            fh.write(params.mix_logits.astype("<f4").tobytes())
            fh.write(np.float32(params.gamma).astype("<f4").tobytes())
            fh.write(params.proj.astype("<f4").tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str | os.PathLike) -> tuple[ProbeParams, dict]:
    from .bundles import BundleTruncatedError

    with open(path, "rb") as fh:
        manifest = read_header(fh, CKPT_MAGIC)
        n_mix = manifest["num_mix"]
        rank, dim = manifest["probe_rank"], manifest["hidden_dim"]
        expected = (n_mix + 1 + rank * dim) * 4
        blob = fh.read()
    if len(blob) != expected:
        raise BundleTruncatedError(
            f"checkpoint payload mismatch: expected {expected} bytes, found {len(blob)}"
        )
    flat = np.frombuffer(blob, dtype="<f4")
    mix = flat[:n_mix].copy()
    gamma = float(flat[n_mix])
    proj = flat[n_mix + 1 :].reshape(rank, dim).copy()
    return ProbeParams(manifest["layer"], mix, gamma, proj), manifest
