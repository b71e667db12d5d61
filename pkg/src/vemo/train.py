"""Adam over the MAE loss with seeded mini-batching and early stopping."""
from dataclasses import dataclass, field, asdict, fields
import csv
import io
import logging
import math
import time

import numpy as np

from .errors import DivergenceError, InsufficientDataError, NonFiniteGradientError, ShapeError
from .nn import VemoParams, vemo_backward, vemo_forward

logger = logging.getLogger(__name__)

EVAL_CHUNK = 512


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 200
    seed: int = 0
    patience: int = 20
    clip_norm: float = 5.0  # None disables clipping

    def __post_init__(self):
        if int(self.batch_size) < 1:
            raise ValueError("batch_size must be >= 1")
        # lr = 0 is allowed: it freezes the parameters, which is handy for baselines
        if not (self.learning_rate >= 0 and math.isfinite(self.learning_rate)):
            raise ValueError("learning_rate must be finite and >= 0")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("adam betas must lie in (0, 1)")
        if self.eps <= 0:
            raise ValueError("eps must be > 0")
        if int(self.epochs) < 1 or int(self.patience) < 1:
            raise ValueError("epochs and patience must be >= 1")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ValueError("clip_norm must be > 0 or None")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown train config fields {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainState:
    """Parameters plus Adam moments. ``adam_step`` updates it in place."""

    params: VemoParams
    m: dict
    v: dict
    step: int = 0
    best: VemoParams = None
    best_val: float = math.inf

    @classmethod
    def start(cls, params):
        zeros = {k: np.zeros_like(a) for k, a in params.tensors.items()}
        return cls(params, zeros, {k: z.copy() for k, z in zeros.items()})


def global_norm(grads):
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))


def clip_gradients(grads, max_norm):
    norm = global_norm(grads)
    if max_norm is None or norm <= max_norm:
        return grads, norm
    s = max_norm / norm
    return {k: g * s for k, g in grads.items()}, norm


def adam_step(state, grads, config):
    """One bias-corrected Adam update; returns ``state`` after incrementing ``step``."""
    tensors = state.params.tensors
    if set(grads) != set(tensors):
        raise ShapeError("gradient set does not match the parameter set")
    for name, g in grads.items():
        if g.shape != tensors[name].shape:
            raise ShapeError(f"gradient {name} has shape {g.shape}, expected {tensors[name].shape}")
        if not np.isfinite(g).all():
            raise NonFiniteGradientError(f"non-finite gradient in tensor {name!r} at step {state.step + 1}")
    state.step += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, g in grads.items():
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        tensors[name] -= config.learning_rate * (m / c1) / (np.sqrt(v / c2) + config.eps)
    return state


def predict(params, X, chunk=EVAL_CHUNK):
    """Batched one-step predictions for ``X`` of shape ``(N, k, 8)``."""
    out = np.empty((X.shape[0], len(params.arch.outputs)))
    for i in range(0, X.shape[0], chunk):
        out[i:i + chunk] = vemo_forward(params, X[i:i + chunk])
    return out


def dataset_mae(params, ds):
    return float(np.mean(np.abs(predict(params, ds.X) - ds.Y)))


@dataclass
class EpochRecord:
    epoch: int
    train_mae: float
    val_mae: float
    wall_time: float = field(default=0.0, compare=False)


@dataclass
class TrainingLog:
    records: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    @property
    def val_mae(self):
        return [r.val_mae for r in self.records]

    @property
    def train_mae(self):
        return [r.train_mae for r in self.records]

    def to_csv(self, wall_time=True):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_mae", "val_mae"] + (["wall_time_s"] if wall_time else []))
        for r in self.records:
            row = [r.epoch, repr(r.train_mae), repr(r.val_mae)]
            w.writerow(row + ([f"{r.wall_time:.3f}"] if wall_time else []))
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        rows = list(csv.DictReader(io.StringIO(text)))
        recs = [
            EpochRecord(int(r["epoch"]), float(r["train_mae"]), float(r["val_mae"]),
                        float(r.get("wall_time_s") or 0.0))
            for r in rows
        ]
        best = min(range(len(recs)), key=lambda i: recs[i].val_mae) + 1 if recs else 0
        return cls(recs, best)


def fit(train, val, config=None, arch=None, init=None, callback=None):
    """Train on ``train`` and keep the parameters with the lowest validation MAE.

    Batches follow a fresh permutation each epoch drawn from
    ``default_rng([seed, epoch])``; gradient reduction happens inside single
    batched matmuls, so repeated calls with the same inputs are bit-identical.
    ``callback(record)`` is invoked after every epoch.
    """
    config = config or TrainConfig()
    if len(train) == 0 or len(val) == 0:
        raise InsufficientDataError("training and validation splits must both be non-empty")
    if train.k != val.k:
        raise ShapeError("train and validation windows differ in length")
    params = init.copy() if init is not None else VemoParams.init(arch, seed=config.seed)
    state = TrainState.start(params)
    log = TrainingLog()
    n = len(train)
    bs = int(config.batch_size)
    since_best = 0
    t0 = time.perf_counter()

    for epoch in range(1, int(config.epochs) + 1):
        order = np.random.default_rng([config.seed, epoch]).permutation(n)
        total = 0.0
        for i in range(0, n, bs):
            idx = np.sort(order[i:i + bs])
            loss, grads = vemo_backward(state.params, train.X[idx], train.Y[idx])
            if not math.isfinite(loss):
                log.records.append(EpochRecord(epoch, loss, math.nan, time.perf_counter() - t0))
                raise DivergenceError(f"training loss became non-finite in epoch {epoch}", log)
            total += loss * idx.size
            for name, g in grads.items():
                if not np.isfinite(g).all():
                    raise NonFiniteGradientError(
                        f"non-finite gradient in tensor {name!r} at step {state.step + 1}"
                    )
            grads, _ = clip_gradients(grads, config.clip_norm)
            adam_step(state, grads, config)
        val_mae = dataset_mae(state.params, val)
        rec = EpochRecord(epoch, total / n, val_mae, time.perf_counter() - t0)
        log.records.append(rec)
        if callback is not None:
            callback(rec)
        logger.info("epoch %d train %.6f val %.6f", epoch, rec.train_mae, val_mae)
        if not math.isfinite(val_mae):
            raise DivergenceError(f"validation MAE became non-finite in epoch {epoch}", log)
        if val_mae < state.best_val:
            state.best_val = val_mae
            state.best = state.params.copy()
            log.best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                log.stopped_early = True
                break
    return state.best, log
