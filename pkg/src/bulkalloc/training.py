"""Training loop: one R-resource system per optimizer step, data generated on the fly."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import losses
from .channel_sim import SimConfig, derive_stream, generate_realizations
from .checkpoint import Checkpoint
from .model import (
    AdamState,
    TrainingError,
    adam_step,
    backward,
    clip_by_global_norm,
    forward,
    init_weights,
    predict,
)

log = logging.getLogger(__name__)

CLIP_NORM = 5.0


class TrainingDivergence(TrainingError):
    def __init__(self, epoch: int, batch: int, detail: str):
        super().__init__(f"training diverged at epoch {epoch}, batch {batch}: {detail}")
        self.epoch = epoch
        self.batch = batch


@dataclass
class TrainConfig:
    loss: str = "RBOL"
    D: int = 4
    q_th: float = 0.4
    epochs: int = 65
    batches_per_epoch: int = 60
    retrain: int = 0
    hidden: int = 16
    dense: int = 10
    clip_norm: float = CLIP_NORM


@dataclass
class TrainLog:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    data_fingerprint: str = ""


# Stream families.  Training, validation and test ids never coincide, so their
# realizations are independent; every loss in one retrain shares them.
def train_stream_id(retrain: int) -> str:
    return f"train/{retrain}"


def val_stream_id(retrain: int) -> str:
    return f"val/{retrain}"


def init_stream_id(retrain: int) -> str:
    return f"init/{retrain}"


TEST_STREAM_ID = "test"


def batch_realization(sim: SimConfig, retrain: int, epoch: int, batch: int):
    return generate_realizations(sim, derive_stream(sim.master_seed, train_stream_id(retrain), epoch, batch), 1)


def train(sim: SimConfig, cfg: TrainConfig) -> tuple[Checkpoint, TrainLog]:
    """Train one predictor; a pure function of ``(sim, cfg)``."""
    weights = init_weights(derive_stream(sim.master_seed, init_stream_id(cfg.retrain)), cfg.hidden, cfg.dense)
    state = AdamState.for_weights(weights)
    history = TrainLog()
    fingerprint = hashlib.sha256()

    for epoch in range(cfg.epochs):
        total = 0.0
        for b in range(cfg.batches_per_epoch):
            data = batch_realization(sim, cfg.retrain, epoch, b)
            x = data.features()[0]
            y = data.y[0]
            fingerprint.update(x.tobytes())
            fingerprint.update(y.tobytes())

            q, cache = forward(weights, x)
            ev = losses.evaluate_loss(cfg.loss, q, y, cfg.D, cfg.q_th)
            if not (np.isfinite(ev.total) and np.all(np.isfinite(ev.grad))):
                raise TrainingDivergence(epoch, b, f"non-finite {cfg.loss} loss {ev.total}")
            grads = clip_by_global_norm(backward(weights, cache, ev.grad), cfg.clip_norm)
            try:
                adam_step(weights, grads, state)
            except TrainingError as exc:
                raise TrainingDivergence(epoch, b, str(exc)) from exc
            total += ev.total
        history.train_loss.append(total / cfg.batches_per_epoch)
        history.val_loss.append(validation_loss(weights, sim, cfg, epoch))
        log.debug(
            "%s D=%d retrain=%d epoch %d: train %.5f val %.5f",
            cfg.loss,
            cfg.D,
            cfg.retrain,
            epoch,
            history.train_loss[-1],
            history.val_loss[-1],
        )

    history.data_fingerprint = fingerprint.hexdigest()
    meta = {
        "loss": cfg.loss,
        "D": cfg.D,
        "q_th": cfg.q_th,
        "epoch": cfg.epochs,
        "batches_per_epoch": cfg.batches_per_epoch,
        "retrain": cfg.retrain,
        "master_seed": sim.master_seed,
        "sim": _sim_meta(sim),
        "data_fingerprint": history.data_fingerprint,
    }
    return Checkpoint(weights, state, meta), history


def validation_loss(weights, sim: SimConfig, cfg: TrainConfig, epoch: int) -> float:
    """Mean per-system loss over ``batches_per_epoch`` held-out realizations."""
    stream = derive_stream(sim.master_seed, val_stream_id(cfg.retrain), epoch)
    data = generate_realizations(sim, stream, cfg.batches_per_epoch)
    q = predict(weights, data.features())
    vals = [losses.evaluate_loss(cfg.loss, q[i], data.y[i], cfg.D, cfg.q_th).total for i in range(len(data))]
    return float(np.mean(vals)) if vals else float("nan")


def _sim_meta(sim: SimConfig) -> dict:
    return {
        "R": sim.R,
        "v": sim.v,
        "k": sim.k,
        "l": sim.l,
        "fft_size": sim.fft_size,
        "delta": sim.delta,
        "snr_db": sim.snr_db,
        "gamma_th": sim.gamma_th,
        "rate_agg": sim.rate_agg,
    }


def sim_from_checkpoint(ckpt: Checkpoint, **overrides) -> SimConfig:
    meta = dict(ckpt.metadata["sim"])
    meta["master_seed"] = ckpt.metadata.get("master_seed", 0)
    return replace(SimConfig(**meta), **overrides)
