"""Training: description-target losses and SGD with classical momentum.

Each training sample is one subject-object pair with a ground-truth relation.
The adapter output v is scored against every description pair, giving deltas
delta_n = cos(v, raw_n) - cos(v, opp_n); the loss pulls each delta toward
alpha * C[gt][n] plus a per-sample margin

    margin = beta * clip_sim(gt) - lambda

derived from the stored image-text similarity of the ground-truth relation.
Setting beta = lambda = 0 recovers the plain quadratic target.

The SGD update follows the usual momentum convention: weight decay is added
to the gradient, the velocity is buf = momentum * buf + g, and the parameter
moves by -lr * buf.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO

import numpy as np

from . import tensor as T
from .adapter import (AdapterDims, AdapterParams, DirectionalMarkers,
                      RegionFeatures, embed_pair, init_params,
                      params_from_arrays, save_checkpoint)
from .errors import (ConfigError, DataLeakError, DimensionError,
                     ValidationError)
from .pack import DescriptionPack
from .tensor import GradTape, Tensor, backward


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 2.0
    beta: float = 0.1
    lambda_margin: float = 0.03
    temperature: float = 10.0
    lr: float = 0.02
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 4
    epochs: int = 10
    seed: int = 0
    sample_cap: int | None = None  # per-relation cap on training samples

    def __post_init__(self):
        if not (self.lr > 0 and np.isfinite(self.lr)):
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if not (0.0 <= self.momentum < 1.0):
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if not (self.temperature > 0 and np.isfinite(self.temperature)):
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        for name in ("alpha", "beta", "lambda_margin"):
            if not np.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        if self.sample_cap is not None and self.sample_cap < 1:
            raise ConfigError(f"sample_cap must be >= 1, got {self.sample_cap}")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha, "beta": self.beta,
            "lambda_margin": self.lambda_margin,
            "temperature": self.temperature, "lr": self.lr,
            "momentum": self.momentum, "weight_decay": self.weight_decay,
            "batch_size": self.batch_size, "epochs": self.epochs,
            "seed": self.seed, "sample_cap": self.sample_cap,
        }


@dataclass(frozen=True)
class PairSample:
    """One subject-object pair: features, image id, ground truth, clip sims."""
    subject: RegionFeatures
    object: RegionFeatures
    image_id: int
    gt_relation: int
    clip_relation_sims: np.ndarray  # (R,) over the fixture's relation list

    def __post_init__(self):
        sims = np.asarray(self.clip_relation_sims, dtype=np.float32)
        if sims.ndim != 1:
            raise DimensionError(
                f"clip_relation_sims must be a vector, got {sims.shape}")
        if not np.all(np.isfinite(sims)):
            raise ValidationError("clip_relation_sims is not finite")
        if not (0 <= self.gt_relation < sims.shape[0]):
            raise ValidationError(
                f"gt_relation {self.gt_relation} out of range for "
                f"{sims.shape[0]} relations")
        if self.subject.dim != self.object.dim:
            raise DimensionError(
                f"subject width {self.subject.dim} != object width "
                f"{self.object.dim}")
        object.__setattr__(self, "clip_relation_sims", sims)


# ------------------------------------------------------------------- losses

def margin_for(sample: PairSample, config: TrainConfig) -> float:
    """beta * clip_sim(gt) - lambda, the per-sample target shift."""
    return float(config.beta * float(sample.clip_relation_sims[sample.gt_relation])
                 - config.lambda_margin)


def loss_margin(deltas: np.ndarray, assoc_row: np.ndarray, margin: float,
                config: TrainConfig) -> float:
    """Quadratic description-target loss with a uniform margin shift."""
    deltas = np.asarray(deltas, dtype=np.float64)
    assoc_row = np.asarray(assoc_row, dtype=np.float64)
    if deltas.shape != assoc_row.shape or deltas.ndim != 1:
        raise DimensionError(
            f"deltas {deltas.shape} and association row {assoc_row.shape} "
            f"must be equal-length vectors")
    resid = deltas - config.alpha * assoc_row - margin
    return float(np.mean(resid * resid))


def loss_plain(deltas, assoc_row, config: TrainConfig) -> float:
    """Margin-free target loss, written as an explicit loop.

    Kept as an independent route: loss_margin with beta = lambda = 0 must agree
    with this to near machine precision.
    """
    if len(deltas) != len(assoc_row):
        raise DimensionError(
            f"deltas ({len(deltas)}) and association row ({len(assoc_row)}) "
            f"lengths differ")
    total = 0.0
    for d, c in zip(deltas, assoc_row):
        r = float(d) - config.alpha * float(c)
        total += r * r
    return total / len(deltas)


class TapedScorer:
    """Description deltas and the pair loss, built from taped tensor ops."""

    def __init__(self, pack: DescriptionPack, config: TrainConfig, dtype=np.float32):
        self.config = config
        self.raw = Tensor(pack.raw_matrix.astype(dtype))
        self.opp = Tensor(pack.opposite_matrix.astype(dtype))
        self.assoc = pack.associations.values
        self.dtype = dtype

    def deltas(self, v: Tensor) -> Tensor:
        """tau * (raw - opp) @ v / ||v|| as a taped (N,) tensor."""
        inv_norm = T.powc(T.dot(v, v), -0.5)
        diff = T.sub(T.matvec(self.raw, v), T.matvec(self.opp, v))
        return T.scale(T.mul_scalar(diff, inv_norm), self.config.temperature)

    def pair_loss(self, v: Tensor, gt_index: int, margin: float) -> Tensor:
        target = (self.config.alpha * self.assoc[gt_index].astype(np.float64)
                  + margin).astype(self.dtype)
        resid = T.sub(self.deltas(v), Tensor(target, dtype=self.dtype))
        return T.mean_all(T.mul(resid, resid))


# ------------------------------------------------------------------- SGD

def sgd_update_array(p: np.ndarray, g: np.ndarray, buf: np.ndarray,
                     config: TrainConfig) -> tuple[np.ndarray, np.ndarray]:
    """One momentum step on one array; returns (new_param, new_buffer)."""
    dtype = p.dtype
    g = g.astype(dtype, copy=False) + dtype.type(config.weight_decay) * p
    buf = dtype.type(config.momentum) * buf + g
    return p - dtype.type(config.lr) * buf, buf


@dataclass
class MomentumState:
    buffers: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def zeros_for(cls, params: AdapterParams) -> "MomentumState":
        return cls({name: np.zeros(t.shape, dtype=t.dtype.type)
                    for name, t in params.named_tensors()})


def sgd_step(params: AdapterParams, grads: dict[str, np.ndarray],
             config: TrainConfig, state: MomentumState) -> AdapterParams:
    """Apply one update to every tensor; mutates state buffers."""
    new_arrays: dict[str, np.ndarray] = {}
    for name, t in params.named_tensors():
        p, buf = sgd_update_array(t.numpy(), grads[name], state.buffers[name],
                                  config)
        new_arrays[name] = p
        state.buffers[name] = buf
    return params_from_arrays(params.dims, new_arrays)


# ------------------------------------------------------------------- loop

@dataclass
class TrainResult:
    params: AdapterParams
    losses: list[float]
    checkpoint_dir: Path | None


def _check_dataset(dataset, pack: DescriptionPack, base_relations) -> set[str]:
    if not dataset:
        raise ConfigError("training dataset is empty")
    base = [str(n) for n in base_relations]
    if not base:
        raise ConfigError("base relation set is empty")
    for name in base:
        pack.relation_index(name)  # raises UnknownRelationError
    base_set = set(base)
    for i, sample in enumerate(dataset):
        if sample.gt_relation >= pack.relation_count:
            raise ValidationError(
                f"sample {i} ground truth index {sample.gt_relation} is outside "
                f"the pack's {pack.relation_count} relations")
        name = pack.relation_names[sample.gt_relation]
        if name not in base_set:
            raise DataLeakError(
                f"sample {i} has ground truth {name!r} outside the base set")
    return base_set


def _capped(dataset, cap: int | None):
    if cap is None:
        return list(dataset)
    seen: dict[int, int] = {}
    kept = []
    for s in dataset:
        n = seen.get(s.gt_relation, 0)
        if n < cap:
            kept.append(s)
            seen[s.gt_relation] = n + 1
    return kept


def train(dataset, pack: DescriptionPack, config: TrainConfig, base_relations,
          *, markers: DirectionalMarkers, dims: AdapterDims | None = None,
          out_dir: str | Path | None = None,
          log_stream: IO[str] | None = None) -> TrainResult:
    """Fit the adapter on base-relation samples.

    Every sample's ground truth must name a base relation (DataLeakError
    otherwise). A checkpoint is written per epoch plus a `final` one when
    out_dir is given. The whole run is a deterministic function of (dataset
    order, config); shuffling uses one seeded generator across epochs.
    """
    _check_dataset(dataset, pack, base_relations)
    data = _capped(dataset, config.sample_cap)
    if dims is None:
        dims = AdapterDims(feature_dim=pack.embedding_dim)
    if dims.feature_dim != pack.embedding_dim:
        raise DimensionError(
            f"adapter feature_dim {dims.feature_dim} does not match pack "
            f"embedding_dim {pack.embedding_dim}")

    params = init_params(dims, config.seed)
    state = MomentumState.zeros_for(params)
    scorer = TapedScorer(pack, config)
    margins = [margin_for(s, config) for s in data]
    rng = np.random.default_rng(config.seed)
    losses: list[float] = []
    out_path = Path(out_dir) if out_dir is not None else None

    def checkpoint_meta(epochs_done: int) -> dict:
        return {"config": config.to_dict(),
                "base_relations": sorted(set(str(n) for n in base_relations)),
                "epochs_completed": epochs_done,
                "train_samples": len(data)}

    for epoch in range(config.epochs):
        order = rng.permutation(len(data))
        for batch_no, start in enumerate(range(0, len(data), config.batch_size)):
            batch = order[start:start + config.batch_size]
            named = params.named_tensors()
            with GradTape() as tape:
                tape.watch(*[t for _, t in named])
                total = None
                for idx in batch:
                    s = data[idx]
                    v = embed_pair(s.subject, s.object, markers, params)
                    li = scorer.pair_loss(v, s.gt_relation, margins[idx])
                    total = li if total is None else T.add(total, li)
                batch_loss = T.scale(total, 1.0 / len(batch))
            grads_by_tensor = backward(tape, batch_loss)
            grads = {name: grads_by_tensor[t] for name, t in named}
            params = sgd_step(params, grads, config, state)
            loss_val = batch_loss.item()
            losses.append(loss_val)
            if log_stream is not None:
                log_stream.write(json.dumps(
                    {"epoch": epoch, "batch": batch_no,
                     "loss": loss_val, "lr": config.lr}) + "\n")
        if out_path is not None:
            save_checkpoint(params, out_path / f"epoch_{epoch:03d}",
                            meta=checkpoint_meta(epoch + 1))

    final_dir = None
    if out_path is not None:
        final_dir = out_path / "final"
        save_checkpoint(params, final_dir, meta=checkpoint_meta(config.epochs))
    return TrainResult(params=params, losses=losses, checkpoint_dir=final_dir)
