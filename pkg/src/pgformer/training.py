"""Losses, learning-rate schedule and the minibatch training loop."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .numerics import (AdamState, Module, Parameter, Tensor, adam_step, as_tensor, no_grad,
                       softmax, vector_norm)

GRAVITY_MODES = ("step_norm", "telescoping")


class TrainingError(RuntimeError):
    pass


class GravityWeights(Module):
    """Per-person joint logits ``w`` [J, 3]; effective weights are a softmax over joints per axis."""

    def __init__(self, J: int):
        self.w = Parameter(np.zeros((J, 3)))

    def effective(self) -> Tensor:
        return softmax(self.w, axis=0)


def _weights(w) -> Tensor:
    return w.effective() if isinstance(w, GravityWeights) else softmax(as_tensor(w), axis=-2)


# ----------------------------------------------------------------------
# losses
# ----------------------------------------------------------------------
def mpjpe_loss(pred, gt) -> Tensor:
    """Mean per-joint Euclidean distance over every leading axis of ``[..., J, 3]``."""
    pred, gt = as_tensor(pred), as_tensor(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"mpjpe_loss shape mismatch: {pred.shape} vs {gt.shape}")
    return vector_norm(pred - gt, axis=-1).mean()


def gravity_center(pred, w) -> Tensor:
    """Per-axis weighted joint centroid: ``[..., K, J, 3] -> [..., K, 3]``."""
    return (as_tensor(pred) * _weights(w)).sum(axis=-2)


def gravity_loss(pred, w, mode: str = "step_norm") -> Tensor:
    """Sum over t of ``|g_{t+1} - g_t|`` (mean over leading batch axes); 0 when K == 1.

    ``telescoping`` is the literal vector-sum reading, ``|g_K - g_1|``.
    """
    if mode not in GRAVITY_MODES:
        raise ValueError(f"unknown gravity mode {mode!r}; expected one of {GRAVITY_MODES}")
    g = gravity_center(pred, w)
    K = g.shape[-2]
    if K < 2:
        return Tensor(0.0)
    if mode == "telescoping":
        return vector_norm(g[..., K - 1, :] - g[..., 0, :], axis=-1).mean()
    steps = vector_norm(g[..., 1:, :] - g[..., :-1, :], axis=-1)  # [..., K-1]
    return steps.sum(axis=-1).mean()


# ----------------------------------------------------------------------
@dataclass
class TrainConfig:
    epochs: int = 40
    batch_size: int = 32
    lr0: float = 0.005
    lambda_l: float = 0.01        # leader gravity weight
    lambda_f: float = 0.0001      # follower gravity weight
    leader_weight: float | None = None  # constant override of 10^-epoch
    gravity_mode: str = "step_norm"
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.lr0 <= 0:
            raise ValueError("lr0 must be positive")
        if self.gravity_mode not in GRAVITY_MODES:
            raise ValueError(f"gravity_mode must be one of {GRAVITY_MODES}")

    @property
    def decay(self) -> float:
        """Per-epoch multiplicative learning-rate factor."""
        return 0.1 ** (1.0 / self.epochs)

    def lr_at(self, epoch: int) -> float:
        """Learning rate once ``epoch`` epochs have completed (epoch 0 trains at lr0)."""
        return self.lr0 * 0.1 ** (epoch / self.epochs)

    def leader_weight_at(self, epoch: int) -> float:
        if epoch < 0:
            raise ValueError("epoch index must be >= 0")
        return 10.0 ** (-epoch) if self.leader_weight is None else float(self.leader_weight)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown training config keys: {unknown}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def total_loss(preds, gts, epoch: int, config: TrainConfig, gravity=None) -> tuple[Tensor, dict]:
    """``L_f + w_l(epoch) L_l + lambda_l L_gl + lambda_f L_gf`` on ``[n, ..., K, J, 3]``.

    Person 0 is the leader; every other person counts towards the follower terms.
    ``gravity`` is a (leader, follower) pair of weights; None drops the gravity terms.
    Returns the loss and a dict of its float components.
    """
    preds, gts = as_tensor(preds), as_tensor(gts)
    if preds.shape != gts.shape:
        raise ValueError(f"prediction/target shape mismatch: {preds.shape} vs {gts.shape}")
    if preds.shape[0] < 2:
        raise ValueError("total_loss needs at least two persons on axis 0")
    w_lead = config.leader_weight_at(epoch)
    L_l = mpjpe_loss(preds[0], gts[0])
    L_f = mpjpe_loss(preds[1:], gts[1:])
    loss = L_f + L_l * w_lead
    parts = {"L_f": L_f.item(), "L_l": L_l.item(), "L_gl": 0.0, "L_gf": 0.0}
    if gravity is not None:
        L_gl = gravity_loss(preds[0], gravity[0], config.gravity_mode)
        L_gf = gravity_loss(preds[1:], gravity[1], config.gravity_mode)
        loss = loss + L_gl * config.lambda_l + L_gf * config.lambda_f
        parts["L_gl"], parts["L_gf"] = L_gl.item(), L_gf.item()
    parts["total"] = loss.item()
    return loss, parts


# ----------------------------------------------------------------------
# training loop
# ----------------------------------------------------------------------
LOG_COLUMNS = ("epoch", "lr", "L_f", "L_l", "L_gl", "L_gf", "total", "mpjpe")


@dataclass
class TrainResult:
    log: list[dict] = field(default_factory=list)
    steps: int = 0
    final_lr: float = 0.0


def train(dataset, model, config: TrainConfig, progress=None) -> TrainResult:
    """Adam on shuffled minibatches of (history [n, T, J, 3], future [n, K, J, 3]) pairs.

    ``dataset`` is either a sequence of pairs or a tuple of stacked arrays
    ``(H [N, n, T, J, 3], F [N, n, K, J, 3])``. Each log row holds batch-size
    weighted epoch means; ``mpjpe`` averages every person. ``progress`` is
    called with each row.
    """
    H, F = _stack_dataset(dataset)
    N = H.shape[0]
    rng = np.random.default_rng(config.seed)
    params = model.parameters()
    state = AdamState(lr=config.lr0)
    gravity = model.gravity if model.cfg.use_gravity_loss else None
    result = TrainResult()
    for epoch in range(config.epochs):
        state.lr = config.lr_at(epoch)
        order = rng.permutation(N)
        sums = dict.fromkeys(LOG_COLUMNS[2:], 0.0)
        for start in range(0, N, config.batch_size):
            idx = order[start:start + config.batch_size]
            hist = np.moveaxis(H[idx], 1, 0)  # [n, B, T, J, 3]
            fut = np.moveaxis(F[idx], 1, 0)
            model.zero_grad()
            pred = model(hist)
            loss, parts = total_loss(pred, fut, epoch, config, gravity)
            loss.backward()
            adam_step(params, state)
            result.steps += 1
            with no_grad():
                parts["mpjpe"] = mpjpe_loss(pred, fut).item()
            for k in sums:
                sums[k] += parts[k] * len(idx)
        row = {"epoch": epoch + 1, "lr": state.lr, **{k: v / N for k, v in sums.items()}}
        result.log.append(row)
        if progress is not None:
            progress(row)
    result.final_lr = config.lr_at(config.epochs)
    return result


def _stack_dataset(dataset) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(dataset, tuple) and len(dataset) == 2 and isinstance(dataset[0], np.ndarray):
        H, F = dataset
    else:
        pairs = list(dataset)
        if not pairs:
            raise TrainingError("training dataset is empty")
        H = np.stack([np.asarray(h, dtype=np.float64) for h, _ in pairs])
        F = np.stack([np.asarray(f, dtype=np.float64) for _, f in pairs])
    if H.shape[0] == 0:
        raise TrainingError("training dataset is empty")
    if H.ndim != 5 or F.ndim != 5 or H.shape[:2] != F.shape[:2]:
        raise TrainingError(f"dataset arrays must be [N, n, T, J, 3] / [N, n, K, J, 3]; "
                            f"got {H.shape} / {F.shape}")
    return H, F


def evaluate_loss(dataset, model, batch_size: int = 64) -> float:
    """Mean MPJPE (all persons) of ``model`` over a dataset, without recording a graph."""
    H, F = _stack_dataset(dataset)
    total = 0.0
    with no_grad():
        for start in range(0, H.shape[0], batch_size):
            hist = np.moveaxis(H[start:start + batch_size], 1, 0)
            fut = np.moveaxis(F[start:start + batch_size], 1, 0)
            total += mpjpe_loss(model(hist), fut).item() * hist.shape[1]
    return total / H.shape[0]


# ----------------------------------------------------------------------
# log output
# ----------------------------------------------------------------------
def format_loss_table(log: list[dict]) -> str:
    header = f"{'epoch':>5} {'lr':>10} " + " ".join(f"{c:>10}" for c in LOG_COLUMNS[2:])
    lines = [header]
    for row in log:
        lines.append(f"{row['epoch']:>5d} {row['lr']:>10.3e} "
                     + " ".join(f"{row[c]:>10.4f}" for c in LOG_COLUMNS[2:]))
    return "\n".join(lines)


def write_loss_records(path, log: list[dict]) -> None:
    """One JSON object per epoch."""
    with open(path, "w") as fh:
        for row in log:
            fh.write(json.dumps(row) + "\n")


def read_loss_records(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def lr_schedule(config: TrainConfig) -> list[float]:
    """Learning rate used in each epoch, followed by the rate after the last one."""
    return [config.lr_at(e) for e in range(config.epochs + 1)]


__all__ = ["GravityWeights", "TrainConfig", "TrainResult", "TrainingError", "evaluate_loss",
           "format_loss_table", "gravity_center", "gravity_loss", "lr_schedule", "mpjpe_loss",
           "read_loss_records", "total_loss", "train", "write_loss_records"]
