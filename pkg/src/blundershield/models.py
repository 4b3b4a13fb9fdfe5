"""Policy and blunder-risk models, their training loops, and metrics.

The policy maps a board tensor to three independent softmax heads (from
square, to square, promotion class); a move's confidence is the product
of its three head probabilities renormalized over the legal moves.  The
risk model fuses the board trunk with the metadata and move vectors into
a single sigmoid blunder probability.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .board import BoardState, Move
from .dataset import BlunderDataset, PolicyDataset
from .encoding import encode_board, encode_metadata, encode_move
from .errors import BlunderShieldError, TrainingDivergedError, TrainingError
from .nn import (
    Adam,
    ChannelAffine,
    Conv3x3,
    Dense,
    Flatten,
    Relu,
    Sgd,
    SgdMomentum,
    clip_gradients_,
    mse_on_probs,
    sigmoid,
    sigmoid_bce,
    softmax,
    softmax_cross_entropy,
)

log = logging.getLogger(__name__)

OPTIMIZERS = ("sgd", "sgd-momentum", "adam")
LOSSES = ("cross-entropy", "mse")


@dataclass
class TrainingConfig:
    epochs: int = 10
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    optimizer: str = "adam"
    loss: str = "cross-entropy"
    clip_norm: float = 0.0  # 0 disables clipping
    val_fraction: float = 0.2

    def __post_init__(self):
        if self.epochs < 1:
            raise TrainingError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise TrainingError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr < 0:
            raise TrainingError(f"lr must be >= 0, got {self.lr}")
        if self.optimizer not in OPTIMIZERS:
            raise TrainingError(f"unknown optimizer {self.optimizer!r}")
        if self.loss not in LOSSES:
            raise TrainingError(f"unknown loss {self.loss!r}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise TrainingError(f"val_fraction must be in [0, 1), got {self.val_fraction}")


def _make_optimizer(cfg: TrainingConfig):
    if cfg.optimizer == "sgd":
        return Sgd(cfg.lr)
    if cfg.optimizer == "sgd-momentum":
        return SgdMomentum(cfg.lr)
    return Adam(cfg.lr)


class PolicyModel:
    """conv 32 -> conv 64 -> dense 256 trunk with 64/64/5-way softmax heads.
    Heads are zero-initialized: a fresh model is exactly uniform."""

    KIND = "policy"

    def __init__(self, seed: int = 0, dtype=np.float32):
        rng = np.random.Generator(np.random.PCG64(seed))
        self.dtype = dtype
        self.conv1 = Conv3x3(12, 32, rng, dtype)
        self.relu1 = Relu()
        self.conv2 = Conv3x3(32, 64, rng, dtype)
        self.relu2 = Relu()
        self.flatten = Flatten()
        self.fc = Dense(4 * 4 * 64, 256, rng, dtype)
        self.relu3 = Relu()
        self.head_from = Dense(256, 64, dtype=dtype, zero_init=True)
        self.head_to = Dense(256, 64, dtype=dtype, zero_init=True)
        self.head_promo = Dense(256, 5, dtype=dtype, zero_init=True)

    def named_layers(self):
        return [
            ("conv1", self.conv1), ("conv2", self.conv2), ("fc", self.fc),
            ("head_from", self.head_from), ("head_to", self.head_to),
            ("head_promo", self.head_promo),
        ]

    def descriptor(self) -> dict:
        return {
            "kind": self.KIND,
            "input_planes": 12,
            "conv_channels": [32, 64],
            "dense_units": 256,
            "heads": [64, 64, 5],
            "channel_affine": False,
        }

    def _trunk(self, x):
        h = self.relu1.forward(self.conv1.forward(x))
        h = self.relu2.forward(self.conv2.forward(h))
        h = self.relu3.forward(self.fc.forward(self.flatten.forward(h)))
        return h

    def forward_logits(self, boards):
        h = self._trunk(boards)
        return self.head_from.forward(h), self.head_to.forward(h), self.head_promo.forward(h)

    def backward(self, d_from, d_to, d_promo):
        dh = (self.head_from.backward(d_from) + self.head_to.backward(d_to)
              + self.head_promo.backward(d_promo))
        dh = self.fc.backward(self.relu3.backward(dh))
        dh = self.conv2.backward(self.relu2.backward(self.flatten.backward(dh)))
        self.conv1.backward(self.relu1.backward(dh))

    def params_named(self):
        out = []
        for lname, layer in self.named_layers():
            for pname, arr in layer.params():
                out.append((f"{lname}.{pname}", arr))
        return out

    def params_flat(self):
        return [arr for _, arr in self.params_named()]

    def grads_flat(self):
        out = []
        for _, layer in self.named_layers():
            out.extend(layer.grads())
        return out


class BlunderModel:
    """Same conv trunk shape with per-channel affine before each ReLU,
    fused with the metadata and move vectors into a 128/64/32 dense stack
    and one sigmoid unit.  The output layer is zero-initialized: a fresh
    model scores every move 0.5."""

    KIND = "blunder"

    def __init__(self, seed: int = 0, dtype=np.float32):
        rng = np.random.Generator(np.random.PCG64(seed))
        self.dtype = dtype
        self.conv1 = Conv3x3(12, 32, rng, dtype)
        self.affine1 = ChannelAffine(32, dtype)
        self.relu1 = Relu()
        self.conv2 = Conv3x3(32, 64, rng, dtype)
        self.affine2 = ChannelAffine(64, dtype)
        self.relu2 = Relu()
        self.flatten = Flatten()
        self.d1 = Dense(4 * 4 * 64 + 5 + 3, 128, rng, dtype)
        self.relu3 = Relu()
        self.d2 = Dense(128, 64, rng, dtype)
        self.relu4 = Relu()
        self.d3 = Dense(64, 32, rng, dtype)
        self.relu5 = Relu()
        self.out = Dense(32, 1, dtype=dtype, zero_init=True)

    def named_layers(self):
        return [
            ("conv1", self.conv1), ("affine1", self.affine1),
            ("conv2", self.conv2), ("affine2", self.affine2),
            ("d1", self.d1), ("d2", self.d2), ("d3", self.d3), ("out", self.out),
        ]

    def descriptor(self) -> dict:
        return {
            "kind": self.KIND,
            "input_planes": 12,
            "conv_channels": [32, 64],
            "dense_stack": [128, 64, 32],
            "metadata_dims": 5,
            "move_dims": 3,
            "channel_affine": True,
        }

    def forward_logits(self, boards, metas, moves):
        h = self.relu1.forward(self.affine1.forward(self.conv1.forward(boards)))
        h = self.relu2.forward(self.affine2.forward(self.conv2.forward(h)))
        h = self.flatten.forward(h)
        fused = np.concatenate([h, metas, moves], axis=1)
        h = self.relu3.forward(self.d1.forward(fused))
        h = self.relu4.forward(self.d2.forward(h))
        h = self.relu5.forward(self.d3.forward(h))
        return self.out.forward(h)[:, 0]

    def backward(self, dlogits):
        dh = self.out.backward(dlogits[:, None])
        dh = self.d3.backward(self.relu5.backward(dh))
        dh = self.d2.backward(self.relu4.backward(dh))
        dfused = self.d1.backward(self.relu3.backward(dh))
        dboard = self.flatten.backward(dfused[:, : 4 * 4 * 64])
        dboard = self.conv2.backward(self.affine2.backward(self.relu2.backward(dboard)))
        self.conv1.backward(self.affine1.backward(self.relu1.backward(dboard)))

    def params_named(self):
        out = []
        for lname, layer in self.named_layers():
            for pname, arr in layer.params():
                out.append((f"{lname}.{pname}", arr))
        return out

    def params_flat(self):
        return [arr for _, arr in self.params_named()]

    def grads_flat(self):
        out = []
        for _, layer in self.named_layers():
            out.extend(layer.grads())
        return out


def policy_forward(model: PolicyModel, board: np.ndarray):
    """Head distributions for one encoded board: (64,), (64,), (5,)."""
    lf, lt, lp = model.forward_logits(board[None].astype(model.dtype, copy=False))
    return softmax(lf)[0], softmax(lt)[0], softmax(lp)[0]


def blunder_forward(model: BlunderModel, board: np.ndarray, meta: np.ndarray,
                    move: np.ndarray) -> float:
    logit = model.forward_logits(
        board[None].astype(model.dtype, copy=False),
        meta[None].astype(model.dtype, copy=False),
        move[None].astype(model.dtype, copy=False),
    )
    return float(sigmoid(logit)[0])


@dataclass
class ConfidenceMap:
    """Per-legal-move confidence, in canonical move order, summing to 1."""

    probs: dict = field(default_factory=dict)

    def __getitem__(self, move: Move) -> float:
        return self.probs[move]

    def moves(self):
        return list(self.probs)

    def items(self):
        return self.probs.items()

    def __len__(self):
        return len(self.probs)


def move_confidences(heads, legal) -> ConfidenceMap:
    """Combine head distributions into per-move confidences.

    Raw mass is the product of the three head probabilities; if the legal
    moves carry no mass (< 1e-12 total) the map falls back to uniform.
    """
    if not legal:
        raise BlunderShieldError("no legal moves to score", where="models.move_confidences")
    p_from, p_to, p_promo = heads
    ordered = sorted(legal)
    raw = np.array(
        [p_from[m.from_sq] * p_to[m.to_sq] * p_promo[m.promotion] for m in ordered],
        dtype=np.float64,
    )
    total = raw.sum()
    if total < 1e-12:
        uniform = 1.0 / len(ordered)
        return ConfidenceMap({m: uniform for m in ordered})
    return ConfidenceMap({m: float(v) for m, v in zip(ordered, raw / total)})


# ---------------------------------------------------------------------------
# Training.

def _policy_tensors(ds: PolicyDataset, dtype):
    boards = np.stack([encode_board(p.state) for p in ds.pairs]).astype(dtype)
    y_from = np.array([p.move.from_sq for p in ds.pairs], dtype=np.int64)
    y_to = np.array([p.move.to_sq for p in ds.pairs], dtype=np.int64)
    y_promo = np.array([p.move.promotion for p in ds.pairs], dtype=np.int64)
    return boards, y_from, y_to, y_promo


def train_policy(ds: PolicyDataset, cfg: TrainingConfig,
                 model: Optional[PolicyModel] = None):
    """Train (or warm-start) the policy; returns (model, per-epoch loss curve).

    The loss is the sum of the three heads' cross-entropy terms (or the MSE
    ablation when cfg.loss is "mse").
    """
    if not ds.pairs:
        raise TrainingError("empty policy dataset")
    if model is None:
        model = PolicyModel(seed=cfg.seed)
    boards, y_from, y_to, y_promo = _policy_tensors(ds, model.dtype)
    n = len(ds.pairs)
    opt = _make_optimizer(cfg)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    curve = []
    step = 0
    for _epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            lf, lt, lp = model.forward_logits(boards[idx])
            if cfg.loss == "cross-entropy":
                loss_f, d_f, _ = softmax_cross_entropy(lf, y_from[idx])
                loss_t, d_t, _ = softmax_cross_entropy(lt, y_to[idx])
                loss_p, d_p, _ = softmax_cross_entropy(lp, y_promo[idx])
            else:
                loss_f, d_f, _ = mse_on_probs(lf, y_from[idx], 64)
                loss_t, d_t, _ = mse_on_probs(lt, y_to[idx], 64)
                loss_p, d_p, _ = mse_on_probs(lp, y_promo[idx], 5)
            loss = float(loss_f + loss_t + loss_p)
            model.backward(d_f, d_t, d_p)
            grads = model.grads_flat()
            norm = clip_gradients_(grads, cfg.clip_norm)
            if not np.isfinite(loss) or not np.isfinite(norm):
                raise TrainingDivergedError(
                    f"non-finite loss {loss} at step {step}",
                    batch_index=step, grad_norm=norm,
                )
            opt.step(model.params_flat(), grads)
            epoch_losses.append(loss)
            step += 1
        curve.append(float(np.mean(epoch_losses)))
    return model, curve


def _blunder_tensors(ds: BlunderDataset, dtype):
    boards = np.stack([encode_board(e.state) for e in ds.examples]).astype(dtype)
    metas = np.stack([encode_metadata(e.state) for e in ds.examples]).astype(dtype)
    moves = np.stack([encode_move(e.move) for e in ds.examples]).astype(dtype)
    labels = np.array([e.label for e in ds.examples], dtype=dtype)
    return boards, metas, moves, labels


def train_blunder(ds: BlunderDataset, cfg: TrainingConfig,
                  model: Optional[BlunderModel] = None):
    """Train the risk model; returns (model, held-out accuracy, held-out AUC).

    The split is stratified per class so the held-out set always contains
    both classes when val_fraction > 0.
    """
    labels_all = [e.label for e in ds.examples]
    if len(set(labels_all)) < 2:
        raise TrainingError("blunder dataset needs both classes")
    if model is None:
        model = BlunderModel(seed=cfg.seed)
    boards, metas, moves, labels = _blunder_tensors(ds, model.dtype)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))

    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == 0)
    rng.shuffle(pos)
    rng.shuffle(neg)
    n_val_pos = round(cfg.val_fraction * len(pos))
    n_val_neg = round(cfg.val_fraction * len(neg))
    if cfg.val_fraction > 0:
        n_val_pos = max(1, n_val_pos)
        n_val_neg = max(1, n_val_neg)
    val_idx = np.concatenate([pos[:n_val_pos], neg[:n_val_neg]])
    train_idx = np.concatenate([pos[n_val_pos:], neg[n_val_neg:]])
    if len(train_idx) == 0:
        raise TrainingError("blunder dataset too small for the requested split")

    opt = _make_optimizer(cfg)
    step = 0
    for _epoch in range(cfg.epochs):
        order = train_idx[rng.permutation(len(train_idx))]
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            logits = model.forward_logits(boards[idx], metas[idx], moves[idx])
            loss, dlogits, _ = sigmoid_bce(logits, labels[idx])
            model.backward(dlogits)
            grads = model.grads_flat()
            norm = clip_gradients_(grads, cfg.clip_norm)
            if not np.isfinite(loss) or not np.isfinite(norm):
                raise TrainingDivergedError(
                    f"non-finite loss {loss} at step {step}",
                    batch_index=step, grad_norm=norm,
                )
            opt.step(model.params_flat(), grads)
            step += 1

    eval_idx = val_idx if len(val_idx) else train_idx
    scores = sigmoid(model.forward_logits(boards[eval_idx], metas[eval_idx], moves[eval_idx]))
    held_labels = labels[eval_idx]
    acc = accuracy(held_labels, scores)
    try:
        held_auc = auc(held_labels, scores)
    except BlunderShieldError:
        held_auc = float("nan")
    return model, acc, held_auc


# ---------------------------------------------------------------------------
# Metrics.

def accuracy(labels, scores, threshold: float = 0.5) -> float:
    labels = np.asarray(labels)
    preds = np.asarray(scores) >= threshold
    return float((preds == (labels == 1)).mean())


def auc(labels, scores) -> float:
    """Probability a random positive outranks a random negative, ties at
    half weight (the rank-sum form of the pairwise count)."""
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise BlunderShieldError("auc needs both classes", where="models.auc")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    n = len(scores)
    while i < n:
        j = i
        while j < n and sorted_scores[j] == sorted_scores[i]:
            j += 1
        ranks[order[i:j]] = (i + j - 1) / 2.0 + 1.0
        i = j
    rank_sum = ranks[labels == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))
