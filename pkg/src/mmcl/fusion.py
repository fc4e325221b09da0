"""Multimodal fusion (concatenation and the modality-gated LSTM) plus the
classification heads and their training losses."""

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Parameter, Tensor, concat
from .encoders import _activate, _init_weight, lstm_gates
from .errors import ContractError, DegenerateInputError, DimensionError

SIMPLEX_TOL = 1e-6


@dataclass
class GatedCellState:
    c: Tensor
    h: Tensor


class ModalitySequence:
    """Fixed-order sequence of per-modality embeddings with importance
    weights on the simplex, consumed one modality per step by the mLSTM."""

    def __init__(self, order, inputs, lambdas):
        lambdas = np.asarray(lambdas, dtype=np.float64)
        if len(order) != len(inputs) or lambdas.shape != (len(order),):
            raise ContractError("order, inputs, and lambdas must align")
        total = lambdas.sum()
        if abs(total - 1.0) > SIMPLEX_TOL:
            raise ContractError(f"lambdas must sum to 1, got {total!r}")
        self.order = list(order)
        self.inputs = list(inputs)
        self.lambdas = lambdas / total  # absorb serialization rounding

    @classmethod
    def unchecked(cls, order, inputs, lambdas):
        """Test-only constructor that skips the simplex check."""
        seq = cls.__new__(cls)
        seq.order = list(order)
        seq.inputs = list(inputs)
        seq.lambdas = np.asarray(lambdas, dtype=np.float64)
        return seq


def concat_fuse(emb_set):
    """Rowwise concatenation in the fixed modality order (width n*m)."""
    return concat(emb_set.embeddings, axis=1)


def mlstm_step(params, x_t, state, lambda_t):
    """Gated LSTM step: the candidate-memory contribution is scaled by the
    step's modality weight. With lambda_t = 1 this is a plain LSTM step."""
    i, f, g, o = lstm_gates(params, x_t, state.h)
    lam = lambda_t if isinstance(lambda_t, Tensor) else Tensor(float(lambda_t))
    c = f * state.c + (i * g) * lam
    h = o * c.tanh()
    return GatedCellState(c, h)


def mlstm_forward(params, seq, hidden_dim):
    """Iterate mlstm_step over modalities in fixed order; return final H."""
    if len(seq.order) < 2:
        raise ContractError("mLSTM fusion needs at least 2 modalities")
    n = seq.inputs[0].shape[0]
    state = GatedCellState(Tensor(np.zeros((n, hidden_dim))), Tensor(np.zeros((n, hidden_dim))))
    for x_t, lam_t in zip(seq.inputs, seq.lambdas):
        state = mlstm_step(params, x_t, state, lam_t)
    return state.h


@dataclass
class HeadConfig:
    task: str  # "binary" | "multilabel"
    num_labels: int
    hidden_dims: list = field(default_factory=list)
    class_weights: tuple = None  # (w_pos, w_neg), binary only

    def __post_init__(self):
        if self.task not in ("binary", "multilabel"):
            raise ContractError(f"unknown task {self.task!r}")
        if self.task == "multilabel" and self.class_weights is not None:
            raise ContractError("multilabel heads take no class weights")


class ClassifierHead:
    """MLP from fused features to raw logits (no output activation)."""

    def __init__(self, cfg, input_dim, rng, name="head", activation="tanh"):
        self.cfg = cfg
        self.name = name
        self.activation = activation
        self.input_dim = input_dim
        self.layers = []
        dims = [input_dim] + list(cfg.hidden_dims) + [cfg.num_labels]
        for li, (din, dout) in enumerate(zip(dims[:-1], dims[1:])):
            w = Parameter(f"{name}.w{li}", _init_weight(rng, din, (din, dout)))
            b = Parameter(f"{name}.b{li}", np.zeros(dout))
            self.layers.append((w, b))

    def parameters(self):
        return [p for w, b in self.layers for p in (w, b)]

    def forward(self, features):
        x = features if isinstance(features, Tensor) else Tensor(features)
        if x.shape[1] != self.input_dim:
            raise DimensionError(
                f"{self.name}: expected feature width {self.input_dim}, got {x.shape[1]}")
        for li, (w, b) in enumerate(self.layers):
            x = x @ w.tensor + b.tensor
            if li < len(self.layers) - 1:
                x = _activate(x, self.activation)
        return x


def _check_binary_targets(targets):
    targets = np.asarray(targets, dtype=np.float64)
    if not np.all(np.isin(targets, (0.0, 1.0))):
        raise ContractError("targets must be 0/1")
    return targets


def weighted_bce(logits, targets, class_weights=(1.0, 1.0)):
    """Class-weighted binary cross-entropy on raw logits, mean over samples.

    Uses softplus(z) - y*z for log-sum-exp stability."""
    targets = _check_binary_targets(targets).reshape(-1)
    w_pos, w_neg = class_weights
    if w_pos <= 0 or w_neg <= 0:
        raise ContractError("class weights must be positive")
    z = logits if isinstance(logits, Tensor) else Tensor(logits)
    if z.values.size != targets.size:
        raise DimensionError(f"logits {z.shape} vs targets {targets.shape}")
    y = Tensor(targets.reshape(z.shape))
    w = Tensor(np.where(targets == 1.0, w_pos, w_neg).reshape(z.shape))
    per_sample = w * (z.softplus() - y * z)
    return per_sample.mean()


def multilabel_ce(logits, targets):
    """Unweighted per-label sigmoid cross-entropy, mean over samples and
    labels; each label is optimized independently."""
    targets = _check_binary_targets(targets)
    z = logits if isinstance(logits, Tensor) else Tensor(logits)
    if z.shape != targets.shape:
        raise DimensionError(f"logits {z.shape} vs targets {targets.shape}")
    y = Tensor(targets)
    return (z.softplus() - y * z).mean(axis=0).mean()


def class_weights_from_counts(n_pos, n_neg):
    """Inverse-frequency weights: w_c = (n_pos + n_neg) / (2 * n_c)."""
    if n_pos < 1 or n_neg < 1:
        raise DegenerateInputError("both classes need at least one sample")
    total = n_pos + n_neg
    return total / (2.0 * n_pos), total / (2.0 * n_neg)
