"""Conditional per-pixel classifier.

A shared layer ``relu(x @ W + b)`` feeds three logistic heads:

* ``fg_estimate`` -- first-round foreground estimate, used to score proposals
* ``f1`` -- appearance model for pixels the prior places on the object
* ``f2`` -- appearance model for the rest

``f1`` and ``f2`` are blended by the weight map ``w``:
``f_out = w * f1 + (1 - w) * f2``. Gradients are written out by hand for this
fixed architecture and verified against central differences by
:func:`grad_check`.
"""

import enum
import struct
from dataclasses import dataclass, fields

import numpy as np

from .masks import ShapeMismatch, as_features, as_mask, check_same_shape

PROB_CLAMP = 1e-7
LOGIT_CLIP = 30.0
PARAMS_MAGIC = b"SGVC"
PARAMS_VERSION = 1

HEADS = ("fg_estimate", "f1", "f2")


class TrainingDiverged(FloatingPointError):
    def __init__(self, step, value):
        self.step = step
        super().__init__(f"non-finite loss {value} at step {step}")


class Stage(str, enum.Enum):
    PRETRAIN = "Pretrain"
    FINETUNE = "Finetune"


@dataclass(frozen=True, eq=False)
class PixelClassifier:
    shared_weights: np.ndarray  # (d, h)
    shared_bias: np.ndarray  # (h,)
    head_weights: np.ndarray  # (3, h), rows in HEADS order
    head_bias: np.ndarray  # (3,)

    def __post_init__(self):
        d, h = self.shared_weights.shape
        if self.shared_bias.shape != (h,) or self.head_weights.shape != (3, h) or self.head_bias.shape != (3,):
            raise ValueError("inconsistent parameter shapes")
        if not all(np.all(np.isfinite(a)) for a in self.arrays()):
            raise ValueError("parameters must be finite")

    @property
    def dim(self):
        return self.shared_weights.shape[0]

    @property
    def hidden(self):
        return self.shared_weights.shape[1]

    def arrays(self):
        return [getattr(self, f.name) for f in fields(self)]

    def flatten(self):
        """All parameters in declaration order (shared W, shared b, then w/b per head)."""
        parts = [self.shared_weights.ravel(), self.shared_bias]
        for k in range(3):
            parts += [self.head_weights[k], self.head_bias[k:k + 1]]
        return np.concatenate(parts)

    @classmethod
    def unflatten(cls, vec, d, h):
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != d * h + h + 3 * (h + 1):
            raise ValueError(f"expected {d * h + h + 3 * (h + 1)} parameters, got {vec.size}")
        W = vec[:d * h].reshape(d, h).copy()
        b = vec[d * h:d * h + h].copy()
        rest = vec[d * h + h:].reshape(3, h + 1)
        return cls(W, b, rest[:, :h].copy(), rest[:, h].copy())

    def equals(self, other):
        return all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays()))


def init_classifier(dim, hidden=16, seed=0):
    rng = np.random.default_rng(seed)
    return PixelClassifier(
        rng.normal(0.0, np.sqrt(2.0 / dim), size=(dim, hidden)),
        np.full(hidden, 0.1),
        rng.normal(0.0, np.sqrt(1.0 / hidden), size=(3, hidden)),
        np.zeros(3),
    )


def zero_classifier(dim, hidden=16):
    return PixelClassifier(np.zeros((dim, hidden)), np.zeros(hidden), np.zeros((3, hidden)), np.zeros(3))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1.0
    pretrain_steps: int = 100
    finetune_steps: int = 200
    side_loss_weight: float = 1.0
    seed: int = 0
    hidden_units: int = 16

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.pretrain_steps < 0 or self.finetune_steps < 0:
            raise ValueError("step counts must be >= 0")
        if self.side_loss_weight < 0:
            raise ValueError("side_loss_weight must be >= 0")
        if self.hidden_units < 1:
            raise ValueError("hidden_units must be >= 1")


def _sigmoid(s):
    return 0.5 * (1.0 + np.tanh(0.5 * s))


def _forward(x, params):
    z = x @ params.shared_weights + params.shared_bias
    a = np.maximum(z, 0.0)
    s = a @ params.head_weights.T + params.head_bias  # (n, 3)
    clipped = np.abs(s) > LOGIT_CLIP
    p = _sigmoid(np.clip(s, -LOGIT_CLIP, LOGIT_CLIP))
    return z, a, clipped, p


def classifier_forward(features, params):
    """Per-pixel ``(fg_estimate, f1, f2)`` maps, each strictly inside (0, 1)."""
    features = as_features(features)
    h, w, d = features.shape
    if d != params.dim:
        raise ShapeMismatch(f"features have dim {d}, classifier expects {params.dim}")
    p = _forward(features.reshape(-1, d), params)[3]
    return tuple(p[:, k].reshape(h, w) for k in range(3))


def fuse_forward(f1, f2, w):
    check_same_shape(f1, f2, w)
    w = np.asarray(w, dtype=np.float64)
    return w * f1 + (1.0 - w) * f2


def fuse_backward(g_top, w, f1, f2):
    """Gradients of the fusion layer w.r.t. ``f1``, ``f2`` and ``w``.

    ``g_w`` is reported for diagnostics; the weight map is an input and is
    never updated.
    """
    check_same_shape(g_top, w, f1, f2)
    g_top = np.asarray(g_top, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    return w * g_top, (1.0 - w) * g_top, (np.asarray(f1) - np.asarray(f2)) * g_top


def _bce(p, y):
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return -np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))


def _bce_grad(p, y, n):
    inside = (p > PROB_CLAMP) & (p < 1.0 - PROB_CLAMP)
    pc = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return np.where(inside, (-y / pc + (1.0 - y) / (1.0 - pc)) / n, 0.0)


def loss(f_out, fg_estimate, gt, lam):
    """Mean BCE of the fused map plus ``lam`` times mean BCE of the first-round head."""
    check_same_shape(f_out, fg_estimate, gt)
    y = as_mask(gt).astype(np.float64)
    return float(_bce(np.asarray(f_out, dtype=np.float64), y) + lam * _bce(np.asarray(fg_estimate, dtype=np.float64), y))


def _stack(frames, dim):
    xs, ys, ws = [], [], []
    for features, gt, w in frames:
        features = as_features(features)
        if features.shape[2] != dim:
            raise ShapeMismatch(f"features have dim {features.shape[2]}, classifier expects {dim}")
        check_same_shape(features, gt, w)
        xs.append(features.reshape(-1, dim))
        ys.append(as_mask(gt).ravel().astype(np.float64))
        ws.append(np.asarray(w, dtype=np.float64).ravel())
    return np.concatenate(xs), np.concatenate(ys), np.concatenate(ws)


def _loss_and_grad(x, y, w, params, lam):
    n = x.shape[0]
    z, a, clipped, p = _forward(x, params)
    pe, p1, p2 = p[:, 0], p[:, 1], p[:, 2]
    f_out = w * p1 + (1.0 - w) * p2
    value = _bce(f_out, y) + lam * _bce(pe, y)

    g_top = _bce_grad(f_out, y, n)
    g1, g2, _ = fuse_backward(g_top, w, p1, p2)
    dp = np.stack([lam * _bce_grad(pe, y, n), g1, g2], axis=1)
    ds = np.where(clipped, 0.0, dp * p * (1.0 - p))  # (n, 3)

    dV = ds.T @ a
    dc = ds.sum(axis=0)
    dz = (ds @ params.head_weights) * (z > 0)
    dW = x.T @ dz
    db = dz.sum(axis=0)
    return value, PixelClassifier(dW, db, dV, dc)


def loss_and_grad(params, features, gt, w, lam=1.0):
    """Loss of the full pipeline on one frame and its gradient as a :class:`PixelClassifier`."""
    x, y, wv = _stack([(features, gt, w)], params.dim)
    value, grad = _loss_and_grad(x, y, wv, params, lam)
    return float(value), grad


def train(frames, cfg, stage, init, history=None):
    """Full-batch gradient descent from ``init``.

    Parameters
    ----------
    frames : list of (features, gt, weight map)
        All pixels of all frames form one batch.
    cfg : TrainConfig
    stage : Stage
        Selects ``pretrain_steps`` or ``finetune_steps``.
    init : PixelClassifier
    history : list, optional
        Receives the loss evaluated before each update, then the final loss.

    Returns
    -------
    PixelClassifier
    """
    stage = Stage(stage)
    steps = cfg.pretrain_steps if stage is Stage.PRETRAIN else cfg.finetune_steps
    if not frames:
        raise ValueError("no training frames")
    if steps == 0:
        return init
    x, y, w = _stack(frames, init.dim)
    vec = init.flatten()
    d, h = init.dim, init.hidden
    params = init
    for step in range(steps + 1):
        value, grad = _loss_and_grad(x, y, w, params, cfg.side_loss_weight)
        if not np.isfinite(value):
            raise TrainingDiverged(step, value)
        if history is not None:
            history.append(float(value))
        if step == steps:
            break
        vec = vec - cfg.learning_rate * grad.flatten()
        params = PixelClassifier.unflatten(vec, d, h)
    return params


def grad_check(params, features, gt, w, eps=1e-5, lam=1.0, floor=1e-6):
    """Largest relative gap between analytic and central-difference gradients.

    The relative gap is ``|a - n| / max(|a|, |n|, floor)``; ``floor`` keeps
    vanishing gradients from turning round-off into a large ratio.
    """
    if not eps > 0:
        raise ValueError("eps must be > 0")
    x, y, wv = _stack([(features, gt, w)], params.dim)
    d, h = params.dim, params.hidden
    analytic = _loss_and_grad(x, y, wv, params, lam)[1].flatten()
    vec = params.flatten()
    worst = 0.0
    for i in range(vec.size):
        plus, minus = vec.copy(), vec.copy()
        plus[i] += eps
        minus[i] -= eps
        lp = _loss_and_grad(x, y, wv, PixelClassifier.unflatten(plus, d, h), lam)[0]
        lm = _loss_and_grad(x, y, wv, PixelClassifier.unflatten(minus, d, h), lam)[0]
        num = (lp - lm) / (2.0 * eps)
        gap = abs(analytic[i] - num) / max(abs(analytic[i]), abs(num), floor)
        worst = max(worst, gap)
    return worst


def predict_frame(features, params, w):
    _, f1, f2 = classifier_forward(features, params)
    return fuse_forward(f1, f2, w)


# ---------------------------------------------------------------------------
# serialization: "SGVC", u32 version, u32 d, u32 h, then f64 LE parameters
# ---------------------------------------------------------------------------

_HEAD = struct.Struct("<4sIII")


def dump_params(params):
    return _HEAD.pack(PARAMS_MAGIC, PARAMS_VERSION, params.dim, params.hidden) + params.flatten().astype("<f8").tobytes()


def parse_params(data):
    from .io import FormatError

    if len(data) < _HEAD.size:
        raise FormatError("truncated parameter header", len(data))
    magic, version, d, h = _HEAD.unpack_from(data)
    if magic != PARAMS_MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if version != PARAMS_VERSION:
        raise FormatError(f"unsupported parameter format version {version}", 4)
    count = d * h + h + 3 * (h + 1)
    if len(data) - _HEAD.size != 8 * count:
        raise FormatError(f"payload is {len(data) - _HEAD.size} bytes, expected {8 * count}", len(data))
    vec = np.frombuffer(data, dtype="<f8", offset=_HEAD.size).astype(np.float64)
    return PixelClassifier.unflatten(vec, d, h)


def save_params(path, params):
    with open(path, "wb") as fh:
        fh.write(dump_params(params))


def load_params(path):
    with open(path, "rb") as fh:
        return parse_params(fh.read())
