"""Sequence classifier: batch norm, single-layer LSTM, linear head.

All gradients are derived analytically (including the batch-statistics
chain of train-mode batch norm and full backpropagation through time)
and validated against central finite differences by `grad_check`.

Shapes: batches are (M, T, D) feature arrays with integer labels (M, T).
Internally the recurrence runs time-major, see kernels.py.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .errors import LabelOutOfRange, ShapeMismatch, StaleCache
from .kernels import lstm_backward_kernel, lstm_forward_kernel


@dataclass
class BatchNormState:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5


@dataclass
class LstmParams:
    w_ih: np.ndarray  # (D, 4H)
    w_hh: np.ndarray  # (H, 4H)
    b: np.ndarray  # (4H,)

    @property
    def hidden(self) -> int:
        return self.w_hh.shape[0]


@dataclass
class FcParams:
    w: np.ndarray  # (N, H)
    b: np.ndarray  # (N,)


@dataclass
class ModelState:
    bn: BatchNormState
    lstm: LstmParams
    fc: FcParams
    input_dim: int
    hidden: int
    n_classes: int
    feature_layout: str = ""

    def clone(self) -> "ModelState":
        return copy.deepcopy(self)


def init_model(
    rng: np.random.Generator,
    input_dim: int,
    hidden: int,
    n_classes: int,
    feature_layout: str = "",
    bn_momentum: float = 0.1,
    bn_eps: float = 1e-5,
) -> ModelState:
    """Uniform(-1/sqrt(H), 1/sqrt(H)) weights; forget-gate bias starts at +1."""
    d, h, n = input_dim, hidden, n_classes
    bound = 1.0 / np.sqrt(h)
    bn = BatchNormState(
        gamma=np.ones(d),
        beta=np.zeros(d),
        running_mean=np.zeros(d),
        running_var=np.ones(d),
        momentum=bn_momentum,
        eps=bn_eps,
    )
    b = np.zeros(4 * h)
    b[h : 2 * h] = 1.0
    lstm = LstmParams(
        w_ih=rng.uniform(-bound, bound, size=(d, 4 * h)),
        w_hh=rng.uniform(-bound, bound, size=(h, 4 * h)),
        b=b,
    )
    fc = FcParams(w=rng.uniform(-bound, bound, size=(n, h)), b=np.zeros(n))
    return ModelState(bn=bn, lstm=lstm, fc=fc, input_dim=d, hidden=h, n_classes=n,
                      feature_layout=feature_layout)


def named_parameters(state: ModelState) -> list[tuple[str, np.ndarray]]:
    return [
        ("bn.gamma", state.bn.gamma),
        ("bn.beta", state.bn.beta),
        ("lstm.w_ih", state.lstm.w_ih),
        ("lstm.w_hh", state.lstm.w_hh),
        ("lstm.b", state.lstm.b),
        ("fc.w", state.fc.w),
        ("fc.b", state.fc.b),
    ]


def param_count(state: ModelState) -> int:
    return sum(p.size for _, p in named_parameters(state))


def forward(state: ModelState, x: np.ndarray, mode: str = "train",
            h0: np.ndarray | None = None, c0: np.ndarray | None = None):
    """Full forward pass. Returns (logits (M,T,N), cache).

    Pure function: running statistics are NOT updated here; the trainer
    applies `update_running_stats(state, cache)` after each train batch.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be train or eval, got {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != state.input_dim:
        raise ShapeMismatch(
            f"expected (M, T, {state.input_dim}) input, got {x.shape}"
        )
    m, t, d = x.shape
    h = state.hidden

    flat = x.reshape(m * t, d)
    if mode == "train":
        mu = flat.mean(axis=0)
        var = flat.var(axis=0)
    else:
        mu = state.bn.running_mean
        var = state.bn.running_var
    istd = 1.0 / np.sqrt(var + state.bn.eps)
    xhat = (flat - mu) * istd
    y = xhat * state.bn.gamma + state.bn.beta

    # time-major for the recurrence; per-step slices stay contiguous
    y_tm = np.ascontiguousarray(y.reshape(m, t, d).transpose(1, 0, 2))
    pre = (y_tm.reshape(t * m, d) @ state.lstm.w_ih + state.lstm.b).reshape(t, m, 4 * h)
    if h0 is None:
        h0 = np.zeros((m, h))
    if c0 is None:
        c0 = np.zeros((m, h))
    hs, cs, gi, gf, gg, go, tc = lstm_forward_kernel(
        np.ascontiguousarray(pre), state.lstm.w_hh, h0, c0
    )
    h_seq = hs[1:]  # (T, M, H)
    logits_tm = (h_seq.reshape(t * m, h) @ state.fc.w.T + state.fc.b).reshape(t, m, -1)
    logits = np.ascontiguousarray(logits_tm.transpose(1, 0, 2))

    cache = {
        "mode": mode,
        "shape": (m, t, d),
        "mu": mu,
        "var": var,
        "istd": istd,
        "xhat": xhat,
        "y_tm": y_tm,
        "hs": hs,
        "cs": cs,
        "gates": (gi, gf, gg, go, tc),
    }
    return logits, cache


def update_running_stats(state: ModelState, cache) -> None:
    """Fold the cached batch statistics into the running estimates.

    The biased batch variance is stored, so that with momentum == 1.0
    eval-mode normalization reproduces the train-mode pass exactly.
    """
    if cache["mode"] != "train":
        raise StaleCache("running stats can only be updated from a train-mode cache")
    mom = state.bn.momentum
    state.bn.running_mean = (1.0 - mom) * state.bn.running_mean + mom * cache["mu"]
    state.bn.running_var = (1.0 - mom) * state.bn.running_var + mom * cache["var"]


def nll_loss(logits: np.ndarray, labels: np.ndarray):
    """Mean negative log likelihood over all positions.

    Returns (loss, dlogits) with dlogits = (softmax - onehot) / (M*T).
    """
    m, t, n = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (m, t):
        raise ShapeMismatch(f"labels shape {labels.shape} does not match logits {logits.shape}")
    if labels.min() < 0 or labels.max() >= n:
        raise LabelOutOfRange(f"labels must lie in [0, {n})")
    flat = logits.reshape(m * t, n)
    lab = labels.reshape(m * t)
    shifted = flat - flat.max(axis=1, keepdims=True)
    expv = np.exp(shifted)
    p = expv / expv.sum(axis=1, keepdims=True)
    idx = np.arange(m * t)
    with np.errstate(divide="ignore"):  # fully saturated rows signal divergence
        loss = float(-np.log(p[idx, lab]).mean())
    d = p.copy()
    d[idx, lab] -= 1.0
    d /= m * t
    return loss, d.reshape(m, t, n)


def backward(state: ModelState, cache, dlogits: np.ndarray):
    """Gradients for every parameter given d(loss)/d(logits).

    Returns (grads dict keyed like named_parameters, dx) where dx is the
    gradient w.r.t. the raw input batch (through the train-mode batch
    statistics when applicable).
    """
    m, t, d = cache["shape"]
    h = state.hidden
    n = state.n_classes
    if dlogits.shape != (m, t, n):
        raise StaleCache(
            f"dlogits shape {dlogits.shape} does not match cached forward {(m, t, n)}"
        )
    if cache["mode"] != "train":
        raise StaleCache("backward requires a cache from a train-mode forward")

    dl_tm = np.ascontiguousarray(np.asarray(dlogits).transpose(1, 0, 2))
    hs = cache["hs"]
    h_seq_flat = hs[1:].reshape(t * m, h)
    dl_flat = dl_tm.reshape(t * m, n)

    d_fc_w = dl_flat.T @ h_seq_flat
    d_fc_b = dl_flat.sum(axis=0)
    dh_out = np.ascontiguousarray((dl_flat @ state.fc.w).reshape(t, m, h))

    gi, gf, gg, go, tc = cache["gates"]
    w_hh_t = np.ascontiguousarray(state.lstm.w_hh.T)
    da, _dh0, _dc0 = lstm_backward_kernel(
        dh_out, w_hh_t, hs, cache["cs"], gi, gf, gg, go, tc
    )
    da_flat = da.reshape(t * m, 4 * h)
    d_w_hh = hs[:t].reshape(t * m, h).T @ da_flat
    d_b = da_flat.sum(axis=0)
    y_flat_tm = cache["y_tm"].reshape(t * m, d)
    d_w_ih = y_flat_tm.T @ da_flat

    dy_tm = (da_flat @ state.lstm.w_ih.T).reshape(t, m, d)
    dy = np.ascontiguousarray(dy_tm.transpose(1, 0, 2)).reshape(m * t, d)

    xhat = cache["xhat"]
    istd = cache["istd"]
    d_gamma = (dy * xhat).sum(axis=0)
    d_beta = dy.sum(axis=0)
    dxhat = dy * state.bn.gamma
    # batch-statistics chain of train-mode BN
    dx = (
        dxhat - dxhat.mean(axis=0) - xhat * (dxhat * xhat).mean(axis=0)
    ) * istd
    dx = dx.reshape(m, t, d)

    grads = {
        "bn.gamma": d_gamma,
        "bn.beta": d_beta,
        "lstm.w_ih": d_w_ih,
        "lstm.w_hh": d_w_hh,
        "lstm.b": d_b,
        "fc.w": d_fc_w,
        "fc.b": d_fc_b,
    }
    return grads, dx


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def predict_steps(state: ModelState, feats: np.ndarray,
                  h0: np.ndarray | None = None, c0: np.ndarray | None = None):
    """Eval-mode per-frame prediction over one sequence of features.

    Returns (labels (L,), probs (L, N), h_final, c_final). Ties in the
    argmax go to the lowest class id. The hidden state is carried across
    the whole call, so chained calls reproduce one long pass exactly.
    """
    feats = np.asarray(feats, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[1] != state.input_dim:
        raise ShapeMismatch(f"expected (L, {state.input_dim}) features, got {feats.shape}")
    logits, cache = forward(state, feats[None, :, :], mode="eval", h0=h0, c0=c0)
    probs = softmax(logits[0])
    labels = np.argmax(probs, axis=1)  # np.argmax returns the first (lowest) max
    hs = cache["hs"]
    cs = cache["cs"]
    return labels, probs, hs[-1].copy(), cs[-1].copy()


def predict_framewise(state: ModelState, feats: np.ndarray):
    """Per-frame labels and class probabilities for one sequence."""
    labels, probs, _, _ = predict_steps(state, feats)
    return labels, probs


@dataclass
class GradCheckReport:
    passed: bool
    max_rel_error: float
    per_param: dict = field(default_factory=dict)
    worst_param: str = ""

    def __str__(self):
        lines = [f"grad_check: {'PASS' if self.passed else 'FAIL'} "
                 f"(max rel err {self.max_rel_error:.3e} at {self.worst_param})"]
        for name, err in self.per_param.items():
            lines.append(f"  {name:12s} {err:.3e}")
        return "\n".join(lines)


def grad_check(seed: int = 0, dims=(4, 8, 3, 5, 2), step: float = 1e-5,
               tol: float = 1e-4, corrupt_param: str | None = None) -> GradCheckReport:
    """Compare analytic gradients with central finite differences.

    dims = (D, H, N, T, M). The input batch itself is checked as the
    pseudo-parameter "input", which exercises the batch-statistics chain
    of train-mode batch norm. `corrupt_param` deliberately perturbs one
    analytic gradient (negative-control hook for tests).
    """
    d, h, n, t, m = dims
    rng = np.random.default_rng(seed)
    state = init_model(rng, d, h, n)
    x = rng.normal(size=(m, t, d))
    labels = rng.integers(0, n, size=(m, t))

    def loss_at() -> float:
        logits, _ = forward(state, x, mode="train")
        return nll_loss(logits, labels)[0]

    logits, cache = forward(state, x, mode="train")
    _, dlogits = nll_loss(logits, labels)
    grads, dx = backward(state, cache, dlogits)
    grads = dict(grads)
    grads["input"] = dx
    if corrupt_param is not None:
        grads[corrupt_param] = grads[corrupt_param] + 0.05 * (
            np.abs(grads[corrupt_param]).max() + 1.0
        )

    targets = dict(named_parameters(state))
    targets["input"] = x
    per_param = {}
    for name, arr in targets.items():
        num = np.empty_like(arr)
        flat = arr.reshape(-1)
        nflat = num.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up = loss_at()
            flat[j] = orig - step
            down = loss_at()
            flat[j] = orig
            nflat[j] = (up - down) / (2.0 * step)
        # absolute floor keeps finite-difference noise on near-zero
        # elements from masquerading as relative error
        denom = np.maximum(np.maximum(np.abs(num), np.abs(grads[name])), 1e-6)
        per_param[name] = float((np.abs(grads[name] - num) / denom).max())

    worst = max(per_param, key=per_param.get)
    worst_err = per_param[worst]
    return GradCheckReport(
        passed=worst_err <= tol,
        max_rel_error=worst_err,
        per_param=per_param,
        worst_param=worst,
    )
