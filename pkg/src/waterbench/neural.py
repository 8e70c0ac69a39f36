"""LSTM and GRU forecasters written directly in numpy.

The cells follow the textbook gate equations. Around them sits a small
network: the cell is unrolled over a window of ``w`` normalised values from
a zero state, and a linear head maps the last hidden state to the next value.

Training is full-batch BPTT with Adam. The trainer is vectorised over a
leading *model* axis so many independent per-series models can be fitted
in one pass; every operation along that axis is elementwise, so a model's
trajectory depends only on its own data and seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import Series
from .errors import (
    DivergedLoss,
    InsufficientHistory,
    InvalidConfig,
    NonFiniteActivation,
    ShapeMismatch,
)

LSTM = "lstm"
GRU = "gru"
KINDS = (LSTM, GRU)

# flipped on by the test-suite to assert gate ranges on every step
CHECK_GATES = False


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def param_shapes(kind: str, input_size: int, hidden: int) -> list[tuple[str, tuple[int, ...]]]:
    """Canonical parameter order; also the serialisation order."""
    H, I = hidden, input_size
    if kind == LSTM:
        shapes = []
        for gate in "figo":
            shapes += [(f"W_{gate}x", (H, I)), (f"W_{gate}h", (H, H)), (f"b_{gate}", (H,))]
    elif kind == GRU:
        shapes = []
        for gate in "urh":
            shapes += [(f"W_{gate}", (H, H + I)), (f"b_{gate}", (H,))]
    else:
        raise InvalidConfig(f"unknown cell kind {kind!r}")
    return shapes + [("w_out", (H,)), ("b_out", ())]


def param_count(kind: str, input_size: int, hidden: int) -> int:
    """Recurrent-cell parameter count, output head excluded."""
    if input_size < 1 or hidden < 1:
        raise InvalidConfig("sizes must be >= 1")
    blocks = {LSTM: 4, GRU: 3}[kind]
    return blocks * (hidden * input_size + hidden * hidden + hidden)


@dataclass(frozen=True)
class LstmParams:
    W_fx: np.ndarray
    W_fh: np.ndarray
    b_f: np.ndarray
    W_ix: np.ndarray
    W_ih: np.ndarray
    b_i: np.ndarray
    W_gx: np.ndarray
    W_gh: np.ndarray
    b_g: np.ndarray
    W_ox: np.ndarray
    W_oh: np.ndarray
    b_o: np.ndarray

    @property
    def hidden_size(self) -> int:
        return self.W_fh.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_fx.shape[1]


@dataclass(frozen=True)
class GruParams:
    W_u: np.ndarray
    b_u: np.ndarray
    W_r: np.ndarray
    b_r: np.ndarray
    W_h: np.ndarray
    b_h: np.ndarray

    @property
    def hidden_size(self) -> int:
        return self.W_u.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_u.shape[1] - self.W_u.shape[0]


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFiniteActivation("non-finite activation in recurrent cell")


def _check_gates(sig=(), tanh=()):
    for a in sig:
        assert np.all((a > 0) & (a < 1)), "sigmoid gate left (0, 1)"
    for a in tanh:
        assert np.all((a > -1) & (a < 1)), "tanh output left (-1, 1)"


def lstm_step(params: LstmParams, x, state):
    """One LSTM step; ``state`` is ``(h_prev, s_prev)``, returns ``(h, s)``."""
    h_prev, s_prev = (np.asarray(a, dtype=np.float64) for a in state)
    x = np.asarray(x, dtype=np.float64)
    H, I = params.hidden_size, params.input_size
    if x.shape != (I,) or h_prev.shape != (H,) or s_prev.shape != (H,):
        raise ShapeMismatch(f"expected x ({I},), state ({H},); got {x.shape}, {h_prev.shape}, {s_prev.shape}")
    p = params
    f = sigmoid(p.W_fx @ x + p.W_fh @ h_prev + p.b_f)
    i = sigmoid(p.W_ix @ x + p.W_ih @ h_prev + p.b_i)
    g = np.tanh(p.W_gx @ x + p.W_gh @ h_prev + p.b_g)
    o = sigmoid(p.W_ox @ x + p.W_oh @ h_prev + p.b_o)
    s = g * i + s_prev * f
    h = np.tanh(s) * o
    _check_finite(h, s)
    if CHECK_GATES:
        _check_gates(sig=(f, i, o), tanh=(g, np.tanh(s)))
    return h, s


def gru_step(params: GruParams, x, h_prev):
    h_prev = np.asarray(h_prev, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    H, I = params.hidden_size, params.input_size
    if x.shape != (I,) or h_prev.shape != (H,):
        raise ShapeMismatch(f"expected x ({I},), h ({H},); got {x.shape}, {h_prev.shape}")
    p = params
    c = np.concatenate([h_prev, x])
    u = sigmoid(p.W_u @ c + p.b_u)
    r = sigmoid(p.W_r @ c + p.b_r)
    h_cand = np.tanh(p.W_h @ np.concatenate([r * h_prev, x]) + p.b_h)
    h = u * h_prev + (1.0 - u) * h_cand
    _check_finite(h)
    if CHECK_GATES:
        _check_gates(sig=(u, r), tanh=(h_cand,))
    return h


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    cluster_epochs: int = 200
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    hidden_size: int = 8
    window: int = 4
    clip_norm: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidConfig("learning_rate must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise InvalidConfig("Adam betas must lie in [0, 1)")
        if self.hidden_size < 1 or self.window < 1 or self.epochs < 0 or self.cluster_epochs < 0:
            raise InvalidConfig("hidden_size and window must be >= 1, epochs >= 0")


@dataclass(frozen=True)
class Normalizer:
    """Min-max scaling to [0, 1]; a constant training set maps to 0.5."""

    lo: float
    hi: float

    @classmethod
    def fit(cls, values) -> Normalizer:
        v = np.asarray(values, dtype=np.float64)
        return cls(float(v.min()), float(v.max()))

    @property
    def degenerate(self) -> bool:
        return not self.hi > self.lo

    def transform(self, v):
        v = np.asarray(v, dtype=np.float64)
        if self.degenerate:
            return v - self.lo + 0.5
        return (v - self.lo) / (self.hi - self.lo)

    def inverse(self, n):
        n = np.asarray(n, dtype=np.float64)
        if self.degenerate:
            return n - 0.5 + self.lo
        return n * (self.hi - self.lo) + self.lo


@dataclass(frozen=True)
class RecurrentModel:
    kind: str
    input_size: int
    hidden_size: int
    window: int
    params: dict[str, np.ndarray] = field(repr=False)
    norm: Normalizer
    seed: int
    train_log: tuple[float, ...] = ()

    @property
    def cell(self) -> LstmParams | GruParams:
        names = [n for n, _ in param_shapes(self.kind, self.input_size, self.hidden_size)][:-2]
        cls = LstmParams if self.kind == LSTM else GruParams
        return cls(**{n: self.params[n] for n in names})

    def flat(self) -> np.ndarray:
        return flatten(self.params, self.kind, self.input_size, self.hidden_size)

    def with_flat(self, theta) -> RecurrentModel:
        return replace(self, params=unflatten(theta, self.kind, self.input_size, self.hidden_size))

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": self.kind,
                "input_size": self.input_size,
                "hidden_size": self.hidden_size,
                "window": self.window,
                "weights": [float(v) for v in self.flat()],
                "weight_order": [n for n, _ in param_shapes(self.kind, self.input_size, self.hidden_size)],
                "norm": {"min": self.norm.lo, "max": self.norm.hi},
                "seed": self.seed,
                "train_log": list(self.train_log),
            },
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> RecurrentModel:
        d = json.loads(text)
        params = unflatten(np.array(d["weights"]), d["kind"], d["input_size"], d["hidden_size"])
        return cls(
            d["kind"], d["input_size"], d["hidden_size"], d["window"], params,
            Normalizer(d["norm"]["min"], d["norm"]["max"]), d["seed"], tuple(d["train_log"]),
        )


def flatten(params: dict, kind: str, input_size: int, hidden: int) -> np.ndarray:
    return np.concatenate(
        [np.ravel(params[n]) for n, _ in param_shapes(kind, input_size, hidden)]
    )


def unflatten(theta, kind: str, input_size: int, hidden: int) -> dict[str, np.ndarray]:
    theta = np.asarray(theta, dtype=np.float64)
    out, pos = {}, 0
    for name, shape in param_shapes(kind, input_size, hidden):
        size = math.prod(shape)
        out[name] = theta[pos:pos + size].reshape(shape).copy()
        pos += size
    if pos != theta.size:
        raise ShapeMismatch(f"expected {pos} weights, got {theta.size}")
    return out


def init_params(kind: str, input_size: int, hidden: int, seed: int) -> dict[str, np.ndarray]:
    n = sum(math.prod(s) for _, s in param_shapes(kind, input_size, hidden))
    bound = 1.0 / math.sqrt(hidden)
    theta = np.random.default_rng(seed).uniform(-bound, bound, size=n)
    return unflatten(theta, kind, input_size, hidden)


# ---------------------------------------------------------------------------
# batched network: every array carries a leading model axis M and a window
# axis N; inputs X have shape (M, N, w), targets (M, N)


def _stack(param_dicts: Sequence[dict]) -> dict[str, np.ndarray]:
    return {k: np.stack([p[k] for p in param_dicts]) for k in param_dicts[0]}


def _mv(W, v):
    # per-model matrix times per-window vector: (M,H,K) x (M,N,K) -> (M,N,H)
    return np.matmul(v, np.swapaxes(W, 1, 2))


def _forward_lstm(P, X, keep):
    M, N, w = X.shape
    H = P["W_fh"].shape[1]
    h = np.zeros((M, N, H))
    s = np.zeros((M, N, H))
    cache = []
    for t in range(w):
        x = X[:, :, t:t + 1]
        f = sigmoid(_mv(P["W_fx"], x) + _mv(P["W_fh"], h) + P["b_f"][:, None, :])
        i = sigmoid(_mv(P["W_ix"], x) + _mv(P["W_ih"], h) + P["b_i"][:, None, :])
        g = np.tanh(_mv(P["W_gx"], x) + _mv(P["W_gh"], h) + P["b_g"][:, None, :])
        o = sigmoid(_mv(P["W_ox"], x) + _mv(P["W_oh"], h) + P["b_o"][:, None, :])
        s_new = g * i + s * f
        tanh_s = np.tanh(s_new)
        h_new = tanh_s * o
        if CHECK_GATES:
            _check_gates(sig=(f, i, o), tanh=(g, tanh_s))
        if keep:
            cache.append((x, h, s, f, i, g, o, tanh_s))
        h, s = h_new, s_new
    return h, cache


def _backward_lstm(P, cache, dh):
    G = {k: np.zeros_like(v) for k, v in P.items()}
    ds = np.zeros_like(dh)
    for x, h_prev, s_prev, f, i, g, o, tanh_s in reversed(cache):
        do = dh * tanh_s
        ds = ds + dh * o * (1.0 - tanh_s ** 2)
        da = {
            "f": ds * s_prev * f * (1.0 - f),
            "i": ds * g * i * (1.0 - i),
            "g": ds * i * (1.0 - g ** 2),
            "o": do * o * (1.0 - o),
        }
        ds = ds * f
        dh = np.zeros_like(dh)
        for gate, a in da.items():
            aT = np.swapaxes(a, 1, 2)
            G[f"W_{gate}x"] += aT @ x
            G[f"W_{gate}h"] += aT @ h_prev
            G[f"b_{gate}"] += a.sum(axis=1)
            dh += a @ P[f"W_{gate}h"]
    return G


def _forward_gru(P, X, keep):
    M, N, w = X.shape
    H = P["W_u"].shape[1]
    h = np.zeros((M, N, H))
    cache = []
    for t in range(w):
        x = X[:, :, t:t + 1]
        c = np.concatenate([h, x], axis=2)
        u = sigmoid(_mv(P["W_u"], c) + P["b_u"][:, None, :])
        r = sigmoid(_mv(P["W_r"], c) + P["b_r"][:, None, :])
        c2 = np.concatenate([r * h, x], axis=2)
        h_cand = np.tanh(_mv(P["W_h"], c2) + P["b_h"][:, None, :])
        h_new = u * h + (1.0 - u) * h_cand
        if CHECK_GATES:
            _check_gates(sig=(u, r), tanh=(h_cand,))
        if keep:
            cache.append((h, c, c2, u, r, h_cand))
        h = h_new
    return h, cache


def _backward_gru(P, cache, dh):
    G = {k: np.zeros_like(v) for k, v in P.items()}
    H = dh.shape[2]
    for h_prev, c, c2, u, r, h_cand in reversed(cache):
        a_h = dh * (1.0 - u) * (1.0 - h_cand ** 2)
        a_u = dh * (h_prev - h_cand) * u * (1.0 - u)
        G["W_h"] += np.swapaxes(a_h, 1, 2) @ c2
        G["b_h"] += a_h.sum(axis=1)
        d_rh = (a_h @ P["W_h"])[:, :, :H]
        a_r = d_rh * h_prev * r * (1.0 - r)
        G["W_u"] += np.swapaxes(a_u, 1, 2) @ c
        G["b_u"] += a_u.sum(axis=1)
        G["W_r"] += np.swapaxes(a_r, 1, 2) @ c
        G["b_r"] += a_r.sum(axis=1)
        dc = a_u @ P["W_u"] + a_r @ P["W_r"]
        dh = dh * u + d_rh * r + dc[:, :, :H]
    return G


_FORWARD = {LSTM: _forward_lstm, GRU: _forward_gru}
_BACKWARD = {LSTM: _backward_lstm, GRU: _backward_gru}


def batched_predict(kind: str, P: dict, X: np.ndarray) -> np.ndarray:
    h, _ = _FORWARD[kind](P, X, keep=False)
    return np.einsum("mnh,mh->mn", h, P["w_out"]) + P["b_out"][:, None]


def batched_loss_and_grad(kind: str, P: dict, X, Y, weight):
    """Weighted squared error per model and its gradient w.r.t. every parameter."""
    h, cache = _FORWARD[kind](P, X, keep=True)
    pred = np.einsum("mnh,mh->mn", h, P["w_out"]) + P["b_out"][:, None]
    err = pred - Y
    loss = np.sum(weight * err ** 2, axis=1)
    dpred = 2.0 * weight * err
    dh = dpred[:, :, None] * P["w_out"][:, None, :]
    G = _BACKWARD[kind](P, cache, dh)
    G["w_out"] = np.einsum("mn,mnh->mh", dpred, h)
    G["b_out"] = dpred.sum(axis=1)
    return loss, G


def forward(model: RecurrentModel, window) -> float:
    """Normalised one-step prediction from ``w`` normalised inputs."""
    x = np.asarray(window, dtype=np.float64)
    if x.shape != (model.window,):
        raise ShapeMismatch(f"window must have length {model.window}, got {x.shape}")
    P = _stack([model.params])
    return float(batched_predict(model.kind, P, x[None, None, :])[0, 0])


def mse_loss(model: RecurrentModel, X, Y) -> float:
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    pred = batched_predict(model.kind, _stack([model.params]), X[None])[0]
    return float(np.mean((pred - Y) ** 2))


def loss_gradient(model: RecurrentModel, X, Y) -> np.ndarray:
    """BPTT gradient of the mean-squared loss, flattened in canonical order."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    weight = np.full((1, len(Y)), 1.0 / len(Y))
    _, G = batched_loss_and_grad(model.kind, _stack([model.params]), X[None], Y[None], weight)
    return flatten({k: v[0] for k, v in G.items()}, model.kind, model.input_size, model.hidden_size)


def numeric_gradient(model_or_loss, batch=None, coordinate: int = 0, h: float = 1e-5) -> float:
    """Central finite difference of the loss along one parameter coordinate.

    ``model_or_loss`` is either a :class:`RecurrentModel` (with ``batch`` an
    ``(X, Y)`` pair, loss = mean squared error) or a callable mapping a
    parameter vector to a scalar loss (with ``batch`` the base point).
    """
    if h <= 0:
        raise InvalidConfig("finite-difference step must be > 0")
    if isinstance(model_or_loss, RecurrentModel):
        model = model_or_loss
        X, Y = batch
        theta = model.flat()

        def loss(v):
            return mse_loss(model.with_flat(v), X, Y)
    else:
        loss = model_or_loss
        theta = np.atleast_1d(np.asarray(batch, dtype=np.float64))
    up, down = theta.copy(), theta.copy()
    up[coordinate] += h
    down[coordinate] -= h
    return (loss(up) - loss(down)) / (2 * h)


def make_windows(values, w: int) -> tuple[np.ndarray, np.ndarray]:
    v = np.asarray(values, dtype=np.float64)
    n = len(v) - w
    if n < 1:
        return np.empty((0, w)), np.empty(0)
    idx = np.arange(w)[None, :] + np.arange(n)[:, None]
    return v[idx], v[w:]


def _training_set(series_set: Sequence, w: int):
    arrays = [s.array() if isinstance(s, Series) else np.asarray(s, dtype=np.float64) for s in series_set]
    if not arrays:
        raise InsufficientHistory("no training series")
    for a in arrays:
        if len(a) <= w:
            raise InsufficientHistory(f"series of length {len(a)} too short for window {w}")
    norm = Normalizer.fit(np.concatenate(arrays))
    parts = [make_windows(norm.transform(a), w) for a in arrays]
    X = np.concatenate([p[0] for p in parts])
    Y = np.concatenate([p[1] for p in parts])
    return X, Y, norm


@dataclass
class _Job:
    X: np.ndarray
    Y: np.ndarray
    norm: Normalizer
    seed: int


def train_many(
    jobs: Sequence[tuple[Sequence, int]], kind: str, config: TrainConfig, epochs: int | None = None
) -> list[RecurrentModel | Exception]:
    """Train one independent model per ``(series_set, seed)`` job.

    Failures (short history, divergence) come back in place of the model.
    """
    epochs = config.epochs if epochs is None else epochs
    w, H = config.window, config.hidden_size
    results: list = [None] * len(jobs)
    prepared: list[tuple[int, _Job]] = []
    for j, (series_set, seed) in enumerate(jobs):
        try:
            X, Y, norm = _training_set(series_set, w)
        except InsufficientHistory as exc:
            results[j] = exc
            continue
        prepared.append((j, _Job(X, Y, norm, int(seed))))
    if not prepared:
        return results

    M = len(prepared)
    n_max = max(len(job.Y) for _, job in prepared)
    X = np.zeros((M, n_max, w))
    Y = np.zeros((M, n_max))
    weight = np.zeros((M, n_max))
    for m, (_, job) in enumerate(prepared):
        n = len(job.Y)
        X[m, :n], Y[m, :n], weight[m, :n] = job.X, job.Y, 1.0 / n
    P = _stack([init_params(kind, 1, H, job.seed) for _, job in prepared])

    mom = {k: np.zeros_like(v) for k, v in P.items()}
    vel = {k: np.zeros_like(v) for k, v in P.items()}
    logs = np.zeros((M, epochs))
    alive = np.ones(M, dtype=bool)
    b1, b2 = config.beta1, config.beta2
    for epoch in range(epochs):
        loss, G = batched_loss_and_grad(kind, P, X, Y, weight)
        logs[:, epoch] = loss
        bad = ~np.isfinite(loss)
        for g in G.values():
            bad |= ~np.isfinite(g.reshape(M, -1)).all(axis=1)
        alive &= ~bad
        sq = sum(np.sum(g.reshape(M, -1) ** 2, axis=1) for g in G.values())
        norm = np.sqrt(sq)
        scale = np.where(norm > config.clip_norm, config.clip_norm / np.where(norm > 0, norm, 1.0), 1.0)
        scale = np.where(alive, scale, 0.0)
        t = epoch + 1
        for k in P:
            g = G[k] * scale.reshape((M,) + (1,) * (G[k].ndim - 1))
            g = np.where(np.isfinite(g), g, 0.0)
            mom[k] = b1 * mom[k] + (1 - b1) * g
            vel[k] = b2 * vel[k] + (1 - b2) * g * g
            step = config.learning_rate * (mom[k] / (1 - b1 ** t)) / (np.sqrt(vel[k] / (1 - b2 ** t)) + config.adam_eps)
            P[k] = P[k] - step

    for m, (j, job) in enumerate(prepared):
        if not alive[m]:
            results[j] = DivergedLoss(f"{kind} training diverged (seed {job.seed})")
            continue
        params = {k: v[m].copy() for k, v in P.items()}
        results[j] = RecurrentModel(
            kind, 1, H, w, params, job.norm, job.seed, tuple(float(x) for x in logs[m])
        )
    return results


def train(series_set: Sequence, kind: str, config: TrainConfig, epochs: int | None = None) -> RecurrentModel:
    """Fit one model on the pooled windows of ``series_set``."""
    if kind not in KINDS:
        raise InvalidConfig(f"unknown cell kind {kind!r}")
    (result,) = train_many([(series_set, config.seed)], kind, config, epochs)
    if isinstance(result, Exception):
        raise result
    return result


def predict_many(models: Sequence[RecurrentModel], histories: Sequence, horizon: int) -> list[list[float]]:
    """Recursive multi-step forecasts in m3, one list per (model, history) pair."""
    if horizon <= 0:
        return [[] for _ in models]
    if not models:
        return []
    kinds = {m.kind for m in models}
    shapes = {(m.hidden_size, m.window) for m in models}
    if len(kinds) != 1 or len(shapes) != 1:
        return [predict(m, h, horizon) for m, h in zip(models, histories)]
    kind = kinds.pop()
    w = models[0].window
    windows = []
    for model, hist in zip(models, histories):
        v = hist.array() if isinstance(hist, Series) else np.asarray(hist, dtype=np.float64)
        if len(v) < w:
            raise InsufficientHistory(f"need {w} observations to forecast, got {len(v)}")
        windows.append(model.norm.transform(v[-w:]))
    P = _stack([m.params for m in models])
    cur = np.stack(windows)[:, None, :]
    outs = []
    for _ in range(horizon):
        nxt = batched_predict(kind, P, cur)[:, 0]
        outs.append(nxt)
        cur = np.concatenate([cur[:, :, 1:], nxt[:, None, None]], axis=2)
    normed = np.stack(outs, axis=1)
    return [
        [float(v) for v in np.clip(m.norm.inverse(row), 0.0, None)]
        for m, row in zip(models, normed)
    ]


def predict(model: RecurrentModel, series, horizon: int) -> list[float]:
    if horizon <= 0:
        return []
    return predict_many([model], [series], horizon)[0]
