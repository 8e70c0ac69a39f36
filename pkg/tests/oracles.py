"""Independent scalar-loop re-implementations used as test oracles."""

import math

import numpy as np

from waterbench import neural
from waterbench.clustering import NOISE, cosine_similarity, euclidean_distance
from waterbench.core import AlignedGroup, MonthPattern, Timestamp, validate_series


def _sig(a):
    return 1.0 / (1.0 + math.exp(-a))


def _affine(W, v, b, row):
    return sum(W[row][k] * v[k] for k in range(len(v))) + b[row]


def lstm_step_loop(p: neural.LstmParams, x, h_prev, s_prev):
    H = p.hidden_size
    h, s = [0.0] * H, [0.0] * H
    for j in range(H):
        f = _sig(_affine(p.W_fx, x, p.b_f, j) + _affine(p.W_fh, h_prev, [0.0] * H, j))
        i = _sig(_affine(p.W_ix, x, p.b_i, j) + _affine(p.W_ih, h_prev, [0.0] * H, j))
        g = math.tanh(_affine(p.W_gx, x, p.b_g, j) + _affine(p.W_gh, h_prev, [0.0] * H, j))
        o = _sig(_affine(p.W_ox, x, p.b_o, j) + _affine(p.W_oh, h_prev, [0.0] * H, j))
        s[j] = g * i + s_prev[j] * f
        h[j] = math.tanh(s[j]) * o
    return np.array(h), np.array(s)


def gru_step_loop(p: neural.GruParams, x, h_prev):
    H = p.hidden_size
    c = list(h_prev) + list(x)
    u = [_sig(_affine(p.W_u, c, p.b_u, j)) for j in range(H)]
    r = [_sig(_affine(p.W_r, c, p.b_r, j)) for j in range(H)]
    c2 = [r[k] * h_prev[k] for k in range(H)] + list(x)
    cand = [math.tanh(_affine(p.W_h, c2, p.b_h, j)) for j in range(H)]
    return np.array([u[j] * h_prev[j] + (1 - u[j]) * cand[j] for j in range(H)])


def random_cell(kind, rng, input_size, hidden, scale=1.0):
    params = {
        name: rng.uniform(-scale, scale, shape)
        for name, shape in neural.param_shapes(kind, input_size, hidden)[:-2]
    }
    cls = neural.LstmParams if kind == neural.LSTM else neural.GruParams
    return cls(**params)


def random_model(kind, rng, hidden=6, window=4, scale=1.0):
    theta = rng.uniform(-scale, scale, sum(
        int(np.prod(s)) for _, s in neural.param_shapes(kind, 1, hidden)))
    return neural.RecurrentModel(
        kind, 1, hidden, window, neural.unflatten(theta, kind, 1, hidden),
        neural.Normalizer(0.0, 1.0), 0,
    )


def relative_error(a, b, floor=1e-8):
    return abs(a - b) / max(abs(a), abs(b), floor)


# -- clustering ---------------------------------------------------------


def make_group(rows, ids=None):
    ids = ids or [f"s{i:03d}" for i in range(len(rows))]
    t0 = Timestamp(2013, 1)
    members = tuple(
        validate_series(sid, "R", [(t0.shift(k), float(v)) for k, v in enumerate(row)])
        for sid, row in zip(ids, rows)
    )
    return AlignedGroup("R", MonthPattern((1, 4, 7, 10)), members)


def reference_labels(X, params):
    """Neighbourhood graph, core components numbered by smallest core index,
    borders to the smallest adjacent cluster id."""
    m = len(X)
    adj = [[i == j or (euclidean_distance(X[i], X[j]) <= params.eps
                       and cosine_similarity(X[i], X[j]) >= params.cos_threshold)
            for j in range(m)] for i in range(m)]
    core = [sum(row) >= params.min_pts for row in adj]
    comp = [None] * m
    n = 0
    for i in range(m):
        if core[i] and comp[i] is None:
            stack, comp[i] = [i], n
            while stack:
                p = stack.pop()
                for q in range(m):
                    if adj[p][q] and core[q] and comp[q] is None:
                        comp[q] = n
                        stack.append(q)
            n += 1
    labels = []
    for i in range(m):
        if core[i]:
            labels.append(comp[i])
        else:
            ids = [comp[j] for j in range(m) if adj[i][j] and core[j]]
            labels.append(min(ids) if ids else NOISE)
    return labels


def random_group(rng):
    m = int(rng.integers(1, 31))
    L = int(rng.integers(2, 10))
    n_blobs = int(rng.integers(1, 4))
    centers = rng.uniform(1, 30, (n_blobs, L))
    rows = centers[rng.integers(n_blobs, size=m)] + rng.normal(0, rng.uniform(0.3, 3), (m, L))
    return make_group(np.abs(rows) + 0.01)


# -- time series generators ---------------------------------------------


def ar1(phi, n, seed, sd=1.0):
    e = np.random.default_rng(seed).normal(0, sd, n)
    y = np.zeros(n)
    for i in range(1, n):
        y[i] = phi * y[i - 1] + e[i]
    return y


def seasonal_walk(n, seed, s=4):
    e = np.random.default_rng(seed).standard_normal(n)
    y = np.zeros(n)
    for i in range(s, n):
        y[i] = y[i - s] + e[i]
    return y
