"""Naive reference implementations used to cross-check the fast kernels.

Everything here is written with explicit loops and the textbook formulas,
independent of the library code paths it verifies.
"""

import math


def naive_mean(xs):
    return sum(xs) / len(xs)


def naive_pcc(x, y):
    n = len(x)
    mx, my = naive_mean(x), naive_mean(y)
    num = sum((a - mx) * (b - my) for a, b in zip(x, y))
    dx = math.sqrt(sum((a - mx) ** 2 for a in x))
    dy = math.sqrt(sum((b - my) ** 2 for b in y))
    if dx == 0 or dy == 0:
        return float("nan")
    return num / (dx * dy)


def naive_ccc(x, y):
    n = len(x)
    mx, my = naive_mean(x), naive_mean(y)
    vx = sum((a - mx) ** 2 for a in x) / n
    vy = sum((b - my) ** 2 for b in y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y)) / n
    denom = vx + vy + (mx - my) ** 2
    if denom == 0:
        return float("nan")
    return 2 * cov / denom


def naive_uar(pred, ref):
    tp = sum(1 for p, r in zip(pred, ref) if p and r)
    tn = sum(1 for p, r in zip(pred, ref) if not p and not r)
    npos = sum(1 for r in ref if r)
    nneg = len(ref) - npos
    return 0.5 * (tp / npos + tn / nneg)


def naive_fisher_z(r):
    return 0.5 * math.log((1 + r) / (1 - r))


def naive_mlp_forward(x, w1, b1, w2, b2):
    """One hidden rectified layer, explicit triple loops."""
    hidden = []
    for i in range(len(w1)):
        acc = b1[i]
        for j in range(len(x)):
            acc += w1[i][j] * x[j]
        hidden.append(max(acc, 0.0))
    out = []
    for i in range(len(w2)):
        acc = b2[i]
        for j in range(len(hidden)):
            acc += w2[i][j] * hidden[j]
        out.append(acc)
    return out


def _sigmoid(v):
    return 1.0 / (1.0 + math.exp(-v))


def naive_gru_layer(xs, params):
    """Per-timestep GRU recurrence with explicit loops.

    ``xs`` is a list of input vectors; ``params`` holds lists-of-lists
    W_z, U_z, b_z, W_r, U_r, b_r, W_h, U_h, b_h. Returns list of hidden
    state vectors, h_0 = 0.
    """
    W_z, U_z, b_z = params["W_z"], params["U_z"], params["b_z"]
    W_r, U_r, b_r = params["W_r"], params["U_r"], params["b_r"]
    W_h, U_h, b_h = params["W_h"], params["U_h"], params["b_h"]
    H = len(b_z)
    h = [0.0] * H
    out = []
    for x in xs:
        z = [_sigmoid(sum(W_z[i][j] * x[j] for j in range(len(x)))
                      + sum(U_z[i][j] * h[j] for j in range(H)) + b_z[i])
             for i in range(H)]
        r = [_sigmoid(sum(W_r[i][j] * x[j] for j in range(len(x)))
                      + sum(U_r[i][j] * h[j] for j in range(H)) + b_r[i])
             for i in range(H)]
        hc = [math.tanh(sum(W_h[i][j] * x[j] for j in range(len(x)))
                        + sum(U_h[i][j] * (r[j] * h[j]) for j in range(H))
                        + b_h[i])
              for i in range(H)]
        h = [(1 - z[i]) * h[i] + z[i] * hc[i] for i in range(H)]
        out.append(list(h))
    return out
