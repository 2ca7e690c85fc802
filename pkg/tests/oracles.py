"""Independent scalar re-derivations used as test oracles.

Everything here is written with plain Python loops and ``math`` so that it
shares no code path with the vectorized implementation under test.
"""
import math


def sqdist(a, b):
    return sum((x - y) ** 2 for x, y in zip(a, b))


def cc_oracle(E, y, centers, eps=1e-6):
    total = 0.0
    for e, label in zip(E, y):
        own = sqdist(e, centers[label])
        other = sqdist(e, centers[1 - label])
        total += own / (other + eps)
    return 0.5 * total


def q_oracle(E, centers):
    Q = []
    for e in E:
        k = [1.0 / (1.0 + sqdist(e, c)) for c in centers]
        s = sum(k)
        Q.append([v / s for v in k])
    return Q


def p_oracle(Q):
    f = [sum(row[j] for row in Q) for j in range(len(Q[0]))]
    P = []
    for row in Q:
        w = [row[j] ** 2 / f[j] for j in range(len(row))]
        s = sum(w)
        P.append([v / s for v in w])
    return P


def kl_oracle(P, Q):
    total = 0.0
    for prow, qrow in zip(P, Q):
        for p, q in zip(prow, qrow):
            if p > 0:
                total += p * math.log(p / q)
    return total


def alpha_oracle(H, adj, w):
    """Attention coefficients term by term: softmax over neighbours of LeakyReLU(w . [v_i || v_k])."""
    n, C = len(H), len(H[0])

    def leaky(z):
        return z if z > 0 else 0.2 * z

    alpha = []
    for i in range(n):
        scores = {}
        for k in range(n):
            if adj[i][k]:
                scores[k] = leaky(sum(w[c] * H[i][c] for c in range(C)) + sum(w[C + c] * H[k][c] for c in range(C)))
        top = max(scores.values())
        z = sum(math.exp(s - top) for s in scores.values())
        alpha.append([math.exp(scores[k] - top) / z if k in scores else 0.0 for k in range(n)])
    return alpha


def label_oracle(num_ticks, t0, interval, event_timestamps, T, stride):
    """Brute-force labels by explicit set intersection of tick ranges.

    Returns ``{end_tick: label}`` with 1, 0 or -1 for unknown.
    """
    last_ts = t0 + num_ticks * interval - 1
    ticks = set()
    for ts in event_timestamps:
        if t0 <= ts <= last_ts:
            ticks.add((ts - t0) // interval)
    positives = {t for t in ticks if t >= T - 1}
    ends = set(range(T - 1, num_ticks, stride)) | positives
    out = {}
    for e in sorted(ends):
        if e in positives:
            out[e] = 1
            continue
        window = set(range(e - T + 1, e + 1))
        near = any(window & set(range(t - T + 1, t + T + 1)) for t in ticks)
        out[e] = -1 if near else 0
    return out


def prf_oracle(tp, fp, fn):
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f
