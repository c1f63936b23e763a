"""Plain-loop reference implementations for stump search and binary real AdaBoost."""

import math


def candidate_thresholds(column):
    vals = sorted(set(column))
    return [-math.inf] + [(a + b) / 2 for a, b in zip(vals, vals[1:])]


def stump_z(X, Y, W, j, theta):
    """Z of the stump (j, theta) for sign matrix Y and weights W (lists of lists)."""
    L = len(Y[0])
    z = 0.0
    for side in (True, False):
        for l in range(L):
            wp = sum(W[i][l] for i in range(len(X)) if (X[i][j] > theta) == side and Y[i][l] > 0)
            wm = sum(W[i][l] for i in range(len(X)) if (X[i][j] > theta) == side and Y[i][l] < 0)
            z += math.sqrt(wp * wm)
    return 2 * z


def brute_best_stump(X, Y, W):
    """Every (feature, threshold) pair in (feature, threshold) order; first minimum wins."""
    best = None
    for j in range(len(X[0])):
        for theta in candidate_thresholds([row[j] for row in X]):
            z = stump_z(X, Y, W, j, theta)
            if best is None or z < best[0] - 1e-13:
                best = (z, j, theta)
    return best


def binary_real_adaboost(x_rows, signs, T):
    """Textbook real AdaBoost with stumps on a single +-1 target.

    Returns per round (feature, threshold, c_below, c_above, Z).
    """
    n = len(signs)
    eps = 1.0 / n
    w = [1.0 / n] * n
    out = []
    for _ in range(T):
        best = None
        for j in range(len(x_rows[0])):
            for theta in candidate_thresholds([r[j] for r in x_rows]):
                sums = {True: [0.0, 0.0], False: [0.0, 0.0]}
                for i in range(n):
                    side = x_rows[i][j] > theta
                    sums[side][0 if signs[i] > 0 else 1] += w[i]
                z = 2 * sum(math.sqrt(p * m) for p, m in sums.values())
                if best is None or z < best[0] - 1e-13:
                    best = (z, j, theta, sums)
        _, j, theta, sums = best
        c = {side: 0.5 * math.log((p + eps) / (m + eps)) for side, (p, m) in sums.items()}
        h = [c[x_rows[i][j] > theta] for i in range(n)]
        w = [w[i] * math.exp(-signs[i] * h[i]) for i in range(n)]
        Z = sum(w)
        w = [v / Z for v in w]
        out.append((j, theta, c[False], c[True], Z))
    return out
