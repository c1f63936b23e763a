"""Central-difference check of the ML-LVQ surrogate gradient and SGD update."""

import numpy as np

from adulterant.mllvq import PrototypeBook, _Trainer, surrogate_gradient, surrogate_loss

H = 1e-5
KINK_GAP = 1e-2


def _far_from_kinks(book, x, y, alpha):
    diff = x[None, None, None, :] - book.positions
    d2 = np.einsum("lpsd,lpsd->lps", diff, diff)
    srt = np.sort(d2, axis=2)
    if srt.shape[2] > 1 and np.min(srt[:, :, 1] - srt[:, :, 0]) < KINK_GAP:
        return False
    s = srt[:, 1, 0] - srt[:, 0, 0]
    margins = [alpha - (s[p] - s[q]) for p in np.flatnonzero(y) for q in np.flatnonzero(~y)]
    return min(abs(m) for m in margins) > KINK_GAP and max(margins) > 0


def random_point(rng, L=3, S=2, d=4, alpha=0.5):
    """A book, example and label set whose loss is differentiable with an active pair."""
    while True:
        book = PrototypeBook(rng.normal(size=(L, 2, S, d)), tuple(f"l{i}" for i in range(L)))
        x = rng.normal(size=d)
        y = np.zeros(L, dtype=bool)
        y[rng.choice(L, size=int(rng.integers(1, L)), replace=False)] = True
        if _far_from_kinks(book, x, y, alpha):
            return book, x, y


def finite_difference(book, x, y, alpha):
    grad = np.zeros_like(book.positions)
    flat = grad.reshape(-1)
    for k in range(flat.size):
        up, down = book.copy(), book.copy()
        up.positions.reshape(-1)[k] += H
        down.positions.reshape(-1)[k] -= H
        flat[k] = (surrogate_loss(up, x, y, alpha) - surrogate_loss(down, x, y, alpha)) / (2 * H)
    return grad


def relative_error(a, b):
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return float(np.linalg.norm(a - b) / scale) if scale else 0.0


def gradient_check(n_points=100, seed=0, alpha=0.5):
    """Worst relative error of the analytic gradient and of one SGD step."""
    rng = np.random.default_rng(seed)
    worst_grad = worst_step = 0.0
    for _ in range(n_points):
        book, x, y = random_point(rng, alpha=alpha)
        fd = finite_difference(book, x, y, alpha)
        analytic = surrogate_gradient(book, x, y, alpha)
        worst_grad = max(worst_grad, relative_error(analytic, fd))
        eta = 1e-3
        trainer = _Trainer(book, alpha)
        trainer.step(x, y, eta)
        moved = trainer.P - book.positions
        worst_step = max(worst_step, relative_error(moved, -eta * fd))
    return worst_grad, worst_step
