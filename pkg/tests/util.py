"""Finite-difference helpers and brute-force oracles used across tests."""

import numpy as np


def central_difference(scalar_fn, array: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Numerical gradient of scalar_fn with respect to array, elementwise."""
    grad = np.zeros_like(array)
    it = np.nditer(array, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = array[idx]
        array[idx] = orig + eps
        hi = scalar_fn()
        array[idx] = orig - eps
        lo = scalar_fn()
        array[idx] = orig
        grad[idx] = (hi - lo) / (2.0 * eps)
        it.iternext()
    return grad


def sampled_coords(shape, n: int, seed: int):
    """Up to n random (unraveled) indices into an array of the given shape."""
    size = int(np.prod(shape))
    rng = np.random.default_rng(seed)
    picks = rng.choice(size, size=min(n, size), replace=False)
    return [np.unravel_index(int(p), shape) for p in picks]


def sampled_central_difference(scalar_fn, array: np.ndarray, coords, eps: float = 1e-6):
    """Numerical gradient at selected coordinates only. Returns list of values."""
    out = []
    for idx in coords:
        orig = array[idx]
        array[idx] = orig + eps
        hi = scalar_fn()
        array[idx] = orig - eps
        lo = scalar_fn()
        array[idx] = orig
        out.append((hi - lo) / (2.0 * eps))
    return out


def max_rel_error(analytic, numeric, floor: float = 1e-8) -> float:
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float((np.abs(analytic - numeric) / scale).max())


def conv1d_loops(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Direct triple-loop valid cross-correlation; oracle for the einsum path."""
    n, length, in_ch = x.shape
    out_ch, _, k = w.shape
    out_len = length - k + 1
    out = np.zeros((n, out_len, out_ch))
    for s in range(n):
        for i in range(out_len):
            for o in range(out_ch):
                acc = 0.0
                for c in range(in_ch):
                    for j in range(k):
                        acc += x[s, i + j, c] * w[o, c, j]
                out[s, i, o] = acc + b[o]
    return out


def correct_labels_bruteforce(labels, sigma, confident, features, k, eps=1e-8):
    """Direct reimplementation of uncertain-label correction: full distance
    matrix, explicit sort with index tie-break, direct weighted average."""
    labels = labels.copy()
    conf_idx = [int(j) for j in np.flatnonzero(confident)]
    if not conf_idx:
        return labels
    k_eff = min(k, len(conf_idx))
    for i in np.flatnonzero(~confident):
        scored = []
        for j in conf_idx:
            diff = features[j] - features[i]
            d = np.sqrt((diff * diff).sum())
            scored.append((d, j))
        scored.sort(key=lambda t: (t[0], t[1]))
        chosen = scored[:k_eff]
        w = np.array([1.0 / max(d, eps) for d, _ in chosen])
        pts = np.array([labels[j] for _, j in chosen])
        labels[i] = (w[:, None] * pts).sum(axis=0) / w.sum()
    return labels
