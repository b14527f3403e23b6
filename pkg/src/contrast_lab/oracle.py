"""Brute-force reference implementations used only for verification.

Nothing here shares code paths with the closed-form gradients it checks:
subset enumeration is a hand-rolled lexicographic successor, and gradients
are plain central differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .data import Dataset
from .encoder import Params, forward_batch
from .errors import EvaluationError

DEFAULT_FD_STEP = 1e-4  # near (machine eps)^(1/3), balancing truncation vs rounding


def enumerate_subsets(n: int, k: int, exclude: int) -> Iterator[tuple[int, ...]]:
    """All k-subsets of {0..n-1} \\ {exclude}, lexicographic, each once."""
    if not 1 <= k <= n - 1:
        raise ValueError(f"need 1 <= k <= n-1, got k={k}, n={n}")
    pool = [j for j in range(n) if j != exclude]
    idx = list(range(k))
    while True:
        yield tuple(pool[i] for i in idx)
        # lexicographic successor of the index vector
        pos = k - 1
        while pos >= 0 and idx[pos] == len(pool) - k + pos:
            pos -= 1
        if pos < 0:
            return
        idx[pos] += 1
        for p in range(pos + 1, k):
            idx[p] = idx[p - 1] + 1


def _writable_weights(p: Params) -> list[np.ndarray]:
    return [w.copy() for w in p.weights]


def _params_view(shape, weights: list[np.ndarray]) -> Params:
    p = Params(shape=shape, weights=tuple(weights))
    # Params freezes its arrays; re-open them so the probe loop can keep
    # mutating single entries in place.
    for w in weights:
        w.flags.writeable = True
    return p


def fd_gradient(
    loss_fn: Callable[[Params, Params], float],
    qp: Params,
    kp: Params,
    h: float = DEFAULT_FD_STEP,
) -> tuple[Params, Params]:
    """Central-difference gradient of loss_fn w.r.t. every weight entry."""
    if h <= 0:
        raise ValueError("h must be positive")

    def grad_one(target_idx: int) -> Params:
        base = [qp, kp]
        work = _writable_weights(base[target_idx])
        grads = []
        for l, w in enumerate(work):
            g = np.empty_like(w)
            flat = w.ravel()
            gflat = g.ravel()
            for c in range(flat.size):
                orig = flat[c]
                vals = []
                for sign in (+1.0, -1.0):
                    flat[c] = orig + sign * h
                    pair = [qp, kp]
                    pair[target_idx] = _params_view(base[target_idx].shape, work)
                    val = loss_fn(pair[0], pair[1])
                    if not math.isfinite(val):
                        flat[c] = orig
                        raise EvaluationError(
                            f"non-finite loss at net {target_idx}, layer {l}, "
                            f"coordinate {c}, sign {sign:+.0f}"
                        )
                    vals.append(val)
                flat[c] = orig
                gflat[c] = (vals[0] - vals[1]) / (2.0 * h)
            grads.append(g)
        return Params(shape=base[target_idx].shape, weights=tuple(grads))

    return grad_one(0), grad_one(1)


@dataclass(frozen=True)
class KinkMask:
    """Boolean Params-shaped masks marking coordinates whose +-h probe
    crosses a ReLU boundary somewhere in either network's traces."""

    query: tuple[np.ndarray, ...]
    key: tuple[np.ndarray, ...]

    @property
    def marked_fraction(self) -> float:
        marked = sum(int(m.sum()) for m in self.query + self.key)
        total = sum(m.size for m in self.query + self.key)
        return marked / total


def _net_masks(p: Params, xs: np.ndarray) -> np.ndarray:
    return np.concatenate([m.ravel() for m in forward_batch(p, xs).masks])


def kink_mask(qp: Params, kp: Params, data: Dataset, h: float) -> KinkMask:
    """Mark weight coordinates whose +-h perturbation flips any activation
    bit of any forward trace (either encoder, any sample)."""
    if h < 0:
        raise ValueError("h must be nonnegative")
    xs = data.points

    def mask_one(target_idx: int) -> tuple[np.ndarray, ...]:
        base = [qp, kp]
        out = []
        if h == 0.0:
            return tuple(np.zeros(w.shape, dtype=bool) for w in base[target_idx].weights)
        # perturbing one net cannot move the other net's activations
        ref = _net_masks(base[target_idx], xs)
        work = _writable_weights(base[target_idx])
        for w in work:
            flags = np.zeros(w.shape, dtype=bool)
            flat = w.ravel()
            fflat = flags.ravel()
            for c in range(flat.size):
                orig = flat[c]
                flipped = False
                for sign in (+1.0, -1.0):
                    flat[c] = orig + sign * h
                    probe = _params_view(base[target_idx].shape, work)
                    if not np.array_equal(_net_masks(probe, xs), ref):
                        flipped = True
                        break
                flat[c] = orig
                fflat[c] = flipped
            out.append(flags)
        return tuple(out)

    return KinkMask(query=mask_one(0), key=mask_one(1))
