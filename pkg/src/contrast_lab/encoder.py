"""ReLU encoder networks: init, forward traces, back-propagation products.

A network with layer count parameter ``L`` holds L+1 weight matrices:
W0 (m x b), W1..W_{L-1} (m x m), WL (d x m), no biases.  ReLU ties at
exactly zero count as active, so sigma(z) = mask * z holds exactly.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .linalg import gaussian_matrix, spectral_norm
from .rng import RngState


@dataclass(frozen=True)
class Shape:
    L: int
    m: int
    d: int
    b: int

    def __post_init__(self):
        if self.L < 1 or self.m < 1 or self.d < 1 or self.b < 1:
            raise ShapeError(f"all shape fields must be >= 1, got {self}")

    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [(self.m, self.b)]
        dims += [(self.m, self.m)] * (self.L - 1)
        dims.append((self.d, self.m))
        return dims


@dataclass(frozen=True)
class Params:
    shape: Shape
    weights: tuple[np.ndarray, ...]

    def __post_init__(self):
        dims = self.shape.layer_dims()
        if len(self.weights) != len(dims):
            raise ShapeError(
                f"expected {len(dims)} weight matrices, got {len(self.weights)}"
            )
        for l, (w, dim) in enumerate(zip(self.weights, dims)):
            if w.shape != dim:
                raise ShapeError(f"layer {l}: expected shape {dim}, got {w.shape}")
        for w in self.weights:
            w.flags.writeable = False

    def frobenius_distance(self, other: "Params") -> float:
        self._check_compatible(other)
        return float(
            np.sqrt(
                sum(
                    float(np.sum((a - b) ** 2))
                    for a, b in zip(self.weights, other.weights)
                )
            )
        )

    def _check_compatible(self, other: "Params") -> None:
        if self.shape != other.shape:
            raise ShapeError(f"shape mismatch: {self.shape} vs {other.shape}")

    def to_bytes(self) -> bytes:
        """Binary container: one JSON header line, then raw little-endian
        float64 payloads per layer, row-major.  Round-trip is bit-exact."""
        header = json.dumps(
            {"L": self.shape.L, "m": self.shape.m, "d": self.shape.d, "b": self.shape.b}
        ).encode()
        buf = io.BytesIO()
        buf.write(header + b"\n")
        for w in self.weights:
            buf.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
        return buf.getvalue()

    @staticmethod
    def from_bytes(blob: bytes) -> "Params":
        newline = blob.index(b"\n")
        meta = json.loads(blob[:newline])
        shape = Shape(L=meta["L"], m=meta["m"], d=meta["d"], b=meta["b"])
        offset = newline + 1
        weights = []
        for rows, cols in shape.layer_dims():
            count = rows * cols
            w = np.frombuffer(
                blob, dtype="<f8", count=count, offset=offset
            ).reshape(rows, cols)
            weights.append(w.copy())
            offset += count * 8
        return Params(shape=shape, weights=tuple(weights))


def init_params(rng: RngState, shape: Shape) -> Params:
    """He-style init: hidden layers N(0, 2/m), output layer N(0, 1/d)."""
    weights = []
    for l, (rows, cols) in enumerate(shape.layer_dims()):
        variance = 1.0 / shape.d if l == shape.L else 2.0 / shape.m
        weights.append(gaussian_matrix(rng.child(f"layer-{l}"), rows, cols, variance))
    return Params(shape=shape, weights=tuple(weights))


def zeros_like_params(shape: Shape) -> Params:
    return Params(
        shape=shape, weights=tuple(np.zeros(dim) for dim in shape.layer_dims())
    )


@dataclass(frozen=True)
class ForwardTrace:
    """Hidden states and ReLU masks of one forward pass.

    hidden[l] is the post-activation state of layer l (0 <= l <= L-1);
    masks[l] is the boolean activation pattern (pre-activation >= 0);
    output = WL @ hidden[L-1].
    """

    x: np.ndarray
    hidden: tuple[np.ndarray, ...]
    masks: tuple[np.ndarray, ...]
    output: np.ndarray


def forward_trace(p: Params, x: np.ndarray) -> ForwardTrace:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (p.shape.b,):
        raise ShapeError(f"input must have shape ({p.shape.b},), got {x.shape}")
    h = x
    hidden, masks = [], []
    for l in range(p.shape.L):
        pre = p.weights[l] @ h
        mask = pre >= 0.0
        h = np.where(mask, pre, 0.0)
        hidden.append(h)
        masks.append(mask)
    out = p.weights[p.shape.L] @ h
    return ForwardTrace(
        x=x, hidden=tuple(hidden), masks=tuple(masks), output=out
    )


@dataclass(frozen=True)
class BatchTrace:
    """Column-stacked forward pass of many inputs through one network.

    hidden[l] has shape (m, n); masks[l] is boolean (m, n); outputs is (d, n).
    Column i matches forward_trace on input i exactly.
    """

    hidden: tuple[np.ndarray, ...]
    masks: tuple[np.ndarray, ...]
    outputs: np.ndarray


def forward_batch(p: Params, xs: np.ndarray) -> BatchTrace:
    """xs: (n, b) rows of inputs."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != p.shape.b:
        raise ShapeError(f"inputs must be (n, {p.shape.b}), got {xs.shape}")
    h = xs.T
    hidden, masks = [], []
    for l in range(p.shape.L):
        pre = p.weights[l] @ h
        mask = pre >= 0.0
        h = np.where(mask, pre, 0.0)
        hidden.append(h)
        masks.append(mask)
    return BatchTrace(hidden=tuple(hidden), masks=tuple(masks), outputs=p.weights[p.shape.L] @ h)


def backprop_matrix(p: Params, trace: ForwardTrace, l: int) -> np.ndarray:
    """Product WL D_{L-1} W_{L-1} ... D_l W_l; for l = L just WL."""
    L = p.shape.L
    if not 0 <= l <= L:
        raise ShapeError(f"layer index must be in [0, {L}], got {l}")
    if len(trace.masks) != L or trace.masks[0].shape != (p.shape.m,):
        raise ShapeError("trace does not match params")
    mat = p.weights[L]
    for a in range(L - 1, l - 1, -1):
        mat = (mat * trace.masks[a]) @ p.weights[a]
    return mat


@dataclass(frozen=True)
class PerturbationReport:
    layer_spectral_norms: tuple[float, ...]
    total_frobenius: float


def apply_perturbation(
    p: Params, q: Params, scale: float
) -> tuple[Params, PerturbationReport]:
    """p + scale * q, plus the per-layer spectral and total Frobenius size
    of the applied perturbation."""
    p._check_compatible(q)
    new_weights, spec, fro_sq = [], [], 0.0
    for wp, wq in zip(p.weights, q.weights):
        delta = scale * wq
        new_weights.append(wp + delta)
        spec.append(0.0 if scale == 0.0 else spectral_norm(delta, tol=1e-6))
        fro_sq += float(np.sum(delta**2))
    return (
        Params(shape=p.shape, weights=tuple(new_weights)),
        PerturbationReport(
            layer_spectral_norms=tuple(spec), total_frobenius=float(np.sqrt(fro_sq))
        ),
    )


def sign_correction(a: np.ndarray, bvec: np.ndarray) -> np.ndarray:
    """Diagonal correction D'' with relu(a) - relu(b) = (D + D'')(a - b),
    where D = 1{a >= 0}.  Zero wherever the activation indicators agree or
    a == b; entries satisfy |D + D''| <= 1 always."""
    a = np.asarray(a, dtype=np.float64)
    bvec = np.asarray(bvec, dtype=np.float64)
    if a.shape != bvec.shape or a.ndim != 1:
        raise ShapeError(f"expected equal-length vectors, got {a.shape}, {bvec.shape}")
    d = (a >= 0.0).astype(np.float64)
    diff = a - bvec
    relu_diff = np.maximum(a, 0.0) - np.maximum(bvec, 0.0)
    ratio = np.divide(relu_diff, diff, out=d.copy(), where=diff != 0.0)
    dpp = ratio - d
    dpp[diff == 0.0] = 0.0
    dpp[(a >= 0.0) == (bvec >= 0.0)] = 0.0
    return dpp
