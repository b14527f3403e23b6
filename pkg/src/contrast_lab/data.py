"""Training sets: unit-norm points with a guaranteed pairwise separation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import GenerationError, ShapeError
from .rng import RngState

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class Dataset:
    """n unit vectors in R^b with realized minimum pairwise distance delta."""

    points: np.ndarray  # (n, b)
    delta: float

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def b(self) -> int:
        return self.points.shape[1]

    def to_json(self) -> str:
        doc = {
            "n": self.n,
            "b": self.b,
            "delta": self.delta,
            "points": [[repr(float(v)) for v in row] for row in self.points],
        }
        # floats are serialized via repr (17 significant digits) so the
        # round-trip is value-exact
        return json.dumps(
            {
                "n": doc["n"],
                "b": doc["b"],
                "delta": float(repr(self.delta)),
                "points": [[float(s) for s in row] for row in doc["points"]],
            }
        )

    @staticmethod
    def from_json(text: str) -> "Dataset":
        doc = json.loads(text)
        pts = np.asarray(doc["points"], dtype=np.float64)
        if pts.shape != (doc["n"], doc["b"]):
            raise ShapeError("points array does not match declared (n, b)")
        return Dataset(points=pts, delta=float(doc["delta"]))


def min_pairwise_distance(points: np.ndarray) -> float:
    n = points.shape[0]
    best = math.inf
    for i in range(n - 1):
        d = np.linalg.norm(points[i + 1 :] - points[i], axis=1)
        best = min(best, float(d.min()))
    return best


def generate_separated(
    rng: RngState,
    n: int,
    b: int,
    delta_min: float,
    max_attempts: int | None = None,
) -> Dataset:
    """Unit vectors uniform on the sphere, conditioned on pairwise separation.

    Rejection sampling: draw the full set, keep it only if every pair is at
    least ``delta_min`` apart.  The stored ``delta`` is the realized minimum
    distance, which downstream bound ratios use (it is what the inequalities
    actually reference, and is tighter than the request).
    """
    if n < 2 or b < 2:
        raise ValueError(f"need n >= 2 and b >= 2, got n={n}, b={b}")
    if not 0.0 < delta_min < SQRT2:
        raise GenerationError(
            f"delta_min must lie in (0, sqrt(2)), got {delta_min}", attempts=0
        )
    if max_attempts is None:
        max_attempts = 10 * n * n
    gen = rng.generator()
    for attempt in range(1, max_attempts + 1):
        pts = gen.standard_normal((n, b))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        realized = min_pairwise_distance(pts)
        if realized >= delta_min:
            return Dataset(points=pts, delta=realized)
    raise GenerationError(
        f"no {delta_min}-separated set of {n} points in R^{b} "
        f"after {max_attempts} attempts",
        attempts=max_attempts,
    )


def simplex_dataset(n: int, b: int) -> Dataset:
    """Deterministic equidistant points: regular simplex vertices on the sphere.

    Requires n <= b.  All pairwise distances equal sqrt(2 n / (n - 1)) / ...
    realized delta is computed, not assumed.
    """
    if n < 2 or n > b:
        raise ValueError(f"simplex construction needs 2 <= n <= b, got n={n}, b={b}")
    pts = np.zeros((n, b))
    pts[:, :n] = np.eye(n)
    pts[:, :n] -= 1.0 / n
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    return Dataset(points=pts, delta=min_pairwise_distance(pts))


@dataclass(frozen=True)
class ValidationReport:
    max_norm_deviation: float
    min_distance: float
    stored_delta: float
    ok: bool


def validate_dataset(data: Dataset, norm_tol: float = 1e-12) -> ValidationReport:
    norms = np.linalg.norm(data.points, axis=1)
    max_dev = float(np.max(np.abs(norms - 1.0)))
    min_dist = min_pairwise_distance(data.points)
    ok = max_dev <= norm_tol and min_dist >= data.delta - 1e-12 and data.delta > 0
    return ValidationReport(
        max_norm_deviation=max_dev,
        min_distance=min_dist,
        stored_delta=data.delta,
        ok=ok,
    )
