"""Gaussian kernels, per-view bandwidths, and average multi-view fusion.

The bandwidth heuristic sets theta to the reciprocal of the mean Euclidean
distance over all unordered pairs of training rows of that view. Fused Gram
entries are the plain arithmetic mean of the per-view Gaussian kernels, so
the diagonal of any fused Gram is exactly 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import NumericalError, PreconditionError
from .featurestore import ViewId


@dataclass(frozen=True)
class KernelParams:
    """Gaussian bandwidth for one view (units: 1/distance^2)."""

    theta: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.theta) or self.theta <= 0.0:
            raise PreconditionError(f"theta must be finite and > 0, got {self.theta!r}")


@dataclass(frozen=True)
class FusedKernelConfig:
    """The views entering the fusion and their bandwidths.

    ``jitter`` is a solve-time ridge term only; it is never folded into the
    kernel matrix itself.
    """

    views: tuple[ViewId, ...]
    params: Mapping[ViewId, KernelParams]
    jitter: float = 0.0

    def __post_init__(self) -> None:
        if not self.views:
            raise PreconditionError("FusedKernelConfig requires at least one view")
        if self.jitter < 0.0:
            raise PreconditionError("jitter must be non-negative")
        missing = [v for v in self.views if v not in self.params]
        if missing:
            raise PreconditionError(f"missing kernel params for views {missing}")

    def theta(self, view: ViewId) -> float:
        return self.params[view].theta


@dataclass
class KernelMatrix:
    """Symmetric fused Gram over n training rows."""

    values: np.ndarray
    row_keys: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.values.shape[0]


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, clipped at 0 against rounding."""
    aa = np.einsum("ij,ij->i", a, a)
    bb = np.einsum("ij,ij->i", b, b)
    d2 = aa[:, None] + bb[None, :] - 2.0 * (a @ b.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def fit_bandwidth(train_rows: np.ndarray) -> KernelParams:
    """theta = 1 / mean distance over the n(n-1)/2 unordered row pairs."""
    x = np.asarray(train_rows, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise PreconditionError(f"bandwidth fit needs >= 2 rows, got {n}")
    dists = np.sqrt(_sq_dists(x, x))
    iu = np.triu_indices(n, k=1)
    mean_dist = float(np.mean(dists[iu]))
    if mean_dist == 0.0:
        raise NumericalError("all training rows identical: mean pairwise distance is zero")
    return KernelParams(theta=1.0 / mean_dist)


def gaussian_kernel(a: np.ndarray, b: np.ndarray, theta: float) -> float:
    """exp(-theta * ||a - b||^2); 1 at zero distance, strictly positive."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise PreconditionError(f"dim mismatch: {a.shape[0]} vs {b.shape[0]}")
    diff = a - b
    return float(np.exp(-theta * float(diff @ diff)))


def _view_stack(train_rows: Mapping[ViewId, np.ndarray], config: FusedKernelConfig) -> dict[ViewId, np.ndarray]:
    out: dict[ViewId, np.ndarray] = {}
    n = None
    for view in config.views:
        if view not in train_rows:
            raise PreconditionError(f"missing view {view}")
        x = np.asarray(train_rows[view], dtype=np.float64)
        if x.ndim != 2:
            raise PreconditionError(f"view {view}: expected a 2-d row matrix")
        if n is None:
            n = x.shape[0]
        elif x.shape[0] != n:
            raise PreconditionError(
                f"view row-count mismatch: {view} has {x.shape[0]}, expected {n}"
            )
        out[view] = x
    return out


def build_fused_gram(
    train_rows: Mapping[ViewId, np.ndarray],
    config: FusedKernelConfig,
    row_keys: Sequence | None = None,
) -> KernelMatrix:
    """Average of the per-view Gaussian Grams; exactly symmetric, unit diagonal."""
    stacks = _view_stack(train_rows, config)
    n = next(iter(stacks.values())).shape[0]
    if n < 2:
        raise PreconditionError(f"Gram construction needs >= 2 rows, got {n}")

    acc = np.zeros((n, n))
    for view in config.views:
        acc += np.exp(-config.theta(view) * _sq_dists(stacks[view], stacks[view]))
    acc /= len(config.views)

    upper = np.triu(acc, k=1)
    values = upper + upper.T
    np.fill_diagonal(values, 1.0)
    keys = list(row_keys) if row_keys is not None else list(range(n))
    if len(keys) != n:
        raise PreconditionError(f"{len(keys)} row keys for {n} rows")
    return KernelMatrix(values=values, row_keys=keys)


def fused_cross_matrix(
    z_rows: Mapping[ViewId, np.ndarray],
    support: Mapping[ViewId, np.ndarray],
    config: FusedKernelConfig,
) -> np.ndarray:
    """(F, M) matrix of fused kernel values between F test rows and M support rows."""
    z_stacks = _view_stack(z_rows, config)
    s_stacks = _view_stack(support, config)
    f = next(iter(z_stacks.values())).shape[0]
    m = next(iter(s_stacks.values())).shape[0]
    if m == 0:
        raise PreconditionError("support must be non-empty")
    acc = np.zeros((f, m))
    for view in config.views:
        if z_stacks[view].shape[1] != s_stacks[view].shape[1]:
            raise PreconditionError(
                f"view {view}: test dim {z_stacks[view].shape[1]} "
                f"!= support dim {s_stacks[view].shape[1]}"
            )
        acc += np.exp(-config.theta(view) * _sq_dists(z_stacks[view], s_stacks[view]))
    acc /= len(config.views)
    return acc


def fused_cross_kernel(
    z: Mapping[ViewId, np.ndarray],
    support: Mapping[ViewId, np.ndarray],
    config: FusedKernelConfig,
) -> np.ndarray:
    """Length-M vector of fused kernel values between one test frame and the support."""
    z_rows = {view: np.asarray(vec, dtype=np.float64).reshape(1, -1) for view, vec in z.items()}
    return fused_cross_matrix(z_rows, support, config)[0]


def fit_view_bandwidths(
    train_rows: Mapping[ViewId, np.ndarray],
    views: Sequence[ViewId],
    jitter: float = 0.0,
) -> FusedKernelConfig:
    """Per-view bandwidth fit over the same training rows, bundled into a config."""
    params = {view: fit_bandwidth(train_rows[view]) for view in views}
    return FusedKernelConfig(views=tuple(views), params=params, jitter=jitter)
