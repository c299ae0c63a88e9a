"""One-class null-space kernel regression: dense solve and sparse LARS path.

The dense route solves (K + jitter*I) alpha = 1 by Cholesky factorisation,
escalating the ridge jitter when K is numerically singular. The sparse route
runs least-angle regression with the lasso modification on design matrix K
and all-ones response, stopping at a caller-chosen coefficient cardinality.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .errors import NumericalError, PreconditionError
from .kernels import KernelMatrix

#: jitter escalation ladder, as multiples of trace(K)/n
_JITTER_EXPONENTS = range(-10, -3)

#: threshold below which a step length counts as a tie / zero move
_TINY = 1e-12


@dataclass(frozen=True)
class DenseSolution:
    alpha: np.ndarray
    residual_norm: float
    jitter_used: float


@dataclass(frozen=True)
class SparseSolution:
    """A lasso path point: nonzero coefficients plus its regularisation weight."""

    indices: np.ndarray  # ascending positions into the training rows
    values: np.ndarray
    delta: float
    nnz: int
    shortfall: bool  # True when the path ended before target_nnz was reached

    @property
    def alpha(self) -> list[tuple[int, float]]:
        return [(int(i), float(v)) for i, v in zip(self.indices, self.values)]

    def dense(self, n: int) -> np.ndarray:
        out = np.zeros(n)
        out[self.indices] = self.values
        return out


@dataclass(frozen=True)
class FisherDiagnostics:
    s_w: float
    s_b: float
    m1: float


def _as_matrix(K: KernelMatrix | np.ndarray) -> np.ndarray:
    values = K.values if isinstance(K, KernelMatrix) else np.asarray(K, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise PreconditionError(f"expected a square matrix, got shape {values.shape}")
    return values


def _check_symmetric(values: np.ndarray) -> None:
    scale = max(1.0, float(np.max(np.abs(values))))
    if float(np.max(np.abs(values - values.T))) > 1e-10 * scale:
        raise PreconditionError("matrix is not symmetric")


def _chol_solve_jittered(
    gram: np.ndarray, rhs: np.ndarray, jitter: float, context: str
) -> tuple[np.ndarray, float]:
    """Cholesky solve of (gram + j*I) x = rhs, escalating j when needed.

    Tries the requested jitter first, then the ladder 1e-10..1e-4 times
    trace/n (x10 steps), and raises once the ladder is exhausted.
    """
    n = gram.shape[0]
    base = float(np.trace(gram)) / n
    if base <= 0.0 or not np.isfinite(base):
        base = 1.0
    ladder = [jitter] + [base * 10.0**e for e in _JITTER_EXPONENTS]
    last_exc: Exception | None = None
    for j in ladder:
        if j < jitter:
            continue
        try:
            shifted = gram if j == 0.0 else gram + j * np.eye(n)
            factor = cho_factor(shifted, lower=True, check_finite=False)
            x = cho_solve(factor, rhs, check_finite=False)
            if not np.all(np.isfinite(x)):
                raise LinAlgError("non-finite solution")
            return x, j
        except LinAlgError as exc:
            last_exc = exc
    raise NumericalError(
        f"{context}: factorisation failed even at jitter {ladder[-1]:.3g}"
    ) from last_exc


def solve_dense(K: KernelMatrix | np.ndarray, jitter: float = 0.0) -> DenseSolution:
    """Solve (K + jitter*I) alpha = 1; the residual is reported against K itself."""
    values = _as_matrix(K)
    _check_symmetric(values)
    n = values.shape[0]
    if n < 1:
        raise PreconditionError("empty kernel matrix")
    if jitter < 0.0:
        raise PreconditionError("jitter must be non-negative")
    ones = np.ones(n)
    alpha, used = _chol_solve_jittered(values, ones, jitter, "dense solve")
    residual = float(np.linalg.norm(values @ alpha - ones))
    return DenseSolution(alpha=alpha, residual_norm=residual, jitter_used=used)


def _lars_steps(
    K: np.ndarray, y: np.ndarray, jitter: float
) -> Iterator[tuple[np.ndarray, list[int], np.ndarray]]:
    """Yield lasso-path breakpoints (alpha, active, correlations) for design K.

    Correlations are recomputed from scratch at every breakpoint, c = K^T
    (y - K alpha), so the KKT system holds at each yielded state. One
    variable joins per step (lowest index on ties); sign-crossing
    coefficients are dropped per the lasso modification and barred from
    immediately re-entering with the same sign.
    """
    n = K.shape[1]
    alpha = np.zeros(n)
    active: list[int] = []
    just_dropped: set[int] = set()
    skip_add = False
    c0_scale = None

    for _ in range(8 * n + 16):
        c = K.T @ (y - K @ alpha)
        yield alpha.copy(), list(active), c.copy()

        cmax = float(np.max(np.abs(c)))
        if c0_scale is None:
            c0_scale = max(1.0, cmax)
        if cmax <= 1e-12 * c0_scale:
            return  # residual orthogonal to every column: path endpoint

        inactive = np.ones(n, dtype=bool)
        inactive[active] = False
        if not skip_add:
            if not inactive.any():
                return  # all variables active and the OLS step was already taken
            masked = np.where(inactive, np.abs(c), -np.inf)
            active.append(int(np.argmax(masked)))
            inactive[active[-1]] = False
        skip_add = False

        idx = np.asarray(active)
        signs = np.sign(c[idx])
        signs[signs == 0.0] = 1.0
        cols = K[:, idx]
        gram = cols.T @ cols
        v, _ = _chol_solve_jittered(gram, signs, jitter, "LARS active-set solve")
        denom = float(signs @ v)
        if denom <= 0.0:
            raise NumericalError("LARS equiangular direction is degenerate")
        aa = 1.0 / np.sqrt(denom)
        direction = aa * v  # coefficient-space direction on the active set
        a = aa * (K.T @ (cols @ v))  # correlation decay rates

        cmax_active = float(np.max(np.abs(c[idx])))
        gamma = cmax_active / aa  # full step to the active-set OLS solution
        if inactive.any():
            cj = c[inactive]
            aj = a[inactive]
            jidx = np.flatnonzero(inactive)
            with np.errstate(divide="ignore", invalid="ignore"):
                cand = np.concatenate(
                    [(cmax_active - cj) / (aa - aj), (cmax_active + cj) / (aa + aj)]
                )
            cand_idx = np.concatenate([jidx, jidx])
            valid = np.isfinite(cand) & (cand >= -_TINY)
            if just_dropped:
                # a just-dropped variable may only re-enter with flipped sign,
                # i.e. not at the zero-length step where it left
                barred = np.isin(cand_idx, list(just_dropped)) & (cand <= _TINY)
                valid &= ~barred
            if valid.any():
                gamma = min(gamma, float(np.min(np.maximum(cand[valid], 0.0))))
        just_dropped.clear()

        # lasso modification: stop at the first sign crossing
        with np.errstate(divide="ignore", invalid="ignore"):
            crossings = np.where(direction != 0.0, -alpha[idx] / direction, np.inf)
        crossings[crossings <= _TINY] = np.inf
        gamma_drop = float(np.min(crossings))
        dropping = gamma_drop < gamma
        if dropping:
            gamma = gamma_drop

        alpha[idx] += gamma * direction
        if dropping:
            dropped = [active[k] for k in np.flatnonzero(np.isclose(crossings, gamma_drop, rtol=0.0, atol=_TINY))]
            for j in dropped:
                alpha[j] = 0.0
                active.remove(j)
                just_dropped.add(j)
            skip_add = True

    raise NumericalError("LARS made no progress within the iteration budget")


def solve_lars_path(
    K: KernelMatrix | np.ndarray, target_nnz: int, jitter: float = 0.0
) -> SparseSolution:
    """First lasso path point whose active set reaches ``target_nnz``.

    If the path terminates first (all candidates signed out, or the
    unregularised endpoint is reached), the final point is returned with the
    shortfall flag set. ``delta`` is the L1 weight at the returned point,
    i.e. twice the largest absolute correlation.
    """
    values = _as_matrix(K)
    _check_symmetric(values)
    n = values.shape[0]
    if not 1 <= target_nnz <= n:
        raise PreconditionError(f"target_nnz must be in 1..{n}, got {target_nnz}")

    y = np.ones(n)
    point = None
    for alpha, active, c in _lars_steps(values, y, jitter):
        point = (alpha, c)
        if len(active) == target_nnz:
            break
    assert point is not None
    alpha, c = point
    delta = 2.0 * float(np.max(np.abs(c)))
    indices = np.flatnonzero(alpha)
    nnz = int(indices.size)
    return SparseSolution(
        indices=indices,
        values=alpha[indices],
        delta=delta,
        nnz=nnz,
        shortfall=nnz < target_nnz,
    )


def lasso_objective(K: np.ndarray, alpha: np.ndarray, delta: float) -> float:
    """||K alpha - 1||^2 + delta * sum |alpha_i| (the sparse training objective)."""
    values = _as_matrix(K)
    r = values @ alpha - np.ones(values.shape[0])
    return float(r @ r + delta * np.sum(np.abs(alpha)))


def fisher_diagnostics(K: KernelMatrix | np.ndarray, alpha: np.ndarray) -> FisherDiagnostics:
    """Scatter of the realised training responses against the origin outlier.

    With responses r = K alpha: within-class scatter r.r - (sum r)^2/n,
    between-class scatter (sum r)^2/n^2, and the response mean.
    """
    values = _as_matrix(K)
    alpha = np.asarray(alpha, dtype=np.float64).reshape(-1)
    if alpha.shape[0] != values.shape[0]:
        raise PreconditionError(
            f"alpha length {alpha.shape[0]} != matrix order {values.shape[0]}"
        )
    n = values.shape[0]
    responses = values @ alpha
    total = float(np.sum(responses))
    s_w = float(responses @ responses) - total * total / n
    s_b = total * total / (n * n)
    return FisherDiagnostics(s_w=s_w, s_b=s_b, m1=total / n)
