"""Empirical restricted-isometry diagnostics for the condensed
structured operators, the exact small-instance check, the multilevel
variant, and the sign-expectation identity used to validate the
interleaved block decomposition."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .condense import Condenser
from .transforms import StructuredEnsemble, sample_ensemble

_EXACT_BUDGET = 100_000
_ENUM_MAX_M = 16


@dataclass(frozen=True)
class RipEstimate:
    k: int
    trials: int
    delta_hat: float
    exact: bool


def _sample_sparse_unit(rng, n: int, k: int, count: int) -> np.ndarray:
    """Rows: random k-sparse unit vectors (random support, Gaussian values)."""
    order = rng.random((count, n)).argsort(axis=1)[:, :k]
    vals = rng.standard_normal((count, k))
    vals /= np.linalg.norm(vals, axis=1, keepdims=True)
    out = np.zeros((count, n))
    np.put_along_axis(out, order, vals, axis=1)
    return out


def estimate_rip(
    ensemble: StructuredEnsemble,
    condenser: Condenser,
    k: int,
    trials: int,
    seed: int = 0,
) -> RipEstimate:
    """Sampled isometry defect: max over random k-sparse unit x of
    ``| |V Phi x|_2^2 - 1 |``."""
    n = ensemble.n
    if k > n or k < 1:
        raise ValueError("need 1 <= k <= n")
    if trials < 1:
        raise ValueError("need at least one trial")
    rng = np.random.default_rng(seed)
    worst = 0.0
    chunk = max(1, min(trials, (1 << 22) // max(1, n)))
    done = 0
    while done < trials:
        take = min(chunk, trials - done)
        x = _sample_sparse_unit(rng, n, k, take)
        vals = np.abs(
            np.sum(condenser.apply(ensemble.apply(x)) ** 2, axis=-1) - 1.0
        )
        worst = max(worst, float(vals.max()))
        done += take
    return RipEstimate(k=k, trials=trials, delta_hat=worst, exact=False)


def exact_rip_small(
    ensemble: StructuredEnsemble, condenser: Condenser, k: int
) -> float:
    """Exact constant ``max_S |M_S^T M_S - I|_2`` over all size-k supports
    of the materialized M = V Phi (combinatorial budget enforced)."""
    n = ensemble.n
    if k > n or k < 1:
        raise ValueError("need 1 <= k <= n")
    if math.comb(n, k) > _EXACT_BUDGET:
        raise ValueError(
            f"C({n},{k}) = {math.comb(n, k)} exceeds the exact budget {_EXACT_BUDGET}"
        )
    mat = condenser.apply(ensemble.apply(np.eye(n))).T  # p x n
    gram = mat.T @ mat
    eye = np.eye(k)
    worst = 0.0
    for s in combinations(range(n), k):
        block = gram[np.ix_(s, s)] - eye
        worst = max(worst, float(np.max(np.abs(np.linalg.eigvalsh(block)))))
    return worst


@dataclass(frozen=True)
class IdentityReport:
    lhs: np.ndarray
    rhs: np.ndarray
    rel_errors: np.ndarray

    @property
    def max_rel_error(self) -> float:
        return float(np.max(self.rel_errors))


def expectation_identity_check(
    n: int,
    m: int,
    p: int,
    v,
    seed: int = 0,
    kind: str = "boe-hadamard",
    count: int = 10,
) -> IdentityReport:
    """Verify, by full enumeration of the 2^m row-sign patterns, that the
    mean of ``|V (eps . A x)|_2^2`` equals the interleaved block sum
    ``sum_j v_j^2 |A_{Omega_j} x|_2^2`` with Omega_j = {j, j+lam, ...}.
    """
    if m > _ENUM_MAX_M:
        raise ValueError(f"full sign enumeration limited to m <= {_ENUM_MAX_M}")
    v = np.asarray(v, dtype=np.float64)
    lam = v.shape[0]
    if p * lam != m:
        raise ValueError(f"need p * lam == m, got {p} * {lam} != {m}")

    children = np.random.SeedSequence(seed).spawn(2)
    ensemble = sample_ensemble(
        kind, n, m, int(children[0].generate_state(1, dtype=np.uint64)[0])
    )
    rng = np.random.default_rng(children[1])

    # strip the sampled row signs: the identity enumerates them exhaustively
    base = ensemble.materialize() * ensemble.row_signs.entries[:, None]

    signs = ((np.arange(1 << m)[:, None] >> np.arange(m)) & 1) * 2.0 - 1.0
    lhs = np.empty(count)
    rhs = np.empty(count)
    for t in range(count):
        x = rng.standard_normal(n)
        ax = base @ x
        condensed = (signs * ax).reshape(-1, p, lam) @ v
        lhs[t] = float(np.mean(np.sum(condensed**2, axis=-1)))
        rhs[t] = float(np.sum(v**2 * np.sum(ax.reshape(p, lam) ** 2, axis=0)))
    scale = np.maximum(np.abs(rhs), 1e-300)
    rel = np.abs(lhs - rhs) / scale
    return IdentityReport(lhs=lhs, rhs=rhs, rel_errors=rel)


@dataclass(frozen=True)
class MripLevel:
    level: int
    k: int
    threshold: float
    delta_hat: float
    passed: bool


@dataclass(frozen=True)
class MripReport:
    levels: list[MripLevel]
    first_failure: int | None

    @property
    def passed(self) -> bool:
        return self.first_failure is None


def mrip_check(
    ensemble: StructuredEnsemble,
    condenser: Condenser,
    base_k: int,
    base_alpha: float,
    trials: int = 2000,
    seed: int = 0,
) -> MripReport:
    """Sampled multilevel isometry check: at level ell the sparsity is
    ``min(2^ell * base_k, n)`` and the allowed defect ``2^(ell/2) * base_alpha``.
    Reports every level and the first failure, if any."""
    if base_k < 1:
        raise ValueError("base sparsity must be >= 1")
    n = ensemble.n
    top = max(1, math.ceil(math.log2(n))) if n > 1 else 0
    levels = []
    first_failure = None
    children = np.random.SeedSequence(seed).spawn(top + 1)
    for ell in range(top + 1):
        k = min((1 << ell) * base_k, n)
        threshold = (2.0 ** (ell / 2)) * base_alpha
        est = estimate_rip(
            ensemble,
            condenser,
            k,
            trials,
            seed=int(children[ell].generate_state(1, dtype=np.uint64)[0]),
        )
        ok = est.delta_hat <= threshold
        levels.append(
            MripLevel(
                level=ell, k=k, threshold=threshold, delta_hat=est.delta_hat, passed=ok
            )
        )
        if not ok and first_failure is None:
            first_failure = ell
    return MripReport(levels=levels, first_failure=first_failure)
