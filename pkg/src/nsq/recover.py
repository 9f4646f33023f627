"""Quantized compressed sensing: quantize structured measurements, then
reconstruct by l1 minimization under the condensed residual constraint

    min |z|_1  subject to  |V Phi z - V q|_2 <= eta

solved with a first-order primal-dual iteration using operator access
only (no matrix is materialized).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .condense import HAT, Condenser, eta_bound
from .quantize import Alphabet, Beta, Scheme, SigmaDelta
from .transforms import StructuredEnsemble


@dataclass(frozen=True)
class LinearMap:
    """A p x n linear operator given by its action and adjoint action."""

    shape: tuple[int, int]
    apply: Callable[[np.ndarray], np.ndarray]
    adjoint: Callable[[np.ndarray], np.ndarray]

    @classmethod
    def from_matrix(cls, mat) -> "LinearMap":
        mat = np.asarray(mat, dtype=np.float64)
        return cls(shape=mat.shape, apply=lambda z: mat @ z, adjoint=lambda w: mat.T @ w)


def measurement_operator(ensemble: StructuredEnsemble, condenser: Condenser) -> LinearMap:
    """The composed operator ``V Phi`` with adjoint ``Phi^T V^T``."""
    if condenser.m != ensemble.m:
        raise ValueError(
            f"condenser covers m={condenser.m} but ensemble has m={ensemble.m}"
        )
    return LinearMap(
        shape=(condenser.p, ensemble.n),
        apply=lambda z: condenser.apply(ensemble.apply(z)),
        adjoint=lambda w: ensemble.apply_adjoint(condenser.adjoint(w)),
    )


def operator_norm_est(op: LinearMap, iters: int = 100, seed: int = 0) -> float:
    """Power iteration on ``A^T A``; deterministic for a fixed seed."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(op.shape[1])
    z /= np.linalg.norm(z)
    est = 0.0
    for _ in range(iters):
        w = op.adjoint(op.apply(z))
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        new_est = math.sqrt(nw)
        z = w / nw
        if abs(new_est - est) <= 1e-12 * max(new_est, 1.0):
            est = new_est
            break
        est = new_est
    return est


@dataclass(frozen=True)
class SolverParams:
    tolerance: float = 1e-6
    max_iterations: int = 20_000
    check_every: int = 25
    norm_estimate: Optional[float] = None


@dataclass(frozen=True)
class BpdnResult:
    x: np.ndarray
    converged: bool
    iterations: int
    residual_norm: float
    objective: float


def _soft_threshold(z: np.ndarray, t: float) -> np.ndarray:
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def bpdn_solve(
    op: LinearMap | np.ndarray,
    b,
    eta: float,
    params: Optional[SolverParams] = None,
) -> BpdnResult:
    """Solve ``min |z|_1 s.t. |A z - b|_2 <= eta`` by a primal-dual iteration.

    Step sizes are fixed from a power-method estimate of |A|; the method
    touches A only through ``apply`` and ``adjoint``.  Stops when the
    iterate is feasible to within the tolerance and has stopped moving;
    otherwise returns the last iterate with ``converged=False``.
    """
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    if isinstance(op, np.ndarray):
        op = LinearMap.from_matrix(op)
    params = params or SolverParams()
    b = np.asarray(b, dtype=np.float64)
    p, n = op.shape
    if b.shape != (p,):
        raise ValueError(f"rhs must have shape ({p},), got {b.shape}")

    # zero is optimal whenever it is feasible
    if np.linalg.norm(b) <= eta:
        return BpdnResult(
            x=np.zeros(n),
            converged=True,
            iterations=0,
            residual_norm=float(np.linalg.norm(b)),
            objective=0.0,
        )

    norm_a = params.norm_estimate or operator_norm_est(op)
    norm_a = max(norm_a, 1e-300)
    step = 1.0 / (1.02 * norm_a)  # tau = sigma, tau*sigma*|A|^2 < 1

    x = np.zeros(n)
    x_bar = x.copy()
    w = np.zeros(p)
    x_prev_check = x.copy()
    feas_slack = params.tolerance * max(1.0, float(np.linalg.norm(b)))

    converged = False
    it = 0
    residual = float("inf")
    for it in range(1, params.max_iterations + 1):
        # dual ascent with the projection onto the eta-ball around b
        v = w + step * op.apply(x_bar)
        center = v / step - b
        dist = np.linalg.norm(center)
        shrink = min(1.0, eta / dist) if dist > 0 else 0.0
        w = v - step * (b + shrink * center)
        # primal descent with the l1 prox
        x_new = _soft_threshold(x - step * op.adjoint(w), step)
        x_bar = 2.0 * x_new - x
        x = x_new
        if it % params.check_every == 0 or it == params.max_iterations:
            residual = float(np.linalg.norm(op.apply(x) - b))
            moved = float(np.linalg.norm(x - x_prev_check))
            x_prev_check = x.copy()
            if residual <= eta + feas_slack and moved <= params.tolerance * max(
                1.0, float(np.linalg.norm(x))
            ):
                converged = True
                break
    if math.isinf(residual):
        residual = float(np.linalg.norm(op.apply(x) - b))

    return BpdnResult(
        x=x,
        converged=converged,
        iterations=it,
        residual_norm=residual,
        objective=float(np.abs(x).sum()),
    )


@dataclass(frozen=True)
class SparseSignal:
    """A k-sparse test signal, scaled so the measurements stay in range."""

    n: int
    support: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        support = np.asarray(self.support, dtype=np.int64)
        values = np.asarray(self.values, dtype=np.float64)
        if support.shape != values.shape or support.ndim != 1:
            raise ValueError("support and values must be matching 1-d arrays")
        if support.size and (support.min() < 0 or support.max() >= self.n):
            raise ValueError("support indices out of range")
        support.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "values", values)

    def dense(self) -> np.ndarray:
        x = np.zeros(self.n)
        x[self.support] = self.values
        return x


def generate_sparse_signal(
    n: int, k: int, seed: int, ensemble: StructuredEnsemble, sup_target: float = 8.0 / 9.0
) -> SparseSignal:
    """Random support, Gaussian values, unit norm, then scaled by the
    largest c <= 1 with ``|Phi (c x)|_inf <= sup_target`` (exact by
    linearity, one operator application)."""
    if k > n or k < 1:
        raise ValueError("need 1 <= k <= n")
    if ensemble.n != n:
        raise ValueError("ensemble dimension does not match n")
    rng = np.random.default_rng(seed)
    support = np.sort(rng.choice(n, size=k, replace=False))
    values = rng.standard_normal(k)
    values /= np.linalg.norm(values)
    x = np.zeros(n)
    x[support] = values
    sup = float(np.max(np.abs(ensemble.apply(x))))
    # 1e-12 haircut keeps the bound true after re-applying in floats
    scale = min(1.0, sup_target / sup * (1.0 - 1e-12)) if sup > 0 else 1.0
    return SparseSignal(n=n, support=support, values=values * scale)


@dataclass(frozen=True)
class RecoveryProblem:
    """Inputs of the reconstruction program (hat-scaled condenser)."""

    ensemble: StructuredEnsemble
    condenser: Condenser
    q: np.ndarray
    eta: float
    params: SolverParams = field(default_factory=SolverParams)

    def __post_init__(self):
        if self.condenser.scaling != HAT:
            raise ValueError("recovery uses the hat-scaled condenser")
        q = np.asarray(self.q, dtype=np.float64)
        if q.shape != (self.ensemble.m,):
            raise ValueError("code length must equal the measurement count")
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)


def reconstruct(rp: RecoveryProblem) -> BpdnResult:
    """Run the l1 program for a recovery problem; ``result.x`` is the estimate."""
    op = measurement_operator(rp.ensemble, rp.condenser)
    b = rp.condenser.apply(rp.q)
    return bpdn_solve(op, b, rp.eta, rp.params)


def choose_eta(scheme: Scheme, lam: int, delta: float) -> float:
    """The analytic (conservative) constraint radius for a scheme."""
    if isinstance(scheme, SigmaDelta):
        return eta_bound("sd", scheme.r, lam, delta)
    if isinstance(scheme, Beta):
        return eta_bound("beta", scheme.beta, lam, delta)
    raise ValueError("eta is defined for the noise-shaping schemes only")


def oracle_eta(
    ensemble: StructuredEnsemble, condenser: Condenser, x, q
) -> float:
    """Realized ``|V(Phi x - q)|_2`` for a known signal (sharper curves;
    available only when the ground truth is known)."""
    x = np.asarray(x, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    return float(np.linalg.norm(condenser.apply(ensemble.apply(x) - q)))


def quantize_measurements(
    ensemble: StructuredEnsemble, x, scheme: Scheme, alphabet: Alphabet
):
    """Convenience: ``Q(Phi x)`` with the scheme's block length adapted."""
    from .quantize import quantize_noise_shaping

    y = ensemble.apply(x)
    return quantize_noise_shaping(y, scheme, alphabet)
