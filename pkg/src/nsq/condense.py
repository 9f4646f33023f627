"""Condensation operators: the block row vector v, its Kronecker
operator V = I_p (x) v, the two normalizations used downstream
(``tilde`` = 9/(8 |v|_2 sqrt(p)), ``hat`` = 1/(|v|_2 sqrt(p))), the
induced pseudo-metric on codes, and the analytic error bounds fed to
the recovery program.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .quantize import Beta, Scheme, SigmaDelta

RAW = "raw"
TILDE = "tilde"
HAT = "hat"
SCALINGS = (RAW, TILDE, HAT)

SD_FLAVOR = "sd"
BETA_FLAVOR = "beta"

# row-norm oracle guard: beyond this the materialization is pointless
_MAX_ORACLE_M = 2**15


def sd_condensation_vector(r: int, lambda_tilde: int) -> np.ndarray:
    """Coefficients of ``(1 + z + ... + z^(lt-1))^r``; length r*lt - r + 1."""
    if r < 1 or lambda_tilde < 1:
        raise ValueError("order and block parameter must be >= 1")
    ones = np.ones(lambda_tilde)
    v = np.ones(1)
    for _ in range(r):
        v = np.convolve(v, ones)
    return v


def beta_condensation_vector(beta: float, lam: int) -> np.ndarray:
    """The geometric row vector ``(beta^-1, ..., beta^-lam)``."""
    if not beta > 1:
        raise ValueError("beta must exceed 1")
    if lam < 1:
        raise ValueError("block length must be >= 1")
    return beta ** -np.arange(1, lam + 1, dtype=np.float64)


@dataclass(frozen=True)
class Condenser:
    """The vector v, block count p, and a fixed scaling.

    The scaling is an explicit field and never inferred: ``tilde`` is
    the embedding normalization, ``hat`` the recovery normalization,
    ``raw`` the bare Kronecker operator.
    """

    v: np.ndarray
    p: int
    scaling: str
    flavor: str
    order: Optional[int] = None
    lambda_tilde: Optional[int] = None
    beta: Optional[float] = None

    def __post_init__(self):
        v = np.asarray(self.v, dtype=np.float64)
        if v.ndim != 1 or v.size < 1:
            raise ValueError("condensation vector must be a nonempty 1-d array")
        if self.p < 1:
            raise ValueError("block count p must be >= 1")
        if self.scaling not in SCALINGS:
            raise ValueError(f"unknown scaling {self.scaling!r}")
        if self.flavor not in (SD_FLAVOR, BETA_FLAVOR):
            raise ValueError(f"unknown flavor {self.flavor!r}")
        v.setflags(write=False)
        object.__setattr__(self, "v", v)

    @classmethod
    def sigma_delta(
        cls,
        r: int,
        p: int,
        lambda_tilde: Optional[int] = None,
        lam: Optional[int] = None,
        scaling: str = TILDE,
    ) -> "Condenser":
        """Build the Sigma-Delta condenser from (r, lambda_tilde), or from a
        target lam when ``(lam + r - 1) / r`` is an integer (else rejected).
        """
        if (lambda_tilde is None) == (lam is None):
            raise ValueError("give exactly one of lambda_tilde or lam")
        if lambda_tilde is None:
            if (lam + r - 1) % r != 0:
                raise ValueError(
                    f"lam={lam} is not reachable for order r={r}: "
                    f"(lam + r - 1)/r must be an integer"
                )
            lambda_tilde = (lam + r - 1) // r
        v = sd_condensation_vector(r, lambda_tilde)
        return cls(
            v=v, p=p, scaling=scaling, flavor=SD_FLAVOR, order=r, lambda_tilde=lambda_tilde
        )

    @classmethod
    def beta_scheme(
        cls, beta: float, lam: int, p: int, scaling: str = HAT
    ) -> "Condenser":
        return cls(
            v=beta_condensation_vector(beta, lam),
            p=p,
            scaling=scaling,
            flavor=BETA_FLAVOR,
            beta=beta,
        )

    # -- geometry ----------------------------------------------------------

    @property
    def lam(self) -> int:
        return self.v.shape[0]

    @property
    def m(self) -> int:
        return self.p * self.lam

    @property
    def gamma(self) -> float:
        """|v|_1 / |v|_2 (enters the probability bounds downstream)."""
        return float(np.sum(np.abs(self.v)) / np.linalg.norm(self.v))

    @property
    def scale_factor(self) -> float:
        if self.scaling == RAW:
            return 1.0
        base = 1.0 / (np.linalg.norm(self.v) * math.sqrt(self.p))
        return base * (9.0 / 8.0) if self.scaling == TILDE else base

    def with_scaling(self, scaling: str) -> "Condenser":
        return Condenser(
            v=self.v,
            p=self.p,
            scaling=scaling,
            flavor=self.flavor,
            order=self.order,
            lambda_tilde=self.lambda_tilde,
            beta=self.beta,
        )

    # -- action ------------------------------------------------------------

    def apply(self, q) -> np.ndarray:
        """Blockwise dot with v (scaled); maps length m to length p."""
        q = np.asarray(q, dtype=np.float64)
        if q.shape[-1] != self.m:
            raise ValueError(f"dimension mismatch: expected {self.m}, got {q.shape[-1]}")
        blocks = q.reshape(q.shape[:-1] + (self.p, self.lam))
        return self.scale_factor * (blocks @ self.v)

    def adjoint(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        if w.shape[-1] != self.p:
            raise ValueError(f"dimension mismatch: expected {self.p}, got {w.shape[-1]}")
        out = w[..., :, None] * self.v
        return self.scale_factor * out.reshape(w.shape[:-1] + (self.m,))

    def eta(self, delta: float) -> float:
        if self.flavor == SD_FLAVOR:
            return eta_bound(SD_FLAVOR, self.order, self.lam, delta)
        return eta_bound(BETA_FLAVOR, self.beta, self.lam, delta)


def condense(c: Condenser, q) -> np.ndarray:
    return c.apply(q)


def pseudo_metric(c: Condenser, q, q_other) -> float:
    """Distance between codes: the 2-norm of the condensed difference."""
    q = np.asarray(q, dtype=np.float64)
    q_other = np.asarray(q_other, dtype=np.float64)
    if q.shape != q_other.shape:
        raise ValueError("codes must have identical shapes")
    return float(np.linalg.norm(c.apply(q - q_other), axis=-1))


def vdr_row_l1_norms(c: Condenser, m: int) -> np.ndarray:
    """Row l1 norms of the (raw) product V D^r at size m.

    Oracle quantity: each row sum is analytically at most
    ``2^r + r * 2^(3r-2) <= r * 2^(3r-1)``.  Rows are formed by applying
    the forward difference r times to the rows of V, so no m x m matrix
    is ever materialized; still refuses m beyond 2^15.
    """
    if c.flavor != SD_FLAVOR:
        raise ValueError("row-norm oracle applies to the Sigma-Delta flavor only")
    if m > _MAX_ORACLE_M:
        raise ValueError(f"oracle refuses m={m} > {_MAX_ORACLE_M}")
    if m % c.lam != 0:
        raise ValueError(f"m={m} is not a multiple of lam={c.lam}")
    p_eff = m // c.lam
    rows = np.zeros((p_eff, m))
    for j in range(p_eff):
        rows[j, j * c.lam : (j + 1) * c.lam] = c.v
    for _ in range(c.order):
        shifted = np.zeros_like(rows)
        shifted[:, :-1] = rows[:, 1:]
        rows = rows - shifted
    return np.abs(rows).sum(axis=1)


def eta_bound(flavor: str, r_or_beta: float, lam: int, delta: float) -> float:
    """Analytic bound on the condensed quantization error (hat scaling).

    Sigma-Delta: ``(8r)^(r+1) * lam^(-r + 1/2) * delta``;
    beta scheme:  ``delta * beta^(-lam + 1)``.
    """
    if lam < 1:
        raise ValueError("lam must be >= 1")
    if flavor == SD_FLAVOR:
        r = int(r_or_beta)
        if r < 1:
            raise ValueError("order must be >= 1")
        return (8.0 * r) ** (r + 1) * lam ** (-r + 0.5) * delta
    if flavor == BETA_FLAVOR:
        beta = float(r_or_beta)
        if not beta > 1:
            raise ValueError("beta must exceed 1")
        return delta * beta ** (-(lam - 1))
    raise ValueError(f"unknown flavor {flavor!r}")


def condenser_for_scheme(scheme: Scheme, lam: int, p: int, scaling: str) -> Condenser:
    """Condenser matching a quantization scheme at block length lam."""
    if isinstance(scheme, SigmaDelta):
        return Condenser.sigma_delta(r=scheme.r, p=p, lam=lam, scaling=scaling)
    if isinstance(scheme, Beta):
        return Condenser.beta_scheme(beta=scheme.beta, lam=lam, p=p, scaling=scaling)
    raise ValueError(
        "condensation is defined for the Sigma-Delta and beta schemes only"
    )
