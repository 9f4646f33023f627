"""Noise-shaping quantizers: memoryless rounding, Sigma-Delta of any
order, and the blocked distributed (beta) scheme.

Every quantizer returns the code ``q`` together with the internal state
vector ``u`` satisfying the exact relation ``y - q = H u``, where ``H``
is the scheme's noise transfer operator (identity for memoryless
rounding, the r-fold difference for Sigma-Delta, block-bidiagonal with
-beta subdiagonal for the beta scheme).  Stability -- ``|u|_inf <= delta``
for real inputs -- is certified whenever
``|H - I|_{inf->inf} + mu/delta <= 2L``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Union

import numpy as np


class StabilityWarning(UserWarning):
    """Input amplitude exceeds the certified stability range; the greedy
    recursion still runs, but the state bound is no longer guaranteed."""


@dataclass(frozen=True)
class Alphabet:
    """The 2L-level symmetric grid {a*delta : a odd, |a| <= 2L-1}."""

    L: int
    delta: float = 1.0

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("alphabet needs L >= 1")
        if not self.delta > 0:
            raise ValueError("alphabet spacing delta must be positive")

    @property
    def levels(self) -> np.ndarray:
        return self.delta * np.arange(-2 * self.L + 1, 2 * self.L, 2, dtype=np.float64)

    @property
    def max_level(self) -> float:
        return (2 * self.L - 1) * self.delta

    def nearest(self, w) -> np.ndarray:
        """Round to the nearest level, ties toward the positive side."""
        w = np.asarray(w, dtype=np.float64)
        idx = np.floor((w / self.delta + (2 * self.L - 1)) / 2 + 0.5)
        idx = np.clip(idx, 0, 2 * self.L - 1)
        return (2 * idx - (2 * self.L - 1)) * self.delta


@dataclass(frozen=True)
class MSQ:
    """Memoryless rounding; no feedback (H = I)."""

    @property
    def feedback_norm(self) -> float:
        return 0.0


@dataclass(frozen=True)
class SigmaDelta:
    """Order-r Sigma-Delta: H is the r-fold first-order difference."""

    r: int

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("Sigma-Delta order must be >= 1")

    @property
    def feedback_norm(self) -> float:
        return 2.0**self.r - 1.0

    @property
    def feedback_taps(self) -> np.ndarray:
        # w_s = y_s + sum_j taps[j-1] * u_{s-j}, from I - D^r
        r = self.r
        return np.array(
            [(-1.0) ** (j + 1) * math.comb(r, j) for j in range(1, r + 1)]
        )


@dataclass(frozen=True)
class Beta:
    """Distributed noise shaping: blocks of length lam, feedback beta."""

    beta: float
    lam: int

    def __post_init__(self):
        if not self.beta > 1:
            raise ValueError("beta must exceed 1")
        if self.lam < 1:
            raise ValueError("block length must be >= 1")

    @property
    def feedback_norm(self) -> float:
        return self.beta

    @property
    def feedback_taps(self) -> np.ndarray:
        return np.array([self.beta])


Scheme = Union[MSQ, SigmaDelta, Beta]


@dataclass(frozen=True)
class QuantizedCode:
    """Quantized output plus the state vector with ``y - q = H u``.

    ``mu`` records the observed input sup-norm.  Arrays may carry a
    leading batch axis when a batch of signals was quantized.
    """

    q: np.ndarray
    u: np.ndarray
    mu: float

    @property
    def state_sup(self) -> float:
        """Achieved |u|_inf (the stability certificate checks <= delta)."""
        return float(np.max(np.abs(self.u))) if self.u.size else 0.0


def stability_margin(scheme: Scheme, alphabet: Alphabet, mu: float) -> float:
    """``2L - |H - I|_{inf->inf} - mu/delta``; >= 0 certifies |u|_inf <= delta."""
    return 2 * alphabet.L - scheme.feedback_norm - mu / alphabet.delta


def quantize_msq(y, alphabet: Alphabet) -> np.ndarray:
    """Round each entry to the nearest level (positive tie-break)."""
    return alphabet.nearest(y)


def _greedy(y: np.ndarray, taps: np.ndarray, alphabet: Alphabet, block: int | None):
    """Run the greedy noise-shaping recursion on a (batch, m) array.

    ``taps[j-1]`` multiplies ``u_{s-j}``; with ``block`` set, the state
    resets at every block boundary (taps never reach across blocks).
    """
    batch, m = y.shape
    q = np.empty_like(y)
    u = np.empty_like(y)
    depth = len(taps)
    for s in range(m):
        w = y[:, s].copy()
        avail = (s % block) if block else s
        for j in range(1, min(depth, avail) + 1):
            w += taps[j - 1] * u[:, s - j]
        qs = alphabet.nearest(w)
        q[:, s] = qs
        u[:, s] = w - qs
    return q, u


def quantize_noise_shaping(y, scheme: Scheme, alphabet: Alphabet) -> QuantizedCode:
    """Greedy quantizer for any supported scheme.

    Accepts a single signal ``(m,)`` or a batch ``(batch, m)``.  If the
    stability precondition fails, a :class:`StabilityWarning` is issued
    and the recursion proceeds anyway.
    """
    y_in = np.asarray(y, dtype=np.float64)
    if y_in.ndim not in (1, 2):
        raise ValueError("input must be a vector or a batch of vectors")
    single = y_in.ndim == 1
    y = np.atleast_2d(y_in)
    m = y.shape[1]
    if m == 0:
        empty = np.zeros_like(y[0] if single else y)
        return QuantizedCode(q=empty, u=empty.copy(), mu=0.0)

    mu = float(np.max(np.abs(y)))
    # small allowance so exact-boundary schemes do not warn on rounding noise
    if stability_margin(scheme, alphabet, mu) < -1e-12 * max(1, 2 * alphabet.L):
        warnings.warn(
            f"input sup-norm {mu:.6g} exceeds the certified stability range "
            f"for this scheme/alphabet; state bound not guaranteed",
            StabilityWarning,
            stacklevel=2,
        )

    if isinstance(scheme, MSQ):
        q = alphabet.nearest(y)
        u = y - q
    elif isinstance(scheme, SigmaDelta):
        q, u = _greedy(y, scheme.feedback_taps, alphabet, block=None)
    elif isinstance(scheme, Beta):
        if m % scheme.lam != 0:
            raise ValueError(
                f"signal length {m} is not a multiple of block length {scheme.lam}"
            )
        q, u = _greedy(y, scheme.feedback_taps, alphabet, block=scheme.lam)
    else:
        raise ValueError(f"unknown quantization scheme {scheme!r}")

    if single:
        q, u = q[0], u[0]
    return QuantizedCode(q=q, u=u, mu=mu)


def quantize_sigma_delta(y, r: int, alphabet: Alphabet) -> QuantizedCode:
    """Order-r Sigma-Delta over the whole length (no blocks)."""
    return quantize_noise_shaping(y, SigmaDelta(r=r), alphabet)


def quantize_beta(y, beta: float, lam: int, alphabet: Alphabet) -> QuantizedCode:
    """Blocked beta scheme; the signal length must be a multiple of lam."""
    return quantize_noise_shaping(y, Beta(beta=beta, lam=lam), alphabet)


def noise_transfer_matrix(scheme: Scheme, m: int) -> np.ndarray:
    """Materialize the m x m noise transfer operator H (for residual checks)."""
    if m < 0:
        raise ValueError("length must be nonnegative")
    if isinstance(scheme, MSQ):
        return np.eye(m)
    if isinstance(scheme, SigmaDelta):
        h = np.zeros((m, m))
        for j in range(scheme.r + 1):
            coef = (-1.0) ** j * math.comb(scheme.r, j)
            idx = np.arange(j, m)
            h[idx, idx - j] = coef
        return h
    if isinstance(scheme, Beta):
        if m % scheme.lam != 0:
            raise ValueError(
                f"length {m} is not a multiple of block length {scheme.lam}"
            )
        h = np.eye(m)
        sub = np.arange(1, m)
        inside = sub % scheme.lam != 0  # no feedback across block boundaries
        h[sub[inside], sub[inside] - 1] = -scheme.beta
        return h
    raise ValueError(f"unknown quantization scheme {scheme!r}")


def coarse_sd_state_bound(
    r: int, L: int, delta: float, mu: float, constant_scale: float = 1.0
) -> float:
    """State bound of the coarse stable Sigma-Delta family of order r.

    Evaluates ``C * delta * (ceil(pi^2 / acosh(2L - mu/delta)^2) * (e/pi) * r)^r``.
    The leading constant is not calibrated; it is exposed as
    ``constant_scale`` (default 1).  Diagnostic only -- the implemented
    quantizer is the greedy recursion above.
    """
    if r < 1:
        raise ValueError("order must be >= 1")
    arg = 2 * L - mu / delta
    if arg <= 1:
        raise ValueError("requires 2L - mu/delta > 1")
    inner = math.ceil(math.pi**2 / math.acosh(arg) ** 2) * (math.e / math.pi) * r
    return constant_scale * delta * inner**r


def scheme_from_string(text: str) -> Scheme:
    """Parse a scheme spec: ``msq``, ``sd:r=2`` (or ``sd:2``), ``beta:1.25``
    (or ``beta:10/9``).  Beta block length is taken from the condenser
    at use sites, so ``Beta.lam`` is set to 1 here and overridden there.
    """
    text = text.strip().lower()
    if text == "msq":
        return MSQ()
    if text.startswith("sd:"):
        body = text[3:]
        if body.startswith("r="):
            body = body[2:]
        try:
            return SigmaDelta(r=int(body))
        except ValueError as exc:
            raise ValueError(f"bad Sigma-Delta spec {text!r}") from exc
    if text.startswith("beta:"):
        body = text[5:]
        if body.startswith("b="):
            body = body[2:]
        try:
            if "/" in body:
                num, den = body.split("/")
                value = float(num) / float(den)
            else:
                value = float(body)
        except ValueError as exc:
            raise ValueError(f"bad beta spec {text!r}") from exc
        return Beta(beta=value, lam=1)
    raise ValueError(f"unknown scheme spec {text!r}")


def scheme_label(scheme: Scheme) -> str:
    if isinstance(scheme, MSQ):
        return "msq"
    if isinstance(scheme, SigmaDelta):
        return f"sd:r={scheme.r}"
    if isinstance(scheme, Beta):
        return f"beta:{scheme.beta:.12g}"
    raise ValueError(f"unknown quantization scheme {scheme!r}")
