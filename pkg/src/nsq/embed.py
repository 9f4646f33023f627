"""Fast binary embeddings: quantize a scaled structured projection with
randomized column signs, then compare codes under the condensed
pseudo-metric.

The pipeline embeds points of the unit l1 ball (default) into the
2L-level cube; an l2-ball mode rescales the alphabet by
``sqrt((1 + alpha) m)`` instead.  Distortion reports decompose the
error into the multiplicative part (shared with the unquantized linear
control) and the additive part contributed by quantization.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .condense import TILDE, Condenser, condenser_for_scheme, pseudo_metric
from .quantize import (
    Alphabet,
    Beta,
    MSQ,
    Scheme,
    SigmaDelta,
    quantize_noise_shaping,
)
from .transforms import SignVector, StructuredEnsemble, sample_ensemble

CODE_MAGIC = b"NSQC"
_HEADER = struct.Struct("<4sIHIBx")  # magic, m, lam, p, scheme tag, pad = 16 bytes

SCHEME_TAGS = {"msq": 0, "sd": 1, "beta": 2}
_TAG_NAMES = {v: k for k, v in SCHEME_TAGS.items()}

L1_BALL = "ell1-ball"
L2_BALL = "ell2-ball"


@dataclass(frozen=True)
class EmbeddingPipeline:
    """Everything needed to embed points and compare their codes."""

    ensemble: StructuredEnsemble
    column_signs: SignVector
    scheme: Scheme
    alphabet: Alphabet
    condenser: Condenser
    input_scale: float = 8.0 / 9.0
    domain_mode: str = L1_BALL
    seed: int = 0

    def __post_init__(self):
        if self.condenser.m != self.ensemble.m:
            raise ValueError(
                f"condenser covers m={self.condenser.m} but ensemble has m={self.ensemble.m}"
            )
        if self.condenser.scaling != TILDE:
            raise ValueError("embedding pipelines use the tilde-scaled condenser")
        if len(self.column_signs) != self.ensemble.n:
            raise ValueError("column sign length must equal the ambient dimension")
        if self.domain_mode not in (L1_BALL, L2_BALL):
            raise ValueError(f"unknown domain mode {self.domain_mode!r}")
        if isinstance(self.scheme, Beta) and self.scheme.lam != self.condenser.lam:
            raise ValueError("beta block length must match the condenser")

    @classmethod
    def create(
        cls,
        n: int,
        m: int,
        p: int,
        scheme: Scheme,
        kind: str = "boe-hadamard",
        seed: int = 0,
        L: int = 1,
        delta: float = 1.0,
        input_scale: float = 8.0 / 9.0,
        domain_mode: str = L1_BALL,
        l2_alpha: float = 0.25,
    ) -> "EmbeddingPipeline":
        """Sample an ensemble and column signs from ``seed`` and assemble
        the matching tilde-scaled condenser.  ``m`` must equal ``p * lam``
        for an integer lam reachable by the scheme.
        """
        if m % p != 0:
            raise ValueError(f"p={p} must divide m={m}")
        lam = m // p
        if isinstance(scheme, Beta):
            scheme = Beta(beta=scheme.beta, lam=lam)
        condenser = condenser_for_scheme(scheme, lam=lam, p=p, scaling=TILDE)
        children = np.random.SeedSequence(seed).spawn(2)
        ensemble = sample_ensemble(
            kind, n, m, int(children[0].generate_state(1, dtype=np.uint64)[0])
        )
        signs = SignVector.sample(
            n, int(children[1].generate_state(1, dtype=np.uint64)[0])
        )
        if domain_mode == L2_BALL:
            delta = delta * math.sqrt((1.0 + l2_alpha) * m)
        return cls(
            ensemble=ensemble,
            column_signs=signs,
            scheme=scheme,
            alphabet=Alphabet(L=L, delta=delta),
            condenser=condenser,
            input_scale=input_scale,
            domain_mode=domain_mode,
            seed=int(seed),
        )

    def project(self, x) -> np.ndarray:
        """The unquantized linear stage: ``input_scale * Phi D x``."""
        return self.input_scale * self.ensemble.apply(self.column_signs.apply(x))


def embed_point(pl: EmbeddingPipeline, x) -> np.ndarray:
    """Quantize the scaled projection of ``x`` (or a batch of points).

    In l1-ball mode a warning is attached when a point leaves the unit
    l1 ball, since the stability certificate assumes it.
    """
    x = np.asarray(x, dtype=np.float64)
    if pl.domain_mode == L1_BALL:
        l1 = np.abs(x).sum(axis=-1)
        if np.any(l1 > 1.0 + 1e-9):
            warnings.warn(
                f"point leaves the unit l1 ball (|x|_1 up to {float(np.max(l1)):.6g}); "
                "embedding proceeds but the distortion guarantee weakens",
                stacklevel=2,
            )
    return quantize_noise_shaping(pl.project(x), pl.scheme, pl.alphabet).q


def code_distance(pl: EmbeddingPipeline, c1, c2) -> float:
    return pseudo_metric(pl.condenser, c1, c2)


@dataclass(frozen=True)
class DistortionReport:
    """Pairwise distances and the residual decomposition.

    ``mult_residual`` compares the unquantized linear control to the true
    distance (the Johnson-Lindenstrauss part); ``add_residual`` compares
    the embedded distance to the linear control (the quantization part).
    The fitted pair ``(alpha_fit, eta_fit)`` dominates every recorded
    pair: ``|d_embedded - d_true| <= alpha_fit * d_true + eta_fit``.
    """

    d_true: np.ndarray
    d_embedded: np.ndarray
    d_linear: np.ndarray
    mult_residual: np.ndarray
    add_residual: np.ndarray
    quantization_error: np.ndarray
    quantization_bound: float
    alpha_assumed: float
    eta_needed: float
    alpha_fit: float
    eta_fit: float
    max_violation: float


def _fit_alpha_eta(d: np.ndarray, resid: np.ndarray) -> tuple[float, float]:
    """Nonnegative least-squares fit resid ~ alpha * d + eta, then lift eta
    so the bound dominates every pair."""
    a = np.column_stack([d, np.ones_like(d)])
    sol, *_ = np.linalg.lstsq(a, resid, rcond=None)
    alpha, eta = float(sol[0]), float(sol[1])
    if alpha < 0:
        alpha = 0.0
        eta = float(np.mean(resid))
    if eta < 0:
        eta = 0.0
        denom = float(d @ d)
        alpha = float(d @ resid / denom) if denom > 0 else 0.0
        alpha = max(alpha, 0.0)
    eta += max(0.0, float(np.max(resid - alpha * d - eta)))
    return alpha, eta


def evaluate_embedding(
    points, pl: EmbeddingPipeline, alpha: float = 0.5
) -> DistortionReport:
    """Embed every point, compare all pairs, and fit the distortion model.

    ``alpha`` is the assumed multiplicative distortion; ``eta_needed`` is
    the smallest additive floor making ``alpha * d + eta`` dominate all
    pairs at that alpha.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.shape[0] < 2:
        raise ValueError("need at least two points to evaluate an embedding")

    codes = embed_point(pl, pts)
    linear = pl.project(pts)
    cond_codes = pl.condenser.apply(codes)
    cond_linear = pl.condenser.apply(linear)

    qerr = np.linalg.norm(cond_linear - cond_codes, axis=-1)
    qbound = (9.0 / 8.0) * pl.condenser.eta(pl.alphabet.delta)

    i, j = np.triu_indices(pts.shape[0], k=1)
    d_true = np.linalg.norm(pts[i] - pts[j], axis=-1)
    d_emb = np.linalg.norm(cond_codes[i] - cond_codes[j], axis=-1)
    d_lin = np.linalg.norm(cond_linear[i] - cond_linear[j], axis=-1)

    with np.errstate(divide="ignore", invalid="ignore"):
        mult = np.where(d_true > 0, np.abs(d_lin - d_true) / d_true, 0.0)
    add = np.abs(d_emb - d_lin)

    resid = np.abs(d_emb - d_true)
    eta_needed = float(np.max(resid - alpha * d_true))
    alpha_fit, eta_fit = _fit_alpha_eta(d_true, resid)
    max_violation = float(np.max(resid - alpha_fit * d_true - eta_fit))

    return DistortionReport(
        d_true=d_true,
        d_embedded=d_emb,
        d_linear=d_lin,
        mult_residual=mult,
        add_residual=add,
        quantization_error=qerr,
        quantization_bound=float(qbound),
        alpha_assumed=float(alpha),
        eta_needed=eta_needed,
        alpha_fit=alpha_fit,
        eta_fit=eta_fit,
        max_violation=max_violation,
    )


@dataclass(frozen=True)
class WidthEstimate:
    width: float
    radius: float
    stderr: float


def gaussian_width_mc(points, samples: int, seed: int = 0) -> WidthEstimate:
    """Monte Carlo Gaussian mean width of a finite point set.

    Averages ``max_x <x, g>`` over ``samples`` standard normal draws and
    also reports the set radius (largest point norm).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.shape[0] < 1:
        raise ValueError("need at least one point")
    if samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    sups = np.empty(samples)
    chunk = max(1, min(samples, 1 << 22) // max(1, pts.shape[1]))
    done = 0
    while done < samples:
        take = min(chunk, samples - done)
        g = rng.standard_normal((take, pts.shape[1]))
        sups[done : done + take] = (g @ pts.T).max(axis=1)
        done += take
    radius = float(np.max(np.linalg.norm(pts, axis=1)))
    return WidthEstimate(
        width=float(np.mean(sups)),
        radius=radius,
        stderr=float(np.std(sups) / math.sqrt(samples)),
    )


def recommended_p(m: int, scheme: Scheme) -> int:
    """Divisor of m nearest to ``m / ceil(log^2 m)`` (Sigma-Delta) or
    ``m / ceil(log m)`` (beta scheme), natural logs."""
    if m < 4:
        raise ValueError("need m >= 4")
    if isinstance(scheme, SigmaDelta):
        target = m / math.ceil(math.log(m) ** 2)
    elif isinstance(scheme, Beta):
        target = m / math.ceil(math.log(m))
    else:
        raise ValueError("p selection is defined for the noise-shaping schemes")
    divisors = [d for d in range(1, m + 1) if m % d == 0]
    return min(divisors, key=lambda d: (abs(d - target), d))


def sample_l1_ball_points(
    n: int, count: int, seed: int, support: Optional[int] = None
) -> np.ndarray:
    """Random points on the unit l1 sphere with sparse random support."""
    if count < 1 or n < 1:
        raise ValueError("need positive dimensions")
    rng = np.random.default_rng(seed)
    k = min(support or min(16, n), n)
    pts = np.zeros((count, n))
    for row in range(count):
        idx = rng.choice(n, size=k, replace=False)
        mags = rng.dirichlet(np.ones(k))
        signs = rng.integers(0, 2, size=k) * 2.0 - 1.0
        pts[row, idx] = mags * signs
    return pts


def _scheme_tag(scheme: Scheme) -> int:
    if isinstance(scheme, MSQ):
        return SCHEME_TAGS["msq"]
    if isinstance(scheme, SigmaDelta):
        return SCHEME_TAGS["sd"]
    if isinstance(scheme, Beta):
        return SCHEME_TAGS["beta"]
    raise ValueError(f"unknown quantization scheme {scheme!r}")


def pack_code(q, lam: int, p: int, scheme: Scheme | int) -> bytes:
    """Serialize a +-1 code: 16-byte little-endian header (magic, m, lam,
    p, scheme tag) followed by the sign bits packed LSB-first."""
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 1:
        raise ValueError("pack one code at a time")
    if not np.all(np.abs(q) == 1.0):
        raise ValueError("packed codes must take values in {-1, +1}")
    m = q.shape[0]
    if m > 0xFFFFFFFF or lam > 0xFFFF or p > 0xFFFFFFFF:
        raise ValueError("dimensions exceed the header field widths")
    tag = scheme if isinstance(scheme, int) else _scheme_tag(scheme)
    header = _HEADER.pack(CODE_MAGIC, m, lam, p, tag)
    bits = np.packbits((q > 0).astype(np.uint8), bitorder="little")
    return header + bits.tobytes()


def unpack_code(blob: bytes) -> tuple[np.ndarray, dict]:
    """Inverse of :func:`pack_code`; returns the +-1 code and the header."""
    if len(blob) < _HEADER.size:
        raise ValueError("code blob shorter than its header")
    magic, m, lam, p, tag = _HEADER.unpack(blob[: _HEADER.size])
    if magic != CODE_MAGIC:
        raise ValueError("bad magic; not a packed code")
    need = (m + 7) // 8
    body = np.frombuffer(blob[_HEADER.size : _HEADER.size + need], dtype=np.uint8)
    if body.size != need:
        raise ValueError("truncated code blob")
    bits = np.unpackbits(body, count=m, bitorder="little")
    q = bits.astype(np.float64) * 2.0 - 1.0
    meta = {"m": m, "lam": lam, "p": p, "scheme_tag": tag, "scheme": _TAG_NAMES.get(tag)}
    return q, meta


def write_code(path, q, lam: int, p: int, scheme: Scheme | int) -> None:
    with open(path, "wb") as fh:
        fh.write(pack_code(q, lam, p, scheme))


def read_code(path) -> tuple[np.ndarray, dict]:
    with open(path, "rb") as fh:
        return unpack_code(fh.read())
