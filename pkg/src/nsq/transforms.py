"""Structured random measurement ensembles with O(n log n) apply and adjoint.

Two ensemble families are provided:

* bounded orthogonal rows sampled (with replacement) from a fast base
  transform -- either the unnormalized +-1 Hadamard matrix or a real
  Hartley-type base scaled so every entry has magnitude at most one;
* partial circulant rows: a random +-1 generator vector, a distinct row
  subset Omega, matvec done by FFT circular convolution.

Every row of the sampled operator additionally carries an independent
random sign.  Ensembles are immutable after construction; ``apply`` and
``apply_adjoint`` are pure and safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

BOE_HADAMARD = "boe-hadamard"
BOE_DFT = "boe-dft"
PCE = "pce"
ENSEMBLE_KINDS = (BOE_HADAMARD, BOE_DFT, PCE)

# materialize() guard: dense matrices beyond this are never needed here
_MAX_DENSE_N = 4096


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def fwht(x, inplace: bool = False) -> np.ndarray:
    """Fast Walsh-Hadamard transform along the last axis.

    Computes ``H x`` for the unnormalized Sylvester-ordered +-1 Hadamard
    matrix, so ``fwht(fwht(x)) == n * x``.  Runs in O(n log n) with
    vectorized butterflies; with ``inplace=True`` a C-contiguous float64
    array is transformed in place.
    """
    src = np.asarray(x)
    if src.ndim == 0:
        raise ValueError("fwht expects at least a 1-d array")
    n = src.shape[-1]
    if not _is_pow2(n):
        raise ValueError(f"fwht length must be a power of two, got {n}")
    if (
        inplace
        and isinstance(x, np.ndarray)
        and x.dtype == np.float64
        and x.flags.c_contiguous
        and x.flags.writeable
    ):
        a = x
    else:
        a = np.array(src, dtype=np.float64, order="C")
    flat = a.reshape(-1, n)
    h = 1
    while h < n:
        blocks = flat.reshape(flat.shape[0], n // (2 * h), 2, h)
        s = blocks[:, :, 0, :] + blocks[:, :, 1, :]
        d = blocks[:, :, 0, :] - blocks[:, :, 1, :]
        blocks[:, :, 0, :] = s
        blocks[:, :, 1, :] = d
        h *= 2
    return a


def circular_convolve(z, x) -> np.ndarray:
    """Circular convolution ``(z * x)_i = sum_j z_j x_{(i-j) mod n}``.

    ``z`` is a 1-d kernel; ``x`` may carry leading batch axes.  Computed
    via the FFT in O(n log n).
    """
    z = np.asarray(z, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if z.ndim != 1:
        raise ValueError("convolution kernel must be 1-d")
    n = z.shape[0]
    if x.shape[-1] != n:
        raise ValueError(f"length mismatch: kernel {n}, signal {x.shape[-1]}")
    return np.fft.irfft(np.fft.rfft(x) * np.fft.rfft(z), n)


def _hartley(x) -> np.ndarray:
    # cas-transform: W_{kt} = cos(2 pi k t / n) + sin(2 pi k t / n); W = W^T, W W^T = n I
    f = np.fft.fft(np.asarray(x, dtype=np.float64))
    return f.real - f.imag


@dataclass(frozen=True)
class SignVector:
    """A +-1 vector regenerable bit-identically from its seed."""

    entries: np.ndarray
    seed: int

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=np.float64)
        if e.ndim != 1:
            raise ValueError("sign vector must be 1-d")
        if not np.all(np.abs(e) == 1.0):
            raise ValueError("sign vector entries must all be +1 or -1")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    def __len__(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def sample(cls, n: int, seed: int) -> "SignVector":
        if n < 1:
            raise ValueError("sign vector length must be positive")
        rng = np.random.default_rng(seed)
        entries = rng.integers(0, 2, size=n).astype(np.float64) * 2.0 - 1.0
        return cls(entries=entries, seed=int(seed))

    def apply(self, x) -> np.ndarray:
        """Entrywise product along the last axis (an involution)."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != len(self):
            raise ValueError(
                f"dimension mismatch: signs {len(self)}, input {x.shape[-1]}"
            )
        return x * self.entries


def apply_column_signs(d: SignVector, x) -> np.ndarray:
    return d.apply(x)


@dataclass(frozen=True)
class StructuredEnsemble:
    """A sampled m x n measurement operator with fast apply/adjoint.

    ``row_index`` holds base-row ids (sampled with replacement for the
    orthogonal bases) or the distinct subset Omega (circulant case);
    ``row_signs`` carries the per-row random signs; ``generator`` is the
    +-1 circulant generator (circulant case only).
    """

    kind: str
    n: int
    m: int
    row_index: np.ndarray
    row_signs: SignVector
    generator: Optional[SignVector]
    seed: int

    def __post_init__(self):
        if self.kind not in ENSEMBLE_KINDS:
            raise ValueError(f"unknown ensemble kind {self.kind!r}")
        idx = np.asarray(self.row_index, dtype=np.int64)
        if idx.shape != (self.m,):
            raise ValueError("row_index must have length m")
        if idx.min(initial=0) < 0 or (self.m and idx.max() >= self.n):
            raise ValueError("row_index entries must lie in [0, n)")
        if len(self.row_signs) != self.m:
            raise ValueError("row_signs must have length m")
        if self.kind == PCE:
            if self.generator is None or len(self.generator) != self.n:
                raise ValueError("circulant ensemble needs a length-n generator")
            if len(np.unique(idx)) != self.m:
                raise ValueError("circulant row subset must be distinct")
        idx.setflags(write=False)
        object.__setattr__(self, "row_index", idx)

    # -- forward ---------------------------------------------------------

    def _base_apply(self, x: np.ndarray) -> np.ndarray:
        if self.kind == BOE_HADAMARD:
            return fwht(x)
        if self.kind == BOE_DFT:
            return _hartley(x) / np.sqrt(2.0)
        return circular_convolve(self.generator.entries, x)

    def apply(self, x) -> np.ndarray:
        """Compute ``Phi x`` along the last axis; O(n log n) per signal."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n:
            raise ValueError(f"dimension mismatch: expected {self.n}, got {x.shape[-1]}")
        t = self._base_apply(x)
        return t[..., self.row_index] * self.row_signs.entries

    # -- adjoint ---------------------------------------------------------

    def _base_apply_t(self, z: np.ndarray) -> np.ndarray:
        if self.kind == BOE_HADAMARD:
            return fwht(z)  # Hadamard base is symmetric
        if self.kind == BOE_DFT:
            return _hartley(z) / np.sqrt(2.0)  # cas base is symmetric
        f = np.fft.fft(z) * np.conj(np.fft.fft(self.generator.entries))
        return np.fft.ifft(f).real

    def apply_adjoint(self, y) -> np.ndarray:
        """Compute ``Phi^T y`` along the last axis; O(n log n) per signal."""
        y = np.asarray(y, dtype=np.float64)
        if y.shape[-1] != self.m:
            raise ValueError(f"dimension mismatch: expected {self.m}, got {y.shape[-1]}")
        sy = y * self.row_signs.entries
        if sy.ndim == 1:
            z = np.bincount(self.row_index, weights=sy, minlength=self.n)
        else:
            flat = sy.reshape(-1, self.m)
            batch = flat.shape[0]
            offsets = np.arange(batch, dtype=np.int64)[:, None] * self.n
            z = np.bincount(
                (self.row_index[None, :] + offsets).ravel(),
                weights=flat.ravel(),
                minlength=batch * self.n,
            ).reshape(sy.shape[:-1] + (self.n,))
        return self._base_apply_t(z)

    def materialize(self) -> np.ndarray:
        """Dense m x n matrix, row by row; for oracles and small diagnostics."""
        if self.n > _MAX_DENSE_N:
            raise ValueError(f"refusing to materialize n={self.n} > {_MAX_DENSE_N}")
        return self.apply(np.eye(self.n)).T


def sample_ensemble(
    kind: str,
    n: int,
    m: int,
    seed: int,
    omega: Optional[Sequence[int]] = None,
) -> StructuredEnsemble:
    """Draw an ensemble: base rows uniform with replacement (orthogonal
    bases) or a uniform distinct subset Omega (circulant), plus
    independent +-1 row signs.  Identical seeds give identical ensembles.

    ``omega`` optionally fixes the circulant row subset explicitly.
    """
    if kind not in ENSEMBLE_KINDS:
        raise ValueError(f"unknown ensemble kind {kind!r}")
    if n < 1 or m < 1:
        raise ValueError("dimensions must be positive")
    if kind == BOE_HADAMARD and not _is_pow2(n):
        raise ValueError(f"Hadamard base needs n a power of two, got {n}")
    if kind == PCE:
        if not _is_pow2(n):
            raise ValueError(f"circulant ensemble needs n a power of two, got {n}")
        if m > n:
            raise ValueError(f"circulant ensemble needs m <= n, got m={m}, n={n}")

    children = np.random.SeedSequence(seed).spawn(3)
    rows_rng = np.random.default_rng(children[0])
    gen_seed = int(children[1].generate_state(1, dtype=np.uint64)[0])
    sign_seed = int(children[2].generate_state(1, dtype=np.uint64)[0])

    generator = None
    if kind == PCE:
        if omega is not None:
            row_index = np.sort(np.asarray(omega, dtype=np.int64))
            if row_index.shape != (m,):
                raise ValueError("explicit Omega must have length m")
        else:
            row_index = np.sort(rows_rng.choice(n, size=m, replace=False))
        generator = SignVector.sample(n, gen_seed)
    else:
        row_index = rows_rng.integers(0, n, size=m).astype(np.int64)

    return StructuredEnsemble(
        kind=kind,
        n=n,
        m=m,
        row_index=row_index,
        row_signs=SignVector.sample(m, sign_seed),
        generator=generator,
        seed=int(seed),
    )
