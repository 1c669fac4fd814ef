"""Wigner sampling, the deformed matrix H = lambda V + W and a dense eigensolver.

The eigensolver is three stages: Householder reduction to a real tridiagonal,
implicit QL for all eigenvalues, and inverse iteration for the few top
eigenvectors, which are mapped back through the stored reflectors.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels
from .errors import ClusterWarning, DimensionMismatch, NoConvergence, OrderingViolated

__all__ = [
    "WignerMatrix",
    "DeformedMatrix",
    "Tridiagonal",
    "SpectralData",
    "sample_wigner",
    "assemble",
    "tridiagonalize",
    "eigenvalues",
    "sturm_eigenvalues",
    "top_eigenvectors",
    "spectral_decompose",
]

SYMMETRIES = ("real", "complex")
MAX_QL_SWEEPS = 50
INVERSE_ITERATIONS = 3
SHIFT_PERTURBATION = 1e-12
CLUSTER_GAP = 1e-10


def _packed_len(n: int) -> int:
    return n * (n + 1) // 2


@dataclass(frozen=True)
class WignerMatrix:
    """Hermitian Wigner matrix stored as its packed lower triangle (row major).

    For the complex class the packed array is complex128, i.e. interleaved
    real/imaginary pairs in memory.
    """

    n: int
    symmetry: str
    entries: np.ndarray

    def __post_init__(self):
        if self.symmetry not in SYMMETRIES:
            raise ValueError(f"symmetry must be one of {SYMMETRIES}, got {self.symmetry!r}")
        if self.entries.shape != (_packed_len(self.n),):
            raise DimensionMismatch(
                f"packed triangle of size {self.entries.shape} does not fit n={self.n}"
            )

    @property
    def is_complex(self) -> bool:
        return self.symmetry == "complex"

    def dense(self) -> np.ndarray:
        rows, cols = np.tril_indices(self.n)
        out = np.zeros((self.n, self.n), dtype=self.entries.dtype)
        out[rows, cols] = self.entries
        out[cols, rows] = self.entries.conj()
        return out

    def diagonal(self) -> np.ndarray:
        idx = np.arange(self.n)
        return self.entries[idx * (idx + 1) // 2 + idx].real.copy()


def sample_wigner(n: int, symmetry: str, rng: np.random.Generator) -> WignerMatrix:
    """Gaussian Wigner matrix with E|w_ij|^2 = 1/N off the diagonal.

    Real case: diagonal variance 2/N.  Complex case: real and imaginary parts
    independent with variance 1/(2N) each, real diagonal with variance 1/N.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if symmetry not in SYMMETRIES:
        raise ValueError(f"symmetry must be one of {SYMMETRIES}, got {symmetry!r}")
    size = _packed_len(n)
    idx = np.arange(n)
    diag_pos = idx * (idx + 1) // 2 + idx
    if symmetry == "real":
        g = rng.standard_normal(size) / np.sqrt(n)
        g[diag_pos] *= np.sqrt(2.0)
        return WignerMatrix(n, symmetry, g)
    parts = rng.standard_normal((2, size)) / np.sqrt(2.0 * n)
    g = parts[0] + 1j * parts[1]
    g[diag_pos] = parts[0, diag_pos] * np.sqrt(2.0)
    return WignerMatrix(n, symmetry, g)


@dataclass(frozen=True)
class DeformedMatrix:
    v: np.ndarray
    lam: float
    w: WignerMatrix

    @property
    def n(self) -> int:
        return self.w.n

    @cached_property
    def dense(self) -> np.ndarray:
        h = self.w.dense()
        h[np.diag_indices(self.n)] += self.lam * self.v
        h.setflags(write=False)
        return h

    def trace(self) -> float:
        return float(self.lam * self.v.sum() + self.w.diagonal().sum())

    def frobenius(self) -> float:
        return float(np.linalg.norm(self.dense))

    def minor(self, i: int) -> np.ndarray:
        """Dense H with row and column i removed (0-based)."""
        keep = np.delete(np.arange(self.n), i)
        return self.dense[np.ix_(keep, keep)]


def assemble(v, lam: float, w: WignerMatrix) -> DeformedMatrix:
    v = np.asarray(v, dtype=float)
    if v.shape != (w.n,):
        raise DimensionMismatch(f"potential has shape {v.shape}, matrix has n={w.n}")
    if np.any(np.diff(v) > 0):
        raise OrderingViolated("potential values must be sorted in descending order")
    v = v.copy()
    v.setflags(write=False)
    return DeformedMatrix(v, float(lam), w)


@dataclass(frozen=True)
class Tridiagonal:
    """Real symmetric tridiagonal form Q^* H Q = D T D^* with nonnegative offdiag.

    ``reflectors`` holds the Householder vectors column-wise (column k acts on
    rows k+1..), ``taus`` their scalings and ``phases`` the diagonal of D.
    """

    diag: np.ndarray
    offdiag: np.ndarray
    reflectors: np.ndarray | None = None
    taus: np.ndarray | None = None
    phases: np.ndarray | None = None
    scale: float = field(default=0.0)

    @property
    def n(self) -> int:
        return self.diag.shape[0]

    def back_transform(self, y: np.ndarray) -> np.ndarray:
        """Map tridiagonal-basis vectors (columns of y) to the original basis."""
        y = np.atleast_2d(np.asarray(y).T).T
        if self.reflectors is None:
            return y.astype(float)
        u = self.phases[:, None] * y
        refl = self.reflectors
        for k in range(self.n - 3, -1, -1):
            tau = self.taus[k]
            if tau == 0.0:
                continue
            vk = refl[k + 1:, k]
            u[k + 1:] -= tau * np.outer(vk, vk.conj() @ u[k + 1:])
        return u


def _as_dense(h) -> np.ndarray:
    return h.dense if isinstance(h, DeformedMatrix) else np.asarray(h)


def tridiagonalize(h) -> Tridiagonal:
    """Householder reduction of a DeformedMatrix (or a dense Hermitian array)."""
    a = _as_dense(h)
    n = a.shape[0]
    scale = float(np.linalg.norm(a))
    work = np.array(a, order="F", copy=True)
    if np.iscomplexobj(work):
        d, e, taus = _kernels.householder_complex(work)
    else:
        d, e, taus = _kernels.householder_real(work)
    mags = np.abs(e)
    phases = np.ones(n, dtype=work.dtype)
    for k in range(n - 1):
        phases[k + 1] = phases[k] * (e[k] / mags[k] if mags[k] > 0 else 1.0)
    return Tridiagonal(d, mags, work, taus, phases, scale)


def eigenvalues(t: Tridiagonal) -> np.ndarray:
    """All eigenvalues of the tridiagonal, descending."""
    if t.n == 0:
        return np.zeros(0)
    vals, ok = _kernels.tql_eigenvalues(
        np.ascontiguousarray(t.diag, dtype=float), np.ascontiguousarray(t.offdiag, dtype=float), MAX_QL_SWEEPS
    )
    if not ok:
        raise NoConvergence(f"QL iteration exceeded {MAX_QL_SWEEPS} sweeps", sweeps=MAX_QL_SWEEPS)
    return np.sort(vals)[::-1]


def _sturm_count(diag, offdiag, x) -> int:
    """Number of eigenvalues strictly below x."""
    count = 0
    q = diag[0] - x
    tiny = np.finfo(float).tiny
    for i in range(len(diag)):
        if i > 0:
            q = diag[i] - x - offdiag[i - 1] ** 2 / q
        if q == 0.0:
            q = -tiny
        if q < 0:
            count += 1
    return count


def sturm_eigenvalues(diag, offdiag, tol: float = 1e-14) -> np.ndarray:
    """Independent reference: bisection on the Sturm sequence count, descending."""
    diag = np.asarray(diag, dtype=float)
    offdiag = np.asarray(offdiag, dtype=float)
    n = len(diag)
    rad = np.zeros(n)
    rad[:-1] += np.abs(offdiag)
    rad[1:] += np.abs(offdiag)
    lo0, hi0 = float(np.min(diag - rad)), float(np.max(diag + rad))
    width = max(hi0 - lo0, 1.0)
    out = np.empty(n)
    for k in range(n):
        # k-th smallest: smallest x with count(x) > k
        lo, hi = lo0 - 1e-3 * width, hi0 + 1e-3 * width
        while hi - lo > tol * max(1.0, abs(lo), abs(hi)):
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            if _sturm_count(diag, offdiag, mid) > k:
                hi = mid
            else:
                lo = mid
        out[k] = 0.5 * (lo + hi)
    return out[::-1]


def _start_vector(n: int, j: int) -> np.ndarray:
    # a different fixed start per index, so degenerate pairs do not collapse
    x = 1.0 + 0.5 * np.sin(np.arange(1, n + 1) * (0.7071067811865476 + 0.37 * j))
    return x / np.linalg.norm(x)


def _tridiagonal_vectors(t: Tridiagonal, eigs: np.ndarray, k: int) -> np.ndarray:
    n = t.n
    scale = max(t.scale, float(np.max(np.abs(eigs))) if len(eigs) else 0.0, np.finfo(float).tiny)
    ys = np.zeros((n, k))
    sub = np.ascontiguousarray(t.offdiag, dtype=float)
    for j in range(k):
        shift = eigs[j] + SHIFT_PERTURBATION * scale
        dd = t.diag - shift
        y = _start_vector(n, j)
        for _ in range(INVERSE_ITERATIONS):
            for prev in range(j):
                y -= ys[:, prev] * (ys[:, prev] @ y)
            y = _kernels.tridiag_solve(sub, dd, sub, y)
            for prev in range(j):
                y -= ys[:, prev] * (ys[:, prev] @ y)
            y /= np.linalg.norm(y)
        ys[:, j] = y
    return ys


def top_eigenvectors(h, t: Tridiagonal, eigs, k: int) -> np.ndarray:
    """Unit eigenvectors for the k largest eigenvalues, as rows of a (k, N) array."""
    eigs = np.asarray(eigs, dtype=float)
    n = t.n
    if k < 0 or k > n:
        raise ValueError(f"k must lie in [0, {n}], got {k}")
    if k == 0:
        dtype = complex if (t.phases is not None and np.iscomplexobj(t.phases)) else float
        return np.zeros((0, n), dtype=dtype)
    scale = max(t.scale, np.finfo(float).tiny)
    close = np.abs(np.diff(eigs[: min(k + 1, n)])) < CLUSTER_GAP * scale
    if np.any(close):
        warnings.warn(
            f"eigenvalues {np.flatnonzero(close).tolist()} are clustered; vectors orthogonalized explicitly",
            ClusterWarning,
            stacklevel=2,
        )
    ys = _tridiagonal_vectors(t, eigs, k)
    u = t.back_transform(ys)
    # one more Gram-Schmidt pass in the original basis to pin orthonormality
    for j in range(k):
        for prev in range(j):
            u[:, j] -= u[:, prev] * (u[:, prev].conj() @ u[:, j])
        u[:, j] /= np.linalg.norm(u[:, j])
    return np.ascontiguousarray(u.T)


@dataclass(frozen=True)
class SpectralData:
    eigenvalues: np.ndarray
    top_vectors: np.ndarray
    residual_norms: np.ndarray


def spectral_decompose(h: DeformedMatrix, n0: int) -> SpectralData:
    """Full spectrum plus the top n0 eigenvectors and their residuals."""
    if n0 > h.n:
        raise ValueError(f"n0={n0} exceeds N={h.n}")
    t = tridiagonalize(h)
    eigs = eigenvalues(t)
    vecs = top_eigenvectors(h, t, eigs, n0)
    if n0:
        a = h.dense
        res = np.linalg.norm(vecs @ a.T - eigs[:n0, None] * vecs, axis=1)
    else:
        res = np.zeros(0)
    return SpectralData(eigs, vecs, res)
