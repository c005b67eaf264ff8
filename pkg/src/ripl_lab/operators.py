"""Concrete isometries and their file formats.

Provides the unitary DFT over the symmetric frequency range
{-N/2+1, ..., N/2}, the orthonormal Haar wavelet basis with
coarse-to-fine column ordering, the product of the band-reordered DFT
with the Haar basis (the flagship coherent isometry whose rows group
into dyadic frequency bands), and an i.i.d. Gaussian baseline matrix.

Matrices serialize to a small binary container (two little-endian uint64
dims followed by row-major float64 interleaved re/im) and to a CSV debug
form with separate re/im columns.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .levels import LevelStructure

__all__ = [
    "BandLayout",
    "band_layout",
    "dft_matrix",
    "haar_matrix",
    "fourier_haar_matrix",
    "gaussian_matrix",
    "is_isometry",
    "save_matrix",
    "load_matrix",
    "matrix_to_csv",
    "matrix_content_hash",
]

_MAX_DENSE_N = 4096


def _require_pow2(n):
    n = int(n)
    if n < 2 or (n & (n - 1)) != 0:
        raise ValueError(f"N must be a power of two >= 2, got {n}")
    if n > _MAX_DENSE_N:
        raise ValueError(f"dense construction capped at N = {_MAX_DENSE_N}")
    return n


def dft_matrix(n):
    """Unitary DFT matrix of size N = 2^r.

    Row i (0-based) holds the frequency w = i - N/2 + 1, so rows run over
    w = -N/2+1, ..., N/2; entry (w, j) is exp(2*pi*1j*(j-1)*w/N)/sqrt(N).
    """
    n = _require_pow2(n)
    freqs = np.arange(-n // 2 + 1, n // 2 + 1)
    j = np.arange(n)
    return np.exp(2j * np.pi * np.outer(freqs, j) / n) / np.sqrt(n)


@dataclass(frozen=True)
class BandLayout:
    """Dyadic frequency bands W_1..W_r and the row reordering they induce.

    ``bands[k-1]`` lists the frequencies of band k in ascending order;
    ``row_permutation[i]`` is the 0-based row of :func:`dft_matrix`
    holding the i-th band-ordered frequency.  Band widths are
    2^max(k-1, 1) and the cumulative boundaries N_k = 2^k.
    """

    n: int
    bands: tuple
    row_permutation: np.ndarray

    def sampling_levels(self):
        r = self.n.bit_length() - 1
        return LevelStructure((0,) + tuple(2**k for k in range(1, r + 1)))

    def to_dict(self):
        return {
            "N": self.n,
            "bands": [list(b) for b in self.bands],
            "boundaries": self.sampling_levels().to_dict()["boundaries"],
        }


def band_layout(n):
    """Build the dyadic band layout for N = 2^r.

    W_1 = {0, 1}; W_{k+1} = {-2^k+1..-2^{k-1}} union {2^{k-1}+1..2^k}.
    Within each band frequencies are kept in ascending order, which
    fixes a byte-stable row order without affecting any block maximum.
    """
    n = _require_pow2(n)
    r = n.bit_length() - 1
    bands = [(0, 1)]
    for k in range(1, r):
        neg = tuple(range(-(2**k) + 1, -(2 ** (k - 1)) + 1))
        pos = tuple(range(2 ** (k - 1) + 1, 2**k + 1))
        bands.append(neg + pos)
    order = [w for band in bands for w in band]
    perm = np.array([w + n // 2 - 1 for w in order], dtype=np.intp)
    return BandLayout(n=n, bands=tuple(bands), row_permutation=perm)


def haar_matrix(n):
    """Orthonormal Haar basis as columns, coarse to fine.

    Column 1 is the constant scaling vector, column 2 the mother wavelet
    (+ on the first half, - on the second), and columns 2^{k-1}+1..2^k
    hold the wavelets at scale k-1 ordered by translate, left to right.
    """
    n = _require_pow2(n)
    r = n.bit_length() - 1
    h = np.zeros((n, n))
    h[:, 0] = 1.0 / np.sqrt(n)
    col = 1
    for scale in range(r):
        support = n >> scale
        half = support // 2
        amp = np.sqrt(2.0**scale / n)
        for t in range(2**scale):
            lo = t * support
            h[lo : lo + half, col] = amp
            h[lo + half : lo + support, col] = -amp
            col += 1
    return h


def fourier_haar_matrix(n):
    """Band-reordered DFT times the Haar basis, with its layout.

    Returns (U, layout) where U is unitary and its k-th row block (rows
    N_{k-1}+1..N_k, boundaries N_k = 2^k) corresponds to the frequencies
    of band W_k.
    """
    layout = band_layout(n)
    f = dft_matrix(n)
    u = f[layout.row_permutation] @ haar_matrix(n)
    return u, layout


def gaussian_matrix(m, n, rng):
    """m x N matrix of i.i.d. real Gaussian entries with variance 1/m."""
    m = int(m)
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    return rng.normal(0.0, 1.0 / np.sqrt(m), size=(m, int(n)))


def is_isometry(mat, tol=1e-10):
    """True iff ||M* M - I||_max <= tol (square matrices only)."""
    mat = np.asarray(mat)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"is_isometry needs a square matrix, got {mat.shape}")
    gram = mat.conj().T @ mat
    return float(np.max(np.abs(gram - np.eye(mat.shape[0])))) <= tol


def _matrix_bytes(mat):
    mat = np.ascontiguousarray(np.asarray(mat, dtype=np.complex128))
    rows, cols = mat.shape
    header = struct.pack("<QQ", rows, cols)
    interleaved = np.empty((rows, cols, 2))
    interleaved[:, :, 0] = mat.real
    interleaved[:, :, 1] = mat.imag
    return header + interleaved.astype("<f8").tobytes()


def save_matrix(path, mat):
    """Write the binary container: uint64 rows, uint64 cols, re/im f64."""
    with open(path, "wb") as fh:
        fh.write(_matrix_bytes(mat))


def load_matrix(path):
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16:
            raise ValueError(f"truncated matrix file {path}")
        rows, cols = struct.unpack("<QQ", header)
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != rows * cols * 2:
        raise ValueError(f"matrix file {path} has wrong payload size")
    data = data.reshape(rows, cols, 2)
    return (data[:, :, 0] + 1j * data[:, :, 1]).astype(np.complex128)


def matrix_to_csv(path, mat):
    """Debug CSV: one row per matrix row, alternating re,im columns."""
    mat = np.asarray(mat, dtype=np.complex128)
    with open(path, "w") as fh:
        cols = mat.shape[1]
        header = ",".join(f"re{j},im{j}" for j in range(cols))
        fh.write(header + "\n")
        for row in mat:
            fh.write(",".join(f"{float(v.real)!r},{float(v.imag)!r}" for v in row) + "\n")


def matrix_content_hash(mat):
    """sha256 hex digest of the binary container form of ``mat``."""
    return hashlib.sha256(_matrix_bytes(mat)).hexdigest()
