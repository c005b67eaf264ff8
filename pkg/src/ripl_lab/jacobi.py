"""Cyclic Jacobi eigenvalue iteration for stacks of small Hermitian matrices.

Each off-diagonal pivot (p, q) is annihilated with a complex Givens
rotation applied simultaneously across the whole stack; sweeps repeat
until the off-diagonal Frobenius mass of every matrix falls below
tol * ||A||_F.  Eigenvalue error is bounded by the remaining off mass.
Intended for the tiny Gram matrices (n <= ~16) arising from per-support
restricted-isometry checks, batched over many supports.
"""
from __future__ import annotations

import numpy as np

__all__ = ["jacobi_eigenvalues", "extremal_eigenvalues"]

_TINY = 1e-300


def _off_mass(a):
    off = np.abs(a) ** 2
    idx = np.arange(a.shape[-1])
    off[:, idx, idx] = 0.0
    return np.sqrt(off.sum(axis=(1, 2)))


def _sweep(a, n):
    for p in range(n - 1):
        for q in range(p + 1, n):
            apq = a[:, p, q]
            mag = np.abs(apq)
            active = mag > _TINY
            if not active.any():
                continue
            safe_mag = np.where(active, mag, 1.0)
            phase = np.where(active, apq / safe_mag, 1.0)
            app = a[:, p, p].real
            aqq = a[:, q, q].real
            # real Jacobi angle for the phase-reduced block [[app, |apq|], [|apq|, aqq]];
            # a huge |tau| overflows to inf and correctly degrades to t = 0
            with np.errstate(over="ignore"):
                tau = np.where(active, (aqq - app) / (2.0 * safe_mag), 0.0)
                sgn = np.where(tau >= 0.0, 1.0, -1.0)
                t = np.where(active, sgn / (np.abs(tau) + np.sqrt(1.0 + tau * tau)), 0.0)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            # unitary rotation G: G[p,p] = phase*c, G[p,q] = phase*s,
            # G[q,p] = -s, G[q,q] = c; update A <- G* A G
            gp = phase * c
            gq = phase * s
            colp = a[:, :, p] * gp[:, None] - a[:, :, q] * s[:, None]
            colq = a[:, :, p] * gq[:, None] + a[:, :, q] * c[:, None]
            a[:, :, p] = colp
            a[:, :, q] = colq
            rowp = np.conj(gp)[:, None] * a[:, p, :] - s[:, None] * a[:, q, :]
            rowq = np.conj(gq)[:, None] * a[:, p, :] + c[:, None] * a[:, q, :]
            a[:, p, :] = rowp
            a[:, q, :] = rowq
            a[:, p, q] = 0.0
            a[:, q, p] = 0.0


def jacobi_eigenvalues(mats, tol=1e-12, max_sweeps=60):
    """Eigenvalues of Hermitian matrices, ascending, via cyclic Jacobi.

    ``mats`` is (n, n) or (B, n, n); the result is (n,) or (B, n).
    Inputs are symmetrized (A + A*)/2 to absorb rounding asymmetry.
    """
    a = np.asarray(mats, dtype=np.complex128)
    single = a.ndim == 2
    if single:
        a = a[None]
    if a.ndim != 3 or a.shape[1] != a.shape[2]:
        raise ValueError(f"expected (B, n, n) Hermitian stack, got {a.shape}")
    _, n, _ = a.shape
    if n == 0:
        raise ValueError("empty matrix")
    a = 0.5 * (a + np.conj(np.swapaxes(a, 1, 2)))
    if n == 1:
        diag = a[:, 0, 0].real.copy()
        return diag if single else diag[:, None]

    scale = np.maximum(np.sqrt((np.abs(a) ** 2).sum(axis=(1, 2))), _TINY)
    for _ in range(max_sweeps):
        if np.all(_off_mass(a) <= tol * scale):
            break
        _sweep(a, n)
    if not np.all(_off_mass(a) <= tol * scale):
        raise RuntimeError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")

    vals = np.sort(np.diagonal(a, axis1=1, axis2=2).real.copy(), axis=1)
    return vals[0] if single else vals


def extremal_eigenvalues(mats, tol=1e-12, max_sweeps=60):
    """(lambda_min, lambda_max) per matrix in a Hermitian stack."""
    vals = jacobi_eigenvalues(mats, tol=tol, max_sweeps=max_sweeps)
    if vals.ndim == 1:
        return float(vals[0]), float(vals[-1])
    return vals[:, 0], vals[:, -1]
