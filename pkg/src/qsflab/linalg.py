"""Dense complex matrix kernel.

Matrices are plain ``numpy`` arrays of dtype ``complex128``. The Hermitian
eigensolver is a cyclic complex Jacobi iteration; cycle permutations on
tensor-product spaces are represented as index maps rather than dense
matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

from .errors import CapacityError, NumericalError, PSDError, ValidationError

# Largest Hilbert-space dimension any dense object may reach.
MAX_SIMULATION_DIM = 4096

HERMITIAN_ATOL = 1e-10
PSD_ATOL = 1e-10
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100


def as_matrix(m) -> np.ndarray:
    """Return ``m`` as a 2-D complex128 array (no copy when already one)."""
    arr = np.asarray(m, dtype=np.complex128)
    if arr.ndim != 2:
        raise ValidationError(f"expected a 2-D matrix, got shape {arr.shape}")
    return arr


def allclose(a, b, atol: float) -> bool:
    """Elementwise equality with an explicit absolute tolerance."""
    a = np.asarray(a)
    b = np.asarray(b)
    return a.shape == b.shape and bool(np.all(np.abs(a - b) <= atol))


def is_hermitian(m, atol: float = HERMITIAN_ATOL) -> bool:
    m = as_matrix(m)
    return m.shape[0] == m.shape[1] and allclose(m, m.conj().T, atol)


def kron_list(factors: Sequence, max_dim: int = MAX_SIMULATION_DIM) -> np.ndarray:
    """Kronecker product of square matrices, in list order.

    Raises:
        ValidationError: empty list or a non-square factor.
        CapacityError: the product dimension would exceed ``max_dim``.
    """
    if len(factors) == 0:
        raise ValidationError("kron_list needs at least one factor")
    mats = [as_matrix(f) for f in factors]
    for f in mats:
        if f.shape[0] != f.shape[1]:
            raise ValidationError(f"factor of shape {f.shape} is not square")
    dim = math.prod(f.shape[0] for f in mats)
    if dim > max_dim:
        raise CapacityError(
            f"Kronecker product dimension {dim} exceeds the simulation cap {max_dim}"
        )
    return reduce(np.kron, mats)


@dataclass(frozen=True)
class HermitianEigen:
    eigenvalues: np.ndarray  # ascending, real
    eigenvectors: np.ndarray  # columns are orthonormal eigenvectors

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def hermitian_eig(m, tol: float = JACOBI_TOL, max_sweeps: int = JACOBI_MAX_SWEEPS) -> HermitianEigen:
    """Full eigendecomposition of a complex Hermitian matrix by cyclic Jacobi.

    Each rotation first removes the phase of the pivot ``a[p, q]`` and then
    applies the classical real Jacobi rotation to the resulting real 2x2
    block. Sweeps continue until the off-diagonal Frobenius norm falls below
    ``tol`` (scaled by the matrix norm when that exceeds one).
    """
    a = as_matrix(m)
    n, cols = a.shape
    if n != cols:
        raise ValidationError(f"matrix of shape {a.shape} is not square")
    if not is_hermitian(a):
        raise ValidationError("matrix is not Hermitian within 1e-10")
    a = 0.5 * (a + a.conj().T)
    v = np.eye(n, dtype=np.complex128)
    threshold = tol * max(1.0, float(np.linalg.norm(a)))

    off_mask = ~np.eye(n, dtype=bool)

    def off_norm() -> float:
        # summed directly: |A|^2 - |diag A|^2 cancels at ~1e-8 |A|
        return float(np.linalg.norm(a[off_mask]))

    sweeps = 0
    while off_norm() > threshold:
        if sweeps >= max_sweeps:
            raise NumericalError(f"Jacobi did not converge in {max_sweeps} sweeps")
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                b = a[p, q]
                mag = abs(b)
                if mag < 1e-300:
                    continue
                phase = b / mag
                app = a[p, p].real
                aqq = a[q, q].real
                theta = (aqq - app) / (2.0 * mag)
                if abs(theta) > 1e150:
                    t = 0.5 / theta  # pivot negligible; avoids overflow in theta**2
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # columns of the 2x2 unitary acting on (p, q)
                g = np.array([[c, s], [-s * phase.conjugate(), c * phase.conjugate()]])
                idx = [p, q]
                a[:, idx] = a[:, idx] @ g
                a[idx, :] = g.conj().T @ a[idx, :]
                a[p, q] = 0.0
                a[q, p] = 0.0
                a[p, p] = a[p, p].real
                a[q, q] = a[q, q].real
                v[:, idx] = v[:, idx] @ g
    evals = np.real(np.diag(a)).copy()
    order = np.argsort(evals, kind="stable")
    return HermitianEigen(evals[order], v[:, order])


def eigvalsh(m) -> np.ndarray:
    """Ascending eigenvalues of a Hermitian matrix (Jacobi)."""
    return hermitian_eig(m).eigenvalues


def matrix_sqrt_psd(m) -> np.ndarray:
    """Hermitian PSD square root.

    Eigenvalues in ``[-1e-10, 0)`` are clamped to zero; anything more
    negative raises :class:`PSDError`.
    """
    eig = hermitian_eig(m)
    lam = eig.eigenvalues
    if lam.size and lam[0] < -PSD_ATOL:
        raise PSDError(f"eigenvalue {lam[0]:.3e} violates positive semidefiniteness")
    root = np.sqrt(np.clip(lam, 0.0, None))
    v = eig.eigenvectors
    out = (v * root) @ v.conj().T
    return 0.5 * (out + out.conj().T)


def matrix_power_trace(m, j: int) -> complex:
    """tr(m**j) by repeated multiplication."""
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise ValidationError(f"matrix of shape {m.shape} is not square")
    if j < 1:
        raise ValidationError(f"power must be >= 1, got {j}")
    acc = m
    for _ in range(j - 1):
        acc = acc @ m
    return complex(np.trace(acc))


def _check_cycle_args(k: int, n: int, d: int) -> None:
    if not 1 <= k <= n:
        raise ValidationError(f"cycle length k={k} must satisfy 1 <= k <= n={n}")
    if d < 1:
        raise ValidationError(f"local dimension must be positive, got {d}")


def cycle_permutation_apply(state_index: int, k: int, n: int, d: int) -> int:
    """Image of a computational-basis index under the cycle P_k.

    Subsystem 0 is the most significant digit. On the first ``k`` factors the
    new digit ``i`` is the old digit ``(i + 1) mod k``; the rest are fixed.
    """
    _check_cycle_args(k, n, d)
    if not 0 <= state_index < d**n:
        raise ValidationError(f"index {state_index} out of range for d={d}, n={n}")
    digits = []
    rem = state_index
    for _ in range(n):
        rem, r = divmod(rem, d)
        digits.append(r)
    digits.reverse()
    head = digits[:k]
    digits[:k] = head[1:] + head[:1]
    out = 0
    for dig in digits:
        out = out * d + dig
    return out


def cycle_permutation(k: int, n: int, d: int) -> np.ndarray:
    """Vectorized :func:`cycle_permutation_apply` over all ``d**n`` indices.

    Returns ``perm`` with ``perm[x]`` the image of basis index ``x``, so the
    permutation matrix has ``P[perm[x], x] = 1``.
    """
    _check_cycle_args(k, n, d)
    idx = np.arange(d**n).reshape((d,) * n)
    # new tensor axis i holds old axis (i + 1) mod k
    axes = [(i + 1) % k for i in range(k)] + list(range(k, n))
    # moving digits: image of x has digit_i = x_digit_{axes[i]}; build the
    # inverse table then invert it
    src = np.transpose(idx, axes).reshape(-1)  # src[y] = x with image y
    perm = np.empty_like(src)
    perm[src] = np.arange(src.size)
    return perm


def permutation_matrix(perm: np.ndarray) -> np.ndarray:
    """Dense matrix with ``P[perm[x], x] = 1``; for oracles and tests only."""
    size = perm.size
    p = np.zeros((size, size), dtype=np.complex128)
    p[perm, np.arange(size)] = 1.0
    return p


def apply_permutation(vecs: np.ndarray, perm: np.ndarray, axis: int = 0) -> np.ndarray:
    """Apply the permutation operator to ``vecs`` along ``axis``."""
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    return np.take(vecs, inv, axis=axis)


def trace_with_permutation(m: np.ndarray, perm: np.ndarray) -> complex:
    """tr(P m) without forming P: sum over y of m[y, perm[y]]."""
    m = as_matrix(m)
    return complex(np.sum(m[np.arange(perm.size), perm]))
