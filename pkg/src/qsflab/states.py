"""Validated density matrices and exact classical oracles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from . import linalg
from .errors import PSDError, ValidationError

if TYPE_CHECKING:
    from .coefficients import PolySpec

STATE_ATOL = 1e-10
RANK_CUTOFF = 1e-10
ENTROPY_CUTOFF = 1e-12
FIDELITY_ZERO = 1e-14


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """A d-dimensional quantum state.

    Construction checks Hermiticity, unit trace and positivity, each to 1e-10.
    The spectrum is computed once and cached.
    """

    matrix: np.ndarray
    _eigen: linalg.HermitianEigen = field(init=False, repr=False)

    def __post_init__(self):
        m = linalg.as_matrix(self.matrix)
        if m.shape[0] != m.shape[1]:
            raise ValidationError(f"density matrix must be square, got {m.shape}")
        if not linalg.is_hermitian(m, STATE_ATOL):
            raise ValidationError("density matrix is not Hermitian within 1e-10")
        tr = np.trace(m)
        if abs(tr - 1.0) > STATE_ATOL:
            raise ValidationError(f"density matrix trace {tr.real:.12g} differs from 1")
        eig = linalg.hermitian_eig(m)
        if eig.eigenvalues[0] < -STATE_ATOL:
            raise PSDError(f"density matrix has eigenvalue {eig.eigenvalues[0]:.3e}")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "_eigen", eig)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def eigenvalues(self) -> np.ndarray:
        return self._eigen.eigenvalues

    @property
    def eigen(self) -> linalg.HermitianEigen:
        return self._eigen

    @classmethod
    def from_diagonal(cls, diag) -> "DensityMatrix":
        return cls(np.diag(np.asarray(diag, dtype=np.complex128)))

    @classmethod
    def maximally_mixed(cls, d: int) -> "DensityMatrix":
        return cls(np.eye(d, dtype=np.complex128) / d)

    @classmethod
    def pure(cls, amplitudes) -> "DensityMatrix":
        psi = np.asarray(amplitudes, dtype=np.complex128)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))


def random_state(d: int, rank: int | None = None, seed: int = 0) -> DensityMatrix:
    """Ginibre-ensemble state rho = G G^dag / tr(G G^dag) with G of shape (d, rank)."""
    if rank is None:
        rank = d
    if d < 1 or not 1 <= rank <= d:
        raise ValidationError(f"rank must satisfy 1 <= rank <= d, got rank={rank}, d={d}")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    m = g @ g.conj().T
    m = m / np.trace(m).real
    return DensityMatrix(0.5 * (m + m.conj().T))


def trace_power(rho: DensityMatrix, j: int) -> float:
    """tr(rho**j), taken from the matrix product (imaginary part discarded)."""
    return float(linalg.matrix_power_trace(rho.matrix, j).real)


def von_neumann_entropy(rho: DensityMatrix) -> float:
    """-sum(lambda ln lambda) over eigenvalues above 1e-12, natural log."""
    lam = rho.eigenvalues
    lam = lam[lam > ENTROPY_CUTOFF]
    return float(-np.sum(lam * np.log(lam)))


def fidelity_exact(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Uhlmann fidelity (tr sqrt(sqrt(rho) sigma sqrt(rho)))**2, clamped to [0, 1]."""
    if rho.dim != sigma.dim:
        raise ValidationError(f"dimension mismatch: {rho.dim} vs {sigma.dim}")
    root = linalg.matrix_sqrt_psd(rho.matrix)
    inner = root @ sigma.matrix @ root
    inner = 0.5 * (inner + inner.conj().T)
    lam = linalg.eigvalsh(inner)
    # rounding leaves ~1e-17 where the spectrum is zero; its sqrt would be ~3e-9
    lam = np.where(lam > FIDELITY_ZERO, lam, 0.0)
    f = float(np.sum(np.sqrt(lam)) ** 2)
    if f > 1.0 + 1e-9 or f < -1e-9:
        raise ValidationError(f"fidelity {f} outside [0, 1] beyond tolerance")
    return min(max(f, 0.0), 1.0)


def min_nonzero_eigenvalue(rho: DensityMatrix) -> float:
    lam = rho.eigenvalues
    return float(lam[lam > RANK_CUTOFF].min())


def poly_function_exact(spec: "PolySpec", rho: DensityMatrix) -> float:
    """Ground truth const_term + sum_j alpha_j tr(rho**j)."""
    return spec.const_term + sum(a * trace_power(rho, j) for j, a in spec.alphas.items() if a != 0.0)


def poly_transform_exact(spec: "PolySpec", rho: DensityMatrix) -> np.ndarray:
    """The matrix sum_j alpha_j rho**j (constant term excluded)."""
    d = rho.dim
    out = np.zeros((d, d), dtype=np.complex128)
    power = np.eye(d, dtype=np.complex128)
    for j in range(1, spec.degree + 1):
        power = power @ rho.matrix
        a = spec.alphas.get(j, 0.0)
        if a != 0.0:
            out += a * power
    return 0.5 * (out + out.conj().T)


# --- text format -----------------------------------------------------------


def format_state(rho: DensityMatrix) -> str:
    lines = [str(rho.dim)]
    for row in rho.matrix:
        lines.append(" ".join(f"{z.real:.17g}{z.imag:+.17g}j" for z in row))
    return "\n".join(lines) + "\n"


def parse_state(text: str) -> DensityMatrix:
    """Parse the ``d`` + ``d`` rows of ``re+imj`` entries format."""
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows:
        raise ValidationError("empty state file")
    try:
        d = int(rows[0][0])
        m = np.array([[complex(tok) for tok in row] for row in rows[1:]], dtype=np.complex128)
    except ValueError as exc:
        raise ValidationError(f"malformed state file: {exc}") from None
    if m.shape != (d, d):
        raise ValidationError(f"state file declares d={d} but holds a {m.shape} matrix")
    return DensityMatrix(m)


def save_state(rho: DensityMatrix, path) -> None:
    Path(path).write_text(format_state(rho))


def load_state(path) -> DensityMatrix:
    return parse_state(Path(path).read_text())


def entropy_series_value(eigenvalues, order: int) -> float:
    """sum_{j=1}^{order} (1/j) sum_i lambda_i (1 - lambda_i)**j.

    Stable evaluation of the truncated entropy series straight from the
    spectrum; used where the monomial form would cancel catastrophically.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    total = 0.0
    for j in range(1, order + 1):
        total += float(np.sum(lam * (1.0 - lam) ** j)) / j
    return total


def purity(rho: DensityMatrix) -> float:
    return trace_power(rho, 2)


def is_pure(rho: DensityMatrix, atol: float = 1e-10) -> bool:
    return math.isclose(purity(rho), 1.0, abs_tol=atol)
