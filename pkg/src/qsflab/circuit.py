"""Density-matrix simulation of the QSF circuit and its Hadamard variant.

Register order is A' (one ancilla qubit), then the control register A
(``n`` basis states, qubit 0 most significant), then the copy register B.
For each power j the block C^j-U_j applies Ry(theta_j) to A' and then the
cycle P_j on B, controlled on A = |j-1> and A' = |1>. Zero coefficients
give identity blocks, and P_1 is the identity, so neither is applied.

B holds only as many copies as the highest nonzero power needs: idle copies
factor out of every statistic and would only inflate the dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import linalg
from .coefficients import STANDARD, PolySpec
from .errors import CapacityError, ValidationError
from .linalg import MAX_SIMULATION_DIM
from .states import DensityMatrix, trace_power
from .stateprep import PrepCircuit, exact_prep, hadamard_prep

PROB_CLAMP = 1e-12


@dataclass(frozen=True)
class RegisterLayout:
    """Dimensions of A' (2), A (``a_dim``) and B (``b_copies`` factors of ``b_local_dim``).

    ``cycle_factor`` is the number of B subsystems per power: 1 for plain
    trace powers, 2 for the interleaved (rho, sigma) register where power k
    uses the cycle over 2k subsystems.
    """

    a_dim: int
    b_local_dim: int
    b_copies: int
    cycle_factor: int = 1
    aprime_dim: int = 2

    @property
    def b_dim(self) -> int:
        return self.b_local_dim**self.b_copies

    @property
    def total_dim(self) -> int:
        return self.aprime_dim * self.a_dim * self.b_dim

    def check_capacity(self, cap: int = MAX_SIMULATION_DIM) -> None:
        if self.a_dim & (self.a_dim - 1):
            raise ValidationError(f"control register size {self.a_dim} is not a power of two")
        if self.total_dim > cap:
            raise CapacityError(
                f"full simulation needs dimension {self.total_dim} > cap {cap}; "
                "use the analytic joint distribution and the sampler instead"
            )


@dataclass(frozen=True, eq=False)
class CircuitOutput:
    density: np.ndarray
    layout: RegisterLayout


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """P(j, x) for control outcome j = 1..n and ancilla X outcome x = +-1.

    Stored as the marginal ``p_j[j-1]`` and conditional ``p_plus[j-1]`` =
    P(x=+1 | j).
    """

    p_j: np.ndarray
    p_plus: np.ndarray

    def __post_init__(self):
        pj = np.asarray(self.p_j, dtype=float).copy()
        pp = np.asarray(self.p_plus, dtype=float).copy()
        if pj.shape != pp.shape or pj.ndim != 1:
            raise ValidationError("marginal and conditional tables must be matching 1-D arrays")
        if np.any(pj < -PROB_CLAMP) or abs(pj.sum() - 1.0) > 1e-10:
            raise ValidationError(f"marginal is not a probability vector (sum {pj.sum():.12g})")
        if np.any(pp < -PROB_CLAMP) or np.any(pp > 1.0 + PROB_CLAMP):
            raise ValidationError("conditional probabilities outside [0, 1]")
        pj = np.clip(pj, 0.0, None)
        pp = np.clip(pp, 0.0, 1.0)
        object.__setattr__(self, "p_j", pj)
        object.__setattr__(self, "p_plus", pp)

    @property
    def n(self) -> int:
        return self.p_j.size

    @property
    def probabilities(self) -> dict[tuple[int, int], float]:
        out = {}
        for j in range(1, self.n + 1):
            out[(j, +1)] = float(self.p_j[j - 1] * self.p_plus[j - 1])
            out[(j, -1)] = float(self.p_j[j - 1] * (1.0 - self.p_plus[j - 1]))
        return out

    def table(self) -> np.ndarray:
        """Array of shape (n, 2): column 0 is x=+1, column 1 is x=-1."""
        return np.stack([self.p_j * self.p_plus, self.p_j * (1.0 - self.p_plus)], axis=1)

    def expectation_x(self) -> float:
        return float(np.sum(self.p_j * (2.0 * self.p_plus - 1.0)))

    def expected_power(self) -> float:
        return float(np.sum(np.arange(1, self.n + 1) * self.p_j))

    @classmethod
    def from_table(cls, table: np.ndarray) -> "JointDistribution":
        table = np.asarray(table, dtype=float)
        pj = table.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            pp = np.where(pj > 0, table[:, 0] / np.where(pj > 0, pj, 1.0), 0.5)
        return cls(pj, pp)


def default_prep(spec: PolySpec) -> PrepCircuit:
    if spec.mode == STANDARD:
        return exact_prep(spec.amplitudes())
    return hadamard_prep(spec.n)


def layout_for(spec: PolySpec, local_dim: int, cycle_factor: int = 1) -> RegisterLayout:
    return RegisterLayout(spec.n, local_dim, cycle_factor * spec.degree, cycle_factor)


def _apply_circuit(spec: PolySpec, prep: PrepCircuit, layout: RegisterLayout, cols: np.ndarray) -> np.ndarray:
    """U @ cols for a (total_dim, K) matrix of column vectors."""
    n, db = layout.a_dim, layout.b_dim
    k = cols.shape[1]
    psi = cols.reshape(2, n, db, k)
    psi = np.einsum("ab,xbyk->xayk", prep.unitary, psi)
    for j in range(1, n + 1):
        theta = spec.thetas[j]
        if spec.alphas[j] == 0.0 or theta == 0.0:
            continue
        a = j - 1
        c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)
        zero = psi[0, a].copy()
        one = psi[1, a].copy()
        psi[0, a] = c * zero - s * one
        rotated = s * zero + c * one
        cycle = layout.cycle_factor * j
        if cycle > 1:
            perm = linalg.cycle_permutation(cycle, layout.b_copies, layout.b_local_dim)
            rotated = linalg.apply_permutation(rotated, perm, axis=0)
        psi[1, a] = rotated
    return psi.reshape(layout.total_dim, k)


def _check_prep(prep: PrepCircuit, spec: PolySpec) -> None:
    if prep.unitary.shape != (spec.n, spec.n):
        raise ValidationError(
            f"preparation acts on dimension {prep.unitary.shape[0]}, register needs {spec.n}"
        )


def simulate_full(
    spec: PolySpec,
    rho: DensityMatrix,
    prep: PrepCircuit | None = None,
    sigma: DensityMatrix | None = None,
) -> CircuitOutput:
    """Output state U (|0><0| (x) |0..0><0..0| (x) B) U^dag.

    B is rho**(x)degree, or the interleaved (rho (x) sigma)**(x)degree when
    ``sigma`` is given, in which case power k drives the cycle over 2k
    subsystems. Only the columns of U on the initial support are formed.
    """
    prep = prep or default_prep(spec)
    _check_prep(prep, spec)
    if sigma is None:
        layout = layout_for(spec, rho.dim)
        factors = [rho.matrix] * spec.degree
    else:
        if sigma.dim != rho.dim:
            raise ValidationError(f"dimension mismatch: {rho.dim} vs {sigma.dim}")
        layout = layout_for(spec, rho.dim, cycle_factor=2)
        factors = [rho.matrix, sigma.matrix] * spec.degree
    layout.check_capacity()
    b_state = linalg.kron_list(factors)
    db = layout.b_dim
    embed = np.zeros((layout.total_dim, db), dtype=np.complex128)
    embed[:db, :] = np.eye(db)
    w = _apply_circuit(spec, prep, layout, embed)
    density = w @ b_state @ w.conj().T
    return CircuitOutput(0.5 * (density + density.conj().T), layout)


def circuit_unitary(spec: PolySpec, local_dim: int, prep: PrepCircuit | None = None) -> np.ndarray:
    """Dense U for small layouts; used to check unitarity."""
    prep = prep or default_prep(spec)
    _check_prep(prep, spec)
    layout = layout_for(spec, local_dim)
    layout.check_capacity()
    return _apply_circuit(spec, prep, layout, np.eye(layout.total_dim, dtype=np.complex128))


def expectation_x(density: np.ndarray, layout: RegisterLayout) -> float:
    """tr[(X on A' (x) I) density]."""
    rest = layout.total_dim // 2
    d = np.asarray(density).reshape(2, rest, 2, rest)
    return float(2.0 * np.real(np.trace(d[0, :, 1, :])))


def _x_projector(sign: int) -> np.ndarray:
    return 0.5 * np.array([[1.0, sign], [sign, 1.0]], dtype=np.complex128)


def _project(density: np.ndarray, layout: RegisterLayout, aprime: np.ndarray | None, a_index: int | None):
    """Pi rho Pi for Pi = (X projector on A') (x) (|a><a| on A) (x) I_B."""
    n, db = layout.a_dim, layout.b_dim
    d = density.reshape(2, n, db, 2, n, db)
    if aprime is not None:
        d = np.einsum("ab,bjycks,cd->ajydks", aprime, d, aprime)
    if a_index is not None:
        mask = np.zeros(n)
        mask[a_index] = 1.0
        d = d * mask[None, :, None, None, None, None] * mask[None, None, None, None, :, None]
    return d.reshape(layout.total_dim, layout.total_dim)


def measure_joint(output: CircuitOutput, order: str = "x_first") -> JointDistribution:
    """Sequential projective measurement of X on A' and Z on A.

    ``order`` selects which register is measured first; the two observables
    commute so both orders give the same table.
    """
    layout = output.layout
    n = layout.a_dim
    table = np.zeros((n, 2))
    for col, sign in enumerate((+1, -1)):
        proj = _x_projector(sign)
        if order == "x_first":
            post = _project(output.density, layout, proj, None)
            p_x = float(np.trace(post).real)
            for a in range(n):
                table[a, col] = float(np.trace(_project(post, layout, None, a)).real) if p_x > 0 else 0.0
        elif order == "z_first":
            for a in range(n):
                post = _project(output.density, layout, None, a)
                table[a, col] = float(np.trace(_project(post, layout, proj, None)).real)
        else:
            raise ValidationError(f"unknown measurement order {order!r}")
    return JointDistribution.from_table(table)


def joint_from_output(output: CircuitOutput) -> JointDistribution:
    """Fast diagonal read-out of P(j, +-) from the output state."""
    layout = output.layout
    n, db = layout.a_dim, layout.b_dim
    d = output.density.reshape(2, n, db, 2, n, db)
    table = np.zeros((n, 2))
    for a in range(n):
        d00 = np.trace(d[0, a, :, 0, a, :]).real
        d11 = np.trace(d[1, a, :, 1, a, :]).real
        d01 = np.trace(d[0, a, :, 1, a, :]).real
        table[a, 0] = 0.5 * (d00 + d11) + d01
        table[a, 1] = 0.5 * (d00 + d11) - d01
    table[(table < 0) & (table > -PROB_CLAMP)] = 0.0
    return JointDistribution.from_table(table)


def analytic_joint_distribution(spec: PolySpec, traces: Mapping[int, float]) -> JointDistribution:
    """P(j, x) from the trace atoms: P(+|j) = (1 + sin(theta_j) t_j) / 2.

    Standard mode has P(j) = |alpha_j| / gamma; variant mode has P(j) = 1/n.
    ``traces`` maps power j to tr(rho**j) (or tr[(rho sigma)**j]).
    """
    n = spec.n
    if spec.mode == STANDARD:
        pj = np.array([abs(spec.alphas[j]) for j in range(1, n + 1)]) / spec.gamma
    else:
        pj = np.full(n, 1.0 / n)
    pp = np.full(n, 0.5)
    for j in range(1, n + 1):
        if spec.alphas[j] != 0.0:
            pp[j - 1] = 0.5 * (1.0 + math.sin(spec.thetas[j]) * traces[j])
    return JointDistribution(pj, pp)


def prep_joint_distribution(spec: PolySpec, traces: Mapping[int, float], prep: PrepCircuit) -> JointDistribution:
    """Like :func:`analytic_joint_distribution` but with P(j) = |<j|V|0>|**2 for an arbitrary prep V.

    The Z read-out of A removes coherence between branches, so only the
    prepared populations enter.
    """
    _check_prep(prep, spec)
    pj = np.abs(prep.state()) ** 2
    pj = pj / pj.sum()
    pp = np.full(spec.n, 0.5)
    for j in range(1, spec.n + 1):
        if spec.alphas[j] != 0.0:
            pp[j - 1] = 0.5 * (1.0 + math.sin(spec.thetas[j]) * traces[j])
    return JointDistribution(pj, pp)


def state_traces(spec: PolySpec, rho: DensityMatrix) -> dict[int, float]:
    return {j: trace_power(rho, j) for j in range(1, spec.n + 1) if spec.alphas[j] != 0.0}


def joint_distribution(
    spec: PolySpec,
    rho: DensityMatrix,
    method: str = "analytic",
    prep: PrepCircuit | None = None,
) -> JointDistribution:
    """Joint outcome table, analytically or from a full simulation."""
    if method == "analytic":
        return analytic_joint_distribution(spec, state_traces(spec, rho))
    if method == "full":
        return joint_from_output(simulate_full(spec, rho, prep))
    raise ValidationError(f"unknown method {method!r}")


def variant_expectation(spec: PolySpec, rho: DensityMatrix) -> float:
    """<X> of the Hadamard-wall circuit: sum_j sin(theta_j) tr(rho**j) / n."""
    if spec.mode == STANDARD:
        raise ValidationError("variant_expectation needs a variant-mode spec")
    return math.fsum(
        math.sin(spec.thetas[j]) * trace_power(rho, j) for j in range(1, spec.n + 1) if spec.alphas[j] != 0.0
    ) / spec.n


def standard_expectation(spec: PolySpec, rho: DensityMatrix) -> float:
    """<X> of the standard circuit: sum_j |alpha_j| sin(theta_j) tr(rho**j) / gamma."""
    if spec.mode != STANDARD:
        raise ValidationError("standard_expectation needs a standard-mode spec")
    return math.fsum(
        abs(a) * math.sin(spec.thetas[j]) * trace_power(rho, j) for j, a in spec.alphas.items() if a != 0.0
    ) / spec.gamma
