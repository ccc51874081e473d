"""Preparation of the control-register amplitude state.

Three realisations are provided: an exact unitary whose first column is the
target, a layered Ry + ring-CNOT circuit trained by parameter-shift gradient
descent, and the uniform Hadamard wall used by the variant circuit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import TrainingError, ValidationError

EXACT = "exact"
PQC = "pqc"
HADAMARD = "hadamard"


@dataclass(frozen=True, eq=False)
class PqcParams:
    """Angles of an L-layer ansatz, stored with shape ``(layers, qubits)``."""

    angles: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.angles, dtype=float)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValidationError(f"angles must have shape (layers, qubits), got {a.shape}")
        object.__setattr__(self, "angles", a)

    @property
    def layers(self) -> int:
        return self.angles.shape[0]

    @property
    def qubits(self) -> int:
        return self.angles.shape[1]

    @classmethod
    def from_flat(cls, layers: int, flat) -> "PqcParams":
        flat = np.asarray(flat, dtype=float)
        if layers < 1 or flat.size % layers:
            raise ValidationError(f"{flat.size} angles do not split into {layers} layers")
        return cls(flat.reshape(layers, flat.size // layers))


@dataclass(frozen=True, eq=False)
class PrepCircuit:
    kind: str
    unitary: np.ndarray
    params: PqcParams | None = None
    infidelity: float = 0.0

    @property
    def qubits(self) -> int:
        return self.unitary.shape[0].bit_length() - 1

    def state(self) -> np.ndarray:
        return self.unitary[:, 0]


def _check_target(target) -> np.ndarray:
    t = np.asarray(target, dtype=np.complex128).ravel()
    size = t.size
    if size < 1 or size & (size - 1):
        raise ValidationError(f"target length {size} is not a power of two")
    if abs(np.linalg.norm(t) - 1.0) > 1e-10:
        raise ValidationError(f"target has norm {np.linalg.norm(t):.12g}, expected 1")
    return t


def exact_prep(target) -> PrepCircuit:
    """Unitary with the target as its first column (Householder completion)."""
    t = _check_target(target)
    size = t.size
    e0 = np.zeros(size, dtype=np.complex128)
    e0[0] = 1.0
    # fold the phase of t[0] into a diagonal so the reflection stays real-valued on e0
    phase = t[0] / abs(t[0]) if abs(t[0]) > 1e-15 else 1.0
    v = e0 - t / phase
    norm2 = float(np.vdot(v, v).real)
    if norm2 < 1e-28:
        u = np.eye(size, dtype=np.complex128)
    else:
        u = np.eye(size, dtype=np.complex128) - 2.0 * np.outer(v, v.conj()) / norm2
    return PrepCircuit(EXACT, u * phase)


def hadamard_prep(n: int) -> PrepCircuit:
    """H on every control qubit: uniform amplitudes 1/sqrt(n)."""
    if n < 1 or n & (n - 1):
        raise ValidationError(f"register size {n} is not a power of two")
    h = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=np.complex128) / math.sqrt(2.0)
    u = np.ones((1, 1), dtype=np.complex128)
    for _ in range(n.bit_length() - 1):
        u = np.kron(u, h)
    return PrepCircuit(HADAMARD, u)


def _run_ansatz(angles: np.ndarray, states: np.ndarray) -> np.ndarray:
    """Apply the ansatz for a batch of angle sets.

    ``angles`` has shape (B, L, q); ``states`` has shape (B, 2**q, K) and
    holds K input columns per batch entry. Qubit 0 is the most significant bit.
    """
    batch, layers, q = angles.shape
    k = states.shape[-1]
    psi = states.reshape((batch,) + (2,) * q + (k,))
    for layer in range(layers):
        for qubit in range(q):
            half = angles[:, layer, qubit] / 2.0
            c = np.cos(half).reshape((batch,) + (1,) * (q + 1))
            s = np.sin(half).reshape((batch,) + (1,) * (q + 1))
            axis = qubit + 1
            zero = np.take(psi, 0, axis=axis)
            one = np.take(psi, 1, axis=axis)
            psi = np.stack([c[:, 0] * zero - s[:, 0] * one, s[:, 0] * zero + c[:, 0] * one], axis=axis)
        if q > 1:
            for ctrl in range(q):
                tgt = (ctrl + 1) % q
                idx = [slice(None)] * psi.ndim
                idx[ctrl + 1] = 1
                sub = psi[tuple(idx)]
                flip_axis = tgt + 1 if tgt < ctrl else tgt
                psi[tuple(idx)] = np.flip(sub, axis=flip_axis).copy()
    return psi.reshape(batch, 2**q, k)


def pqc_state(params: PqcParams) -> np.ndarray:
    """Statevector V(beta)|0...0> of the layered Ry + ring-CNOT ansatz."""
    q = params.qubits
    start = np.zeros((1, 2**q, 1), dtype=float)
    start[0, 0, 0] = 1.0
    return _run_ansatz(params.angles[None], start)[0, :, 0].astype(np.complex128)


def pqc_unitary(params: PqcParams) -> np.ndarray:
    q = params.qubits
    eye = np.eye(2**q, dtype=float)[None]
    return _run_ansatz(params.angles[None], eye)[0].astype(np.complex128)


def state_fidelity(phi, psi) -> float:
    """|<phi|psi>|**2 for normalised pure states (global phase insensitive)."""
    return float(abs(np.vdot(phi, psi)) ** 2)


def _batch_states(angles: np.ndarray) -> np.ndarray:
    q = angles.shape[-1]
    start = np.zeros((angles.shape[0], 2**q, 1), dtype=float)
    start[:, 0, 0] = 1.0
    return _run_ansatz(angles, start)[:, :, 0]


def _infidelities(angles: np.ndarray, target: np.ndarray) -> np.ndarray:
    states = _batch_states(angles)
    return 1.0 - np.abs(states @ target.conj()) ** 2


def parameter_shift_gradient(angles: np.ndarray, target) -> np.ndarray:
    """Exact gradient of 1 - |<target|psi(angles)>|**2 by the +-pi/2 shift rule."""
    target = np.asarray(target, dtype=np.complex128)
    flat = angles.ravel()
    p = flat.size
    shifts = np.repeat(flat[None], 2 * p, axis=0)
    shifts[np.arange(p), np.arange(p)] += math.pi / 2
    shifts[p + np.arange(p), np.arange(p)] -= math.pi / 2
    costs = _infidelities(shifts.reshape((2 * p,) + angles.shape), target)
    return ((costs[:p] - costs[p:]) / 2.0).reshape(angles.shape)


def train_pqc(
    target,
    layers: int,
    seed: int = 0,
    learning_rate: float = 0.1,
    max_iter: int = 2000,
    restarts: int = 5,
    target_infidelity: float = 1e-3,
    stop_infidelity: float = 1e-12,
) -> tuple[PqcParams, float]:
    """Fit the ansatz to ``target`` by gradient descent on 1 - F.

    Each restart draws fresh angles from [-pi, pi). Restarts stop early once
    one reaches ``target_infidelity``; the best parameters seen are returned.

    Raises:
        TrainingError: no restart reaches ``target_infidelity``.
    """
    t = _check_target(target)
    if layers < 1:
        raise ValidationError(f"layers must be >= 1, got {layers}")
    q = t.size.bit_length() - 1
    if q == 0:
        raise ValidationError("a one-entry target needs no control qubits to train")
    best_angles, best_cost = None, math.inf
    for restart in range(restarts):
        rng = np.random.default_rng([seed, restart])
        angles = rng.uniform(-math.pi, math.pi, size=(layers, q))
        cost = float(_infidelities(angles[None], t)[0])
        for _ in range(max_iter):
            if cost <= stop_infidelity:
                break
            angles = angles - learning_rate * parameter_shift_gradient(angles, t)
            cost = float(_infidelities(angles[None], t)[0])
        if cost < best_cost:
            best_angles, best_cost = angles.copy(), cost
        if best_cost <= target_infidelity:
            break
    if best_cost > target_infidelity:
        raise TrainingError(
            f"best infidelity {best_cost:.3e} after {restarts} restarts exceeds "
            f"{target_infidelity:.1e}; try more layers"
        )
    return PqcParams(best_angles), max(best_cost, 0.0)


def pqc_prep(params: PqcParams, target=None) -> PrepCircuit:
    u = pqc_unitary(params)
    infid = 0.0 if target is None else 1.0 - state_fidelity(np.asarray(target), u[:, 0])
    return PrepCircuit(PQC, u, params, max(infid, 0.0))


# --- text format -----------------------------------------------------------


def format_params(params: PqcParams) -> str:
    lines = [str(params.layers)] + [f"{a:.17g}" for a in params.angles.ravel()]
    return "\n".join(lines) + "\n"


def parse_params(text: str) -> PqcParams:
    tokens = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.strip().startswith("#")]
    if not tokens:
        raise ValidationError("empty parameter file")
    try:
        layers = int(tokens[0])
        angles = [float(tok) for tok in tokens[1:]]
    except ValueError as exc:
        raise ValidationError(f"malformed parameter file: {exc}") from None
    return PqcParams.from_flat(layers, angles)


def save_params(params: PqcParams, path) -> None:
    Path(path).write_text(format_params(params))


def load_params(path) -> PqcParams:
    return parse_params(Path(path).read_text())
