"""Exact statevector simulation for small qubit registers.

Qubit 0 is the most significant bit of the basis index, so ``|10>`` on two
qubits is index 2.  Rotations follow ``R_a(t) = exp(-i t A / 2)``.

Gate application works on amplitude arrays with arbitrary leading batch
axes: an array of shape ``(..., 2**q)`` is updated through strided pair
updates, never through a full ``2**q x 2**q`` matrix.  The dense-matrix
helpers at the bottom of this module exist for verification only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Optional, Sequence

import numba
import numpy as np

from .errors import ConfigError, StructureError

MAX_QUBITS = 16
ROTATIONS = ("RX", "RY", "RZ")
ENTANGLERS = ("CZ", "CNOT")

_I2 = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def rotation_matrix(kind: str, angle: float) -> np.ndarray:
    """2x2 unitary of ``RX``/``RY``/``RZ`` at ``angle`` radians."""
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    if kind == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)
    if kind == "RY":
        return np.array([[c, -s], [s, c]], dtype=complex)
    if kind == "RZ":
        return np.array([[c - 1j * s, 0], [0, c + 1j * s]], dtype=complex)
    raise StructureError(f"not a rotation kind: {kind!r}")


@dataclass(frozen=True)
class Gate:
    kind: str
    targets: tuple
    angle: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        if self.kind in ROTATIONS:
            if len(self.targets) != 1:
                raise StructureError(f"{self.kind} takes exactly one target")
            if self.angle is None or not np.isfinite(self.angle):
                raise StructureError(f"{self.kind} needs a finite angle")
        elif self.kind in ENTANGLERS:
            if len(self.targets) != 2 or self.targets[0] == self.targets[1]:
                raise StructureError(f"{self.kind} takes two distinct targets")
            if self.angle is not None:
                raise StructureError(f"{self.kind} has no angle")
        else:
            raise StructureError(f"unknown gate kind {self.kind!r}")
        if min(self.targets) < 0:
            raise StructureError(f"negative target in {self.targets}")

    @classmethod
    def rx(cls, qubit: int, angle: float) -> "Gate":
        return cls("RX", (qubit,), float(angle))

    @classmethod
    def ry(cls, qubit: int, angle: float) -> "Gate":
        return cls("RY", (qubit,), float(angle))

    @classmethod
    def rz(cls, qubit: int, angle: float) -> "Gate":
        return cls("RZ", (qubit,), float(angle))

    @classmethod
    def cz(cls, a: int, b: int) -> "Gate":
        return cls("CZ", (a, b))

    @classmethod
    def cnot(cls, control: int, target: int) -> "Gate":
        return cls("CNOT", (control, target))

    def matrix(self) -> np.ndarray:
        """Local unitary: 2x2 for rotations, 4x4 (first target = high bit) otherwise."""
        if self.kind in ROTATIONS:
            return rotation_matrix(self.kind, self.angle)
        if self.kind == "CZ":
            return np.diag([1, 1, 1, -1]).astype(complex)
        return np.array(
            [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
        )

    def inverse(self) -> "Gate":
        if self.kind in ROTATIONS:
            return Gate(self.kind, self.targets, -self.angle)
        return self  # CZ and CNOT are self-inverse

    def check(self, num_qubits: int) -> None:
        if max(self.targets) >= num_qubits:
            raise StructureError(
                f"{self.kind} target {self.targets} out of range for {num_qubits} qubits"
            )


def _check_num_qubits(q: int) -> None:
    if not isinstance(q, (int, np.integer)) or not 1 <= q <= MAX_QUBITS:
        raise ConfigError(f"qubit count must be in [1, {MAX_QUBITS}], got {q!r}")


def _split(amps: np.ndarray, qubit: int, num_qubits: int) -> np.ndarray:
    """View ``(..., 2**q)`` as ``(..., hi, 2, lo)`` with the middle axis = ``qubit``."""
    lo = 1 << (num_qubits - 1 - qubit)
    return amps.reshape(amps.shape[:-1] + (-1, 2, lo))


def apply_matrix_1q(
    amps: np.ndarray, matrix: np.ndarray, qubit: int, num_qubits: int
) -> np.ndarray:
    """Apply a 2x2 matrix to ``qubit`` of every state in ``amps`` (new array)."""
    v = _split(amps, qubit, num_qubits)
    a, b = v[..., 0, :], v[..., 1, :]
    out = np.empty_like(v)
    (u00, u01), (u10, u11) = matrix
    np.multiply(a, u00, out=out[..., 0, :])
    out[..., 0, :] += u01 * b
    np.multiply(a, u10, out=out[..., 1, :])
    out[..., 1, :] += u11 * b
    return out.reshape(amps.shape)


def _pair_view(amps: np.ndarray, a: int, b: int, num_qubits: int) -> tuple:
    """Index tuples selecting the four (bit_a, bit_b) sub-blocks of ``amps``."""
    hi, lo = sorted((a, b))
    shape = amps.shape[:-1] + (
        1 << hi,
        2,
        1 << (lo - hi - 1),
        2,
        1 << (num_qubits - 1 - lo),
    )
    view = amps.reshape(shape)

    def block(bit_a: int, bit_b: int):
        bits = {a: bit_a, b: bit_b}
        return (Ellipsis, bits[hi], slice(None), bits[lo], slice(None))

    return view, block


def apply_to_amplitudes(amps: np.ndarray, gate: Gate, num_qubits: int) -> np.ndarray:
    """Apply ``gate`` to a batch of amplitude arrays of shape ``(..., 2**q)``.

    Returns a fresh array; ``amps`` is left untouched.
    """
    if amps.shape[-1] != 1 << num_qubits:
        raise StructureError(
            f"amplitude axis has length {amps.shape[-1]}, expected {1 << num_qubits}"
        )
    gate.check(num_qubits)
    if gate.kind in ROTATIONS:
        q = gate.targets[0]
        if gate.kind == "RZ":
            half = gate.angle / 2
            out = _split(amps, q, num_qubits).copy()
            out[..., 0, :] *= np.exp(-1j * half)
            out[..., 1, :] *= np.exp(1j * half)
            return out.reshape(amps.shape)
        return apply_matrix_1q(amps, gate.matrix(), q, num_qubits)

    a, b = gate.targets
    out = amps.copy()
    view, block = _pair_view(out, a, b, num_qubits)
    if gate.kind == "CZ":
        view[block(1, 1)] *= -1
    else:  # CNOT: control a, target b
        tmp = view[block(1, 0)].copy()
        view[block(1, 0)] = view[block(1, 1)]
        view[block(1, 1)] = tmp
    return out


def z_signs(num_qubits: int) -> np.ndarray:
    """``(q, 2**q)`` table of +1/-1: the Pauli-Z eigenvalue of each qubit per basis index."""
    idx = np.arange(1 << num_qubits)
    bits = (idx[None, :] >> (num_qubits - 1 - np.arange(num_qubits))[:, None]) & 1
    return 1.0 - 2.0 * bits


def z_expectations(amps: np.ndarray, num_qubits: int) -> np.ndarray:
    """<Z_i> for every qubit i, batched over leading axes -> ``(..., q)``."""
    probs = amps.real**2 + amps.imag**2
    return probs @ z_signs(num_qubits).T


@dataclass(frozen=True)
class StateVector:
    num_qubits: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        _check_num_qubits(self.num_qubits)
        amps = np.array(self.amplitudes, dtype=complex)
        if amps.shape != (1 << self.num_qubits,):
            raise StructureError(
                f"{self.num_qubits} qubits need {1 << self.num_qubits} amplitudes, "
                f"got shape {amps.shape}"
            )
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    def norm(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


def new_zero_state(q: int) -> StateVector:
    """|0...0> on ``q`` qubits."""
    _check_num_qubits(q)
    amps = np.zeros(1 << q, dtype=complex)
    amps[0] = 1.0
    return StateVector(q, amps)


def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    return StateVector(
        state.num_qubits, apply_to_amplitudes(state.amplitudes, gate, state.num_qubits)
    )


def expectation_z(state: StateVector, qubit: int) -> float:
    if not 0 <= qubit < state.num_qubits:
        raise StructureError(f"qubit {qubit} out of range for {state.num_qubits} qubits")
    value = float(z_expectations(state.amplitudes, state.num_qubits)[qubit])
    return min(1.0, max(-1.0, value))


@dataclass
class Circuit:
    num_qubits: int
    gates: list = field(default_factory=list)

    def __post_init__(self):
        _check_num_qubits(self.num_qubits)
        self.gates = list(self.gates)
        for g in self.gates:
            g.check(self.num_qubits)

    def append(self, gate: Gate) -> "Circuit":
        gate.check(self.num_qubits)
        self.gates.append(gate)
        return self

    def extend(self, gates: Iterable[Gate]) -> "Circuit":
        for g in gates:
            self.append(g)
        return self

    def __len__(self) -> int:
        return len(self.gates)

    def run(self, state: Optional[StateVector] = None) -> StateVector:
        if state is None:
            state = new_zero_state(self.num_qubits)
        elif state.num_qubits != self.num_qubits:
            raise StructureError("state and circuit disagree on qubit count")
        amps = state.amplitudes
        for g in self.gates:
            amps = apply_to_amplitudes(amps, g, self.num_qubits)
        return StateVector(self.num_qubits, amps)


def random_circuit(
    num_qubits: int, num_gates: int, rng: np.random.Generator
) -> Circuit:
    """Uniformly mixed rotations and (when q >= 2) entanglers with random angles."""
    kinds = ROTATIONS + (ENTANGLERS if num_qubits > 1 else ())
    circ = Circuit(num_qubits)
    for _ in range(num_gates):
        kind = kinds[rng.integers(len(kinds))]
        if kind in ROTATIONS:
            q = int(rng.integers(num_qubits))
            circ.append(Gate(kind, (q,), float(rng.uniform(-2 * np.pi, 2 * np.pi))))
        else:
            a, b = rng.choice(num_qubits, size=2, replace=False)
            circ.append(Gate(kind, (int(a), int(b))))
    return circ


# -- compiled gate programs ----------------------------------------------------
#
# A program is a flat encoding of a gate list that numba kernels can run over a
# (batch, 2**q) amplitude array in place: ``kinds`` (OP_1Q/OP_CZ/OP_CNOT),
# ``q0``/``q1`` targets and ``mats`` holding the 2x2 matrix of every OP_1Q entry.

OP_1Q, OP_CZ, OP_CNOT = 0, 1, 2


@dataclass
class Program:
    num_qubits: int
    kinds: np.ndarray
    q0: np.ndarray
    q1: np.ndarray
    mats: np.ndarray

    @classmethod
    def from_gates(cls, gates: Sequence[Gate], num_qubits: int) -> "Program":
        n = len(gates)
        kinds = np.zeros(n, dtype=np.int64)
        q0 = np.zeros(n, dtype=np.int64)
        q1 = np.zeros(n, dtype=np.int64)
        mats = np.zeros((n, 2, 2), dtype=complex)
        for i, g in enumerate(gates):
            g.check(num_qubits)
            q0[i] = g.targets[0]
            if g.kind in ROTATIONS:
                mats[i] = g.matrix()
            else:
                kinds[i] = OP_CZ if g.kind == "CZ" else OP_CNOT
                q1[i] = g.targets[1]
        return cls(num_qubits, kinds, q0, q1, mats)

    def run(self, amps: np.ndarray) -> np.ndarray:
        """Run on ``(..., 2**q)`` amplitudes, returning a new array."""
        flat = np.ascontiguousarray(amps, dtype=complex).reshape(-1, amps.shape[-1]).copy()
        if flat.shape[1] != 1 << self.num_qubits:
            raise StructureError("amplitude length does not match program width")
        run_program_inplace(flat, self.num_qubits, self.kinds, self.q0, self.q1, self.mats)
        return flat.reshape(amps.shape)


@numba.njit(cache=True)
def apply_1q_inplace(amps, u, qubit, num_qubits):
    stride = 1 << (num_qubits - 1 - qubit)
    dim = amps.shape[1]
    u00, u01, u10, u11 = u[0, 0], u[0, 1], u[1, 0], u[1, 1]
    for n in range(amps.shape[0]):
        for base in range(0, dim, 2 * stride):
            for i0 in range(base, base + stride):
                i1 = i0 + stride
                a = amps[n, i0]
                b = amps[n, i1]
                amps[n, i0] = u00 * a + u01 * b
                amps[n, i1] = u10 * a + u11 * b


@numba.njit(cache=True)
def apply_2q_inplace(amps, kind, a, b, num_qubits):
    ma = 1 << (num_qubits - 1 - a)
    mb = 1 << (num_qubits - 1 - b)
    dim = amps.shape[1]
    for n in range(amps.shape[0]):
        for i in range(dim):
            if (i & ma) == 0:
                continue
            if kind == 1:
                if i & mb:
                    amps[n, i] = -amps[n, i]
            elif (i & mb) == 0:
                j = i | mb
                tmp = amps[n, i]
                amps[n, i] = amps[n, j]
                amps[n, j] = tmp


@numba.njit(cache=True)
def run_program_inplace(amps, num_qubits, kinds, q0, q1, mats):
    for i in range(kinds.shape[0]):
        if kinds[i] == 0:
            apply_1q_inplace(amps, mats[i], q0[i], num_qubits)
        else:
            apply_2q_inplace(amps, kinds[i], q0[i], q1[i], num_qubits)


@numba.njit(cache=True)
def run_program_snapshots(amps, num_qubits, kinds, q0, q1, mats, snap_slot, snaps):
    """Like ``run_program_inplace`` but copies the batch into ``snaps[snap_slot[i]]``
    right after gate ``i`` whenever ``snap_slot[i] >= 0``."""
    for i in range(kinds.shape[0]):
        if kinds[i] == 0:
            apply_1q_inplace(amps, mats[i], q0[i], num_qubits)
        else:
            apply_2q_inplace(amps, kinds[i], q0[i], q1[i], num_qubits)
        if snap_slot[i] >= 0:
            snaps[snap_slot[i]] = amps


# -- dense reference path (verification only) ---------------------------------


def _kron_all(mats: Sequence[np.ndarray]) -> np.ndarray:
    return reduce(np.kron, mats)


def dense_unitary(gate: Gate, num_qubits: int) -> np.ndarray:
    """Full ``2**q x 2**q`` matrix of ``gate`` built from Kronecker products."""
    gate.check(num_qubits)
    if gate.kind in ROTATIONS:
        mats = [_I2] * num_qubits
        mats[gate.targets[0]] = gate.matrix()
        return _kron_all(mats)
    a, b = gate.targets
    p0 = np.diag([1, 0]).astype(complex)
    p1 = np.diag([0, 1]).astype(complex)
    off = [_I2] * num_qubits
    off[a] = p0
    on = [_I2] * num_qubits
    on[a] = p1
    on[b] = PAULI_Z if gate.kind == "CZ" else PAULI_X
    return _kron_all(off) + _kron_all(on)


def dense_circuit_unitary(circuit: Circuit) -> np.ndarray:
    u = np.eye(1 << circuit.num_qubits, dtype=complex)
    for g in circuit.gates:
        u = dense_unitary(g, circuit.num_qubits) @ u
    return u


def dense_z_observable(qubit: int, num_qubits: int) -> np.ndarray:
    mats = [_I2] * num_qubits
    mats[qubit] = PAULI_Z
    return _kron_all(mats)
