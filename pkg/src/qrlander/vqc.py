"""Four-qubit variational Q-function.

Circuit per observation (8 features, 4 qubits):

    RX(f_i) on qubit i            i = 0..3
    CZ ring (0-1, 1-2, 2-3, 3-0)  optional, ``entangle_encoder``
    RX(f_{4+i}) on qubit i        i = 0..3
    D x [RX, RY, RZ per qubit (trainable) ; CZ ring]

Q(s, a) = w_a * <Z_a>.  Gradients of the rotation angles come from the
two-term shift rule evaluated on shifted circuits; gradients of ``w`` are
``<Z_a>`` directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np

from .errors import InputError, StructureError
from .quantum import (
    Circuit,
    Gate,
    Program,
    apply_1q_inplace,
    apply_2q_inplace,
    rotation_matrix,
    run_program_inplace,
    run_program_snapshots,
    z_expectations,
    z_signs,
)

NUM_QUBITS = 4
NUM_FEATURES = 8
NUM_ACTIONS = 4
AXES = ("RX", "RY", "RZ")
CZ_RING = ((0, 1), (1, 2), (2, 3), (3, 0))
CONTACT_ANGLE = np.pi / 4
SHIFT = np.pi / 2

_DIM = 1 << NUM_QUBITS
_RING_SIGNS = np.ones(_DIM)
for _a, _b in CZ_RING:
    _RING_SIGNS *= np.where((z_signs(NUM_QUBITS)[_a] < 0) & (z_signs(NUM_QUBITS)[_b] < 0), -1.0, 1.0)


@dataclass
class PolicyParams:
    angles: np.ndarray  # (depth, 4 qubits, 3 axes)
    output_weights: np.ndarray  # (4,)

    def __post_init__(self):
        self.angles = np.array(self.angles, dtype=float)
        self.output_weights = np.array(self.output_weights, dtype=float)
        if self.angles.ndim != 3 or self.angles.shape[1:] != (NUM_QUBITS, 3) or len(self.angles) < 1:
            raise StructureError(f"angles must have shape (D>=1, 4, 3), got {self.angles.shape}")
        if self.output_weights.shape != (NUM_ACTIONS,):
            raise StructureError("output_weights must have 4 entries")
        if not (np.all(np.isfinite(self.angles)) and np.all(np.isfinite(self.output_weights))):
            raise InputError("policy parameters must be finite")

    @property
    def depth(self) -> int:
        return self.angles.shape[0]

    @property
    def num_trainable(self) -> int:
        return self.angles.size + self.output_weights.size

    @classmethod
    def zeros(cls, depth: int) -> "PolicyParams":
        return cls(np.zeros((depth, NUM_QUBITS, 3)), np.ones(NUM_ACTIONS))

    @classmethod
    def random(cls, depth: int, rng: np.random.Generator, weight_init: float = 1.0) -> "PolicyParams":
        return cls(
            rng.uniform(0.0, 2 * np.pi, size=(depth, NUM_QUBITS, 3)),
            np.full(NUM_ACTIONS, float(weight_init)),
        )

    def flat(self) -> np.ndarray:
        """Angles in (layer, qubit, axis) order, then the four output weights."""
        return np.concatenate([self.angles.ravel(), self.output_weights])

    @classmethod
    def from_flat(cls, vec, depth: int) -> "PolicyParams":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (12 * depth + NUM_ACTIONS,):
            raise StructureError(f"expected {12 * depth + 4} values for depth {depth}, got {vec.shape}")
        return cls(vec[:-NUM_ACTIONS].reshape(depth, NUM_QUBITS, 3), vec[-NUM_ACTIONS:])

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.angles.copy(), self.output_weights.copy())


def encode(obs) -> np.ndarray:
    """Map observations ``(..., 8)`` to encoding angles in (-pi/2, pi/2).

    Continuous fields go through arctan; the two leg-contact flags map to
    0 or pi/4.
    """
    obs = np.asarray(obs, dtype=float)
    if obs.shape[-1] != NUM_FEATURES:
        raise StructureError(f"observation must have 8 fields, got {obs.shape}")
    if not np.all(np.isfinite(obs)):
        raise InputError("observation contains non-finite values")
    feats = np.arctan(obs)
    feats[..., 6:] = np.where(obs[..., 6:] > 0.5, CONTACT_ANGLE, 0.0)
    return feats


# -- circuit description (used for inspection and the dense reference) --------


def encoder_gates(features, entangle_encoder: bool = True) -> list:
    f = np.asarray(features, dtype=float)
    gates = [Gate.rx(q, f[q]) for q in range(NUM_QUBITS)]
    if entangle_encoder:
        gates += [Gate.cz(a, b) for a, b in CZ_RING]
    gates += [Gate.rx(q, f[NUM_QUBITS + q]) for q in range(NUM_QUBITS)]
    return gates


def variational_gates(params: PolicyParams) -> list:
    gates = []
    for layer in params.angles:
        for q in range(NUM_QUBITS):
            for axis, kind in enumerate(AXES):
                gates.append(Gate(kind, (q,), float(layer[q, axis])))
        gates += [Gate.cz(a, b) for a, b in CZ_RING]
    return gates


def build_circuit(params: PolicyParams, features, entangle_encoder: bool = True) -> Circuit:
    return Circuit(NUM_QUBITS, encoder_gates(features, entangle_encoder) + variational_gates(params))


def _trainable_slots(depth: int) -> np.ndarray:
    """For each gate of the variational program: trainable index or -1."""
    per_layer = NUM_QUBITS * 3 + len(CZ_RING)
    slots = -np.ones(depth * per_layer, dtype=np.int64)
    k = 0
    for layer in range(depth):
        for j in range(NUM_QUBITS * 3):
            slots[layer * per_layer + j] = k
            k += 1
    return slots


@lru_cache(maxsize=None)
def _program_layout(depth: int) -> tuple:
    gates = variational_gates(PolicyParams.zeros(depth))
    prog = Program.from_gates(gates, NUM_QUBITS)
    rot = np.flatnonzero(prog.kinds == 0)
    return prog.kinds, prog.q0, prog.q1, rot


@lru_cache(maxsize=None)
def _shift_mats(depth: int) -> np.ndarray:
    out = np.empty((12 * depth, 2, 2, 2), dtype=complex)
    for k in range(12 * depth):
        kind = AXES[k % 3]
        out[k, 0] = rotation_matrix(kind, SHIFT)
        out[k, 1] = rotation_matrix(kind, -SHIFT)
    return out


def _rotation_mats(angles: np.ndarray) -> np.ndarray:
    """2x2 matrices for an (..., 3) array of (RX, RY, RZ) angles -> (..., 3, 2, 2)."""
    c, s = np.cos(angles / 2), np.sin(angles / 2)
    m = np.zeros(angles.shape + (2, 2), dtype=complex)
    m[..., 0, 0, 0] = m[..., 0, 1, 1] = c[..., 0]
    m[..., 0, 0, 1] = m[..., 0, 1, 0] = -1j * s[..., 0]
    m[..., 1, 0, 0] = m[..., 1, 1, 1] = c[..., 1]
    m[..., 1, 0, 1] = -s[..., 1]
    m[..., 1, 1, 0] = s[..., 1]
    m[..., 2, 0, 0] = c[..., 2] - 1j * s[..., 2]
    m[..., 2, 1, 1] = c[..., 2] + 1j * s[..., 2]
    return m


def _variational_program(params: PolicyParams) -> tuple:
    """(kinds, q0, q1, mats) arrays of the trainable block for the numba kernels."""
    kinds, q0, q1, rot = _program_layout(params.depth)
    mats = np.zeros((len(kinds), 2, 2), dtype=complex)
    mats[rot] = _rotation_mats(params.angles).reshape(-1, 2, 2)
    return kinds, q0, q1, mats


# -- batched evaluation ---------------------------------------------------------


def _rx_columns(angles: np.ndarray) -> tuple:
    return np.cos(angles / 2), -1j * np.sin(angles / 2)


def encode_states(features, entangle_encoder: bool = True) -> np.ndarray:
    """Amplitudes ``(B, 16)`` after the encoding block for features ``(B, 8)``."""
    f = np.atleast_2d(np.asarray(features, dtype=float))
    c, s = _rx_columns(f[:, :NUM_QUBITS])
    psi = np.stack([c[:, 0], s[:, 0]], axis=1)
    for q in range(1, NUM_QUBITS):
        qubit = np.stack([c[:, q], s[:, q]], axis=1)
        psi = (psi[:, :, None] * qubit[:, None, :]).reshape(len(f), -1)
    if entangle_encoder:
        psi = psi * _RING_SIGNS
    c, s = _rx_columns(f[:, NUM_QUBITS:])
    for q in range(NUM_QUBITS):
        v = psi.reshape(len(f), 1 << q, 2, -1)
        cq, sq = c[:, q, None, None], s[:, q, None, None]
        a, b = v[:, :, 0, :], v[:, :, 1, :]
        psi = np.stack([cq * a + sq * b, sq * a + cq * b], axis=2).reshape(len(f), -1)
    return psi


def final_states(params: PolicyParams, features, entangle_encoder: bool = True) -> np.ndarray:
    psi = np.ascontiguousarray(encode_states(features, entangle_encoder))
    kinds, q0, q1, mats = _variational_program(params)
    run_program_inplace(psi, NUM_QUBITS, kinds, q0, q1, mats)
    return psi


def expectations(params: PolicyParams, features, entangle_encoder: bool = True) -> np.ndarray:
    """<Z_a> for a = 0..3, shape ``(B, 4)`` (or ``(4,)`` for a single feature vector)."""
    single = np.ndim(features) == 1
    z = z_expectations(final_states(params, features, entangle_encoder), NUM_QUBITS)
    z = np.clip(z, -1.0, 1.0)
    return z[0] if single else z


def forward(params: PolicyParams, features, entangle_encoder: bool = True) -> np.ndarray:
    """Action values ``w_a * <Z_a>``."""
    return expectations(params, features, entangle_encoder) * params.output_weights


# -- shift-rule gradient ----------------------------------------------------------


@numba.njit(cache=True)
def _shifted_suffixes(kinds, q0, q1, mats, slots, shift_mats, num_trainable, num_qubits):
    """Unitaries of the shifted remainder circuits.

    Entry ``[k, s]`` is S_k R_k(+-pi/2) where S_k is the product of every gate
    after trainable gate k and R_k is a rotation about that gate's own axis.
    Since R(t + s) = R(s) R(t), applying it to the state snapshot taken right
    after gate k runs the circuit with angle k shifted by s.
    """
    dim = 1 << num_qubits
    m = np.zeros((dim, dim), dtype=np.complex128)
    for i in range(dim):
        m[i, i] = 1.0
    out = np.empty((num_trainable, 2, dim, dim), dtype=np.complex128)
    for p in range(kinds.shape[0] - 1, -1, -1):
        k = slots[p]
        if k >= 0:
            for s in range(2):
                out[k, s] = m
                apply_1q_inplace(out[k, s], shift_mats[k, s].T.copy(), q0[p], num_qubits)
        # right-multiply by G: rows of m get G^T
        if kinds[p] == 0:
            apply_1q_inplace(m, mats[p].T.copy(), q0[p], num_qubits)
        else:
            apply_2q_inplace(m, kinds[p], q0[p], q1[p], num_qubits)
    return out


def shifted_expectations(params: PolicyParams, features, entangle_encoder: bool = True):
    """Evaluate every trainable-angle-shifted circuit at +pi/2 and -pi/2.

    Returns ``(plus, minus)`` each of shape ``(K, B, 4)`` with K = 12 * depth:
    <Z_a> of sample b when angle k alone is shifted.
    """
    feats = np.atleast_2d(np.asarray(features, dtype=float))
    psi = np.ascontiguousarray(encode_states(feats, entangle_encoder))
    kinds, q0, q1, mats = _variational_program(params)
    slots = _trainable_slots(params.depth)
    k_total = params.angles.size
    snaps = np.empty((k_total, len(feats), _DIM), dtype=complex)
    run_program_snapshots(psi, NUM_QUBITS, kinds, q0, q1, mats, slots, snaps)
    suffix = _shifted_suffixes(kinds, q0, q1, mats, slots, _shift_mats(params.depth), k_total, NUM_QUBITS)
    chi = np.matmul(snaps, suffix.reshape(k_total, 2 * _DIM, _DIM).transpose(0, 2, 1))
    ez = _z_readout(chi, z_signs(NUM_QUBITS))
    return ez[0], ez[1]


@numba.njit(cache=True)
def _z_readout(chi, zs):
    """``chi[k, b, s*dim + i]`` amplitudes -> <Z_a> array ``(2, K, B, A)``."""
    n_k, n_b, width = chi.shape
    n_a, dim = zs.shape
    out = np.zeros((2, n_k, n_b, n_a))
    for k in range(n_k):
        for b in range(n_b):
            for s in range(2):
                for i in range(dim):
                    v = chi[k, b, s * dim + i]
                    pr = v.real * v.real + v.imag * v.imag
                    for a in range(n_a):
                        out[s, k, b, a] += zs[a, i] * pr
    return out


def parameter_shift_grad(
    params: PolicyParams, features, dloss_dq, entangle_encoder: bool = True
) -> np.ndarray:
    """Gradient of a loss over all 12*D + 4 trainable parameters.

    ``dloss_dq`` is ``(4,)`` for one feature vector or ``(B, 4)`` for a batch;
    batch contributions are summed.
    """
    feats = np.atleast_2d(np.asarray(features, dtype=float))
    dq = np.atleast_2d(np.asarray(dloss_dq, dtype=float))
    if dq.shape != (len(feats), NUM_ACTIONS):
        raise StructureError(f"dloss_dq shape {dq.shape} does not match batch of {len(feats)}")
    plus, minus = shifted_expectations(params, feats, entangle_encoder)
    dz = (plus - minus) / 2.0  # (K, B, 4)
    coef = dq * params.output_weights
    grad_angles = dz.reshape(len(dz), -1) @ coef.ravel()
    z = expectations(params, feats, entangle_encoder)
    grad_weights = np.einsum("ba,ba->a", dq, z)
    return np.concatenate([grad_angles, grad_weights])
