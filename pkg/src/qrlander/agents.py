"""Q-learning agents (variational circuit and MLP) and a one-step actor-critic.

All agents share one surface:

* ``act(state, epsilon, greedy=False) -> int``
* ``observe(transition) -> list[float]``: stores the step, trains if due and
  returns the losses of any updates it performed
* ``end_episode()``
* ``count_params() -> int``
* ``state_dict()`` / ``load_state_dict(doc)`` for JSON checkpoints
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import List, Optional, Sequence

import numpy as np

from . import vqc
from .errors import ConfigError, FormatError, StructureError, UsageError
from .nn import AdamState, Mlp, adam_step, mlp_backward, mlp_forward

NUM_ACTIONS = 4
STATE_DIM = 8
AGENT_KINDS = ("qrl", "dqn", "ac")


@dataclass
class AgentConfig:
    gamma: float = 0.99
    lr: float = 0.0005
    hidden_layers: int = 3
    width: int = 64
    vqc_depth: int = 5
    entangle_encoder: bool = True
    angle_lr: float = 0.005
    output_lr: float = 0.5
    weight_init: float = 50.0
    batch_size: int = 64
    buffer_capacity: int = 50_000
    learn_start: int = 1000
    target_sync: int = 4000
    double_q: bool = True
    train_every: int = 1
    eps_start: float = 1.0
    eps_end: float = 0.01
    eps_decay: float = 0.999
    ac_hidden_layers: int = 2
    ac_segment: int = 64
    ac_nstep: int = 64
    entropy_coef: float = 0.01

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("gamma must be in [0, 1]")
        for name in ("lr", "angle_lr", "output_lr"):
            if not (math.isfinite(getattr(self, name)) and getattr(self, name) > 0):
                raise ConfigError(f"{name} must be positive")
        ints = ("hidden_layers", "width", "vqc_depth", "batch_size", "buffer_capacity",
                "target_sync", "train_every", "ac_hidden_layers", "ac_segment", "ac_nstep")
        for name in ints:
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
            setattr(self, name, int(getattr(self, name)))
        self.learn_start = int(self.learn_start)
        if self.learn_start < 0:
            raise ConfigError("learn_start must be >= 0")
        if self.batch_size > self.buffer_capacity:
            raise ConfigError("batch_size exceeds buffer_capacity")
        if not 0.0 <= self.eps_end <= self.eps_start <= 1.0:
            raise ConfigError("need 0 <= eps_end <= eps_start <= 1")
        if not 0.0 < self.eps_decay <= 1.0:
            raise ConfigError("eps_decay must be in (0, 1]")
        if not self.entropy_coef >= 0:
            raise ConfigError("entropy_coef must be >= 0")


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    done: bool

    def __post_init__(self):
        s = np.asarray(self.state, dtype=float)
        s2 = np.asarray(self.next_state, dtype=float)
        if s.shape != (STATE_DIM,) or s2.shape != (STATE_DIM,):
            raise StructureError("states must have 8 entries")
        if not 0 <= int(self.action) < NUM_ACTIONS:
            raise StructureError(f"action {self.action} out of range")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(s2)) and math.isfinite(self.reward)):
            raise StructureError("transition values must be finite")
        object.__setattr__(self, "state", s)
        object.__setattr__(self, "next_state", s2)
        object.__setattr__(self, "action", int(self.action))
        object.__setattr__(self, "reward", float(self.reward))
        object.__setattr__(self, "done", bool(self.done))


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray

    def __len__(self):
        return len(self.actions)

    @classmethod
    def from_transitions(cls, items: Sequence[Transition]) -> "Batch":
        return cls(
            np.array([t.state for t in items]).reshape(-1, STATE_DIM),
            np.array([t.action for t in items], dtype=np.int64),
            np.array([t.reward for t in items], dtype=float),
            np.array([t.next_state for t in items]).reshape(-1, STATE_DIM),
            np.array([t.done for t in items], dtype=bool),
        )


class ReplayBuffer:
    """Fixed-capacity ring of transitions stored column-wise."""

    def __init__(self, capacity: int, rng: np.random.Generator):
        if capacity < 1:
            raise ConfigError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.rng = rng
        self.states = np.zeros((capacity, STATE_DIM))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, STATE_DIM))
        self.dones = np.zeros(capacity, dtype=bool)
        self.size = 0
        self.cursor = 0

    def __len__(self):
        return self.size

    def add(self, t: Transition) -> None:
        i = self.cursor
        self.states[i] = t.state
        self.actions[i] = t.action
        self.rewards[i] = t.reward
        self.next_states[i] = t.next_state
        self.dones[i] = t.done
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int) -> Batch:
        """Distinct indices within one batch."""
        if batch_size > self.size:
            raise UsageError(f"cannot sample {batch_size} from {self.size} transitions")
        idx = self.rng.choice(self.size, size=batch_size, replace=False)
        return Batch(self.states[idx], self.actions[idx], self.rewards[idx],
                     self.next_states[idx], self.dones[idx])


@dataclass(frozen=True)
class EpsilonSchedule:
    eps_start: float = 1.0
    eps_end: float = 0.01
    decay: float = 0.999

    def value(self, episode: int) -> float:
        return max(self.eps_end, self.eps_start * self.decay ** max(int(episode), 0))


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def select_action(values, epsilon: float, rng: np.random.Generator, sample_softmax: bool = False) -> int:
    """Epsilon-greedy over Q-values, or a softmax draw over logits.

    In softmax mode ``epsilon`` is ignored.  Greedy ties go to the lowest index.
    """
    values = np.asarray(values, dtype=float)
    if sample_softmax:
        p = softmax(values)
        return int(min(np.searchsorted(np.cumsum(p), rng.random(), side="right"), len(p) - 1))
    if not 0.0 <= epsilon <= 1.0:
        raise ConfigError(f"epsilon {epsilon} outside [0, 1]")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(len(values)))
    return int(np.argmax(values))


def td_target(reward, next_q, done, gamma: float = 0.99):
    """``reward`` if done, else ``reward + gamma * max(next_q)``; broadcasts over a batch."""
    next_q = np.asarray(next_q, dtype=float)
    best = next_q.max(axis=-1)
    out = np.asarray(reward, dtype=float) + gamma * best * (1.0 - np.asarray(done, dtype=float))
    return float(out) if out.ndim == 0 else out


def _rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def _set_rng_state(rng: np.random.Generator, state: dict) -> None:
    try:
        rng.bit_generator.state = state
    except (TypeError, ValueError, KeyError) as exc:
        raise FormatError(f"bad rng state: {exc}") from exc


def _adam_dict(state: AdamState) -> dict:
    return {
        "step_count": state.step_count,
        "first_moment": [m.ravel().tolist() for m in state.first_moment],
        "second_moment": [v.ravel().tolist() for v in state.second_moment],
    }


def _load_adam(state: AdamState, doc: dict) -> None:
    first, second = doc["first_moment"], doc["second_moment"]
    if len(first) != len(state.first_moment) or len(second) != len(state.second_moment):
        raise FormatError("optimizer moment count does not match the model")
    for dst, src in zip(state.first_moment + state.second_moment, list(first) + list(second)):
        arr = np.asarray(src, dtype=float)
        if arr.size != dst.size:
            raise FormatError("optimizer moment size does not match the model")
        dst[...] = arr.reshape(dst.shape)
    state.step_count = int(doc["step_count"])


def _mlp_dict(net: Mlp) -> list:
    return [
        {"shape": list(w.shape), "weights": w.ravel().tolist(), "bias": b.tolist()}
        for w, b in zip(net.weights, net.biases)
    ]


def _load_mlp(net: Mlp, layers: list) -> None:
    if len(layers) != len(net.weights):
        raise FormatError("layer count does not match the model")
    arrays = []
    for layer, w in zip(layers, net.weights):
        if list(layer["shape"]) != list(w.shape):
            raise FormatError(f"layer shape {layer['shape']} != {list(w.shape)}")
        arrays += [np.asarray(layer["weights"], float).reshape(w.shape), np.asarray(layer["bias"], float)]
    try:
        net.set_params(arrays)
    except (StructureError, ValueError) as exc:
        raise FormatError(str(exc)) from exc


class Agent:
    kind = ""

    def __init__(self, config: AgentConfig, rng: np.random.Generator):
        self.config = config
        self.rng = rng
        self.updates = 0

    def act(self, state, epsilon: float, greedy: bool = False) -> int:
        raise NotImplementedError

    def observe(self, transition: Transition) -> List[float]:
        raise NotImplementedError

    def end_episode(self) -> List[float]:
        return []

    def count_params(self) -> int:
        raise NotImplementedError

    def state_dict(self) -> dict:
        raise NotImplementedError

    def load_state_dict(self, doc: dict) -> None:
        raise NotImplementedError


class _QAgent(Agent):
    """Replay, target copy and the TD update loop shared by QRL and DQN."""

    def __init__(self, config: AgentConfig, rng: np.random.Generator):
        super().__init__(config, rng)
        self.buffer = ReplayBuffer(config.buffer_capacity, rng)
        self.steps_seen = 0

    # model-specific hooks
    def q_values(self, states, target: bool = False) -> np.ndarray:
        raise NotImplementedError

    def _apply_gradient(self, states, dloss_dq) -> None:
        raise NotImplementedError

    def sync_target(self) -> None:
        raise NotImplementedError

    def act(self, state, epsilon: float, greedy: bool = False) -> int:
        q = self.q_values(np.asarray(state, dtype=float))
        return select_action(q, 0.0 if greedy else epsilon, self.rng)

    def observe(self, transition: Transition) -> List[float]:
        self.buffer.add(transition)
        self.steps_seen += 1
        cfg = self.config
        if (len(self.buffer) >= max(cfg.learn_start, cfg.batch_size)
                and self.steps_seen % cfg.train_every == 0):
            return [train_step_q(self, self.buffer.sample(cfg.batch_size))]
        return []


def train_step_q(agent: _QAgent, batch) -> float:
    """One MSE TD update on ``batch``; returns the pre-update loss.

    Targets come from the frozen target copy, which is refreshed every
    ``target_sync`` updates.
    """
    if not isinstance(batch, Batch):
        batch = Batch.from_transitions(list(batch))
    n = len(batch)
    if n == 0:
        raise UsageError("empty batch")
    next_q = agent.q_values(batch.next_states, target=True)
    if agent.config.double_q:
        # online net picks the action, target net scores it
        picks = agent.q_values(batch.next_states).argmax(axis=1)
        next_q = next_q[np.arange(n), picks][:, None]
    targets = td_target(batch.rewards, next_q, batch.dones, agent.config.gamma)
    q = agent.q_values(batch.states)
    rows = np.arange(n)
    err = q[rows, batch.actions] - targets
    loss = float(np.mean(err**2))
    dq = np.zeros_like(q)
    dq[rows, batch.actions] = 2.0 * err / n
    agent._apply_gradient(batch.states, dq)
    agent.updates += 1
    if agent.updates % agent.config.target_sync == 0:
        agent.sync_target()
    return loss


class QRLAgent(_QAgent):
    """Q-values are weighted Pauli-Z readouts of a 4-qubit variational circuit.

    The circuit angles and readout weights have separate learning rates.
    """

    kind = "qrl"

    def __init__(self, config: AgentConfig, rng: np.random.Generator):
        super().__init__(config, rng)
        self.params = vqc.PolicyParams.random(config.vqc_depth, rng, config.weight_init)
        self.target = self.params.copy()
        self.optimizer = AdamState.for_params([self.params.angles, self.params.output_weights], lr=config.angle_lr)

    def q_values(self, states, target: bool = False) -> np.ndarray:
        p = self.target if target else self.params
        return vqc.forward(p, vqc.encode(states), self.config.entangle_encoder)

    def _apply_gradient(self, states, dloss_dq) -> None:
        g = vqc.parameter_shift_grad(self.params, vqc.encode(states), dloss_dq, self.config.entangle_encoder)
        grads = [g[:-NUM_ACTIONS].reshape(self.params.angles.shape), g[-NUM_ACTIONS:]]
        adam_step([self.params.angles, self.params.output_weights], grads, self.optimizer,
                  lr=[self.config.angle_lr, self.config.output_lr])

    def sync_target(self) -> None:
        self.target = self.params.copy()

    def count_params(self) -> int:
        return self.params.num_trainable

    def state_dict(self) -> dict:
        return {
            "params": {"num_qubits": vqc.NUM_QUBITS, "depth": self.params.depth,
                       "flat": self.params.flat().tolist()},
            "target": self.target.flat().tolist(),
            "optimizer": _adam_dict(self.optimizer),
            "updates": self.updates,
            "steps_seen": self.steps_seen,
            "rng_state": _rng_state(self.rng),
        }

    def load_state_dict(self, doc: dict) -> None:
        try:
            p = doc["params"]
            if int(p["num_qubits"]) != vqc.NUM_QUBITS or int(p["depth"]) != self.config.vqc_depth:
                raise FormatError("circuit shape does not match the configuration")
            depth = int(p["depth"])
            self.params = vqc.PolicyParams.from_flat(p["flat"], depth)
            self.target = vqc.PolicyParams.from_flat(doc["target"], depth)
            self.optimizer = AdamState.for_params([self.params.angles, self.params.output_weights], lr=self.config.angle_lr)
            _load_adam(self.optimizer, doc["optimizer"])
            self.updates = int(doc["updates"])
            self.steps_seen = int(doc["steps_seen"])
            _set_rng_state(self.rng, doc["rng_state"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"bad qrl checkpoint: {exc}") from exc


class DQNAgent(_QAgent):
    kind = "dqn"

    def __init__(self, config: AgentConfig, rng: np.random.Generator):
        super().__init__(config, rng)
        sizes = [STATE_DIM] + [config.width] * config.hidden_layers + [NUM_ACTIONS]
        self.net = Mlp(sizes, rng)
        self.target = self.net.copy()
        self.optimizer = AdamState.for_params(self.net.params, lr=config.lr)

    def q_values(self, states, target: bool = False) -> np.ndarray:
        return (self.target if target else self.net).forward(states)

    def _apply_gradient(self, states, dloss_dq) -> None:
        _, cache = mlp_forward(self.net, states)
        grads, _ = mlp_backward(self.net, cache, dloss_dq)
        adam_step(self.net.params, grads, self.optimizer)
        self.net.touch()

    def sync_target(self) -> None:
        self.target = self.net.copy()

    def count_params(self) -> int:
        return self.net.num_params()

    def state_dict(self) -> dict:
        return {
            "params": {"layers": _mlp_dict(self.net)},
            "target": {"layers": _mlp_dict(self.target)},
            "optimizer": _adam_dict(self.optimizer),
            "updates": self.updates,
            "steps_seen": self.steps_seen,
            "rng_state": _rng_state(self.rng),
        }

    def load_state_dict(self, doc: dict) -> None:
        try:
            _load_mlp(self.net, doc["params"]["layers"])
            _load_mlp(self.target, doc["target"]["layers"])
            _load_adam(self.optimizer, doc["optimizer"])
            self.updates = int(doc["updates"])
            self.steps_seen = int(doc["steps_seen"])
            _set_rng_state(self.rng, doc["rng_state"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"bad dqn checkpoint: {exc}") from exc


class ActorCriticAgent(Agent):
    """Shared ReLU trunk feeding a 4-way softmax head and a scalar value head.

    Trains on-policy: every ``ac_segment`` steps, or at episode end, the
    collected segment drives one advantage update.
    """

    kind = "ac"

    def __init__(self, config: AgentConfig, rng: np.random.Generator):
        super().__init__(config, rng)
        trunk_sizes = [STATE_DIM] + [config.width] * config.ac_hidden_layers
        self.trunk = Mlp(trunk_sizes, rng, relu_output=True)
        self.actor = Mlp([config.width, NUM_ACTIONS], rng)
        self.critic = Mlp([config.width, 1], rng)
        self.optimizer = AdamState.for_params(self.params, lr=config.lr)
        self.segment: List[Transition] = []

    @property
    def params(self) -> List[np.ndarray]:
        return self.trunk.params + self.actor.params + self.critic.params

    def touch(self) -> None:
        for net in (self.trunk, self.actor, self.critic):
            net.touch()

    def logits_and_values(self, states):
        h = self.trunk.forward(states)
        return self.actor.forward(h), self.critic.forward(h)[..., 0]

    def policy(self, state) -> np.ndarray:
        return softmax(self.logits_and_values(np.asarray(state, dtype=float))[0])

    def act(self, state, epsilon: float = 0.0, greedy: bool = False) -> int:
        logits, _ = self.logits_and_values(np.asarray(state, dtype=float))
        if greedy:
            return int(np.argmax(logits))
        return select_action(logits, 0.0, self.rng, sample_softmax=True)

    def observe(self, transition: Transition) -> List[float]:
        self.segment.append(transition)
        if transition.done or len(self.segment) >= self.config.ac_segment:
            return self.end_episode()
        return []

    def end_episode(self) -> List[float]:
        if not self.segment:
            return []
        policy_loss, value_loss = train_step_ac(self, self.segment)
        self.segment = []
        return [policy_loss + value_loss]

    def gradients(self, batch: Batch):
        """Losses and parameter gradients for one segment, without updating."""
        cfg = self.config
        n = len(batch)
        h, tc = mlp_forward(self.trunk, batch.states)
        logits, ac = mlp_forward(self.actor, h)
        values, cc = mlp_forward(self.critic, h)
        values = values[:, 0]
        next_values = self.logits_and_values(batch.next_states)[1]
        targets = nstep_targets(batch.rewards, next_values, batch.dones, cfg.gamma, cfg.ac_nstep)
        adv = targets - values
        probs = softmax(logits)
        rows = np.arange(n)
        logp = np.log(np.clip(probs[rows, batch.actions], 1e-300, None))
        policy_loss = float(-np.mean(logp * adv))
        value_loss = float(np.mean(adv**2))

        onehot = np.zeros_like(probs)
        onehot[rows, batch.actions] = 1.0
        dlogits = -(onehot - probs) * adv[:, None] / n
        if cfg.entropy_coef > 0:
            # loss term -c * H(pi); dH/dz_j = -p_j (log p_j + H)
            logp_all = np.log(np.clip(probs, 1e-300, None))
            ent = -(probs * logp_all).sum(axis=1, keepdims=True)
            dlogits += cfg.entropy_coef * probs * (logp_all + ent) / n
        dvalues = (-2.0 * adv / n)[:, None]
        ga, dh_a = mlp_backward(self.actor, ac, dlogits)
        gc, dh_c = mlp_backward(self.critic, cc, dvalues)
        gt, _ = mlp_backward(self.trunk, tc, dh_a + dh_c)
        return policy_loss, value_loss, gt + ga + gc

    def count_params(self) -> int:
        return sum(p.size for p in self.params)

    def state_dict(self) -> dict:
        return {
            "params": {"trunk": _mlp_dict(self.trunk), "actor": _mlp_dict(self.actor),
                       "critic": _mlp_dict(self.critic)},
            "optimizer": _adam_dict(self.optimizer),
            "updates": self.updates,
            "rng_state": _rng_state(self.rng),
        }

    def load_state_dict(self, doc: dict) -> None:
        try:
            p = doc["params"]
            _load_mlp(self.trunk, p["trunk"])
            _load_mlp(self.actor, p["actor"])
            _load_mlp(self.critic, p["critic"])
            _load_adam(self.optimizer, doc["optimizer"])
            self.updates = int(doc["updates"])
            _set_rng_state(self.rng, doc["rng_state"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"bad actor-critic checkpoint: {exc}") from exc


def nstep_targets(rewards, next_values, dones, gamma: float, nstep: int = 1) -> np.ndarray:
    """Bootstrapped returns over a segment of consecutive steps.

    Each target sums up to ``nstep`` rewards, stopping at the segment end,
    then adds the discounted value of the last next-state unless it is
    terminal.  ``nstep=1`` gives ``r + gamma * V(s') * (1 - done)``.
    """
    n = len(rewards)
    boot = np.asarray(next_values, float) * (1.0 - np.asarray(dones, float))
    out = np.empty(n)
    for i in range(n):
        last = min(i + nstep, n) - 1
        g = boot[last]
        for k in range(last, i - 1, -1):
            g = rewards[k] + gamma * g
        out[i] = g
    return out


def train_step_ac(agent: ActorCriticAgent, rollout) -> tuple:
    """One advantage actor-critic update; returns ``(policy_loss, value_loss)``."""
    batch = rollout if isinstance(rollout, Batch) else Batch.from_transitions(list(rollout))
    if len(batch) == 0:
        raise UsageError("empty rollout")
    policy_loss, value_loss, grads = agent.gradients(batch)
    adam_step(agent.params, grads, agent.optimizer)
    agent.touch()
    agent.updates += 1
    return policy_loss, value_loss


_KINDS = {"qrl": QRLAgent, "dqn": DQNAgent, "ac": ActorCriticAgent}


def make_agent(kind: str, config: Optional[AgentConfig] = None, seed: int = 0) -> Agent:
    key = str(kind).lower().replace("-", "").replace("_", "")
    key = {"actorcritic": "ac"}.get(key, key)
    if key not in _KINDS:
        raise ConfigError(f"unknown agent kind {kind!r}; choose from {', '.join(AGENT_KINDS)}")
    return _KINDS[key](config or AgentConfig(), np.random.default_rng(seed))


def agent_config_dict(cfg: AgentConfig) -> dict:
    return {f.name: getattr(cfg, f.name) for f in fields(cfg)}
