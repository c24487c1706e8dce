"""Planar rigid-body rocket landing with wind, turbulence and leg contact.

The reported position is the point midway between the feet when the rocket
stands upright, so a rocket standing on the pad reads ``(0, 0)``.  The body
itself is integrated at its centre of mass, ``leg_length`` above that point.
Angles are counter-clockwise from the ground normal.

Each step: sample a disturbance, integrate forces with semi-implicit Euler,
then project leg contacts with sequential impulses (normal + Coulomb
friction) and push the body out of the ground.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from enum import IntEnum
from typing import Optional

import numpy as np

from .errors import ConfigError, UsageError


class Action(IntEnum):
    DO_NOTHING = 0
    LEFT_ENGINE = 1
    RIGHT_ENGINE = 2
    MAIN_ENGINE = 3


OUTCOMES = ("flying", "landed", "crashed", "out_of_bounds", "timeout")


@dataclass
class EnvConfig:
    gravity: float = 10.0
    dt: float = 0.02
    wind_max: float = 15.0
    turbulence_max: float = 1.5
    main_thrust: float = 90.0
    side_thrust: float = 4.2
    side_arm: float = 0.5
    mass: float = 5.0
    inertia: float = 0.5
    leg_span: float = 0.2
    leg_length: float = 0.1
    body_radius: float = 0.05
    friction: float = 0.8
    max_steps: int = 1000
    x_limit: float = 1.0
    y_limit: float = 2.0
    # initial-condition box
    init_x: float = 0.25
    init_y_low: float = 1.0
    init_y_high: float = 1.3
    init_speed: float = 0.5
    init_theta: float = 0.15
    init_omega: float = 0.2
    # terminal thresholds
    contact_tolerance: float = 0.01
    crash_speed: float = 1.5
    max_contact_tilt: float = math.pi / 2
    rest_speed: float = 0.05
    rest_omega: float = 0.1

    def __post_init__(self):
        positive = (
            "gravity", "dt", "main_thrust", "side_thrust", "side_arm", "mass", "inertia",
            "leg_span", "leg_length", "body_radius", "x_limit", "y_limit", "crash_speed",
            "rest_speed", "rest_omega", "contact_tolerance",
        )
        for name in positive:
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"EnvConfig.{name} must be positive, got {value!r}")
        for name in ("wind_max", "turbulence_max", "friction", "init_x", "init_speed", "init_theta", "init_omega"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"EnvConfig.{name} must be >= 0")
        if int(self.max_steps) < 1:
            raise ConfigError("EnvConfig.max_steps must be >= 1")
        if not 0 < self.init_y_low <= self.init_y_high < self.y_limit:
            raise ConfigError("need 0 < init_y_low <= init_y_high < y_limit")
        if self.init_theta >= math.pi / 4:
            raise ConfigError("init_theta must stay below pi/4")
        self.max_steps = int(self.max_steps)


@dataclass
class RewardConfig:
    xi: float = 100.0
    mu: float = 100.0
    chi: float = 100.0
    kappa_land: float = 100.0
    kappa_crash: float = -100.0

    def __post_init__(self):
        for name in ("xi", "mu", "chi"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"RewardConfig.{name} must be >= 0")


@dataclass(frozen=True)
class LanderState:
    x: float
    y: float
    vx: float
    vy: float
    theta: float
    omega: float
    leg_left: bool
    leg_right: bool

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.x, self.y, self.vx, self.vy, self.theta, self.omega,
             float(self.leg_left), float(self.leg_right)]
        )

    @property
    def distance(self) -> float:
        return math.hypot(self.x, self.y)

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)


@dataclass(frozen=True)
class StepResult:
    next_state: LanderState
    reward: float
    done: bool
    outcome: str


def sample_disturbance(rng: np.random.Generator, config: EnvConfig) -> tuple:
    """One (wind force, turbulence torque) draw, uniform within the configured maxima.

    Always consumes two variates so streams stay aligned across configs.
    """
    u = rng.uniform(-1.0, 1.0, size=2)
    return float(u[0] * config.wind_max), float(u[1] * config.turbulence_max)


def shaped_reward(prev: LanderState, cur: LanderState, rc: RewardConfig, kappa: float = 0.0) -> float:
    return (
        -rc.xi * (cur.distance - prev.distance)
        - rc.mu * (cur.speed - prev.speed)
        - rc.chi * (abs(cur.omega) - abs(prev.omega))
        + kappa
    )


class LanderEnv:
    def __init__(self, config: Optional[EnvConfig] = None, reward: Optional[RewardConfig] = None):
        self.config = config or EnvConfig()
        self.reward_config = reward or RewardConfig()
        self.rng = np.random.default_rng(0)
        self._body = None  # [cx, cy, vx, vy, theta, omega]
        self._legs = (False, False)
        self._state: Optional[LanderState] = None
        self.steps = 0
        self.done = True

    # -- geometry --------------------------------------------------------------

    def _foot_offsets(self, theta: float) -> list:
        c, s = math.cos(theta), math.sin(theta)
        half, down = self.config.leg_span / 2, -self.config.leg_length
        return [(c * bx - s * down, s * bx + c * down) for bx in (-half, half)]

    def _observe(self) -> LanderState:
        cx, cy, vx, vy, th, om = self._body
        return LanderState(cx, cy - self.config.leg_length, vx, vy, th, om, *self._legs)

    @property
    def state(self) -> LanderState:
        if self._state is None:
            raise UsageError("call reset() first")
        return self._state

    # -- episode API -----------------------------------------------------------

    def reset(self, seed: Optional[int] = None) -> LanderState:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        c = self.config
        r = self.rng.uniform(-1.0, 1.0, size=6)
        y0 = c.init_y_low + (c.init_y_high - c.init_y_low) * (r[1] + 1) / 2
        self._body = [
            float(c.init_x * r[0]),
            float(y0 + c.leg_length),
            float(c.init_speed * r[2]),
            float(-c.init_speed * (r[3] + 1) / 2),
            float(c.init_theta * r[4]),
            float(c.init_omega * r[5]),
        ]
        self._legs = (False, False)
        self._state = self._observe()
        self.steps = 0
        self.done = False
        return self._state

    def step(self, action) -> StepResult:
        if self._state is None or self.done:
            raise UsageError("step() called on a finished episode; call reset()")
        action = Action(int(action))
        c = self.config
        prev = self._state
        wind, torque_dist = sample_disturbance(self.rng, c)

        cx, cy, vx, vy, th, om = self._body
        fx, fy, torque = wind, -c.mass * c.gravity, torque_dist
        if action == Action.MAIN_ENGINE:
            fx += -math.sin(th) * c.main_thrust
            fy += math.cos(th) * c.main_thrust
        elif action in (Action.LEFT_ENGINE, Action.RIGHT_ENGINE):
            # left engine pushes toward body +x and spins clockwise; right mirrors it
            sign = 1.0 if action == Action.LEFT_ENGINE else -1.0
            fx += sign * math.cos(th) * c.side_thrust
            fy += sign * math.sin(th) * c.side_thrust
            torque += -sign * c.side_thrust * c.side_arm

        vx += fx / c.mass * c.dt
        vy += fy / c.mass * c.dt
        om += torque / c.inertia * c.dt
        cx += vx * c.dt
        cy += vy * c.dt
        th += om * c.dt

        body = [cx, cy, vx, vy, th, om]
        impact = self._resolve_contacts(body)
        self._body = body
        cx, cy, vx, vy, th, om = body
        feet = [cy + oy for _, oy in self._foot_offsets(th)]
        self._legs = tuple(fy_ <= c.contact_tolerance for fy_ in feet)
        self.steps += 1
        cur = self._observe()
        self._state = cur

        outcome = "flying"
        hull_hit = cy - c.body_radius <= 0.0
        touching = any(self._legs)
        if hull_hit or impact > c.crash_speed or (touching and abs(th) > c.max_contact_tilt):
            outcome = "crashed"
        elif abs(cx) > c.x_limit or cur.y > c.y_limit:
            outcome = "out_of_bounds"
        elif all(self._legs) and cur.speed < c.rest_speed and abs(om) < c.rest_omega:
            outcome = "landed"
        elif self.steps >= c.max_steps:
            outcome = "timeout"

        rc = self.reward_config
        kappa = {"landed": rc.kappa_land, "crashed": rc.kappa_crash, "out_of_bounds": rc.kappa_crash}.get(outcome, 0.0)
        reward = shaped_reward(prev, cur, rc, kappa)
        self.done = outcome != "flying"
        return StepResult(cur, reward, self.done, outcome)

    def _resolve_contacts(self, body: list) -> float:
        """Remove approaching foot velocity at ground contacts, in place.

        Returns the largest pre-contact downward foot speed (0 without contact).
        """
        c = self.config
        cx, cy, vx, vy, th, om = body
        offsets = self._foot_offsets(th)
        contacts = [(ox, oy) for ox, oy in offsets if cy + oy <= 0.0]
        if not contacts:
            return 0.0
        impact = max(0.0, max(-(vy + om * ox) for ox, _ in contacts))
        inv_m, inv_i = 1.0 / c.mass, 1.0 / c.inertia
        normal_acc = [0.0] * len(contacts)
        for _ in range(8):
            for n, (ox, oy) in enumerate(contacts):
                vn = vy + om * ox
                j = -vn / (inv_m + ox * ox * inv_i)
                j_new = max(normal_acc[n] + j, 0.0)
                j = j_new - normal_acc[n]
                normal_acc[n] = j_new
                vy += j * inv_m
                om += ox * j * inv_i
                vt = vx - om * oy
                jt = -vt / (inv_m + oy * oy * inv_i)
                limit = c.friction * normal_acc[n]
                jt = max(-limit, min(limit, jt))
                vx += jt * inv_m
                om += -oy * jt * inv_i
        depth = max(0.0, -min(cy + oy for _, oy in offsets))
        body[:] = [cx, cy + depth, vx, vy, th, om]
        return impact


def scripted_descent_action(state: LanderState, config: Optional[EnvConfig] = None) -> int:
    """Hand-tuned controller: level the body, then brake to a slow touchdown.

    Targets a descent speed proportional to height and fires the main engine
    whenever the rocket falls faster than that.
    """
    c = config or EnvConfig()
    if state.leg_left and state.leg_right:
        return int(Action.DO_NOTHING)
    angle_target = max(-0.2, min(0.2, 0.4 * state.x + 0.8 * state.vx))
    turn = (state.theta - angle_target) + 0.4 * state.omega
    target_vy = -(0.25 + 0.8 * max(state.y, 0.0))
    if state.vy < target_vy - 0.3:
        return int(Action.MAIN_ENGINE)
    if abs(turn) > 0.12:
        return int(Action.LEFT_ENGINE if turn > 0 else Action.RIGHT_ENGINE)
    if state.vy < target_vy:
        return int(Action.MAIN_ENGINE)
    if abs(turn) > 0.03:
        return int(Action.LEFT_ENGINE if turn > 0 else Action.RIGHT_ENGINE)
    return int(Action.DO_NOTHING)


def config_dict(cfg) -> dict:
    return {f.name: getattr(cfg, f.name) for f in fields(cfg)}


__all__ = [
    "Action", "EnvConfig", "RewardConfig", "LanderState", "StepResult", "LanderEnv",
    "OUTCOMES", "sample_disturbance", "shaped_reward", "scripted_descent_action",
]
