"""Training loop, checkpoints, evaluation, trajectory dumps and parameter reports."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .agents import AGENT_KINDS, Agent, AgentConfig, EpsilonSchedule, Transition, make_agent
from .config import RunConfig, from_dict, to_dict, with_updates
from .env import LanderEnv, LanderState
from .errors import FormatError

EPISODE_COLUMNS = ("episode", "total_reward", "epsilon", "steps", "outcome")
UPDATE_COLUMNS = ("update_index", "loss")
TRAJECTORY_COLUMNS = ("t", "x", "y", "vx", "vy", "theta", "omega", "dl", "dr",
                      "action", "reward", "done", "outcome")
CHECKPOINT_FORMAT = "qrlander-checkpoint"
WINDOW = 100

# Published normalized parameter counts (DQN = 1) and the "times smaller" ratios.
REFERENCE_NORMALIZED = {"qrl": 0.233, "dqn": 1.0, "ac": 0.879}
REFERENCE_RATIO_DQN = 4.29
REFERENCE_RATIO_AC = 3.77
AGENT_LABELS = {"qrl": "QRL", "dqn": "DQN", "ac": "actor-critic"}


def _num(x: float) -> str:
    """Shortest round-trip text for a float, so CSVs are exact and stable."""
    return repr(float(x))


def episode_seed(run_seed: int, episode: int) -> int:
    return int(np.random.SeedSequence([run_seed, episode]).generate_state(1)[0])


def moving_average(values: Sequence[float], window: int = WINDOW) -> np.ndarray:
    """Trailing mean over up to ``window`` points (shorter at the start)."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return v
    c = np.cumsum(np.insert(v, 0, 0.0))
    idx = np.arange(1, v.size + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def _write_json(path: Path, doc) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def make_checkpoint(agent: Agent, cfg: RunConfig, episode: int) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "agent_kind": agent.kind,
        "config": to_dict(cfg),
        "episode": int(episode),
        "param_count": agent.count_params(),
        "agent": agent.state_dict(),
    }


def load_checkpoint(path) -> tuple:
    """Returns ``(agent, config, episode)``; malformed content raises FormatError."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise FormatError(f"{path}: not a checkpoint document")
    try:
        cfg = from_dict(doc["config"])
        if doc["agent_kind"] != cfg.agent_kind:
            raise FormatError(f"{path}: agent kind disagrees with its config")
        agent = make_agent(cfg.agent_kind, cfg.agent, cfg.seed)
        agent.load_state_dict(doc["agent"])
        return agent, cfg, int(doc["episode"])
    except FormatError:
        raise
    except Exception as exc:
        raise FormatError(f"{path}: {exc}") from exc


def run_training(cfg: RunConfig, progress: Optional[Callable[[dict], None]] = None) -> dict:
    """Train one agent and write its artifacts into ``cfg.out_dir``.

    Files: ``config.json``, ``episodes.csv``, ``updates.csv`` (both flushed
    after every episode), ``checkpoint.json`` and ``summary.json``.  Apart
    from the wall-clock field in the summary, output depends only on ``cfg``.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", to_dict(cfg))

    agent = make_agent(cfg.agent_kind, cfg.agent, cfg.seed)
    env = LanderEnv(cfg.env, cfg.reward)
    a = cfg.agent
    schedule = EpsilonSchedule(a.eps_start, a.eps_end, a.eps_decay)
    uses_epsilon = cfg.agent_kind != "ac"

    rewards: List[float] = []
    outcomes: Counter = Counter()
    update_index = 0
    t0 = time.perf_counter()
    with open(out / "episodes.csv", "w", encoding="utf-8", newline="") as ep_fh, \
            open(out / "updates.csv", "w", encoding="utf-8", newline="") as up_fh:
        ep_w = csv.writer(ep_fh, lineterminator="\n")
        up_w = csv.writer(up_fh, lineterminator="\n")
        ep_w.writerow(EPISODE_COLUMNS)
        up_w.writerow(UPDATE_COLUMNS)
        ep_fh.flush()
        up_fh.flush()
        for episode in range(cfg.episodes):
            epsilon = schedule.value(episode) if uses_epsilon else 0.0
            state = env.reset(episode_seed(cfg.seed, episode)).as_array()
            total, steps, done, outcome = 0.0, 0, False, "flying"
            losses: List[float] = []
            while not done:
                action = agent.act(state, epsilon)
                res = env.step(action)
                nxt = res.next_state.as_array()
                losses += agent.observe(Transition(state, action, res.reward, nxt, res.done))
                state, total, steps = nxt, total + res.reward, steps + 1
                done, outcome = res.done, res.outcome
            losses += agent.end_episode()
            for loss in losses:
                up_w.writerow((update_index, _num(loss)))
                update_index += 1
            ep_w.writerow((episode, _num(total), _num(epsilon), steps, outcome))
            ep_fh.flush()
            up_fh.flush()
            rewards.append(total)
            outcomes[outcome] += 1
            if progress is not None:
                progress({"episode": episode, "total_reward": total, "steps": steps, "outcome": outcome})

    _write_json(out / "checkpoint.json", make_checkpoint(agent, cfg, cfg.episodes))
    summary = {
        "agent_kind": cfg.agent_kind,
        "seed": cfg.seed,
        "episodes": cfg.episodes,
        "updates": update_index,
        "param_count": agent.count_params(),
        "wall_clock_s": time.perf_counter() - t0,
        "final_moving_avg_reward": float(moving_average(rewards)[-1]),
        "first_window_mean_reward": float(np.mean(rewards[:WINDOW])),
        "last_window_mean_reward": float(np.mean(rewards[-WINDOW:])),
        "outcomes": dict(sorted(outcomes.items())),
        "config": to_dict(cfg),
    }
    _write_json(out / "summary.json", summary)
    return summary


def _train_one(cfg: RunConfig) -> dict:
    return run_training(cfg)


def run_seeds(cfg: RunConfig, seeds: Sequence[int], workers: Optional[int] = None) -> List[dict]:
    """Independent runs, one per seed, in ``<out_dir>/seed_<n>``; run in parallel processes."""
    cfgs = [with_updates(cfg, seed=s, out_dir=str(Path(cfg.out_dir) / f"seed_{s}")) for s in seeds]
    workers = workers or min(len(cfgs), os.cpu_count() or 1)
    if workers <= 1 or len(cfgs) == 1:
        return [run_training(c) for c in cfgs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_train_one, cfgs))


# -- evaluation and replay ---------------------------------------------------


def rollout(env: LanderEnv, policy: Callable[[LanderState], int], seed: int) -> tuple:
    """Play one episode; returns ``(rows, total_reward, outcome)``.

    ``rows`` follow ``TRAJECTORY_COLUMNS``, one per step, holding the state
    reached after ``action``.
    """
    s = env.reset(seed)
    rows = []
    total, done, outcome, t = 0.0, False, "flying", 0
    while not done:
        action = int(policy(s))
        res = env.step(action)
        t += 1
        s = res.next_state
        total += res.reward
        done, outcome = res.done, res.outcome
        rows.append((t, s.x, s.y, s.vx, s.vy, s.theta, s.omega, int(s.leg_left), int(s.leg_right),
                     action, res.reward, int(res.done), res.outcome))
    return rows, total, outcome


def greedy_policy(agent: Agent) -> Callable[[LanderState], int]:
    return lambda s: agent.act(s.as_array(), 0.0, greedy=True)


def evaluate(checkpoint, n_episodes: int = 10, seed: int = 0, env_overrides: Optional[dict] = None) -> dict:
    """Greedy, learning-free episodes from a checkpoint."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    agent, cfg, _ = load_checkpoint(checkpoint)
    if env_overrides:
        cfg = with_updates(cfg, **env_overrides)
    env = LanderEnv(cfg.env, cfg.reward)
    policy = greedy_policy(agent)
    totals, outcomes = [], Counter()
    for i in range(n_episodes):
        _, total, outcome = rollout(env, policy, episode_seed(seed, i))
        totals.append(total)
        outcomes[outcome] += 1
    return {
        "agent_kind": cfg.agent_kind,
        "episodes": n_episodes,
        "seed": seed,
        "mean_reward": float(np.mean(totals)),
        "std_reward": float(np.std(totals)),
        "landing_rate": outcomes["landed"] / n_episodes,
        "outcomes": dict(sorted(outcomes.items())),
    }


def write_trajectory(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for row in rows:
            w.writerow([_num(v) if isinstance(v, float) else v for v in row])


def replay(checkpoint, out_path, seed: int = 0, env_overrides: Optional[dict] = None) -> dict:
    """Dump one greedy episode from a checkpoint as a trajectory CSV."""
    agent, cfg, _ = load_checkpoint(checkpoint)
    if env_overrides:
        cfg = with_updates(cfg, **env_overrides)
    rows, total, outcome = rollout(LanderEnv(cfg.env, cfg.reward), greedy_policy(agent), seed)
    write_trajectory(rows, out_path)
    return {"steps": len(rows), "total_reward": total, "outcome": outcome}


# -- parameter report --------------------------------------------------------


def param_report(agent_config: Optional[AgentConfig] = None) -> List[dict]:
    """Trainable counts for every agent kind, normalized by the DQN count."""
    cfg = agent_config or AgentConfig()
    counts = {k: make_agent(k, cfg, 0).count_params() for k in AGENT_KINDS}
    base = counts["dqn"]
    return [
        {
            "agent": k,
            "params": counts[k],
            "normalized": counts[k] / base,
            "times_smaller_than_dqn": base / counts[k],
            "reference_normalized": REFERENCE_NORMALIZED[k],
        }
        for k in AGENT_KINDS
    ]


def write_param_report(rows: List[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def format_param_table(rows: List[dict]) -> str:
    by = {r["agent"]: r for r in rows}
    lines = [f"{'agent':<14}{'params':>8}{'normalized':>12}{'reference':>11}"]
    for r in rows:
        lines.append(f"{AGENT_LABELS[r['agent']]:<14}{r['params']:>8d}{r['normalized']:>12.4f}"
                     f"{r['reference_normalized']:>11.3f}")
    q = by["qrl"]["params"]
    lines.append(f"QRL is {by['dqn']['params'] / q:.2f}x smaller than DQN (reference {REFERENCE_RATIO_DQN})")
    lines.append(f"QRL is {by['ac']['params'] / q:.2f}x smaller than actor-critic (reference {REFERENCE_RATIO_AC})")
    return "\n".join(lines)


# -- metrics files -----------------------------------------------------------


def read_csv_table(path, columns: Sequence[str], types: Dict[str, type]) -> Dict[str, list]:
    """Parse a metrics CSV with a mandatory header; FormatError names the bad line."""
    text = Path(path).read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise FormatError(f"{path}:1: empty file, expected header {','.join(columns)}") from None
    if tuple(header) != tuple(columns):
        raise FormatError(f"{path}:1: header {header} != {list(columns)}")
    out: Dict[str, list] = {c: [] for c in columns}
    for row in reader:
        line = reader.line_num
        if not row:
            continue
        if len(row) != len(columns):
            raise FormatError(f"{path}:{line}: expected {len(columns)} fields, got {len(row)}")
        for c, v in zip(columns, row):
            conv = types.get(c, str)
            try:
                val = conv(v)
            except ValueError:
                raise FormatError(f"{path}:{line}: bad {c} value {v!r}") from None
            if isinstance(val, float) and not math.isfinite(val):
                raise FormatError(f"{path}:{line}: non-finite {c}")
            out[c].append(val)
    return out


def read_episodes(path) -> Dict[str, list]:
    return read_csv_table(path, EPISODE_COLUMNS,
                          {"episode": int, "total_reward": float, "epsilon": float, "steps": int})


def read_updates(path) -> Dict[str, list]:
    return read_csv_table(path, UPDATE_COLUMNS, {"update_index": int, "loss": float})


def _run_kind(path: Path) -> str:
    for candidate in (path.parent / "summary.json", path.parent / "config.json"):
        if candidate.exists():
            try:
                doc = json.loads(candidate.read_text(encoding="utf-8"))
                return doc.get("agent_kind") or doc["config"]["agent_kind"]
            except (json.JSONDecodeError, KeyError, TypeError):
                pass
    return path.parent.name or path.stem


def comparison_rows(episode_files: Sequence) -> List[dict]:
    """Per-agent aggregate over runs: first/last window means and their difference."""
    groups: Dict[str, List[dict]] = {}
    for f in episode_files:
        f = Path(f)
        data = read_episodes(f)
        r = data["total_reward"]
        if not r:
            raise FormatError(f"{f}: no episodes")
        first, last = float(np.mean(r[:WINDOW])), float(np.mean(r[-WINDOW:]))
        landed = np.mean([o == "landed" for o in data["outcome"][-WINDOW:]])
        groups.setdefault(_run_kind(f), []).append(
            {"first": first, "last": last, "delta": last - first, "landed": float(landed), "episodes": len(r)})
    rows = []
    for kind in sorted(groups):
        g = groups[kind]
        rows.append({
            "agent": kind,
            "runs": len(g),
            "episodes": min(x["episodes"] for x in g),
            "first_window_mean": float(np.mean([x["first"] for x in g])),
            "last_window_mean": float(np.mean([x["last"] for x in g])),
            "median_improvement": float(np.median([x["delta"] for x in g])),
            "last_window_landing_rate": float(np.mean([x["landed"] for x in g])),
        })
    return rows


def format_comparison(rows: List[dict]) -> str:
    head = f"{'agent':<10}{'runs':>5}{'episodes':>9}{'first100':>11}{'last100':>11}{'median gain':>13}{'landed':>8}"
    lines = [head]
    for r in rows:
        lines.append(f"{r['agent']:<10}{r['runs']:>5}{r['episodes']:>9}{r['first_window_mean']:>11.2f}"
                     f"{r['last_window_mean']:>11.2f}{r['median_improvement']:>13.2f}"
                     f"{r['last_window_landing_rate']:>8.2f}")
    return "\n".join(lines)
