"""Training loop: concurrent rollouts, then independent per-agent updates.

Each iteration rolls whole episodes (one simulated month by default, at a
random offset into the trace) with every agent acting each step; agents in
the trained combination sample from their policies while the rest follow
the composed baseline. Buffers are filled through the environment's delayed
transition hand-off, then each trained agent runs its own PPO update.
"""

import json
from dataclasses import dataclass

import numpy as np

from ..baselines import BaselinePolicy, BaselineSpec
from ..coupled_env import ACTION_SPACES, Agent, CoupledEnv, EnvConfig, episode_totals, obs_dims
from ..errors import NonFiniteLoss
from . import nets
from .ppo import PpoAgent, PpoHyper, RolloutBuffer, ppo_update


@dataclass
class TrainBudget:
    iterations: int
    steps_per_iteration: int = 2880
    seeds: tuple = (0,)

    def __post_init__(self):
        if self.iterations < 0 or self.steps_per_iteration <= 0 or not self.seeds:
            raise ValueError("budget must be positive with at least one seed")


# Logit bias applied to each agent's incumbent (baseline) action at init.
# Starting near the status quo keeps early exploration from trashing the
# plant while leaving the policy free to move away once advantages say so.
# The battery starts unbiased: its incumbent (idle) is worthless and it
# needs full exploration of charge/supply timing.
STATUS_QUO_BIAS = {Agent.LS: 2.0, Agent.E: 4.0, Agent.BAT: 0.0}
HOLD_ACTION = {Agent.LS: 0, Agent.E: 1, Agent.BAT: 2}


def agent_rngs(seed: int) -> dict:
    """Independent per-agent generators plus one for the environment.

    Keeping streams separate makes a given agent's initialization and
    sampling identical across combinations (common random numbers), so
    ablation cells differ only through the other agents' behavior.
    """
    ss = np.random.SeedSequence(entropy=seed)
    children = ss.spawn(len(Agent) + 1)
    rngs = {a: np.random.default_rng(children[int(a)]) for a in Agent}
    rngs["env"] = np.random.default_rng(children[len(Agent)])
    return rngs


def build_agents(cfg: EnvConfig, hyper: PpoHyper, combo, rngs) -> dict:
    dims = obs_dims(cfg)
    agents = {}
    for a in combo:
        agent = PpoAgent(dims[a], ACTION_SPACES[a], hyper, rngs[a])
        bias = STATUS_QUO_BIAS[a]
        if bias:
            agent.policy.bias(len(agent.policy.sizes) - 2)[HOLD_ACTION[a]] += bias
        agents[a] = agent
    return agents


def train(env_cfg: EnvConfig, hyper: PpoHyper, budget: TrainBudget, combo,
          baseline_spec: BaselineSpec = None, progress=None) -> dict:
    """Train `combo` (a set of Agent) for every seed in the budget.

    Returns {seed: {"agents": {Agent: PpoAgent}, "log": [records]}}. Agents
    outside the combination are driven by the composed baseline.
    """
    combo = set(combo)
    if not combo:
        raise ValueError("combo must contain at least one agent")
    baseline_spec = baseline_spec or BaselineSpec()
    results = {}
    for seed in budget.seeds:
        results[seed] = _train_one_seed(env_cfg, hyper, budget, combo,
                                        baseline_spec, int(seed), progress)
    return results


def _train_one_seed(env_cfg, hyper, budget, combo, baseline_spec, seed, progress):
    rngs = agent_rngs(seed)
    env = CoupledEnv(env_cfg, gamma=hyper.gamma)
    baseline = BaselinePolicy(baseline_spec, env_cfg.thermal, env_cfg.bundle.ci.values)
    agents = build_agents(env_cfg, hyper, combo, rngs)
    buffers = {a: RolloutBuffer() for a in combo}
    episodes_per_iter = max(1, round(budget.steps_per_iteration / env_cfg.episode_steps))
    max_offset = len(env_cfg.bundle) - env_cfg.episode_steps
    log = []
    env_steps = 0
    for it in range(budget.iterations):
        ep_totals = []
        for _ in range(episodes_per_iter):
            offset = int(rngs["env"].integers(0, max_offset + 1)) if max_offset > 0 else 0
            metrics = _collect_episode(env, agents, buffers, baseline, combo, rngs, offset)
            env_steps += len(metrics)
            ep_totals.append(episode_totals(metrics))
        record = {
            "iteration": it,
            "env_steps": env_steps,
            "co2_tonnes": float(np.mean([t[0] for t in ep_totals])),
            "energy_mwh": float(np.mean([t[1] for t in ep_totals])),
            "cost_usd": float(np.mean([t[2] for t in ep_totals])),
            "agents": {},
        }
        coef = _annealed_entropy(hyper, it, budget.iterations)
        warm = it < hyper.value_warmup_iters
        for a in sorted(combo):
            try:
                record["agents"][a.name] = ppo_update(agents[a], buffers[a], rngs[a],
                                                      entropy_coef=coef,
                                                      update_policy=not warm)
            except NonFiniteLoss as exc:   # params rolled back; keep training
                record["agents"][a.name] = {"aborted": str(exc)}
        log.append(record)
        if progress is not None:
            progress(record)
    return {"agents": agents, "log": log}


def _annealed_entropy(hyper, iteration, total_iterations):
    if hyper.entropy_final is None or total_iterations <= 1:
        return hyper.entropy_coef
    frac = iteration / (total_iterations - 1)
    return hyper.entropy_coef + (hyper.entropy_final - hyper.entropy_coef) * frac


def _collect_episode(env, agents, buffers, baseline, combo, rngs, start_step):
    """Roll one episode, routing completed transitions into the buffers."""
    obs = env.reset(start_step=start_step)
    pending_meta = {}   # agent -> (logp, mask) for the not-yet-emitted step
    metrics = []
    done = False
    while not done:
        mask_bat = env.bat_mask()
        acts = {}
        meta = {}
        for a in Agent:
            mask = mask_bat if a == Agent.BAT else None
            if a in combo:
                action, logp = agents[a].act(obs[a], mask, rngs[a])
            else:
                action, logp = baseline.act(a, obs[a], mask), 0.0
            acts[a] = action
            meta[a] = (logp, mask if mask is not None
                       else (True,) * ACTION_SPACES[a])
        obs, _, m, done, completed = env.step(acts[Agent.LS], acts[Agent.E], acts[Agent.BAT])
        metrics.append(m)
        _store(buffers, combo, completed, pending_meta)
        pending_meta = meta
    _store(buffers, combo, env.flush(), pending_meta)
    return metrics


def _store(buffers, combo, transitions, pending_meta):
    for tr in transitions:
        if tr.agent in combo:
            logp, mask = pending_meta[tr.agent]
            buffers[tr.agent].add(tr.obs, tr.action, logp, tr.reward,
                                  tr.done, mask, tr.next_obs)


# --- checkpoint I/O ---------------------------------------------------------

def checkpoint_obj(agent: PpoAgent, net_name: str, seed: int, iteration: int) -> dict:
    net = agent.policy if net_name == "policy" else agent.value
    obj = net.to_json_obj()
    obj["hyper"] = {k: getattr(agent.hyper, k) for k in agent.hyper.__dataclass_fields__}
    obj["seed"] = seed
    obj["iteration"] = iteration
    if net_name == "value":
        obj["return_stats"] = {"count": agent.ret_stats.count,
                               "mean": agent.ret_stats.mean,
                               "m2": agent.ret_stats.m2}
    return obj


def save_checkpoints(agents: dict, out_dir, seed: int, iteration: int) -> None:
    from pathlib import Path
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for a, agent in agents.items():
        for net_name in ("policy", "value"):
            path = out / f"{a.name}_{net_name}.json"
            with path.open("w", encoding="utf-8") as fh:
                json.dump(checkpoint_obj(agent, net_name, seed, iteration), fh)


def load_checkpoints(ckpt_dir, cfg: EnvConfig) -> dict:
    """Rebuild PpoAgents (for greedy evaluation) from checkpoint JSONs."""
    from pathlib import Path
    from ..errors import ShapeMismatch
    dims = obs_dims(cfg)
    agents = {}
    for a in Agent:
        p_path = Path(ckpt_dir) / f"{a.name}_policy.json"
        if not p_path.exists():
            continue
        with p_path.open(encoding="utf-8") as fh:
            pol_obj = json.load(fh)
        hyper = PpoHyper(**pol_obj.get("hyper", {}))
        rng = np.random.default_rng(0)
        agent = PpoAgent(dims[a], ACTION_SPACES[a], hyper, rng)
        if tuple(pol_obj["layer_sizes"]) != tuple(int(s) for s in agent.policy.sizes):
            raise ShapeMismatch(
                f"{a.name} checkpoint layer sizes {pol_obj['layer_sizes']} do not match "
                f"observation layout {tuple(int(s) for s in agent.policy.sizes)}")
        agent.policy = nets.MlpParams.from_json_obj(pol_obj)
        v_path = Path(ckpt_dir) / f"{a.name}_value.json"
        if v_path.exists():
            with v_path.open(encoding="utf-8") as fh:
                val_obj = json.load(fh)
            agent.value = nets.MlpParams.from_json_obj(val_obj)
            rs = val_obj.get("return_stats", {})
            agent.ret_stats.count = rs.get("count", 0.0)
            agent.ret_stats.mean = rs.get("mean", 0.0)
            agent.ret_stats.m2 = rs.get("m2", 0.0)
        agents[a] = agent
    return agents
