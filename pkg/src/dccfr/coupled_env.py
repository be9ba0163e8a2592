"""Three-agent data-center environment: load shifter, HVAC, battery.

Each 15-minute step runs the fixed intra-step chain: the load shifter fixes
the executed IT utilization, the HVAC setpoint action and zone dynamics fix
facility energy, and the battery then splits that energy between grid and
storage. Raw rewards are blended through a per-agent weight matrix, and
completed transitions are handed out one step late (an agent receives the
tuple for its previous action when it is asked to act again), so each reward
already reflects every agent's effect on the step.
"""

from dataclasses import dataclass, field, replace
from datetime import timedelta
from enum import IntEnum

import numpy as np

from .battery import BatAction, BatteryParams, BatteryState, action_mask, battery_step
from .dc_thermal import DcState, SetpointAction, ThermalParams, apply_setpoint_action, zone_step
from .errors import ConfigInvalid, Empty, InvalidAction, MaskedAction
from .exogenous import TraceBundle, price_at
from .load_shift import FlexQueue, LsAction, LsParams, overdue_amount, queue_step, split_arrivals

E_REF_KWH = 300.0     # 1.2 MWh max hourly load x 0.25 h
CI_REF = 500.0        # gCO2/kWh observation scale
T_ZONE_REF = 30.0
T_OUT_REF = 40.0
QUEUE_REF = 10.0

INITIAL_T_ZONE = 22.0
INITIAL_T_SET = 22.0


class Agent(IntEnum):
    LS = 0
    E = 1
    BAT = 2


ACTION_SPACES = {Agent.LS: 2, Agent.E: 3, Agent.BAT: 3}

DEFAULT_REWARD_WEIGHTS = np.array([
    [0.8, 0.1, 0.1],
    [0.1, 0.8, 0.1],
    [0.1, 0.1, 0.8],
])


@dataclass
class EnvConfig:
    bundle: TraceBundle
    thermal: ThermalParams = field(default_factory=ThermalParams)
    ls: LsParams = field(default_factory=LsParams)
    bat: BatteryParams = field(default_factory=BatteryParams)
    lookahead_hours: int = 4
    reward_weights: np.ndarray = field(
        default_factory=lambda: DEFAULT_REWARD_WEIGHTS.copy())
    co2_scale: float = 100.0   # kg
    cost_scale: float = 30.0   # $
    episode_steps: int = 0     # 0 means "whole trace from start_step"
    start_step: int = 0
    seed: int = 0

    def __post_init__(self):
        self.reward_weights = np.asarray(self.reward_weights, dtype=np.float64)
        if self.reward_weights.shape != (3, 3):
            raise ConfigInvalid("reward_weights must be a 3x3 matrix")
        if not np.allclose(self.reward_weights.sum(axis=1), 1.0, atol=1e-12):
            raise ConfigInvalid("each reward-weight row must sum to 1.0")
        if self.co2_scale <= 0 or self.cost_scale <= 0:
            raise ConfigInvalid("reward scales must be positive")
        if self.lookahead_hours < 0:
            raise ConfigInvalid("lookahead_hours must be non-negative")
        if self.episode_steps == 0:
            self.episode_steps = len(self.bundle) - self.start_step
        if self.start_step < 0 or self.episode_steps <= 0:
            raise ConfigInvalid("start_step/episode_steps out of range")
        if self.start_step + self.episode_steps > len(self.bundle):
            raise ConfigInvalid(
                f"episode [{self.start_step}, {self.start_step + self.episode_steps})"
                f" does not fit trace of length {len(self.bundle)}")


def obs_dims(cfg: EnvConfig) -> dict:
    n_ci = cfg.lookahead_hours + 1
    return {Agent.LS: 4 + 4 + n_ci + 1, Agent.E: 9, Agent.BAT: 4 + 2 + n_ci}


@dataclass
class StepMetrics:
    t: int
    e_fac: float        # kWh, IT + HVAC
    e_grid: float       # kWh drawn from the grid after battery dispatch
    co2_kg: float
    cost_usd: float
    penalty: float
    t_zone: float
    t_set: float
    t_out: float
    u_exec: float
    queue: float
    soc: float
    ci: float
    price: float
    # extended diagnostics for figure extracts and module metric streams
    e_it: float = 0.0
    e_hvac: float = 0.0
    charge_kw: float = 0.0
    discharge_kw: float = 0.0
    overdue: float = 0.0
    bat_action: int = int(BatAction.IDLE)

    def to_json_obj(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class Transition:
    agent: Agent
    obs: np.ndarray
    action: int
    next_obs: np.ndarray
    reward: float
    gamma: float
    done: bool


@dataclass
class _Pending:
    obs: np.ndarray
    action: int
    reward: float
    next_obs: np.ndarray


class CoupledEnv:
    """Single-owner, sequential environment instance.

    `gamma` is only recorded into emitted transitions (Algorithm-style
    tuples); it does not affect the simulation itself.
    """

    def __init__(self, cfg: EnvConfig, gamma: float = 0.99):
        self.cfg = cfg
        self.gamma = gamma
        self._precompute()
        self.state = None

    # -- exogenous caches: one vectorized pass instead of per-step lookups --

    def _precompute(self):
        cfg = self.cfg
        bundle = cfg.bundle
        n = len(bundle)
        step_min = bundle.step_minutes
        start = bundle.weather.start_time
        hod = np.empty(n)
        doy_frac = np.empty(n)
        weekend = np.empty(n, dtype=bool)
        minutes = np.arange(n, dtype=np.int64) * step_min
        for i in range(n):
            ts = start + timedelta(minutes=int(minutes[i]))
            hod[i] = ts.hour + ts.minute / 60.0
            jan1 = ts.replace(month=1, day=1, hour=0, minute=0, second=0, microsecond=0)
            doy_frac[i] = (ts - jan1).total_seconds() / (365.25 * 86400.0)
            weekend[i] = ts.weekday() >= 5
        ang_h = 2.0 * np.pi * hod / 24.0
        ang_d = 2.0 * np.pi * doy_frac
        self._time_feat = np.stack(
            [np.sin(ang_h), np.cos(ang_h), np.sin(ang_d), np.cos(ang_d)], axis=1)
        self._price = np.array([price_at(bundle.tou, bundle.weather.time_at(i))
                                for i in range(n)])
        n_ci = cfg.lookahead_hours + 1
        sph = 60 // step_min
        idx = np.minimum(np.arange(n)[:, None] + np.arange(n_ci)[None, :] * sph, n - 1)
        self._ci_feat = bundle.ci.values[idx] / CI_REF
        self._weather = bundle.weather.values
        self._ci = bundle.ci.values
        self._workload = bundle.workload.values
        # per-step observation templates: exogenous-only features are baked
        # in once; step() only fills the state-dependent slots
        dims = obs_dims(cfg)
        self._ls_tmpl = np.zeros((n, dims[Agent.LS]))
        self._ls_tmpl[:, 0:4] = self._time_feat
        self._ls_tmpl[:, 8:8 + n_ci] = self._ci_feat
        self._e_tmpl = np.zeros((n, dims[Agent.E]))
        self._e_tmpl[:, 0:4] = self._time_feat
        self._e_tmpl[:, 5] = self._weather / T_OUT_REF
        self._bat_tmpl = np.zeros((n, dims[Agent.BAT]))
        self._bat_tmpl[:, 0:4] = self._time_feat
        self._bat_tmpl[:, 6:6 + n_ci] = self._ci_feat

    # -- lifecycle -----------------------------------------------------------

    def reset(self, start_step: int = None):
        """Start an episode; returns {agent: obs} for the initial state.

        start_step overrides the configured episode offset (used for random
        training offsets); the episode length is unchanged.
        """
        cfg = self.cfg
        if start_step is not None:
            if start_step < 0 or start_step + cfg.episode_steps > len(cfg.bundle):
                raise ConfigInvalid(f"start_step {start_step} does not fit the trace")
            self.t = start_step
        else:
            self.t = cfg.start_step
        self.steps_done = 0
        self.dc = DcState(t_zone=INITIAL_T_ZONE, t_set=INITIAL_T_SET,
                          p_it=0.0, p_hvac=0.0, e_step=0.0)
        self.queue = FlexQueue()
        self.bat = BatteryState(soc=cfg.bat.capacity / 2.0)
        self.u_exec_prev = 0.0
        self.e_fac_prev = 0.0
        self.done = False
        self._pending = {}
        return self._observe_all()

    def _exo_index(self, t: int) -> int:
        # the terminal observation reads one step past the last played index;
        # hold the final sample (mirrors the CI lookahead end-hold rule)
        return min(t, len(self.cfg.bundle) - 1)

    def observe(self, agent: Agent) -> np.ndarray:
        t = self._exo_index(self.t)
        cfg = self.cfg
        if agent == Agent.LS:
            obs = self._ls_tmpl[t].copy()
            obs[4] = self.dc.t_zone / T_ZONE_REF
            obs[5] = self.u_exec_prev
            obs[6] = min(self.queue.total_queued, QUEUE_REF) / QUEUE_REF
            obs[7] = self.e_fac_prev / E_REF_KWH
            obs[-1] = self.bat.soc / cfg.bat.capacity
            return obs
        if agent == Agent.E:
            obs = self._e_tmpl[t].copy()
            obs[4] = self.dc.t_zone / T_ZONE_REF
            obs[6] = self.e_fac_prev / E_REF_KWH
            obs[7] = self.u_exec_prev
            obs[8] = ((self.dc.t_set - cfg.thermal.set_min)
                      / (cfg.thermal.set_max - cfg.thermal.set_min))
            return obs
        obs = self._bat_tmpl[t].copy()
        obs[4] = self.e_fac_prev / E_REF_KWH
        obs[5] = self.bat.soc / cfg.bat.capacity
        return obs

    def _observe_all(self) -> dict:
        return {a: self.observe(a) for a in Agent}

    def bat_mask(self):
        return action_mask(self.bat, self.cfg.bat)

    def step(self, a_ls, a_e, a_bat):
        """Play one step with the LS -> E -> BAT chain.

        Returns (obs dict, blended rewards dict, StepMetrics, done,
        completed transitions list). Transitions for the actions passed in
        are emitted by the *next* call (or by flush() at episode end).
        """
        if self.done:
            raise InvalidAction("episode is done; call reset()")
        cfg = self.cfg
        a_ls = _check_action(LsAction, a_ls, "LS")
        a_e = _check_action(SetpointAction, a_e, "E")
        a_bat = _check_action(BatAction, a_bat, "BAT")
        mask = self.bat_mask()
        if not mask[int(a_bat)]:
            raise MaskedAction(f"battery action {a_bat.name} infeasible at soc={self.bat.soc}")
        obs_before = self._observe_all()
        t = self.t

        base_u, flex_arrival = split_arrivals(self._workload[t], cfg.ls)
        self.queue, u_exec, penalty = queue_step(
            self.queue, a_ls, base_u, flex_arrival, t, cfg.ls)

        t_set = apply_setpoint_action(self.dc.t_set, a_e, cfg.thermal)
        self.dc = replace(self.dc, t_set=t_set)
        t_out = self._weather[t]
        self.dc = zone_step(self.dc, u_exec, t_out, cfg.thermal)
        e_fac = self.dc.e_step

        self.bat, grid_kw = battery_step(self.bat, a_bat, e_fac / cfg.bat.dt, cfg.bat)
        e_grid = grid_kw * cfg.bat.dt

        ci = self._ci[t]
        price = self._price[t]
        co2_kg = ci * e_grid / 1000.0
        cost_usd = price * e_grid
        raw = np.array([
            -(co2_kg / cfg.co2_scale + penalty),
            -(e_fac * price / cfg.cost_scale),
            -(co2_kg / cfg.co2_scale),
        ])
        blended = cfg.reward_weights @ raw

        metrics = StepMetrics(
            t=t, e_fac=e_fac, e_grid=e_grid, co2_kg=co2_kg, cost_usd=cost_usd,
            penalty=penalty, t_zone=self.dc.t_zone, t_set=self.dc.t_set,
            t_out=t_out, u_exec=u_exec, queue=self.queue.total_queued,
            soc=self.bat.soc, ci=ci, price=price,
            e_it=self.dc.p_it * cfg.thermal.dt,
            e_hvac=self.dc.p_hvac * cfg.thermal.dt,
            charge_kw=self.bat.last_charge_kw,
            discharge_kw=self.bat.last_discharge_kw,
            overdue=overdue_amount(self.queue, t),
            bat_action=int(a_bat),
        )

        self.u_exec_prev = u_exec
        self.e_fac_prev = e_fac
        self.t += 1
        self.steps_done += 1
        self.done = self.steps_done >= cfg.episode_steps
        obs_after = self._observe_all()

        completed = self._emit_pending(done=False)
        actions = {Agent.LS: int(a_ls), Agent.E: int(a_e), Agent.BAT: int(a_bat)}
        rewards = {a: float(blended[int(a)]) for a in Agent}
        self._pending = {
            a: _Pending(obs=obs_before[a], action=actions[a],
                        reward=rewards[a], next_obs=obs_after[a])
            for a in Agent
        }
        return obs_after, rewards, metrics, self.done, completed

    def _emit_pending(self, done: bool):
        out = [
            Transition(agent=a, obs=p.obs, action=p.action, next_obs=p.next_obs,
                       reward=p.reward, gamma=self.gamma, done=done)
            for a, p in self._pending.items()
        ]
        self._pending = {}
        return out

    def flush(self):
        """Emit the final pending transitions after the episode ends."""
        return self._emit_pending(done=self.done)


def _check_action(enum_cls, a, name: str):
    try:
        return enum_cls(a)
    except ValueError as exc:
        raise InvalidAction(f"bad {name} action {a!r}") from exc


def episode_totals(metrics) -> tuple:
    """(co2 tonnes, facility energy MWh, cost $) summed over an episode."""
    metrics = list(metrics)
    if not metrics:
        raise Empty("no step metrics to total")
    co2 = sum(m.co2_kg for m in metrics) / 1000.0
    energy = sum(m.e_fac for m in metrics) / 1000.0
    cost = sum(m.cost_usd for m in metrics)
    return co2, energy, cost


# --- JSON config loading ----------------------------------------------------

def env_config_from_json(doc: dict, bundle: TraceBundle) -> EnvConfig:
    """Build an EnvConfig from the documented JSON layout.

    Keys: `thermal`, `load_shift`, `battery` (parameter overrides),
    `reward_weights`, `lookahead_hours`, `scales` {co2, cost}, and
    `episode` {steps, start_step, seed}. All optional.
    """
    def build(cls, key):
        params = doc.get(key, {})
        try:
            return cls(**params)
        except TypeError as exc:
            raise ConfigInvalid(f"bad {key} config: {exc}") from exc

    scales = doc.get("scales", {})
    episode = doc.get("episode", {})
    return EnvConfig(
        bundle=bundle,
        thermal=build(ThermalParams, "thermal"),
        ls=build(LsParams, "load_shift"),
        bat=build(BatteryParams, "battery"),
        lookahead_hours=int(doc.get("lookahead_hours", 4)),
        reward_weights=doc.get("reward_weights", DEFAULT_REWARD_WEIGHTS.copy()),
        co2_scale=float(scales.get("co2", 100.0)),
        cost_scale=float(scales.get("cost", 30.0)),
        episode_steps=int(episode.get("steps", 0)),
        start_step=int(episode.get("start_step", 0)),
        seed=int(episode.get("seed", 0)),
    )
