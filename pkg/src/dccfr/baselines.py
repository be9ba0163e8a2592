"""Rule-based controllers used as comparison points and ablation fill-ins.

The composed default (fixed 22 degC setpoint, immediate assignment, idle
battery) is the denominator for every reduction percentage. A CI-threshold
battery heuristic is provided as the non-learned carbon-arbitrage reference.
"""

from dataclasses import dataclass

import numpy as np

from .battery import BatAction
from .coupled_env import Agent, CI_REF, T_OUT_REF
from .dc_thermal import SetpointAction, ThermalParams
from .errors import ConfigInvalid
from .load_shift import LsAction


@dataclass(frozen=True)
class HvacFixedSetpoint:
    target_c: float = 22.0


@dataclass(frozen=True)
class HvacOutdoorTracking:
    offset_c: float = 2.0
    target_min: float = 18.0
    target_max: float = 27.0


@dataclass(frozen=True)
class BatAlwaysIdle:
    pass


@dataclass(frozen=True)
class BatCiThreshold:
    low_pct: float = 25.0
    high_pct: float = 75.0

    def __post_init__(self):
        if not 0.0 <= self.low_pct < self.high_pct <= 100.0:
            raise ConfigInvalid("need 0 <= low_pct < high_pct <= 100")


@dataclass(frozen=True)
class BaselineSpec:
    hvac: object = HvacFixedSetpoint()
    ls: str = "immediate"
    bat: object = BatAlwaysIdle()

    def __post_init__(self):
        if isinstance(self.hvac, HvacFixedSetpoint):
            p = ThermalParams()
            if not p.set_min <= self.hvac.target_c <= p.set_max:
                raise ConfigInvalid("fixed setpoint outside the actuator bounds")


def rbc_hvac_action(obs_e: np.ndarray, spec: BaselineSpec,
                    thermal: ThermalParams) -> SetpointAction:
    """Step the setpoint 1 degC toward the rule's target, holding at it."""
    t_set = thermal.set_min + obs_e[8] * (thermal.set_max - thermal.set_min)
    if isinstance(spec.hvac, HvacFixedSetpoint):
        target = spec.hvac.target_c
    else:
        t_out = obs_e[5] * T_OUT_REF
        target = min(spec.hvac.target_max,
                     max(spec.hvac.target_min, t_out + spec.hvac.offset_c))
    diff = target - t_set
    if diff >= 0.5:
        return SetpointAction.UP
    if diff <= -0.5:
        return SetpointAction.DOWN
    return SetpointAction.HOLD


def immediate_ls_action(obs_ls: np.ndarray) -> LsAction:
    """Run flexible work as it arrives (headroom permitting)."""
    return LsAction.ASSIGN


def ci_threshold_bat_action(obs_bat: np.ndarray, spec: BaselineSpec,
                            ci_percentiles, mask) -> BatAction:
    """Charge below the low CI percentile, supply above the high one.

    ci_percentiles is the (low, high) pair of absolute CI values precomputed
    over the training trace; infeasible choices degrade to Idle.
    """
    p_low, p_high = ci_percentiles
    ci_now = obs_bat[6] * CI_REF
    if isinstance(spec.bat, BatCiThreshold):
        if ci_now < p_low and mask[int(BatAction.CHARGE)]:
            return BatAction.CHARGE
        if ci_now > p_high and mask[int(BatAction.SUPPLY)]:
            return BatAction.SUPPLY
    return BatAction.IDLE


def ci_percentiles_for(ci_values: np.ndarray, spec: BaselineSpec):
    """Absolute threshold pair for the CI heuristic (or (0, inf) for idle)."""
    if isinstance(spec.bat, BatCiThreshold):
        return (float(np.percentile(ci_values, spec.bat.low_pct)),
                float(np.percentile(ci_values, spec.bat.high_pct)))
    return (0.0, float("inf"))


class BaselinePolicy:
    """Callable per-agent policy bundle for a BaselineSpec."""

    def __init__(self, spec: BaselineSpec, thermal: ThermalParams,
                 ci_values: np.ndarray):
        self.spec = spec
        self.thermal = thermal
        self.percentiles = ci_percentiles_for(ci_values, spec)

    def act(self, agent: Agent, obs: np.ndarray, mask=None) -> int:
        if agent == Agent.LS:
            return int(immediate_ls_action(obs))
        if agent == Agent.E:
            return int(rbc_hvac_action(obs, self.spec, self.thermal))
        return int(ci_threshold_bat_action(obs, self.spec, self.percentiles,
                                           mask or (True, True, True)))
