"""Lumped-parameter data-center thermal surrogate.

One zone with first-order temperature dynamics, IT power with a quadratic
server-fan penalty above a safe zone temperature, and proportional cooling
whose COP degrades with the outdoor-minus-setpoint gap (an economizer-like
high-COP regime when outdoors is cool). Defaults are sized so peak facility
power is about 1.2 MW.
"""

from dataclasses import dataclass, fields
from enum import IntEnum

from .errors import BadUtilization, ConfigInvalid


@dataclass(frozen=True)
class ThermalParams:
    p_idle: float = 400.0    # kW, IT power at zero utilization
    p_dyn: float = 600.0     # kW, IT dynamic range
    k_fan: float = 5.0       # kW/degC^2 above t_safe
    t_safe: float = 25.0     # degC, fan-penalty threshold
    c_th: float = 40.0       # kWh/degC, zone thermal capacitance
    k_env: float = 10.0      # kW/degC, envelope conductance
    k_p: float = 200.0       # kW_th/degC, cooling proportional gain
    q_max: float = 1500.0    # kW_th, cooling capacity
    cop0: float = 6.0
    k_cop: float = 0.3       # 1/degC, COP slope vs (t_out - t_set)
    cop_min: float = 1.5
    cop_max: float = 9.0
    set_min: float = 15.0    # degC
    set_max: float = 27.0    # degC
    dt: float = 0.25         # hours per step

    def __post_init__(self):
        # p_idle and k_fan may legitimately be zeroed (no floor / no fan
        # penalty); everything else must be strictly positive.
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("p_idle", "k_fan"):
                if v < 0:
                    raise ConfigInvalid(f"thermal parameter {f.name} must be >= 0")
            elif v <= 0:
                raise ConfigInvalid(f"thermal parameter {f.name} must be positive")
        if not self.set_min < self.set_max:
            raise ConfigInvalid("set_min must be below set_max")
        if not self.cop_min <= self.cop0 <= self.cop_max:
            raise ConfigInvalid("need cop_min <= cop0 <= cop_max")


@dataclass(frozen=True)
class DcState:
    t_zone: float   # degC
    t_set: float    # degC
    p_it: float     # kW
    p_hvac: float   # kW
    e_step: float   # kWh consumed by the facility this step


class SetpointAction(IntEnum):
    DOWN = 0
    HOLD = 1
    UP = 2


def it_power(u: float, t_zone: float, p: ThermalParams) -> float:
    """IT power: idle floor, linear dynamic term, quadratic fan penalty."""
    if not 0.0 <= u <= 1.0:
        raise BadUtilization(f"utilization must be in [0, 1], got {u}")
    over = max(0.0, t_zone - p.t_safe)
    return p.p_idle + p.p_dyn * u + p.k_fan * over * over


def hvac_step(t_zone: float, t_set: float, t_out: float, p: ThermalParams):
    """Cooling duty and electrical draw for one step.

    Returns (q_cool kW_th, p_hvac kW). Proportional cooling against the
    setpoint excess, with COP falling as outdoors gets hotter than the
    setpoint and clamped to [cop_min, cop_max].
    """
    q_cool = min(p.q_max, p.k_p * max(0.0, t_zone - t_set))
    cop = min(p.cop_max, max(p.cop_min, p.cop0 - p.k_cop * (t_out - t_set)))
    return q_cool, q_cool / cop


def zone_step(s: DcState, u: float, t_out: float, p: ThermalParams) -> DcState:
    """Advance the zone one step (explicit Euler); setpoint is unchanged."""
    p_it = it_power(u, s.t_zone, p)
    q_cool, p_hvac = hvac_step(s.t_zone, s.t_set, t_out, p)
    t_zone = s.t_zone + (p.dt / p.c_th) * (p_it + p.k_env * (t_out - s.t_zone) - q_cool)
    return DcState(
        t_zone=t_zone,
        t_set=s.t_set,
        p_it=p_it,
        p_hvac=p_hvac,
        e_step=(p_it + p_hvac) * p.dt,
    )


def apply_setpoint_action(t_set: float, a: SetpointAction, p: ThermalParams) -> float:
    """Move the setpoint by +-1 degC (or hold), clamped to its bounds."""
    delta = {SetpointAction.DOWN: -1.0, SetpointAction.HOLD: 0.0, SetpointAction.UP: 1.0}
    return min(p.set_max, max(p.set_min, t_set + delta[SetpointAction(a)]))
