"""UPS battery repurposed for carbon arbitrage: charge, supply, or idle.

The battery sits behind the facility meter and never exports: Supply is
clamped to the facility draw, so grid power stays non-negative. Facility
energy itself is untouched by battery actions; only the grid split moves.
"""

from dataclasses import dataclass
from enum import IntEnum

from .errors import ConfigInvalid

MASK_EPS_KWH = 1e-6


@dataclass(frozen=True)
class BatteryParams:
    capacity: float = 600.0   # kWh (50% of the 1.2 MWh max hourly load)
    soc_min: float = 60.0     # kWh held back as UPS reserve
    p_max: float = 300.0      # kW, symmetric charge/discharge cap
    eta_c: float = 0.95
    eta_d: float = 0.95
    dt: float = 0.25          # hours per step

    def __post_init__(self):
        if not 0.0 <= self.soc_min < self.capacity:
            raise ConfigInvalid("need 0 <= soc_min < capacity")
        if self.p_max <= 0:
            raise ConfigInvalid("p_max must be positive")
        for name in ("eta_c", "eta_d"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise ConfigInvalid(f"{name} must be in (0, 1]")
        if self.dt <= 0:
            raise ConfigInvalid("dt must be positive")


@dataclass(frozen=True)
class BatteryState:
    soc: float                     # kWh
    last_charge_kw: float = 0.0
    last_discharge_kw: float = 0.0


class BatAction(IntEnum):
    CHARGE = 0
    SUPPLY = 1
    IDLE = 2


def battery_step(s: BatteryState, a: BatAction, facility_kw: float,
                 p: BatteryParams):
    """Apply one battery action; returns (next state, grid_kw).

    Charge draws extra grid power at up to p_max (clamped so soc never
    exceeds capacity); Supply offsets facility draw at up to p_max (clamped
    to the facility demand and to the usable energy above soc_min); Idle
    leaves soc untouched. grid_kw >= 0 always.
    """
    if facility_kw < 0:
        raise ConfigInvalid(f"facility_kw must be non-negative, got {facility_kw}")
    a = BatAction(a)
    if a == BatAction.CHARGE:
        p_ch = min(p.p_max, (p.capacity - s.soc) / (p.eta_c * p.dt))
        # min() guarantees the bound mathematically; the clamp only absorbs
        # the last-ulp rounding of the efficiency round trip.
        soc = min(p.capacity, s.soc + p.eta_c * p_ch * p.dt)
        return (
            BatteryState(soc=soc, last_charge_kw=p_ch, last_discharge_kw=0.0),
            facility_kw + p_ch,
        )
    if a == BatAction.SUPPLY:
        p_dis = min(p.p_max, facility_kw, (s.soc - p.soc_min) * p.eta_d / p.dt)
        soc = max(p.soc_min, s.soc - p_dis * p.dt / p.eta_d)
        return (
            BatteryState(soc=soc, last_charge_kw=0.0, last_discharge_kw=p_dis),
            facility_kw - p_dis,
        )
    return BatteryState(soc=s.soc, last_charge_kw=0.0, last_discharge_kw=0.0), facility_kw


def action_mask(s: BatteryState, p: BatteryParams):
    """(charge_ok, supply_ok, idle_ok): blocks no-op charge/supply extremes."""
    return (
        s.soc < p.capacity - MASK_EPS_KWH,
        s.soc > p.soc_min + MASK_EPS_KWH,
        True,
    )
