"""Bundled 24-bus reliability-test-system instance with synthetic traces.

Network topology, reactances, continuous line ratings and the 2850 MW bus
load split follow the single-area 24-bus reliability test system.  Hourly
load and wind traces are synthetic: the reference wind dataset used in the
original study is not redistributable, so a seeded generator produces a
diurnal load shape and bounded autocorrelated wind series instead.
"""
from __future__ import annotations

import numpy as np

from .model import Bus, Generator, Line, MarketInstance, StorageUnit, WindFarm

__all__ = ["build_rts24", "RTS_PEAK_LOAD_MW", "DEFAULT_STORAGE_BUS"]

MVA_BASE = 100.0

# peak load per bus, MW (2850 MW system peak)
_BUS_LOAD = {
    1: 108, 2: 97, 3: 180, 4: 74, 5: 71, 6: 136, 7: 125, 8: 171, 9: 175,
    10: 195, 13: 265, 14: 194, 15: 317, 16: 100, 18: 333, 19: 181, 20: 128,
}
RTS_PEAK_LOAD_MW = float(sum(_BUS_LOAD.values()))

# (from bus, to bus, reactance pu, continuous rating MW); duplicates are
# parallel circuits
_LINES = [
    (1, 2, 0.0139, 175), (1, 3, 0.2112, 175), (1, 5, 0.0845, 175),
    (2, 4, 0.1267, 175), (2, 6, 0.1920, 175), (3, 9, 0.1190, 175),
    (3, 24, 0.0839, 400), (4, 9, 0.1037, 175), (5, 10, 0.0883, 175),
    (6, 10, 0.0605, 175), (7, 8, 0.0614, 175), (8, 9, 0.1651, 175),
    (8, 10, 0.1651, 175), (9, 11, 0.0839, 400), (9, 12, 0.0839, 400),
    (10, 11, 0.0839, 400), (10, 12, 0.0839, 400), (11, 13, 0.0476, 500),
    (11, 14, 0.0418, 500), (12, 13, 0.0476, 500), (12, 23, 0.0966, 500),
    (13, 23, 0.0865, 500), (14, 16, 0.0389, 500), (15, 16, 0.0173, 500),
    (15, 21, 0.0490, 500), (15, 21, 0.0490, 500), (15, 24, 0.0519, 500),
    (16, 17, 0.0259, 500), (16, 19, 0.0231, 500), (17, 18, 0.0144, 500),
    (17, 22, 0.1053, 500), (18, 21, 0.0259, 500), (18, 21, 0.0259, 500),
    (19, 20, 0.0396, 500), (19, 20, 0.0396, 500), (20, 23, 0.0216, 500),
    (20, 23, 0.0216, 500), (21, 22, 0.0678, 500),
]

# (bus, unit count, Pmax MW, offer price $/MWh); offer prices are synthetic
# marginal costs, staggered slightly within a class to avoid dispatch ties
_GEN_BLOCKS = [
    (1, 2, 20, 38.0), (1, 2, 76, 13.2),
    (2, 2, 20, 38.5), (2, 2, 76, 13.6),
    (7, 3, 100, 18.6),
    (13, 3, 197, 20.9),
    (15, 5, 12, 26.1), (15, 1, 155, 10.9),
    (16, 1, 155, 10.7),
    (18, 1, 400, 6.0),
    (21, 1, 400, 6.2),
    (22, 6, 50, 0.6),
    (23, 2, 155, 11.2), (23, 1, 350, 11.8),
]
_COST_STAGGER = 0.13

# wind farms on the 230 kV side so the uncongested base case stays uncongested
_WIND_FARMS = [(3, 350.0), (15, 350.0), (16, 350.0), (21, 350.0), (23, 350.0)]

DEFAULT_STORAGE_BUS = 19
CONSUMER_BID_PRICE = 1000.0


def synthetic_traces(wind_seed: int, day: int, horizon: int):
    """Deterministic hourly load shape and per-farm wind series for one day.

    Returns (load_shape[t], wind[farm, t] in MW).
    """
    rng = np.random.default_rng([int(wind_seed), int(day)])
    hours = np.arange(horizon)
    season = 0.95 + 0.05 * np.cos(2 * np.pi * (day - 15) / 365.0)
    shape = (0.56 + 0.46 * np.exp(-((hours - 19.0) ** 2) / 13.0)
             + 0.24 * np.exp(-((hours - 11.0) ** 2) / 26.0))
    shape = season * shape + rng.normal(0.0, 0.012, horizon)
    shape = np.clip(shape, 0.45, 1.02)

    diurnal = 0.45 + 0.33 * np.cos(2 * np.pi * (hours - 3.0) / 24.0)
    wind = np.empty((len(_WIND_FARMS), horizon))
    for w, (_bus, cap) in enumerate(_WIND_FARMS):
        x = rng.normal(0.0, 0.8)
        for t in range(horizon):
            x = 0.82 * x + rng.normal(0.0, 0.45)
            wind[w, t] = cap * float(np.clip(diurnal[t] + 0.35 * x, 0.0, 1.0))
    return shape, wind


def build_rts24(line_scale: float = 1.0, wind_seed: int = 0, day: int = 0,
                horizon: int = 24, storage_bus: int = DEFAULT_STORAGE_BUS,
                wind_offer_price: float = 0.0) -> MarketInstance:
    """Build the bundled 24-bus instance for one simulated day.

    `line_scale` multiplies every line rating; `wind_seed` and `day` select
    the deterministic synthetic trace; `storage_bus` relocates the single
    storage unit.
    """
    if line_scale <= 0:
        raise ValueError("line_scale must be > 0")
    shape, wind = synthetic_traces(wind_seed, day, horizon)

    buses = tuple(
        Bus(id=b, consumer_bid_price=CONSUMER_BID_PRICE,
            load_min=tuple(0.0 for _ in range(horizon)),
            load_max=tuple(float(_BUS_LOAD.get(b, 0.0) * shape[t])
                           for t in range(horizon)))
        for b in range(1, 25)
    )
    lines = tuple(
        Line(id=i, from_bus=f, to_bus=t, reactance=x,
             capacity=cap * line_scale)
        for i, (f, t, x, cap) in enumerate(_LINES)
    )
    gens = []
    for bus, count, pmax, price in _GEN_BLOCKS:
        for k in range(count):
            gens.append(Generator(id=len(gens), bus=bus, p_min=0.0,
                                  p_max=float(pmax),
                                  offer_price=price + _COST_STAGGER * k))
    farms = tuple(
        WindFarm(id=w, bus=bus, forecast=tuple(float(v) for v in wind[w]),
                 offer_price=wind_offer_price)
        for w, (bus, _cap) in enumerate(_WIND_FARMS)
    )
    storage = StorageUnit(
        id=0, bus=storage_bus, charge_max=93.0, discharge_max=93.0,
        eta_charge=0.9, eta_discharge=0.9, soc_min=0.0, soc_max=629.0,
        soc_init=315.0, cost_discharge=0.0, cost_charge=0.0, bid_price=30.0,
    )
    return MarketInstance(
        buses=buses, lines=lines, generators=tuple(gens), wind_farms=farms,
        storage_units=(storage,), horizon=horizon, ref_bus=1,
    )
