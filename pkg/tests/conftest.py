import numpy as np
import pytest

from gridarb.model import (Bus, Generator, Line, MarketInstance, StorageUnit,
                           WindFarm)


def make_two_bus(horizon=4, line_cap=50.0, storage_rate=10.0,
                 consumer_bid=60.0, eta=1.0, soc_max=40.0, soc_init=10.0,
                 load2=(20.0, 30.0, 80.0, 90.0), gen2_price=40.0):
    """Hand-checkable 2-bus system: cheap generation at bus 1, expensive at
    bus 2, storage at bus 2 behind a limited line."""
    T = horizon
    buses = (
        Bus(id=1, consumer_bid_price=consumer_bid, load_min=(0.0,) * T,
            load_max=(50.0,) * T),
        Bus(id=2, consumer_bid_price=consumer_bid, load_min=(0.0,) * T,
            load_max=tuple(load2[:T])),
    )
    lines = (Line(id=0, from_bus=1, to_bus=2, reactance=0.1,
                  capacity=line_cap),)
    gens = (Generator(id=0, bus=1, p_min=0.0, p_max=200.0, offer_price=10.0),
            Generator(id=1, bus=2, p_min=0.0, p_max=100.0,
                      offer_price=gen2_price))
    sto = StorageUnit(id=0, bus=2, charge_max=storage_rate,
                      discharge_max=storage_rate, eta_charge=eta,
                      eta_discharge=eta, soc_min=0.0, soc_max=soc_max,
                      soc_init=soc_init, cost_discharge=0.0, cost_charge=0.0,
                      bid_price=30.0)
    return MarketInstance(buses=buses, lines=lines, generators=gens,
                          wind_farms=(), storage_units=(sto,), horizon=T,
                          ref_bus=1)


@pytest.fixture
def two_bus():
    return make_two_bus()


@pytest.fixture
def two_bus_wind():
    base = make_two_bus()
    wind = (WindFarm(id=0, bus=1, forecast=(30.0, 30.0, 0.0, 0.0),
                     offer_price=0.0),)
    return MarketInstance(buses=base.buses, lines=base.lines,
                          generators=base.generators, wind_farms=wind,
                          storage_units=base.storage_units,
                          horizon=base.horizon, ref_bus=1)


def rng_for(name: str) -> np.random.Generator:
    import zlib
    return np.random.default_rng(zlib.crc32(name.encode()))
