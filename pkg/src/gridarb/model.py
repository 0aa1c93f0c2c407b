"""Domain model: buses, lines, generators, wind farms, storage and market instances.

Instances are immutable once constructed; transformations such as
:func:`derate_local_lines` return new instances.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

__all__ = [
    "Bus", "Line", "Generator", "WindFarm", "StorageUnit", "MarketInstance",
    "validate", "derate_local_lines", "move_storage",
    "instance_to_json", "instance_from_json",
]


@dataclass(frozen=True)
class Bus:
    id: int
    consumer_bid_price: float
    load_min: tuple[float, ...]
    load_max: tuple[float, ...]


@dataclass(frozen=True)
class Line:
    id: int
    from_bus: int
    to_bus: int
    reactance: float          # per unit on the system MVA base
    capacity: float           # MW


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    p_min: float
    p_max: float
    offer_price: float


@dataclass(frozen=True)
class WindFarm:
    id: int
    bus: int
    forecast: tuple[float, ...]   # MW per hour
    offer_price: float = 0.0


@dataclass(frozen=True)
class StorageUnit:
    id: int
    bus: int
    charge_max: float
    discharge_max: float
    eta_charge: float
    eta_discharge: float
    soc_min: float
    soc_max: float
    soc_init: float
    cost_discharge: float = 0.0
    cost_charge: float = 0.0
    bid_price: float = 0.0


@dataclass(frozen=True)
class MarketInstance:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]
    wind_farms: tuple[WindFarm, ...]
    storage_units: tuple[StorageUnit, ...]
    horizon: int
    ref_bus: int
    step: float = 1.0             # hours per interval

    def bus_ids(self) -> list[int]:
        return [b.id for b in self.buses]

    def bus(self, bus_id: int) -> Bus:
        for b in self.buses:
            if b.id == bus_id:
                return b
        raise KeyError(f"no bus {bus_id}")


def _connected_from(instance: MarketInstance, start: int) -> set[int]:
    """Breadth-first search over the line graph."""
    adj: dict[int, list[int]] = {b.id: [] for b in instance.buses}
    for ln in instance.lines:
        if ln.from_bus in adj and ln.to_bus in adj:
            adj[ln.from_bus].append(ln.to_bus)
            adj[ln.to_bus].append(ln.from_bus)
    seen = {start}
    frontier = [start]
    while frontier:
        nxt = []
        for u in frontier:
            for v in adj.get(u, []):
                if v not in seen:
                    seen.add(v)
                    nxt.append(v)
        frontier = nxt
    return seen


def validate(instance: MarketInstance) -> list[str]:
    """Check all model invariants; returns a list of violation messages.

    An empty list means the instance is well formed.
    """
    out: list[str] = []
    ids = set()
    T = instance.horizon
    if T < 1:
        out.append(f"horizon must be >= 1, got {T}")
    for b in instance.buses:
        if b.id in ids:
            out.append(f"duplicate bus id {b.id}")
        ids.add(b.id)
        if b.consumer_bid_price < 0:
            out.append(f"bus {b.id}: consumer_bid_price < 0")
        if len(b.load_min) != T or len(b.load_max) != T:
            out.append(f"bus {b.id}: load trace length != horizon {T}")
            continue
        for t in range(T):
            if not (0 <= b.load_min[t] <= b.load_max[t]):
                out.append(f"bus {b.id}: load bounds violated at t={t}")
                break
    if instance.ref_bus not in ids:
        out.append(f"ref_bus {instance.ref_bus} does not exist")
    for ln in instance.lines:
        if ln.from_bus == ln.to_bus:
            out.append(f"line {ln.id}: from_bus == to_bus")
        if ln.reactance <= 0:
            out.append(f"line {ln.id}: reactance must be > 0")
        if ln.capacity < 0:
            out.append(f"line {ln.id}: capacity must be >= 0")
        for end in (ln.from_bus, ln.to_bus):
            if end not in ids:
                out.append(f"line {ln.id}: unknown bus {end}")
    for g in instance.generators:
        if g.bus not in ids:
            out.append(f"generator {g.id}: unknown bus {g.bus}")
        if not (0 <= g.p_min <= g.p_max):
            out.append(f"generator {g.id}: power bounds violated")
    for w in instance.wind_farms:
        if w.bus not in ids:
            out.append(f"wind farm {w.id}: unknown bus {w.bus}")
        if len(w.forecast) != T:
            out.append(f"wind farm {w.id}: forecast length != horizon {T}")
        elif any(v < 0 for v in w.forecast):
            out.append(f"wind farm {w.id}: negative forecast")
    for s in instance.storage_units:
        if s.bus not in ids:
            out.append(f"storage {s.id}: unknown bus {s.bus}")
        if not (s.soc_min <= s.soc_init <= s.soc_max):
            out.append(f"storage {s.id}: soc_init outside [soc_min, soc_max]")
        if s.charge_max < 0 or s.discharge_max < 0:
            out.append(f"storage {s.id}: negative rate limit")
        if not (0 < s.eta_charge <= 1) or not (0 < s.eta_discharge <= 1):
            out.append(f"storage {s.id}: efficiency outside (0, 1]")
    if instance.ref_bus in ids and instance.buses:
        reached = _connected_from(instance, instance.ref_bus)
        missing = sorted(ids - reached)
        if missing:
            out.append(f"network not connected: unreachable buses {missing}")
    return out


def derate_local_lines(instance: MarketInstance, bus: int, factor: float) -> MarketInstance:
    """Scale the capacity of every line incident to `bus` by `factor`.

    Raises KeyError if the bus does not exist; requires 0 < factor <= 1.
    """
    if not 0 < factor <= 1:
        raise ValueError(f"factor must be in (0, 1], got {factor}")
    instance.bus(bus)
    lines = tuple(
        replace(ln, capacity=ln.capacity * factor)
        if bus in (ln.from_bus, ln.to_bus) else ln
        for ln in instance.lines
    )
    return replace(instance, lines=lines)


def move_storage(instance: MarketInstance, bus: int) -> MarketInstance:
    """Relocate every storage unit to `bus`."""
    instance.bus(bus)
    units = tuple(replace(s, bus=bus) for s in instance.storage_units)
    return replace(instance, storage_units=units)


# ---------------------------------------------------------------------------
# JSON serialization

def instance_to_json(instance: MarketInstance) -> str:
    doc = {
        "horizon": instance.horizon,
        "ref_bus": instance.ref_bus,
        "step": instance.step,
        "buses": [
            {"id": b.id, "consumer_bid_price": b.consumer_bid_price,
             "load_min": list(b.load_min), "load_max": list(b.load_max)}
            for b in instance.buses
        ],
        "lines": [
            {"id": ln.id, "from_bus": ln.from_bus, "to_bus": ln.to_bus,
             "reactance": ln.reactance, "capacity": ln.capacity}
            for ln in instance.lines
        ],
        "generators": [
            {"id": g.id, "bus": g.bus, "p_min": g.p_min, "p_max": g.p_max,
             "offer_price": g.offer_price}
            for g in instance.generators
        ],
        "wind_farms": [
            {"id": w.id, "bus": w.bus, "forecast": list(w.forecast),
             "offer_price": w.offer_price}
            for w in instance.wind_farms
        ],
        "storage_units": [
            {"id": s.id, "bus": s.bus, "charge_max": s.charge_max,
             "discharge_max": s.discharge_max, "eta_charge": s.eta_charge,
             "eta_discharge": s.eta_discharge, "soc_min": s.soc_min,
             "soc_max": s.soc_max, "soc_init": s.soc_init,
             "cost_discharge": s.cost_discharge, "cost_charge": s.cost_charge,
             "bid_price": s.bid_price}
            for s in instance.storage_units
        ],
    }
    return json.dumps(doc, indent=2)


def instance_from_json(text: str) -> MarketInstance:
    doc = json.loads(text)
    return MarketInstance(
        buses=tuple(
            Bus(id=d["id"], consumer_bid_price=d["consumer_bid_price"],
                load_min=tuple(d["load_min"]), load_max=tuple(d["load_max"]))
            for d in doc["buses"]
        ),
        lines=tuple(
            Line(id=d["id"], from_bus=d["from_bus"], to_bus=d["to_bus"],
                 reactance=d["reactance"], capacity=d["capacity"])
            for d in doc["lines"]
        ),
        generators=tuple(
            Generator(id=d["id"], bus=d["bus"], p_min=d["p_min"],
                      p_max=d["p_max"], offer_price=d["offer_price"])
            for d in doc["generators"]
        ),
        wind_farms=tuple(
            WindFarm(id=d["id"], bus=d["bus"], forecast=tuple(d["forecast"]),
                     offer_price=d.get("offer_price", 0.0))
            for d in doc["wind_farms"]
        ),
        storage_units=tuple(
            StorageUnit(id=d["id"], bus=d["bus"], charge_max=d["charge_max"],
                        discharge_max=d["discharge_max"],
                        eta_charge=d["eta_charge"],
                        eta_discharge=d["eta_discharge"],
                        soc_min=d["soc_min"], soc_max=d["soc_max"],
                        soc_init=d["soc_init"],
                        cost_discharge=d.get("cost_discharge", 0.0),
                        cost_charge=d.get("cost_charge", 0.0),
                        bid_price=d.get("bid_price", 0.0))
            for d in doc["storage_units"]
        ),
        horizon=doc["horizon"],
        ref_bus=doc["ref_bus"],
        step=doc.get("step", 1.0),
    )
