"""Network data model, JSON loader, and bus admittance matrix.

All quantities are per-unit on the system MVA base.  Branches use the
standard pi model; a transformer is a branch with an off-nominal tap on the
from side.  Bus kinds are "slack", "PV", and "PQ", with exactly one slack
bus per network.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import ParseError, ValidationError


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str
    P_load: float = 0.0
    Q_load: float = 0.0
    V_setpoint: float = 1.0
    shunt_g: float = 0.0
    shunt_b: float = 0.0


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b: float = 0.0      # total line charging susceptance
    tap: float = 1.0    # off-nominal ratio on the from side


@dataclass(frozen=True)
class GeneratorSpec:
    """Static generator record: location, dynamics data, and dispatch.

    ``P_gen`` is the scheduled active output (ignored at the slack bus,
    where the power flow determines it).  H is the inertia constant in
    MW.s/MVA on the system base, D the damping torque coefficient in pu
    torque per pu speed, xd_prime the transient reactance in pu.
    """

    bus: int
    H: float
    D: float
    xd_prime: float
    P_gen: float = 0.0


@dataclass(frozen=True)
class Network:
    base_mva: float
    f_s: float
    buses: tuple
    branches: tuple
    generators: tuple
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "branches", tuple(self.branches))
        object.__setattr__(self, "generators", tuple(self.generators))
        self._validate()
        object.__setattr__(self, "_index", {bus.id: i for i, bus in enumerate(self.buses)})

    def _validate(self):
        if self.base_mva <= 0:
            raise ValidationError("base_mva must be positive", field="base_mva")
        if self.f_s <= 0:
            raise ValidationError("f_s must be positive", field="f_s")
        ids = [bus.id for bus in self.buses]
        if len(set(ids)) != len(ids):
            raise ValidationError("bus ids must be unique", field="buses")
        kinds = [bus.kind for bus in self.buses]
        for kind in kinds:
            if kind not in ("slack", "PV", "PQ"):
                raise ValidationError(f"unknown bus kind {kind!r}", field="kind")
        if kinds.count("slack") != 1:
            raise ValidationError("exactly one slack bus is required", field="buses")
        id_set = set(ids)
        for br in self.branches:
            if br.from_bus not in id_set or br.to_bus not in id_set:
                raise ValidationError(
                    f"branch {br.from_bus}-{br.to_bus} references a missing bus", field="branches"
                )
            if br.x == 0 and br.r == 0:
                raise ValidationError(
                    f"branch {br.from_bus}-{br.to_bus} has zero impedance", field="branches"
                )
            if br.tap <= 0:
                raise ValidationError(
                    f"branch {br.from_bus}-{br.to_bus} has non-positive tap", field="branches"
                )
        gen_buses = set()
        by_id = {bus.id: bus for bus in self.buses}
        for g in self.generators:
            if g.bus not in id_set:
                raise ValidationError(f"generator references missing bus {g.bus}", field="generators")
            if g.bus in gen_buses:
                raise ValidationError(
                    f"bus {g.bus} carries more than one generator (one per bus is supported)",
                    field="generators",
                )
            gen_buses.add(g.bus)
            if g.H <= 0:
                raise ValidationError(f"generator at bus {g.bus} needs H > 0", field="H")
            if g.xd_prime <= 0:
                raise ValidationError(f"generator at bus {g.bus} needs xd_prime > 0", field="xd_prime")
            if g.D < 0:
                raise ValidationError(f"generator at bus {g.bus} needs D >= 0", field="D")
            if by_id[g.bus].kind == "PQ":
                raise ValidationError(
                    f"generator at bus {g.bus} must sit on a PV or slack bus", field="generators"
                )
        for bus in self.buses:
            if bus.kind in ("PV", "slack") and bus.V_setpoint <= 0:
                raise ValidationError(f"bus {bus.id} needs a positive V_setpoint", field="V_setpoint")

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_gen(self) -> int:
        return len(self.generators)

    @property
    def omega_s(self) -> float:
        """Synchronous speed in electrical rad/s."""
        return 2.0 * np.pi * self.f_s

    def bus_index(self, bus_id: int) -> int:
        try:
            return self._index[bus_id]
        except KeyError:
            raise ValidationError(f"unknown bus id {bus_id}", field="bus") from None

    @property
    def bus_ids(self) -> tuple:
        return tuple(bus.id for bus in self.buses)

    @property
    def slack_index(self) -> int:
        return next(i for i, bus in enumerate(self.buses) if bus.kind == "slack")


def _get(record: dict, key: str, kind, default=None, where: str = ""):
    if key not in record:
        if default is not None or key in ("P_load", "Q_load", "b", "shunt", "D", "P_gen"):
            return default
        raise ParseError(f"missing field {key!r} in {where}", field=key)
    try:
        return kind(record[key])
    except (TypeError, ValueError) as exc:
        raise ParseError(f"field {key!r} in {where} is not a {kind.__name__}", field=key) from exc


def network_from_dict(doc: dict) -> Network:
    if not isinstance(doc, dict):
        raise ParseError("network document must be a JSON object")
    for key in ("buses", "branches", "generators"):
        if key not in doc or not isinstance(doc[key], list):
            raise ParseError(f"missing or non-array field {key!r}", field=key)
    buses = []
    for rec in doc["buses"]:
        where = f"bus record {rec.get('id', '?')}"
        shunt = rec.get("shunt", [0.0, 0.0])
        if not (isinstance(shunt, (list, tuple)) and len(shunt) == 2):
            raise ParseError(f"shunt in {where} must be [g, b]", field="shunt")
        buses.append(
            Bus(
                id=_get(rec, "id", int, where=where),
                kind=_get(rec, "kind", str, where=where),
                P_load=_get(rec, "P_load", float, 0.0, where) or 0.0,
                Q_load=_get(rec, "Q_load", float, 0.0, where) or 0.0,
                V_setpoint=_get(rec, "V_setpoint", float, 1.0, where) or 1.0,
                shunt_g=float(shunt[0]),
                shunt_b=float(shunt[1]),
            )
        )
    branches = []
    for rec in doc["branches"]:
        where = f"branch record {rec.get('from', '?')}-{rec.get('to', '?')}"
        branches.append(
            Branch(
                from_bus=_get(rec, "from", int, where=where),
                to_bus=_get(rec, "to", int, where=where),
                r=_get(rec, "r", float, where=where),
                x=_get(rec, "x", float, where=where),
                b=_get(rec, "b", float, 0.0, where) or 0.0,
                tap=_get(rec, "tap", float, 1.0, where) or 1.0,
            )
        )
    generators = []
    for rec in doc["generators"]:
        where = f"generator record at bus {rec.get('bus', '?')}"
        generators.append(
            GeneratorSpec(
                bus=_get(rec, "bus", int, where=where),
                H=_get(rec, "H", float, where=where),
                D=_get(rec, "D", float, 0.0, where) or 0.0,
                xd_prime=_get(rec, "xd_prime", float, where=where),
                P_gen=_get(rec, "P_gen", float, 0.0, where) or 0.0,
            )
        )
    return Network(
        base_mva=float(doc.get("base_mva", 100.0)),
        f_s=float(doc.get("f_s", 60.0)),
        buses=buses,
        branches=branches,
        generators=generators,
    )


def load_network(path) -> Network:
    """Parse and validate a network JSON file."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON in {path}: {exc}", line=exc.lineno) from exc
    return network_from_dict(doc)


def build_ybus(network: Network) -> np.ndarray:
    """Complex bus admittance matrix from the pi-model branch data.

    Each branch adds series admittance y = 1/(r + jx) and half its charging
    at each end; an off-nominal tap t divides the from-side self term by t^2
    and both transfer terms by t.  Bus shunts add to the diagonal.
    """
    n = network.n_bus
    Y = np.zeros((n, n), dtype=complex)
    for br in network.branches:
        i = network.bus_index(br.from_bus)
        j = network.bus_index(br.to_bus)
        y = 1.0 / complex(br.r, br.x)
        ysh = 0.5j * br.b
        t = br.tap
        Y[i, i] += (y + ysh) / (t * t)
        Y[j, j] += y + ysh
        Y[i, j] -= y / t
        Y[j, i] -= y / t
    for bus in network.buses:
        k = network.bus_index(bus.id)
        Y[k, k] += complex(bus.shunt_g, bus.shunt_b)
    return Y
