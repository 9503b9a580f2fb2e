"""Zonal power-system data model.

Zones are the bus granularity. Generators and storage assets are kept at
unit level inside their zone, branches are aggregated inter-zonal links.
Everything here is an immutable dataclass so a :class:`Network` can be
shared read-only between worker processes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .outages import OutageParams

TECHNOLOGIES = ("coal", "hydro", "ng", "nuclear", "ogs", "solar", "wind", "storage-existing")
VRE_TECHNOLOGIES = ("solar", "wind")


@dataclass(frozen=True)
class Zone:
    id: int
    name: str
    peak_load_mw: float


@dataclass(frozen=True)
class Branch:
    id: int
    from_zone: int
    to_zone: int
    reactance_pu: float
    capacity_mw: float
    length_miles: float = 1.0

    @property
    def name(self) -> str:
        return f"{self.from_zone}-{self.to_zone}"


@dataclass(frozen=True)
class GeneratorUnit:
    id: str
    zone: int
    tech: str
    capacity_mw: float
    marginal_cost_usd_per_mwh: Optional[float] = None
    heat_rate_mmbtu_per_mwh: float = 0.0
    fuel_price_usd_per_mmbtu: float = 0.0
    fixed_om_usd_per_mw_yr: float = 0.0
    var_om_usd_per_mwh: float = 0.0
    startup_cost_usd_per_mw: float = 0.0
    ramp_10min_frac: float = 1.0
    ramp_hourly_frac: float = 1.0
    outage: Optional[OutageParams] = None
    is_vre: bool = False
    profile: Optional[str] = None

    @property
    def marginal_cost(self) -> float:
        """Explicit marginal cost if given, else heat rate x fuel price + variable O&M."""
        if self.marginal_cost_usd_per_mwh is not None:
            return float(self.marginal_cost_usd_per_mwh)
        return self.heat_rate_mmbtu_per_mwh * self.fuel_price_usd_per_mmbtu + self.var_om_usd_per_mwh


@dataclass(frozen=True)
class StorageAsset:
    id: str
    zone: int
    power_mw: float
    energy_mwh: float
    charge_eff: float = 0.9
    discharge_eff: float = 0.9
    fixed_om_usd_per_mw_yr: float = 0.0
    var_om_usd_per_mwh: float = 0.0
    heat_rate_mmbtu_per_mwh: float = 0.0
    is_satoa: bool = False

    @property
    def marginal_cost(self) -> float:
        return float(self.var_om_usd_per_mwh)


@dataclass(frozen=True)
class CandidateLineUpgrade:
    """Capacity increase on an existing corridor.

    With ``reactance_pu`` unset the upgrade is a continuous MW addition to the
    branch rating. With it set, the candidate is a new parallel circuit of
    fixed size ``max_delta_mw`` built as a binary decision.
    """

    branch_id: int
    max_delta_mw: float
    cost_usd_per_mw_mile: float
    reactance_pu: Optional[float] = None


@dataclass(frozen=True)
class CandidateStorageBlock:
    """Storage buildable in integer blocks; ``zone=None`` means any zone."""

    zone: Optional[int]
    block_mw: float
    duration_h: float
    max_blocks: int
    cost_usd_per_mwh: float
    charge_eff: float = 0.9
    discharge_eff: float = 0.9
    fixed_om_usd_per_mw_yr: float = 0.0

    @property
    def block_cost_usd(self) -> float:
        return self.cost_usd_per_mwh * self.block_mw * self.duration_h


@dataclass(frozen=True)
class EconParams:
    interest_rate: float = 0.07
    voll_usd_per_mwh: float = 9000.0
    capital_recovery_factor: float = 0.09429
    year_origin: int = 2030
    plan_year: int = 2030
    repeat_years: int = 20


@dataclass(frozen=True)
class Network:
    zones: tuple[Zone, ...]
    branches: tuple[Branch, ...] = ()
    generators: tuple[GeneratorUnit, ...] = ()
    storages: tuple[StorageAsset, ...] = ()
    candidate_lines: tuple[CandidateLineUpgrade, ...] = ()
    candidate_storage: tuple[CandidateStorageBlock, ...] = ()
    econ: EconParams = field(default_factory=EconParams)

    def __post_init__(self):
        for name in ("zones", "branches", "generators", "storages", "candidate_lines", "candidate_storage"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    @property
    def zone_ids(self) -> list[int]:
        return [z.id for z in self.zones]

    @property
    def n_zones(self) -> int:
        return len(self.zones)

    def zone_index(self, zone_id: int) -> int:
        for k, z in enumerate(self.zones):
            if z.id == zone_id:
                return k
        raise KeyError(f"unknown zone {zone_id}")

    def branch(self, branch_id: int) -> Branch:
        for b in self.branches:
            if b.id == branch_id:
                return b
        raise KeyError(f"unknown branch {branch_id}")

    def total_capacity_mw(self) -> float:
        """Nameplate generation plus storage power (the Table-I style total)."""
        return sum(g.capacity_mw for g in self.generators) + sum(s.power_mw for s in self.storages)

    def zone_capacity_mw(self, zone_id: int) -> float:
        return sum(g.capacity_mw for g in self.generators if g.zone == zone_id) + sum(
            s.power_mw for s in self.storages if s.zone == zone_id
        )

    def replace(self, **changes) -> "Network":
        return replace(self, **changes)


@dataclass(frozen=True)
class Issue:
    code: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple[Issue, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.issues

    def codes(self) -> list[str]:
        return [i.code for i in self.issues]

    def __str__(self) -> str:
        if self.ok:
            return "network valid"
        return "\n".join(f"[{i.code}] {i.message}" for i in self.issues)


def _finite(*xs) -> bool:
    return all(isinstance(x, (int, float)) and math.isfinite(x) for x in xs)


def connected_zone_groups(net: Network) -> list[list[int]]:
    """Zone ids grouped by connected component of the branch graph."""
    ids = net.zone_ids
    pos = {z: k for k, z in enumerate(ids)}
    edges = [(pos[b.from_zone], pos[b.to_zone]) for b in net.branches if b.from_zone in pos and b.to_zone in pos]
    n = len(ids)
    if n == 0:
        return []
    if edges:
        r, c = np.array(edges).T
    else:
        r = c = np.zeros(0, dtype=int)
    graph = coo_matrix((np.ones(len(r)), (r, c)), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    groups: dict[int, list[int]] = {}
    for k, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(ids[k])
    return list(groups.values())


def validate_network(net: Network) -> ValidationReport:
    """Check structural invariants; problems are returned, never raised."""
    issues: list[Issue] = []

    def add(code, msg):
        issues.append(Issue(code, msg))

    if not net.zones:
        add("no zones", "network has no zones")
        return ValidationReport(tuple(issues))

    ids = [z.id for z in net.zones]
    if sorted(ids) != list(range(1, len(ids) + 1)):
        add("zone ids", f"zone ids must be unique and contiguous from 1, got {ids}")
    zone_set = set(ids)
    for z in net.zones:
        if not _finite(z.peak_load_mw) or z.peak_load_mw < 0:
            add("zone peak", f"zone {z.id} peak load {z.peak_load_mw} must be >= 0")

    branch_ids = set()
    for b in net.branches:
        if b.id in branch_ids:
            add("branch id", f"duplicate branch id {b.id}")
        branch_ids.add(b.id)
        if b.from_zone not in zone_set or b.to_zone not in zone_set:
            add("dangling endpoint", f"branch {b.id} ({b.name}) references a missing zone")
        if b.from_zone == b.to_zone:
            add("self loop", f"branch {b.id} connects zone {b.from_zone} to itself")
        if not _finite(b.reactance_pu) or b.reactance_pu <= 0:
            add("reactance", f"branch {b.id} reactance must be > 0")
        if not _finite(b.capacity_mw) or b.capacity_mw <= 0:
            add("branch capacity", f"branch {b.id} capacity must be > 0")
        if not _finite(b.length_miles) or b.length_miles <= 0:
            add("branch length", f"branch {b.id} length must be > 0")

    max_mc = 0.0
    unit_ids = set()
    for g in net.generators:
        if g.id in unit_ids:
            add("unit id", f"duplicate unit id {g.id}")
        unit_ids.add(g.id)
        if g.zone not in zone_set:
            add("dangling unit", f"generator {g.id} references missing zone {g.zone}")
        if g.tech not in TECHNOLOGIES:
            add("technology", f"generator {g.id} has unknown technology {g.tech!r}")
        if not _finite(g.capacity_mw) or g.capacity_mw <= 0:
            add("unit capacity", f"generator {g.id} capacity must be > 0")
        for name in ("ramp_10min_frac", "ramp_hourly_frac"):
            v = getattr(g, name)
            if not _finite(v) or not 0 <= v <= 1:
                add("ramp", f"generator {g.id} {name}={v} outside [0, 1]")
        if g.is_vre and not g.profile:
            add("vre profile", f"VRE generator {g.id} has no profile reference")
        if _finite(g.marginal_cost):
            max_mc = max(max_mc, g.marginal_cost)
        else:
            add("marginal cost", f"generator {g.id} marginal cost not finite")
    for s in net.storages:
        if s.id in unit_ids:
            add("unit id", f"duplicate unit id {s.id}")
        unit_ids.add(s.id)
        if s.zone not in zone_set:
            add("dangling unit", f"storage {s.id} references missing zone {s.zone}")
        if not _finite(s.power_mw, s.energy_mwh) or s.power_mw <= 0 or s.energy_mwh < 0:
            add("storage size", f"storage {s.id} needs power > 0 and energy >= 0")
        if not (0 < s.charge_eff <= 1 and 0 < s.discharge_eff <= 1):
            add("efficiency", f"storage {s.id} efficiencies must lie in (0, 1]")
        max_mc = max(max_mc, s.marginal_cost)

    for c in net.candidate_lines:
        if c.branch_id not in branch_ids:
            add("candidate reference", f"line candidate references missing branch {c.branch_id}")
        if not _finite(c.max_delta_mw) or c.max_delta_mw < 0:
            add("candidate bound", f"line candidate on branch {c.branch_id} needs max_delta_mw >= 0")
        if c.reactance_pu is not None and c.reactance_pu <= 0:
            add("reactance", f"new circuit on branch {c.branch_id} needs reactance > 0")
    for c in net.candidate_storage:
        if c.zone is not None and c.zone not in zone_set:
            add("candidate reference", f"storage candidate references missing zone {c.zone}")
        if c.block_mw <= 0 or c.max_blocks < 1 or c.duration_h <= 0:
            add("candidate bound", "storage candidate needs block_mw > 0, duration > 0, max_blocks >= 1")

    e = net.econ
    if not _finite(e.interest_rate, e.voll_usd_per_mwh, e.capital_recovery_factor):
        add("econ", "economic parameters must be finite")
    else:
        if e.interest_rate < 0:
            add("econ", "interest rate must be >= 0")
        if not 0 < e.capital_recovery_factor <= 1:
            add("econ", "capital recovery factor must lie in (0, 1]")
        if e.voll_usd_per_mwh <= max_mc:
            add("voll", f"VOLL {e.voll_usd_per_mwh} must exceed the largest marginal cost {max_mc}")
    if e.repeat_years < 1:
        add("econ", "repeat_years must be >= 1")

    groups = connected_zone_groups(net)
    if len(groups) > 1:
        add("disconnected", f"branch graph has {len(groups)} components: {groups}")

    return ValidationReport(tuple(issues))
