"""Deterministic transmission / storage expansion planning.

The model is a single-node (one scenario, one year) least-cost expansion
problem over representative operating periods:

    min  SP * (D_y * invc + DA_y * oprc)

with ``invc`` the investment in line upgrades and storage blocks and
``oprc`` the annual operation cost (fixed O&M, variable O&M, fuel,
start-up and lost-load terms, each hourly term weighted by its period
weight). Operations use a B-theta DC network, relaxed unit commitment
(status and start-up variables in [0, 1]) and cyclic storage balances
inside each representative period.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .linear import LinearModel, Solution, solve_mip
from .network import Branch, Network, StorageAsset, validate_network

MODES = ("TEP", "BEP", "BTEP")
BASE_MVA = 100.0


class PlanningError(RuntimeError):
    """Raised when the expansion model cannot be built or solved."""

    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


def discount_factors(delta: float, y: int, y_origin: int, repeat_years: int) -> tuple[float, float]:
    """Investment discount ``D_y`` and accumulated end-of-year operation factor ``DA_y``."""
    if delta < 0 or repeat_years < 1:
        raise ValueError("need delta >= 0 and repeat_years >= 1")
    d = 1.0 / (1.0 + delta) ** (y - y_origin)
    annuity = sum(1.0 / (1.0 + delta) ** t for t in range(1, repeat_years + 1))
    return d, d * annuity


@dataclass
class OperatingPeriod:
    load: np.ndarray  # hours x zones
    vre_cf: dict  # profile name -> hourly capacity factors
    weight: float
    label: str = ""

    @property
    def hours(self) -> int:
        return self.load.shape[0]


@dataclass
class ExpansionCase:
    mode: str
    periods: list
    scenario_probability: float = 1.0

    def __post_init__(self):
        self.mode = self.mode.upper()
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.periods:
            raise ValueError("at least one operating period is required")
        if any(p.weight <= 0 for p in self.periods):
            raise ValueError("period weights must be > 0")
        if len({p.hours for p in self.periods}) != 1:
            raise ValueError("all operating periods must have the same number of hours")

    @property
    def total_weight_hours(self) -> float:
        return sum(p.weight * p.hours for p in self.periods)

    @classmethod
    def daily_peaks(cls, mode: str, profiles, weight: float = 24.0) -> "ExpansionCase":
        """One single-hour period per day at the day's systemwide peak hour."""
        total = profiles.load.sum(axis=0)
        periods = []
        for day in range(profiles.hours // 24):
            h = day * 24 + int(np.argmax(total[day * 24 : day * 24 + 24]))
            periods.append(
                OperatingPeriod(
                    profiles.load[:, h : h + 1].T.copy(),
                    {k: v[h : h + 1].copy() for k, v in profiles.vre_cf.items()},
                    weight,
                    label=f"day{day}h{h % 24}",
                )
            )
        return cls(mode, periods)


@dataclass
class StorageBuild:
    zone: int
    blocks: int
    power_mw: float
    energy_mwh: float
    cost_usd: float
    charge_eff: float = 0.9
    discharge_eff: float = 0.9


@dataclass
class LineUpgrade:
    branch: int
    delta_mw: float
    cost_usd: float
    new_circuit_reactance_pu: Optional[float] = None


@dataclass
class ExpansionPlan:
    case: str
    line_upgrades: list = field(default_factory=list)
    storage: list = field(default_factory=list)
    operation_cost_usd: float = 0.0
    objective_usd: float = 0.0
    capital_recovery_factor: float = 1.0
    status: str = "optimal"
    mip_gap: float = 0.0
    cost_terms: dict = field(default_factory=dict)

    @property
    def line_invest_cost_usd(self) -> float:
        return sum(u.cost_usd for u in self.line_upgrades)

    @property
    def storage_invest_cost_usd(self) -> float:
        return sum(s.cost_usd for s in self.storage)

    @property
    def annualized_investment_usd(self) -> float:
        return (self.line_invest_cost_usd + self.storage_invest_cost_usd) * self.capital_recovery_factor

    @property
    def is_empty(self) -> bool:
        return not self.line_upgrades and not self.storage

    def to_dict(self) -> dict:
        return {
            "case": self.case,
            "line_upgrades": [
                {"branch": u.branch, "delta_mw": u.delta_mw, "cost_usd": u.cost_usd,
                 **({"reactance_pu": u.new_circuit_reactance_pu} if u.new_circuit_reactance_pu else {})}
                for u in self.line_upgrades
            ],
            "storage": [
                {"zone": s.zone, "power_mw": s.power_mw, "energy_mwh": s.energy_mwh, "cost_usd": s.cost_usd,
                 "blocks": s.blocks, "charge_eff": s.charge_eff, "discharge_eff": s.discharge_eff}
                for s in self.storage
            ],
            "operation_cost_usd": self.operation_cost_usd,
            "line_invest_cost_usd": self.line_invest_cost_usd,
            "storage_invest_cost_usd": self.storage_invest_cost_usd,
            "annualized_investment_usd": self.annualized_investment_usd,
            "capital_recovery_factor": self.capital_recovery_factor,
            "objective_usd": self.objective_usd,
            "status": self.status,
            "mip_gap": self.mip_gap,
            "cost_terms": self.cost_terms,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExpansionPlan":
        return cls(
            case=d["case"],
            line_upgrades=[
                LineUpgrade(u["branch"], u["delta_mw"], u["cost_usd"], u.get("reactance_pu"))
                for u in d.get("line_upgrades", [])
            ],
            storage=[
                StorageBuild(s["zone"], s.get("blocks", 0), s["power_mw"], s["energy_mwh"], s["cost_usd"],
                             s.get("charge_eff", 0.9), s.get("discharge_eff", 0.9))
                for s in d.get("storage", [])
            ],
            operation_cost_usd=d.get("operation_cost_usd", 0.0),
            objective_usd=d.get("objective_usd", 0.0),
            capital_recovery_factor=d.get("capital_recovery_factor", 1.0),
            status=d.get("status", "optimal"),
            mip_gap=d.get("mip_gap", 0.0),
            cost_terms=d.get("cost_terms", {}),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "ExpansionPlan":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def summary(self) -> str:
        lines = [
            f"Case                          {self.case}",
            f"Annual operation cost (B$)    {self.operation_cost_usd / 1e9:.3f}",
            f"Line investment cost (M$)     {self.line_invest_cost_usd / 1e6:.2f}",
            f"Storage investment cost (M$)  {self.storage_invest_cost_usd / 1e6:.2f}",
        ]
        sel = ", ".join(f"branch {u.branch} ({u.delta_mw:,.0f} MW)" for u in self.line_upgrades) or "---"
        lines.append(f"Selected lines                {sel}")
        sel = ", ".join(f"zone {s.zone} ({s.power_mw:,.0f} MW / {s.energy_mwh:,.0f} MWh)" for s in self.storage) or "---"
        lines.append(f"Selected storage              {sel}")
        return "\n".join(lines)


# -- cost expressions --------------------------------------------------------

def investment_cost_expr(net: Network, line_vars: dict, storage_vars: dict) -> tuple[np.ndarray, np.ndarray]:
    """Investment cost as (columns, coefficients) in USD.

    ``line_vars`` maps candidate index -> column of its MW (or build flag for
    new circuits); ``storage_vars`` maps (candidate index, zone) -> column of
    integer blocks. Retirement salvage terms would enter with negative sign;
    no retirement candidates exist, so none are emitted.
    """
    cols, coefs = [], []
    for ci, col in line_vars.items():
        cand = net.candidate_lines[ci]
        per_mw = cand.cost_usd_per_mw_mile * net.branch(cand.branch_id).length_miles
        cols.append(col)
        coefs.append(per_mw * (cand.max_delta_mw if cand.reactance_pu is not None else 1.0))
    for (ci, _zone), col in storage_vars.items():
        cols.append(col)
        coefs.append(net.candidate_storage[ci].block_cost_usd)
    return np.array(cols, dtype=np.int64), np.array(coefs, dtype=float)


def operation_cost_terms(net: Network, case: ExpansionCase, idx: dict) -> dict:
    """Per-term (columns, coefficients, constant) of annual operation cost, USD.

    Keys: ``fomc``, ``vomc``, ``fuelc``, ``stuc``, ``voll``.
    """
    w = np.array([p.weight for p in case.periods])  # P
    gens, stor = net.generators, net.storages
    voll = net.econ.voll_usd_per_mwh
    terms = {}

    const = sum(g.fixed_om_usd_per_mw_yr * g.capacity_mw for g in gens)
    const += sum(s.fixed_om_usd_per_mw_yr * s.power_mw for s in stor)
    fcols, fcoef = [], []
    for (ci, _z), col in idx["blocks"].items():
        c = net.candidate_storage[ci]
        fcols.append(col)
        fcoef.append(c.fixed_om_usd_per_mw_yr * c.block_mw)
    terms["fomc"] = (np.array(fcols, dtype=np.int64), np.array(fcoef, dtype=float), const)

    gopt = idx["gopt"]  # P x H x G
    P, H, G = gopt.shape
    ww = np.broadcast_to(w[:, None, None], (P, H, G))
    vom = np.array([g.var_om_usd_per_mwh for g in gens])
    fuel = np.array([g.marginal_cost - g.var_om_usd_per_mwh for g in gens])
    vcols, vcoef = [gopt.ravel()], [(ww * vom).ravel()]
    if stor:
        edis = idx["edis"]
        S = edis.shape[2]
        evom = np.array([s.var_om_usd_per_mwh for s in stor])
        vcols.append(edis.ravel())
        vcoef.append((np.broadcast_to(w[:, None, None], (P, H, S)) * evom).ravel())
    for (ci, _z), dis in idx["cand_dis"].items():
        vcols.append(dis.ravel())
        vcoef.append(np.zeros(dis.size))
    terms["vomc"] = (np.concatenate(vcols), np.concatenate(vcoef), 0.0)
    terms["fuelc"] = (gopt.ravel(), (ww * fuel).ravel(), 0.0)

    gsup = idx["gsup"]  # P x H x T (thermal units)
    therm = idx["thermal"]
    if len(therm):
        suc = np.array([gens[k].startup_cost_usd_per_mw * gens[k].capacity_mw for k in therm])
        terms["stuc"] = (gsup.ravel(), (np.broadcast_to(w[:, None, None], gsup.shape) * suc).ravel(), 0.0)
    else:
        terms["stuc"] = (np.zeros(0, dtype=np.int64), np.zeros(0), 0.0)

    nload = idx["nload"]
    terms["voll"] = (nload.ravel(), (np.broadcast_to(w[:, None, None], nload.shape) * voll).ravel(), 0.0)
    return terms


def operation_cost_expr(net: Network, case: ExpansionCase, idx: dict) -> tuple[np.ndarray, np.ndarray, float]:
    cols, coefs, const = [], [], 0.0
    for c, v, k in operation_cost_terms(net, case, idx).values():
        cols.append(c)
        coefs.append(v)
        const += k
    return np.concatenate(cols), np.concatenate(coefs), const


def evaluate_terms(terms: dict, x: np.ndarray) -> dict:
    return {name: float(v @ x[c]) + k for name, (c, v, k) in terms.items()}


# -- model ------------------------------------------------------------------

def _branch_flow_bigm(x_pu: float) -> float:
    # |theta| <= pi, so |theta_i - theta_j| <= 2 pi
    return 2.0 * math.pi * BASE_MVA / x_pu


def build_expansion_model(net: Network, case: ExpansionCase, integer_commitment: bool = False):
    """Assemble the expansion MIP; returns ``(model, index)``."""
    report = validate_network(net)
    if not report.ok:
        raise PlanningError("network failed validation:\n" + str(report))
    mode = case.mode
    use_lines = mode in ("TEP", "BTEP")
    use_storage = mode in ("BEP", "BTEP")

    zone_ids = net.zone_ids
    Z, K = len(zone_ids), len(net.branches)
    zpos = {z: i for i, z in enumerate(zone_ids)}
    gens, stor = net.generators, net.storages
    G, S = len(gens), len(stor)
    P, H = len(case.periods), case.periods[0].hours
    load = np.stack([p.load for p in case.periods])  # P x H x Z
    if load.shape[2] != Z:
        raise PlanningError(f"period load has {load.shape[2]} zones, network has {Z}")

    m = LinearModel(f"expansion-{mode}")
    idx: dict = {"blocks": {}, "cand_dis": {}, "cand_chg": {}, "cand_soc": {}, "lines": {}, "circuits": {}}

    # generation
    cap = np.array([g.capacity_mw for g in gens])
    gub = np.broadcast_to(cap, (P, H, G)).copy()
    for k, g in enumerate(gens):
        if g.is_vre:
            try:
                cf = np.stack([p.vre_cf[g.profile] for p in case.periods])
            except KeyError:
                raise PlanningError(f"no capacity-factor profile {g.profile!r} for unit {g.id}") from None
            gub[:, :, k] = np.clip(cf, 0, 1) * g.capacity_mw
    gopt = m.add_variables("gopt", (P, H, G), lb=0.0, ub=gub)
    idx["gopt"] = gopt
    therm = np.array([k for k, g in enumerate(gens) if not g.is_vre], dtype=np.int64)
    idx["thermal"] = therm
    T = len(therm)
    gstat = m.add_variables("gstat", (P, H, T), lb=0.0, ub=1.0, integer=integer_commitment)
    gsup = m.add_variables("gsup", (P, H, T), lb=0.0, ub=1.0)
    idx["gstat"], idx["gsup"] = gstat, gsup
    if T:
        # gopt <= GNPL * gstat
        r = np.arange(P * H * T).reshape(P, H, T)
        m.add_constraints(
            np.concatenate([r.ravel(), r.ravel()]),
            np.concatenate([gopt[:, :, therm].ravel(), gstat.ravel()]),
            np.concatenate([np.ones(P * H * T), -np.broadcast_to(cap[therm], (P, H, T)).ravel()]),
            "<=", np.zeros(P * H * T), name="commit",
        )
        if H > 1:
            # gsup >= gstat_h - gstat_{h-1}, cyclic inside each period
            prev = np.roll(gstat, 1, axis=1)
            m.add_constraints(
                np.concatenate([r.ravel()] * 3),
                np.concatenate([gsup.ravel(), gstat.ravel(), prev.ravel()]),
                np.concatenate([np.ones(P * H * T), -np.ones(P * H * T), np.ones(P * H * T)]),
                ">=", np.zeros(P * H * T), name="startup",
            )

    # existing storage
    def storage_block(name, power_ub, energy_ub, eff_c, eff_d, n):
        dis = m.add_variables(f"{name}_dis", (P, H, n), lb=0.0, ub=power_ub)
        chg = m.add_variables(f"{name}_chg", (P, H, n), lb=0.0, ub=power_ub)
        soc = m.add_variables(f"{name}_soc", (P, H, n), lb=0.0, ub=energy_ub)
        r = np.arange(P * H * n).reshape(P, H, n)
        prev = np.roll(soc, 1, axis=1)
        ec = np.broadcast_to(eff_c, (P, H, n)).ravel()
        ed = np.broadcast_to(eff_d, (P, H, n)).ravel()
        # soc_h - soc_{h-1} - eff_c chg + dis / eff_d = 0 (cyclic in the period)
        rows = np.concatenate([r.ravel()] * 4)
        cols = np.concatenate([soc.ravel(), prev.ravel(), chg.ravel(), dis.ravel()])
        vals = np.concatenate([np.ones(r.size), -np.ones(r.size), -ec, 1.0 / ed])
        if H == 1:
            keep = cols[: r.size] != cols[r.size : 2 * r.size]
            keep = np.concatenate([keep, keep, np.ones(2 * r.size, bool)])
            rows, cols, vals = rows[keep], cols[keep], vals[keep]
        m.add_constraints(rows, cols, vals, "=", np.zeros(r.size), name=f"{name}_balance")
        return dis, chg, soc

    if S:
        edis, echg, esoc = storage_block(
            "es",
            np.array([s.power_mw if not s.is_satoa else 0.0 for s in stor]),
            np.array([s.energy_mwh for s in stor]),
            np.array([s.charge_eff for s in stor]),
            np.array([s.discharge_eff for s in stor]),
            S,
        )
    else:
        edis = echg = esoc = np.zeros((P, H, 0), dtype=np.int64)
    idx["edis"], idx["echg"], idx["esoc"] = edis, echg, esoc

    # candidate storage, integer blocks per zone
    if use_storage:
        for ci, c in enumerate(net.candidate_storage):
            if not math.isfinite(c.block_cost_usd):
                continue  # priced out: never worth building
            zones = [c.zone] if c.zone is not None else zone_ids
            for z in zones:
                n = m.add_variable(f"blocks_{ci}_z{z}", lb=0, ub=c.max_blocks, integer=True)
                idx["blocks"][(ci, z)] = n
                dis, chg, soc = storage_block(f"cs{ci}z{z}", np.inf, np.inf, c.charge_eff, c.discharge_eff, 1)
                size = P * H
                rr = np.arange(size)
                for var, per_block in ((dis, c.block_mw), (chg, c.block_mw), (soc, c.block_mw * c.duration_h)):
                    m.add_constraints(
                        np.concatenate([rr, rr]),
                        np.concatenate([var.ravel(), np.full(size, n)]),
                        np.concatenate([np.ones(size), np.full(size, -per_block)]),
                        "<=", np.zeros(size), name=f"cs{ci}z{z}_size",
                    )
                idx["cand_dis"][(ci, z)] = dis
                idx["cand_chg"][(ci, z)] = chg
                idx["cand_soc"][(ci, z)] = soc

    # network
    disjunctive = use_lines and any(c.reactance_pu is not None and math.isfinite(c.cost_usd_per_mw_mile)
                                    for c in net.candidate_lines)
    th_bound = math.pi if disjunctive else np.inf
    slack = zpos[min(zone_ids)]
    th_lb = np.full((P, H, Z), -th_bound)
    th_ub = np.full((P, H, Z), th_bound)
    th_lb[:, :, slack] = th_ub[:, :, slack] = 0.0
    theta = m.add_variables("theta", (P, H, Z), lb=th_lb, ub=th_ub)
    upgraded = {}
    if use_lines:
        for ci, c in enumerate(net.candidate_lines):
            if c.reactance_pu is None and math.isfinite(c.cost_usd_per_mw_mile):
                upgraded.setdefault(c.branch_id, []).append(ci)
    fcap = np.array([b.capacity_mw for b in net.branches])
    f_ub = np.array([np.inf if b.id in upgraded else b.capacity_mw for b in net.branches])
    flow = m.add_variables("flow", (P, H, K), lb=-np.broadcast_to(f_ub, (P, H, K)), ub=np.broadcast_to(f_ub, (P, H, K)))
    idx["theta"], idx["flow"] = theta, flow
    fz = np.array([zpos[b.from_zone] for b in net.branches])
    tz = np.array([zpos[b.to_zone] for b in net.branches])
    bsus = np.array([BASE_MVA / b.reactance_pu for b in net.branches])
    if K:
        r = np.arange(P * H * K).reshape(P, H, K)
        m.add_constraints(
            np.concatenate([r.ravel()] * 3),
            np.concatenate([flow.ravel(), theta[:, :, fz].ravel(), theta[:, :, tz].ravel()]),
            np.concatenate([np.ones(r.size), -np.broadcast_to(bsus, (P, H, K)).ravel(),
                            np.broadcast_to(bsus, (P, H, K)).ravel()]),
            "=", np.zeros(r.size), name="dcflow",
        )
    for bid, cis in upgraded.items():
        k = [b.id for b in net.branches].index(bid)
        deltas = []
        for ci in cis:
            c = net.candidate_lines[ci]
            d = m.add_variable(f"delta_{ci}_b{bid}", lb=0.0, ub=c.max_delta_mw)
            idx["lines"][ci] = d
            deltas.append(d)
        size = P * H
        rr = np.arange(size)
        for sign in (1.0, -1.0):
            rows = np.concatenate([rr] + [rr] * len(deltas))
            cols = np.concatenate([flow[:, :, k].ravel()] + [np.full(size, d) for d in deltas])
            vals = np.concatenate([np.full(size, sign)] + [-np.ones(size)] * len(deltas))
            m.add_constraints(rows, cols, vals, "<=", np.full(size, fcap[k]), name=f"limit_b{bid}")

    # new parallel circuits: disjunctive B-theta
    circuit_flows = []
    if use_lines:
        for ci, c in enumerate(net.candidate_lines):
            if c.reactance_pu is None or not math.isfinite(c.cost_usd_per_mw_mile):
                continue
            br = net.branch(c.branch_id)
            z = m.add_variable(f"build_{ci}_b{br.id}", lb=0, ub=1, integer=True)
            idx["lines"][ci] = z
            fc = m.add_variables(f"cflow_{ci}", (P, H), lb=-c.max_delta_mw, ub=c.max_delta_mw)
            idx["circuits"][ci] = fc
            size = P * H
            rr = np.arange(size)
            bigm = _branch_flow_bigm(c.reactance_pu)
            b = BASE_MVA / c.reactance_pu
            i, j = zpos[br.from_zone], zpos[br.to_zone]
            for sign in (1.0, -1.0):
                # sign * (fc - b (th_i - th_j)) <= M (1 - z)
                m.add_constraints(
                    np.concatenate([rr] * 4),
                    np.concatenate([fc.ravel(), theta[:, :, i].ravel(), theta[:, :, j].ravel(), np.full(size, z)]),
                    np.concatenate([np.full(size, sign), np.full(size, -sign * b), np.full(size, sign * b),
                                    np.full(size, bigm)]),
                    "<=", np.full(size, bigm), name=f"disj_{ci}",
                )
                # sign * fc <= cap * z
                m.add_constraints(
                    np.concatenate([rr, rr]),
                    np.concatenate([fc.ravel(), np.full(size, z)]),
                    np.concatenate([np.full(size, sign), np.full(size, -c.max_delta_mw)]),
                    "<=", np.zeros(size), name=f"cap_{ci}",
                )
            circuit_flows.append((fc, i, j))

    nload = m.add_variables("nload", (P, H, Z), lb=0.0, ub=load)
    idx["nload"] = nload

    # nodal balance: gen + dis - chg + nload - out + in = load
    rows, cols, vals = [], [], []
    base = np.arange(P * H * Z).reshape(P, H, Z)

    def put(var, zone_of, coef):
        if var.size == 0:
            return
        n = var.shape[2]
        rws = base[:, :, zone_of] if n else None
        rows.append(rws.ravel())
        cols.append(var.ravel())
        vals.append(np.full(var.size, coef))

    gz = np.array([zpos[g.zone] for g in gens], dtype=np.int64)
    sz = np.array([zpos[s.zone] for s in stor], dtype=np.int64)
    put(gopt, gz, 1.0)
    put(edis, sz, 1.0)
    put(echg, sz, -1.0)
    for (ci, z), dis in idx["cand_dis"].items():
        put(dis, np.array([zpos[z]]), 1.0)
        put(idx["cand_chg"][(ci, z)], np.array([zpos[z]]), -1.0)
    put(nload, np.arange(Z), 1.0)
    if K:
        put(flow, fz, -1.0)
        put(flow, tz, 1.0)
    for fc, i, j in circuit_flows:
        put(fc[:, :, None], np.array([i]), -1.0)
        put(fc[:, :, None], np.array([j]), 1.0)
    m.add_constraints(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), "=", load.ravel(),
                      name="balance")

    # objective
    e = net.econ
    d_y, da_y = discount_factors(e.interest_rate, e.plan_year, e.year_origin, e.repeat_years)
    sp = case.scenario_probability
    inv_cols, inv_coef = investment_cost_expr(net, idx["lines"], idx["blocks"])
    op_terms = operation_cost_terms(net, case, idx)
    if inv_cols.size:
        m.add_cost(inv_cols, sp * d_y * inv_coef)
    for c, v, k in op_terms.values():
        if c.size:
            m.add_cost(c, sp * da_y * v)
        m.objective_offset += sp * da_y * k
    idx["discount"] = (d_y, da_y)
    idx["op_terms"] = op_terms
    idx["inv"] = (inv_cols, inv_coef)
    return m, idx


def extract_plan(net: Network, case: ExpansionCase, idx: dict, sol: Solution) -> ExpansionPlan:
    x = sol.x
    plan = ExpansionPlan(case.mode, capital_recovery_factor=net.econ.capital_recovery_factor,
                         status=sol.status, mip_gap=float(sol.mip_gap) if np.isfinite(sol.mip_gap) else 0.0)
    for ci, col in idx["lines"].items():
        c = net.candidate_lines[ci]
        per_mw = c.cost_usd_per_mw_mile * net.branch(c.branch_id).length_miles
        if c.reactance_pu is None:
            delta = float(x[col])
            if delta > 1e-6:
                plan.line_upgrades.append(LineUpgrade(c.branch_id, delta, per_mw * delta))
        elif x[col] > 0.5:
            plan.line_upgrades.append(
                LineUpgrade(c.branch_id, c.max_delta_mw, per_mw * c.max_delta_mw, c.reactance_pu)
            )
    for (ci, z), col in idx["blocks"].items():
        n = int(round(x[col]))
        if n > 0:
            c = net.candidate_storage[ci]
            plan.storage.append(
                StorageBuild(z, n, n * c.block_mw, n * c.block_mw * c.duration_h, n * c.block_cost_usd,
                             c.charge_eff, c.discharge_eff)
            )
    terms = evaluate_terms(idx["op_terms"], x)
    plan.cost_terms = terms
    plan.operation_cost_usd = sum(terms.values())
    plan.objective_usd = sol.objective
    return plan


def solve_expansion(net: Network, case: ExpansionCase, **kwargs) -> ExpansionPlan:
    model, idx = build_expansion_model(net, case, **kwargs)
    sol = solve_mip(model)
    if not sol.optimal:
        raise PlanningError(f"expansion model not solved to optimality: {sol.status}", status=sol.status)
    return extract_plan(net, case, idx, sol)


def apply_plan(net: Network, plan: ExpansionPlan) -> Network:
    """New network with upgrades applied; ``net`` itself is untouched."""
    branches = list(net.branches)
    ids = [b.id for b in branches]
    next_id = max(ids, default=0) + 1
    for u in plan.line_upgrades:
        if u.branch not in ids:
            raise KeyError(f"plan references unknown branch {u.branch}")
        k = ids.index(u.branch)
        b = branches[k]
        if u.new_circuit_reactance_pu:
            branches.append(Branch(next_id, b.from_zone, b.to_zone, u.new_circuit_reactance_pu, u.delta_mw,
                                   b.length_miles))
            next_id += 1
        else:
            branches[k] = Branch(b.id, b.from_zone, b.to_zone, b.reactance_pu, b.capacity_mw + u.delta_mw,
                                 b.length_miles)
    storages = list(net.storages)
    zone_ids = set(net.zone_ids)
    taken = {s.id for s in storages}
    for s in plan.storage:
        if s.zone not in zone_ids:
            raise KeyError(f"plan references unknown zone {s.zone}")
        sid, n = f"satoa_z{s.zone}", 1
        while sid in taken:
            n += 1
            sid = f"satoa_z{s.zone}_{n}"
        taken.add(sid)
        storages.append(
            StorageAsset(sid, s.zone, s.power_mw, s.energy_mwh, s.charge_eff, s.discharge_eff, is_satoa=True)
        )
    return net.replace(branches=tuple(branches), storages=tuple(storages))


class ExpansionPlanner(TransformerMixin, BaseEstimator):
    """Estimator-style wrapper: ``fit`` solves the plan, ``transform`` applies it.

    Parameters
    ----------
    mode : {"TEP", "BEP", "BTEP"}
    period_weight : float
        Hours represented by each daily-peak snapshot.
    integer_commitment : bool
        Solve commitment status as binaries instead of the relaxed form.
    """

    def __init__(self, mode="BTEP", period_weight=24.0, integer_commitment=False):
        self.mode = mode
        self.period_weight = period_weight
        self.integer_commitment = integer_commitment

    def fit(self, net, profiles):
        case = ExpansionCase.daily_peaks(self.mode, profiles, self.period_weight)
        self.case_ = case
        self.plan_ = solve_expansion(net, case, integer_commitment=self.integer_commitment)
        return self

    def transform(self, net):
        if not hasattr(self, "plan_"):
            raise RuntimeError("ExpansionPlanner is not fitted yet; call fit first")
        return apply_plan(net, self.plan_)
