"""Two-stage Monte Carlo reliability assessment.

Stage 1 solves a 24-hour economic dispatch per day on the intact system
and yields the steady-state schedule. Stage 2 walks each outage scenario
hour by hour and solves a myopic redispatch LP: deviations from the
schedule are priced at marginal cost, unserved energy at VOLL, and every
move is limited by 10-minute headroom around the schedule and by hourly
ramping from the realized previous hour.

Unit ordering everywhere: generators first (``net.generators`` order), then
storage discharge (``net.storages`` order).
"""
from __future__ import annotations

import json
import multiprocessing as mp
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import sparse
from sklearn.base import BaseEstimator

from .linear import IncrementalLP, LinearModel
from .network import Network
from .outages import OutageScenario, sample_outage_scenario
from .powerflow import compute_ptdf

SNAP_TOL = 1e-6


class DispatchError(RuntimeError):
    pass


@dataclass
class DispatchSchedule:
    """Stage-1 setpoints plus the hourly inputs stage 2 needs."""

    gbar: np.ndarray  # units x hours
    chgbar: np.ndarray  # storages x hours
    socbar: np.ndarray  # storages x hours (end of hour)
    flows: np.ndarray  # branches x hours
    ens_stage1: np.ndarray  # zones x hours
    load: np.ndarray  # zones x hours
    gen_cf: np.ndarray  # generators x hours, available fraction of capacity (1 for dispatchable units)
    soc_start: np.ndarray  # storages, before hour 0
    cost_usd: float = 0.0

    @property
    def hours(self) -> int:
        return self.gbar.shape[1]

    @property
    def n_generators(self) -> int:
        return self.gen_cf.shape[0]

    def window(self, start: int, stop: int) -> "DispatchSchedule":
        soc0 = self.soc_start if start == 0 else self.socbar[:, start - 1]
        return DispatchSchedule(
            self.gbar[:, start:stop], self.chgbar[:, start:stop], self.socbar[:, start:stop],
            self.flows[:, start:stop], self.ens_stage1[:, start:stop], self.load[:, start:stop],
            self.gen_cf[:, start:stop], soc0.copy(), float("nan"),
        )

    @staticmethod
    def concat(parts: list) -> "DispatchSchedule":
        cat = lambda a: np.concatenate([getattr(p, a) for p in parts], axis=1)
        return DispatchSchedule(
            cat("gbar"), cat("chgbar"), cat("socbar"), cat("flows"), cat("ens_stage1"), cat("load"),
            cat("gen_cf"), parts[0].soc_start.copy(), sum(p.cost_usd for p in parts),
        )


@dataclass
class PrevState:
    """Realized dispatch of the previous hour."""

    g: np.ndarray  # units
    chg: np.ndarray  # storages
    soc: np.ndarray  # storages

    @classmethod
    def from_schedule(cls, sched: DispatchSchedule, hour: int) -> "PrevState":
        if hour == 0:
            return cls(sched.gbar[:, 0].copy(), sched.chgbar[:, 0].copy(), sched.soc_start.copy())
        t = hour - 1
        return cls(sched.gbar[:, t].copy(), sched.chgbar[:, t].copy(), sched.socbar[:, t].copy())

    def close_to(self, other: "PrevState", tol: float = SNAP_TOL) -> bool:
        return (
            np.allclose(self.g, other.g, rtol=0, atol=tol)
            and np.allclose(self.chg, other.chg, rtol=0, atol=tol)
            and np.allclose(self.soc, other.soc, rtol=0, atol=tol)
        )


@dataclass
class RedispatchResult:
    g: np.ndarray
    chg: np.ndarray
    soc: np.ndarray
    ens: np.ndarray
    flows: np.ndarray
    d_up: np.ndarray
    d_dn: np.ndarray
    objective_usd: float
    solved: bool = True  # False when the schedule was provably optimal
    relaxed: bool = False  # True when ramp-down limits forced a spill
    spill: Optional[np.ndarray] = None

    def state(self) -> PrevState:
        return PrevState(self.g.copy(), self.chg.copy(), self.soc.copy())


def _unit_arrays(net: Network):
    gens, stor = net.generators, net.storages
    zone = np.array([net.zone_index(g.zone) for g in gens] + [net.zone_index(s.zone) for s in stor], dtype=np.int64)
    cap = np.array([g.capacity_mw for g in gens] + [s.power_mw for s in stor])
    mc = np.array([g.marginal_cost for g in gens] + [s.marginal_cost for s in stor])
    r10 = np.array([g.ramp_10min_frac for g in gens] + [1.0] * len(stor))
    rh = np.array([g.ramp_hourly_frac for g in gens] + [1.0] * len(stor))
    return zone, cap, mc, r10, rh


def hourly_gen_cf(net: Network, profiles, start: int = 0, stop: Optional[int] = None) -> np.ndarray:
    stop = profiles.hours if stop is None else stop
    out = np.ones((len(net.generators), stop - start))
    for k, g in enumerate(net.generators):
        if g.is_vre:
            out[k] = np.clip(profiles.unit_cf(g)[start:stop], 0.0, 1.0)
    return out


# -- stage 1 ------------------------------------------------------------------

class _DayDispatch:
    """Reusable L-hour economic dispatch LP; only bounds change between days."""

    def __init__(self, net: Network, ptdf, hours: int):
        self.net, self.L = net, hours
        gens, stor = net.generators, net.storages
        G, S, Z, K, L = len(gens), len(stor), net.n_zones, len(net.branches), hours
        self.zone, self.cap, self.mc, _, self.rh = _unit_arrays(net)
        self.P = ptdf.values
        voll = net.econ.voll_usd_per_mwh
        m = LinearModel("stage1")
        self.g = m.add_variables("g", (G, L), ub=np.repeat(self.cap[:G, None], L, axis=1),
                                 cost=np.repeat(self.mc[:G, None], L, axis=1))
        pw = np.array([0.0 if s.is_satoa else s.power_mw for s in stor])
        en = np.array([s.energy_mwh for s in stor])
        sat = np.array([s.is_satoa for s in stor], dtype=bool)
        self.dis = m.add_variables("dis", (S, L), ub=np.repeat(pw[:, None], L, axis=1),
                                   cost=np.repeat(self.mc[G:, None], L, axis=1))
        self.chg = m.add_variables("chg", (S, L), ub=np.repeat(pw[:, None], L, axis=1))
        soc_lb = np.where(sat, en, 0.0)
        self.soc = m.add_variables("soc", (S, L), lb=np.repeat(soc_lb[:, None], L, axis=1),
                                   ub=np.repeat(en[:, None], L, axis=1))
        self.ens = m.add_variables("ens", (Z, L), ub=0.0, cost=voll)
        self.energy = en

        # system balance per hour
        t_idx = np.arange(L)
        rows, cols, vals = [], [], []
        for var, sign in ((self.g, 1.0), (self.dis, 1.0), (self.chg, -1.0), (self.ens, 1.0)):
            if var.size:
                rows.append(np.broadcast_to(t_idx, var.shape).ravel())
                cols.append(var.ravel())
                vals.append(np.full(var.size, sign))
        self.bal = m.add_constraints(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), "=",
                                     np.zeros(L), name="balance")

        # PTDF flow rows: sum_n P[k,n] inj_n within shifted limits
        if K:
            sz = self.zone[G:]
            gz = self.zone[:G]
            rows, cols, vals = [], [], []
            for k in range(K):
                for var, zof, sign in ((self.g, gz, 1.0), (self.dis, sz, 1.0), (self.chg, sz, -1.0),
                                       (self.ens, np.arange(Z), 1.0)):
                    if not var.size:
                        continue
                    coef = sign * self.P[k, zof]
                    nz = coef != 0
                    if not nz.any():
                        continue
                    rows.append(np.broadcast_to((k * L + t_idx)[None, :], var[nz].shape).ravel())
                    cols.append(var[nz].ravel())
                    vals.append(np.repeat(coef[nz], L))
            self.flow = m.add_constraints(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), "<=",
                                          np.zeros(K * L), name="flow")
        else:
            self.flow = np.zeros(0, dtype=np.int64)
        self.fmax = np.array([b.capacity_mw for b in net.branches])

        # storage energy balance; hour 0 takes the start-of-day SOC as rhs
        if S:
            ec = np.array([s.charge_eff for s in stor])
            ed = np.array([s.discharge_eff for s in stor])
            r = np.arange(S * L).reshape(S, L)
            rows = [r.ravel(), r.ravel(), r.ravel()]
            cols = [self.soc.ravel(), self.chg.ravel(), self.dis.ravel()]
            vals = [np.ones(S * L), -np.repeat(ec, L), np.repeat(1.0 / ed, L)]
            if L > 1:
                rows.append(r[:, 1:].ravel())
                cols.append(self.soc[:, :-1].ravel())
                vals.append(-np.ones(S * (L - 1)))
            self.socrow = m.add_constraints(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), "=",
                                            np.zeros(S * L), name="soc")
            self.socend = m.add_constraints(np.arange(S), self.soc[:, -1], np.ones(S), ">=", np.zeros(S),
                                            name="soc_end")
        # hourly ramping inside the day
        ramp_units = [k for k, g in enumerate(gens) if not g.is_vre and g.ramp_hourly_frac < 1.0]
        self.ramp_units = np.array(ramp_units, dtype=np.int64)
        if ramp_units and L > 1:
            ru = self.ramp_units
            n = len(ru) * (L - 1)
            r = np.arange(n)
            lim = np.repeat(self.rh[ru] * self.cap[ru], L - 1)
            m.add_constraints(np.concatenate([r, r]),
                              np.concatenate([self.g[ru, 1:].ravel(), self.g[ru, :-1].ravel()]),
                              np.concatenate([np.ones(n), -np.ones(n)]), "<=", lim, name="ramp_up")
            m.add_constraints(np.concatenate([r, r]),
                              np.concatenate([self.g[ru, :-1].ravel(), self.g[ru, 1:].ravel()]),
                              np.concatenate([np.ones(n), -np.ones(n)]), "<=", lim, name="ramp_dn")
        self.model = m
        self.lp = IncrementalLP(m)
        self.S, self.G, self.Z, self.K = S, G, Z, K

    def solve(self, load: np.ndarray, gen_cf: np.ndarray, soc_start: np.ndarray, g_prev=None) -> DispatchSchedule:
        """``load`` zones x L, ``gen_cf`` gens x L; ``g_prev`` links ramps to the prior day."""
        gen_cap = gen_cf * self.cap[: self.G, None]
        lp, L, G, S = self.lp, self.L, self.G, self.S
        lp.set_col_bounds(self.ens.ravel(), 0.0, load.ravel())
        lp.set_row_bounds(self.bal, load.sum(axis=0), load.sum(axis=0))
        if self.K:
            shift = (self.P @ load).ravel()  # K x L
            lim = np.repeat(self.fmax, L)
            lp.set_row_bounds(self.flow, -lim + shift, lim + shift)
        if S:
            rhs = np.zeros((S, L))
            rhs[:, 0] = soc_start
            lp.set_row_bounds(self.socrow, rhs.ravel(), rhs.ravel())
            lp.set_row_bounds(self.socend, soc_start, np.inf)
        lo = np.zeros((G, L))
        hi = gen_cap.copy()
        if g_prev is not None and len(self.ramp_units):
            ru = self.ramp_units
            lim = self.rh[ru] * self.cap[ru]
            lo[ru, 0] = np.maximum(0.0, g_prev[ru] - lim)
            hi[ru, 0] = np.minimum(hi[ru, 0], g_prev[ru] + lim)
            lo[ru, 0] = np.minimum(lo[ru, 0], hi[ru, 0])
        lp.set_col_bounds(self.g.ravel(), lo.ravel(), hi.ravel())
        sol = lp.solve(duals=False)
        if not sol.optimal and g_prev is not None:
            lp.set_col_bounds(self.g.ravel(), 0.0, gen_cap.ravel())
            sol = lp.solve(duals=False)
        if not sol.optimal:
            raise DispatchError(f"stage-1 dispatch failed: {sol.status}")
        x = sol.x
        g = np.clip(x[self.g], 0.0, None)
        dis, chg, soc = x[self.dis], x[self.chg], x[self.soc]
        ens = np.clip(x[self.ens], 0.0, None)
        gbar = np.vstack([g, np.clip(dis, 0.0, None)])
        inj = self._injection(gbar, np.clip(chg, 0.0, None), ens, load)
        return DispatchSchedule(gbar, np.clip(chg, 0.0, None), soc, self.P @ inj, ens, load.copy(), gen_cf.copy(),
                                np.asarray(soc_start, dtype=float).copy(), sol.objective)

    def _injection(self, gbar, chg, ens, load):
        inj = np.zeros_like(load)
        np.add.at(inj, self.zone, gbar)
        np.add.at(inj, self.zone[self.G:], -chg)
        return inj + ens - load


def _initial_soc(net: Network) -> np.ndarray:
    return np.array([s.energy_mwh if s.is_satoa else 0.5 * s.energy_mwh for s in net.storages])


def steady_state_dispatch(net: Network, profiles, day: int, soc_start=None, g_prev=None) -> DispatchSchedule:
    """Economic dispatch for one operating day (hours ``24*day`` onward) on the intact system."""
    start = 24 * day
    stop = min(start + 24, profiles.hours)
    if start >= stop:
        raise ValueError(f"day {day} is outside the {profiles.hours}-hour profile")
    solver = _DayDispatch(net, compute_ptdf(net), stop - start)
    soc0 = _initial_soc(net) if soc_start is None else np.asarray(soc_start, dtype=float)
    return solver.solve(profiles.load[:, start:stop], hourly_gen_cf(net, profiles, start, stop), soc0, g_prev)


def dispatch_schedule(net: Network, profiles, hours: Optional[int] = None) -> DispatchSchedule:
    """Chain daily dispatches, threading SOC and ramp state across days."""
    H = profiles.hours if hours is None else min(hours, profiles.hours)
    if H < 1:
        raise ValueError("need at least one hour")
    ptdf = compute_ptdf(net)
    solvers = {}
    soc = _initial_soc(net)
    g_prev = None
    parts = []
    for start in range(0, H, 24):
        stop = min(start + 24, H)
        L = stop - start
        if L not in solvers:
            solvers[L] = _DayDispatch(net, ptdf, L)
        day = solvers[L].solve(profiles.load[:, start:stop], hourly_gen_cf(net, profiles, start, stop), soc, g_prev)
        parts.append(day)
        soc = day.socbar[:, -1].copy()
        g_prev = day.gbar[: len(net.generators), -1]
    return DispatchSchedule.concat(parts)


# -- stage 2 ------------------------------------------------------------------

class RedispatchModel:
    """Single-hour redispatch LP, built once and re-bounded every hour.

    ``schedule_state`` takes previous-hour values for ramping and SOC from the
    stage-1 schedule instead of the realized state.
    """

    def __init__(self, net: Network, ptdf=None, schedule_state: bool = False):
        self.net = net
        self.schedule_state = schedule_state
        ptdf = compute_ptdf(net) if ptdf is None else ptdf
        self.P = ptdf.values
        gens, stor = net.generators, net.storages
        G, S, Z, K = len(gens), len(stor), net.n_zones, len(net.branches)
        U = G + S
        self.G, self.S, self.Z, self.K, self.U = G, S, Z, K, U
        self.zone, self.cap, self.mc, self.r10, self.rh = _unit_arrays(net)
        self.energy = np.array([s.energy_mwh for s in stor])
        self.ec = np.array([s.charge_eff for s in stor])
        self.ed = np.array([s.discharge_eff for s in stor])
        self.satoa = np.array([s.is_satoa for s in stor], dtype=bool)
        self.fmax = np.array([b.capacity_mw for b in net.branches])
        self.voll = net.econ.voll_usd_per_mwh

        m = LinearModel("redispatch")
        self.g = m.add_variables("g", U, ub=self.cap)
        self.dup = m.add_variables("d_up", U, cost=self.mc)
        self.ddn = m.add_variables("d_dn", U, cost=self.mc)
        self.chg = m.add_variables("chg", S, ub=self.cap[G:])
        self.soc = m.add_variables("soc", S, ub=self.energy)
        self.ens = m.add_variables("ens", Z, cost=self.voll)
        # zone-level dump for output that ramp-down limits cannot shed; priced like lost load
        self.spill = m.add_variables("spill", Z, cost=self.voll)
        u = np.arange(U)
        # g - d_up + d_dn = Gbar
        self.dev = m.add_constraints(np.tile(u, 3), np.concatenate([self.g, self.dup, self.ddn]),
                                     np.concatenate([np.ones(U), -np.ones(U), np.ones(U)]), "=", np.zeros(U),
                                     name="deviation")
        # system balance
        self.bal = m.add_constraints(np.zeros(U + S + 2 * Z, dtype=np.int64),
                                     np.concatenate([self.g, self.chg, self.ens, self.spill]),
                                     np.concatenate([np.ones(U), -np.ones(S), np.ones(Z), -np.ones(Z)]), "=", [0.0],
                                     name="balance")
        # PTDF rows on p_inj = gen - chg + ens - load (load enters the bounds)
        if K:
            sz = self.zone[G:]
            coef = np.hstack([self.P[:, self.zone], -self.P[:, sz], self.P, -self.P])  # K x (U+S+2Z)
            cols = np.concatenate([self.g, self.chg, self.ens, self.spill])
            kk, jj = np.nonzero(coef)
            self.flow = m.add_constraints(kk, cols[jj], coef[kk, jj], "<=", np.zeros(K), name="flow")
        else:
            self.flow = np.zeros(0, dtype=np.int64)
        # SOC recursion: soc - eff_c chg + g / eff_d = soc_prev
        if S:
            s = np.arange(S)
            self.socrow = m.add_constraints(np.tile(s, 3), np.concatenate([self.soc, self.chg, self.g[G:]]),
                                            np.concatenate([np.ones(S), -self.ec, 1.0 / self.ed]), "=", np.zeros(S),
                                            name="soc")
        # redispatch bound: sum(g - chg) <= sum(Gbar - CHGbar); unavailable units are pinned to zero
        self.lost = m.add_constraints(np.zeros(U + S + Z, dtype=np.int64),
                                      np.concatenate([self.g, self.chg, self.spill]),
                                      np.concatenate([np.ones(U), -np.ones(S), -np.ones(Z)]), "<=", [0.0],
                                      name="lost_generation")
        self.model = m
        self.lp = IncrementalLP(m)
        self._col_lo, self._col_hi = m.lb.copy(), m.ub.copy()
        self._row_lo, self._row_hi = m.row_lo.copy(), m.row_hi.copy()
        self.solves = 0
        self.relaxed_solves = 0

    def prev_for(self, sched: DispatchSchedule, hour: int, realized: PrevState) -> PrevState:
        return PrevState.from_schedule(sched, hour) if self.schedule_state else realized

    def schedule_is_optimal(self, sched: DispatchSchedule, hour: int, avail_gen: np.ndarray, prev: PrevState) -> bool:
        """True when the stage-1 setpoints solve the hour unchanged.

        Holds if every unavailable unit was scheduled at zero and the
        previous hour matches the schedule: the setpoints then stay feasible,
        and the lost-generation row forbids any cut in total shortfall.
        """
        down = avail_gen == 0
        if np.any(sched.gbar[: self.G][down, hour] > 0.0):
            return False
        return prev.close_to(PrevState.from_schedule(sched, hour))

    def _from_schedule(self, sched: DispatchSchedule, hour: int) -> RedispatchResult:
        U, S = self.U, self.S
        ens = sched.ens_stage1[:, hour].copy()
        return RedispatchResult(
            sched.gbar[:, hour].copy(), sched.chgbar[:, hour].copy(), sched.socbar[:, hour].copy(), ens,
            sched.flows[:, hour].copy(), np.zeros(U), np.zeros(U), float(self.voll * ens.sum()), solved=False,
            spill=np.zeros(self.Z),
        )

    def solve_hour(self, sched: DispatchSchedule, hour: int, avail_gen, prev: PrevState,
                   force_lp: bool = False) -> RedispatchResult:
        avail_gen = np.asarray(avail_gen)
        prev = self.prev_for(sched, hour, prev)
        if not force_lp and self.schedule_is_optimal(sched, hour, avail_gen, prev):
            return self._from_schedule(sched, hour)
        G, S, U = self.G, self.S, self.U
        lp = self.lp
        gbar = sched.gbar[:, hour]
        chgbar = sched.chgbar[:, hour]
        load = sched.load[:, hour]
        up = np.concatenate([avail_gen.astype(bool), np.ones(S, dtype=bool)])

        hi_cap = np.concatenate([sched.gen_cf[:, hour] * self.cap[:G], self.cap[G:]])
        lo10, hi10 = gbar - self.r10 * self.cap, gbar + self.r10 * self.cap
        loH, hiH = prev.g - self.rh * self.cap, prev.g + self.rh * self.cap
        lo = np.maximum.reduce([np.zeros(U), lo10, loH])
        hi = np.minimum.reduce([hi_cap, hi10, hiH])
        # recovering units: the 10-minute window around the schedule cannot be reached this hour
        gap = lo > hi
        lo = np.where(gap, np.maximum(0.0, loH), lo)
        hi = np.where(gap, np.minimum(hi_cap, hiH), hi)
        hi = np.maximum(hi, lo)
        lo = np.where(up, lo, 0.0)
        hi = np.where(up, hi, 0.0)

        clo, chi = self._col_lo, self._col_hi
        rlo, rhi = self._row_lo, self._row_hi
        clo[self.g], chi[self.g] = lo, hi
        chi[self.dup] = np.where(up, np.inf, 0.0)
        chi[self.ens] = load
        rlo[self.dev] = rhi[self.dev] = gbar
        rlo[self.bal] = rhi[self.bal] = load.sum()
        if self.K:
            shift = self.P @ load
            rlo[self.flow], rhi[self.flow] = -self.fmax + shift, self.fmax + shift
        if S:
            rlo[self.socrow] = rhi[self.socrow] = prev.soc
        rhi[self.lost] = gbar.sum() - chgbar.sum()
        lp.set_all_bounds(clo, chi, rlo, rhi)
        sol = lp.solve(duals=False)
        self.solves += 1
        if not sol.optimal:
            raise DispatchError(f"redispatch LP failed at hour {hour}: {sol.status}")
        x = sol.x
        g = np.clip(x[self.g], 0.0, None)
        chg = np.clip(x[self.chg], 0.0, None)
        soc = np.clip(x[self.soc], 0.0, self.energy)
        ens = np.clip(x[self.ens], 0.0, load)
        spill = np.clip(x[self.spill], 0.0, None)
        relaxed = bool(spill.sum() > SNAP_TOL)
        self.relaxed_solves += relaxed
        d_up = np.maximum(g - gbar, 0.0)
        d_dn = np.maximum(gbar - g, 0.0)
        inj = np.zeros(self.Z)
        np.add.at(inj, self.zone, g)
        np.add.at(inj, self.zone[G:], -chg)
        inj += ens - spill - load
        obj = float(self.mc[up] @ (d_up[up] + d_dn[up]) + self.voll * (ens.sum() + spill.sum()))
        return RedispatchResult(g, chg, soc, ens, self.P @ inj, d_up, d_dn, obj, relaxed=relaxed, spill=spill)


def redispatch_hour(net: Network, sched: DispatchSchedule, availability, prev_state: Optional[PrevState], hour: int,
                    schedule_state: bool = False) -> RedispatchResult:
    """Solve one post-contingency hour; ``availability`` is per generator (1 = up)."""
    model = RedispatchModel(net, schedule_state=schedule_state)
    prev = PrevState.from_schedule(sched, hour) if prev_state is None else prev_state
    return model.solve_hour(sched, hour, availability, prev)


# -- trials -------------------------------------------------------------------

@dataclass
class TrialResult:
    trial_id: int
    ens: sparse.csr_matrix  # zones x hours
    epsilon: float = 1e-6
    relaxed_hours: int = 0
    lp_solves: int = 0

    @property
    def eue_mwh(self) -> np.ndarray:
        return np.asarray(self.ens.sum(axis=1)).ravel()

    @property
    def shortfall_hours(self) -> np.ndarray:
        return np.asarray((self.ens > self.epsilon).sum(axis=1)).ravel()

    @property
    def system_shortfall_hours(self) -> int:
        return int((np.asarray(self.ens.sum(axis=0)).ravel() > self.epsilon).sum())

    @property
    def hours(self) -> int:
        return self.ens.shape[1]

    def ens_dense(self) -> np.ndarray:
        return self.ens.toarray()

    def to_record(self) -> dict:
        e = self.ens.tocoo()
        order = np.lexsort((e.col, e.row))
        return {
            "trial_id": self.trial_id,
            "zones": self.ens.shape[0],
            "hours": self.ens.shape[1],
            "epsilon": self.epsilon,
            "eue_mwh": self.eue_mwh.tolist(),
            "shortfall_hours": self.shortfall_hours.tolist(),
            "relaxed_hours": self.relaxed_hours,
            "ens": [[int(e.row[i]), int(e.col[i]), float(e.data[i])] for i in order],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "TrialResult":
        trip = np.array(rec["ens"], dtype=float).reshape(-1, 3)
        m = sparse.csr_matrix((trip[:, 2], (trip[:, 0].astype(int), trip[:, 1].astype(int))),
                              shape=(rec["zones"], rec["hours"]))
        return cls(rec["trial_id"], m, rec.get("epsilon", 1e-6), rec.get("relaxed_hours", 0))


def run_trial(net: Network, sched: DispatchSchedule, scenario: OutageScenario, epsilon: float = 1e-6,
              schedule_state: bool = False, model: Optional[RedispatchModel] = None) -> TrialResult:
    """Chain hourly redispatch over the scenario horizon without look-ahead."""
    avail = np.asarray(scenario.availability)
    H = sched.hours
    if avail.shape != (len(net.generators), H):
        raise ValueError(f"scenario is {avail.shape}, schedule needs {(len(net.generators), H)}")
    model = RedispatchModel(net, schedule_state=schedule_state) if model is None else model
    G = model.G
    sat = np.flatnonzero(model.satoa)
    sat_zone = model.zone[G + sat]
    ens = np.zeros((net.n_zones, H))
    prev = PrevState.from_schedule(sched, 0)
    solves0, relaxed0 = model.solves, model.relaxed_solves
    for t in range(H):
        res = model.solve_hour(sched, t, avail[:, t], prev)
        ens[:, t] = res.ens
        prev = res.state()
        if len(sat):
            # SATOA refills while its zone is not short, limited by charge rate
            quiet = res.ens[sat_zone] <= epsilon
            room = model.cap[G + sat] - res.chg[sat]
            refill = np.minimum(model.energy[sat] - prev.soc[sat], model.ec[sat] * np.maximum(room, 0.0))
            prev.soc[sat] = np.where(quiet, prev.soc[sat] + np.maximum(refill, 0.0), prev.soc[sat])
            full = np.abs(prev.soc[sat] - model.energy[sat]) <= SNAP_TOL
            prev.soc[sat] = np.where(full, model.energy[sat], prev.soc[sat])
    ens[ens <= 0.0] = 0.0
    return TrialResult(scenario.trial_id, sparse.csr_matrix(ens), epsilon,
                       model.relaxed_solves - relaxed0, model.solves - solves0)


# -- Monte Carlo ----------------------------------------------------------------

def unit_temperatures(net: Network, profiles, hours: int) -> np.ndarray:
    zi = np.array([net.zone_index(g.zone) for g in net.generators], dtype=np.int64)
    return profiles.temp_c[zi, :hours]


_WORKER: dict = {}


def _worker_init(net, sched, temps, seed, epsilon, schedule_state):
    _WORKER.update(net=net, sched=sched, temps=temps, seed=seed, epsilon=epsilon, schedule_state=schedule_state)


def _run_one(trial_id: int) -> TrialResult:
    w = _WORKER
    net, sched = w["net"], w["sched"]
    scen = sample_outage_scenario([g.outage for g in net.generators], w["temps"], sched.hours, w["seed"], trial_id)
    # a fresh LP per trial keeps results independent of which worker ran what
    return run_trial(net, sched, scen, w["epsilon"], w["schedule_state"])


def _read_results_file(path: Path, header: dict) -> dict:
    done = {}
    if not path.exists():
        return done
    with path.open() as fh:
        lines = [ln for ln in fh if ln.strip()]
    if not lines:
        return done
    first = json.loads(lines[0])
    if first.get("header") != header:
        raise ValueError(f"results file {path} was written by a different run configuration")
    for ln in lines[1:]:
        try:
            rec = json.loads(ln)
        except json.JSONDecodeError:
            break  # torn final line from an interrupted run
        done[rec["trial_id"]] = TrialResult.from_record(rec)
    return done


def run_monte_carlo(net: Network, profiles, trials: int, seed: int, workers: int = 1, hours: Optional[int] = None,
                    epsilon: float = 1e-6, schedule_state: bool = False, schedule: Optional[DispatchSchedule] = None,
                    results_file=None) -> list:
    """Run ``trials`` outage scenarios; results are ordered by trial id.

    Trial ``i`` always draws the same outages for a given seed, so results do
    not depend on the worker count or on ``trials``. With ``results_file``
    each finished trial is appended as one JSON line and completed trials
    are reused on rerun.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    sched = dispatch_schedule(net, profiles, hours) if schedule is None else schedule
    H = sched.hours
    temps = unit_temperatures(net, profiles, H)
    done: dict = {}
    fh = None
    if results_file is not None:
        path = Path(results_file)
        header = {"seed": seed, "hours": H, "epsilon": epsilon, "schedule_state": schedule_state,
                  "zones": net.n_zones, "generators": len(net.generators)}
        done = _read_results_file(path, header)
        if not path.exists() or path.stat().st_size == 0:
            path.write_text(json.dumps({"header": header}, sort_keys=True) + "\n")
        elif done:
            # rewrite so a torn tail never precedes new records
            with path.open("w") as out:
                out.write(json.dumps({"header": header}, sort_keys=True) + "\n")
                for tid in sorted(done):
                    out.write(json.dumps(done[tid].to_record(), sort_keys=True) + "\n")
        fh = path.open("a")
    todo = [t for t in range(trials) if t not in done]
    results = {t: done[t] for t in range(trials) if t in done}
    try:
        args = (net, sched, temps, seed, epsilon, schedule_state)
        if workers == 1 or len(todo) <= 1:
            _worker_init(*args)
            it = map(_run_one, todo)
            pool = None
        else:
            method = "fork" if "fork" in mp.get_all_start_methods() else "spawn"
            pool = ProcessPoolExecutor(max_workers=workers, mp_context=mp.get_context(method),
                                       initializer=_worker_init, initargs=args)
            it = pool.map(_run_one, todo)
        for res in it:
            results[res.trial_id] = res
            if fh is not None:
                fh.write(json.dumps(res.to_record(), sort_keys=True) + "\n")
                fh.flush()
        if pool is not None:
            pool.shutdown()
    finally:
        if fh is not None:
            fh.close()
    return [results[t] for t in range(trials)]


class ReliabilityAssessor(BaseEstimator):
    """Estimator-style wrapper around :func:`run_monte_carlo`.

    ``fit(net, profiles)`` stores ``schedule_``, ``trials_`` and ``metrics_``.
    """

    def __init__(self, trials=1000, seed=0, workers=1, epsilon=1e-6, hours=None, schedule_state=False):
        self.trials = trials
        self.seed = seed
        self.workers = workers
        self.epsilon = epsilon
        self.hours = hours
        self.schedule_state = schedule_state

    def fit(self, net, profiles):
        from .metrics import compute_metrics

        if int(self.trials) < 1:
            raise ValueError("trials must be >= 1")
        self.schedule_ = dispatch_schedule(net, profiles, self.hours)
        self.trials_ = run_monte_carlo(net, profiles, self.trials, self.seed, self.workers, self.hours,
                                       self.epsilon, self.schedule_state, schedule=self.schedule_)
        self.metrics_ = compute_metrics(self.trials_, self.epsilon, zone_ids=net.zone_ids)
        return self


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)
