"""Two-state Markov outage model with temperature-dependent forced outage rates.

Each unit flips between up and down once per hour. From up it fails with
probability ``lam(T)``; from down it is repaired with probability
``mu = 1 / MTTR``. The failure probability is chosen so the chain's
stationary availability at a constant temperature equals ``1 - FOR(T)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class OutageParams:
    mttr_hours: float
    for_table: tuple[tuple[float, float], ...] = ((math.inf, 0.0),)

    def __post_init__(self):
        table = tuple((float(t), float(f)) for t, f in self.for_table)
        object.__setattr__(self, "for_table", table)
        if not self.mttr_hours > 0:
            raise ValueError(f"mttr_hours must be > 0, got {self.mttr_hours}")
        if not table:
            raise ValueError("for_table needs at least one bin")
        uppers = [t for t, _ in table]
        if any(b <= a for a, b in zip(uppers, uppers[1:])):
            raise ValueError(f"temperature bins must be strictly increasing: {uppers}")
        for _, f in table:
            if not 0 <= f < 1:
                raise ValueError(f"forced outage rate {f} outside [0, 1)")

    @classmethod
    def flat(cls, mttr_hours: float, forced_outage_rate: float) -> "OutageParams":
        return cls(mttr_hours, ((math.inf, forced_outage_rate),))

    def forced_outage_rate(self, temp_c):
        """FOR of the first bin whose upper edge is >= temp; hotter than all bins -> last bin."""
        uppers = np.array([t for t, _ in self.for_table])
        rates = np.array([f for _, f in self.for_table])
        idx = np.searchsorted(uppers, np.asarray(temp_c, dtype=float), side="left")
        out = rates[np.minimum(idx, len(rates) - 1)]
        return float(out) if np.ndim(out) == 0 else out


def _rates(params: OutageParams, temp_c):
    mu = 1.0 / params.mttr_hours
    f = params.forced_outage_rate(temp_c)
    lam = mu * np.asarray(f) / (1.0 - np.asarray(f))
    return lam, mu


def transition_probs(params: OutageParams, temp_c: float) -> tuple[float, float]:
    """Hourly (failure, repair) probabilities at ``temp_c``."""
    lam, mu = _rates(params, temp_c)
    lam = float(lam)
    if mu > 1 or lam > 1:
        raise ValueError(
            f"transition probability above 1 (lambda={lam:.4g}, mu={mu:.4g}); "
            "MTTR too short for an hourly step, use a finer time step"
        )
    return lam, mu


def stationary_availability(lam: float, mu: float) -> float:
    return mu / (lam + mu)


@dataclass
class OutageScenario:
    availability: np.ndarray  # units x hours, 1 = available
    trial_id: int
    seed: int

    @property
    def n_units(self) -> int:
        return self.availability.shape[0]

    @property
    def horizon(self) -> int:
        return self.availability.shape[1]

    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            fh.write(f"# seed={self.seed},trial={self.trial_id},units={self.n_units},horizon={self.horizon}\n")
            w = csv.writer(fh)
            for row in self.availability:
                w.writerow(row.astype(int).tolist())

    @classmethod
    def from_csv(cls, path) -> "OutageScenario":
        with Path(path).open() as fh:
            header = fh.readline().lstrip("#").strip()
            meta = dict(kv.split("=") for kv in header.split(","))
            rows = [list(map(int, r)) for r in csv.reader(fh) if r]
        avail = np.array(rows, dtype=np.uint8).reshape(int(meta["units"]), int(meta["horizon"]))
        return cls(avail, int(meta["trial"]), int(meta["seed"]))


def unit_stream(seed: int, trial_id: int, unit: int) -> np.random.Generator:
    """Counter-based substream for one (trial, unit) pair."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(trial_id, unit))
    return np.random.Generator(np.random.Philox(ss))


def draw_uniforms(n_units: int, horizon: int, seed: int, trial_id: int) -> np.ndarray:
    u = np.empty((n_units, horizon))
    for k in range(n_units):
        u[k] = unit_stream(seed, trial_id, k).random(horizon)
    return u


def simulate_chain(params: Sequence[Optional[OutageParams]], temps: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Run the chains for given uniforms (units x horizon); returns 0/1 availability.

    Hour 0 is drawn from the stationary law at the hour-0 temperature; later
    hours use the transition probabilities at that hour's temperature.
    """
    n, horizon = uniforms.shape
    temps = np.asarray(temps, dtype=float)
    if temps.ndim == 1:
        temps = np.broadcast_to(temps, (n, temps.shape[0]))
    if temps.shape[1] < horizon:
        raise ValueError(f"temperature series has {temps.shape[1]} hours, need {horizon}")

    lam = np.zeros((n, horizon))
    mu = np.ones(n)
    fr0 = np.zeros(n)
    for k, p in enumerate(params):
        if p is None:
            continue
        lam[k], mu[k] = _rates(p, temps[k, :horizon])
        fr0[k] = p.forced_outage_rate(temps[k, 0])
    if np.any(lam > 1) or np.any(mu > 1):
        raise ValueError("transition probability above 1; use a finer time step")

    state = np.empty((n, horizon), dtype=np.uint8)
    up = uniforms[:, 0] >= fr0
    state[:, 0] = up
    for t in range(1, horizon):
        u = uniforms[:, t]
        up = np.where(up, u >= lam[:, t], u < mu)
        state[:, t] = up
    return state


def sample_outage_scenario(
    units: Sequence[Optional[OutageParams]],
    temps,
    horizon: int,
    seed: int,
    trial_id: int,
) -> OutageScenario:
    """Availability matrix for one trial.

    ``units`` holds one :class:`OutageParams` per unit (``None`` = never
    fails). ``temps`` is either one hourly series shared by all units or a
    units x hours array.
    """
    u = draw_uniforms(len(units), horizon, seed, trial_id)
    avail = simulate_chain(units, temps, u)
    return OutageScenario(avail, trial_id, seed)
