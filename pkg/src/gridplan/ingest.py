"""Network and time-series I/O, the bundled 7-zone fixture, synthetic profiles."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .network import (
    Branch,
    CandidateLineUpgrade,
    CandidateStorageBlock,
    EconParams,
    GeneratorUnit,
    Network,
    StorageAsset,
    Zone,
    validate_network,
)
from .outages import OutageParams

SCHEMA_VERSION = 1
HOURS_PER_YEAR = 8760


class SchemaError(ValueError):
    def __init__(self, path, line, message):
        self.path, self.line = str(path), line
        where = f"{path}:{line}" if line else str(path)
        super().__init__(f"{where}: {message}")


# -- bundled fixture --------------------------------------------------------

# zone -> MW by type: coal, hydro, ng, nuclear, ogs, solar, storage, wind; peak load
TABLE_I = {
    1: (2514, 0, 8956, 0, 1163, 480, 110, 0, 19381),
    2: (0, 0, 1317, 0, 0, 2311, 184, 9710, 1179),
    3: (3231, 37, 7734, 2560, 1739, 521, 311, 8413, 12897),
    # the capacity cells sum to 113,924 MW against a stated total of 113,923 and an
    # OGS column total of 9,642; zone-4 OGS carries the 1 MW reconciliation
    4: (7047, 124, 15060, 2400, 5297, 3158, 150, 3168, 30673),
    5: (1615, 315, 6386, 0, 1443, 197, 11, 0, 8547),
    6: (0, 0, 2109, 0, 0, 2478, 86, 2563, 1840),
    7: (0, 58, 0, 0, 0, 3036, 4, 5927, 1838),
}
TABLE_I_TOTAL_MW = 113_923

# from, to, reactance (pu), thermal capacity (MW)
TABLE_II = (
    (1, 3, 0.0042, 5294),
    (1, 5, 0.0024, 5109),
    (2, 4, 0.0018, 14463),
    (2, 6, 0.0036, 6610),
    (2, 7, 0.0016, 3497),
    (3, 5, 0.0010, 10478),
    (3, 7, 0.0115, 283),
    (4, 5, 0.0015, 9731),
    (4, 7, 0.0177, 3384),
    (5, 7, 0.0126, 3164),
    (6, 7, 0.0033, 2928),
)

# back-computed from the 80.46 M$ cost of a 1,495 MW upgrade at 1,600 $/MW-mile
LINE_3_7_MILES = 33.637
DEFAULT_BRANCH_MILES = 100.0

HOT_C = 35.0


def _tech_table():
    """Illustrative per-technology defaults; not taken from any external data set."""
    return {
        # unit MW, heat rate, fuel $/MMBtu, VOM, FOM $/MW-yr, startup $/MW, R10, RH, MTTR, FOR, hot uplift
        "coal": (700, 10.0, 2.0, 4.0, 40_000, 100, 0.05, 0.30, 48, 0.06, 0.04),
        "ng_cc": (600, 7.0, 3.5, 3.0, 15_000, 60, 0.15, 0.60, 24, 0.05, 0.10),
        "ng_ct": (400, 10.5, 3.5, 5.0, 10_000, 20, 1.00, 1.00, 24, 0.05, 0.10),
        "nuclear": (1280, 10.4, 0.7, 2.0, 120_000, 500, 0.00, 0.05, 168, 0.03, 0.00),
        "ogs": (600, 11.0, 4.0, 4.0, 30_000, 80, 0.20, 0.50, 48, 0.08, 0.07),
        "hydro": (None, 0.0, 0.0, 5.0, 20_000, 0, 1.00, 1.00, 24, 0.02, 0.00),
    }


def default_outage_params(kind: str) -> OutageParams:
    *_, mttr, fr, hot = _tech_table()[kind]
    if hot:
        return OutageParams(mttr, ((HOT_C, fr), (math.inf, fr + hot)))
    return OutageParams.flat(mttr, fr)


def _split(total, unit_mw):
    if total <= 0:
        return []
    if unit_mw is None:
        return [float(total)]
    n = max(1, int(round(total / unit_mw)))
    base = total // n
    sizes = [float(base)] * n
    sizes[-1] += total - base * n
    return sizes


def fixture_ercot7() -> Network:
    """The aggregated 7-zone Texas system with its expansion candidates."""
    tech = _tech_table()
    zones = tuple(Zone(z, f"Zone {z}", float(row[8])) for z, row in TABLE_I.items())
    branches = tuple(
        Branch(k + 1, f, t, x, float(cap), LINE_3_7_MILES if (f, t) == (3, 7) else DEFAULT_BRANCH_MILES)
        for k, (f, t, x, cap) in enumerate(TABLE_II)
    )

    gens: list[GeneratorUnit] = []
    storages: list[StorageAsset] = []

    def thermal(zone, kind, label, total):
        unit_mw, hr, fuel, vom, fom, suc, r10, rh, *_ = tech[kind]
        for n, size in enumerate(_split(total, unit_mw), start=1):
            gens.append(
                GeneratorUnit(
                    id=f"z{zone}_{label}_{n}",
                    zone=zone,
                    tech=label if label != "ng_cc" and label != "ng_ct" else "ng",
                    capacity_mw=size,
                    heat_rate_mmbtu_per_mwh=hr,
                    fuel_price_usd_per_mmbtu=fuel,
                    fixed_om_usd_per_mw_yr=fom,
                    var_om_usd_per_mwh=vom,
                    startup_cost_usd_per_mw=suc,
                    ramp_10min_frac=r10,
                    ramp_hourly_frac=rh,
                    outage=default_outage_params(kind),
                )
            )

    for z, (coal, hydro, ng, nuc, ogs, solar, stor, wind, _) in TABLE_I.items():
        thermal(z, "nuclear", "nuclear", nuc)
        thermal(z, "coal", "coal", coal)
        cc = int(round(ng * 0.6 / 100.0)) * 100
        thermal(z, "ng_cc", "ng_cc", cc)
        thermal(z, "ng_ct", "ng_ct", ng - cc)
        thermal(z, "ogs", "ogs", ogs)
        thermal(z, "hydro", "hydro", hydro)
        for label, cap, fom in (("solar", solar, 15_000), ("wind", wind, 25_000)):
            if cap:
                gens.append(
                    GeneratorUnit(
                        id=f"z{z}_{label}",
                        zone=z,
                        tech=label,
                        capacity_mw=float(cap),
                        marginal_cost_usd_per_mwh=0.0,
                        fixed_om_usd_per_mw_yr=fom,
                        ramp_10min_frac=1.0,
                        ramp_hourly_frac=1.0,
                        is_vre=True,
                        profile=f"{label}_z{z}",
                    )
                )
        if stor:
            storages.append(
                StorageAsset(
                    id=f"z{z}_storage",
                    zone=z,
                    power_mw=float(stor),
                    energy_mwh=2.0 * stor,
                    charge_eff=0.9,
                    discharge_eff=0.9,
                    fixed_om_usd_per_mw_yr=20_000,
                    var_om_usd_per_mwh=2.0,
                )
            )

    cand_lines = (CandidateLineUpgrade(branch_id=7, max_delta_mw=3000.0, cost_usd_per_mw_mile=1600.0),)
    cand_storage = (
        CandidateStorageBlock(
            zone=None, block_mw=400.0, duration_h=4.0, max_blocks=3, cost_usd_per_mwh=350_000.0,
            charge_eff=0.9, discharge_eff=0.9,
        ),
    )
    return Network(zones, branches, tuple(gens), tuple(storages), cand_lines, cand_storage, EconParams())


def bundled_fixture_dir() -> Path:
    return Path(str(resources.files("gridplan") / "data" / "ercot7"))


# -- CSV schemas ------------------------------------------------------------

ZONE_COLS = ("id", "name", "peak_load_mw")
BRANCH_COLS = ("id", "from_zone", "to_zone", "reactance_pu", "capacity_mw", "length_miles")
GEN_COLS = (
    "id", "zone", "tech", "capacity_mw", "marginal_cost_usd_per_mwh", "heat_rate_mmbtu_per_mwh",
    "fuel_price_usd_per_mmbtu", "fixed_om_usd_per_mw_yr", "var_om_usd_per_mwh", "startup_cost_usd_per_mw",
    "ramp_10min_frac", "ramp_hourly_frac", "mttr_hours", "for_table", "is_vre", "profile",
)
STORAGE_COLS = (
    "id", "zone", "power_mw", "energy_mwh", "charge_eff", "discharge_eff", "fixed_om_usd_per_mw_yr",
    "var_om_usd_per_mwh", "heat_rate_mmbtu_per_mwh", "is_satoa",
)
CAND_LINE_COLS = ("branch_id", "max_delta_mw", "cost_usd_per_mw_mile", "reactance_pu")
CAND_STORAGE_COLS = (
    "zone", "block_mw", "duration_h", "max_blocks", "cost_usd_per_mwh", "charge_eff", "discharge_eff",
    "fixed_om_usd_per_mw_yr",
)

_FILES = {
    "zones": ("zones.csv", ZONE_COLS),
    "branches": ("branches.csv", BRANCH_COLS),
    "generators": ("generators.csv", GEN_COLS),
    "storage": ("storage.csv", STORAGE_COLS),
    "candidate_lines": ("candidate_lines.csv", CAND_LINE_COLS),
    "candidate_storage": ("candidate_storage.csv", CAND_STORAGE_COLS),
}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    return repr(v) if isinstance(v, float) else str(v)


def _for_table_str(p: Optional[OutageParams]) -> str:
    if p is None:
        return ""
    return ";".join(f"{t!r}:{f!r}" for t, f in p.for_table)


def _write_csv(path: Path, kind: str, cols, rows) -> None:
    with path.open("w", newline="") as fh:
        fh.write(f"# gridplan {kind} v{SCHEMA_VERSION}\n")
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_network(net: Network, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    _write_csv(d / "zones.csv", "zones", ZONE_COLS, [(z.id, z.name, z.peak_load_mw) for z in net.zones])
    _write_csv(
        d / "branches.csv", "branches", BRANCH_COLS,
        [(b.id, b.from_zone, b.to_zone, b.reactance_pu, b.capacity_mw, b.length_miles) for b in net.branches],
    )
    _write_csv(
        d / "generators.csv", "generators", GEN_COLS,
        [
            (
                g.id, g.zone, g.tech, g.capacity_mw, g.marginal_cost_usd_per_mwh, g.heat_rate_mmbtu_per_mwh,
                g.fuel_price_usd_per_mmbtu, g.fixed_om_usd_per_mw_yr, g.var_om_usd_per_mwh,
                g.startup_cost_usd_per_mw, g.ramp_10min_frac, g.ramp_hourly_frac,
                g.outage.mttr_hours if g.outage else None, _for_table_str(g.outage), g.is_vre, g.profile,
            )
            for g in net.generators
        ],
    )
    _write_csv(
        d / "storage.csv", "storage", STORAGE_COLS,
        [tuple(getattr(s, c) for c in STORAGE_COLS) for s in net.storages],
    )
    _write_csv(
        d / "candidate_lines.csv", "candidate_lines", CAND_LINE_COLS,
        [tuple(getattr(c, k) for k in CAND_LINE_COLS) for c in net.candidate_lines],
    )
    _write_csv(
        d / "candidate_storage.csv", "candidate_storage", CAND_STORAGE_COLS,
        [tuple(getattr(c, k) for k in CAND_STORAGE_COLS) for c in net.candidate_storage],
    )
    (d / "econ.json").write_text(json.dumps({"schema": SCHEMA_VERSION, **asdict(net.econ)}, indent=2) + "\n")
    return d


def _read_csv(path: Path, kind: str, cols, required=True):
    if not path.exists():
        if required:
            raise SchemaError(path, 0, "file not found")
        return []
    with path.open(newline="") as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise SchemaError(path, 1, "missing schema header line")
        parts = first.lstrip("#").split()
        if len(parts) != 3 or parts[0] != "gridplan" or parts[1] != kind:
            raise SchemaError(path, 1, f"expected header '# gridplan {kind} v{SCHEMA_VERSION}'")
        if parts[2] != f"v{SCHEMA_VERSION}":
            raise SchemaError(path, 1, f"unsupported schema version {parts[2]}")
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != tuple(cols):
            raise SchemaError(path, 2, f"expected columns {','.join(cols)}")
        out = []
        for lineno, row in enumerate(reader, start=3):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(cols):
                raise SchemaError(path, lineno, f"expected {len(cols)} fields, got {len(row)}")
            out.append((lineno, dict(zip(cols, (c.strip() for c in row)))))
        return out


def _num(path, line, rec, key, cast=float, optional=False, positive=False, nonneg=False):
    raw = rec[key]
    if raw == "":
        if optional:
            return None
        raise SchemaError(path, line, f"{key} is required")
    try:
        v = cast(raw)
    except ValueError:
        raise SchemaError(path, line, f"{key}={raw!r} is not a valid {cast.__name__}") from None
    if cast is float and not math.isfinite(v):
        raise SchemaError(path, line, f"{key} must be finite")
    if positive and not v > 0:
        raise SchemaError(path, line, f"{key} must be > 0, got {raw}")
    if nonneg and v < 0:
        raise SchemaError(path, line, f"{key} must be >= 0, got {raw}")
    return v


def _flag(path, line, raw):
    if raw in ("1", "true", "True"):
        return True
    if raw in ("0", "false", "False", ""):
        return False
    raise SchemaError(path, line, f"boolean flag expected, got {raw!r}")


def _parse_for_table(path, line, raw):
    try:
        bins = tuple((float(t), float(f)) for t, f in (part.split(":") for part in raw.split(";")))
    except ValueError:
        raise SchemaError(path, line, f"bad for_table {raw!r}; expected 'temp:rate;temp:rate'") from None
    return bins


def load_network(directory) -> Network:
    """Read a network directory written by :func:`write_network`."""
    d = Path(directory)
    if not d.is_dir():
        raise SchemaError(d, 0, "network directory not found")

    zones = []
    p = d / "zones.csv"
    for line, r in _read_csv(p, "zones", ZONE_COLS):
        zones.append(Zone(_num(p, line, r, "id", int), r["name"], _num(p, line, r, "peak_load_mw", nonneg=True)))
    zone_ids = {z.id for z in zones}

    def zone_ref(path, line, rec, key="zone"):
        z = _num(path, line, rec, key, int)
        if z not in zone_ids:
            raise SchemaError(path, line, f"dangling reference: {key} {z} is not a defined zone")
        return z

    branches = []
    p = d / "branches.csv"
    for line, r in _read_csv(p, "branches", BRANCH_COLS):
        branches.append(
            Branch(
                _num(p, line, r, "id", int),
                zone_ref(p, line, r, "from_zone"),
                zone_ref(p, line, r, "to_zone"),
                _num(p, line, r, "reactance_pu", positive=True),
                _num(p, line, r, "capacity_mw", positive=True),
                _num(p, line, r, "length_miles", positive=True),
            )
        )

    gens = []
    p = d / "generators.csv"
    for line, r in _read_csv(p, "generators", GEN_COLS):
        mttr = _num(p, line, r, "mttr_hours", optional=True, positive=True)
        outage = None
        if mttr is not None:
            try:
                outage = OutageParams(mttr, _parse_for_table(p, line, r["for_table"] or "inf:0.0"))
            except ValueError as exc:
                raise SchemaError(p, line, str(exc)) from None
        gens.append(
            GeneratorUnit(
                id=r["id"],
                zone=zone_ref(p, line, r),
                tech=r["tech"],
                capacity_mw=_num(p, line, r, "capacity_mw", positive=True),
                marginal_cost_usd_per_mwh=_num(p, line, r, "marginal_cost_usd_per_mwh", optional=True),
                heat_rate_mmbtu_per_mwh=_num(p, line, r, "heat_rate_mmbtu_per_mwh", nonneg=True),
                fuel_price_usd_per_mmbtu=_num(p, line, r, "fuel_price_usd_per_mmbtu", nonneg=True),
                fixed_om_usd_per_mw_yr=_num(p, line, r, "fixed_om_usd_per_mw_yr", nonneg=True),
                var_om_usd_per_mwh=_num(p, line, r, "var_om_usd_per_mwh"),
                startup_cost_usd_per_mw=_num(p, line, r, "startup_cost_usd_per_mw", nonneg=True),
                ramp_10min_frac=_num(p, line, r, "ramp_10min_frac", nonneg=True),
                ramp_hourly_frac=_num(p, line, r, "ramp_hourly_frac", nonneg=True),
                outage=outage,
                is_vre=_flag(p, line, r["is_vre"]),
                profile=r["profile"] or None,
            )
        )

    storages = []
    p = d / "storage.csv"
    for line, r in _read_csv(p, "storage", STORAGE_COLS, required=False):
        storages.append(
            StorageAsset(
                id=r["id"],
                zone=zone_ref(p, line, r),
                power_mw=_num(p, line, r, "power_mw", positive=True),
                energy_mwh=_num(p, line, r, "energy_mwh", nonneg=True),
                charge_eff=_num(p, line, r, "charge_eff", positive=True),
                discharge_eff=_num(p, line, r, "discharge_eff", positive=True),
                fixed_om_usd_per_mw_yr=_num(p, line, r, "fixed_om_usd_per_mw_yr", nonneg=True),
                var_om_usd_per_mwh=_num(p, line, r, "var_om_usd_per_mwh"),
                heat_rate_mmbtu_per_mwh=_num(p, line, r, "heat_rate_mmbtu_per_mwh", nonneg=True),
                is_satoa=_flag(p, line, r["is_satoa"]),
            )
        )

    branch_ids = {b.id for b in branches}
    cand_lines = []
    p = d / "candidate_lines.csv"
    for line, r in _read_csv(p, "candidate_lines", CAND_LINE_COLS, required=False):
        bid = _num(p, line, r, "branch_id", int)
        if bid not in branch_ids:
            raise SchemaError(p, line, f"dangling reference: branch {bid} is not defined")
        cand_lines.append(
            CandidateLineUpgrade(
                bid,
                _num(p, line, r, "max_delta_mw", nonneg=True),
                _num(p, line, r, "cost_usd_per_mw_mile", nonneg=True),
                _num(p, line, r, "reactance_pu", optional=True, positive=True),
            )
        )
    cand_storage = []
    p = d / "candidate_storage.csv"
    for line, r in _read_csv(p, "candidate_storage", CAND_STORAGE_COLS, required=False):
        zone = None if r["zone"] == "" else zone_ref(p, line, r)
        cand_storage.append(
            CandidateStorageBlock(
                zone,
                _num(p, line, r, "block_mw", positive=True),
                _num(p, line, r, "duration_h", positive=True),
                _num(p, line, r, "max_blocks", int, positive=True),
                _num(p, line, r, "cost_usd_per_mwh", nonneg=True),
                _num(p, line, r, "charge_eff", positive=True),
                _num(p, line, r, "discharge_eff", positive=True),
                _num(p, line, r, "fixed_om_usd_per_mw_yr", nonneg=True),
            )
        )

    econ = EconParams()
    p = d / "econ.json"
    if p.exists():
        try:
            raw = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise SchemaError(p, exc.lineno, f"invalid JSON: {exc.msg}") from None
        if raw.pop("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise SchemaError(p, 0, "unsupported schema version")
        known = {f.name for f in fields(EconParams)}
        unknown = set(raw) - known
        if unknown:
            raise SchemaError(p, 0, f"unknown keys {sorted(unknown)}")
        econ = EconParams(**raw)

    net = Network(tuple(zones), tuple(branches), tuple(gens), tuple(storages), tuple(cand_lines),
                  tuple(cand_storage), econ)
    report = validate_network(net)
    if not report.ok:
        raise SchemaError(d, 0, "network failed validation:\n" + str(report))
    return net


# -- hourly profiles --------------------------------------------------------

@dataclass
class ProfileSet:
    load: np.ndarray  # zones x hours, MW
    vre_cf: dict  # profile name -> hourly capacity factor
    temp_c: np.ndarray  # zones x hours
    zone_ids: tuple

    @property
    def hours(self) -> int:
        return self.load.shape[1]

    def unit_cf(self, gen) -> np.ndarray:
        return self.vre_cf[gen.profile]

    def window(self, start: int, stop: int) -> "ProfileSet":
        return ProfileSet(
            self.load[:, start:stop].copy(),
            {k: v[start:stop].copy() for k, v in self.vre_cf.items()},
            self.temp_c[:, start:stop].copy(),
            self.zone_ids,
        )

    def __eq__(self, other):
        return (
            isinstance(other, ProfileSet)
            and self.zone_ids == other.zone_ids
            and np.array_equal(self.load, other.load)
            and np.array_equal(self.temp_c, other.temp_c)
            and self.vre_cf.keys() == other.vre_cf.keys()
            and all(np.array_equal(self.vre_cf[k], other.vre_cf[k]) for k in self.vre_cf)
        )


DEFAULT_SHAPE = {
    "peak_day": 213,  # Aug 2, zero-based day of year
    "peak_hour": 16,
    "temp_mean_c": 21.0,
    "temp_seasonal_c": 10.0,
    "temp_diurnal_c": 5.0,
    "temp_noise_c": 2.0,
    "load_noise": 0.03,
    "wind_mean": 0.38,
}


def synthesize_profiles(net: Network, seed: int = 0, shape_cfg: Optional[dict] = None,
                        hours: int = HOURS_PER_YEAR) -> ProfileSet:
    """Reproducible hourly load, VRE capacity factor and temperature series.

    Each zone's load reaches exactly its configured peak at ``peak_day`` /
    ``peak_hour``; solar is zero outside daylight hours.
    """
    cfg = {**DEFAULT_SHAPE, **(shape_cfg or {})}
    peaks = cfg.get("peaks") or {z.id: z.peak_load_mw for z in net.zones}
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    t = np.arange(hours)
    day, hod = t // 24, t % 24
    season = np.cos(2 * np.pi * (day - 200) / 365.0)  # +1 in mid July
    diurnal = np.sin(2 * np.pi * (hod - 9) / 24.0)  # +1 at 15:00

    nz = net.n_zones
    temps = np.empty((nz, hours))
    load = np.empty((nz, hours))
    peak_t = cfg["peak_day"] * 24 + cfg["peak_hour"]
    for k, z in enumerate(net.zones):
        noise = np.zeros(hours)
        eps = rng.normal(0, cfg["temp_noise_c"], hours)
        for i in range(1, hours):
            noise[i] = 0.95 * noise[i - 1] + 0.3 * eps[i]
        temps[k] = cfg["temp_mean_c"] + cfg["temp_seasonal_c"] * season + cfg["temp_diurnal_c"] * diurnal + noise
        cooling = np.clip(temps[k] - 20.0, 0, None) / 15.0
        heating = np.clip(8.0 - temps[k], 0, None) / 15.0
        evening = 0.08 * np.exp(-0.5 * ((hod - 18) / 3.0) ** 2)
        shape = 0.5 + 0.35 * cooling + 0.15 * heating + 0.10 * (diurnal + 1) / 2 + evening
        shape = shape * (1 + rng.normal(0, cfg["load_noise"], hours))
        shape = np.clip(shape, 0.05, None)
        if 0 <= peak_t < hours:
            shape[peak_t] = shape.max() * 1.02
        series = shape / shape.max() * peaks[z.id]
        if 0 <= peak_t < hours:
            series[peak_t] = peaks[z.id]
        load[k] = series

    cf = {}
    for g in net.generators:
        if not g.is_vre or g.profile in cf:
            continue
        if g.profile.startswith("solar"):
            daylight = np.where((hod >= 6) & (hod <= 19), np.sin(np.pi * (hod - 6) / 13.0), 0.0)
            clouds = rng.beta(5, 1.5, hours // 24 + 1)[day]
            amp = 0.78 + 0.15 * season
            cf[g.profile] = np.clip(daylight * amp * clouds, 0.0, 1.0)
        else:
            x = np.zeros(hours)
            eps = rng.normal(0, 1, hours)
            for i in range(1, hours):
                x[i] = 0.97 * x[i - 1] + 0.25 * eps[i]
            level = np.log(cfg["wind_mean"] / (1 - cfg["wind_mean"]))
            night = 0.4 * np.cos(2 * np.pi * hod / 24.0)
            summer = -0.4 * np.clip(season, 0, None)
            cf[g.profile] = np.clip(1 / (1 + np.exp(-(level + x + night + summer))), 0.0, 1.0)

    return ProfileSet(load, cf, temps, tuple(net.zone_ids))


def write_profiles(profiles: ProfileSet, path) -> None:
    """Wide CSV: one row per hour, load/temperature per zone then capacity factors."""
    path = Path(path)
    names = sorted(profiles.vre_cf)
    cols = ["hour"] + [f"load_z{z}" for z in profiles.zone_ids] + [f"temp_z{z}" for z in profiles.zone_ids]
    cols += [f"cf_{n}" for n in names]
    with path.open("w", newline="") as fh:
        fh.write(f"# gridplan profiles v{SCHEMA_VERSION}\n")
        w = csv.writer(fh)
        w.writerow(cols)
        for h in range(profiles.hours):
            row = [h] + [repr(float(v)) for v in profiles.load[:, h]] + [repr(float(v)) for v in profiles.temp_c[:, h]]
            row += [repr(float(profiles.vre_cf[n][h])) for n in names]
            w.writerow(row)


def read_profiles(path) -> ProfileSet:
    path = Path(path)
    if not path.exists():
        raise SchemaError(path, 0, "file not found")
    with path.open(newline="") as fh:
        first = fh.readline()
        if not first.startswith("# gridplan profiles"):
            raise SchemaError(path, 1, "missing '# gridplan profiles' header")
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(c) for c in row] for row in reader if row])
    zones = tuple(int(c[6:]) for c in header if c.startswith("load_z"))
    nz = len(zones)
    load = data[:, 1 : 1 + nz].T.copy()
    temp = data[:, 1 + nz : 1 + 2 * nz].T.copy()
    cf = {c[3:]: data[:, j].copy() for j, c in enumerate(header) if c.startswith("cf_")}
    return ProfileSet(load, cf, temp, zones)


def congestion_hour(net: Network) -> tuple[ProfileSet, np.ndarray]:
    """One-hour stress case: zone-3 nuclear trips while zone-7 wind is plentiful.

    Loads sit near each zone's available capacity (zone 7 lightly loaded),
    so after the trip the spare energy lives mostly behind the 3-7 corridor.
    Returns the one-hour profile and the per-generator availability vector.
    """
    load_frac = {1: 1.0, 2: 0.9, 3: 0.9, 4: 0.95, 5: 1.0, 6: 0.9, 7: 0.2}
    names = sorted({g.profile for g in net.generators if g.is_vre})
    cf = {n: np.array([1.0 if n == "wind_z7" else 0.3 if n.startswith("wind") else 0.0]) for n in names}
    avail_cap = dict.fromkeys(net.zone_ids, 0.0)
    for g in net.generators:
        avail_cap[g.zone] += g.capacity_mw * (cf[g.profile][0] if g.is_vre else 1.0)
    load = np.array([[load_frac.get(z, 0.9) * avail_cap[z]] for z in net.zone_ids])
    temps = np.full((net.n_zones, 1), HOT_C - 5.0)
    availability = np.array([0 if (g.zone == 3 and g.tech == "nuclear") else 1 for g in net.generators], dtype=np.uint8)
    return ProfileSet(load, cf, temps, tuple(net.zone_ids)), availability
