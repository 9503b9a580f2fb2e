"""Reliability metrics, case comparisons and report files."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

NOT_COST_EFFECTIVE = "not cost-effective"
NO_REFERENCE = "---"
REPORT_VERSION = 1


def _mean_se(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = x.shape[0]
    mean = x.mean(axis=0)
    if n < 2:
        return mean, np.zeros_like(mean)
    return mean, x.std(axis=0, ddof=1) / math.sqrt(n)


@dataclass
class ReliabilityMetrics:
    """Per-zone and systemwide EUE (MWh/yr) and LOLH (h/yr) with standard errors."""

    zone_ids: tuple
    eue_mwh: np.ndarray
    lolh_h: np.ndarray
    eue_se: np.ndarray
    lolh_se: np.ndarray
    system_eue_mwh: float
    system_lolh_h: float
    system_eue_se: float
    system_lolh_se: float
    trials: int
    epsilon: float = 1e-6
    # per-trial sums kept so batches can be merged exactly
    moments: dict = field(default_factory=dict, repr=False)
    eue_by_day: Optional[np.ndarray] = field(default=None, repr=False)  # zones x days

    def zone(self, zone_id) -> dict:
        k = list(self.zone_ids).index(zone_id)
        return {"eue": float(self.eue_mwh[k]), "lolh": float(self.lolh_h[k]),
                "eue_se": float(self.eue_se[k]), "lolh_se": float(self.lolh_se[k])}

    def merge(self, other: "ReliabilityMetrics") -> "ReliabilityMetrics":
        """Metrics of the union of two disjoint trial batches."""
        if tuple(self.zone_ids) != tuple(other.zone_ids):
            raise ValueError("cannot merge metrics over different zone sets")
        if self.epsilon != other.epsilon:
            raise ValueError("cannot merge metrics computed with different epsilon")
        mom = {k: self.moments[k] + other.moments[k] for k in self.moments}
        by_day = None
        if self.eue_by_day is not None and other.eue_by_day is not None:
            by_day = (self.eue_by_day * self.trials + other.eue_by_day * other.trials) / (self.trials + other.trials)
        return _from_moments(self.zone_ids, mom, self.trials + other.trials, self.epsilon, by_day)

    def to_dict(self) -> dict:
        zones = {str(z): self.zone(z) for z in self.zone_ids}
        return {
            "trials": self.trials,
            "epsilon": self.epsilon,
            "zones": zones,
            "systemwide": {"eue": self.system_eue_mwh, "lolh": self.system_lolh_h,
                           "eue_se": self.system_eue_se, "lolh_se": self.system_lolh_se},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReliabilityMetrics":
        zone_ids = tuple(int(z) for z in d["zones"])
        get = lambda key: np.array([d["zones"][str(z)][key] for z in zone_ids], dtype=float)
        sw = d["systemwide"]
        return cls(zone_ids, get("eue"), get("lolh"), get("eue_se"), get("lolh_se"), float(sw["eue"]),
                   float(sw["lolh"]), float(sw["eue_se"]), float(sw["lolh_se"]), int(d["trials"]),
                   float(d.get("epsilon", 1e-6)))


def _from_moments(zone_ids, mom, n, epsilon, by_day=None) -> ReliabilityMetrics:
    def stats(s1, s2):
        mean = s1 / n
        if n < 2:
            return mean, np.zeros_like(mean)
        var = np.maximum(s2 - n * mean**2, 0.0) / (n - 1)
        return mean, np.sqrt(var / n)

    eue, eue_se = stats(mom["eue"], mom["eue2"])
    lolh, lolh_se = stats(mom["lolh"], mom["lolh2"])
    s_eue, s_eue_se = stats(mom["sys_eue"], mom["sys_eue2"])
    s_lolh, s_lolh_se = stats(mom["sys_lolh"], mom["sys_lolh2"])
    return ReliabilityMetrics(tuple(zone_ids), eue, lolh, eue_se, lolh_se, float(s_eue), float(s_lolh),
                              float(s_eue_se), float(s_lolh_se), int(n), epsilon, mom, by_day)


def compute_metrics(trials: Sequence, epsilon: float = 1e-6, zone_ids=None) -> ReliabilityMetrics:
    """EUE and LOLH over a batch of :class:`TrialResult`.

    A zone counts a loss-of-load hour when its shortfall exceeds ``epsilon``;
    the systemwide count is the union (hours where the summed shortfall
    exceeds ``epsilon``), so it never exceeds the sum of zone counts.
    """
    trials = list(trials)
    if not trials:
        raise ValueError("need at least one trial")
    Z = trials[0].ens.shape[0]
    zone_ids = tuple(range(1, Z + 1)) if zone_ids is None else tuple(zone_ids)
    if len(zone_ids) != Z:
        raise ValueError(f"{len(zone_ids)} zone ids for {Z}-zone trial results")
    eue = np.zeros((len(trials), Z))
    lolh = np.zeros((len(trials), Z))
    sys_lolh = np.zeros(len(trials))
    H = trials[0].ens.shape[1]
    days = max(1, -(-H // 24))
    by_day = np.zeros((Z, days))
    for i, tr in enumerate(trials):
        e = tr.ens.tocsr()
        eue[i] = np.asarray(e.sum(axis=1)).ravel()
        lolh[i] = np.asarray((e > epsilon).sum(axis=1)).ravel()
        sys_lolh[i] = float((np.asarray(e.sum(axis=0)).ravel() > epsilon).sum())
        coo = e.tocoo()
        np.add.at(by_day, (coo.row, coo.col // 24), coo.data)
    sys_eue = eue.sum(axis=1)
    mom = {
        "eue": eue.sum(axis=0), "eue2": (eue**2).sum(axis=0),
        "lolh": lolh.sum(axis=0), "lolh2": (lolh**2).sum(axis=0),
        "sys_eue": np.array(sys_eue.sum()), "sys_eue2": np.array((sys_eue**2).sum()),
        "sys_lolh": np.array(sys_lolh.sum()), "sys_lolh2": np.array((sys_lolh**2).sum()),
    }
    m = _from_moments(zone_ids, mom, len(trials), epsilon, by_day / len(trials))
    # direct per-trial statistics are more accurate than the moment form
    m.eue_mwh, m.eue_se = _mean_se(eue)
    m.lolh_h, m.lolh_se = _mean_se(lolh)
    m.system_eue_mwh = float(m.eue_mwh.sum())
    m.system_eue_se = float(_mean_se(sys_eue[:, None])[1][0])
    m.system_lolh_h = float(sys_lolh.mean())
    m.system_lolh_se = float(_mean_se(sys_lolh[:, None])[1][0])
    return m


# -- comparisons ---------------------------------------------------------------

def relative_change(value, reference):
    """Percent change ``100 (value - reference) / reference``.

    Works elementwise on arrays; entries with a zero reference become
    ``None`` (rendered as ``---``).
    """
    if np.ndim(value) == 0 and np.ndim(reference) == 0:
        ref = float(reference)
        return None if ref == 0 else 100.0 * (float(value) - ref) / ref
    return [relative_change(v, r) for v, r in zip(np.asarray(value, dtype=float), np.asarray(reference, dtype=float))]


def format_change(pct) -> str:
    if pct is None:
        return NO_REFERENCE
    return f"{pct:+.1f}%"


def capital_recovery_factor(rate: float, years: int) -> float:
    """Annuity factor turning a present cost into equal end-of-year payments."""
    if years < 1:
        raise ValueError("years must be >= 1")
    if rate == 0:
        return 1.0 / years
    return rate / (1.0 - (1.0 + rate) ** -years)


def annualize(capex_usd: float, crf: float) -> float:
    if not 0.0 < crf <= 1.0:
        raise ValueError(f"capital recovery factor must be in (0, 1], got {crf}")
    if capex_usd < 0:
        raise ValueError("capital cost must be >= 0")
    return capex_usd * crf


def cost_of_reliability(annual_cost_usd: float, metric_case, metric_ref):
    """Annual cost per unit of metric reduction, or ``NOT_COST_EFFECTIVE``.

    ``metric_case`` / ``metric_ref`` are scalars, or :class:`ReliabilityMetrics`
    in which case a dict with ``usd_per_mwh`` (EUE) and ``usd_per_h`` (LOLH)
    is returned from the systemwide values.
    """
    if isinstance(metric_case, ReliabilityMetrics):
        return {
            "usd_per_mwh": cost_of_reliability(annual_cost_usd, metric_case.system_eue_mwh, metric_ref.system_eue_mwh),
            "usd_per_h": cost_of_reliability(annual_cost_usd, metric_case.system_lolh_h, metric_ref.system_lolh_h),
        }
    gain = float(metric_ref) - float(metric_case)
    if not gain > 0:
        return NOT_COST_EFFECTIVE
    return float(annual_cost_usd) / gain


@dataclass
class CaseReport:
    case: str
    metrics: ReliabilityMetrics
    seed: Optional[int] = None
    config: dict = field(default_factory=dict)
    annual_cost_usd: Optional[float] = None

    def to_dict(self) -> dict:
        d = {"version": REPORT_VERSION, "case": self.case, "trials": self.metrics.trials, "seed": self.seed}
        m = self.metrics.to_dict()
        d["metrics"] = m["zones"]
        d["systemwide"] = m["systemwide"]
        d["epsilon"] = m["epsilon"]
        if self.annual_cost_usd is not None:
            d["annual_cost_usd"] = self.annual_cost_usd
        d["config"] = self.config
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CaseReport":
        m = ReliabilityMetrics.from_dict({"zones": d["metrics"], "systemwide": d["systemwide"], "trials": d["trials"],
                                          "epsilon": d.get("epsilon", 1e-6)})
        return cls(d["case"], m, d.get("seed"), d.get("config", {}), d.get("annual_cost_usd"))


def dumps(obj) -> str:
    """Canonical JSON: sorted keys, fixed indent, trailing newline."""
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_metrics_report(report: CaseReport, out_dir) -> dict:
    """Write ``metrics.json`` plus long-format CSV and plot-data files; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"json": out / "metrics.json", "csv": out / "metrics.csv", "by_day": out / "eue_by_day.csv"}
    paths["json"].write_text(dumps(report.to_dict()))
    m = report.metrics
    with paths["csv"].open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["case", "zone", "metric", "value"])
        for k, z in enumerate(m.zone_ids):
            for name, arr in (("eue_mwh", m.eue_mwh), ("eue_se", m.eue_se), ("lolh_h", m.lolh_h), ("lolh_se", m.lolh_se)):
                w.writerow([report.case, z, name, repr(float(arr[k]))])
        for name, val in (("eue_mwh", m.system_eue_mwh), ("eue_se", m.system_eue_se), ("lolh_h", m.system_lolh_h),
                          ("lolh_se", m.system_lolh_se)):
            w.writerow([report.case, "system", name, repr(float(val))])
    with paths["by_day"].open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["case", "day", "zone", "eue_mwh"])
        if m.eue_by_day is not None:
            for d in range(m.eue_by_day.shape[1]):
                for k, z in enumerate(m.zone_ids):
                    if m.eue_by_day[k, d] > 0:
                        w.writerow([report.case, d, z, repr(float(m.eue_by_day[k, d]))])
    return paths


def compare_cases(reference: CaseReport, cases: Sequence[CaseReport]) -> dict:
    """Relative-change tables and cost-of-reliability rows against ``reference``."""
    ref = reference.metrics
    rows = []
    for c in cases:
        m = c.metrics
        if tuple(m.zone_ids) != tuple(ref.zone_ids):
            raise ValueError(f"case {c.case!r} has zones {m.zone_ids}, reference has {ref.zone_ids}")
        eue_rel = relative_change(m.eue_mwh, ref.eue_mwh)
        lolh_rel = relative_change(m.lolh_h, ref.lolh_h)
        row = {
            "case": c.case,
            "zones": {
                str(z): {"eue": float(m.eue_mwh[k]), "eue_change": format_change(eue_rel[k]),
                         "lolh": float(m.lolh_h[k]), "lolh_change": format_change(lolh_rel[k])}
                for k, z in enumerate(m.zone_ids)
            },
            "systemwide": {
                "eue": m.system_eue_mwh, "eue_change": format_change(relative_change(m.system_eue_mwh, ref.system_eue_mwh)),
                "lolh": m.system_lolh_h, "lolh_change": format_change(relative_change(m.system_lolh_h, ref.system_lolh_h)),
            },
        }
        if c.annual_cost_usd is not None:
            row["annual_cost_usd"] = c.annual_cost_usd
            row["cost_of_reliability"] = cost_of_reliability(c.annual_cost_usd, m, ref)
        rows.append(row)
    return {"reference": reference.case, "comparisons": rows}


def write_comparison(comparison: dict, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"json": out / "comparison.json", "table": out / "comparison.txt", "cost": out / "cost_of_reliability.csv"}
    paths["json"].write_text(dumps(comparison))
    paths["table"].write_text(format_comparison(comparison))
    with paths["cost"].open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["case", "annual_cost_usd", "usd_per_mwh_eue", "usd_per_h_lolh"])
        for row in comparison["comparisons"]:
            cor = row.get("cost_of_reliability")
            if cor is None:
                continue
            w.writerow([row["case"], repr(row["annual_cost_usd"]), cor["usd_per_mwh"], cor["usd_per_h"]])
    return paths


def format_comparison(comparison: dict) -> str:
    lines = []
    for metric, unit in (("eue", "MWh"), ("lolh", "h")):
        lines.append(f"{metric.upper()} ({unit}) relative to {comparison['reference']}")
        for row in comparison["comparisons"]:
            lines.append(f"  {row['case']}")
            for z, v in row["zones"].items():
                lines.append(f"    zone {z:>6}  {v[metric]:12.2f}  ({v[metric + '_change']})")
            s = row["systemwide"]
            lines.append(f"    {'system':>11}  {s[metric]:12.2f}  ({s[metric + '_change']})")
        lines.append("")
    costed = [r for r in comparison["comparisons"] if "cost_of_reliability" in r]
    if costed:
        lines.append("Cost of reliability improvement")
        for r in costed:
            c = r["cost_of_reliability"]
            eue = c["usd_per_mwh"] if isinstance(c["usd_per_mwh"], str) else f"{c['usd_per_mwh'] / 1e3:,.1f} k$/MWh"
            lolh = c["usd_per_h"] if isinstance(c["usd_per_h"], str) else f"{c['usd_per_h'] / 1e6:,.1f} M$/h"
            lines.append(f"  {r['case']:<16} {eue:>22}  {lolh:>20}")
    return "\n".join(lines) + "\n"
