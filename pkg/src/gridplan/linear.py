"""Solver-agnostic linear model and the LP / MIP solve entry points.

Models are assembled block-wise: ``add_variables`` returns an index array in
the requested shape and ``add_constraints`` takes sparse triplets whose row
indices are local to the block being added. LPs are solved with the HiGHS
dual simplex through ``highspy``; integer models go through a best-first
branch-and-bound on top of the LP solver.
"""
from __future__ import annotations

import heapq
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import highspy
import numpy as np
from scipy.sparse import coo_matrix, csc_matrix, csr_matrix

FEAS_TOL = 1e-6
INT_TOL = 1e-6

_INF = highspy.kHighsInf


@dataclass
class _Block:
    name: str
    start: int
    shape: tuple


class LinearModel:
    """Minimization LP/MIP in the form ``min c'x  s.t.  lo <= A x <= hi,  lb <= x <= ub``."""

    def __init__(self, name: str = "model"):
        self.name = name
        self._lb: list[np.ndarray] = []
        self._ub: list[np.ndarray] = []
        self._cost: list[np.ndarray] = []
        self._int: list[np.ndarray] = []
        self._blocks: list[_Block] = []
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []
        self._row_lo: list[np.ndarray] = []
        self._row_hi: list[np.ndarray] = []
        self._row_blocks: list[_Block] = []
        self.n_vars = 0
        self.n_cons = 0
        self.objective_offset = 0.0
        self._cache = None

    # -- variables ---------------------------------------------------------
    def add_variables(self, name, shape=(), lb=0.0, ub=np.inf, cost=0.0, integer=False) -> np.ndarray:
        shape = tuple(np.atleast_1d(shape)) if shape != () else ()
        n = int(np.prod(shape)) if shape else 1
        idx = np.arange(self.n_vars, self.n_vars + n).reshape(shape) if shape else np.int64(self.n_vars)
        lb = np.broadcast_to(np.asarray(lb, dtype=float), shape).ravel() if shape else np.atleast_1d(float(lb))
        ub = np.broadcast_to(np.asarray(ub, dtype=float), shape).ravel() if shape else np.atleast_1d(float(ub))
        cost = np.broadcast_to(np.asarray(cost, dtype=float), shape).ravel() if shape else np.atleast_1d(float(cost))
        self._lb.append(lb.copy())
        self._ub.append(ub.copy())
        self._cost.append(cost.copy())
        self._int.append(np.full(n, bool(integer)))
        self._blocks.append(_Block(name, self.n_vars, shape))
        self.n_vars += n
        self._cache = None
        return idx

    def add_variable(self, name, lb=0.0, ub=np.inf, cost=0.0, integer=False) -> int:
        return int(self.add_variables(name, (), lb, ub, cost, integer))

    def add_cost(self, idx, cost) -> None:
        """Add ``cost`` to the objective coefficients of ``idx`` (indices must be distinct)."""
        self._consolidate()
        idx = np.asarray(idx).ravel()
        self._cost[0][idx] += np.broadcast_to(np.asarray(cost, dtype=float), np.shape(np.asarray(idx))).ravel()

    # -- constraints -------------------------------------------------------
    def add_constraints(self, rows, cols, vals, sense, rhs, name="c") -> np.ndarray:
        """Add ``len(rhs)`` rows from triplets; ``rows`` index into the new block.

        ``sense`` is one of ``'<='``, ``'='``, ``'>='`` (or an array of them).
        """
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        m = rhs.shape[0]
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.broadcast_to(np.asarray(vals, dtype=float), rows.shape).ravel()
        if rows.size and (rows.min() < 0 or rows.max() >= m):
            raise ValueError(f"row index outside block of {m} rows")
        if cols.size and (cols.min() < 0 or cols.max() >= self.n_vars):
            raise ValueError("constraint references an unknown variable")
        if not np.all(np.isfinite(vals)):
            raise ValueError("constraint coefficients must be finite")
        senses = np.broadcast_to(np.asarray(sense), (m,))
        lo = np.where(senses == "<=", -np.inf, rhs)
        hi = np.where(senses == ">=", np.inf, rhs)
        bad = ~np.isin(senses, ["<=", "=", ">="])
        if bad.any():
            raise ValueError(f"unknown constraint sense {senses[bad][0]!r}")
        self._rows.append(rows + self.n_cons)
        self._cols.append(cols)
        self._vals.append(vals.copy())
        self._row_lo.append(lo.astype(float))
        self._row_hi.append(hi.astype(float))
        self._row_blocks.append(_Block(name, self.n_cons, (m,)))
        out = np.arange(self.n_cons, self.n_cons + m)
        self.n_cons += m
        self._cache = None
        return out

    def add_constraint(self, terms: dict, sense, rhs, name="c") -> int:
        cols = np.fromiter((int(k) for k in terms), dtype=np.int64, count=len(terms))
        vals = np.fromiter((float(v) for v in terms.values()), dtype=float, count=len(terms))
        return int(self.add_constraints(np.zeros(len(cols), dtype=int), cols, vals, sense, [rhs], name)[0])

    # -- views -------------------------------------------------------------
    def _consolidate(self):
        if len(self._lb) > 1:
            for attr in ("_lb", "_ub", "_cost", "_int"):
                setattr(self, attr, [np.concatenate(getattr(self, attr))])
        if len(self._rows) > 1:
            for attr in ("_rows", "_cols", "_vals", "_row_lo", "_row_hi"):
                setattr(self, attr, [np.concatenate(getattr(self, attr))])

    def _cat(self, attr, dtype=float):
        self._consolidate()
        parts = getattr(self, attr)
        return parts[0] if parts else np.zeros(0, dtype=dtype)

    @property
    def lb(self):
        return self._cat("_lb")

    @property
    def ub(self):
        return self._cat("_ub")

    @property
    def cost(self):
        return self._cat("_cost")

    @property
    def integrality(self):
        return self._cat("_int", bool)

    @property
    def row_lo(self):
        return self._cat("_row_lo")

    @property
    def row_hi(self):
        return self._cat("_row_hi")

    def matrix(self) -> csr_matrix:
        if self._cache is None:
            r, c, v = self._cat("_rows", np.int64), self._cat("_cols", np.int64), self._cat("_vals")
            self._cache = coo_matrix((v, (r, c)), shape=(self.n_cons, self.n_vars)).tocsr()
        return self._cache

    @property
    def n_integer(self) -> int:
        return int(self.integrality.sum())

    def var_block(self, name) -> np.ndarray:
        for b in self._blocks:
            if b.name == name:
                n = int(np.prod(b.shape)) if b.shape else 1
                idx = np.arange(b.start, b.start + n)
                return idx.reshape(b.shape) if b.shape else idx[0]
        raise KeyError(name)

    def var_names(self) -> list[str]:
        names = []
        for b in self._blocks:
            if not b.shape:
                names.append(b.name)
                continue
            for pos in np.ndindex(*b.shape):
                names.append(b.name + "[" + ",".join(map(str, pos)) + "]")
        return names

    def validate(self) -> None:
        lb, ub = self.lb, self.ub
        if np.any(lb > ub):
            k = int(np.argmax(lb > ub))
            raise ValueError(f"variable {k} has lower bound {lb[k]} > upper bound {ub[k]}")
        if np.any(np.isnan(lb)) or np.any(np.isnan(ub)):
            raise ValueError("NaN variable bound")
        if not np.all(np.isfinite(self.cost)):
            raise ValueError("objective coefficients must be finite")

    def relaxed(self) -> "LinearModel":
        """Copy with every integrality flag dropped."""
        m = self.copy()
        m._consolidate()
        if m._int:
            m._int = [np.zeros_like(m._int[0])]
        return m

    def copy(self) -> "LinearModel":
        m = LinearModel(self.name)
        self._consolidate()
        for attr in ("_lb", "_ub", "_cost", "_int", "_rows", "_cols", "_vals", "_row_lo", "_row_hi"):
            setattr(m, attr, [a.copy() for a in getattr(self, attr)])
        m._blocks = list(self._blocks)
        m._row_blocks = list(self._row_blocks)
        m.n_vars, m.n_cons = self.n_vars, self.n_cons
        m.objective_offset = self.objective_offset
        return m

    def objective_value(self, x) -> float:
        return float(self.cost @ np.asarray(x)) + self.objective_offset

    def max_violation(self, x) -> float:
        """Largest bound or row violation of ``x`` after scaling rows to unit max coefficient."""
        x = np.asarray(x, dtype=float)
        viol = max(0.0, float(np.max(self.lb - x, initial=0)), float(np.max(x - self.ub, initial=0)))
        if self.n_cons:
            A = self.matrix()
            scale = _row_scale(A)
            ax = A @ x
            viol = max(
                viol,
                float(np.max((self.row_lo - ax) / scale, initial=0)),
                float(np.max((ax - self.row_hi) / scale, initial=0)),
            )
        return viol

    def to_lp_string(self) -> str:
        """Model in CPLEX LP text format."""
        names = self.var_names()
        safe = [n.replace("[", "(").replace("]", ")").replace(",", "_") for n in names]
        buf = io.StringIO()
        buf.write(f"\\ {self.name}\nMinimize\n obj:")
        for j, c in enumerate(self.cost):
            if c:
                buf.write(f" {c:+.12g} {safe[j]}")
        if self.objective_offset:
            buf.write(f" {self.objective_offset:+.12g}")
        buf.write("\nSubject To\n")
        A = self.matrix().tocsr()
        for i in range(self.n_cons):
            lo, hi = self.row_lo[i], self.row_hi[i]
            row = A.getrow(i)
            expr = " ".join(f"{v:+.12g} {safe[j]}" for j, v in zip(row.indices, row.data)) or "0 " + safe[0]
            if lo == hi:
                buf.write(f" r{i}: {expr} = {hi:.12g}\n")
            else:
                if np.isfinite(lo):
                    buf.write(f" r{i}_lo: {expr} >= {lo:.12g}\n")
                if np.isfinite(hi):
                    buf.write(f" r{i}_hi: {expr} <= {hi:.12g}\n")
        buf.write("Bounds\n")
        for j in range(self.n_vars):
            lo = "-inf" if not np.isfinite(self.lb[j]) else f"{self.lb[j]:.12g}"
            hi = "+inf" if not np.isfinite(self.ub[j]) else f"{self.ub[j]:.12g}"
            buf.write(f" {lo} <= {safe[j]} <= {hi}\n")
        ints = [safe[j] for j in np.flatnonzero(self.integrality)]
        if ints:
            buf.write("General\n " + " ".join(ints) + "\n")
        buf.write("End\n")
        return buf.getvalue()

    def write_lp(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_lp_string())


@dataclass
class Solution:
    status: str
    x: Optional[np.ndarray] = None
    objective: float = math.nan
    row_duals: Optional[np.ndarray] = None
    reduced_costs: Optional[np.ndarray] = None
    dual_objective: float = math.nan
    mip_gap: float = math.nan
    nodes: int = 0
    info: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _row_scale(A) -> np.ndarray:
    if A.shape[0] == 0:
        return np.ones(0)
    s = np.asarray(abs(A).max(axis=1).todense()).ravel()
    s[s == 0] = 1.0
    return s


def _to_highs(v):
    return np.where(np.isfinite(v), v, np.copysign(_INF, v))


class IncrementalLP:
    """Persistent HiGHS instance for repeated solves with changing bounds.

    The constraint matrix and costs are fixed at construction; column and row
    bounds may change between solves and the previous basis is reused.
    """

    def __init__(self, model: LinearModel, time_limit: float | None = None):
        if model.n_integer:
            raise ValueError("IncrementalLP needs a continuous model; use model.relaxed()")
        model.validate()
        self.model = model
        A = model.matrix()
        self.scale = _row_scale(A)
        As = csc_matrix(A.multiply(1.0 / self.scale[:, None])) if A.shape[0] else csc_matrix(A)
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("threads", 1)
        h.setOptionValue("random_seed", 0)
        h.setOptionValue("primal_feasibility_tolerance", 1e-8)
        h.setOptionValue("dual_feasibility_tolerance", 1e-8)
        if time_limit:
            h.setOptionValue("time_limit", float(time_limit))
        lp = highspy.HighsLp()
        lp.num_col_ = model.n_vars
        lp.num_row_ = model.n_cons
        lp.col_cost_ = model.cost.astype(float)
        lp.col_lower_ = _to_highs(model.lb)
        lp.col_upper_ = _to_highs(model.ub)
        lp.row_lower_ = _to_highs(model.row_lo / self.scale)
        lp.row_upper_ = _to_highs(model.row_hi / self.scale)
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_ = As.indptr.astype(np.int32)
        lp.a_matrix_.index_ = As.indices.astype(np.int32)
        lp.a_matrix_.value_ = As.data.astype(float)
        lp.offset_ = float(model.objective_offset)
        h.passModel(lp)
        self.h = h
        self.col_lo = model.lb.copy()
        self.col_hi = model.ub.copy()
        self.row_lo = model.row_lo.copy()
        self.row_hi = model.row_hi.copy()
        self._all_cols = np.arange(model.n_vars, dtype=np.int32)
        self._all_rows = np.arange(model.n_cons, dtype=np.int32)
        self.solves = 0

    def set_col_bounds(self, idx, lo, hi) -> None:
        idx = np.asarray(idx, dtype=np.int32).ravel()
        lo = np.broadcast_to(np.asarray(lo, dtype=float), idx.shape).ravel()
        hi = np.broadcast_to(np.asarray(hi, dtype=float), idx.shape).ravel()
        self.col_lo[idx] = lo
        self.col_hi[idx] = hi
        self.h.changeColsBounds(len(idx), idx, _to_highs(lo), _to_highs(hi))

    def set_row_bounds(self, idx, lo, hi) -> None:
        idx = np.asarray(idx, dtype=np.int32).ravel()
        lo = np.broadcast_to(np.asarray(lo, dtype=float), idx.shape).ravel()
        hi = np.broadcast_to(np.asarray(hi, dtype=float), idx.shape).ravel()
        self.row_lo[idx] = lo
        self.row_hi[idx] = hi
        s = self.scale[idx]
        self.h.changeRowsBounds(len(idx), idx, _to_highs(lo / s), _to_highs(hi / s))

    def set_all_bounds(self, col_lo, col_hi, row_lo, row_hi) -> None:
        """Replace every bound at once (full-length arrays, unscaled)."""
        self.col_lo[:], self.col_hi[:] = col_lo, col_hi
        self.row_lo[:], self.row_hi[:] = row_lo, row_hi
        n, m = len(self.col_lo), len(self.row_lo)
        self.h.changeColsBounds(n, self._all_cols, _to_highs(self.col_lo), _to_highs(self.col_hi))
        if m:
            self.h.changeRowsBounds(m, self._all_rows, _to_highs(self.row_lo / self.scale),
                                    _to_highs(self.row_hi / self.scale))

    def solve(self, duals: bool = True) -> Solution:
        h = self.h
        h.run()
        self.solves += 1
        status = h.getModelStatus()
        if status == highspy.HighsModelStatus.kUnboundedOrInfeasible:
            h.setOptionValue("presolve", "off")
            h.run()
            h.setOptionValue("presolve", "choose")
            status = h.getModelStatus()
        if status == highspy.HighsModelStatus.kInfeasible:
            return Solution("infeasible")
        if status == highspy.HighsModelStatus.kUnbounded:
            return Solution("unbounded")
        if status != highspy.HighsModelStatus.kOptimal:
            return Solution("error", info={"highs_status": h.modelStatusToString(status)})
        sol = h.getSolution()
        x = np.array(sol.col_value)
        obj = float(self.model.cost @ x) + self.model.objective_offset
        out = Solution("optimal", x=x, objective=obj)
        if duals and sol.dual_valid:
            y = np.array(sol.row_dual) / self.scale if self.model.n_cons else np.zeros(0)
            z = np.array(sol.col_dual)
            out.row_duals, out.reduced_costs = y, z
            out.dual_objective = _dual_objective(y, z, self.row_lo, self.row_hi, self.col_lo, self.col_hi) + self.model.objective_offset
        return out


def _dual_objective(y, z, rlo, rhi, clo, chi) -> float:
    # positive multiplier prices the lower side, negative the upper side
    def side(mult, lo, hi):
        val = np.where(mult > 0, lo, hi)
        val = np.where(np.abs(mult) <= 1e-12, 0.0, val)
        with np.errstate(invalid="ignore"):
            return float(np.sum(np.where(val == 0, 0.0, mult * val)))

    return side(y, rlo, rhi) + side(z, clo, chi)


def solve_lp(model: LinearModel) -> Solution:
    """Solve a continuous model; infeasibility and unboundedness come back as status."""
    if model.n_integer:
        raise ValueError("solve_lp called on a model with integer variables; use solve_mip")
    return IncrementalLP(model).solve()


def solve_mip(model: LinearModel, max_nodes: int = 100_000, rel_gap: float = 1e-9) -> Solution:
    """Best-first branch-and-bound over LP relaxations.

    Nodes are ordered by LP bound, ties by creation order; the branching
    variable is the most fractional integer column (lowest index on ties).
    """
    ints = np.flatnonzero(model.integrality)
    if ints.size == 0:
        sol = solve_lp(model)
        sol.mip_gap = 0.0 if sol.optimal else math.nan
        return sol

    lp = IncrementalLP(model.relaxed())
    base_lo = np.ceil(model.lb[ints] - INT_TOL)
    base_hi = np.floor(model.ub[ints] + INT_TOL)
    if np.any(base_lo > base_hi):
        return Solution("infeasible", mip_gap=math.nan)

    def evaluate(lo, hi):
        lp.set_col_bounds(ints, lo, hi)
        return lp.solve(duals=False)

    counter = 0
    root = evaluate(base_lo, base_hi)
    if root.status == "unbounded":
        return Solution("unbounded")
    if not root.optimal:
        return Solution(root.status)

    heap = [(root.objective, counter, base_lo, base_hi, root.x)]
    incumbent_x, incumbent = None, math.inf
    nodes = 1
    best_bound = root.objective
    while heap:
        bound, _, lo, hi, x = heapq.heappop(heap)
        best_bound = bound
        if bound >= incumbent - rel_gap * max(1.0, abs(incumbent)):
            heap.clear()
            break
        xi = x[ints]
        frac = np.abs(xi - np.round(xi))
        if np.all(frac <= INT_TOL):
            incumbent, incumbent_x = bound, x.copy()
            continue
        k = int(np.argmax(frac))  # argmax returns first maximum -> lowest index
        v = xi[k]
        children = []
        down_hi = hi.copy()
        down_hi[k] = math.floor(v)
        children.append((lo, down_hi))
        up_lo = lo.copy()
        up_lo[k] = math.ceil(v)
        children.append((up_lo, hi))
        for clo, chi in children:
            if clo[k] > chi[k]:
                continue
            if nodes >= max_nodes:
                break
            child = evaluate(clo, chi)
            nodes += 1
            if child.optimal and child.objective < incumbent:
                counter += 1
                heapq.heappush(heap, (child.objective, counter, clo, chi, child.x))

    if incumbent_x is None:
        return Solution("infeasible", nodes=nodes)
    x = incumbent_x.copy()
    x[ints] = np.round(x[ints])
    obj = model.objective_value(x)
    lower = min(best_bound, obj) if heap else obj
    if heap:
        lower = min(lower, min(n[0] for n in heap))
    gap = (obj - lower) / max(1.0, abs(obj))
    return Solution("optimal", x=x, objective=obj, mip_gap=max(0.0, gap), nodes=nodes)
