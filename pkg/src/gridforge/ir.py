"""Solver-agnostic linear model representation.

A :class:`ModelIR` holds named variables with bounds and an integrality flag,
named linear rows, and a maximisation objective. Builders in
:mod:`gridforge.formulation` emit it; :mod:`gridforge.solver` consumes it.
Names follow ``family[index,...]``, e.g. ``v[hpc,3]`` or ``EB[2,17]``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

INF = math.inf
SENSES = ("<=", "=", ">=")


class ModelError(ValueError):
    pass


@dataclass
class Variable:
    name: str
    lb: float = 0.0
    ub: float = INF
    integer: bool = False


@dataclass
class Constraint:
    name: str
    coeffs: dict[int, float]
    sense: str
    rhs: float


@dataclass
class ModelIR:
    variables: list[Variable] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)
    objective: dict[int, float] = field(default_factory=dict)
    name_index: dict[str, int] = field(default_factory=dict)
    row_index: dict[str, int] = field(default_factory=dict)
    objective_constant: float = 0.0
    meta: dict = field(default_factory=dict)

    # -- construction -----------------------------------------------------
    def add_var(self, name: str, lb: float = 0.0, ub: float = INF, integer: bool = False) -> int:
        if name in self.name_index:
            raise ModelError(f"duplicate variable name {name!r}")
        if lb > ub:
            raise ModelError(f"variable {name!r} has lb {lb} > ub {ub}")
        self.variables.append(Variable(name, float(lb), float(ub), bool(integer)))
        col = len(self.variables) - 1
        self.name_index[name] = col
        return col

    def add_constraint(self, name: str, coeffs: Mapping[int, float] | Iterable[tuple[int, float]],
                       sense: str, rhs: float) -> int:
        if sense not in SENSES:
            raise ModelError(f"unknown sense {sense!r} for row {name!r}")
        if name in self.row_index:
            raise ModelError(f"duplicate constraint name {name!r}")
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        merged: dict[int, float] = {}
        n = len(self.variables)
        for col, val in items:
            if not 0 <= col < n:
                raise ModelError(f"row {name!r} references unknown column {col}")
            merged[col] = merged.get(col, 0.0) + float(val)
        merged = {c: v for c, v in merged.items() if v != 0.0}
        self.constraints.append(Constraint(name, merged, sense, float(rhs)))
        self.row_index[name] = len(self.constraints) - 1
        return len(self.constraints) - 1

    def set_objective(self, coeffs: Mapping[int, float], constant: float = 0.0) -> None:
        self.objective = {c: float(v) for c, v in coeffs.items() if v != 0.0}
        self.objective_constant = float(constant)

    # -- queries ----------------------------------------------------------
    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_rows(self) -> int:
        return len(self.constraints)

    def col(self, name: str) -> int:
        return self.name_index[name]

    def var_name(self, col: int) -> str:
        return self.variables[col].name

    def integer_columns(self) -> np.ndarray:
        return np.array([i for i, v in enumerate(self.variables) if v.integer], dtype=int)

    def rows_matching(self, family: str) -> list[int]:
        """Row indices whose name is ``family[...]``."""
        prefix = family + "["
        return [i for i, c in enumerate(self.constraints) if c.name.startswith(prefix)]

    def cols_matching(self, family: str) -> list[int]:
        prefix = family + "["
        return [i for i, v in enumerate(self.variables) if v.name.startswith(prefix) or v.name == family]

    def validate(self) -> list[str]:
        problems = []
        for v in self.variables:
            if math.isnan(v.lb) or math.isnan(v.ub) or v.lb > v.ub:
                problems.append(f"bad bounds on {v.name}")
            if v.lb == INF or v.ub == -INF:
                problems.append(f"empty bound range on {v.name}")
        n = self.n_vars
        for c in self.constraints:
            if any(not 0 <= k < n for k in c.coeffs):
                problems.append(f"row {c.name} references a missing column")
            if not math.isfinite(c.rhs):
                problems.append(f"row {c.name} has non-finite rhs")
        return problems

    # -- array views ------------------------------------------------------
    def arrays(self):
        """Return ``(c, A, row_lo, row_hi, lb, ub, integrality)``; A is CSR."""
        m, n = self.n_rows, self.n_vars
        rows, cols, vals = [], [], []
        row_lo = np.empty(m)
        row_hi = np.empty(m)
        for i, con in enumerate(self.constraints):
            rows.extend([i] * len(con.coeffs))
            cols.extend(con.coeffs.keys())
            vals.extend(con.coeffs.values())
            if con.sense == "<=":
                row_lo[i], row_hi[i] = -INF, con.rhs
            elif con.sense == ">=":
                row_lo[i], row_hi[i] = con.rhs, INF
            else:
                row_lo[i] = row_hi[i] = con.rhs
        A = sp.csr_matrix((vals, (rows, cols)), shape=(m, n), dtype=float)
        c = np.zeros(n)
        for k, v in self.objective.items():
            c[k] = v
        lb = np.array([v.lb for v in self.variables], dtype=float)
        ub = np.array([v.ub for v in self.variables], dtype=float)
        integrality = np.array([v.integer for v in self.variables], dtype=bool)
        return c, A, row_lo, row_hi, lb, ub, integrality

    def activities(self, x) -> np.ndarray:
        _, A, *_ = self.arrays()
        return A @ np.asarray(x, dtype=float)

    def objective_value(self, x) -> float:
        return self.objective_constant + sum(v * x[k] for k, v in self.objective.items())

    def max_violation(self, x) -> float:
        """Largest bound or row violation of ``x`` (absolute)."""
        x = np.asarray(x, dtype=float)
        _, A, lo, hi, lb, ub, _ = self.arrays()
        act = A @ x
        parts = [np.zeros(1), lb - x, x - ub, lo - act, act - hi]
        return float(max(np.max(np.nan_to_num(p, nan=0.0, neginf=0.0)) for p in parts))

    def value(self, x, name: str) -> float:
        return float(x[self.name_index[name]])

    # -- text export ------------------------------------------------------
    def to_lp_text(self) -> str:
        """Serialise in CPLEX LP format."""
        names = [_lp_name(v.name) for v in self.variables]
        lines = ["\\ gridforge model", "Maximize", " obj: " + _lp_expr(self.objective, names, self.objective_constant)]
        lines.append("Subject To")
        op = {"<=": "<=", ">=": ">=", "=": "="}
        for con in self.constraints:
            expr = _lp_expr(con.coeffs, names) if con.coeffs else "0 " + names[0] if names else "0"
            lines.append(f" {_lp_name(con.name)}: {expr} {op[con.sense]} {_num(con.rhs)}")
        lines.append("Bounds")
        for v, nm in zip(self.variables, names):
            if v.lb == -INF and v.ub == INF:
                lines.append(f" {nm} free")
            elif v.lb == v.ub:
                lines.append(f" {nm} = {_num(v.lb)}")
            else:
                lo = "-inf" if v.lb == -INF else _num(v.lb)
                hi = "+inf" if v.ub == INF else _num(v.ub)
                lines.append(f" {lo} <= {nm} <= {hi}")
        ints = [nm for v, nm in zip(self.variables, names) if v.integer]
        if ints:
            lines.append("Binaries" if all(
                v.lb >= 0 and v.ub <= 1 for v in self.variables if v.integer) else "Generals")
            for k in range(0, len(ints), 8):
                lines.append(" " + " ".join(ints[k:k + 8]))
        lines.append("End")
        return "\n".join(lines) + "\n"

    def write_lp(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_lp_text())


_BAD = re.compile(r"[^A-Za-z0-9_!\"#$%&()/,.;?@'{}|~]")


def _lp_name(name: str) -> str:
    out = name.replace("[", "(").replace("]", ")")
    out = _BAD.sub("_", out)
    if out[0].isdigit() or out[0] in ".e":
        out = "_" + out
    return out


def _num(x: float) -> str:
    return repr(float(x))


def _lp_expr(coeffs: Mapping[int, float], names: list[str], constant: float = 0.0) -> str:
    parts = []
    for k, v in coeffs.items():
        sign = "-" if v < 0 else "+"
        parts.append(f"{sign} {_num(abs(v))} {names[k]}")
    if constant:
        parts.append(f"{'-' if constant < 0 else '+'} {_num(abs(constant))}")
    if not parts:
        return "0"
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text
