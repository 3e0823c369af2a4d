"""Rate-region inequality systems: construction, LP feasibility, projection.

Variables are named ``R:<s>`` (message rate) and ``r:<s>`` (coset rate),
both in bits per channel letter.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import linprog

from .access import AccessStructure, SortedFamily
from .errors import InputError
from .prob import FiniteDist, LetterModel, conditional_entropy, yf, zf

DELTA = 1e-9
RELATIONS = ("<=", "<", ">=", ">")


def Rv(s: str) -> str:
    return f"R:{s}"


def rv(s: str) -> str:
    return f"r:{s}"


def nonempty_subsets(items: Iterable) -> list[frozenset]:
    items = sorted(items)
    return [frozenset(c) for k in range(1, len(items) + 1) for c in itertools.combinations(items, k)]


@dataclass(frozen=True)
class Inequality:
    coeffs: tuple[float, ...]
    rel: str
    bound: float
    label: str = ""

    def __post_init__(self):
        if self.rel not in RELATIONS:
            raise InputError(f"unknown relation {self.rel!r}")

    @property
    def strict(self) -> bool:
        return self.rel in ("<", ">")

    def upper_form(self) -> tuple[np.ndarray, float, bool]:
        """(a, b, strict) with the row read as a.x <= b (or < b)."""
        a = np.asarray(self.coeffs, dtype=float)
        if self.rel in (">=", ">"):
            return -a, -self.bound, self.strict
        return a, self.bound, self.strict

    def slack(self, x: np.ndarray) -> float:
        a, b, _ = self.upper_form()
        return float(b - a @ x)


@dataclass(frozen=True)
class LinearSystem:
    variables: tuple[str, ...]
    rows: tuple[Inequality, ...]

    def __post_init__(self):
        for row in self.rows:
            if len(row.coeffs) != len(self.variables):
                raise InputError(f"row {row.label!r} has {len(row.coeffs)} coefficients "
                                 f"for {len(self.variables)} variables")

    def __len__(self) -> int:
        return len(self.rows)

    def vector(self, point: Mapping[str, float]) -> np.ndarray:
        try:
            return np.array([point[v] for v in self.variables], dtype=float)
        except KeyError as e:
            raise InputError(f"point lacks variable {e.args[0]}") from None

    def satisfied(self, point: Mapping[str, float], tol: float = 0.0) -> bool:
        """Exact check; strict rows need positive slack, others slack >= -tol."""
        x = self.vector(point)
        for row in self.rows:
            s = row.slack(x)
            if (row.strict and not s > 0) or (not row.strict and s < -tol):
                return False
        return True


def source_entropies(joint: FiniteDist, a: AccessStructure, sf: SortedFamily) -> dict:
    """H(Z_S' | Z_upper) keyed by (group index, S') over nonempty S' inside each group."""
    out = {}
    for k, (own, up) in enumerate(zip(sf.group_messages, sf.upper_closure)):
        for sub in nonempty_subsets(own):
            out[(k, sub)] = conditional_entropy(joint, a.sort_messages(sub), a.sort_messages(up))
    return out


def channel_entropies(model: LetterModel, a: AccessStructure) -> dict:
    """H(Z_D' | Y_j, Z_{D(j) minus D'}) keyed by (decoder, D')."""
    out = {}
    for j in a.decoder_ids:
        dj = a.demands[j]
        for sub in nonempty_subsets(dj):
            rest = a.sort_messages(dj - sub)
            out[(j, sub)] = conditional_entropy(
                model.joint, [zf(s) for s in a.sort_messages(sub)], [yf(j)] + [zf(s) for s in rest])
    return out


def build_constraints(a: AccessStructure, sf: SortedFamily, src_h: Mapping, ch_h: Mapping,
                      strict: bool = True) -> LinearSystem:
    variables = tuple(Rv(s) for s in a.message_ids) + tuple(rv(s) for s in a.message_ids)
    pos = {v: i for i, v in enumerate(variables)}
    rows = []

    def coeffs(entries):
        c = [0.0] * len(variables)
        for v in entries:
            c[pos[v]] = 1.0
        return tuple(c)

    for s in a.message_ids:
        rows.append(Inequality(coeffs([Rv(s)]), ">=", 0.0, f"R[{s}] >= 0"))
    for k, own in enumerate(sf.group_messages):
        for sub in nonempty_subsets(own):
            if (k, sub) not in src_h:
                raise InputError(f"missing source entropy for group {k}, messages {sorted(sub)}")
            ms = a.sort_messages(sub)
            rows.append(Inequality(coeffs([Rv(s) for s in ms] + [rv(s) for s in ms]),
                                   "<" if strict else "<=", float(src_h[(k, sub)]),
                                   f"group {k} {{{','.join(ms)}}}"))
    for j in a.decoder_ids:
        for sub in nonempty_subsets(a.demands[j]):
            if (j, sub) not in ch_h:
                raise InputError(f"missing channel entropy for decoder {j}, messages {sorted(sub)}")
            ms = a.sort_messages(sub)
            rows.append(Inequality(coeffs([rv(s) for s in ms]), ">" if strict else ">=",
                                   float(ch_h[(j, sub)]), f"decoder {j} {{{','.join(ms)}}}"))
    return LinearSystem(variables, tuple(rows))


@dataclass(frozen=True)
class LPResult:
    feasible: bool
    assignment: Mapping[str, float]
    margin: float

    def __bool__(self) -> bool:
        return self.feasible


def lp_feasible(system: LinearSystem, fixed: Mapping[str, float], delta: float = DELTA) -> LPResult:
    """Find values for the unfixed variables satisfying every row.

    Strict rows are tightened by ``delta``; the LP maximizes a common slack so
    the returned point sits inside the feasible set when it has interior.
    The answer is certified by substituting back into every row.
    """
    free = [v for v in system.variables if v not in fixed]
    fx = np.array([fixed.get(v, 0.0) for v in system.variables], dtype=float)
    fidx = [system.variables.index(v) for v in free]
    A, b, fixed_only = [], [], []
    for row in system.rows:
        a, bound, strict = row.upper_form()
        af = a[fidx]
        rhs = bound - a @ fx - (delta if strict else 0.0)
        if np.abs(af).max(initial=0.0) == 0.0:
            fixed_only.append(rhs)
            continue
        A.append(af)
        b.append(rhs)
    if any(v < -1e-12 for v in fixed_only):
        return LPResult(False, {}, float(min(fixed_only)))
    if not free:
        return LPResult(True, {}, float(min(fixed_only, default=np.inf)))
    A, b = np.array(A).reshape(len(A), len(free)), np.array(b)
    # maximize t subject to A r + t <= b, t <= 1
    c = np.zeros(len(free) + 1)
    c[-1] = -1.0
    A_ub = np.hstack([A, np.ones((len(A), 1))]) if len(A) else None
    res = linprog(c, A_ub=A_ub, b_ub=b if len(A) else None,
                  bounds=[(None, None)] * len(free) + [(None, 1.0)], method="highs")
    if res.status != 0 or res.x is None:
        return LPResult(False, {}, -np.inf)
    r = res.x[:-1]
    x = fx.copy()
    x[fidx] = r
    slacks = [row.slack(x) for row in system.rows]
    ok = all(s >= (delta / 2 if row.strict else -1e-12) for s, row in zip(slacks, system.rows))
    assignment = {v: float(x[i]) for v, i in zip(free, fidx)}
    return LPResult(ok, assignment if ok else {}, float(res.x[-1]))


def _dominance_prune(rows: list[tuple[np.ndarray, float, bool]], tol: float = 1e-12):
    """Among rows with proportional coefficients keep the tightest bound."""
    best: dict[tuple, tuple[np.ndarray, float, bool]] = {}
    for a, b, strict in rows:
        scale = np.abs(a).max()
        if scale <= tol:
            continue
        an, bn = a / scale, b / scale
        key = tuple(np.round(an, 12))
        prev = best.get(key)
        if prev is None or bn < prev[1] - tol or (abs(bn - prev[1]) <= tol and strict and not prev[2]):
            best[key] = (an, bn, strict)
    return list(best.values())


def fourier_motzkin_project(system: LinearSystem, eliminate: Iterable[str]) -> LinearSystem:
    """Project onto the variables not in ``eliminate`` by pairwise combination."""
    requested = set(eliminate)
    unknown = requested - set(system.variables)
    if unknown:
        raise InputError(f"cannot eliminate unknown variables {sorted(unknown)}")
    eliminate = [v for v in system.variables if v in requested]
    rows = [r.upper_form() for r in system.rows]
    contradictions = []
    for v in eliminate:
        i = system.variables.index(v)
        pos = [r for r in rows if r[0][i] > 0]
        neg = [r for r in rows if r[0][i] < 0]
        new = [r for r in rows if r[0][i] == 0]
        for (ap, bp, sp), (an, bn, sn) in itertools.product(pos, neg):
            wp, wn = 1.0 / ap[i], -1.0 / an[i]
            a = ap * wp + an * wn
            a[i] = 0.0
            new.append((a, bp * wp + bn * wn, sp or sn))
        trivial = [r for r in new if np.abs(r[0]).max(initial=0.0) <= 1e-12]
        contradictions += [r for r in trivial if r[1] < 0 or (r[2] and r[1] <= 0)]
        rows = _dominance_prune([r for r in new if np.abs(r[0]).max(initial=0.0) > 1e-12])
    keep = [k for k, v in enumerate(system.variables) if v not in set(eliminate)]
    out = []
    for a, b, strict in rows:
        out.append(Inequality(tuple(float(x) + 0.0 for x in a[keep]), "<" if strict else "<=", float(b) + 0.0))
    for a, b, strict in contradictions:
        out.append(Inequality((0.0,) * len(keep), "<" if strict else "<=", float(b), "infeasible"))
    return LinearSystem(tuple(system.variables[k] for k in keep), tuple(out))


def describe(row: Inequality, variables: Sequence[str]) -> str:
    terms = [f"{c:+g}*{v}" for c, v in zip(row.coeffs, variables) if c != 0]
    return f"{' '.join(terms) or '0'} {row.rel} {row.bound + 0.0:.12g}"
