"""Recursive PCTL model checking over a :class:`~fujimi_mc.dtmc.Dtmc`."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import dtmc as core
from .dtmc import Dtmc, DtmcError
from .formula import (And, Atom, Bound, BoundedUntil, Eventually, EventuallyGlobally, ForAllGlobally,
                      Globally, Next, Not, ProbOp, SteadyOp, TrueF, Until, parse_formula)

BOUNDARY_TOL = 1e-9


class UnknownLabel(DtmcError, KeyError):
    def __str__(self):
        return self.args[0]


@dataclass(frozen=True)
class Verdict:
    holds: bool
    counterexample: int | None = None

    def __bool__(self):
        return self.holds


@dataclass(frozen=True)
class Value:
    value: float


@dataclass(frozen=True)
class Vector:
    values: np.ndarray


QueryResult = Verdict | Value | Vector


def _compare(values: np.ndarray, b: Bound) -> np.ndarray:
    if b.op == ">=":
        return values >= b.p - BOUNDARY_TOL
    if b.op == ">":
        return values > b.p + BOUNDARY_TOL
    if b.op == "<=":
        return values <= b.p + BOUNDARY_TOL
    return values < b.p - BOUNDARY_TOL


class Checker:
    """Evaluates formulas against one model, caching satisfaction sets."""

    def __init__(self, d: Dtmc, method: str = "auto"):
        self.d = d
        self.method = method
        self._sat: dict = {}

    # -- satisfaction sets (boolean masks) ----------------------------------

    def sat(self, f) -> np.ndarray:
        hit = self._sat.get(f)
        if hit is None:
            hit = self._sat_uncached(f)
            hit.setflags(write=False)
            self._sat[f] = hit
        return hit

    def _sat_uncached(self, f) -> np.ndarray:
        d = self.d
        if isinstance(f, TrueF):
            return np.ones(d.state_count, dtype=bool)
        if isinstance(f, Atom):
            if f.name not in d.labels:
                raise UnknownLabel(f"label {f.name!r} is not defined in the model")
            return d.mask(d.labels[f.name])
        if isinstance(f, Not):
            return ~self.sat(f.arg)
        if isinstance(f, And):
            return self.sat(f.left) & self.sat(f.right)
        if isinstance(f, ForAllGlobally):
            bad = ~self.sat(f.arg)
            # states all of whose reachable states satisfy arg
            can_reach_bad = core._reach_from(core._reverse_graph(d), bad)
            return ~can_reach_bad
        if isinstance(f, ProbOp):
            if f.bound.is_query:
                raise TypeError("a =? query is not a state formula; use check()")
            qual = self._qualitative(f.bound, f.path)
            if qual is not None:
                return qual
            return _compare(self.path_values(f.path), f.bound)
        if isinstance(f, SteadyOp):
            if f.bound.is_query:
                raise TypeError("a =? query is not a state formula; use check()")
            return _compare(core.steady_state_mass(d, self.sat(f.arg), self.method), f.bound)
        raise TypeError(f"not a state formula: {f!r}")

    # -- path probabilities -------------------------------------------------

    def path_values(self, path) -> np.ndarray:
        d, m = self.d, self.method
        if isinstance(path, Next):
            return core.prob_next(d, self.sat(path.arg))
        if isinstance(path, Until):
            return core.prob_until(d, self.sat(path.left), self.sat(path.right), m)
        if isinstance(path, BoundedUntil):
            return core.prob_bounded_until(d, self.sat(path.left), self.sat(path.right), path.steps)
        if isinstance(path, Eventually):
            return core.prob_until(d, None, self.sat(path.arg), m)
        if isinstance(path, Globally):
            return 1.0 - core.prob_until(d, None, ~self.sat(path.arg), m)
        if isinstance(path, EventuallyGlobally):
            return core.prob_fg(d, self.sat(path.arg))
        raise TypeError(f"not a path formula: {path!r}")

    def _prob_extremes(self, path) -> tuple[np.ndarray, np.ndarray]:
        """Masks of states where ``path`` has probability exactly 0 and exactly 1."""
        d = self.d
        if isinstance(path, Next):
            target = self.sat(path.arg)
            src = np.repeat(np.arange(d.state_count), np.diff(d.indptr))
            hits = np.bincount(src, weights=target[d.targets], minlength=d.state_count)
            degree = np.diff(d.indptr)
            return hits == 0, hits == degree
        if isinstance(path, (Until, Eventually)):
            phi = self.sat(path.left) if isinstance(path, Until) else None
            psi = self.sat(path.right) if isinstance(path, Until) else self.sat(path.arg)
            no = core.prob0_until(d, phi, psi)
            return no, core.prob1_until(d, phi, psi, no)
        if isinstance(path, BoundedUntil):
            return _bounded_extremes(d, self.sat(path.left), self.sat(path.right), path.steps)
        if isinstance(path, Globally):
            bad = ~self.sat(path.arg)
            no_f = core.prob0_until(d, None, bad)
            one_f = core.prob1_until(d, None, bad, no_f)
            return one_f, no_f
        if isinstance(path, EventuallyGlobally):
            a = self.sat(path.arg)
            inside = np.zeros(d.state_count, dtype=bool)
            for comp in core.bsccs(d).components:
                members = np.fromiter(comp, dtype=np.int64)
                if a[members].all():
                    inside[members] = True
            no = core.prob0_until(d, None, inside)
            return no, core.prob1_until(d, None, inside, no)
        raise TypeError(f"not a path formula: {path!r}")

    def _qualitative(self, b: Bound, path) -> np.ndarray | None:
        """Thresholds 0 and 1 decided by graph analysis alone."""
        if (b.op, b.p) in ((">=", 1.0), ("<=", 0.0), (">", 0.0), ("<", 1.0)):
            zero, one = self._prob_extremes(path)
            return {">=": one, "<=": zero, ">": ~zero, "<": ~one}[b.op]
        if (b.op, b.p) in ((">=", 0.0), ("<=", 1.0)):
            return np.ones(self.d.state_count, dtype=bool)
        if (b.op, b.p) in ((">", 1.0), ("<", 0.0)):
            return np.zeros(self.d.state_count, dtype=bool)
        return None

    # -- top level ----------------------------------------------------------

    def check(self, f, vector: bool = False) -> QueryResult:
        d = self.d
        if isinstance(f, ProbOp) and f.bound.is_query:
            v = self.path_values(f.path)
            return Vector(v) if vector else Value(float(v[d.initial]))
        if isinstance(f, SteadyOp) and f.bound.is_query:
            arg = self.sat(f.arg)
            if vector:
                return Vector(core.steady_state_mass(d, arg, self.method))
            return Value(float(core.steady_state(d, self.method)[arg].sum()))
        sat = self.sat(f)
        if vector:
            return Vector(sat.astype(float))
        if sat[d.initial]:
            return Verdict(True)
        if isinstance(f, ForAllGlobally):
            return Verdict(False, _nearest(d, ~self.sat(f.arg)))
        return Verdict(False, d.initial)


def _bounded_extremes(d: Dtmc, phi, psi, t):
    """Exact prob-0 / prob-1 masks for bounded until by boolean iteration."""
    src = np.repeat(np.arange(d.state_count), np.diff(d.indptr))
    degree = np.diff(d.indptr)
    go = phi & ~psi
    some = psi.copy()   # probability > 0 within k steps
    every = psi.copy()  # probability 1 within k steps
    for _ in range(t):
        any_succ = np.bincount(src, weights=some[d.targets], minlength=d.state_count) > 0
        all_succ = np.bincount(src, weights=every[d.targets], minlength=d.state_count) == degree
        some = psi | (go & any_succ)
        every = psi | (go & all_succ)
    return ~some, every


def _nearest(d: Dtmc, bad: np.ndarray) -> int | None:
    """Breadth-first nearest ``bad`` state reachable from the initial state."""
    seen = {d.initial}
    queue = deque([d.initial])
    while queue:
        s = queue.popleft()
        if bad[s]:
            return s
        for t in d.successors(s)[0].tolist():
            if t not in seen:
                seen.add(t)
                queue.append(t)
    return None


def check(d: Dtmc, f, vector: bool = False, method: str = "auto") -> QueryResult:
    if isinstance(f, str):
        f = parse_formula(f)
    return Checker(d, method).check(f, vector)


def sat_set(d: Dtmc, f) -> frozenset:
    if isinstance(f, str):
        f = parse_formula(f)
    return frozenset(np.flatnonzero(Checker(d).sat(f)).tolist())
