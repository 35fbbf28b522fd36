"""Explicit-state discrete-time Markov chains and their numerical solvers.

A :class:`Dtmc` stores its transition relation in compressed sparse row
form (one adjacency list per state, sorted by target).  Graph routines
work on boolean masks internally and exchange ``frozenset`` state sets at
the public surface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph
from scipy.sparse.linalg import spsolve

ROW_SUM_TOL = 1e-9
SOLVER_TOL = 1e-10
DENSE_LIMIT = 512


class DtmcError(Exception):
    pass


class RowSumError(DtmcError):
    def __init__(self, state: int, total: float):
        super().__init__(f"outgoing probabilities of state {state} sum to {total!r}, not 1")
        self.state = state
        self.total = total


class StateIndexError(DtmcError, IndexError):
    pass


class DuplicateEdgeError(DtmcError):
    pass


class NonPositiveProbabilityError(DtmcError):
    pass


class SolverDivergence(DtmcError):
    pass


class ZeroDenominator(DtmcError, ZeroDivisionError):
    pass


class Dtmc:
    """Validated, immutable DTMC.  Build through :func:`build_dtmc`."""

    __slots__ = ("state_count", "initial", "indptr", "targets", "probs", "labels", "_cache")

    def __init__(self, state_count, initial, indptr, targets, probs, labels):
        self.state_count = state_count
        self.initial = initial
        self.indptr = indptr
        self.targets = targets
        self.probs = probs
        self.labels = labels
        self._cache = {}

    def __repr__(self):
        return (f"Dtmc(states={self.state_count}, transitions={len(self.targets)}, "
                f"initial={self.initial}, labels={sorted(self.labels)})")

    @property
    def transition_count(self) -> int:
        return len(self.targets)

    def successors(self, state: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.indptr[state], self.indptr[state + 1]
        return self.targets[lo:hi], self.probs[lo:hi]

    def transitions(self):
        """Yield ``(source, target, probability)`` in row-major order."""
        for s in range(self.state_count):
            lo, hi = self.indptr[s], self.indptr[s + 1]
            for t, p in zip(self.targets[lo:hi].tolist(), self.probs[lo:hi].tolist()):
                yield s, t, p

    def matrix(self) -> sp.csr_matrix:
        m = self._cache.get("matrix")
        if m is None:
            n = self.state_count
            m = sp.csr_matrix((self.probs, self.targets, self.indptr), shape=(n, n))
            self._cache["matrix"] = m
        return m

    def label(self, name: str) -> frozenset:
        return self.labels[name]

    def mask(self, states) -> np.ndarray:
        """Boolean indicator of ``states`` (a set, mask, or ``None`` for all)."""
        if states is None:
            return np.ones(self.state_count, dtype=bool)
        if isinstance(states, np.ndarray) and states.dtype == bool:
            if states.shape != (self.state_count,):
                raise StateIndexError("mask length does not match state count")
            return states
        out = np.zeros(self.state_count, dtype=bool)
        idx = np.fromiter(states, dtype=np.int64)
        if idx.size:
            if idx.min() < 0 or idx.max() >= self.state_count:
                raise StateIndexError(f"state set contains an index outside [0, {self.state_count})")
            out[idx] = True
        return out

    def with_labels(self, extra: Mapping[str, Iterable[int]]) -> "Dtmc":
        labels = dict(self.labels)
        for name, states in extra.items():
            labels[name] = _checked_label(name, states, self.state_count)
        return Dtmc(self.state_count, self.initial, self.indptr, self.targets, self.probs, labels)


def _checked_label(name, states, n) -> frozenset:
    if not name:
        raise DtmcError("label names must be nonempty")
    s = frozenset(int(i) for i in states)
    for i in s:
        if not 0 <= i < n:
            raise StateIndexError(f"label {name!r} refers to state {i} outside [0, {n})")
    return s


def build_dtmc(state_count: int, initial: int, transitions, labels: Mapping[str, Iterable[int]] | None = None) -> Dtmc:
    """Validate and freeze a DTMC.

    ``transitions`` is an iterable of ``(source, target, probability)``
    triples or a triple of equally long arrays.  Rows are checked against
    ``ROW_SUM_TOL`` but never rescaled.
    """
    if int(state_count) != state_count or state_count < 1:
        raise DtmcError("state_count must be a positive integer")
    n = int(state_count)
    if not 0 <= initial < n:
        raise StateIndexError(f"initial state {initial} outside [0, {n})")

    if isinstance(transitions, tuple) and len(transitions) == 3 \
            and all(isinstance(a, np.ndarray) for a in transitions):
        src, dst, prob = transitions
    else:
        triples = list(transitions)
        src = np.array([t[0] for t in triples], dtype=np.int64)
        dst = np.array([t[1] for t in triples], dtype=np.int64)
        prob = np.array([t[2] for t in triples], dtype=float)
    src = src.astype(np.int64, copy=False)
    dst = dst.astype(np.int64, copy=False)
    prob = prob.astype(float, copy=False)

    if src.size:
        bad = (src < 0) | (src >= n) | (dst < 0) | (dst >= n)
        if bad.any():
            k = int(np.argmax(bad))
            raise StateIndexError(f"transition ({src[k]}, {dst[k]}) has an index outside [0, {n})")
        bad = ~(prob > 0.0) | (prob > 1.0 + ROW_SUM_TOL)
        if bad.any():
            k = int(np.argmax(bad))
            raise NonPositiveProbabilityError(
                f"transition ({src[k]}, {dst[k]}) has probability {prob[k]!r} outside (0, 1]")

    order = np.lexsort((dst, src))
    src, dst, prob = src[order], dst[order], prob[order]
    if src.size > 1:
        dup = (src[1:] == src[:-1]) & (dst[1:] == dst[:-1])
        if dup.any():
            k = int(np.argmax(dup))
            raise DuplicateEdgeError(f"transition ({src[k]}, {dst[k]}) appears more than once")

    sums = np.bincount(src, weights=prob, minlength=n)
    off = np.abs(sums - 1.0) > ROW_SUM_TOL
    if off.any():
        k = int(np.argmax(off))
        raise RowSumError(k, float(sums[k]))

    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    for a in (indptr, dst, prob):
        a.setflags(write=False)
    labels = {name: _checked_label(name, states, n) for name, states in (labels or {}).items()}
    return Dtmc(n, int(initial), indptr, dst, prob, labels)


# ---------------------------------------------------------------------------
# graph analysis


def _reverse_graph(d: Dtmc) -> sp.csr_matrix:
    r = d._cache.get("reverse")
    if r is None:
        r = d.matrix().T.tocsr()
        d._cache["reverse"] = r
    return r


def _reach_from(graph: sp.csr_matrix, seeds: np.ndarray, allowed: np.ndarray | None = None) -> np.ndarray:
    """States reachable from ``seeds`` in ``graph`` expanding only ``allowed`` nodes.

    Seeds are always included; a non-seed node is entered only when it is
    allowed.  Implemented as a single BFS from a virtual source.
    """
    n = graph.shape[0]
    if not seeds.any():
        return np.zeros(n, dtype=bool)
    g = graph.tocoo()
    keep = np.ones(g.nnz, dtype=bool) if allowed is None else allowed[g.col]
    rows = np.concatenate([g.row[keep], np.full(int(seeds.sum()), n)])
    cols = np.concatenate([g.col[keep], np.flatnonzero(seeds)])
    aug = sp.csr_matrix((np.ones(rows.size, dtype=np.int8), (rows, cols)), shape=(n + 1, n + 1))
    order = csgraph.breadth_first_order(aug, n, directed=True, return_predecessors=False)
    out = np.zeros(n + 1, dtype=bool)
    out[order] = True
    return out[:n]


def reachable(d: Dtmc, start: int) -> frozenset:
    """Forward-reachable states of ``start`` (including ``start``)."""
    return frozenset(np.flatnonzero(_reachable_mask(d, start)).tolist())


def _reachable_mask(d: Dtmc, start: int) -> np.ndarray:
    if not 0 <= start < d.state_count:
        raise StateIndexError(f"state {start} outside [0, {d.state_count})")
    seeds = np.zeros(d.state_count, dtype=bool)
    seeds[start] = True
    return _reach_from(d.matrix(), seeds)


@dataclass(frozen=True)
class BsccDecomposition:
    components: tuple[frozenset, ...]
    membership: np.ndarray = field(repr=False)  # component index per state, -1 for transient

    def component_of(self, state: int) -> int | None:
        c = int(self.membership[state])
        return None if c < 0 else c

    @property
    def transient(self) -> frozenset:
        return frozenset(np.flatnonzero(self.membership < 0).tolist())


def bsccs(d: Dtmc) -> BsccDecomposition:
    cached = d._cache.get("bsccs")
    if cached is not None:
        return cached
    _, comp = csgraph.connected_components(d.matrix(), directed=True, connection="strong")
    src = np.repeat(np.arange(d.state_count), np.diff(d.indptr))
    leaving = comp[src] != comp[d.targets]
    open_comps = np.unique(comp[src[leaving]])
    bottom = np.ones(comp.max() + 1, dtype=bool)
    bottom[open_comps] = False

    membership = np.full(d.state_count, -1, dtype=np.int64)
    components = []
    # number components by their smallest member for a stable order
    for s in range(d.state_count):
        c = comp[s]
        if bottom[c] and membership[s] < 0:
            members = np.flatnonzero(comp == c)
            membership[members] = len(components)
            components.append(frozenset(members.tolist()))
    membership.setflags(write=False)
    result = BsccDecomposition(tuple(components), membership)
    d._cache["bsccs"] = result
    return result


def prob0_until(d: Dtmc, phi=None, psi=()) -> np.ndarray:
    """Mask of states where ``phi U psi`` holds with probability 0."""
    phi_m, psi_m = d.mask(phi), d.mask(psi)
    return ~_reach_from(_reverse_graph(d), psi_m, phi_m & ~psi_m)


def prob1_until(d: Dtmc, phi=None, psi=(), no: np.ndarray | None = None) -> np.ndarray:
    """Mask of states where ``phi U psi`` holds with probability 1 (graph-only)."""
    phi_m, psi_m = d.mask(phi), d.mask(psi)
    if no is None:
        no = prob0_until(d, phi_m, psi_m)
    return ~_reach_from(_reverse_graph(d), no, phi_m & ~psi_m)


def prob1_reach(d: Dtmc, target) -> frozenset:
    """States from which ``target`` is reached almost surely."""
    return frozenset(np.flatnonzero(prob1_until(d, None, target)).tolist())


# ---------------------------------------------------------------------------
# numerical solvers


def iteration_cap(unknowns: int, tol: float = SOLVER_TOL) -> int:
    return 10 * max(unknowns, 1) * math.ceil(math.log10(1.0 / tol))


def gauss_seidel(a: sp.csr_matrix, b: np.ndarray, tol: float = SOLVER_TOL, x0=None) -> np.ndarray:
    """Solve ``x = a @ x + b`` by Gauss-Seidel sweeps.

    Converges for the substochastic systems produced by the until
    precomputation.  Raises :class:`SolverDivergence` at the iteration cap.
    """
    a = a.tocsr()
    n = a.shape[0]
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    indptr, indices, data = a.indptr, a.indices.tolist(), a.data.tolist()
    bl = b.tolist()
    xl = x.tolist()
    diag = a.diagonal().tolist()
    for _ in range(iteration_cap(n, tol)):
        delta = 0.0
        for i in range(n):
            acc = bl[i]
            for k in range(indptr[i], indptr[i + 1]):
                j = indices[k]
                if j != i:
                    acc += data[k] * xl[j]
            new = acc / (1.0 - diag[i])
            delta = max(delta, abs(new - xl[i]))
            xl[i] = new
        if delta < tol:
            return np.array(xl)
    raise SolverDivergence(f"Gauss-Seidel did not reach tolerance {tol} on {n} unknowns")


def _solve_fixpoint(a: sp.csr_matrix, b: np.ndarray, method: str) -> np.ndarray:
    n = a.shape[0]
    if n == 0:
        return np.zeros(0)
    if method == "gauss-seidel":
        return gauss_seidel(a, b)
    if method not in ("auto", "direct"):
        raise ValueError(f"unknown solver method {method!r}")
    if n < DENSE_LIMIT:
        return np.linalg.solve(np.eye(n) - a.toarray(), b)
    return np.atleast_1d(spsolve((sp.identity(n, format="csc") - a).tocsc(), b))


def prob_next(d: Dtmc, target) -> np.ndarray:
    return d.matrix() @ d.mask(target).astype(float)


def prob_until(d: Dtmc, phi, psi, method: str = "auto") -> np.ndarray:
    """Per-state probability of ``phi U psi``; ``phi=None`` means ``true``."""
    phi_m, psi_m = d.mask(phi), d.mask(psi)
    no = prob0_until(d, phi_m, psi_m)
    yes = prob1_until(d, phi_m, psi_m, no)
    maybe = ~(no | yes)
    x = yes.astype(float)
    if maybe.any():
        p = d.matrix()
        rows = p[maybe]
        a = rows[:, maybe]
        b = rows[:, yes] @ np.ones(int(yes.sum()))
        x[maybe] = _solve_fixpoint(a, b, method)
    np.clip(x, 0.0, 1.0, out=x)
    x[no] = 0.0
    x[yes] = 1.0
    return x


def prob_bounded_until(d: Dtmc, phi, psi, t: int) -> np.ndarray:
    if t < 0:
        raise ValueError("step bound must be nonnegative")
    phi_m, psi_m = d.mask(phi), d.mask(psi)
    go = phi_m & ~psi_m
    base = psi_m.astype(float)
    p = d.matrix()
    x = base.copy()
    for _ in range(t):
        x = base + np.where(go, p @ x, 0.0)
    return x


def prob_fg(d: Dtmc, a) -> np.ndarray:
    """Probability of eventually staying in ``a`` forever."""
    a_m = d.mask(a)
    dec = bsccs(d)
    inside = np.zeros(d.state_count, dtype=bool)
    for comp in dec.components:
        members = np.fromiter(comp, dtype=np.int64)
        if a_m[members].all():
            inside[members] = True
    return prob_until(d, None, inside)


def stationary(p: sp.csr_matrix, method: str = "auto", tol: float = SOLVER_TOL) -> np.ndarray:
    """Stationary vector of an irreducible stochastic matrix."""
    n = p.shape[0]
    if n == 1:
        return np.ones(1)
    if method == "power":
        # lazy chain (P + I) / 2 is aperiodic with the same stationary vector
        lazy = (0.5 * (p + sp.identity(n, format="csr"))).T.tocsr()
        x = np.full(n, 1.0 / n)
        for _ in range(iteration_cap(n, tol)):
            nxt = lazy @ x
            nxt /= nxt.sum()
            if np.max(np.abs(nxt - x)) < tol:
                return nxt
            x = nxt
        raise SolverDivergence(f"power iteration did not reach tolerance {tol} on {n} states")
    if method not in ("auto", "direct"):
        raise ValueError(f"unknown solver method {method!r}")
    # pin x[0] = 1 and drop its balance equation; keeps the system sparse
    a = (p.T - sp.identity(n, format="csr")).tocsc()
    sub = a[1:, 1:]
    rhs = -a[1:, 0].toarray().ravel()
    if n < DENSE_LIMIT:
        rest = np.linalg.solve(sub.toarray(), rhs)
    else:
        rest = np.atleast_1d(spsolve(sub, rhs))
    x = np.clip(np.concatenate(([1.0], rest)), 0.0, None)
    return x / x.sum()


def _component_stationaries(d: Dtmc, method: str) -> list[tuple[np.ndarray, np.ndarray]]:
    key = ("stationaries", method)
    cached = d._cache.get(key)
    if cached is None:
        p = d.matrix()
        cached = []
        for comp in bsccs(d).components:
            members = np.array(sorted(comp), dtype=np.int64)
            sub = p[members][:, members]
            cached.append((members, stationary(sub, method)))
        d._cache[key] = cached
    return cached


def steady_state(d: Dtmc, method: str = "auto") -> np.ndarray:
    """Long-run (Cesaro) distribution starting from the initial state."""
    dec = bsccs(d)
    pi = np.zeros(d.state_count)
    home = dec.component_of(d.initial)
    for k, (members, vec) in enumerate(_component_stationaries(d, method)):
        if home is not None:
            weight = 1.0 if k == home else 0.0
        else:
            weight = prob_until(d, None, members_mask(d, members))[d.initial]
        if weight > 0.0:
            pi[members] += weight * vec
    return pi


def steady_state_mass(d: Dtmc, target, method: str = "auto") -> np.ndarray:
    """Per-state long-run fraction of time spent in ``target``."""
    t_m = d.mask(target)
    dec = bsccs(d)
    out = np.zeros(d.state_count)
    for members, vec in _component_stationaries(d, method):
        mass = float(vec[t_m[members]].sum())
        if mass == 0.0:
            continue
        if len(dec.components) == 1:
            reach = np.ones(d.state_count)
        else:
            reach = prob_until(d, None, members_mask(d, members))
        out += mass * reach
    return np.clip(out, 0.0, 1.0)


def members_mask(d: Dtmc, members) -> np.ndarray:
    m = np.zeros(d.state_count, dtype=bool)
    m[np.asarray(list(members) if isinstance(members, (set, frozenset)) else members, dtype=np.int64)] = True
    return m


# ---------------------------------------------------------------------------
# rewards


@dataclass(frozen=True)
class RewardStructure:
    """Nonnegative per-state weights; states not listed carry 0."""

    name: str
    rewards: Mapping[int, float]

    def __post_init__(self):
        for s, v in self.rewards.items():
            if not v >= 0.0:
                raise ValueError(f"reward {self.name!r} of state {s} is negative: {v!r}")

    def vector(self, state_count: int) -> np.ndarray:
        out = np.zeros(state_count)
        for s, v in self.rewards.items():
            if not 0 <= s < state_count:
                raise StateIndexError(f"reward {self.name!r} refers to state {s} outside [0, {state_count})")
            out[s] = v
        return out

    def scaled(self, factor: float) -> "RewardStructure":
        return RewardStructure(self.name, {s: v * factor for s, v in self.rewards.items()})


def long_run_ratio(d: Dtmc, numerator: RewardStructure, denominator: RewardStructure,
                   method: str = "auto") -> float:
    pi = steady_state(d, method)
    num = float(pi @ numerator.vector(d.state_count))
    den = float(pi @ denominator.vector(d.state_count))
    if den <= 0.0:
        raise ZeroDenominator(f"long-run mass of reward {denominator.name!r} is zero")
    return num / den
