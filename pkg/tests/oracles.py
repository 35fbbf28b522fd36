"""Independent reference implementations used as test oracles.

Nothing here imports the package under test: chains are plain dicts of
exact ``Fraction`` probabilities and every routine is a textbook
brute-force method.
"""

from __future__ import annotations

from collections import deque
from fractions import Fraction

F = Fraction


def chain(rows: dict) -> dict:
    """Normalise ``{s: {t: prob}}`` with string/int/Fraction probabilities to Fractions."""
    return {s: {t: F(p) for t, p in succ.items()} for s, succ in rows.items()}


def triples(ch: dict):
    return [(s, t, float(p)) for s, succ in ch.items() for t, p in succ.items()]


# -- path enumeration ---------------------------------------------------------

def enumerate_bounded_until(ch, phi, psi, start, depth) -> Fraction:
    """Exact probability of phi U<=depth psi by expanding every path."""
    total = F(0)
    stack = [(start, F(1), 0)]
    while stack:
        s, mass, k = stack.pop()
        if s in psi:
            total += mass
            continue
        if k == depth or s not in phi:
            continue
        for t, p in ch[s].items():
            stack.append((t, mass * p, k + 1))
    return total


def enumerate_until_bracket(ch, phi, psi, start, depth):
    """(lower, upper) bounds on phi U psi from all paths up to ``depth``.

    Lower: mass of paths that already satisfied the until; upper adds the
    mass of paths still undecided at the horizon.
    """
    done = F(0)
    open_mass = F(0)
    stack = [(start, F(1), 0)]
    while stack:
        s, mass, k = stack.pop()
        if s in psi:
            done += mass
        elif s not in phi:
            continue
        elif k == depth:
            open_mass += mass
        else:
            for t, p in ch[s].items():
                stack.append((t, mass * p, k + 1))
    return done, done + open_mass


# -- exact linear algebra ------------------------------------------------------

def solve_exact(a, b):
    """Gauss-Jordan elimination over Fractions for a square nonsingular system."""
    n = len(a)
    m = [list(row) + [rhs] for row, rhs in zip(a, b)]
    for col in range(n):
        piv = next(r for r in range(col, n) if m[r][col] != 0)
        m[col], m[piv] = m[piv], m[col]
        pv = m[col][col]
        m[col] = [x / pv for x in m[col]]
        for r in range(n):
            if r != col and m[r][col] != 0:
                f = m[r][col]
                m[r] = [x - f * y for x, y in zip(m[r], m[col])]
    return [m[r][n] for r in range(n)]


def reach(ch, seeds, allowed=None):
    """States that can reach ``seeds`` moving only through ``allowed``."""
    pred = {s: set() for s in ch}
    for s, succ in ch.items():
        for t in succ:
            pred[t].add(s)
    seen = set(seeds)
    queue = deque(seeds)
    while queue:
        t = queue.popleft()
        for s in pred[t]:
            if s not in seen and (allowed is None or s in allowed):
                seen.add(s)
                queue.append(s)
    return seen


def exact_until(ch, phi, psi) -> dict:
    """Exact phi U psi probabilities: drop states that cannot reach psi, solve the rest."""
    can = reach(ch, psi, phi)
    unknown = sorted(s for s in can if s not in psi)
    idx = {s: i for i, s in enumerate(unknown)}
    a = [[F(0)] * len(unknown) for _ in unknown]
    b = [F(0)] * len(unknown)
    for s in unknown:
        i = idx[s]
        a[i][i] += 1
        for t, p in ch[s].items():
            if t in psi:
                b[i] += p
            elif t in idx:
                a[i][idx[t]] -= p
    x = solve_exact(a, b) if unknown else []
    out = {s: F(0) for s in ch}
    out.update({s: F(1) for s in psi})
    out.update({s: x[idx[s]] for s in unknown})
    return out


def exact_stationary(ch, states) -> dict:
    """Stationary distribution of an irreducible sub-chain on ``states``."""
    states = sorted(states)
    n = len(states)
    idx = {s: i for i, s in enumerate(states)}
    a = [[F(0)] * n for _ in range(n)]
    for s in states:
        for t, p in ch[s].items():
            a[idx[t]][idx[s]] += p
    for i in range(n):
        a[i][i] -= 1
    a[-1] = [F(1)] * n
    b = [F(0)] * (n - 1) + [F(1)]
    x = solve_exact(a, b)
    return {s: x[idx[s]] for s in states}


# -- graph structure -----------------------------------------------------------

def closure(ch) -> dict:
    """Reflexive-transitive reachability by Floyd-Warshall."""
    r = {s: {s} | set(ch[s]) for s in ch}
    for k in ch:
        for i in ch:
            if k in r[i]:
                r[i] |= r[k]
    return r


def brute_bsccs(ch) -> set:
    """Bottom SCCs: states whose every reachable state can reach back."""
    r = closure(ch)
    out = set()
    for s in ch:
        if all(s in r[t] for t in r[s]):
            out.add(frozenset(r[s]))
    return out


def exact_steady_state(ch, initial) -> dict:
    """Long-run distribution from ``initial``: component stationaries weighted by absorption."""
    pi = {s: F(0) for s in ch}
    for comp in brute_bsccs(ch):
        weight = exact_until(ch, set(ch), set(comp))[initial]
        if weight:
            for s, v in exact_stationary(ch, comp).items():
                pi[s] += weight * v
    return pi


# -- FUJIMI rules written out directly ------------------------------------------

def fujimi_enumerate(n, m, tc, t_nmi, t_rst, p_noise, p_detect):
    """Breadth-first reachable states of the per-tick protocol rules.

    State: (t, phase, cdata_ok, noise_flag, ((ok, usage), ...)).
    Noise strikes user and waiting ticks; at NMI a detected corruption waits,
    anything else shift-saves; at RST the lowest-index valid buffer is used,
    otherwise hot start, which reinitialises at the cycle boundary.
    """
    p_noise, p_detect = F(p_noise), F(p_detect)
    init = (0, "user", True, False, tuple((True, m) for _ in range(n)))

    def step(state):
        t, phase, ok, _, bufs = state
        out = {}
        noisy = phase in ("user", "wait")
        branches = [(True, p_noise), (False, 1 - p_noise)] if noisy else [(False, F(1))]
        for hit, pn in branches:
            if pn == 0:
                continue
            ok2 = ok and not hit
            nt = (t + 1) % tc
            if nt == t_nmi and not ok2:
                dets = [(True, p_detect), (False, 1 - p_detect)]
            else:
                dets = [(False, F(1))]
            for det, pd in dets:
                if pd == 0:
                    continue
                b, ph, c = bufs, phase, ok2
                if nt == 0:
                    if phase == "hot":
                        c, b = True, tuple((True, m) for _ in range(n))
                    ph = "user"
                elif nt == t_nmi:
                    if det:
                        ph = "wait"
                    else:
                        ph = "copy"
                        b = ((c, m),) + tuple((x, m) for x, _ in bufs[:-1])
                elif nt == t_rst:
                    valid = [i for i, (_, u) in enumerate(b) if u > 0]
                    if valid:
                        i = valid[0]
                        c = b[i][0]
                        b = b[:i] + ((b[i][0], b[i][1] - 1),) + b[i + 1:]
                        ph = "reset"
                    else:
                        ph = "hot"
                key = (nt, ph, c, hit, b)
                out[key] = out.get(key, F(0)) + pn * pd
        return out

    seen = {init: 0}
    order = [init]
    edges = {}
    queue = deque([init])
    while queue:
        s = queue.popleft()
        edges[s] = step(s)
        for t in edges[s]:
            if t not in seen:
                seen[t] = len(order)
                order.append(t)
                queue.append(t)
    return order, edges
