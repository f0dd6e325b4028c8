"""Benders cuts, the differ-group loop graph and the grouping local search.

A cut is the partial Lagrangian of one primal solve, frozen as a function of
the grouping alone. It splits into per-group weights ``omega_g``; moving user
``i`` into the group of ``j`` while evicting ``j`` changes exactly one of
them, which gives the edge weight ``a[i, j]``. Along a cycle whose nodes sit
in pairwise-distinct groups the edge weights add up to the exact change of
the cut, so negative cycles are improving moves.

Each group also owns a virtual node with no power and no target. Passing
through it lets a cycle move a user without sending anyone back, which
changes group sizes.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .beamform import MRT, BeamformStats, target_from_rate
from .channel import Grouping, mmse_variance
from .primal import PowerAllocation
from .scenario import InvalidInput

OPTIMALITY = "optimality"
FEASIBILITY = "feasibility"
EBSA = "EBSA"
GFSA = "GFSA"


class StaleLoop(ValueError):
    """The loop was found on a grouping that differs from the one it is applied to."""


@dataclass(frozen=True, eq=False)
class SizeModel:
    """How MRT estimation variances and SINR targets depend on a group's size.

    Lets a cut re-score a group with the pilot length it would actually have,
    instead of the one frozen when the cut was generated.
    """

    beta: np.ndarray
    noise: float
    pilot_power: float
    pilot_factor: float
    coherence_len: int
    rate: np.ndarray  # spectral, bit/s/Hz
    num_groups: int

    def tau(self, size: int) -> int:
        return max(1, math.ceil(self.pilot_factor * size - 1e-12))

    def alpha(self, size: int) -> np.ndarray:
        return mmse_variance(self.beta, self.tau(size), self.pilot_power, self.noise)

    def gamma(self, size: int):
        tau = self.tau(size)
        if tau >= self.coherence_len:
            return None
        return target_from_rate(self.rate, self.num_groups, self.coherence_len, tau)


class Cut:
    """Frozen partial Lagrangian ``L(q, lambda, x)`` or ``L'(q, nu, x)``.

    ``bstats`` must carry coefficients for every ``(g, m, n)`` (channel
    statistics built with ``fill='all'``) so that any grouping can be scored.
    With a ``sizing`` model (MRT only) the estimation variances and targets
    of a group follow its size under the scored grouping; otherwise they stay
    at their generation-time values.
    """

    def __init__(self, kind: str, q: PowerAllocation, duals, bstats: BeamformStats, gamma,
                 sizing: SizeModel | None = None):
        if kind not in (OPTIMALITY, FEASIBILITY):
            raise InvalidInput(f"unknown cut kind {kind!r}")
        if sizing is not None and bstats.mode != MRT:
            raise InvalidInput("size-aware cuts are only available for MRT")
        duals = np.asarray(duals, dtype=float)
        if np.any(duals < 0):
            raise InvalidInput("cut multipliers must be nonnegative")
        self.kind = kind
        self.q = q
        self.duals = duals
        self.bstats = bstats
        self.gamma = np.asarray(gamma, dtype=float)
        self.sizing = sizing
        self._q = np.asarray(q.q if isinstance(q, PowerAllocation) else q, dtype=float)
        self._obj = 1.0 if kind == OPTIMALITY else 0.0
        self.noise = bstats.noise_power
        self.num_groups = bstats.phi.shape[0]
        self.num_users = duals.size
        self._cache: dict = {}

    def _mrt(self, alpha, gamma):
        q, q2 = self._q, self._q**2
        coupling = self.bstats.beta.T @ (q2 * alpha)
        own = (q2 * alpha).sum(axis=0)
        sig = (q * alpha).sum(axis=0)
        return coupling, self.duals * np.sqrt(gamma), self._obj * own - self.duals * sig

    def coeffs(self, g: int, size: int):
        """``(coupling, a, b)`` for group ``g`` holding ``size`` users, or None if that size is impossible.

        A member ``n`` contributes ``a[n] sqrt(sigma^2 + sum_i coupling[n, i]) + b[n]``.
        """
        key = (g, size) if self.sizing is not None else g
        if key in self._cache:
            return self._cache[key]
        bs = self.bstats
        if self.sizing is not None:
            gamma = self.sizing.gamma(size)
            out = None if gamma is None else self._mrt(self.sizing.alpha(size), gamma)
        elif bs.mode == MRT:
            out = self._mrt(bs.alpha[g], self.gamma)
        else:
            q, q2 = self._q, self._q**2
            coupling = bs.eta[g] * (q2.sum(axis=0) / bs.num_aps)[None, :]
            own = (q2 * bs.phi[g]).sum(axis=0)
            sig = (q * bs.theta[g]).sum(axis=0)
            out = coupling, self.duals * np.sqrt(self.gamma), self._obj * own - self.duals * sig
        self._cache[key] = out
        return out

    def group_weight(self, g: int, x: Grouping) -> float:
        members = x.members(g)
        if members.size == 0:
            return 0.0
        co = self.coeffs(g, members.size)
        if co is None:
            return math.inf
        C, a, b = co
        interf = C[np.ix_(members, members)].sum(axis=1)
        return float((a[members] * np.sqrt(self.noise + interf) + b[members]).sum())

    def value(self, x: Grouping) -> float:
        return sum(self.group_weight(g, x) for g in range(x.num_groups))


def group_weight(g: int, x: Grouping, q, duals, bstats: BeamformStats, gamma, kind: str = OPTIMALITY) -> float:
    """``omega_g`` (optimality, with the group's power) or ``omega'_g`` (feasibility)."""
    if not isinstance(q, PowerAllocation):
        q = PowerAllocation(q, bstats.mode)
    return Cut(kind, q, duals, bstats, gamma).group_weight(g, x)


@dataclass(frozen=True, eq=False)
class LoopGraph:
    """Dense adjacency over ``N`` real nodes followed by one virtual node per group."""

    adjacency: np.ndarray
    group_of: np.ndarray
    num_users: int

    @property
    def num_nodes(self) -> int:
        return self.group_of.size

    @property
    def num_groups(self) -> int:
        return int(self.group_of.max()) + 1

    @classmethod
    def from_matrix(cls, adjacency, group_of) -> "LoopGraph":
        """Graph with arbitrary weights; ``+inf`` is forced between same-group nodes."""
        adj = np.array(adjacency, dtype=float)
        grp = np.asarray(group_of, dtype=np.int64)
        adj[grp[:, None] == grp[None, :]] = np.inf
        return cls(adj, grp, grp.size)

    def dump(self) -> str:
        """Edge list ``i j weight`` of the finite edges."""
        i, j = np.nonzero(np.isfinite(self.adjacency))
        return "".join(f"{a} {b} {self.adjacency[a, b]!r}\n" for a, b in zip(i.tolist(), j.tolist()))

    def cycle_weight(self, nodes) -> float:
        nodes = list(nodes)
        return float(sum(self.adjacency[u, v] for u, v in zip(nodes, nodes[1:] + nodes[:1])))


@dataclass(frozen=True)
class Loop:
    nodes: tuple
    total_weight: float
    groups: tuple = field(default=(), compare=False)

    @property
    def key(self) -> tuple:
        """Rotation with the smallest node first."""
        k = self.nodes.index(min(self.nodes))
        return self.nodes[k:] + self.nodes[:k]

    def __len__(self):
        return len(self.nodes)


def canonical(nodes) -> tuple:
    nodes = tuple(int(v) for v in nodes)
    k = nodes.index(min(nodes))
    return nodes[k:] + nodes[:k]


def build_graph(cut: Cut, x: Grouping) -> LoopGraph:
    """Edge ``a[i, j]``: change of ``omega_{g_j}`` when ``i`` enters and ``j`` leaves.

    A virtual head means nobody leaves; a virtual tail means nobody enters.
    """
    N, G = x.num_users, x.num_groups
    if cut.num_users != N or cut.num_groups != G:
        raise InvalidInput("cut and grouping disagree on dimensions")
    V = N + G
    labels = np.concatenate([x.group_of, np.arange(G)])
    adj = np.full((V, V), np.inf)
    virt = N + np.arange(G)
    noise = cut.noise
    for g in range(G):
        S = x.members(g)
        u = S.size
        R = np.flatnonzero(x.group_of != g)  # real users that may enter
        others_v = virt[np.arange(G) != g]
        adj[others_v, N + g] = 0.0  # nothing moves
        cur = cut.coeffs(g, u) if u else None
        total = 0.0
        if u:
            C, a, b = cur
            I = noise + C[np.ix_(S, S)].sum(axis=1)
            total = float((a[S] * np.sqrt(I) + b[S]).sum())
        # real i -> virtual of g: i joins, the group grows
        up = cut.coeffs(g, u + 1) if R.size else None
        if up is not None:
            Cp, ap, bp = up
            stay = 0.0
            if u:
                Ip = noise + Cp[np.ix_(S, S)].sum(axis=1)
                stay = (ap[S][:, None] * np.sqrt(Ip[:, None] + Cp[np.ix_(S, R)]) + bp[S][:, None]).sum(axis=0)
            entrant = noise + Cp[np.ix_(R, S)].sum(axis=1) + Cp[R, R]
            adj[R, N + g] = stay + ap[R] * np.sqrt(entrant) + bp[R] - total
        if u == 0:
            continue
        # virtual -> real j: j leaves, the group shrinks
        if u == 1:
            adj[np.ix_(others_v, S)] = -total
        else:
            Cm, am, bm = cut.coeffs(g, u - 1)
            Cm_SS = Cm[np.ix_(S, S)]
            Im = np.maximum(noise + Cm_SS.sum(axis=1)[:, None] - Cm_SS, noise)  # [n, j]
            t = am[S][:, None] * np.sqrt(Im) + bm[S][:, None]
            np.fill_diagonal(t, 0.0)
            adj[np.ix_(others_v, S)] = (t.sum(axis=0) - total)[None, :]
        if R.size == 0:
            continue
        # real i -> real j: swap at constant size
        C_SS = C[np.ix_(S, S)]
        I_sw = np.maximum(I[:, None, None] + C[np.ix_(S, R)][:, :, None] - C_SS[:, None, :], noise)  # [n, i, j]
        d = a[S][:, None, None] * np.sqrt(I_sw) + b[S][:, None, None]
        d[np.arange(u), :, np.arange(u)] = 0.0
        C_RS = C[np.ix_(R, S)]
        entrant = np.maximum(noise + C_RS.sum(axis=1)[:, None] + C[R, R][:, None] - C_RS, noise)  # [i, j]
        adj[np.ix_(R, S)] = d.sum(axis=0) + a[R][:, None] * np.sqrt(entrant) + b[R][:, None] - total
    adj[labels[:, None] == labels[None, :]] = np.inf
    return LoopGraph(adj, labels, N)


def apply_loop(x: Grouping, loop: Loop) -> Grouping:
    """Move every real node of the cycle into the group of its successor."""
    N, G = x.num_users, x.num_groups
    nodes = list(loop.nodes)
    cur = [int(x.group_of[v]) if v < N else v - N for v in nodes]
    if any(v < 0 or v >= N + G for v in nodes):
        raise InvalidInput("loop references nodes outside the graph")
    if len(set(cur)) != len(cur):
        raise StaleLoop("loop nodes are not in pairwise-distinct groups under this grouping")
    if loop.groups and tuple(loop.groups) != tuple(cur):
        raise StaleLoop("loop was built for a different grouping")
    labels = x.group_of.copy()
    for k, v in enumerate(nodes):
        if v < N:
            labels[v] = cur[(k + 1) % len(nodes)]
    return Grouping(labels, G)


def _make_loop(graph: LoopGraph, nodes) -> Loop:
    nodes = canonical(nodes)
    return Loop(nodes, graph.cycle_weight(nodes), tuple(int(graph.group_of[v]) for v in nodes))


def _mask_dp(graph: LoopGraph):
    """Cheapest simple path from each start over each set of visited groups.

    ``D[s, mask, v]`` is the minimum weight of a path ``s -> ... -> v`` whose
    nodes occupy exactly the groups in ``mask`` (one node per group).
    """
    A = graph.adjacency
    grp = graph.group_of
    V = graph.num_nodes
    G = int(grp.max()) + 1
    bit = 1 << grp
    D = np.full((V, 1 << G, V), np.inf)
    P = np.full((V, 1 << G, V), -1, dtype=np.int64)
    D[np.arange(V), bit, np.arange(V)] = 0.0
    by_group = [np.flatnonzero(grp == g) for g in range(G)]
    masks = sorted(range(1, 1 << G), key=lambda m: bin(m).count("1"))
    for mask in masks:
        X = D[:, mask, :]
        if not np.isfinite(X).any():
            continue
        for g in range(G):
            if mask >> g & 1:
                continue
            W = by_group[g]
            cand = X[:, :, None] + A[None, :, W]  # [s, v, w]
            arg = np.argmin(cand, axis=1)
            best = np.take_along_axis(cand, arg[:, None, :], axis=1)[:, 0, :]
            nm = mask | (1 << g)
            cur = D[:, nm, W]
            better = best < cur
            D[:, nm, W] = np.where(better, best, cur)
            P[:, nm, W] = np.where(better, arg, P[:, nm, W])
    return D, P


def _trace(P, grp, s, mask, v):
    path = [v]
    while v != s:
        u = int(P[s, mask, v])
        mask &= ~(1 << int(grp[v]))
        v = u
        path.append(v)
    return path[::-1]


def _enumerate_cycles(graph: LoopGraph, tol: float, forbidden_keys, budget: int):
    """Depth-first search over differ-group cycles, smallest node first."""
    A = graph.adjacency
    grp = graph.group_of
    V = graph.num_nodes
    best, steps = None, 0
    for s in range(V):
        stack = [(s, [s], 0.0, {int(grp[s])})]
        while stack:
            v, path, w, used = stack.pop()
            steps += 1
            if steps > budget:
                return best
            if len(path) > 1:
                close = w + A[v, s]
                if close < -tol and (best is None or close < best[1]):
                    key = tuple(path)
                    if key not in forbidden_keys:
                        best = (key, close)
            for u in range(s + 1, V):
                if int(grp[u]) in used or not np.isfinite(A[v, u]):
                    continue
                stack.append((u, path + [u], w + A[v, u], used | {int(grp[u])}))
    return best


def ebsa(graph: LoopGraph, forbidden=(), tol: float = 0.0, enumeration_budget: int = 200_000):
    """Most negative differ-group loop outside ``forbidden``, or None.

    An exact dynamic program over (start, visited groups, end node) gives the
    cheapest closing cycle for every state. If all of those are forbidden,
    a bounded exhaustive search looks for any other negative loop.
    """
    forbidden_keys = {f.key if isinstance(f, Loop) else canonical(f) for f in forbidden}
    A = graph.adjacency
    if not np.any(A < -tol):
        return None
    D, P = _mask_dp(graph)
    V = graph.num_nodes
    close = D + A.T[:, None, :]  # close[s, mask, v] = D[s, mask, v] + A[v, s]
    close[np.arange(V), :, np.arange(V)] = np.inf
    s_idx, m_idx, v_idx = np.nonzero(close < -tol)
    if s_idx.size == 0:
        return None
    order = np.lexsort((v_idx, m_idx, s_idx, close[s_idx, m_idx, v_idx]))
    seen = set()
    for k in order:
        s, mask, v = int(s_idx[k]), int(m_idx[k]), int(v_idx[k])
        nodes = canonical(_trace(P, graph.group_of, s, mask, v))
        if nodes in seen:
            continue
        seen.add(nodes)
        if nodes not in forbidden_keys:
            return _make_loop(graph, nodes)
    if not forbidden_keys:
        return None
    hit = _enumerate_cycles(graph, tol, forbidden_keys, enumeration_budget)
    return None if hit is None else _make_loop(graph, hit[0])


def gfsa(graph: LoopGraph, forbidden=(), tol: float = 0.0):
    """Greedy walk seeded by each negative edge in ascending order, lowest ``(i, j)`` on ties."""
    forbidden_keys = {f.key if isinstance(f, Loop) else canonical(f) for f in forbidden}
    A = graph.adjacency
    grp = graph.group_of
    G = int(grp.max()) + 1
    i_idx, j_idx = np.nonzero(A < -tol)
    order = np.lexsort((j_idx, i_idx, A[i_idx, j_idx]))
    for k in order:
        path = [int(i_idx[k]), int(j_idx[k])]
        used = {int(grp[path[0]]), int(grp[path[1]])}
        w = float(A[path[0], path[1]])
        while True:
            close = w + A[path[-1], path[0]]
            if close < -tol:
                key = canonical(path)
                if key not in forbidden_keys:
                    return _make_loop(graph, path)
            if len(path) >= G:
                break
            row = A[path[-1]].copy()
            row[[u for u in range(row.size) if int(grp[u]) in used]] = np.inf
            nxt = int(np.argmin(row))
            if not np.isfinite(row[nxt]):
                break
            path.append(nxt)
            used.add(int(grp[nxt]))
            w += float(row[nxt])
    return None


def all_differ_group_cycles(graph: LoopGraph):
    """Every simple differ-group cycle as ``(canonical nodes, weight)``; test oracle."""
    grp = graph.group_of
    out = []
    V = graph.num_nodes
    for L in range(2, int(grp.max()) + 2):
        for combo in itertools.combinations(range(V), L):
            if len({int(grp[v]) for v in combo}) < L:
                continue
            first, rest = combo[0], combo[1:]
            for perm in itertools.permutations(rest):
                nodes = (first,) + perm
                w = graph.cycle_weight(nodes)
                if np.isfinite(w):
                    out.append((nodes, w))
    return out


@dataclass
class MasterResult:
    grouping: Grouping
    bound: float
    status: str  # "ok" or "infeasible"
    moves: int
    rejected: int
    diagnostics: dict = field(default_factory=dict)


def _search(kind):
    if kind == EBSA:
        return ebsa
    if kind == GFSA:
        return gfsa
    raise InvalidInput(f"unknown loop search {kind!r}")


def gbma(
    cuts,
    x: Grouping,
    search: str = EBSA,
    max_moves: int | None = None,
    max_rejections: int = 200,
    rel_tol: float = 1e-10,
    starts=(),
) -> MasterResult:
    """Local search over groupings driven by negative loops.

    Phase one clears violated feasibility cuts, one worst cut at a time;
    phase two lowers the largest optimality cut. A loop is rejected (and
    remembered for that graph) if it would push another feasibility cut above
    the current worst violation, push another optimality cut above the
    current maximum, re-violate a feasibility cut, or revisit a grouping.

    Each grouping in ``starts`` seeds a further independent search; the
    successful result with the lowest bound wins, ties going to ``x``.
    """
    cuts = list(cuts)
    if not cuts:
        raise InvalidInput("the master problem needs at least one cut")
    best = _gbma_from(cuts, x, search, max_moves, max_rejections, rel_tol)
    for s in starts:
        res = _gbma_from(cuts, s, search, max_moves, max_rejections, rel_tol)
        if res.status != "ok":
            continue
        if best.status != "ok" or (not math.isnan(res.bound) and res.bound < best.bound):
            best = res
    return best


def _gbma_from(cuts, x, search, max_moves, max_rejections, rel_tol) -> MasterResult:
    find = _search(search)
    feas = [c for c in cuts if c.kind == FEASIBILITY]
    opt = [c for c in cuts if c.kind == OPTIMALITY]
    N, G = x.num_users, x.num_groups
    max_moves = max_moves if max_moves is not None else 10 * (N + G) * G
    visited = {x.canonical_key()}
    moves = rejected = 0

    def scale_of(values):
        return rel_tol * (1.0 + max((abs(v) for v in values), default=0.0))

    def step(target_idx, pool, accept):
        """Apply one improving loop for ``pool[target_idx]``; return the new grouping or None."""
        nonlocal rejected
        cut = pool[target_idx]
        graph = build_graph(cut, x)
        tol = scale_of([cut.value(x)])
        tried = []
        for _ in range(max_rejections):
            loop = find(graph, tried, tol=tol)
            if loop is None:
                return None
            cand = apply_loop(x, loop)
            if cand.canonical_key() not in visited and accept(cand):
                return cand
            rejected += 1
            tried.append(loop)
        return None

    # phase one
    while feas:
        vals = [c.value(x) for c in feas]
        k = int(np.argmax(vals))
        worst = vals[k]
        ftol = scale_of([worst])
        if worst <= ftol:
            break
        if moves >= max_moves:
            return MasterResult(x, np.nan, "infeasible", moves, rejected, {"reason": "move cap in phase one"})

        def accept_feas(cand, k=k, worst=worst):
            return all(c.value(cand) <= worst for i, c in enumerate(feas) if i != k)

        nxt = step(k, feas, accept_feas)
        if nxt is None:
            return MasterResult(
                x, np.nan, "infeasible", moves, rejected,
                {"reason": "no admissible loop clears the feasibility cut", "violation": worst},
            )
        x = nxt
        visited.add(x.canonical_key())
        moves += 1

    if not opt:
        return MasterResult(x, np.nan, "ok", moves, rejected)

    # phase two
    while moves < max_moves:
        vals = [c.value(x) for c in opt]
        k = int(np.argmax(vals))
        xi = vals[k]
        ftol = scale_of([c.value(x) for c in feas]) if feas else 0.0

        def accept_opt(cand, k=k, xi=xi, ftol=ftol):
            if any(c.value(cand) > xi for i, c in enumerate(opt) if i != k):
                return False
            return all(c.value(cand) <= ftol for c in feas)

        nxt = step(k, opt, accept_opt)
        if nxt is None:
            break
        x = nxt
        visited.add(x.canonical_key())
        moves += 1
    bound = max(c.value(x) for c in opt)
    return MasterResult(x, bound, "ok", moves, rejected)
