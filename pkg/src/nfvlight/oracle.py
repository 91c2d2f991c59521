"""Exhaustive reference solver for desk-size scenarios.

Enumerates embeddings, placements, lightpath routes and wavelength colorings
outright, times every candidate with the exact reciprocal queue delays, and
keeps the lexicographic best (fulfilled count, embedded count, worst lateness,
weighted resource use).  The result certifies external-solver output and
doubles as a fallback optimum when no solver is installed.

Two deliberate restrictions keep the search exact but small, and both are
recorded in the certificate: every lightpath uses the precomputed shortest
fiber route, and every function is placed wholly at one vertex.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, replace

from . import naming
from .approx import eval_gtilde, interpolate_xi, resolve_partitions, shortest_paths
from .scenario import Scenario

_STAB = 1e-9


class OracleScaleError(Exception):
    """The scenario is outside the exhaustive search's certified scope."""


@dataclass
class OracleLimits:
    max_seconds: float | None = None
    max_leaves: int | None = None


@dataclass(frozen=True)
class SegmentPlan:
    """One routed flow: a chain hop or a destination branch of a request."""

    ri: int
    arc: tuple[str, str]
    va: str
    vb: str
    rate: float
    branch: int | None
    hops: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class _RequestPlan:
    ri: int
    nodes: tuple[str, ...]
    arcs: tuple[tuple[str, str], ...]
    rates: dict[tuple[str, str], float]
    source_vertex: str
    branches: tuple[tuple[str, float], ...]
    funcs: tuple[tuple[str, float, float, float], ...]  # node, arrival, alpha, beta
    d_max: float


@dataclass
class OracleResult:
    scenario_name: str
    mode: str
    embedded: tuple[bool, ...]
    fulfilled: tuple[bool, ...]
    lateness: float
    per_request_lateness: tuple[float, ...]
    objective: float
    lex: tuple[float, float, float, float]
    placements: dict[tuple[int, str], str]
    service: dict[tuple[int, str], float]
    segments: tuple[SegmentPlan, ...]
    topology: dict[tuple[str, str], int]
    loads: dict[tuple[str, str], float]
    certificate: dict


def _chain_plans(scn: Scenario) -> list[_RequestPlan]:
    sub = scn.substrate
    plans = []
    for ri, req in enumerate(scn.requests):
        g = req.graph
        for n in g.nodes:
            if len(g.in_arcs(n)) > 1 or len(g.out_arcs(n)) > 1:
                raise OracleScaleError(f"request {ri}: forwarding graph is not a chain")
        if len(g.sources) != 1 or len(g.destinations) != 1:
            raise OracleScaleError(f"request {ri}: need one source and one destination")
        src = g.sources[0]
        nodes = [src]
        while g.out_arcs(nodes[-1]):
            nodes.append(g.out_arcs(nodes[-1])[0][1])
        arcs = tuple((nodes[i], nodes[i + 1]) for i in range(len(nodes) - 1))
        if not arcs:
            raise OracleScaleError(f"request {ri}: forwarding graph has no arcs")

        rates: dict[tuple[str, str], float] = {}
        rate = req.initial_rates.get(arcs[0])
        if rate is None:
            raise OracleScaleError(f"request {ri}: missing initial rate for the source arc")
        rates[arcs[0]] = rate
        for k in range(1, len(arcs)):
            rate = g.alpha(arcs[k], arcs[k - 1]) * rate + g.beta(arcs[k])
            rates[arcs[k]] = rate
        if any(r <= 0 for r in rates.values()):
            raise OracleScaleError(f"request {ri}: a chain arc carries no traffic")

        src_pins = [(v, p) for (n, v, p) in req.source_restrictions if n == src]
        if len(src_pins) != 1 or abs(src_pins[0][1] - 1.0) > 1e-6:
            raise OracleScaleError(f"request {ri}: source must be pinned to one vertex")
        dest = nodes[-1]
        dest_pins = [(v, p) for (n, v, p) in req.dest_restrictions if n == dest and p > 0]
        if not dest_pins or abs(sum(p for _, p in dest_pins) - 1.0) > 1e-6:
            raise OracleScaleError(f"request {ri}: destination shares must be pinned and sum to 1")
        if len({v for v, _ in dest_pins}) != len(dest_pins):
            raise OracleScaleError(f"request {ri}: duplicate destination vertex")
        vidx = {v: i for i, v in enumerate(sub.vertices)}
        dest_pins.sort(key=lambda t: vidx[t[0]])
        last_rate = rates[arcs[-1]]
        branches = tuple((v, p * last_rate) for v, p in dest_pins)

        funcs = []
        for n in nodes[1:-1]:
            alpha, beta = g.node_alpha(n), g.node_beta(n)
            if alpha <= 0:
                raise OracleScaleError(f"request {ri}: node {n} needs a positive rate factor")
            funcs.append((n, rates[(nodes[nodes.index(n) - 1], n)], alpha, beta))
        plans.append(
            _RequestPlan(
                ri=ri,
                nodes=tuple(nodes),
                arcs=arcs,
                rates=rates,
                source_vertex=src_pins[0][0],
                branches=branches,
                funcs=tuple(funcs),
                d_max=req.d_max,
            )
        )
    total_funcs = sum(len(p.funcs) for p in plans)
    if len(plans) > 2 or total_funcs > 2:
        raise OracleScaleError("exhaustive search handles at most two requests or two functions")
    if len(plans) == 2 and any(len(p.funcs) > 1 for p in plans):
        raise OracleScaleError("with two requests each chain may hold at most one function")
    if len(sub.vertices) > 8:
        raise OracleScaleError("exhaustive search handles at most eight vertices")
    return plans


@dataclass(frozen=True)
class _Route:
    hops: tuple[tuple[str, str], ...]
    pairs: tuple[int, ...]
    prop: float


class _Catalog:
    """Candidate lightpath pairs and simple routes over them."""

    def __init__(self, scn: Scenario, table, joint: bool):
        sub = scn.substrate
        self.vidx = {v: i for i, v in enumerate(sub.vertices)}
        fibers = sub.fibers()
        self.fiber_id = {f: i for i, f in enumerate(fibers)}
        for (u, v) in fibers:
            self.fiber_id[(v, u)] = self.fiber_id[(u, v)]

        self.pairs: list[tuple[str, str]] = []
        self.pair_id: dict[tuple[str, str], int] = {}
        self.pair_fibers: list[tuple[int, ...]] = []
        verts = sub.vertices
        for i, u in enumerate(verts):
            for v in verts[i + 1:]:
                if not joint and (u, v) not in self.fiber_id:
                    continue
                pid = len(self.pairs)
                self.pairs.append((u, v))
                self.pair_id[(u, v)] = pid
                self.pair_id[(v, u)] = pid
                route = table.routes[(u, v)]
                self.pair_fibers.append(
                    tuple(sorted({self.fiber_id[(route[k], route[k + 1])] for k in range(len(route) - 1)}))
                )
        neighbors: dict[str, list[str]] = {v: [] for v in verts}
        for (u, v) in self.pairs:
            neighbors[u].append(v)
            neighbors[v].append(u)
        for v in neighbors:
            neighbors[v].sort(key=self.vidx.__getitem__)

        self.routes: dict[tuple[str, str], tuple[_Route, ...]] = {}
        for a in verts:
            for b in verts:
                if a == b:
                    continue
                found: list[_Route] = []

                def dfs(cur: str, seen: set[str], hops: list[tuple[str, str]]):
                    if cur == b:
                        pids = tuple(sorted({self.pair_id[h] for h in hops}))
                        prop = sum(table.dist[h] for h in hops)
                        found.append(_Route(tuple(hops), pids, prop))
                        return
                    for nxt in neighbors[cur]:
                        if nxt not in seen:
                            hops.append((cur, nxt))
                            seen.add(nxt)
                            dfs(nxt, seen, hops)
                            seen.discard(nxt)
                            hops.pop()

                dfs(a, {a}, [])
                found.sort(key=lambda r: (len(r.hops), r.hops))
                self.routes[(a, b)] = tuple(found)


class _Abort(Exception):
    pass


class _Search:
    def __init__(self, scn: Scenario, fixed_topology: bool, limits: OracleLimits | None,
                 pin_placements: dict[tuple[int, str], str] | None):
        self.scn = scn
        self.sub = scn.substrate
        self.mu_bar = self.sub.line_rate
        self.gammas = self.sub.wavelengths
        self.fixed = fixed_topology
        self.limits = limits or OracleLimits()
        self.table = shortest_paths(self.sub)
        self.plans = _chain_plans(scn)
        self.catalog = _Catalog(scn, self.table, joint=not fixed_topology)

        self.candidates: dict[tuple[int, str], list[str]] = {}
        for p in self.plans:
            for (n, arrival, alpha, beta) in p.funcs:
                opts = []
                for v in self.sub.vertices:
                    top = (self.sub.cap(v) - beta) / alpha
                    if top > arrival + _STAB:
                        opts.append(v)
                if pin_placements and (p.ri, n) in pin_placements:
                    pin = pin_placements[(p.ri, n)]
                    opts = [v for v in opts if v == pin]
                self.candidates[(p.ri, n)] = opts

        self.color_memo: dict[frozenset, dict[int, int] | None] = {}
        self.best_lex: tuple | None = None
        self.best: dict | None = None
        self.leaves = 0
        self.placement_rounds = 0
        self.aborted = False
        self.t0 = time.monotonic()

    # ---- limits ----

    def _tick(self):
        self.leaves += 1
        if self.limits.max_leaves is not None and self.leaves > self.limits.max_leaves:
            raise _Abort()
        if self.limits.max_seconds is not None and self.leaves % 256 == 0:
            if time.monotonic() - self.t0 > self.limits.max_seconds:
                raise _Abort()

    # ---- wavelength coloring ----

    def _color(self, pairset: frozenset) -> dict[int, int] | None:
        if pairset in self.color_memo:
            return self.color_memo[pairset]
        pids = sorted(pairset)
        conflicts = {p: set() for p in pids}
        for p, q in itertools.combinations(pids, 2):
            if set(self.catalog.pair_fibers[p]) & set(self.catalog.pair_fibers[q]):
                conflicts[p].add(q)
                conflicts[q].add(p)
        order = sorted(pids, key=lambda p: (-len(conflicts[p]), p))
        colors: dict[int, int] = {}

        def assign(i: int) -> bool:
            if i == len(order):
                return True
            p = order[i]
            taken = {colors[q] for q in conflicts[p] if q in colors}
            for g in range(self.gammas):
                if g not in taken:
                    colors[p] = g
                    if assign(i + 1):
                        return True
                    del colors[p]
            return False

        result = dict(colors) if assign(0) else None
        self.color_memo[pairset] = result
        return result

    # ---- enumeration ----

    def run(self) -> OracleResult:
        reqs = list(range(len(self.plans)))
        masks = sorted(
            (frozenset(c) for r in range(len(reqs), -1, -1) for c in itertools.combinations(reqs, r)),
            key=lambda s: (-len(s), sorted(s)),
        )
        try:
            for mask in masks:
                funcs = [(p.ri, n) for p in self.plans if p.ri in mask for (n, *_r) in p.funcs]
                opts = [self.candidates[key] for key in funcs]
                if any(not o for o in opts):
                    continue
                for combo in itertools.product(*opts):
                    self.placement_rounds += 1
                    placements = dict(zip(funcs, combo))
                    segs = self._segments(mask, placements)
                    self._dfs(mask, placements, segs, 0, {}, {}, {}, {}, [])
        except _Abort:
            self.aborted = True
        return self._result()

    def _segments(self, mask, placements) -> list[SegmentPlan]:
        segs = []
        for p in self.plans:
            if p.ri not in mask:
                continue
            chain_vs = [p.source_vertex]
            for (n, *_r) in p.funcs:
                chain_vs.append(placements[(p.ri, n)])
            for k, arc in enumerate(p.arcs[:-1]):
                segs.append(SegmentPlan(p.ri, arc, chain_vs[k], chain_vs[k + 1], p.rates[arc], None))
            for b, (v, rate) in enumerate(p.branches):
                segs.append(SegmentPlan(p.ri, p.arcs[-1], chain_vs[-1], v, rate, b))
        return segs

    def _dfs(self, mask, placements, segs, i, pair_used, trans, fiber_cnt, loads, chosen):
        if i == len(segs):
            self._leaf(mask, placements, segs, chosen, loads)
            return
        seg = segs[i]
        if seg.va == seg.vb:
            chosen.append(())
            self._dfs(mask, placements, segs, i + 1, pair_used, trans, fiber_cnt, loads, chosen)
            chosen.pop()
            return
        for route in self.catalog.routes.get((seg.va, seg.vb), ()):
            new_pairs = [p for p in route.pairs if not pair_used.get(p)]
            if not self.fixed and new_pairs:
                add_t: dict[str, int] = {}
                add_f: dict[int, int] = {}
                for p in new_pairs:
                    u, v = self.catalog.pairs[p]
                    add_t[u] = add_t.get(u, 0) + 1
                    add_t[v] = add_t.get(v, 0) + 1
                    for f in self.catalog.pair_fibers[p]:
                        add_f[f] = add_f.get(f, 0) + 1
                if any(trans.get(u, 0) + k > self.sub.degree(u) for u, k in add_t.items()):
                    continue
                if any(fiber_cnt.get(f, 0) + k > self.gammas for f, k in add_f.items()):
                    continue
            bad = False
            for hop in route.hops:
                if loads.get(hop, 0.0) + seg.rate >= self.mu_bar - _STAB:
                    bad = True
                    break
            if bad:
                continue

            for p in new_pairs:
                pair_used[p] = pair_used.get(p, 0)
                u, v = self.catalog.pairs[p]
                trans[u] = trans.get(u, 0) + 1
                trans[v] = trans.get(v, 0) + 1
                for f in self.catalog.pair_fibers[p]:
                    fiber_cnt[f] = fiber_cnt.get(f, 0) + 1
            for p in route.pairs:
                pair_used[p] = pair_used.get(p, 0) + 1
            for hop in route.hops:
                loads[hop] = loads.get(hop, 0.0) + seg.rate
            chosen.append(route.hops)

            self._dfs(mask, placements, segs, i + 1, pair_used, trans, fiber_cnt, loads, chosen)

            chosen.pop()
            for hop in route.hops:
                loads[hop] -= seg.rate
                if loads[hop] <= 1e-15:
                    del loads[hop]
            for p in route.pairs:
                pair_used[p] -= 1
            for p in new_pairs:
                del pair_used[p]
                u, v = self.catalog.pairs[p]
                trans[u] -= 1
                trans[v] -= 1
                for f in self.catalog.pair_fibers[p]:
                    fiber_cnt[f] -= 1

    # ---- leaf evaluation ----

    def _leaf(self, mask, placements, segs, chosen, loads):
        self._tick()
        used = frozenset(self.catalog.pair_id[hop] for hops in chosen for hop in hops)
        if self.fixed:
            coloring = {}
        else:
            coloring = self._color(used)
            if coloring is None:
                return

        seg_delay = []
        for hops in chosen:
            d = 0.0
            for hop in hops:
                d += self.table.dist[hop] + 1.0 / (self.mu_bar - loads[hop])
            seg_delay.append(d)

        fixed_by_req: dict[int, float] = {}
        for p in self.plans:
            if p.ri not in mask:
                continue
            shared = 0.0
            worst = None
            for s, d in zip(segs, seg_delay):
                if s.ri != p.ri:
                    continue
                if s.branch is None:
                    shared += d
                else:
                    worst = d if worst is None else max(worst, d)
            fixed_by_req[p.ri] = shared + (worst or 0.0)

        if self.fixed:
            o_path = sum(2.0 * self.sub.delay[f] for f in self.sub.fibers())
            topo = {f: 0 for f in self.sub.fibers()}
        else:
            o_path = sum(2.0 * self.table.dist[self.catalog.pairs[p]] for p in used)
            topo = {self.catalog.pairs[p]: g for p, g in coloring.items()}
        o_data = 0.0
        for s, hops in zip(segs, chosen):
            o_data += s.rate * len(hops) if hops else 0.5 * s.rate

        embedded = sorted(mask)
        for F in self._fulfilled_subsets(embedded):
            alloc = self._allocate(mask, placements, fixed_by_req, F)
            if alloc is None:
                continue
            lat, service = alloc
            o1 = float(len(F))
            o2 = float(len(embedded))
            o3 = max(lat.values(), default=0.0)
            o_proc = sum(service.values())
            W = self.scn.weights
            o4 = W.path_cost * o_path + W.data_cost * o_data + W.proc_cost * o_proc
            lex = (-o1, -o2, o3, o4)
            if self.best_lex is None or lex < self.best_lex:
                self.best_lex = lex
                self.best = {
                    "mask": set(mask),
                    "F": set(F),
                    "placements": dict(placements),
                    "segments": tuple(
                        replace(s, hops=tuple(h)) for s, h in zip(segs, chosen)
                    ),
                    "loads": dict(loads),
                    "topology": dict(topo),
                    "lat": dict(lat),
                    "service": dict(service),
                    "o": (o1, o2, o3, o4),
                }

    def _fulfilled_subsets(self, embedded):
        out = []
        for r in range(len(embedded), -1, -1):
            for c in itertools.combinations(embedded, r):
                out.append(frozenset(c))
        return out

    # ---- service-rate allocation ----

    def _allocate(self, mask, placements, fixed_by_req, F):
        """Best service rates for the chosen structure and fulfilled set.

        Returns per-request lateness and per-function rates, or None when the
        fulfilled set is unreachable.  Requests exhaust their delay budget, so
        every unfulfilled request's lateness lands on the common maximum.
        """
        plans = [p for p in self.plans if p.ri in mask]
        funcs = []
        for p in plans:
            for (n, arrival, alpha, beta) in p.funcs:
                funcs.append((p.ri, n, placements[(p.ri, n)], arrival, alpha, beta))
        by_vertex: dict[str, list] = {}
        for f in funcs:
            by_vertex.setdefault(f[2], []).append(f)
        shared = any(len(v) > 1 for v in by_vertex.values())
        two_func = any(len(p.funcs) == 2 for p in plans)

        lat: dict[int, float] = {}
        service: dict[tuple[int, str], float] = {}

        base = 0.0
        for p in plans:
            if p.funcs:
                continue
            l_r = max(0.0, fixed_by_req[p.ri] - p.d_max)
            if p.ri in F:
                if l_r > _STAB:
                    return None
                lat[p.ri] = 0.0
            else:
                lat[p.ri] = l_r
                base = max(base, l_r)

        if not shared and not two_func:
            worst = base
            min_soj = {}
            for p in plans:
                if not p.funcs:
                    continue
                (n, arrival, alpha, beta) = p.funcs[0]
                v = placements[(p.ri, n)]
                mu_max = (self.sub.cap(v) - beta) / alpha
                min_soj[p.ri] = 1.0 / (mu_max - arrival)
                min_lat = fixed_by_req[p.ri] + min_soj[p.ri] - p.d_max
                if p.ri in F:
                    if min_lat > _STAB:
                        return None
                else:
                    worst = max(worst, max(0.0, min_lat))
            for p in plans:
                if not p.funcs:
                    continue
                (n, arrival, alpha, beta) = p.funcs[0]
                budget = (0.0 if p.ri in F else worst) + p.d_max - fixed_by_req[p.ri]
                sojourn = max(budget, min_soj[p.ri])
                service[(p.ri, n)] = arrival + 1.0 / sojourn
                lat[p.ri] = 0.0 if p.ri in F else worst
            return lat, service

        return self._allocate_coupled(plans, placements, fixed_by_req, F, by_vertex, lat, base, service)

    def _allocate_coupled(self, plans, placements, fixed_by_req, F, by_vertex, lat, base, service):
        func_plans = [p for p in plans if p.funcs]

        def budgets(T):
            out = {}
            for p in func_plans:
                b = (0.0 if p.ri in F else T) + p.d_max - fixed_by_req[p.ri]
                if b <= 1e-12:
                    return None
                out[p.ri] = b
            return out

        two = next((p for p in func_plans if len(p.funcs) == 2), None)

        def feasible(T):
            B = budgets(T)
            if B is None:
                return False
            if two is not None:
                (n1, a1, al1, be1), (n2, a2, al2, be2) = two.funcs
                v1, v2 = placements[(two.ri, n1)], placements[(two.ri, n2)]
                b = B[two.ri]
                if v1 == v2:
                    res = self.sub.cap(v1) - be1 - be2 - al1 * a1 - al2 * a2
                    need = (math.sqrt(al1) + math.sqrt(al2)) ** 2 / b
                    if res <= 0 or need > res + _STAB:
                        return False
                else:
                    r1 = self.sub.cap(v1) - be1 - al1 * a1
                    r2 = self.sub.cap(v2) - be2 - al2 * a2
                    if r1 <= 0 or r2 <= 0 or al1 / r1 + al2 / r2 > b + _STAB:
                        return False
                return True
            for v, entries in by_vertex.items():
                need = 0.0
                for (ri, n, _v, arrival, alpha, beta) in entries:
                    need += alpha * (arrival + 1.0 / B[ri]) + beta
                if need > self.sub.cap(v) + _STAB:
                    return False
            return True

        lo = base
        all_f = all(p.ri in F for p in func_plans)
        if all_f:
            if not feasible(lo):
                return None
            T = lo
        else:
            hi = max(lo, 1e-6)
            for _ in range(80):
                if feasible(hi):
                    break
                hi = hi * 2.0 if hi else 1e-6
            else:
                return None
            for _ in range(100):
                mid = (lo + hi) / 2.0
                if feasible(mid):
                    hi = mid
                else:
                    lo = mid
                if hi - lo <= 1e-12 * max(1.0, hi):
                    break
            T = hi
        B = budgets(T)
        if two is not None:
            (n1, a1, al1, be1), (n2, a2, al2, be2) = two.funcs
            v1, v2 = placements[(two.ri, n1)], placements[(two.ri, n2)]
            b = B[two.ri]
            if v1 == v2:
                res = self.sub.cap(v1) - be1 - be2 - al1 * a1 - al2 * a2
                if al1 / (b / 2) + al2 / (b / 2) <= res + _STAB:
                    s1 = s2 = b / 2
                else:
                    s1 = b * math.sqrt(al1) / (math.sqrt(al1) + math.sqrt(al2))
                    s2 = b - s1
            else:
                m1 = al1 / (self.sub.cap(v1) - be1 - al1 * a1)
                m2 = al2 / (self.sub.cap(v2) - be2 - al2 * a2)
                s1 = min(max(b / 2, m1), b - m2)
                s2 = b - s1
            service[(two.ri, n1)] = a1 + 1.0 / s1
            service[(two.ri, n2)] = a2 + 1.0 / s2
            lat[two.ri] = 0.0 if two.ri in F else max(
                0.0, fixed_by_req[two.ri] + s1 + s2 - two.d_max
            )
        for p in func_plans:
            if two is not None and p.ri == two.ri:
                continue
            (n, arrival, alpha, beta) = p.funcs[0]
            service[(p.ri, n)] = arrival + 1.0 / B[p.ri]
            lat[p.ri] = 0.0 if p.ri in F else max(0.0, T)
        return lat, service

    # ---- result assembly ----

    def _result(self) -> OracleResult:
        if self.best is None:
            raise OracleScaleError("no feasible candidate was evaluated")
        b = self.best
        R = len(self.plans)
        lat = tuple(b["lat"].get(ri, 0.0) for ri in range(R))
        o1, o2, o3, o4 = b["o"]
        W = self.scn.weights
        objective = (
            W.lateness * o3 + W.resources * o4 - W.fulfilled * o1 - W.embedded * o2
        )
        cert = {
            "certified": not self.aborted,
            "mode": "fixed" if self.fixed else "joint",
            "wa_only_routes": True,
            "atomic_placements": True,
            "allocation": "budget_exhausting",
            "leaves": self.leaves,
            "placement_rounds": self.placement_rounds,
            "colorings_cached": len(self.color_memo),
            "wall_seconds": time.monotonic() - self.t0,
        }
        service = {(ri, n): mu for (ri, n), mu in sorted(b["service"].items())}
        placements = {
            k: v for k, v in sorted(b["placements"].items()) if k[0] in b["mask"]
        }
        return OracleResult(
            scenario_name=self.scn.name,
            mode=cert["mode"],
            embedded=tuple(ri in b["mask"] for ri in range(R)),
            fulfilled=tuple(ri in b["F"] for ri in range(R)),
            lateness=o3,
            per_request_lateness=lat,
            objective=objective,
            lex=self.best_lex,
            placements=placements,
            service=service,
            segments=b["segments"],
            topology=b["topology"],
            loads=b["loads"],
            certificate=cert,
        )


def solve_exhaustive(
    scn: Scenario,
    fixed_topology: bool = False,
    *,
    limits: OracleLimits | None = None,
    pin_placements: dict[tuple[int, str], str] | None = None,
) -> OracleResult:
    return _Search(scn, fixed_topology, limits, pin_placements).run()


def solve_sequential_baseline(scn: Scenario, *, limits: OracleLimits | None = None) -> OracleResult:
    """Two-stage pipeline: place on the fixed topology, then rebuild lightpaths."""
    stage1 = solve_exhaustive(scn, fixed_topology=True, limits=limits)
    stage2 = solve_exhaustive(
        scn, fixed_topology=False, limits=limits, pin_placements=dict(stage1.placements)
    )
    stage2.certificate["pipeline"] = "placements frozen from the fixed-topology stage"
    stage2.certificate["stage1_lateness"] = stage1.lateness
    stage2.certificate["stage1_objective"] = stage1.objective
    return stage2


# ---------------------------------------------------------------------------
# assignment emission


def as_assignment(
    result: OracleResult,
    scn: Scenario,
    kind: str = "miqcp",
    *,
    path_table=None,
    partitions=None,
) -> dict[str, float]:
    """Variable values realizing the oracle solution in the chosen formulation."""
    if kind not in ("miqcp", "milp"):
        raise ValueError(f"unknown formulation kind {kind!r}")
    sub = scn.substrate
    V = sub.vertices
    mu_bar = sub.line_rate
    table = path_table or shortest_paths(sub)
    vals: dict[str, float] = {}

    arrivals: dict[tuple[int, str], float] = {}
    plans = _chain_plans(scn)
    for p in plans:
        for (n, arrival, _a, _b) in p.funcs:
            arrivals[(p.ri, n)] = arrival

    deg_loads: dict[str, float] = {}
    active_hops: dict[tuple, set] = {}
    for s in result.segments:
        key = (s.ri, s.arc, s.va, s.vb)
        if s.va == s.vb:
            deg_loads[s.va] = deg_loads.get(s.va, 0.0) + s.rate
            active_hops.setdefault(key, set()).add((s.va, s.va))
            name = naming.lam_name(s.ri, s.arc, s.va, s.va, s.va, s.va)
            vals[name] = vals.get(name, 0.0) + s.rate
            vals[naming.z_name(s.ri, s.arc, s.va, s.va, s.va, s.va)] = 1.0
        else:
            hset = active_hops.setdefault(key, set())
            for (w, wp) in s.hops:
                hset.add((w, wp))
                vals[naming.lam_name(s.ri, s.arc, s.va, s.vb, w, wp)] = s.rate
                vals[naming.z_name(s.ri, s.arc, s.va, s.vb, w, wp)] = 1.0

    for (ri, n), v in result.placements.items():
        vals[naming.y_name(ri, n, v)] = 1.0
        vals[naming.mu_name(ri, n, v)] = result.service[(ri, n)]

    def pair_slack(w: str, wp: str) -> float:
        if w == wp:
            return mu_bar - deg_loads.get(w, 0.0)
        return mu_bar - result.loads.get((w, wp), 0.0)

    if kind == "miqcp":
        for ri, emb in enumerate(result.embedded):
            vals[naming.x_name(2, ri)] = 1.0 if emb else 0.0
            vals[naming.x_name(1, ri)] = 1.0 if result.fulfilled[ri] else 0.0
            vals[naming.x_name(3, ri)] = result.per_request_lateness[ri]
        vals[naming.x_name(4)] = result.lateness
        for (u, v), g in result.topology.items():
            if result.mode == "fixed":
                vals[naming.l_name(u, v, (u, v), g)] = 1.0
                vals[naming.l_name(v, u, (v, u), g)] = 1.0
            else:
                route = table.routes[(u, v)]
                for k in range(len(route) - 1):
                    vals[naming.l_name(u, v, (route[k], route[k + 1]), g)] = 1.0
                    vals[naming.l_name(v, u, (route[k + 1], route[k]), g)] = 1.0
        for w in V:
            for wp in V:
                if w != wp:
                    vals[naming.eta_name(w, wp)] = 1.0 / (mu_bar - result.loads.get((w, wp), 0.0))
        for (ri, n), v in result.placements.items():
            slack = result.service[(ri, n)] - arrivals[(ri, n)]
            vals[naming.theta_name(ri, n, v)] = 1.0 / slack
        return vals

    # piecewise-linear assignment: recompute service at maximal allocation so
    # every active processing queue keeps its configured margin
    parts = partitions or resolve_partitions(scn)
    from .approx import ApproxError

    service2: dict[tuple[int, str], float] = {}
    by_vertex: dict[str, list] = {}
    for p in plans:
        for (n, arrival, alpha, beta) in p.funcs:
            if (p.ri, n) in result.placements:
                by_vertex.setdefault(result.placements[(p.ri, n)], []).append(
                    (p.ri, n, arrival, alpha, beta)
                )
    for v, entries in by_vertex.items():
        residual = sub.cap(v) - sum(al * a + be for (_r, _n, a, al, be) in entries)
        if residual <= 0:
            raise ApproxError(f"no service margin left at {v}")
        for (ri, n, a, al, _be) in entries:
            margin = residual / (len(entries) * al)
            part = parts.processing.get((ri, n, v))
            if part is None or margin < part.eps - 1e-9:
                raise ApproxError(
                    f"slack at {v} falls outside the processing partition; "
                    "configure approx.processing"
                )
            service2[(ri, n)] = a + margin

    for (ri, n), v in result.placements.items():
        vals[naming.mu_name(ri, n, v)] = service2[(ri, n)]

    fwd = parts.forwarding

    def hop_delay(w: str, wp: str) -> float:
        return table.dist[(w, wp)] + eval_gtilde(fwd, mu_bar - result.loads.get((w, wp), 0.0))

    lat2: dict[int, float] = {}
    for p in plans:
        ri = p.ri
        if not result.embedded[ri]:
            continue
        shared = 0.0
        branch: dict[int, float] = {}
        for s in result.segments:
            if s.ri != ri:
                continue
            d = sum(hop_delay(w, wp) for (w, wp) in s.hops)
            if s.branch is None:
                shared += d
            else:
                branch[s.branch] = d
        worst = shared + (max(branch.values()) if branch else 0.0)
        for (n, arrival, _a, _b) in p.funcs:
            v = result.placements[(ri, n)]
            part = parts.processing[(ri, n, v)]
            worst += eval_gtilde(part, service2[(ri, n)] - arrival)
        lat2[ri] = max(0.0, worst - p.d_max)

    for ri, emb in enumerate(result.embedded):
        vals[naming.x_name(2, ri)] = 1.0 if emb else 0.0
        l_r = lat2.get(ri, 0.0)
        vals[naming.x_name(3, ri)] = l_r
        vals[naming.x_name(1, ri)] = 1.0 if emb and l_r <= 1e-12 else 0.0
    vals[naming.x_name(4)] = max(lat2.values(), default=0.0)

    for (u, v), g in result.topology.items():
        vals[naming.l_wa_name(u, v, g)] = 1.0
        vals[naming.l_wa_name(v, u, g)] = 1.0

    for ri, req in enumerate(scn.requests):
        g_fg = req.graph
        for a in g_fg.arcs:
            for v, vp, w, wp in itertools.product(V, repeat=4):
                hset = active_hops.get((ri, a, v, vp), ())
                active = (w, wp) in hset
                xi = interpolate_xi(fwd, pair_slack(w, wp), active)
                for k, x in enumerate(xi):
                    if x:
                        vals[naming.xi_fwd_name(ri, a, v, vp, w, wp, k)] = x
        for n in g_fg.functional:
            for v in V:
                key = (ri, n, v)
                part = parts.processing.get(key)
                if part is None:
                    continue
                if result.placements.get((ri, n)) == v:
                    xi = interpolate_xi(part, service2[(ri, n)] - arrivals[(ri, n)], True)
                    for k, x in enumerate(xi):
                        if x:
                            vals[naming.xi_proc_name(ri, n, v, k)] = x
    return vals
