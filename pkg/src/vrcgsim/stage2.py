"""Game engine placement and transport routing over the stage-1 allocation.

Every admitted user needs one compute node to host their game engine and,
for each serving cell, downlink routes from that node. Placement trades
activation, per-resource and migration cost against the latency budget left
over from stage 1: moving a user's engine swaps only the routing term of
their latency columns, so a cheaper distant node is fine exactly when the
stage-1 slack covers the extra route latency.
"""
from __future__ import annotations

from dataclasses import dataclass

from .radio import (
    buffer_latency_s,
    frame_bits,
    render_latency_s,
    routing_latency_s,
    throughput_bps,
    traffic_load_bps,
)
from .scenario import ComputeNode, Scenario, distance, pixels
from .stage1 import Stage1Solution, Violation

_REL_TOL = 1e-9
_ONE = (1.0, 1.0, 1.0, 1.0)


@dataclass(frozen=True)
class DemandProfile:
    """Resource units one user's engine occupies at its compute node."""

    user: str
    gpu: float  # rendered pixels/s
    cpu: float  # frames/s
    ram: float  # resident pixels
    net: float  # bits/s, the user's full stage-1 traffic load


def demand_profile(
    sc: Scenario, stage1: Stage1Solution, uid: str, coefficients=_ONE
) -> DemandProfile:
    res = stage1.resolution[uid]
    fps = stage1.frame_rate[uid]
    px = pixels(res)
    cg, cc, cm, cn = coefficients
    return DemandProfile(
        user=uid,
        gpu=cg * px * fps,
        cpu=cc * fps,
        ram=cm * px,
        net=cn * traffic_load_bps(sc, 1.0, res, fps),
    )


@dataclass(frozen=True)
class Stage2Solution:
    placement: dict[str, str]  # user -> hosting compute node
    selected_paths: dict[str, tuple[str, ...]]  # user -> path ids, sorted
    flow: dict[tuple[str, str], float]  # (user, path id) -> fraction
    active_cns: frozenset[str]
    unplaced: frozenset[str]


@dataclass(frozen=True)
class CostBreakdown:
    fixed: float
    variable: float
    migration: float

    @property
    def total(self) -> float:
        return self.fixed + self.variable + self.migration


def variable_cost(cn: ComputeNode, d: DemandProfile) -> float:
    c = cn.unit_costs
    return d.gpu * c.gpu + d.cpu * c.cpu + d.ram * c.ram + d.net * c.net


def migration_cost(sc: Scenario, prev_cn: str | None, new_cn: str) -> float:
    if prev_cn is None or prev_cn == new_cn:
        return 0.0
    return sc.radio.migration_unit_cost * sc.hop_distance(prev_cn, new_cn)


def total_cost(
    solution: Stage2Solution,
    sc: Scenario,
    stage1: Stage1Solution,
    prev_placement: dict[str, str] | None = None,
) -> CostBreakdown:
    prev = prev_placement or {}
    fixed = sum(sc.cn(cid).fixed_cost for cid in solution.active_cns)
    variable = 0.0
    migration = 0.0
    for uid, cid in solution.placement.items():
        variable += variable_cost(sc.cn(cid), demand_profile(sc, stage1, uid))
        migration += migration_cost(sc, prev.get(uid), cid)
    return CostBreakdown(fixed, variable, migration)


# ---------------------------------------------------------------------------
# Stage-1 latency columns


def stage1_columns(
    sc: Scenario, stage1: Stage1Solution
) -> dict[tuple[str, str], tuple[float, float]]:
    """Per serving cell: (six-part column latency, its routing share).

    Swapping the engine to another node changes only the routing share, so
    callers can test a candidate as column - routing + new_route.
    """
    arrivals: dict[str, float] = {b.id: 0.0 for b in sc.base_stations}
    for uid in stage1.admitted:
        for bid in stage1.assoc[uid]:
            arrivals[bid] += stage1.frame_rate[uid]
    out: dict[tuple[str, str], tuple[float, float]] = {}
    for uid in stage1.admitted:
        u = sc.user(uid)
        res = stage1.resolution[uid]
        fps = stage1.frame_rate[uid]
        bits = frame_bits(sc, res)
        for bid in stage1.assoc[uid]:
            b = sc.bs(bid)
            route = routing_latency_s(sc, b)
            col = (
                route
                + render_latency_s(sc, res, fps, b.nearest_cn)
                + distance(u.position, b.position) / sc.radio.speed_of_light_mps
                + bits / throughput_bps(sc, u, b, stage1.prbs[(uid, bid)])
                + bits / b.processing_capacity_bps
                + buffer_latency_s(b, arrivals[bid])
            )
            out[(uid, bid)] = (col, route)
    return out


# ---------------------------------------------------------------------------
# Placement solver


class _Ledger:
    """Residual compute and link capacity during one solve."""

    def __init__(self, sc: Scenario):
        self.cn_used = {c.id: [0.0, 0.0, 0.0, 0.0] for c in sc.compute_nodes}
        self.link_used = {ln.id: 0.0 for ln in sc.links}

    def fits(self, cn: ComputeNode, d: DemandProfile) -> bool:
        used = self.cn_used[cn.id]
        caps = (cn.gpu_cap, cn.cpu_cap, cn.ram_cap, cn.net_cap)
        need = (d.gpu, d.cpu, d.ram, d.net)
        return all(u + n <= cap * (1 + _REL_TOL) for u, n, cap in zip(used, need, caps))

    def occupy(self, cn_id: str, d: DemandProfile):
        used = self.cn_used[cn_id]
        for i, n in enumerate((d.gpu, d.cpu, d.ram, d.net)):
            used[i] += n


def _split_flow(used: dict[str, float], paths, load_bps: float, eps: float):
    """Greedy fill in latency order; every taken fraction stays >= eps.

    Debits `used` as it goes, so paths sharing a link see the reduced
    headroom. Returns [(path, fraction), ...] summing to 1, or None when
    the remaining capacity cannot absorb the load under the minimum-
    fraction rule.
    """

    def headroom(path) -> float:
        if load_bps <= 0:
            return 1.0
        frac = min(
            (ln.capacity_bps - used[ln.id]) / load_bps for ln in path.links
        )
        return max(0.0, frac)

    taken = []
    remaining = 1.0
    for path in paths:
        if remaining <= 1e-12:
            break
        frac = min(remaining, headroom(path))
        if frac >= remaining - 1e-12:
            frac = remaining
        elif remaining - frac < eps:
            # trim so the leftover stays splittable on a later path
            frac = remaining - eps
        if frac < eps and frac < remaining:
            continue
        if frac <= 0:
            continue
        taken.append((path, frac))
        remaining -= frac
        for ln in path.links:
            used[ln.id] += frac * load_bps
    if remaining > 1e-12:
        return None
    return taken


def _route_user(ctx, ledger, uid, cid, k, eps):
    """Pick flows for every serving cell of uid toward cid, or None.

    On success returns (plan, link_add) where plan maps path id to fraction;
    nothing is committed to the ledger.
    """
    sc = ctx["sc"]
    stage1 = ctx["stage1"]
    columns = ctx["columns"]
    plan: dict[str, float] = {}
    link_add: dict[str, float] = {}
    shadow_used = dict(ledger.link_used)
    for bid in stage1.assoc[uid]:
        paths = sc.paths(bid, cid)[:k]
        if not paths:
            return None
        load = stage1.share[(uid, bid)] * ctx["demand"][uid].net
        taken = _split_flow(shadow_used, paths, load, eps)
        if taken is None:
            return None
        col, route = columns[(uid, bid)]
        worst = max(p.latency_s for p, _ in taken)
        fps = stage1.frame_rate[uid]
        if col - route + worst > sc.radio.deadline_for(fps) + 1e-12:
            return None
        for path, frac in taken:
            plan[path.id] = plan.get(path.id, 0.0) + frac
            for ln in path.links:
                link_add[ln.id] = link_add.get(ln.id, 0.0) + frac * load
    return plan, link_add


def gepar(
    sc: Scenario,
    stage1: Stage1Solution,
    prev_placement: dict[str, str] | None = None,
    k_paths: int | None = None,
    coefficients=_ONE,
) -> Stage2Solution:
    """Greedy placement; pinned users go first, cheapest viable node wins.

    Candidate nodes are ranked by the cost of taking this user (activation
    if the node is off, per-resource price, migration from the previous
    placement), keeping only nodes whose fastest routes respect the user's
    leftover latency budget. Users with the fewest viable nodes place
    first, heaviest renderers breaking ties, so a user pinned to one node
    activates it before flexible users settle elsewhere. An inactive
    candidate yields to an already active node when the active node's
    marginal price undercuts activating fresh. Flows spread across up to k
    routes per serving cell; a node is committed only when every cell can
    be routed inside capacity and deadline.
    """
    prev = prev_placement or {}
    k = k_paths if k_paths is not None else sc.radio.k_paths
    eps = sc.radio.epsilon if k > 1 else 1.0
    ctx = {
        "sc": sc,
        "stage1": stage1,
        "columns": stage1_columns(sc, stage1),
        "demand": {
            uid: demand_profile(sc, stage1, uid, coefficients)
            for uid in stage1.admitted
        },
    }
    ledger = _Ledger(sc)

    placement: dict[str, str] = {}
    selected: dict[str, tuple[str, ...]] = {}
    flow: dict[tuple[str, str], float] = {}
    active: set[str] = set()
    unplaced: set[str] = set()

    def marginal(cn: ComputeNode, uid: str, with_fixed: bool) -> float:
        cost = variable_cost(cn, ctx["demand"][uid]) + migration_cost(
            sc, prev.get(uid), cn.id
        )
        if with_fixed:
            cost += cn.fixed_cost
        return cost

    prefs_of: dict[str, list[tuple[float, float, str]]] = {}
    for uid in stage1.admitted:
        serving = stage1.assoc[uid]
        fps = stage1.frame_rate[uid]
        deadline = sc.radio.deadline_for(fps) + 1e-12
        prefs: list[tuple[float, float, str]] = []
        for c in sc.compute_nodes:
            worst_best = 0.0
            ok = True
            for bid in serving:
                paths = sc.paths(bid, c.id)[:k]
                if not paths:
                    ok = False
                    break
                col, route = ctx["columns"][(uid, bid)]
                if col - route + paths[0].latency_s > deadline:
                    ok = False
                    break
                worst_best = max(worst_best, paths[0].latency_s)
            if ok:
                prefs.append((marginal(c, uid, with_fixed=True), worst_best, c.id))
        prefs.sort()
        prefs_of[uid] = prefs

    # users pinned to few nodes place first so flexible ones gather around
    # them; within a tier the heaviest renderers go first
    order = sorted(
        stage1.admitted,
        key=lambda uid: (len(prefs_of[uid]), -ctx["demand"][uid].gpu, uid),
    )

    for uid in order:
        queue = [cid for _, _, cid in prefs_of[uid]]
        pref_set = set(queue)
        tested: set[str] = set()
        placed = False
        while queue and not placed:
            cid = queue.pop(0)
            if cid not in active:
                # an active node whose marginal price undercuts a fresh
                # activation takes over; the popped candidate stays next
                swaps = [
                    (marginal(sc.cn(n), uid, with_fixed=False), n)
                    for n in active
                    if n != cid
                    and n not in tested
                    and n in pref_set
                    and marginal(sc.cn(cid), uid, with_fixed=True) >= marginal(sc.cn(n), uid, with_fixed=False)
                ]
                if swaps:
                    swaps.sort()
                    queue.insert(0, cid)
                    cid = swaps[0][1]
            if cid in tested:
                continue
            tested.add(cid)
            cn = sc.cn(cid)
            if not ledger.fits(cn, ctx["demand"][uid]):
                continue
            routed = _route_user(ctx, ledger, uid, cid, k, eps)
            if routed is None:
                continue
            plan, link_add = routed
            for pid, frac in plan.items():
                flow[(uid, pid)] = frac
            selected[uid] = tuple(sorted(plan))
            placement[uid] = cid
            ledger.occupy(cid, ctx["demand"][uid])
            for lid, add in link_add.items():
                ledger.link_used[lid] += add
            active.add(cid)
            placed = True
        if not placed:
            unplaced.add(uid)

    return Stage2Solution(
        placement=placement,
        selected_paths=selected,
        flow=flow,
        active_cns=frozenset(active),
        unplaced=frozenset(unplaced),
    )


def baseline_single_path(
    sc: Scenario,
    stage1: Stage1Solution,
    prev_placement: dict[str, str] | None = None,
) -> Stage2Solution:
    """Placement restricted to one route per serving cell, no splitting."""
    return gepar(sc, stage1, prev_placement, k_paths=1)


def baseline_unconstrained(
    sc: Scenario,
    stage1: Stage1Solution,
    prev_placement: dict[str, str] | None = None,
    penalty_weights: tuple[float, float] = (4.0, 4.0),
) -> Stage2Solution:
    """Penalty-priced placement: overflow and lateness cost, never forbid.

    Each user takes the node minimizing money cost plus weighted violation
    magnitudes (relative resource and link overflow, relative deadline
    excess), routing the whole flow over the fastest route per cell. The
    output may fail verification; that is the point of the comparison.
    Placement is re-optimized from scratch each call: relocation charges
    show up on the bill afterwards but never steer the argmin, which is
    what makes this baseline expensive to run over a mobility trace.
    """
    w_cap, w_lat = penalty_weights
    if w_cap < 0 or w_lat < 0:
        raise ValueError("penalty weights must be non-negative")
    ctx = {
        "sc": sc,
        "stage1": stage1,
        "columns": stage1_columns(sc, stage1),
        "demand": {uid: demand_profile(sc, stage1, uid) for uid in stage1.admitted},
    }
    ledger = _Ledger(sc)
    order = sorted(stage1.admitted, key=lambda uid: (-ctx["demand"][uid].gpu, uid))

    placement: dict[str, str] = {}
    selected: dict[str, tuple[str, ...]] = {}
    flow: dict[tuple[str, str], float] = {}
    active: set[str] = set()
    unplaced: set[str] = set()

    for uid in order:
        serving = stage1.assoc[uid]
        d = ctx["demand"][uid]
        fps = stage1.frame_rate[uid]
        deadline = sc.radio.deadline_for(fps)
        best: tuple[float, str] | None = None
        for c in sc.compute_nodes:
            paths = {bid: sc.paths(bid, c.id) for bid in serving}
            if any(not ps for ps in paths.values()):
                continue
            money = variable_cost(c, d)
            if c.id not in active:
                money += c.fixed_cost
            overflow = 0.0
            used = ledger.cn_used[c.id]
            caps = (c.gpu_cap, c.cpu_cap, c.ram_cap, c.net_cap)
            need = (d.gpu, d.cpu, d.ram, d.net)
            for u_r, n_r, cap in zip(used, need, caps):
                if cap > 0:
                    overflow += max(0.0, (u_r + n_r - cap) / cap)
            excess = 0.0
            for bid in serving:
                first = paths[bid][0]
                load = stage1.share[(uid, bid)] * d.net
                for ln in first.links:
                    room = ln.capacity_bps
                    if room > 0:
                        overflow += max(
                            0.0, (ledger.link_used[ln.id] + load - room) / room
                        )
                col, route = ctx["columns"][(uid, bid)]
                excess += max(0.0, (col - route + first.latency_s - deadline) / deadline)
            score = money + w_cap * overflow + w_lat * excess
            if best is None or (score, c.id) < best:
                best = (score, c.id)
        if best is None:
            unplaced.add(uid)
            continue
        cid = best[1]
        cn = sc.cn(cid)
        placement[uid] = cid
        active.add(cid)
        ledger.occupy(cid, d)
        pids = []
        for bid in serving:
            first = sc.paths(bid, cid)[0]
            load = stage1.share[(uid, bid)] * d.net
            for ln in first.links:
                ledger.link_used[ln.id] += load
            pids.append(first.id)
            flow[(uid, first.id)] = 1.0
        selected[uid] = tuple(sorted(pids))
    return Stage2Solution(
        placement=placement,
        selected_paths=selected,
        flow=flow,
        active_cns=frozenset(active),
        unplaced=frozenset(unplaced),
    )


# ---------------------------------------------------------------------------
# Verification


def verify_stage2(
    solution: Stage2Solution, sc: Scenario, stage1: Stage1Solution
) -> list[Violation]:
    """All placement, capacity, routing, link and latency constraints.

    Users the solver reported unplaced are exempt; everything the solution
    claims to have placed is checked in full.
    """
    out: list[Violation] = []
    cn_ids = {c.id for c in sc.compute_nodes}
    placed = set(solution.placement)

    for uid in placed:
        if uid not in stage1.admitted:
            out.append(Violation("placement", uid, "placed but not admitted in stage 1"))
        if solution.placement[uid] not in cn_ids:
            out.append(Violation("placement", uid, f"unknown node {solution.placement[uid]}"))
    for uid in stage1.admitted:
        if uid not in placed and uid not in solution.unplaced:
            out.append(Violation("placement", uid, "admitted user neither placed nor reported"))

    # compute capacity
    totals = {c.id: [0.0, 0.0, 0.0, 0.0] for c in sc.compute_nodes}
    for uid, cid in solution.placement.items():
        if cid not in cn_ids or uid not in stage1.admitted:
            continue
        d = demand_profile(sc, stage1, uid)
        for i, n in enumerate((d.gpu, d.cpu, d.ram, d.net)):
            totals[cid][i] += n
    for c in sc.compute_nodes:
        caps = (c.gpu_cap, c.cpu_cap, c.ram_cap, c.net_cap)
        names = ("gpu", "cpu", "ram", "net")
        for got, cap, name in zip(totals[c.id], caps, names):
            if got > cap * (1 + _REL_TOL):
                out.append(Violation("capacity", c.id, f"{name} load {got:.6g} over cap {cap:.6g}"))

    if any(cid not in cn_ids for cid in solution.placement.values()):
        return out

    # routing structure, conservation and flow floors
    columns = stage1_columns(sc, stage1)
    eps = sc.radio.epsilon
    link_load: dict[str, float] = {ln.id: 0.0 for ln in sc.links}
    by_user: dict[str, dict[str, float]] = {}
    for (uid, pid), frac in solution.flow.items():
        by_user.setdefault(uid, {})[pid] = frac
    for uid, cid in solution.placement.items():
        if uid not in stage1.admitted:
            continue
        chosen = by_user.get(uid, {})
        listed = set(solution.selected_paths.get(uid, ()))
        if set(chosen) != listed:
            out.append(Violation("routing", uid, "flow keys disagree with selected paths"))
        fps = stage1.frame_rate[uid]
        deadline = sc.radio.deadline_for(fps) + 1e-12
        for bid in stage1.assoc[uid]:
            paths = {p.id: p for p in sc.paths(bid, cid)}
            mine = {pid: f for pid, f in chosen.items() if pid in paths}
            if not mine:
                out.append(Violation("routing", uid, f"no path selected toward {bid}"))
                continue
            total = sum(mine.values())
            if abs(total - 1.0) > 1e-9:
                out.append(Violation("routing", uid, f"flow toward {bid} sums to {total:.9f}"))
            for pid, frac in mine.items():
                if frac < eps - 1e-9:
                    out.append(Violation("routing", uid, f"flow {frac:.4f} on {pid} under minimum"))
            load = stage1.share[(uid, bid)] * demand_profile(sc, stage1, uid).net
            for pid, frac in mine.items():
                for ln in paths[pid].links:
                    link_load[ln.id] += frac * load
            worst = max(paths[pid].latency_s for pid in mine)
            col, route = columns[(uid, bid)]
            if col - route + worst > deadline:
                out.append(
                    Violation("deadline", uid, f"stage-2 latency via {bid} exceeds budget")
                )
        stray = set(chosen) - {
            p.id for bid in stage1.assoc[uid] for p in sc.paths(bid, cid)
        }
        if stray:
            out.append(Violation("routing", uid, f"flow on unknown paths {sorted(stray)}"))

    for ln in sc.links:
        if link_load[ln.id] > ln.capacity_bps * (1 + _REL_TOL):
            out.append(
                Violation(
                    "link",
                    ln.id,
                    f"flow {link_load[ln.id]:.6g} over capacity {ln.capacity_bps:.6g}",
                )
            )
    return out
