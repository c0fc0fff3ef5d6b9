"""Admission, multi-connectivity association and PRB budgeting.

Every user enters at their headset's lowest resolution and frame rate and
asks each candidate base station for enough PRB grants to carry that
stream. A grant is one PRB for one TTI; a base station's budget over the
scheduling window is usable_prbs * ttis_per_window. Users hold preference
lists sorted by SINR and can displace worse-placed incumbents when a cell
is full. Users that no single cell can carry retry with their demand split
across two, then three cells (equal share per serving cell, up to the
configured connection cap).

A second phase (maximize_qoe) then walks admitted users most-dissatisfied
first and raises resolution (quality players) or frame rate (performance
players) one rung at a time while the PRB pool, per-cell throughput, the
frame queue and the per-frame deadline keep holding.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .radio import (
    frame_bits,
    latency_breakdown,
    link_tables,
    routing_latency_s,
    traffic_load_bps,
)
from .scenario import BaseStation, RadioParams, Scenario, distance, pixels

_EVICTION_BUDGET = 3  # re-queue a displaced user at most this many times per pass
_REL_TOL = 1e-9


@dataclass(frozen=True)
class Violation:
    kind: str
    subject: str
    detail: str


@dataclass(frozen=True)
class Stage1Solution:
    """Association, PRB grants and stream settings for admitted users.

    assoc lists serving cells in the user's preference order; prbs counts
    PRB-TTI grants over the scheduling window; share is the fraction of the
    video stream each serving cell carries (equal split).
    """

    assoc: dict[str, tuple[str, ...]]
    prbs: dict[tuple[str, str], int]
    resolution: dict[str, tuple[int, int]]
    frame_rate: dict[str, int]
    share: dict[tuple[str, str], float]
    admitted: frozenset[str]


def grant_pool(bs: BaseStation, radio: RadioParams) -> int:
    """Schedulable grants per window: one grant is one PRB for one TTI."""
    return bs.usable_prbs * radio.ttis_per_window


def is_quality(sc: Scenario, uid: str) -> bool:
    return sc.game_of(sc.user(uid)).preference_mode == "quality"


def qoe_stage1(sc: Scenario, solution: Stage1Solution, uid: str) -> float:
    """Log satisfaction over the user's own axis of preference.

    Quality players score the pixel ratio of the selected resolution over
    their headset's minimum; performance players score the frame-rate ratio.
    The minimum option scores zero.
    """
    if uid not in solution.admitted:
        raise ValueError(f"user {uid} not admitted")
    hs = sc.headset_of(sc.user(uid))
    if is_quality(sc, uid):
        return math.log(pixels(solution.resolution[uid]) / pixels(hs.resolutions[0]))
    return math.log(solution.frame_rate[uid] / hs.frame_rates[0])


def total_qoe_stage1(sc: Scenario, solution: Stage1Solution) -> float:
    return sum(qoe_stage1(sc, solution, uid) for uid in solution.admitted)


# ---------------------------------------------------------------------------
# Shared solver context


class _Ctx:
    """Per-scenario caches: link rates, routing, ranking, capacities."""

    def __init__(self, sc: Scenario, n_max: int):
        self.sc = sc
        self.n = n_max
        lt = link_tables(sc)
        self.uord = {u.id: i for i, u in enumerate(sc.users)}
        self.bord = {b.id: i for i, b in enumerate(sc.base_stations)}
        self.se = {}
        self.prop = {}
        self.cands: dict[str, list[str]] = {}
        self.rank: dict[str, dict[str, int]] = {}
        for i, u in enumerate(sc.users):
            covering = [
                (float(-lt.sinr[i, j]), self.bord[b.id], b.id)
                for j, b in enumerate(sc.base_stations)
                if distance(u.position, b.position) <= b.coverage_radius_m
            ]
            covering.sort()
            self.cands[u.id] = [bid for _, _, bid in covering]
            self.rank[u.id] = {bid: k for k, (_, _, bid) in enumerate(covering)}
            for _, j, bid in covering:
                self.se[(u.id, bid)] = float(lt.se_bps[i, j])
                self.prop[(u.id, bid)] = (
                    distance(u.position, sc.bs(bid).position) / sc.radio.speed_of_light_mps
                )
        self.pool = {b.id: grant_pool(b, sc.radio) for b in sc.base_stations}
        self.cap = {b.id: b.frame_capacity_fps for b in sc.base_stations}
        self.proc = {b.id: b.processing_capacity_bps for b in sc.base_stations}
        self.routing = {b.id: routing_latency_s(sc, b) for b in sc.base_stations}
        self.render_speed = {
            b.id: sc.cn(b.nearest_cn).render_speed_pps for b in sc.base_stations
        }

    def fixed_s(self, uid: str, bid: str, res, fps) -> float:
        """Per-column latency before the air interface, worst-case queue.

        The queueing term uses the solver's admission cap (half the frame
        capacity), so later admissions can never break an earlier check.
        """
        bits = frame_bits(self.sc, res)
        return (
            self.routing[bid]
            + pixels(res) * fps / self.render_speed[bid]
            + self.prop[(uid, bid)]
            + bits / self.proc[bid]
            + 2.0 / self.cap[bid]
        )

    def demand(self, uid: str, bid: str, parts: int, res, fps) -> int | None:
        """Grants one cell must give when the stream is split parts ways.

        Sized for the larger of the carried bit rate and the grants needed
        to push a whole frame over the air inside the deadline.  The frame
        never shrinks with a split, so the deadline term ignores parts.
        """
        se = self.se.get((uid, bid), 0.0)
        if se <= 0:
            return None
        budget = self.sc.radio.deadline_for(fps) + 1e-12 - self.fixed_s(uid, bid, res, fps)
        if budget <= 0:
            return None
        load = traffic_load_bps(self.sc, 1.0, res, fps)
        need = math.ceil(load / (parts * se))
        tight = math.ceil(frame_bits(self.sc, res) / (budget * se))
        return max(need, tight, self.sc.radio.tti_groups_for(fps))

    def column_ok(self, uid: str, bid: str, grants: int, res, fps) -> bool:
        """Deadline check for one serving cell, worst-case queue assumed."""
        if grants <= 0:
            return False
        bits = frame_bits(self.sc, res)
        total = self.fixed_s(uid, bid, res, fps) + bits / (grants * self.se[(uid, bid)])
        return total <= self.sc.radio.deadline_for(fps) + 1e-12


class _State:
    """Mutable allocation while solving."""

    def __init__(self, ctx: _Ctx):
        self.ctx = ctx
        self.place: dict[str, dict[str, int]] = {}  # uid -> bid -> grants
        self.res: dict[str, tuple[int, int]] = {}
        self.fps: dict[str, int] = {}
        self.used = {bid: 0 for bid in ctx.pool}
        self.arrivals = {bid: 0.0 for bid in ctx.pool}

    def add(self, uid: str, placements: dict[str, int], res, fps):
        self.place[uid] = placements
        self.res[uid] = res
        self.fps[uid] = fps
        for bid, g in placements.items():
            self.used[bid] += g
            self.arrivals[bid] += fps

    def remove(self, uid: str):
        for bid, g in self.place.pop(uid).items():
            self.used[bid] -= g
            self.arrivals[bid] -= self.fps[uid]
        del self.res[uid]
        del self.fps[uid]

    def to_solution(self) -> Stage1Solution:
        assoc = {}
        prbs = {}
        share = {}
        for uid, placements in self.place.items():
            bids = tuple(placements)
            assoc[uid] = bids
            for bid, g in placements.items():
                prbs[(uid, bid)] = g
                share[(uid, bid)] = 1.0 / len(bids)
        return Stage1Solution(
            assoc=assoc,
            prbs=prbs,
            resolution=dict(self.res),
            frame_rate=dict(self.fps),
            share=share,
            admitted=frozenset(self.place),
        )


def _state_from_solution(ctx: _Ctx, solution: Stage1Solution) -> _State:
    st = _State(ctx)
    for uid in solution.admitted:
        placements = {bid: solution.prbs[(uid, bid)] for bid in solution.assoc[uid]}
        st.add(uid, placements, solution.resolution[uid], solution.frame_rate[uid])
    return st


# ---------------------------------------------------------------------------
# Association


def _try_place(ctx: _Ctx, st: _State, uid: str, parts: int) -> list[str] | None:
    """Give uid `parts` cells at entry settings; returns displaced users.

    Nothing is committed unless all `parts` cells are secured, so a failed
    attempt leaves the allocation untouched. Displacement follows strict
    preference: the candidate must rank a cell higher in its own list than
    the incumbent does in its own, and the worst-placed incumbent goes
    first (ties broken toward the later-generated user).
    """
    sc = ctx.sc
    hs = sc.headset_of(sc.user(uid))
    res, fps = hs.resolutions[0], hs.frame_rates[0]
    chosen: list[tuple[str, int]] = []
    evicted: set[str] = set()
    freed_pool = {bid: 0 for bid in ctx.pool}
    freed_arr = {bid: 0.0 for bid in ctx.pool}
    eviction_order: list[str] = []

    for bid in ctx.cands[uid]:
        if len(chosen) == parts:
            break
        ask = ctx.demand(uid, bid, parts, res, fps)
        if ask is None or not ctx.column_ok(uid, bid, ask, res, fps):
            continue
        pool_left = ctx.pool[bid] - st.used[bid] + freed_pool[bid]
        arr_left = 0.5 * ctx.cap[bid] - st.arrivals[bid] + freed_arr[bid]
        if ask <= pool_left and fps <= arr_left:
            chosen.append((bid, ask))
            continue
        # cell is full: plan displacements among strictly worse-placed users
        my_rank = ctx.rank[uid][bid]
        incumbents = [
            v
            for v in st.place
            if bid in st.place[v] and v not in evicted and ctx.rank[v][bid] > my_rank
        ]
        incumbents.sort(key=lambda v: (ctx.rank[v][bid], ctx.uord[v]), reverse=True)
        snap_pool = dict(freed_pool)
        snap_arr = dict(freed_arr)
        picked: list[str] = []
        for v in incumbents:
            picked.append(v)
            for vb, g in st.place[v].items():
                freed_pool[vb] += g
                freed_arr[vb] += st.fps[v]
            pool_left = ctx.pool[bid] - st.used[bid] + freed_pool[bid]
            arr_left = 0.5 * ctx.cap[bid] - st.arrivals[bid] + freed_arr[bid]
            if ask <= pool_left and fps <= arr_left:
                break
        pool_left = ctx.pool[bid] - st.used[bid] + freed_pool[bid]
        arr_left = 0.5 * ctx.cap[bid] - st.arrivals[bid] + freed_arr[bid]
        if ask <= pool_left and fps <= arr_left:
            evicted.update(picked)
            eviction_order.extend(picked)
            chosen.append((bid, ask))
        else:
            freed_pool.update(snap_pool)
            freed_arr.update(snap_arr)

    if len(chosen) < parts:
        return None
    for v in eviction_order:
        st.remove(v)
    st.add(uid, {bid: ask for bid, ask in chosen}, res, fps)
    return eviction_order


def vexa(sc: Scenario, max_connections: int | None = None) -> Stage1Solution:
    """Preference-driven admission with displacement, then QoE upgrades.

    Users are processed in a seeded random order. A pass places each
    pending user on `parts` cells; users no pass could place are reported
    unadmitted. Deterministic for a given scenario.
    """
    n = max_connections if max_connections is not None else sc.radio.max_connections
    ctx = _Ctx(sc, n)
    st = _State(ctx)
    rng = np.random.default_rng((sc.seed, 0xA55))
    remaining = [sc.users[i].id for i in rng.permutation(len(sc.users))]
    for parts in range(1, n + 1):
        queue = deque(remaining)
        failed: list[str] = []
        requeues = {uid: 0 for uid in remaining}
        while queue:
            uid = queue.popleft()
            displaced = _try_place(ctx, st, uid, parts)
            if displaced is None:
                failed.append(uid)
                continue
            for v in displaced:
                requeues[v] = requeues.get(v, 0) + 1
                if requeues[v] <= _EVICTION_BUDGET:
                    queue.append(v)
                else:
                    failed.append(v)
        remaining = failed
        if not remaining:
            break
    return maximize_qoe(st.to_solution(), sc, max_connections=n)


def baseline_single_association(sc: Scenario) -> Stage1Solution:
    """Every user limited to one serving cell."""
    return vexa(sc, max_connections=1)


def baseline_dual_connectivity(sc: Scenario) -> Stage1Solution:
    """Every user limited to two serving cells."""
    return vexa(sc, max_connections=2)


# ---------------------------------------------------------------------------
# QoE upgrades


def _next_option(sc: Scenario, uid: str, solution_res, solution_fps):
    hs = sc.headset_of(sc.user(uid))
    if is_quality(sc, uid):
        i = hs.resolutions.index(solution_res)
        if i + 1 == len(hs.resolutions):
            return None
        return hs.resolutions[i + 1], solution_fps
    i = hs.frame_rates.index(solution_fps)
    if i + 1 == len(hs.frame_rates):
        return None
    return solution_res, hs.frame_rates[i + 1]


def _max_qoe(sc: Scenario, uid: str) -> float:
    hs = sc.headset_of(sc.user(uid))
    if is_quality(sc, uid):
        return math.log(pixels(hs.resolutions[-1]) / pixels(hs.resolutions[0]))
    return math.log(hs.frame_rates[-1] / hs.frame_rates[0])


def _current_qoe(sc: Scenario, st: _State, uid: str) -> float:
    hs = sc.headset_of(sc.user(uid))
    if is_quality(sc, uid):
        return math.log(pixels(st.res[uid]) / pixels(hs.resolutions[0]))
    return math.log(st.fps[uid] / hs.frame_rates[0])


def _try_upgrade(ctx: _Ctx, st: _State, uid: str) -> bool:
    nxt = _next_option(ctx.sc, uid, st.res[uid], st.fps[uid])
    if nxt is None:
        return False
    res2, fps2 = nxt
    placements = st.place[uid]
    parts = len(placements)
    new_grants = {}
    for bid, g in placements.items():
        g2 = ctx.demand(uid, bid, parts, res2, fps2)
        if g2 is None or not ctx.column_ok(uid, bid, g2, res2, fps2):
            return False
        if st.used[bid] - g + g2 > ctx.pool[bid]:
            return False
        if st.arrivals[bid] - st.fps[uid] + fps2 > 0.5 * ctx.cap[bid]:
            return False
        new_grants[bid] = g2
    st.remove(uid)
    st.add(uid, new_grants, res2, fps2)
    return True


def maximize_qoe(
    solution: Stage1Solution, sc: Scenario, max_connections: int | None = None
) -> Stage1Solution:
    """Raise selections one rung at a time, most-dissatisfied user first.

    Each round sorts admitted users by the gap between their best achievable
    and current QoE and offers everyone a single step. Stops at the fixed
    point where no single upgrade stays feasible. Upgrades only ever move
    selections up.
    """
    n = max_connections if max_connections is not None else sc.radio.max_connections
    ctx = _Ctx(sc, n)
    st = _state_from_solution(ctx, solution)
    changed = True
    while changed:
        changed = False
        order = sorted(
            st.place,
            key=lambda uid: (
                -(_max_qoe(sc, uid) - _current_qoe(sc, st, uid)),
                ctx.uord[uid],
            ),
        )
        for uid in order:
            if _try_upgrade(ctx, st, uid):
                changed = True
    return st.to_solution()


# ---------------------------------------------------------------------------
# Verification


def verify_stage1(solution: Stage1Solution, sc: Scenario) -> list[Violation]:
    """Independent constraint audit of a stage-1 solution.

    Checks association bounds, grant exclusivity and pool capacity, menu
    membership of the selections, share normalization, per-cell throughput
    against the carried load, and the end-to-end deadline with the exact
    queue occupancy produced by the admitted set.
    """
    out: list[Violation] = []
    known = {u.id for u in sc.users}
    n = sc.radio.max_connections

    for uid in sorted(solution.admitted):
        if uid not in known:
            out.append(Violation("unknown-user", uid, "admitted id not in scenario"))
            continue
        bids = solution.assoc.get(uid, ())
        if not 1 <= len(bids) <= n:
            out.append(
                Violation(
                    "association-bounds",
                    uid,
                    f"{len(bids)} serving cells, allowed 1..{n}",
                )
            )
        if len(set(bids)) != len(bids):
            out.append(Violation("association-bounds", uid, "duplicate serving cell"))
        hs = sc.headset_of(sc.user(uid))
        res = solution.resolution.get(uid)
        if res not in hs.resolutions:
            out.append(Violation("selection", uid, f"resolution {res} not offered by headset"))
        fps = solution.frame_rate.get(uid)
        if fps not in hs.frame_rates:
            out.append(Violation("selection", uid, f"frame rate {fps} not offered by headset"))
        shares = [solution.share.get((uid, bid)) for bid in bids]
        if any(s is None or s <= 0 for s in shares):
            out.append(Violation("share", uid, "missing or non-positive share"))
        elif bids and abs(sum(shares) - 1.0) > 1e-9:
            out.append(Violation("share", uid, f"shares sum to {sum(shares):.12f}"))

    for uid in solution.assoc:
        if uid not in solution.admitted:
            out.append(Violation("exclusivity", uid, "association entry for unadmitted user"))

    for (uid, bid), g in solution.prbs.items():
        if g <= 0:
            out.append(Violation("exclusivity", f"{uid}/{bid}", "non-positive grant entry"))
        if uid not in solution.admitted or bid not in solution.assoc.get(uid, ()):
            out.append(Violation("exclusivity", f"{uid}/{bid}", "grants outside association"))
    for uid in solution.admitted:
        for bid in solution.assoc.get(uid, ()):
            if solution.prbs.get((uid, bid), 0) <= 0:
                out.append(Violation("exclusivity", f"{uid}/{bid}", "serving cell has no grants"))

    for bs in sc.base_stations:
        used = sum(g for (uid, bid), g in solution.prbs.items() if bid == bs.id)
        pool = grant_pool(bs, sc.radio)
        if used > pool:
            out.append(Violation("pool", bs.id, f"{used} grants allocated, budget {pool}"))

    arrivals = {b.id: 0.0 for b in sc.base_stations}
    for uid in solution.admitted:
        if uid not in known or uid not in solution.frame_rate:
            continue
        for bid in solution.assoc.get(uid, ()):
            if bid in arrivals:
                arrivals[bid] += solution.frame_rate[uid]

    lt = link_tables(sc)
    for uid in sorted(solution.admitted):
        if uid not in known:
            continue
        u = sc.user(uid)
        bids = solution.assoc.get(uid, ())
        res = solution.resolution.get(uid)
        fps = solution.frame_rate.get(uid)
        if not bids or res not in sc.headset_of(u).resolutions or fps not in sc.headset_of(u).frame_rates:
            continue
        load = traffic_load_bps(sc, 1.0, res, fps)
        for bid in bids:
            if bid not in arrivals:
                out.append(Violation("association-bounds", uid, f"unknown cell {bid}"))
                continue
            carried = solution.share.get((uid, bid), 0.0) * load
            tp = solution.prbs.get((uid, bid), 0) * lt.se_of(uid, bid)
            if carried > tp * (1 + _REL_TOL) + 1e-9:
                out.append(
                    Violation(
                        "throughput",
                        f"{uid}/{bid}",
                        f"carries {carried:.1f} b/s over capacity {tp:.1f} b/s",
                    )
                )
        if any(bid not in arrivals for bid in bids):
            continue
        lb = latency_breakdown(
            sc,
            u,
            tuple(bids),
            res,
            fps,
            {bid: solution.prbs.get((uid, bid), 0) for bid in bids},
            arrivals,
        )
        if lb.total_s > sc.radio.deadline_for(fps) + 1e-12:
            out.append(
                Violation(
                    "deadline",
                    uid,
                    f"latency {lb.total_s * 1e3:.3f} ms over {sc.radio.deadline_for(fps) * 1e3:.3f} ms"
                    f" (binding cell {lb.binding_bs})",
                )
            )
    return out
