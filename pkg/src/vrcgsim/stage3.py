"""Per-object resolution refinement and grant scheduling over TTIs.

Stage 1 fixes one resolution for a user's whole frame, but attention is
not uniform: a player watches one or two objects closely and the rest
peripherally. amps redistributes resolution between a user's objects
without raising the traffic volume the earlier stages budgeted for, so
closely watched objects sharpen at the expense of background ones.

mtpsched then turns each user's grant total into a concrete TTI
schedule, spacing the grants so a freshly generated frame never waits
long for a transmission opportunity. Round-robin and proportional-fair
schedulers are provided as comparison points; both hand out all PRBs of
every TTI and ignore grant totals and group coverage on purpose.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

from .radio import (
    frame_bits,
    link_tables,
    render_latency_s,
    routing_latency_s,
    traffic_load_bps,
)
from .scenario import Scenario, distance, pixels
from .stage1 import Stage1Solution, Violation, is_quality

ResMap = dict[tuple[str, str], tuple[int, int]]


@dataclass(frozen=True)
class Stage3Solution:
    """Object resolutions plus the per-TTI grant layout.

    schedule maps (bs, tti) to the users transmitting in that TTI with
    their PRB counts; TTIs without entries are omitted. tti_groups holds
    each user's group start offsets (group j spans [starts[j], starts[j+1])
    with the last group ending at the window).
    """

    object_resolution: ResMap
    schedule: dict[tuple[str, int], tuple[tuple[str, int], ...]]
    tti_groups: dict[str, tuple[int, ...]]


@dataclass(frozen=True)
class MtpReport:
    """Motion-to-photon latency per frame and per user."""

    average_s: dict[str, float]
    samples: dict[str, tuple[float, ...]]
    truncated: frozenset[str]  # users with frames still queued at window end


def group_starts(ttis: int, groups: int) -> tuple[int, ...]:
    """Start offsets of `groups` contiguous near-equal slices of the window."""
    return tuple(j * ttis // groups for j in range(groups))


def stage1_object_resolutions(sc: Scenario, stage1: Stage1Solution) -> ResMap:
    """Every object at the resolution stage 1 picked for the whole frame."""
    out: ResMap = {}
    for u in sc.users:
        if u.id not in stage1.admitted:
            continue
        for o in u.objects:
            out[(u.id, o.id)] = stage1.resolution[u.id]
    return out


def objects_load(
    sc: Scenario, stage1: Stage1Solution, resolutions: ResMap, uid: str
) -> float:
    """Downlink bit rate of one user's scene under per-object resolutions.

    Each object contributes its pixel share of a frame at its own
    resolution; with every object at the stage-1 selection this telescopes
    back to the stage-1 traffic load.
    """
    u = sc.user(uid)
    fps = stage1.frame_rate[uid]
    return sum(
        traffic_load_bps(sc, o.pixel_share, resolutions[(uid, o.id)], fps)
        for o in u.objects
    )


def qoe_stage3(
    sc: Scenario, stage1: Stage1Solution, resolutions: ResMap, uid: str
) -> float:
    """Attention-weighted log satisfaction over the user's objects."""
    u = sc.user(uid)
    hs = sc.headset_of(u)
    floor = pixels(hs.resolutions[0]) * hs.frame_rates[0]
    fps = stage1.frame_rate[uid]
    return sum(
        o.attention * math.log(pixels(resolutions[(uid, o.id)]) * fps / floor)
        for o in u.objects
    )


def total_qoe_stage3(
    sc: Scenario, stage1: Stage1Solution, resolutions: ResMap
) -> float:
    return sum(qoe_stage3(sc, stage1, resolutions, uid) for uid in stage1.admitted)


# ---------------------------------------------------------------------------
# Attention-aware resolution refinement


def amps(sc: Scenario, stage1: Stage1Solution) -> Stage3Solution:
    """Upgrade closely watched objects, paying with background ones.

    Users are visited from the most capable headset down. For each user,
    objects are tried in attention order: an object moves up one rung
    whenever the scene still fits the stage-1 traffic budget; otherwise a
    lower-attention object with the largest on-screen pixel area drops a
    rung to free room, and the swap is kept only when the attention
    weights make it a net gain. Passes repeat until nothing moves.
    """
    resolutions = stage1_object_resolutions(sc, stage1)
    users = [u for u in sc.users if u.id in stage1.admitted]
    users.sort(key=lambda u: (-pixels(sc.headset_of(u).resolutions[-1]), u.id))
    for u in users:
        rungs = sc.headset_of(u).resolutions
        budget = pixels(stage1.resolution[u.id]) * (1 + 1e-9)
        level = {o.id: rungs.index(stage1.resolution[u.id]) for o in u.objects}

        def screen_px() -> float:
            return sum(o.pixel_share * pixels(rungs[level[o.id]]) for o in u.objects)

        watched = sorted(u.objects, key=lambda o: (-o.attention, -o.pixel_share, o.id))
        moved = True
        while moved:
            moved = False
            for o in watched:
                if level[o.id] == len(rungs) - 1:
                    continue
                step = o.pixel_share * (
                    pixels(rungs[level[o.id] + 1]) - pixels(rungs[level[o.id]])
                )
                if screen_px() + step <= budget:
                    level[o.id] += 1
                    moved = True
                    continue
                gain = o.attention * math.log(
                    pixels(rungs[level[o.id] + 1]) / pixels(rungs[level[o.id]])
                )
                # background objects make the natural donors, but any
                # object may pay as long as the weighted gain test holds
                donors = sorted(
                    (p for p in u.objects if p.id != o.id and level[p.id] > 0),
                    key=lambda p: (
                        p.attention >= o.attention,
                        -p.pixel_share * pixels(rungs[level[p.id]]),
                        p.id,
                    ),
                )
                for p in donors:
                    freed = p.pixel_share * (
                        pixels(rungs[level[p.id]]) - pixels(rungs[level[p.id] - 1])
                    )
                    loss = p.attention * math.log(
                        pixels(rungs[level[p.id]]) / pixels(rungs[level[p.id] - 1])
                    )
                    if gain - loss <= 1e-12:
                        continue
                    if screen_px() + step - freed > budget:
                        continue
                    level[o.id] += 1
                    level[p.id] -= 1
                    moved = True
                    break
        for o in u.objects:
            resolutions[(u.id, o.id)] = rungs[level[o.id]]
    return mtpsched(sc, stage1, resolutions)


# ---------------------------------------------------------------------------
# Grant scheduling


def _nearest_free(avail: list[int], target: int, lo: int, hi: int) -> int | None:
    """Closest TTI to target among the free ones in [lo, hi), ties earlier."""
    left = bisect.bisect_left(avail, lo)
    right = bisect.bisect_left(avail, hi)
    if left >= right:
        return None
    pos = bisect.bisect_left(avail, target, left, right)
    best = None
    if pos < right:
        best = avail[pos]
    if pos > left:
        cand = avail[pos - 1]
        if best is None or target - cand <= best - target:
            best = cand
    return best


def mtpsched(
    sc: Scenario, stage1: Stage1Solution, resolutions: ResMap | None = None
) -> Stage3Solution:
    """Spread each user's grants evenly across the scheduling window.

    Two passes per base station, both over users in catalog order. The
    first pins one grant into every TTI group of every user, aiming at
    the evenly spaced offsets (j+1)*K/(T+1) and falling back to the
    nearest free TTI inside the group. The second spreads the remaining
    grants over the whole window the same way. Raises ValueError when a
    base station cannot hold its users' grants or a group is already
    packed solid.
    """
    if resolutions is None:
        resolutions = stage1_object_resolutions(sc, stage1)
    ttis = sc.radio.ttis_per_window
    groups: dict[str, tuple[int, ...]] = {}
    for uid in stage1.admitted:
        t = sc.radio.tti_groups_for(stage1.frame_rate[uid])
        groups[uid] = group_starts(ttis, t)

    schedule: dict[tuple[str, int], tuple[tuple[str, int], ...]] = {}
    for b in sc.base_stations:
        owed = [
            (u.id, stage1.prbs[(u.id, b.id)])
            for u in sc.users
            if u.id in stage1.admitted and b.id in stage1.assoc[u.id]
        ]
        if not owed:
            continue
        total = sum(y for _, y in owed)
        if total > b.usable_prbs * ttis:
            raise ValueError(
                f"{total} grants exceed the {b.usable_prbs * ttis} "
                f"schedulable on {b.id}"
            )
        free = [b.usable_prbs] * ttis
        avail = list(range(ttis))
        counts: dict[tuple[str, int], int] = {}

        def take(uid: str, tti: int):
            free[tti] -= 1
            counts[(uid, tti)] = counts.get((uid, tti), 0) + 1
            if free[tti] == 0:
                avail.pop(bisect.bisect_left(avail, tti))

        for uid, y in owed:
            starts = groups[uid]
            bounds = list(starts) + [ttis]
            for j in range(min(len(starts), y)):
                lo, hi = bounds[j], bounds[j + 1]
                target = min(max((j + 1) * ttis // (len(starts) + 1), lo), hi - 1)
                tti = _nearest_free(avail, target, lo, hi)
                if tti is None:
                    raise ValueError(
                        f"no spare TTI left in group {j} on {b.id}"
                    )
                take(uid, tti)
        for uid, y in owed:
            extra = y - len(groups[uid])
            for i in range(1, max(0, extra) + 1):
                target = i * ttis // (extra + 1)
                tti = _nearest_free(avail, min(target, ttis - 1), 0, ttis)
                if tti is None:
                    raise ValueError(f"schedule of {b.id} is full")
                take(uid, tti)

        per_tti: dict[int, list[tuple[str, int]]] = {}
        for (uid, tti), n in counts.items():
            per_tti.setdefault(tti, []).append((uid, n))
        for tti, entries in per_tti.items():
            schedule[(b.id, tti)] = tuple(sorted(entries))
    return Stage3Solution(resolutions, schedule, groups)


def baseline_round_robin(sc: Scenario, stage1: Stage1Solution) -> Stage3Solution:
    """Hand out every PRB of every TTI in fixed-size turns.

    The turn pointer survives TTI boundaries, so over the window each
    user gets the same number of quanta regardless of where the TTI cuts
    fall. Grant totals from stage 1 are ignored.
    """
    resolutions = stage1_object_resolutions(sc, stage1)
    ttis = sc.radio.ttis_per_window
    groups = {
        uid: group_starts(ttis, sc.radio.tti_groups_for(stage1.frame_rate[uid]))
        for uid in stage1.admitted
    }
    schedule: dict[tuple[str, int], tuple[tuple[str, int], ...]] = {}
    for b in sc.base_stations:
        users = [
            u.id
            for u in sc.users
            if u.id in stage1.admitted and b.id in stage1.assoc[u.id]
        ]
        if not users:
            continue
        quantum = max(1, b.usable_prbs // 2)
        ptr = 0
        for tti in range(ttis):
            left = b.usable_prbs
            counts: dict[str, int] = {}
            while left > 0:
                uid = users[ptr % len(users)]
                ptr += 1
                grab = min(quantum, left)
                counts[uid] = counts.get(uid, 0) + grab
                left -= grab
            schedule[(b.id, tti)] = tuple(sorted(counts.items()))
    return Stage3Solution(resolutions, schedule, groups)


def baseline_proportional_fair(
    sc: Scenario, stage1: Stage1Solution
) -> Stage3Solution:
    """Give each TTI wholesale to the user with the best rate-to-average.

    Averages follow an exponentially weighted mean over a 100-TTI
    horizon, seeded with the one-PRB rate so nobody starts at zero. Ties
    go to the lowest user id. Grant totals from stage 1 are ignored.
    """
    resolutions = stage1_object_resolutions(sc, stage1)
    ttis = sc.radio.ttis_per_window
    alpha = 1.0 / 100.0
    lt = link_tables(sc)
    groups = {
        uid: group_starts(ttis, sc.radio.tti_groups_for(stage1.frame_rate[uid]))
        for uid in stage1.admitted
    }
    schedule: dict[tuple[str, int], tuple[tuple[str, int], ...]] = {}
    for b in sc.base_stations:
        users = [
            u.id
            for u in sc.users
            if u.id in stage1.admitted and b.id in stage1.assoc[u.id]
        ]
        if not users:
            continue
        rate = {uid: lt.se_of(uid, b.id) * b.usable_prbs for uid in users}
        avg = {uid: lt.se_of(uid, b.id) for uid in users}
        for tti in range(ttis):
            winner = min(users, key=lambda uid: (-rate[uid] / avg[uid], uid))
            schedule[(b.id, tti)] = ((winner, b.usable_prbs),)
            for uid in users:
                served = rate[uid] if uid == winner else 0.0
                avg[uid] = (1 - alpha) * avg[uid] + alpha * served
    return Stage3Solution(resolutions, schedule, groups)


# ---------------------------------------------------------------------------
# Motion-to-photon latency


def mtp_latency(
    solution: Stage3Solution, sc: Scenario, stage1: Stage1Solution
) -> MtpReport:
    """Frame-by-frame delivery delay under a schedule.

    Frames arrive at the user's frame period and drain in order through
    the TTIs the schedule gives that user; a grant of n PRBs in a TTI
    moves n * SE * window seconds worth of bits, the same accounting the
    grant sizing used. A frame finishes at the end of the TTI that sends
    its last bit, and whatever the window cannot drain is charged the
    full window and flagged. Fixed pipeline parts (routing, render,
    propagation, frame processing) are priced at the stage-1 selections
    with the worst serving cell deciding, and queueing is left out since
    the schedule itself is the queue.
    """
    ttis = sc.radio.ttis_per_window
    tti_s = sc.radio.tti_s
    window = sc.radio.window_s
    lt = link_tables(sc)

    capacity: dict[str, dict[int, float]] = {uid: {} for uid in stage1.admitted}
    for (bid, tti), entries in solution.schedule.items():
        for uid, n in entries:
            if uid not in capacity:
                continue
            bits = n * lt.se_of(uid, bid) * window
            capacity[uid][tti] = capacity[uid].get(tti, 0.0) + bits

    average: dict[str, float] = {}
    samples: dict[str, tuple[float, ...]] = {}
    truncated = set()
    for u in sc.users:
        if u.id not in stage1.admitted:
            continue
        fps = stage1.frame_rate[u.id]
        res = stage1.resolution[u.id]
        fixed = max(
            routing_latency_s(sc, sc.bs(bid))
            + render_latency_s(sc, res, fps, sc.bs(bid).nearest_cn)
            + distance(u.position, sc.bs(bid).position) / sc.radio.speed_of_light_mps
            + frame_bits(sc, res) / sc.bs(bid).processing_capacity_bps
            for bid in stage1.assoc[u.id]
        )
        per_frame = objects_load(sc, stage1, solution.object_resolution, u.id) / fps
        caps = [[tti, bits] for tti, bits in sorted(capacity[u.id].items())]
        n_frames = max(1, math.ceil(fps * window - 1e-9))
        out = []
        at = 0
        for i in range(n_frames):
            born = i / fps
            need = per_frame
            if need <= 0:
                out.append(fixed)
                continue
            eligible = math.ceil(born / tti_s - 1e-9)
            done = None
            while at < len(caps):
                tti, left = caps[at]
                if tti < eligible or left <= 1e-9:
                    at += 1
                    continue
                grab = min(need, left)
                caps[at][1] -= grab
                need -= grab
                if need <= 1e-9:
                    done = (tti + 1) * tti_s
                    break
                at += 1
            if done is None:
                done = window
                truncated.add(u.id)
            out.append(done - born + fixed)
        samples[u.id] = tuple(out)
        average[u.id] = sum(out) / len(out)
    return MtpReport(average, samples, frozenset(truncated))


# ---------------------------------------------------------------------------
# Verification


def verify_stage3(
    solution: Stage3Solution, sc: Scenario, stage1: Stage1Solution
) -> list[Violation]:
    """Independent audit of a stage-3 solution against stage-1 commitments."""
    out: list[Violation] = []
    lt = link_tables(sc)
    ttis = sc.radio.ttis_per_window

    wanted = {
        (u.id, o.id)
        for u in sc.users
        if u.id in stage1.admitted
        for o in u.objects
    }
    for key in sorted(wanted - set(solution.object_resolution)):
        out.append(Violation("objects", f"{key[0]}/{key[1]}", "object has no resolution"))
    for key in sorted(set(solution.object_resolution) - wanted):
        out.append(
            Violation("objects", f"{key[0]}/{key[1]}", "resolution for unknown object")
        )
    for u in sc.users:
        if u.id not in stage1.admitted:
            continue
        hs = sc.headset_of(u)
        for o in u.objects:
            res = solution.object_resolution.get((u.id, o.id))
            if res is not None and res not in hs.resolutions:
                out.append(
                    Violation("objects", f"{u.id}/{o.id}", f"{res} not offered by {hs.id}")
                )

    given: dict[tuple[str, str], int] = {}
    tx_ttis: dict[tuple[str, str], set[int]] = {}
    for (bid, tti), entries in solution.schedule.items():
        used = 0
        for uid, n in entries:
            if n <= 0:
                out.append(
                    Violation("grants", f"{uid}@{bid}", f"empty grant in TTI {tti}")
                )
            else:
                tx_ttis.setdefault((uid, bid), set()).add(tti)
            used += n
            given[(uid, bid)] = given.get((uid, bid), 0) + n
        if not 0 <= tti < ttis:
            out.append(Violation("grants", bid, f"TTI {tti} outside the window"))
        if used > sc.bs(bid).usable_prbs:
            out.append(
                Violation(
                    "capacity", bid, f"{used} PRBs in TTI {tti}, usable {sc.bs(bid).usable_prbs}"
                )
            )

    for (uid, bid), y in sorted(stage1.prbs.items()):
        got = given.get((uid, bid), 0)
        if got != y:
            out.append(
                Violation("grants", f"{uid}@{bid}", f"scheduled {got} of {y} grants")
            )
    for (uid, bid) in sorted(set(given) - set(stage1.prbs)):
        out.append(Violation("grants", f"{uid}@{bid}", "grants for unserved pair"))

    for u in sc.users:
        if u.id not in stage1.admitted:
            continue
        starts = solution.tti_groups.get(u.id)
        if not starts:
            out.append(Violation("groups", u.id, "no TTI groups recorded"))
            continue
        bounds = list(starts) + [ttis]
        for bid in stage1.assoc[u.id]:
            mine = tx_ttis.get((u.id, bid), set())
            for j in range(len(starts)):
                if not any(bounds[j] <= tti < bounds[j + 1] for tti in mine):
                    out.append(
                        Violation(
                            "groups", f"{u.id}@{bid}", f"group {j} has no transmission"
                        )
                    )
                    break

    for u in sc.users:
        if u.id not in stage1.admitted:
            continue
        try:
            scene = objects_load(sc, stage1, solution.object_resolution, u.id)
        except KeyError:
            continue  # already reported as a missing object
        ceiling = traffic_load_bps(
            sc, 1.0, stage1.resolution[u.id], stage1.frame_rate[u.id]
        )
        if scene > ceiling * (1 + 1e-9):
            out.append(
                Violation(
                    "load", u.id, f"scene needs {scene:.6g} bit/s over the {ceiling:.6g} budget"
                )
            )
        served = sum(
            given.get((u.id, bid), 0) * lt.se_of(u.id, bid)
            for bid in stage1.assoc[u.id]
        )
        if served < scene * (1 - 1e-9):
            out.append(
                Violation(
                    "throughput", u.id, f"served {served:.6g} bit/s of {scene:.6g}"
                )
            )
    return out
