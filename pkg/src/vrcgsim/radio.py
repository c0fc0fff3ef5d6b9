"""Radio link model: path loss, SINR, throughput and the end-to-end latency budget.

The access link follows the urban street-canyon model at sub-6 GHz with a
distance threshold separating line-of-sight from non-line-of-sight. Latency
is decomposed into six parts (crosshaul routing, rendering, propagation,
transmission, frame processing, queueing) and a frame misses its deadline
when the sum for some serving base station exceeds the frame period.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import BaseStation, Scenario, User, distance, pixels


def path_loss_db(distance_m: float, carrier_ghz: float, los_threshold_m: float,
                 user_height_m: float = 1.5) -> float:
    """Street-canyon path loss in dB; LoS below the threshold distance."""
    d = max(distance_m, 1.0)  # clamp: the model is not defined at zero range
    if distance_m <= los_threshold_m:
        return 32.4 + 21.0 * math.log10(d) + 20.0 * math.log10(carrier_ghz)
    return (
        35.3 + 22.4 * math.log10(d)
        + 21.3 * math.log10(carrier_ghz)
        - 0.3 * (user_height_m - 1.5)
    )


def _dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class LinkBudget:
    rx_power_w: float
    interference_w: float
    noise_w: float

    @property
    def sinr(self) -> float:
        return self.rx_power_w / (self.interference_w + self.noise_w)


def link_budget(sc: Scenario, user: User, bs: BaseStation) -> LinkBudget:
    """Received power and co-channel interference for one user-BS link.

    Interference sums received power from every other base station on the
    same channel; the noise floor is taken over one PRB of bandwidth.
    """
    r = sc.radio

    def rx_from(b: BaseStation) -> float:
        pl = path_loss_db(
            distance(user.position, b.position), r.carrier_ghz, r.los_threshold_m, user.height_m
        )
        return _dbm_to_watts(b.tx_power_dbm - pl)

    interference = sum(
        rx_from(b) for b in sc.base_stations if b.id != bs.id and b.channel_id == bs.channel_id
    )
    noise = _dbm_to_watts(r.noise_density_dbm_hz) * bs.prb_bandwidth_hz
    return LinkBudget(rx_power_w=rx_from(bs), interference_w=interference, noise_w=noise)


def sinr(sc: Scenario, user: User, bs: BaseStation) -> float:
    return link_budget(sc, user, bs).sinr


def spectral_efficiency(sc: Scenario, user: User, bs: BaseStation) -> float:
    """Shannon rate of one PRB, bits/s."""
    return bs.prb_bandwidth_hz * math.log2(1.0 + sinr(sc, user, bs))


def throughput_bps(sc: Scenario, user: User, bs: BaseStation, prbs: int) -> float:
    return prbs * spectral_efficiency(sc, user, bs)


@dataclass(frozen=True)
class LinkTables:
    """SINR and one-PRB rate for every user/BS pair, computed in one pass."""

    user_ids: tuple[str, ...]
    bs_ids: tuple[str, ...]
    sinr: np.ndarray  # [user, bs]
    se_bps: np.ndarray  # [user, bs], bits/s of a single PRB

    def se_of(self, uid: str, bid: str) -> float:
        return float(self.se_bps[self.user_ids.index(uid), self.bs_ids.index(bid)])


def link_tables(sc: Scenario) -> LinkTables:
    """Vectorized link_budget over all pairs; agrees with the scalar path."""
    up = np.array([u.position for u in sc.users], dtype=float).reshape(-1, 2)
    bp = np.array([b.position for b in sc.base_stations], dtype=float).reshape(-1, 2)
    d = np.hypot(up[:, None, 0] - bp[None, :, 0], up[:, None, 1] - bp[None, :, 1])
    dc = np.maximum(d, 1.0)
    r = sc.radio
    h = np.array([u.height_m for u in sc.users], dtype=float)[:, None]
    los = 32.4 + 21.0 * np.log10(dc) + 20.0 * math.log10(r.carrier_ghz)
    nlos = (
        35.3 + 22.4 * np.log10(dc)
        + 21.3 * math.log10(r.carrier_ghz)
        - 0.3 * (h - 1.5)
    )
    pl = np.where(d <= r.los_threshold_m, los, nlos)
    tx = np.array([b.tx_power_dbm for b in sc.base_stations], dtype=float)[None, :]
    rx = 10.0 ** ((tx - pl - 30.0) / 10.0)
    bw = np.array([b.prb_bandwidth_hz for b in sc.base_stations], dtype=float)[None, :]
    noise = 10.0 ** ((r.noise_density_dbm_hz - 30.0) / 10.0) * bw
    ch = np.array([b.channel_id for b in sc.base_stations])
    same = (ch[None, :] == ch[:, None]).astype(float)
    interference = rx @ same - rx
    sinr_m = rx / (interference + noise)
    se = bw * np.log2(1.0 + sinr_m)
    return LinkTables(
        user_ids=tuple(u.id for u in sc.users),
        bs_ids=tuple(b.id for b in sc.base_stations),
        sinr=sinr_m,
        se_bps=se,
    )


def traffic_load_bps(
    sc: Scenario, share: float, resolution: tuple[int, int], fps: float
) -> float:
    """Downlink bitrate of a video sub-stream: share of the compressed frame flow."""
    r = sc.radio
    return share * pixels(resolution) * r.bits_per_pixel * r.compression_rate * fps


def frame_bits(sc: Scenario, resolution: tuple[int, int]) -> float:
    """Compressed size of one full frame in bits."""
    return pixels(resolution) * sc.radio.bits_per_pixel * sc.radio.compression_rate


@dataclass(frozen=True)
class LatencyBreakdown:
    routing_s: float
    render_s: float
    propagation_s: float
    transmission_s: float
    processing_s: float
    buffer_s: float
    binding_bs: str  # base station whose column sum is the bottleneck

    @property
    def total_s(self) -> float:
        return (
            self.routing_s
            + self.render_s
            + self.propagation_s
            + self.transmission_s
            + self.processing_s
            + self.buffer_s
        )


def routing_latency_s(sc: Scenario, bs: BaseStation, cn_id: str | None = None) -> float:
    """Best crosshaul route latency from the rendering node to the BS."""
    cid = cn_id if cn_id is not None else bs.nearest_cn
    ps = sc.paths(bs.id, cid)
    if not ps:
        return math.inf
    return min(pth.latency_s for pth in ps)


def render_latency_s(sc: Scenario, resolution: tuple[int, int], fps: float, cn_id: str) -> float:
    return pixels(resolution) * fps / sc.cn(cn_id).render_speed_pps


def buffer_latency_s(bs: BaseStation, arrival_fps: float) -> float:
    """Queueing delay at the BS frame buffer; infinite once arrivals saturate it."""
    slack = bs.frame_capacity_fps - arrival_fps
    if slack <= 0:
        return math.inf
    return 1.0 / slack


def latency_breakdown(
    sc: Scenario,
    user: User,
    serving: tuple[str, ...],
    resolution: tuple[int, int],
    fps: float,
    prbs_per_bs: dict[str, int],
    arrivals_fps: dict[str, float],
    cn_for_bs: dict[str, str] | None = None,
) -> LatencyBreakdown:
    """Six-part frame latency; the slowest serving base station binds.

    arrivals_fps is the total frame arrival rate per BS including this user.
    """
    if not serving:
        raise ValueError(f"user {user.id} has no serving base station")
    bits = frame_bits(sc, resolution)
    best: LatencyBreakdown | None = None
    for bid in serving:
        bs = sc.bs(bid)
        cn_id = (cn_for_bs or {}).get(bid, bs.nearest_cn)
        grants = prbs_per_bs.get(bid, 0)
        if grants <= 0:
            tx = math.inf
        else:
            tx = bits / throughput_bps(sc, user, bs, grants)
        cand = LatencyBreakdown(
            routing_s=routing_latency_s(sc, bs, cn_id),
            render_s=render_latency_s(sc, resolution, fps, cn_id),
            propagation_s=distance(user.position, bs.position) / sc.radio.speed_of_light_mps,
            transmission_s=tx,
            processing_s=bits / bs.processing_capacity_bps,
            buffer_s=buffer_latency_s(bs, arrivals_fps.get(bid, 0.0)),
            binding_bs=bid,
        )
        if best is None or cand.total_s > best.total_s:
            best = cand
    assert best is not None
    return best


def check_deadline(sc: Scenario, breakdown: LatencyBreakdown, fps: float) -> bool:
    return breakdown.total_s <= sc.radio.deadline_for(fps) + 1e-12
