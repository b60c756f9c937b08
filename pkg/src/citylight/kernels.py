"""Per-tick simulation kernels.

Each kernel is written once as plain array code and compiled with numba when
the numba backend is active. ``advance_lanes`` and ``zone_counts`` also have
vectorised numpy twins (``*_np``) used by the numpy backend; the loop
versions stay importable uncompiled as ``*_py`` so tests can compare all
three bit for bit.

Lane FIFOs are ring buffers: ``buf[l, (head[l] + k) % cap[l]]`` is the k-th
vehicle from the stop line, the first ``nq[l]`` of them are queued.
"""
from __future__ import annotations

import numpy as np

from ._accel import USE_NUMBA, njit

ACTIVE = 1
SERVED = 2


def _advance_lanes(buf, head, cnt, nq, lane_len, lane_vmax, spacing,
                   veh_pos, veh_speed, veh_ridx, veh_rlen, veh_status, veh_arrive, now):
    """Move every vehicle one second; returns the number served on exit."""
    served = 0
    n_lanes = buf.shape[0]
    for l in range(n_lanes):
        c = cnt[l]
        if c == 0:
            continue
        cap = buf.shape[1]
        L = lane_len[l]
        v = lane_vmax[l]
        q = nq[l]
        h = head[l]
        for p in range(q):
            vid = buf[l, (h + p) % cap]
            slot_pos = L - p * spacing
            if slot_pos > veh_pos[vid]:
                veh_pos[vid] = slot_pos
        k = q
        while k < c:
            vid = buf[l, (h + k) % cap]
            newpos = veh_pos[vid] + v
            back = L - q * spacing
            if newpos >= back:
                if q == 0 and veh_ridx[vid] == veh_rlen[vid] - 1:
                    veh_pos[vid] = L
                    veh_speed[vid] = v
                    veh_status[vid] = SERVED
                    veh_arrive[vid] = now + 1
                    buf[l, h % cap] = -1
                    h = (h + 1) % cap
                    c -= 1
                    served += 1
                    continue
                if back > veh_pos[vid]:
                    veh_pos[vid] = back
                veh_speed[vid] = 0.0
                q += 1
            else:
                veh_pos[vid] = newpos
                veh_speed[vid] = v
            k += 1
        head[l] = h
        cnt[l] = c
        nq[l] = q
    return served


@njit(cache=True)
def _least_occupied(road_lanes, road, cnt, cap):
    best = -1
    for m in range(road_lanes.shape[1]):
        tl = road_lanes[road, m]
        if tl < 0:
            continue
        if best < 0 or cnt[tl] < cnt[best]:
            best = tl
    return best


@njit(cache=True)
def _push(buf, head, cnt, lane, vid):
    cap = buf.shape[1]
    buf[lane, (head[lane] + cnt[lane]) % cap] = vid
    cnt[lane] += 1


def _discharge(int_lanes, signal, permit, rate, credit, blocked,
               buf, head, cnt, nq, lane_cap, lane_vmax, road_lanes,
               route_lane, route_road, veh_lane, veh_pos, veh_speed, veh_ridx, veh_rstart,
               veh_rlen, veh_status, veh_arrive, now, moved):
    """Phase-gated stop-line discharge; returns the number served at a stop line.

    ``moved[l]`` receives the number of vehicles that left lane ``l``.
    """
    served = 0
    cap = buf.shape[1]
    for i in range(int_lanes.shape[0]):
        for s in range(12):
            l = int_lanes[i, s]
            if l < 0:
                continue
            moved[l] = 0
            # vehicles whose route ends here leave from the stop line unconditionally
            while nq[l] > 0:
                vid = buf[l, head[l] % cap]
                if veh_ridx[vid] != veh_rlen[vid] - 1:
                    break
                buf[l, head[l]] = -1
                head[l] = (head[l] + 1) % cap
                cnt[l] -= 1
                nq[l] -= 1
                veh_status[vid] = SERVED
                veh_arrive[vid] = now + 1
                served += 1
                moved[l] += 1
            if not permit[signal[i], s]:
                credit[l] = 0.0
            else:
                credit[l] = min(credit[l] + rate, max(rate, 1.0))
                while nq[l] > 0 and credit[l] >= 1.0:
                    vid = buf[l, head[l] % cap]
                    nxt = veh_rstart[vid] + veh_ridx[vid] + 1
                    tl = route_lane[nxt]
                    if tl < 0:
                        tl = _least_occupied(road_lanes, route_road[nxt], cnt, lane_cap)
                    if cnt[tl] >= lane_cap[tl]:
                        break
                    buf[l, head[l]] = -1
                    head[l] = (head[l] + 1) % cap
                    cnt[l] -= 1
                    nq[l] -= 1
                    _push(buf, head, cnt, tl, vid)
                    veh_lane[vid] = tl
                    veh_pos[vid] = 0.0
                    veh_speed[vid] = lane_vmax[tl]
                    veh_ridx[vid] += 1
                    credit[l] -= 1.0
                    moved[l] += 1
            if nq[l] > 0 and moved[l] == 0:
                blocked[l] += 1
            else:
                blocked[l] = 0
    return served


def _spawn(now, order, spawn_time, ptr, waiting, n_wait, route_lane, route_road, road_lanes,
           veh_rstart, buf, head, cnt, lane_cap, lane_vmax, veh_lane, veh_pos, veh_speed,
           veh_status):
    """Admit due vehicles in schedule order; full entry lanes defer them.

    Returns the new ``(ptr, n_wait)``.
    """
    n = order.shape[0]
    while ptr < n and spawn_time[order[ptr]] <= now:
        waiting[n_wait] = order[ptr]
        n_wait += 1
        ptr += 1
    kept = 0
    for w in range(n_wait):
        vid = waiting[w]
        r0 = veh_rstart[vid]
        tl = route_lane[r0]
        if tl < 0:
            tl = _least_occupied(road_lanes, route_road[r0], cnt, lane_cap)
        if cnt[tl] < lane_cap[tl]:
            _push(buf, head, cnt, tl, vid)
            veh_lane[vid] = tl
            veh_pos[vid] = 0.0
            veh_speed[vid] = lane_vmax[tl]
            veh_status[vid] = ACTIVE
        else:
            waiting[kept] = vid
            kept += 1
    return ptr, kept


def _zone_counts(veh_lane, veh_pos, veh_speed, veh_status, lane_len, lane_vmax, thresh, from_end):
    """Per-lane vehicle count, queue count, delay sum and speed sum in a zone.

    A vehicle counts when its distance to the anchoring intersection is
    strictly below ``thresh[lane]``; ``from_end`` anchors at the lane's end
    (upstream use), otherwise at its start (downstream use).
    """
    n_lanes = lane_len.shape[0]
    x = np.zeros(n_lanes)
    q = np.zeros(n_lanes)
    dsum = np.zeros(n_lanes)
    vsum = np.zeros(n_lanes)
    for vid in range(veh_lane.shape[0]):
        if veh_status[vid] != ACTIVE:
            continue
        l = veh_lane[vid]
        if from_end:
            dist = lane_len[l] - veh_pos[vid]
        else:
            dist = veh_pos[vid]
        if dist < thresh[l]:
            sp = veh_speed[vid]
            x[l] += 1.0
            if sp < 0.3:
                q[l] += 1.0
            dsum[l] += 1.0 - sp / lane_vmax[l]
            vsum[l] += sp
    return x, q, dsum, vsum


def zone_counts_np(veh_lane, veh_pos, veh_speed, veh_status, lane_len, lane_vmax, thresh, from_end):
    n_lanes = lane_len.shape[0]
    act = np.flatnonzero(veh_status == ACTIVE)
    lanes = veh_lane[act]
    pos = veh_pos[act]
    dist = lane_len[lanes] - pos if from_end else pos
    inz = dist < thresh[lanes]
    lanes = lanes[inz]
    sp = veh_speed[act][inz]
    x = np.bincount(lanes, minlength=n_lanes).astype(np.float64)
    q = np.bincount(lanes, weights=(sp < 0.3).astype(np.float64), minlength=n_lanes)
    dsum = np.bincount(lanes, weights=1.0 - sp / lane_vmax[lanes], minlength=n_lanes)
    vsum = np.bincount(lanes, weights=sp, minlength=n_lanes)
    return x, q, dsum, vsum


def _segment_positions(counts):
    """For segments of the given lengths, the index of each element within its segment."""
    total = int(counts.sum())
    starts = np.cumsum(counts) - counts
    return np.arange(total) - np.repeat(starts, counts)


def advance_lanes_np(buf, head, cnt, nq, lane_len, lane_vmax, spacing,
                     veh_pos, veh_speed, veh_ridx, veh_rlen, veh_status, veh_arrive, now):
    """Vectorised twin of the loop kernel (identical arithmetic, same results)."""
    cap = buf.shape[1]
    lanes = np.flatnonzero(cnt > 0)
    if lanes.size == 0:
        return 0
    c = cnt[lanes]
    q0 = nq[lanes]
    lane_rep = np.repeat(lanes, c)
    k = _segment_positions(c)
    vid = buf[lane_rep, (head[lane_rep] + k) % cap]
    L = lane_len[lane_rep]
    v = lane_vmax[lane_rep]
    q_rep = nq[lane_rep]

    queued = k < q_rep
    if queued.any():
        qv = vid[queued]
        slot_pos = L[queued] - k[queued] * spacing
        veh_pos[qv] = np.where(slot_pos > veh_pos[qv], slot_pos, veh_pos[qv])

    mov = ~queued
    m_lane = lane_rep[mov]
    m_vid = vid[mov]
    m_L = L[mov]
    m_v = v[mov]
    m_q = q_rep[mov]
    n_mov = c - q0
    m_idx = _segment_positions(n_mov)
    newpos = veh_pos[m_vid] + m_v
    seg_start = np.cumsum(n_mov) - n_mov
    seg_of = np.repeat(np.arange(lanes.size), n_mov)

    def leading_true(flag):
        # per element: every element of its segment up to and including it is True
        bad = np.cumsum(~flag)
        excl = bad - (~flag)
        return (bad - excl[seg_start[seg_of]]) == 0

    # exit prefix: only on lanes without a queue, vehicles on their final lane reaching the end
    last = veh_ridx[m_vid] == veh_rlen[m_vid] - 1
    exit_flag = (m_q == 0) & last & (newpos >= m_L)
    exits = leading_true(exit_flag)
    n_exit = np.bincount(seg_of[exits], minlength=lanes.size)

    rest = ~exits
    # join prefix among the rest, queue position counted past the exits
    j_idx = m_idx - n_exit[seg_of]
    back = m_L - (m_q + j_idx) * spacing
    join_flag = rest & (newpos >= back)
    # restrict prefix test to the non-exited tail of each segment
    join_flag_full = join_flag | exits
    joins = leading_true(join_flag_full) & rest
    moves = rest & ~joins

    ev = m_vid[exits]
    veh_pos[ev] = m_L[exits]
    veh_speed[ev] = m_v[exits]
    veh_status[ev] = SERVED
    veh_arrive[ev] = now + 1

    jv = m_vid[joins]
    jb = back[joins]
    veh_pos[jv] = np.where(jb > veh_pos[jv], jb, veh_pos[jv])
    veh_speed[jv] = 0.0

    mv = m_vid[moves]
    veh_pos[mv] = newpos[moves]
    veh_speed[mv] = m_v[moves]

    if ev.size:
        el = m_lane[exits]
        ek = m_idx[exits]  # exits are the first n_exit entries, so also the first ring slots
        buf[el, (head[el] + ek) % cap] = -1
    n_join = np.bincount(seg_of[joins], minlength=lanes.size)
    head[lanes] = (head[lanes] + n_exit) % cap
    cnt[lanes] = c - n_exit
    nq[lanes] = q0 + n_join
    return int(n_exit.sum())


if USE_NUMBA:
    advance_lanes = njit(cache=True)(_advance_lanes)
    discharge = njit(cache=True)(_discharge)
    spawn = njit(cache=True)(_spawn)
    zone_counts = njit(cache=True)(_zone_counts)
else:
    advance_lanes = advance_lanes_np
    discharge = _discharge
    spawn = _spawn
    zone_counts = zone_counts_np

# uncompiled loop versions, for equivalence tests
advance_lanes_py = _advance_lanes
zone_counts_py = _zone_counts
