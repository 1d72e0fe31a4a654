"""Jitted event-driven core of the farm simulator.

One compiled kernel drives every policy and job-size law.  Per-server state
is kept in flat arrays; the next departure of each server sits in a
segment tree (min by time, ties to the lower server index) so each event
costs O(log n + theta).  Residual work is settled lazily per server: between
events at a server with j jobs every resident job loses elapsed*speed/j.

The random stream is xoshiro256**, bit-identical to rng.RandomStream; draw
order per arrival is routing draw(s), then job size (if admitted), then the
next interarrival gap.
"""

import numpy as np
from numba import njit

U5 = np.uint64(5)
U7 = np.uint64(7)
U9 = np.uint64(9)
U11 = np.uint64(11)
U17 = np.uint64(17)
U45 = np.uint64(45)
U19 = np.uint64(19)
U64 = np.uint64(64)
INV53 = 2.0 ** -53

POLICY_INSENSITIVE = 0
POLICY_JSQ = 1
POLICY_JSQD = 2
POLICY_JIQ = 3
POLICY_BERNOULLI = 4

DIST_EXPONENTIAL = 0
DIST_DETERMINISTIC = 1
DIST_TABLE = 2


@njit(cache=True)
def _next_u64(s):
    s0, s1, s2, s3 = s[0], s[1], s[2], s[3]
    x = s1 * U5
    result = ((x << U7) | (x >> (U64 - U7))) * U9
    t = s1 << U17
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = (s3 << U45) | (s3 >> (U64 - U45))
    s[0] = s0
    s[1] = s1
    s[2] = s2
    s[3] = s3
    return result


@njit(cache=True)
def _uniform(s):
    return np.float64(_next_u64(s) >> U11) * INV53


@njit(cache=True)
def _exponential(s, rate):
    return -np.log1p(-_uniform(s)) / rate


@njit(cache=True)
def _rng_probe(state, k):
    out = np.empty(k, np.uint64)
    for i in range(k):
        out[i] = _next_u64(state)
    return out


@njit(cache=True)
def _seg_update(seg_t, seg_i, pcap, server, time):
    node = pcap + server
    seg_t[node] = time
    node >>= 1
    while node >= 1:
        left = node << 1
        right = left + 1
        if seg_t[left] <= seg_t[right]:
            seg_t[node] = seg_t[left]
            seg_i[node] = seg_i[left]
        else:
            seg_t[node] = seg_t[right]
            seg_i[node] = seg_i[right]
        node >>= 1


@njit(cache=True)
def run_farm(n, theta, lam,
             policy_id, policy_d,
             dist_id, dist_values, dist_cum,
             speeds,
             max_arrivals, warmup_arrivals,
             max_time, warmup_time,
             sample_period, snap_out, hist_out,
             rng):
    INF = np.inf
    occ = np.zeros(n, np.int64)
    resid = np.zeros((n, theta), np.float64)
    admit = np.zeros((n, theta), np.float64)
    last_t = np.zeros(n, np.float64)
    level_count = np.zeros(theta + 1, np.int64)
    level_count[0] = n
    members = np.zeros((theta + 1, n), np.int64)
    bpos = np.zeros(n, np.int64)
    for i in range(n):
        members[0, i] = i
        bpos[i] = i
    jobs_total = 0

    pcap = 1
    while pcap < n:
        pcap <<= 1
    seg_t = np.full(2 * pcap, INF, np.float64)
    seg_i = np.zeros(2 * pcap, np.int64)
    for i in range(pcap):
        seg_i[pcap + i] = i
    for node in range(pcap - 1, 0, -1):
        left = node << 1
        right = left + 1
        if seg_t[left] <= seg_t[right]:
            seg_t[node] = seg_t[left]
            seg_i[node] = seg_i[left]
        else:
            seg_t[node] = seg_t[right]
            seg_i[node] = seg_i[right]

    cand = np.empty(max(policy_d, 1), np.int64)

    snap_cap = snap_out.shape[0]
    snap_cnt = 0
    next_snap = warmup_time + sample_period if sample_period > 0.0 else INF
    hist_on = hist_out.size > 0

    stats_on = False
    stats_t0 = 0.0
    arr_seen = 0
    arr_counted = 0
    blocked = 0
    completed = 0
    soj_sum = 0.0
    soj_sq = 0.0

    t_cur = 0.0
    t_arr = _exponential(rng, lam)

    while arr_seen < max_arrivals:
        dep_t = seg_t[1]
        if t_arr <= dep_t:
            evt_t = t_arr
            is_arrival = True
        else:
            evt_t = dep_t
            is_arrival = False

        stop = evt_t > max_time
        flush_to = max_time if stop else evt_t

        if sample_period > 0.0:
            while next_snap <= flush_to and snap_cnt < snap_cap:
                for k in range(theta + 1):
                    snap_out[snap_cnt, k] = level_count[k]
                snap_cnt += 1
                next_snap += sample_period
        if hist_on:
            lo = t_cur if t_cur > warmup_time else warmup_time
            if flush_to > lo:
                code = 0
                mult = 1
                for k in range(theta + 1):
                    code += level_count[k] * mult
                    mult *= n + 1
                hist_out[code] += flush_to - lo

        if stop:
            t_cur = max_time
            break
        t_cur = evt_t

        if is_arrival:
            if (not stats_on) and arr_seen >= warmup_arrivals and evt_t >= warmup_time:
                stats_on = True
                stats_t0 = evt_t
            arr_seen += 1

            blocked_flag = False
            v = -1
            if policy_id == POLICY_INSENSITIVE:
                free = n * theta - jobs_total
                if free == 0:
                    blocked_flag = True
                else:
                    u = _uniform(rng)
                    r = u * free
                    k = 0
                    while k < theta:
                        w = float((theta - k) * level_count[k])
                        if r < w:
                            break
                        r -= w
                        k += 1
                    if k == theta:
                        k = theta - 1
                        while level_count[k] == 0:
                            k -= 1
                        r = 0.0
                    m = int(r / (theta - k))
                    if m >= level_count[k]:
                        m = level_count[k] - 1
                    v = members[k, m]
            elif policy_id == POLICY_JSQ:
                k = 0
                while k < theta and level_count[k] == 0:
                    k += 1
                if k == theta:
                    blocked_flag = True
                else:
                    u = _uniform(rng)
                    m = int(u * level_count[k])
                    if m >= level_count[k]:
                        m = level_count[k] - 1
                    v = members[k, m]
            elif policy_id == POLICY_JSQD:
                cnt = 0
                while cnt < policy_d:
                    u = _uniform(rng)
                    c = int(u * n)
                    if c >= n:
                        c = n - 1
                    dup = False
                    for ii in range(cnt):
                        if cand[ii] == c:
                            dup = True
                            break
                    if not dup:
                        cand[cnt] = c
                        cnt += 1
                best_occ = theta + 1
                for ii in range(policy_d):
                    if occ[cand[ii]] < best_occ:
                        best_occ = occ[cand[ii]]
                if best_occ >= theta:
                    blocked_flag = True
                else:
                    ties = 0
                    for ii in range(policy_d):
                        if occ[cand[ii]] == best_occ:
                            ties += 1
                    pick = 0
                    if ties > 1:
                        u = _uniform(rng)
                        pick = int(u * ties)
                        if pick >= ties:
                            pick = ties - 1
                    seen = 0
                    for ii in range(policy_d):
                        if occ[cand[ii]] == best_occ:
                            if seen == pick:
                                v = cand[ii]
                                break
                            seen += 1
            elif policy_id == POLICY_JIQ:
                u = _uniform(rng)
                if level_count[0] > 0:
                    m = int(u * level_count[0])
                    if m >= level_count[0]:
                        m = level_count[0] - 1
                    v = members[0, m]
                else:
                    v = int(u * n)
                    if v >= n:
                        v = n - 1
                    if occ[v] == theta:
                        blocked_flag = True
            else:  # POLICY_BERNOULLI
                u = _uniform(rng)
                v = int(u * n)
                if v >= n:
                    v = n - 1
                if occ[v] == theta:
                    blocked_flag = True

            if stats_on:
                arr_counted += 1
                if blocked_flag:
                    blocked += 1

            if not blocked_flag:
                j = occ[v]
                if j > 0:
                    delta = evt_t - last_t[v]
                    if delta > 0.0:
                        dec = delta * speeds[v] / j
                        for sl in range(j):
                            resid[v, sl] -= dec
                last_t[v] = evt_t

                if dist_id == DIST_EXPONENTIAL:
                    size = _exponential(rng, 1.0)
                elif dist_id == DIST_DETERMINISTIC:
                    size = 1.0
                else:
                    u = _uniform(rng)
                    idx = 0
                    while u >= dist_cum[idx]:
                        idx += 1
                    size = dist_values[idx]

                resid[v, j] = size
                admit[v, j] = evt_t
                occ[v] = j + 1
                jobs_total += 1
                # bucket move j -> j+1
                pa = bpos[v]
                lastpos = level_count[j] - 1
                w_srv = members[j, lastpos]
                members[j, pa] = w_srv
                bpos[w_srv] = pa
                level_count[j] = lastpos
                members[j + 1, level_count[j + 1]] = v
                bpos[v] = level_count[j + 1]
                level_count[j + 1] += 1

                jj = j + 1
                mres = resid[v, 0]
                for sl in range(1, jj):
                    if resid[v, sl] < mres:
                        mres = resid[v, sl]
                if mres < 0.0:
                    mres = 0.0
                _seg_update(seg_t, seg_i, pcap, v, evt_t + mres * jj / speeds[v])

            t_arr = evt_t + _exponential(rng, lam)
        else:
            v = seg_i[1]
            j = occ[v]
            delta = evt_t - last_t[v]
            if delta > 0.0:
                dec = delta * speeds[v] / j
                for sl in range(j):
                    resid[v, sl] -= dec
            last_t[v] = evt_t

            best = 0
            for sl in range(1, j):
                if resid[v, sl] < resid[v, best]:
                    best = sl
            if stats_on and admit[v, best] >= stats_t0:
                d = evt_t - admit[v, best]
                completed += 1
                soj_sum += d
                soj_sq += d * d
            lastslot = j - 1
            resid[v, best] = resid[v, lastslot]
            admit[v, best] = admit[v, lastslot]
            occ[v] = lastslot
            jobs_total -= 1
            # bucket move j -> j-1
            pa = bpos[v]
            lastpos = level_count[j] - 1
            w_srv = members[j, lastpos]
            members[j, pa] = w_srv
            bpos[w_srv] = pa
            level_count[j] = lastpos
            members[j - 1, level_count[j - 1]] = v
            bpos[v] = level_count[j - 1]
            level_count[j - 1] += 1

            if lastslot == 0:
                _seg_update(seg_t, seg_i, pcap, v, INF)
            else:
                mres = resid[v, 0]
                for sl in range(1, lastslot):
                    if resid[v, sl] < mres:
                        mres = resid[v, sl]
                if mres < 0.0:
                    mres = 0.0
                _seg_update(seg_t, seg_i, pcap, v, evt_t + mres * lastslot / speeds[v])

    return arr_counted, blocked, completed, soj_sum, soj_sq, snap_cnt, t_cur, arr_seen
