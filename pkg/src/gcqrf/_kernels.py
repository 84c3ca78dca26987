"""Jitted inner loops for tree growth.

These mirror the reference implementations in ``survival``/``loss`` exactly:
same hazard increments, same left-limit weighting, same member-order
accumulation. Keep the arithmetic in step with those modules; the test suite
holds both paths to bit-level agreement against plain-Python reimplementation.
"""

import math

import numpy as np
from numba import njit

TAIL_LARGEST_OBSERVATION = 0
TAIL_LARGEST_UNCENSORED = 1
TAIL_EXPONENTIAL = 2


@njit(cache=True)
def node_loss_kernel(y, d, sort_idx, levels, u, floor, tail_kind):
    """Grid-mean node loss; censored branch iff any member is censored.

    ``sort_idx`` must sort ``y`` ascending. Accumulation runs over members in
    stored order so results do not depend on the sort's tie handling.
    """
    m = y.shape[0]
    n_levels = levels.shape[0]
    q = np.empty(n_levels, np.float64)

    # Invert the node hazard fit at each level (levels ascending, survival
    # strictly decreasing across event times).
    li = 0
    cum = 0.0
    t_last = 0.0
    have_event = False
    j = 0
    while j < m:
        t = y[sort_idx[j]]
        k = j
        de = 0
        while k < m and y[sort_idx[k]] == t:
            if d[sort_idx[k]] != 0:
                de += 1
            k += 1
        if de > 0:
            cum += de / (m - j)
            s = math.exp(-cum)
            while li < n_levels and s <= 1.0 - levels[li]:
                q[li] = t
                li += 1
            t_last = t
            have_event = True
        j = k
    if not have_event:
        raise ValueError("node loss requires at least one event")
    if li < n_levels:
        if tail_kind == TAIL_EXPONENTIAL:
            if t_last == 0.0:
                while li < n_levels:
                    q[li] = 0.0
                    li += 1
            else:
                rate = cum / t_last
                while li < n_levels:
                    q[li] = -math.log(1.0 - levels[li]) / rate
                    li += 1
        elif tail_kind == TAIL_LARGEST_UNCENSORED:
            while li < n_levels:
                q[li] = t_last
                li += 1
        else:
            t_max = y[sort_idx[m - 1]]
            while li < n_levels:
                q[li] = t_max
                li += 1

    any_cens = False
    for i in range(m):
        if d[i] == 0:
            any_cens = True
            break

    w = np.ones(m, np.float64)
    resp = np.empty(m, np.float64)
    if any_cens:
        for i in range(m):
            resp[i] = y[i] if y[i] < u else u
        # censoring-distribution fit over min(y, u); weights use left limits
        cumc = 0.0
        j = 0
        while j < m:
            t = resp[sort_idx[j]]
            k = j
            dc = 0
            while k < m and resp[sort_idx[k]] == t:
                i = sort_idx[k]
                if d[i] == 0 and y[i] <= u:
                    dc += 1
                k += 1
            g_left = math.exp(-cumc)
            if g_left < floor:
                g_left = floor
            for jj in range(j, k):
                i = sort_idx[jj]
                if y[i] > u or d[i] != 0:
                    w[i] = 1.0 / g_left
                else:
                    w[i] = 0.0
            if dc > 0:
                cumc += dc / (m - j)
            j = k
    else:
        for i in range(m):
            resp[i] = y[i]

    acc_levels = 0.0
    for lv in range(n_levels):
        tau = levels[lv]
        t1mt = tau * (1.0 - tau)
        qv = q[lv]
        acc = 0.0
        if any_cens:
            for i in range(m):
                v = resp[i] - qv
                rho = v * tau if v >= 0.0 else v * (tau - 1.0)
                acc += (w[i] * t1mt) * rho
        else:
            for i in range(m):
                v = resp[i] - qv
                rho = v * tau if v >= 0.0 else v * (tau - 1.0)
                acc += t1mt * rho
        acc_levels += acc / m
    return acc_levels / n_levels


@njit(cache=True)
def best_split_kernel(X, y, d, feats, levels, u, floor, tail_kind,
                      nodesize_min, parent_loss):
    """Exhaustive cut search over the candidate features.

    ``feats`` must be ascending so the first strict improvement wins ties by
    (lowest feature, lowest threshold). A cut is admissible when each child
    keeps at least ``nodesize_min`` distinct uncensored response values.
    Returns (feature, threshold, gain, found).
    """
    m = y.shape[0]
    sort_idx = np.argsort(y)
    best_f = -1
    best_thr = 0.0
    best_gain = -np.inf
    found = False

    col = np.empty(m, np.float64)
    yl = np.empty(m, np.float64)
    yr = np.empty(m, np.float64)
    dl = np.empty(m, np.uint8)
    dr = np.empty(m, np.uint8)
    sl = np.empty(m, np.int64)
    sr = np.empty(m, np.int64)
    pos = np.empty(m, np.int64)
    is_left = np.empty(m, np.uint8)

    for fj in range(feats.shape[0]):
        f = feats[fj]
        for i in range(m):
            col[i] = X[i, f]
        svs = np.sort(col.copy())
        prev = svs[0]
        for t in range(1, m):
            cur = svs[t]
            if cur == prev:
                continue
            thr = 0.5 * (prev + cur)
            prev = cur

            for i in range(m):
                is_left[i] = 1 if col[i] <= thr else 0

            # distinct uncensored responses per child, via the sorted walk
            nlu = 0
            nru = 0
            last_lu = 0.0
            last_ru = 0.0
            has_lu = False
            has_ru = False
            for jj in range(m):
                i = sort_idx[jj]
                if d[i] != 0:
                    yi = y[i]
                    if is_left[i] != 0:
                        if not has_lu or yi != last_lu:
                            nlu += 1
                            last_lu = yi
                            has_lu = True
                    else:
                        if not has_ru or yi != last_ru:
                            nru += 1
                            last_ru = yi
                            has_ru = True
            if nlu < nodesize_min or nru < nodesize_min:
                continue

            kl = 0
            kr = 0
            for i in range(m):
                if is_left[i] != 0:
                    yl[kl] = y[i]
                    dl[kl] = d[i]
                    pos[i] = kl
                    kl += 1
                else:
                    yr[kr] = y[i]
                    dr[kr] = d[i]
                    pos[i] = kr
                    kr += 1
            il = 0
            ir = 0
            for jj in range(m):
                i = sort_idx[jj]
                if is_left[i] != 0:
                    sl[il] = pos[i]
                    il += 1
                else:
                    sr[ir] = pos[i]
                    ir += 1

            loss_l = node_loss_kernel(yl[:kl], dl[:kl], sl[:kl], levels, u,
                                      floor, tail_kind)
            loss_r = node_loss_kernel(yr[:kr], dr[:kr], sr[:kr], levels, u,
                                      floor, tail_kind)
            gain = m * parent_loss - kl * loss_l - kr * loss_r
            if gain > best_gain:
                best_gain = gain
                best_f = f
                best_thr = thr
                found = True
    return best_f, best_thr, best_gain, found


def node_loss(y, d_uint8, levels, u, floor, tail_kind):
    """Convenience wrapper: sorts and calls the jitted node loss."""
    sort_idx = np.argsort(y)
    return node_loss_kernel(y, d_uint8, sort_idx, levels, u, floor, tail_kind)
