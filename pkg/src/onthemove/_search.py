"""Compiled inner loop of the local primitive search.

Kept free of Python objects so numba can compile it; ``controller`` owns
the arrays and interprets the results.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

STATUS_BUDGET = 0
STATUS_GOAL = 1
STATUS_EXHAUSTED = 2

# Per-node float columns.
X, Y, TH, V, W, ELAPSED, G, H, F = range(9)
N_FCOLS = 9
# Per-node int columns.
PARENT, DEPTH, FIRST, GOAL = range(4)
N_ICOLS = 4

# Parameter vector layout.
(
    P_DT,
    P_NSUB,
    P_HORIZON,
    P_POS_TOL,
    P_HEAD_TOL,
    P_WPROX,
    P_K,
    P_VMAX,
    P_WMAX,
    P_AMAX,
    P_ALMAX,
    P_GX,
    P_GY,
    P_GTH,
    P_MODE,
    P_OX,
    P_OY,
    P_RES,
    P_INFL,
    P_REVERSE,
    P_STOP_V,
    P_STOP_W,
) = range(22)
N_PARAMS = 22

MODE_STOP = 0.0
MODE_PASS = 1.0

_TWO_PI = 2.0 * math.pi

# Primitive enumeration order (index = 3 * accel + turn, 1 = hold). Holding
# the current command comes first so it wins exact ties.
PRIM_ORDER = np.array([4, 7, 5, 3, 1, 8, 6, 2, 0], dtype=np.int64)


@njit(cache=True, inline="always")
def wrap(a):
    a = a - _TWO_PI * math.floor((a + math.pi) / _TWO_PI)
    if a <= -math.pi:
        a += _TWO_PI
    elif a > math.pi:
        a -= _TWO_PI
    return a


@njit(cache=True, inline="always")
def clamp(x, lo, hi):
    return lo if x < lo else (hi if x > hi else x)


@njit(cache=True)
def primitive_command(cur, delta, limit):
    """Velocity target of one primitive: ``cur + delta`` clamped to the limit.

    A braking primitive stops at zero rather than reversing through it, so
    a halt is reachable from any current speed.
    """
    cmd = clamp(cur + delta, -limit, limit)
    if (cur > 0.0 and cmd < 0.0) or (cur < 0.0 and cmd > 0.0):
        return 0.0
    return cmd


@njit(cache=True)
def unicycle_step(x, y, th, v, w, v_cmd, w_cmd, dt, vmax, wmax, amax, almax):
    """One control period: clamp accelerations and speeds, then integrate an exact arc."""
    v = v + clamp(v_cmd - v, -amax * dt, amax * dt)
    w = w + clamp(w_cmd - w, -almax * dt, almax * dt)
    v = clamp(v, -vmax, vmax)
    w = clamp(w, -wmax, wmax)
    if abs(w) < 1e-6:
        x = x + v * math.cos(th) * dt
        y = y + v * math.sin(th) * dt
        th = wrap(th + w * dt)
    else:
        th2 = th + w * dt
        r = v / w
        x = x + r * (math.sin(th2) - math.sin(th))
        y = y + r * (math.cos(th) - math.cos(th2))
        th = wrap(th2)
    return x, y, th, v, w


@njit(cache=True)
def travel_time(d, s0, vmax, amax, stop):
    """Least time to cover ``d`` along a line starting at speed ``s0``.

    Speed is bounded by vmax and acceleration by amax; with ``stop`` the
    motion must end at rest. A negative ``s0`` (moving away) is braked first.
    """
    t = 0.0
    if s0 < 0.0:
        t = -s0 / amax
        d += s0 * s0 / (2.0 * amax)
        s0 = 0.0
    if stop:
        if s0 * s0 / (2.0 * amax) >= d:
            return t + s0 / amax
        vp = math.sqrt(amax * d + 0.5 * s0 * s0)
        if vp <= vmax:
            return t + (2.0 * vp - s0) / amax
        cruise = d - (2.0 * vmax * vmax - s0 * s0) / (2.0 * amax)
        return t + (2.0 * vmax - s0) / amax + cruise / vmax
    ramp = (vmax * vmax - s0 * s0) / (2.0 * amax)
    if ramp >= d:
        return t + (math.sqrt(s0 * s0 + 2.0 * amax * d) - s0) / amax
    return t + (vmax - s0) / amax + (d - ramp) / vmax


@njit(cache=True)
def heuristic(x, y, th, v, gx, gy, gth, mode, vmax, wmax, amax, reverse_factor):
    """Straight-line RTR time to the goal, forward or (penalized) reverse.

    Rotations run at wmax; the translation respects amax from the current
    speed and, for stop goals, includes braking to rest.
    """
    dx = gx - x
    dy = gy - y
    d = math.sqrt(dx * dx + dy * dy)
    stop = mode == MODE_STOP
    if d < 1e-9:
        t = abs(v) / amax if stop else 0.0
        if stop:
            t += abs(wrap(gth - th)) / wmax
        return t
    bearing = math.atan2(dy, dx)
    fwd = abs(wrap(bearing - th)) / wmax + travel_time(d, v, vmax, amax, stop)
    rev = abs(wrap(bearing - th - math.pi)) / wmax + reverse_factor * travel_time(d, -v, vmax, amax, stop)
    if stop:
        fwd += abs(wrap(gth - bearing)) / wmax
        rev += abs(wrap(gth - bearing - math.pi)) / wmax
    return fwd if fwd < rev else rev


@njit(cache=True)
def grid_lookup(occ, clr, x, y, ox, oy, res, infl):
    """Return (occupied, proximity cost) at a point; off-grid counts as occupied."""
    fx = (x - ox) / res
    fy = (y - oy) / res
    ix = int(math.floor(fx))
    iy = int(math.floor(fy))
    nx, ny = occ.shape
    if ix < 0 or iy < 0 or ix >= nx or iy >= ny:
        return True, 1.0
    if occ[ix, iy]:
        return True, 1.0
    fx -= 0.5
    fy -= 0.5
    jx = min(max(int(math.floor(fx)), 0), nx - 2)
    jy = min(max(int(math.floor(fy)), 0), ny - 2)
    tx = clamp(fx - jx, 0.0, 1.0)
    ty = clamp(fy - jy, 0.0, 1.0)
    c = (
        (1 - tx) * (1 - ty) * clr[jx, jy]
        + tx * (1 - ty) * clr[jx + 1, jy]
        + (1 - tx) * ty * clr[jx, jy + 1]
        + tx * ty * clr[jx + 1, jy + 1]
    )
    cost = 1.0 - c / infl
    return False, (cost if cost > 0.0 else 0.0)


@njit(cache=True)
def at_goal(x, y, th, v, w, p):
    dx = p[P_GX] - x
    dy = p[P_GY] - y
    if dx * dx + dy * dy > p[P_POS_TOL] * p[P_POS_TOL]:
        return False
    if abs(wrap(p[P_GTH] - th)) > p[P_HEAD_TOL]:
        return False
    if p[P_MODE] == MODE_STOP:
        return abs(v) < p[P_STOP_V] and abs(w) < p[P_STOP_W]
    return True


@njit(cache=True)
def brake_safe(x, y, th, v, w, p, occ, clr):
    """Whether braking to rest from this state stays in free cells."""
    dt = p[P_DT]
    vmax = p[P_VMAX]
    wmax = p[P_WMAX]
    amax = p[P_AMAX]
    almax = p[P_ALMAX]
    n = int(math.ceil(max(vmax / amax, wmax / almax) / dt)) + 1
    for _ in range(n):
        if v == 0.0 and w == 0.0:
            return True
        x, y, th, v, w = unicycle_step(x, y, th, v, w, 0.0, 0.0, dt, vmax, wmax, amax, almax)
        occupied, _ = grid_lookup(occ, clr, x, y, p[P_OX], p[P_OY], p[P_RES], p[P_INFL])
        if occupied:
            return False
    return v == 0.0 and w == 0.0


@njit(cache=True)
def passes_goal(x0, y0, th0, x1, y1, th1, p):
    """Swept-segment test: does the step (x0, y0) -> (x1, y1) pass the goal closely enough?"""
    dx = x1 - x0
    dy = y1 - y0
    den = dx * dx + dy * dy
    t = 0.0
    if den > 0.0:
        t = clamp(((p[P_GX] - x0) * dx + (p[P_GY] - y0) * dy) / den, 0.0, 1.0)
    cx = x0 + t * dx - p[P_GX]
    cy = y0 + t * dy - p[P_GY]
    if cx * cx + cy * cy > p[P_POS_TOL] * p[P_POS_TOL]:
        return False
    th = th0 + t * wrap(th1 - th0)
    return abs(wrap(p[P_GTH] - th)) < p[P_HEAD_TOL]


@njit(cache=True)
def _heap_push(hkey, hid, size, key, nid):
    i = size
    hkey[i] = key
    hid[i] = nid
    while i > 0:
        parent = (i - 1) >> 1
        if hkey[parent] < hkey[i] or (hkey[parent] == hkey[i] and hid[parent] < hid[i]):
            break
        hkey[parent], hkey[i] = hkey[i], hkey[parent]
        hid[parent], hid[i] = hid[i], hid[parent]
        i = parent
    return size + 1


@njit(cache=True)
def _heap_pop(hkey, hid, size):
    nid = hid[0]
    size -= 1
    hkey[0] = hkey[size]
    hid[0] = hid[size]
    i = 0
    while True:
        left = 2 * i + 1
        if left >= size:
            break
        best = left
        right = left + 1
        if right < size and (hkey[right] < hkey[left] or (hkey[right] == hkey[left] and hid[right] < hid[left])):
            best = right
        if hkey[i] < hkey[best] or (hkey[i] == hkey[best] and hid[i] < hid[best]):
            break
        hkey[i], hkey[best] = hkey[best], hkey[i]
        hid[i], hid[best] = hid[best], hid[i]
        i = best
    return nid, size


@njit(cache=True)
def _state_key(x, y, th, v, w):
    ix = int(round(x / 0.05)) + 100000
    iy = int(round(y / 0.05)) + 100000
    ith = int(round(th / (_TWO_PI / 72.0))) % 72
    iv = int(round(v / 0.05)) + 64
    iw = int(round(w / 0.075)) + 64
    return (((ix * 200003 + iy) * 72 + ith) * 128 + iv) * 128 + iw


@njit(cache=True)
def init_search(fcols, icols, hkey, hid, seen, x, y, th, v, w, p):
    """Seed the arena with the root node. Returns (n_nodes, heap_size)."""
    seen.clear()
    fcols[0, X] = x
    fcols[0, Y] = y
    fcols[0, TH] = th
    fcols[0, V] = v
    fcols[0, W] = w
    fcols[0, ELAPSED] = 0.0
    fcols[0, G] = 0.0
    h = heuristic(x, y, th, v, p[P_GX], p[P_GY], p[P_GTH], p[P_MODE], p[P_VMAX], p[P_WMAX], p[P_AMAX], p[P_REVERSE])
    fcols[0, H] = h
    fcols[0, F] = h
    icols[0, PARENT] = -1
    icols[0, DEPTH] = 0
    icols[0, FIRST] = -1
    icols[0, GOAL] = 0
    seen[_state_key(x, y, th, v, w)] = 0.0
    size = _heap_push(hkey, hid, 0, h, 0)
    return 1, size


@njit(cache=True)
def expand(fcols, icols, hkey, hid, seen, n_nodes, heap_size, max_expansions, p, occ, clr, best):
    """Run up to ``max_expansions`` best-first expansions.

    ``best`` is updated in place and holds [node id, h, f] twice: first for
    the lowest-heuristic node (ties: lowest f) from which the robot can
    still brake to rest without collision, then for the lowest-heuristic
    node regardless of that. Returns (status, goal node, n_nodes,
    heap_size, expansions done).
    """
    dt = p[P_DT]
    nsub = int(p[P_NSUB])
    horizon = int(p[P_HORIZON])
    prim = dt * nsub
    wk = p[P_WPROX] * p[P_K] * dt
    vmax = p[P_VMAX]
    wmax = p[P_WMAX]
    amax = p[P_AMAX]
    almax = p[P_ALMAX]
    passing = p[P_MODE] == MODE_PASS
    cap = fcols.shape[0]
    done = 0
    while done < max_expansions:
        if heap_size == 0:
            return STATUS_EXHAUSTED, -1, n_nodes, heap_size, done
        if n_nodes + 9 > cap:
            return STATUS_BUDGET, -1, n_nodes, heap_size, done
        nid, heap_size = _heap_pop(hkey, hid, heap_size)
        if icols[nid, GOAL]:
            return STATUS_GOAL, nid, n_nodes, heap_size, done
        depth = icols[nid, DEPTH]
        if depth >= horizon:
            continue
        done += 1
        px = fcols[nid, X]
        py = fcols[nid, Y]
        pth = fcols[nid, TH]
        pv = fcols[nid, V]
        pw = fcols[nid, W]
        for pi in range(9):
            ai = PRIM_ORDER[pi] // 3
            bi = PRIM_ORDER[pi] % 3
            v_cmd = primitive_command(pv, (ai - 1) * amax * prim, vmax)
            w_cmd = primitive_command(pw, (bi - 1) * almax * prim, wmax)
            x = px
            y = py
            th = pth
            v = pv
            w = pw
            prox = 0.0
            blocked = False
            hit_goal = False
            steps = 0
            for _ in range(nsub):
                x0 = x
                y0 = y
                th0 = th
                x, y, th, v, w = unicycle_step(x, y, th, v, w, v_cmd, w_cmd, dt, vmax, wmax, amax, almax)
                occupied, cost = grid_lookup(occ, clr, x, y, p[P_OX], p[P_OY], p[P_RES], p[P_INFL])
                if occupied:
                    blocked = True
                    break
                prox += cost
                steps += 1
                # A crossing only counts if the robot can still stop safely after it.
                if passing and passes_goal(x0, y0, th0, x, y, th, p) and brake_safe(x, y, th, v, w, p, occ, clr):
                    hit_goal = True
                    break
            if blocked:
                continue
            elapsed = fcols[nid, ELAPSED] + prim
            g = fcols[nid, G] + steps * dt + wk * prox
            key = _state_key(x, y, th, v, w)
            if not hit_goal:
                prev = seen.get(key, np.inf)
                if prev <= g:
                    continue
            seen[key] = g
            is_goal = hit_goal or (
                at_goal(x, y, th, v, w, p) and (not passing or brake_safe(x, y, th, v, w, p, occ, clr))
            )
            if is_goal:
                h = 0.0
            else:
                h = heuristic(x, y, th, v, p[P_GX], p[P_GY], p[P_GTH], p[P_MODE], vmax, wmax, amax, p[P_REVERSE])
            c = n_nodes
            n_nodes += 1
            fcols[c, X] = x
            fcols[c, Y] = y
            fcols[c, TH] = th
            fcols[c, V] = v
            fcols[c, W] = w
            fcols[c, ELAPSED] = elapsed
            fcols[c, G] = g
            fcols[c, H] = h
            fcols[c, F] = g + h
            icols[c, PARENT] = nid
            icols[c, DEPTH] = depth + 1
            icols[c, FIRST] = ai * 3 + bi if depth == 0 else icols[nid, FIRST]
            icols[c, GOAL] = 1 if is_goal else 0
            if h < best[1] or (h == best[1] and g + h < best[2]):
                if brake_safe(x, y, th, v, w, p, occ, clr):
                    best[0] = c
                    best[1] = h
                    best[2] = g + h
            if h < best[4] or (h == best[4] and g + h < best[5]):
                best[3] = c
                best[4] = h
                best[5] = g + h
            heap_size = _heap_push(hkey, hid, heap_size, g + h, c)
    return STATUS_BUDGET, -1, n_nodes, heap_size, done
