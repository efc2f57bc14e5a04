"""JIT-compiled polygon and NMS kernels.

Quads are passed as flat ``(8,)`` float64 arrays ``x0, y0, ..., x3, y3``.
Everything here assumes validated input; the public wrappers in
:mod:`mostdet.geometry` and :mod:`mostdet.nms` do the checking.
"""

import numpy as np
from numba import njit

_MAXV = 16


@njit(cache=True)
def signed_area(xs, ys, n):
    s = 0.0
    for i in range(n):
        j = (i + 1) % n
        s += xs[i] * ys[j] - xs[j] * ys[i]
    return 0.5 * s


@njit(cache=True)
def _is_convex(xs, ys, n):
    sign = 0
    for i in range(n):
        ax, ay = xs[i], ys[i]
        bx, by = xs[(i + 1) % n], ys[(i + 1) % n]
        cx, cy = xs[(i + 2) % n], ys[(i + 2) % n]
        cr = (bx - ax) * (cy - by) - (by - ay) * (cx - bx)
        if cr > 1e-12:
            if sign < 0:
                return False
            sign = 1
        elif cr < -1e-12:
            if sign > 0:
                return False
            sign = -1
    return True


@njit(cache=True)
def _hull4(xs, ys):
    # Monotone chain over 4 points; returns hull in positive orientation.
    order = np.arange(4)
    # insertion sort on (x, y)
    for i in range(1, 4):
        k = order[i]
        j = i - 1
        while j >= 0 and (xs[order[j]] > xs[k] or (xs[order[j]] == xs[k] and ys[order[j]] > ys[k])):
            order[j + 1] = order[j]
            j -= 1
        order[j + 1] = k
    hx = np.empty(8)
    hy = np.empty(8)
    m = 0
    for t in range(4):
        i = order[t]
        while m >= 2 and ((hx[m - 1] - hx[m - 2]) * (ys[i] - hy[m - 2])
                          - (hy[m - 1] - hy[m - 2]) * (xs[i] - hx[m - 2])) <= 0.0:
            m -= 1
        hx[m] = xs[i]
        hy[m] = ys[i]
        m += 1
    lower = m + 1
    for t in range(2, -1, -1):
        i = order[t]
        while m >= lower and ((hx[m - 1] - hx[m - 2]) * (ys[i] - hy[m - 2])
                              - (hy[m - 1] - hy[m - 2]) * (xs[i] - hx[m - 2])) <= 0.0:
            m -= 1
        hx[m] = xs[i]
        hy[m] = ys[i]
        m += 1
    return hx, hy, m - 1


@njit(cache=True)
def _oriented(q, fix_convex):
    xs = np.empty(4)
    ys = np.empty(4)
    for i in range(4):
        xs[i] = q[2 * i]
        ys[i] = q[2 * i + 1]
    if fix_convex and not _is_convex(xs, ys, 4):
        hx, hy, m = _hull4(xs, ys)
        return hx[:m].copy(), hy[:m].copy(), m
    if signed_area(xs, ys, 4) < 0.0:
        return xs[::-1].copy(), ys[::-1].copy(), 4
    return xs, ys, 4


@njit(cache=True)
def clip_convex(sx, sy, sn, cx, cy, cn):
    """Sutherland-Hodgman clip of a positively oriented subject polygon by a
    positively oriented convex clip polygon."""
    ox = np.empty(_MAXV)
    oy = np.empty(_MAXV)
    ix = np.empty(_MAXV)
    iy = np.empty(_MAXV)
    n = sn
    for i in range(sn):
        ox[i] = sx[i]
        oy[i] = sy[i]
    for e in range(cn):
        if n == 0:
            break
        ax, ay = cx[e], cy[e]
        bx, by = cx[(e + 1) % cn], cy[(e + 1) % cn]
        ex, ey = bx - ax, by - ay
        for i in range(n):
            ix[i] = ox[i]
            iy[i] = oy[i]
        m = n
        n = 0
        px, py = ix[m - 1], iy[m - 1]
        pside = ex * (py - ay) - ey * (px - ax)
        for i in range(m):
            qx, qy = ix[i], iy[i]
            qside = ex * (qy - ay) - ey * (qx - ax)
            if qside >= 0.0:
                if pside < 0.0:
                    t = pside / (pside - qside)
                    ox[n] = px + t * (qx - px)
                    oy[n] = py + t * (qy - py)
                    n += 1
                ox[n] = qx
                oy[n] = qy
                n += 1
            elif pside >= 0.0:
                t = pside / (pside - qside)
                ox[n] = px + t * (qx - px)
                oy[n] = py + t * (qy - py)
                n += 1
            px, py, pside = qx, qy, qside
    return ox[:n].copy(), oy[:n].copy(), n


@njit(cache=True)
def quad_iou_flat(a, b):
    ax, ay, an = _oriented(a, True)
    bx, by, bn = _oriented(b, True)
    area_a = signed_area(ax, ay, an)
    area_b = signed_area(bx, by, bn)
    if area_a <= 0.0 or area_b <= 0.0:
        return 0.0
    # bounding-box rejection
    if (ax.max() <= bx.min() or bx.max() <= ax.min()
            or ay.max() <= by.min() or by.max() <= ay.min()):
        return 0.0
    px, py, pn = clip_convex(ax, ay, an, bx, by, bn)
    if pn < 3:
        return 0.0
    inter = signed_area(px, py, pn)
    if inter <= 0.0:
        return 0.0
    union = area_a + area_b - inter
    if union <= 0.0:
        return 0.0
    iou = inter / union
    return min(iou, 1.0)


@njit(cache=True)
def intersection_area_flat(a, b):
    ax, ay, an = _oriented(a, True)
    bx, by, bn = _oriented(b, True)
    if signed_area(ax, ay, an) <= 0.0 or signed_area(bx, by, bn) <= 0.0:
        return 0.0
    px, py, pn = clip_convex(ax, ay, an, bx, by, bn)
    if pn < 3:
        return 0.0
    return max(signed_area(px, py, pn), 0.0)


@njit(cache=True)
def _aabb(q):
    x0 = min(min(q[0], q[2]), min(q[4], q[6]))
    x1 = max(max(q[0], q[2]), max(q[4], q[6]))
    y0 = min(min(q[1], q[3]), min(q[5], q[7]))
    y1 = max(max(q[1], q[3]), max(q[5], q[7]))
    return x0, y0, x1, y1


@njit(cache=True)
def _overlaps(a, b):
    ax0, ay0, ax1, ay1 = _aabb(a)
    bx0, by0, bx1, by1 = _aabb(b)
    return not (ax1 <= bx0 or bx1 <= ax0 or ay1 <= by0 or by1 <= ay0)


@njit(cache=True)
def _pa_merge(lq, q, lw, w, eps):
    # x of vertices 0,3 by left; x of 1,2 by right; y of 0,1 by top; y of 2,3 by bottom
    for side in range(4):
        a = w[side]
        b = lw[side]
        if a + b <= 0.0:
            a = max(a, eps)
            b = max(b, eps)
        tot = a + b
        if side == 0:
            lq[0] = (a * q[0] + b * lq[0]) / tot
            lq[6] = (a * q[6] + b * lq[6]) / tot
        elif side == 1:
            lq[2] = (a * q[2] + b * lq[2]) / tot
            lq[4] = (a * q[4] + b * lq[4]) / tot
        elif side == 2:
            lq[1] = (a * q[1] + b * lq[1]) / tot
            lq[3] = (a * q[3] + b * lq[3]) / tot
        else:
            lq[5] = (a * q[5] + b * lq[5]) / tot
            lq[7] = (a * q[7] + b * lq[7]) / tot


@njit(cache=True)
def merge_scan(quads, scores, weights, thresh, mode, eps):
    """Row-major merging pass shared by locality-aware and position-aware NMS.

    ``mode`` 0 merges by score, 1 per side in image coordinates, 2 per side
    in the frame of the running merged box. Returns merged quads, scores,
    weights and the number of inputs folded into each output.
    """
    n = quads.shape[0]
    out_q = np.empty((n, 8))
    out_s = np.empty(n)
    out_w = np.empty((n, 4))
    out_c = np.empty(n, np.int64)
    k = 0
    have = False
    lq = np.empty(8)
    qr = np.empty(8)
    lw = np.empty(4)
    ls = 0.0
    lc = 0
    for i in range(n):
        q = quads[i]
        if have and _overlaps(q, lq) and quad_iou_flat(q, lq) > thresh:
            s = scores[i]
            w = weights[i]
            if mode == 1:
                _pa_merge(lq, q, lw, w, eps)
                for side in range(4):
                    lw[side] = w[side] + lw[side]
            elif mode == 2:
                # rotate both quads into the merged box's frame, merge, rotate back
                vx = lq[2] - lq[0] + lq[4] - lq[6]
                vy = lq[3] - lq[1] + lq[5] - lq[7]
                nrm = np.sqrt(vx * vx + vy * vy)
                c, sn = 1.0, 0.0
                if nrm > 0.0:
                    c, sn = vx / nrm, vy / nrm
                for v in range(4):
                    x, y = lq[2 * v], lq[2 * v + 1]
                    lq[2 * v], lq[2 * v + 1] = c * x + sn * y, -sn * x + c * y
                    x, y = q[2 * v], q[2 * v + 1]
                    qr[2 * v], qr[2 * v + 1] = c * x + sn * y, -sn * x + c * y
                _pa_merge(lq, qr, lw, w, eps)
                for v in range(4):
                    x, y = lq[2 * v], lq[2 * v + 1]
                    lq[2 * v], lq[2 * v + 1] = c * x - sn * y, sn * x + c * y
                for side in range(4):
                    lw[side] = w[side] + lw[side]
            else:
                tot = s + ls
                for j in range(8):
                    lq[j] = (s * q[j] + ls * lq[j]) / tot
                for side in range(4):
                    lw[side] = (s * w[side] + ls * lw[side]) / tot
            ls = s + ls
            lc += 1
        else:
            if have:
                out_q[k] = lq
                out_s[k] = ls
                out_w[k] = lw
                out_c[k] = lc
                k += 1
            lq[:] = q
            lw[:] = weights[i]
            ls = scores[i]
            lc = 1
            have = True
    if have:
        out_q[k] = lq
        out_s[k] = ls
        out_w[k] = lw
        out_c[k] = lc
        k += 1
    return out_q[:k].copy(), out_s[:k].copy(), out_w[:k].copy(), out_c[:k].copy()


@njit(cache=True)
def greedy_nms(quads, order, thresh):
    """Greedy suppression in the given visiting order; returns kept indices."""
    n = order.shape[0]
    suppressed = np.zeros(quads.shape[0], np.bool_)
    keep = np.empty(n, np.int64)
    k = 0
    for a in range(n):
        i = order[a]
        if suppressed[i]:
            continue
        keep[k] = i
        k += 1
        for b in range(a + 1, n):
            j = order[b]
            if suppressed[j]:
                continue
            if _overlaps(quads[i], quads[j]) and quad_iou_flat(quads[i], quads[j]) > thresh:
                suppressed[j] = True
    return keep[:k].copy()
