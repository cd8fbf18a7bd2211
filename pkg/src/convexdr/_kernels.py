"""Numba kernels for hard and soft rasterization.

Screen coordinates are in pixels with y pointing down; pixel (i, j) has its
center at (j + 0.5, i + 0.5). Triangles arrive as ``tri_xy (T, 3, 2)`` plus
precomputed edge lines ``lines (T, 3, 3)``: ``lines[t, k] . (x, y, 1)`` is the
signed distance to edge k (vertex k -> k+1), positive on the inner side.
"""

import numpy as np
from numba import njit

ACTIVE = 0
CULLED = 1
SATURATED = 2


@njit(cache=True, error_model="numpy")
def bin_triangles(bbox, lines, valid, H, W, tile, radius):
    """Bucket triangles into square screen tiles.

    ``bbox[t] = (xmin, ymin, xmax, ymax)`` in pixels, already inflated by
    ``radius``. Edge functions are affine, so their extremes over a tile are
    at its corner pixel centers; a triangle is left out of a tile that lies
    entirely more than ``radius`` outside one of its edges, and a tile lying
    entirely more than ``radius`` inside some triangle is flagged saturated.

    Returns ``(start, items, saturated)``: CSR-style lists (tiles row-major,
    triangle indices ascending within a tile) and a per-tile flag.
    """
    ty_n = (H + tile - 1) // tile
    tx_n = (W + tile - 1) // tile
    ntiles = ty_n * tx_n
    T = bbox.shape[0]
    saturated = np.zeros(ntiles, dtype=np.bool_)
    cap = 0
    rng = np.empty((T, 4), dtype=np.int64)
    for t in range(T):
        j0 = max(int(np.ceil(bbox[t, 0] - 0.5)), 0)
        i0 = max(int(np.ceil(bbox[t, 1] - 0.5)), 0)
        j1 = min(int(np.floor(bbox[t, 2] - 0.5)), W - 1)
        i1 = min(int(np.floor(bbox[t, 3] - 0.5)), H - 1)
        if not valid[t] or j1 < j0 or i1 < i0:
            rng[t, 0] = 1
            rng[t, 1] = 0
            rng[t, 2] = 1
            rng[t, 3] = 0
            continue
        rng[t, 0] = i0 // tile
        rng[t, 1] = i1 // tile
        rng[t, 2] = j0 // tile
        rng[t, 3] = j1 // tile
        cap += (rng[t, 1] - rng[t, 0] + 1) * (rng[t, 3] - rng[t, 2] + 1)
    pair_tile = np.empty(cap, dtype=np.int64)
    pair_tri = np.empty(cap, dtype=np.int64)
    npairs = 0
    counts = np.zeros(ntiles + 1, dtype=np.int64)
    for t in range(T):
        for ty in range(rng[t, 0], rng[t, 1] + 1):
            ya = ty * tile + 0.5
            yb = min(ty * tile + tile, H) - 0.5
            for tx in range(rng[t, 2], rng[t, 3] + 1):
                k = ty * tx_n + tx
                if saturated[k]:
                    continue
                xa = tx * tile + 0.5
                xb = min(tx * tile + tile, W) - 0.5
                culled = False
                inside = True
                for e in range(3):
                    a = lines[t, e, 0]
                    b = lines[t, e, 1]
                    c = lines[t, e, 2]
                    v0 = a * xa + b * ya + c
                    v1 = a * xb + b * ya + c
                    v2 = a * xa + b * yb + c
                    v3 = a * xb + b * yb + c
                    hi = max(max(v0, v1), max(v2, v3))
                    lo = min(min(v0, v1), min(v2, v3))
                    if hi < -radius:
                        culled = True
                        break
                    if lo <= radius:
                        inside = False
                if culled:
                    continue
                if inside:
                    saturated[k] = True
                    continue
                pair_tile[npairs] = k
                pair_tri[npairs] = t
                counts[k + 1] += 1
                npairs += 1
    for k in range(ntiles):
        if saturated[k]:
            counts[k + 1] = 0
    for k in range(1, ntiles + 1):
        counts[k] += counts[k - 1]
    items = np.empty(counts[ntiles], dtype=np.int64)
    fill = counts[:-1].copy()
    for n in range(npairs):
        k = pair_tile[n]
        if saturated[k]:
            continue
        items[fill[k]] = pair_tri[n]
        fill[k] += 1
    return counts, items, saturated


@njit(cache=True, inline="always", error_model="numpy")
def _pair(px, py, t, tri_xy, lines, cut2):
    """Classify pixel vs triangle; returns (status, d2, sign, edge, tpar, cx, cy)."""
    e0 = lines[t, 0, 0] * px + lines[t, 0, 1] * py + lines[t, 0, 2]
    e1 = lines[t, 1, 0] * px + lines[t, 1, 1] * py + lines[t, 1, 2]
    e2 = lines[t, 2, 0] * px + lines[t, 2, 1] * py + lines[t, 2, 2]
    k = 0
    emin = e0
    if e1 < emin:
        emin = e1
        k = 1
    if e2 < emin:
        emin = e2
        k = 2
    if emin >= 0.0:
        d2 = emin * emin
        if d2 > cut2:
            return SATURATED, d2, 1.0, k, 0.0, 0.0, 0.0
        # foot of the perpendicular on edge k
        cx = px - emin * lines[t, k, 0]
        cy = py - emin * lines[t, k, 1]
        ax = tri_xy[t, k, 0]
        ay = tri_xy[t, k, 1]
        k1 = (k + 1) % 3
        ex = tri_xy[t, k1, 0] - ax
        ey = tri_xy[t, k1, 1] - ay
        ll = ex * ex + ey * ey
        tp = ((cx - ax) * ex + (cy - ay) * ey) / ll
        return ACTIVE, d2, 1.0, k, tp, cx, cy
    if emin * emin > cut2:
        return CULLED, 0.0, -1.0, 0, 0.0, 0.0, 0.0
    best = np.inf
    bk = 0
    bt = 0.0
    bx = 0.0
    by = 0.0
    for kk in range(3):
        ax = tri_xy[t, kk, 0]
        ay = tri_xy[t, kk, 1]
        k1 = (kk + 1) % 3
        ex = tri_xy[t, k1, 0] - ax
        ey = tri_xy[t, k1, 1] - ay
        ll = ex * ex + ey * ey
        tp = ((px - ax) * ex + (py - ay) * ey) / ll
        if tp < 0.0:
            tp = 0.0
        elif tp > 1.0:
            tp = 1.0
        cx = ax + tp * ex
        cy = ay + tp * ey
        dd = (px - cx) * (px - cx) + (py - cy) * (py - cy)
        if dd < best:
            best = dd
            bk = kk
            bt = tp
            bx = cx
            by = cy
    if best > cut2:
        return CULLED, best, -1.0, bk, bt, bx, by
    return ACTIVE, best, -1.0, bk, bt, bx, by


@njit(cache=True, inline="always", error_model="numpy")
def _sigmoid(z):
    if z >= 0:
        return 1.0 / (1.0 + np.exp(-z))
    ez = np.exp(z)
    return ez / (1.0 + ez)


@njit(cache=True, error_model="numpy")
def soft_forward(tri_xy, lines, start, items, saturated, H, W, tile, sigma, cut2):
    """Probabilistic-union soft silhouette.

    Returns ``(S, P)`` where ``P`` is the product of ``1 - D_j`` over all
    triangles and ``S = 1 - P``.
    """
    ty_n = (H + tile - 1) // tile
    tx_n = (W + tile - 1) // tile
    P = np.ones((H, W))
    for ty in range(ty_n):
        for tx in range(tx_n):
            k = ty * tx_n + tx
            i_end = min(ty * tile + tile, H)
            j_end = min(tx * tile + tile, W)
            if saturated[k]:
                for i in range(ty * tile, i_end):
                    for j in range(tx * tile, j_end):
                        P[i, j] = 0.0
                continue
            if start[k] == start[k + 1]:
                continue
            for i in range(ty * tile, i_end):
                py = i + 0.5
                for j in range(tx * tile, j_end):
                    px = j + 0.5
                    prod = 1.0
                    for n in range(start[k], start[k + 1]):
                        t = items[n]
                        st, d2, s, e, tp, cx, cy = _pair(px, py, t, tri_xy, lines, cut2)
                        if st == SATURATED:
                            prod = 0.0
                            break
                        if st == ACTIVE:
                            prod *= _sigmoid(-s * d2 / sigma)
                    P[i, j] = prod
    return 1.0 - P, P


@njit(cache=True, error_model="numpy")
def soft_backward(tri_xy, lines, start, items, H, W, tile, sigma, cut2, G, P):
    """Gradient of ``sum(G * S)`` with respect to the screen-space triangle corners."""
    ty_n = (H + tile - 1) // tile
    tx_n = (W + tile - 1) // tile
    grad = np.zeros(tri_xy.shape)
    for ty in range(ty_n):
        for tx in range(tx_n):
            k = ty * tx_n + tx
            if start[k] == start[k + 1]:
                continue
            for i in range(ty * tile, min(ty * tile + tile, H)):
                py = i + 0.5
                for j in range(tx * tile, min(tx * tile + tile, W)):
                    g = G[i, j]
                    prod = P[i, j]
                    if g == 0.0 or prod == 0.0:
                        continue
                    px = j + 0.5
                    for n in range(start[k], start[k + 1]):
                        t = items[n]
                        st, d2, s, e, tp, cx, cy = _pair(px, py, t, tri_xy, lines, cut2)
                        if st != ACTIVE:
                            continue
                        D = _sigmoid(s * d2 / sigma)
                        dd2 = g * prod * s * D / sigma
                        # d(d2)/dA = -2 (p - c)(1 - t), d(d2)/dB = -2 (p - c) t
                        rx = -2.0 * (px - cx) * dd2
                        ry = -2.0 * (py - cy) * dd2
                        e1 = (e + 1) % 3
                        grad[t, e, 0] += rx * (1.0 - tp)
                        grad[t, e, 1] += ry * (1.0 - tp)
                        grad[t, e1, 0] += rx * tp
                        grad[t, e1, 1] += ry * tp
    return grad


@njit(cache=True, error_model="numpy")
def soft_l1(tri_xy, lines, start, items, saturated, H, W, tile, sigma, cut2, target, scale):
    """Fused soft forward pass, L1 loss and backward pass for one view.

    Equivalent to ``soft_forward``, an L1 loss and
    ``soft_backward`` with ``G = scale * sign(S - target) / N``, but each
    pixel/triangle pair is evaluated once.

    Returns ``(loss, S, grad)`` with ``loss = mean |S - target|``.
    """
    ty_n = (H + tile - 1) // tile
    tx_n = (W + tile - 1) // tile
    S = np.zeros((H, W))
    grad = np.zeros(tri_xy.shape)
    g_mag = scale / (H * W)
    width = 0
    for k in range(ty_n * tx_n):
        width = max(width, start[k + 1] - start[k])
    c_t = np.empty(width, dtype=np.int64)
    c_e = np.empty(width, dtype=np.int64)
    c_w = np.empty(width)
    c_tp = np.empty(width)
    c_x = np.empty(width)
    c_y = np.empty(width)
    total = 0.0
    for ty in range(ty_n):
        for tx in range(tx_n):
            k = ty * tx_n + tx
            i_end = min(ty * tile + tile, H)
            j_end = min(tx * tile + tile, W)
            if saturated[k] or start[k] == start[k + 1]:
                v = 1.0 if saturated[k] else 0.0
                for i in range(ty * tile, i_end):
                    for j in range(tx * tile, j_end):
                        S[i, j] = v
                        total += abs(v - target[i, j])
                continue
            for i in range(ty * tile, i_end):
                py = i + 0.5
                for j in range(tx * tile, j_end):
                    px = j + 0.5
                    prod = 1.0
                    m = 0
                    for n in range(start[k], start[k + 1]):
                        t = items[n]
                        st, d2, s, e, tp, cx, cy = _pair(px, py, t, tri_xy, lines, cut2)
                        if st == SATURATED:
                            prod = 0.0
                            break
                        if st == ACTIVE:
                            D = _sigmoid(s * d2 / sigma)
                            prod *= 1.0 - D
                            c_t[m] = t
                            c_e[m] = e
                            c_w[m] = s * D / sigma
                            c_tp[m] = tp
                            c_x[m] = cx
                            c_y[m] = cy
                            m += 1
                    val = 1.0 - prod
                    S[i, j] = val
                    d = val - target[i, j]
                    total += abs(d)
                    if prod == 0.0 or d == 0.0:
                        continue
                    g = g_mag if d > 0 else -g_mag
                    for q in range(m):
                        dd2 = g * prod * c_w[q]
                        # d(d2)/dA = -2 (p - c)(1 - t), d(d2)/dB = -2 (p - c) t
                        rx = -2.0 * (px - c_x[q]) * dd2
                        ry = -2.0 * (py - c_y[q]) * dd2
                        t = c_t[q]
                        e = c_e[q]
                        e1 = (e + 1) % 3
                        tp = c_tp[q]
                        grad[t, e, 0] += rx * (1.0 - tp)
                        grad[t, e, 1] += ry * (1.0 - tp)
                        grad[t, e1, 0] += rx * tp
                        grad[t, e1, 1] += ry * tp
    return total / (H * W), S, grad


@njit(cache=True, error_model="numpy")
def hard_raster(tri_xy, inv_z, valid, H, W):
    """Z-buffered coverage with perspective-correct depth (pixel-center sampling).

    ``inv_z[t, k]`` is 1 / view depth of corner k. Returns a depth buffer
    with ``inf`` where nothing is covered and the id of the front triangle
    per pixel (-1 where empty).
    """
    zbuf = np.full((H, W), np.inf)
    tid = np.full((H, W), -1, dtype=np.int64)
    for t in range(tri_xy.shape[0]):
        if not valid[t]:
            continue
        x0, y0 = tri_xy[t, 0, 0], tri_xy[t, 0, 1]
        x1, y1 = tri_xy[t, 1, 0], tri_xy[t, 1, 1]
        x2, y2 = tri_xy[t, 2, 0], tri_xy[t, 2, 1]
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if area == 0.0:
            continue
        xmin = min(x0, min(x1, x2))
        xmax = max(x0, max(x1, x2))
        ymin = min(y0, min(y1, y2))
        ymax = max(y0, max(y1, y2))
        j0 = max(int(np.ceil(xmin - 0.5)), 0)
        j1 = min(int(np.floor(xmax - 0.5)), W - 1)
        i0 = max(int(np.ceil(ymin - 0.5)), 0)
        i1 = min(int(np.floor(ymax - 0.5)), H - 1)
        for i in range(i0, i1 + 1):
            py = i + 0.5
            for j in range(j0, j1 + 1):
                px = j + 0.5
                w0 = ((x1 - px) * (y2 - py) - (x2 - px) * (y1 - py)) / area
                w1 = ((x2 - px) * (y0 - py) - (x0 - px) * (y2 - py)) / area
                w2 = 1.0 - w0 - w1
                if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
                    continue
                z = 1.0 / (w0 * inv_z[t, 0] + w1 * inv_z[t, 1] + w2 * inv_z[t, 2])
                if z < zbuf[i, j]:
                    zbuf[i, j] = z
                    tid[i, j] = t
    return zbuf, tid

