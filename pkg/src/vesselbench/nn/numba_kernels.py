"""Optional numba-compiled inner loops for 3x3(x3) float32 convolution.

The numpy im2col path in ``functional`` is the reference implementation;
these kernels compute the same cross-correlations with tight
fused-multiply-add loops (output channels processed in pairs so source
rows are loaded once per pair). They kick in only for float32 inputs
with kernel extent 3; everything else falls back to numpy. Disable with
``VESSELBENCH_NO_NUMBA=1``.

fastmath only reassociates the row accumulations; results match the
numpy path to float32 roundoff and are run-to-run deterministic on a
given machine.
"""

from __future__ import annotations

import os

import numpy as np

try:  # pragma: no cover - exercised implicitly by the dispatch tests
    if os.environ.get("VESSELBENCH_NO_NUMBA"):
        raise ImportError("numba disabled by environment")
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    HAS_NUMBA = False


if HAS_NUMBA:

    @numba.njit(cache=True, fastmath=True)
    def conv3d_k3(xp, w, b, out):
        B, cin, Dp, Hp, Wp = xp.shape
        cout = w.shape[0]
        D, H, W = Dp - 2, Hp - 2, Wp - 2
        for bb in range(B):
            co = 0
            while co + 1 < cout:
                for z in range(D):
                    for y in range(H):
                        rowa = out[bb, co, z, y]
                        rowb = out[bb, co + 1, z, y]
                        for xx in range(W):
                            rowa[xx] = b[co]
                            rowb[xx] = b[co + 1]
                        for ci in range(cin):
                            for dz in range(3):
                                for dy in range(3):
                                    src = xp[bb, ci, z + dz, y + dy]
                                    a0 = w[co, ci, dz, dy, 0]
                                    a1 = w[co, ci, dz, dy, 1]
                                    a2 = w[co, ci, dz, dy, 2]
                                    c0 = w[co + 1, ci, dz, dy, 0]
                                    c1 = w[co + 1, ci, dz, dy, 1]
                                    c2 = w[co + 1, ci, dz, dy, 2]
                                    for xx in range(W):
                                        s0 = src[xx]
                                        s1 = src[xx + 1]
                                        s2 = src[xx + 2]
                                        rowa[xx] += a0 * s0 + a1 * s1 + a2 * s2
                                        rowb[xx] += c0 * s0 + c1 * s1 + c2 * s2
                co += 2
            if co < cout:
                for z in range(D):
                    for y in range(H):
                        rowa = out[bb, co, z, y]
                        for xx in range(W):
                            rowa[xx] = b[co]
                        for ci in range(cin):
                            for dz in range(3):
                                for dy in range(3):
                                    src = xp[bb, ci, z + dz, y + dy]
                                    a0 = w[co, ci, dz, dy, 0]
                                    a1 = w[co, ci, dz, dy, 1]
                                    a2 = w[co, ci, dz, dy, 2]
                                    for xx in range(W):
                                        rowa[xx] += (
                                            a0 * src[xx]
                                            + a1 * src[xx + 1]
                                            + a2 * src[xx + 2]
                                        )

    @numba.njit(cache=True, fastmath=True)
    def conv2d_k3(xp, w, b, out):
        B, cin, Hp, Wp = xp.shape
        cout = w.shape[0]
        H, W = Hp - 2, Wp - 2
        for bb in range(B):
            co = 0
            while co + 1 < cout:
                for y in range(H):
                    rowa = out[bb, co, y]
                    rowb = out[bb, co + 1, y]
                    for xx in range(W):
                        rowa[xx] = b[co]
                        rowb[xx] = b[co + 1]
                    for ci in range(cin):
                        for dy in range(3):
                            src = xp[bb, ci, y + dy]
                            a0 = w[co, ci, dy, 0]
                            a1 = w[co, ci, dy, 1]
                            a2 = w[co, ci, dy, 2]
                            c0 = w[co + 1, ci, dy, 0]
                            c1 = w[co + 1, ci, dy, 1]
                            c2 = w[co + 1, ci, dy, 2]
                            for xx in range(W):
                                s0 = src[xx]
                                s1 = src[xx + 1]
                                s2 = src[xx + 2]
                                rowa[xx] += a0 * s0 + a1 * s1 + a2 * s2
                                rowb[xx] += c0 * s0 + c1 * s1 + c2 * s2
                co += 2
            if co < cout:
                for y in range(H):
                    rowa = out[bb, co, y]
                    for xx in range(W):
                        rowa[xx] = b[co]
                    for ci in range(cin):
                        for dy in range(3):
                            src = xp[bb, ci, y + dy]
                            a0 = w[co, ci, dy, 0]
                            a1 = w[co, ci, dy, 1]
                            a2 = w[co, ci, dy, 2]
                            for xx in range(W):
                                rowa[xx] += (
                                    a0 * src[xx] + a1 * src[xx + 1] + a2 * src[xx + 2]
                                )

    @numba.njit(cache=True, fastmath=True)
    def conv3d_k3_rmw(xp, w, b, out):
        # weights hoisted out of the spatial loops; output channels are
        # accumulated in place (wins while an output channel stays cache
        # resident, i.e. small/medium grids)
        B, cin, Dp, Hp, Wp = xp.shape
        cout = w.shape[0]
        D, H, W = Dp - 2, Hp - 2, Wp - 2
        for bb in range(B):
            co = 0
            while co + 1 < cout:
                for z in range(D):
                    for y in range(H):
                        ra = out[bb, co, z, y]
                        rb = out[bb, co + 1, z, y]
                        for xx in range(W):
                            ra[xx] = b[co]
                            rb[xx] = b[co + 1]
                for ci in range(cin):
                    for dz in range(3):
                        for dy in range(3):
                            a0 = w[co, ci, dz, dy, 0]
                            a1 = w[co, ci, dz, dy, 1]
                            a2 = w[co, ci, dz, dy, 2]
                            c0 = w[co + 1, ci, dz, dy, 0]
                            c1 = w[co + 1, ci, dz, dy, 1]
                            c2 = w[co + 1, ci, dz, dy, 2]
                            for z in range(D):
                                for y in range(H):
                                    src = xp[bb, ci, z + dz, y + dy]
                                    ra = out[bb, co, z, y]
                                    rb = out[bb, co + 1, z, y]
                                    for xx in range(W):
                                        s0 = src[xx]
                                        s1 = src[xx + 1]
                                        s2 = src[xx + 2]
                                        ra[xx] += a0 * s0 + a1 * s1 + a2 * s2
                                        rb[xx] += c0 * s0 + c1 * s1 + c2 * s2
                co += 2
            if co < cout:
                for z in range(D):
                    for y in range(H):
                        ra = out[bb, co, z, y]
                        for xx in range(W):
                            ra[xx] = b[co]
                for ci in range(cin):
                    for dz in range(3):
                        for dy in range(3):
                            a0 = w[co, ci, dz, dy, 0]
                            a1 = w[co, ci, dz, dy, 1]
                            a2 = w[co, ci, dz, dy, 2]
                            for z in range(D):
                                for y in range(H):
                                    src = xp[bb, ci, z + dz, y + dy]
                                    ra = out[bb, co, z, y]
                                    for xx in range(W):
                                        ra[xx] += (
                                            a0 * src[xx]
                                            + a1 * src[xx + 1]
                                            + a2 * src[xx + 2]
                                        )

    @numba.njit(cache=True, fastmath=True)
    def conv2d_k3_rmw(xp, w, b, out):
        B, cin, Hp, Wp = xp.shape
        cout = w.shape[0]
        H, W = Hp - 2, Wp - 2
        for bb in range(B):
            co = 0
            while co + 1 < cout:
                for y in range(H):
                    ra = out[bb, co, y]
                    rb = out[bb, co + 1, y]
                    for xx in range(W):
                        ra[xx] = b[co]
                        rb[xx] = b[co + 1]
                for ci in range(cin):
                    for dy in range(3):
                        a0 = w[co, ci, dy, 0]
                        a1 = w[co, ci, dy, 1]
                        a2 = w[co, ci, dy, 2]
                        c0 = w[co + 1, ci, dy, 0]
                        c1 = w[co + 1, ci, dy, 1]
                        c2 = w[co + 1, ci, dy, 2]
                        for y in range(H):
                            src = xp[bb, ci, y + dy]
                            ra = out[bb, co, y]
                            rb = out[bb, co + 1, y]
                            for xx in range(W):
                                s0 = src[xx]
                                s1 = src[xx + 1]
                                s2 = src[xx + 2]
                                ra[xx] += a0 * s0 + a1 * s1 + a2 * s2
                                rb[xx] += c0 * s0 + c1 * s1 + c2 * s2
                co += 2
            if co < cout:
                for y in range(H):
                    ra = out[bb, co, y]
                    for xx in range(W):
                        ra[xx] = b[co]
                for ci in range(cin):
                    for dy in range(3):
                        a0 = w[co, ci, dy, 0]
                        a1 = w[co, ci, dy, 1]
                        a2 = w[co, ci, dy, 2]
                        for y in range(H):
                            src = xp[bb, ci, y + dy]
                            ra = out[bb, co, y]
                            for xx in range(W):
                                ra[xx] += (
                                    a0 * src[xx] + a1 * src[xx + 1] + a2 * src[xx + 2]
                                )

    @numba.njit(cache=True)
    def maxpool3d(x, out):
        B, C, D, H, W = out.shape
        for bb in range(B):
            for c in range(C):
                for z in range(D):
                    for y in range(H):
                        r0 = x[bb, c, 2 * z, 2 * y]
                        r1 = x[bb, c, 2 * z, 2 * y + 1]
                        r2 = x[bb, c, 2 * z + 1, 2 * y]
                        r3 = x[bb, c, 2 * z + 1, 2 * y + 1]
                        orow = out[bb, c, z, y]
                        for xx in range(W):
                            m = r0[2 * xx]
                            for v in (r0[2 * xx + 1], r1[2 * xx], r1[2 * xx + 1],
                             r2[2 * xx], r2[2 * xx + 1], r3[2 * xx], r3[2 * xx + 1]):
                                if v > m:
                                    m = v
                            orow[xx] = m

    @numba.njit(cache=True)
    def maxpool2d(x, out):
        B, C, H, W = out.shape
        for bb in range(B):
            for c in range(C):
                for y in range(H):
                    r0 = x[bb, c, 2 * y]
                    r1 = x[bb, c, 2 * y + 1]
                    orow = out[bb, c, y]
                    for xx in range(W):
                        m = r0[2 * xx]
                        for v in (r0[2 * xx + 1], r1[2 * xx], r1[2 * xx + 1]):
                            if v > m:
                                m = v
                        orow[xx] = m

    @numba.njit(cache=True)
    def upsample3d(x, out):
        B, C, D, H, W = x.shape
        for bb in range(B):
            for c in range(C):
                for z in range(D):
                    for y in range(H):
                        src = x[bb, c, z, y]
                        for rz in range(2):
                            for ry in range(2):
                                orow = out[bb, c, 2 * z + rz, 2 * y + ry]
                                for xx in range(W):
                                    orow[2 * xx] = src[xx]
                                    orow[2 * xx + 1] = src[xx]

    @numba.njit(cache=True)
    def upsample2d(x, out):
        B, C, H, W = x.shape
        for bb in range(B):
            for c in range(C):
                for y in range(H):
                    src = x[bb, c, y]
                    for ry in range(2):
                        orow = out[bb, c, 2 * y + ry]
                        for xx in range(W):
                            orow[2 * xx] = src[xx]
                            orow[2 * xx + 1] = src[xx]

    @numba.njit(cache=True, fastmath=True)
    def convw3d_k3(xp, g, gw):
        # gw[co, ci, dz, dy, dx] += sum_b,s g[b, co, s] * xp[b, ci, s + d]
        B, cin, Dp, Hp, Wp = xp.shape
        cout = g.shape[1]
        D, H, W = Dp - 2, Hp - 2, Wp - 2
        for bb in range(B):
            for z in range(D):
                for y in range(H):
                    for ci in range(cin):
                        for dz in range(3):
                            for dy in range(3):
                                src = xp[bb, ci, z + dz, y + dy]
                                for co in range(cout):
                                    grow = g[bb, co, z, y]
                                    d0 = np.float32(0.0)
                                    d1 = np.float32(0.0)
                                    d2 = np.float32(0.0)
                                    for xx in range(W):
                                        gv = grow[xx]
                                        d0 += gv * src[xx]
                                        d1 += gv * src[xx + 1]
                                        d2 += gv * src[xx + 2]
                                    gw[co, ci, dz, dy, 0] += d0
                                    gw[co, ci, dz, dy, 1] += d1
                                    gw[co, ci, dz, dy, 2] += d2

    @numba.njit(cache=True, fastmath=True)
    def convw2d_k3(xp, g, gw):
        B, cin, Hp, Wp = xp.shape
        cout = g.shape[1]
        H, W = Hp - 2, Wp - 2
        for bb in range(B):
            for y in range(H):
                for ci in range(cin):
                    for dy in range(3):
                        src = xp[bb, ci, y + dy]
                        for co in range(cout):
                            grow = g[bb, co, y]
                            d0 = np.float32(0.0)
                            d1 = np.float32(0.0)
                            d2 = np.float32(0.0)
                            for xx in range(W):
                                gv = grow[xx]
                                d0 += gv * src[xx]
                                d1 += gv * src[xx + 1]
                                d2 += gv * src[xx + 2]
                            gw[co, ci, dy, 0] += d0
                            gw[co, ci, dy, 1] += d1
                            gw[co, ci, dy, 2] += d2
