"""Hot numerical kernels.

Each kernel exists twice: a numba ``@njit`` version operating node by
node with a jitted scalar program interpreter, and a pure-numpy version
vectorised over space nodes or paths.  ``backend.USE_NUMBA`` picks the
active one; the ``*_numpy`` twins stay importable for benchmarking and
cross-checking.

Conventions shared by both variants:
  * coefficient programs arrive as a ProgramPack in slot order
    (b, h, sigma, f, g, obstacle, phi);
  * any non-finite value aborts the solve and the kernel returns the
    offending backward macro-layer index (-1 on success);
  * boundary treatment is linear extrapolation (ghost value
    2*u_edge - u_inner), i.e. zero second difference and a one-sided
    first difference at the edges.
"""

import numpy as np

from . import backend, vm

MODE_TERMINAL = 0
MODE_PROJECTION = 1
MODE_PENALTY = 2

# ---------------------------------------------------------------------------
# Pure-numpy variants
# ---------------------------------------------------------------------------


def _vec(pack, slot, shape, t, x, y=0.0, z=0.0):
    return np.broadcast_to(vm.eval_vector(pack.program(slot), t=t, x=x, y=y, z=z), shape)


def _pde_step_numpy(pack, xs, tau, h, lo2, hi2, mode, pen_n, u):
    """One explicit backward substep from the known layer ``u`` at time tau."""
    m = xs.size
    dx = xs[1] - xs[0]
    up = np.empty(m)
    dn = np.empty(m)
    up[:-1] = u[1:]
    up[-1] = 2.0 * u[-1] - u[-2]
    dn[1:] = u[:-1]
    dn[0] = 2.0 * u[0] - u[1]
    d2 = (up - 2.0 * u + dn) / (dx * dx)
    dc = (up - dn) / (2.0 * dx)
    fwd = (up - u) / dx
    bwd = (u - dn) / dx

    bv = _vec(pack, 0, (m,), tau, xs)
    hv = _vec(pack, 1, (m,), tau, xs)
    sg = _vec(pack, 2, (m,), tau, xs)
    zv = sg * dc
    fv = _vec(pack, 3, (m,), tau, xs, u, zv)
    gv = _vec(pack, 4, (m,), tau, xs, u, zv)
    arg = sg * sg * d2 + 2.0 * fv + 2.0 * hv * np.where(hv >= 0.0, fwd, bwd)
    F = (
        0.5 * (hi2 * np.maximum(arg, 0.0) - lo2 * np.maximum(-arg, 0.0))
        + bv * np.where(bv >= 0.0, fwd, bwd)
        + gv
    )
    if mode == MODE_PENALTY:
        lv = _vec(pack, 5, (m,), tau, xs)
        F = F + pen_n * np.maximum(lv - u, 0.0)
    return u + h * F


def pde_march_numpy(pack, xs, t0, dt, nt, nsub, lo2, hi2, mode, pen_n, u_out):
    h = dt / nsub
    u = u_out[nt].copy()
    for i in range(nt - 1, -1, -1):
        t_known = t0 + (i + 1) * dt
        for s in range(nsub):
            u = _pde_step_numpy(pack, xs, t_known - s * h, h, lo2, hi2, mode, pen_n, u)
        if not np.all(np.isfinite(u)):
            return i
        if mode == MODE_PROJECTION:
            lv = _vec(pack, 5, (xs.size,), t0 + i * dt, xs)
            u = np.maximum(u, lv)
        u_out[i] = u
    return -1


def lattice_backward_numpy(pack, J, x0, dx, dt, nt, lo2, hi2, has_l, pen_n, Y, Z, dL, dK, CH):
    for i in range(nt - 1, -1, -1):
        j0 = min(i, J)
        j1 = min(i + 1, J)
        ti = i * dt
        lev = np.arange(-j0, j0 + 1)
        xj = x0 + lev * dx
        c = Y[i + 1, J + lev]
        upv = np.where(
            lev + 1 <= j1, Y[i + 1, np.minimum(J + lev + 1, 2 * J)], 2.0 * c - Y[i + 1, J + lev - 1]
        )
        dnv = np.where(
            lev - 1 >= -j1, Y[i + 1, np.maximum(J + lev - 1, 0)], 2.0 * c - Y[i + 1, np.minimum(J + lev + 1, 2 * J)]
        )
        sh = xj.shape
        bv = _vec(pack, 0, sh, ti, xj)
        hv = _vec(pack, 1, sh, ti, xj)
        sg = _vec(pack, 2, sh, ti, xj)
        lv = _vec(pack, 5, sh, ti, xj) if has_l else np.zeros(sh)
        zz = sg * (upv - dnv) / (2.0 * dx)

        def q_of(v2):
            m1 = (bv + hv * v2) * dt
            ratio = (sg * sg * v2 * dt + m1 * m1) / (dx * dx)
            puv = 0.5 * (ratio + m1 / dx)
            pdv = 0.5 * (ratio - m1 / dx)
            ey = puv * upv + (1.0 - ratio) * c + pdv * dnv
            gen = _vec(pack, 4, sh, ti, xj, ey, zz) + v2 * _vec(pack, 3, sh, ti, xj, ey, zz)
            pen = pen_n * np.maximum(lv - ey, 0.0) if has_l else 0.0
            return ey + dt * (gen + pen), ey

        q_lo, ey_lo = q_of(lo2)
        q_hi, ey_hi = q_of(hi2)
        take_hi = q_hi >= q_lo
        yv = np.where(take_hi, q_hi, q_lo)
        if not np.all(np.isfinite(yv)):
            return i
        sl = slice(J - j0, J + j0 + 1)
        Y[i, sl] = yv
        Z[i, sl] = zz
        CH[i, sl] = np.where(take_hi, hi2, lo2)
        if has_l:
            ey_c = np.where(take_hi, ey_hi, ey_lo)
            dL[i, sl] = dt * pen_n * np.maximum(lv - ey_c, 0.0)
        else:
            dL[i, sl] = 0.0
        dK[i, sl] = np.where(take_hi, q_lo - q_hi, q_hi - q_lo)
    return -1


def chain_residuals_numpy(pack, J, x0, dx, dt, nt, lo2, hi2, has_l, pen_n, Y, Z, V, U):
    npaths = U.shape[0]
    j = np.zeros(npaths, dtype=np.int64)
    acc = np.zeros(npaths)
    for i in range(nt):
        j1 = min(i + 1, J)
        xj = x0 + j * dx
        v = V[i, J + j]
        v2 = v * v
        sh = xj.shape
        bv = _vec(pack, 0, sh, i * dt, xj)
        hv = _vec(pack, 1, sh, i * dt, xj)
        sg = _vec(pack, 2, sh, i * dt, xj)
        m1 = (bv + hv * v2) * dt
        ratio = (sg * sg * v2 * dt + m1 * m1) / (dx * dx)
        pu = 0.5 * (ratio + m1 / dx)
        pd = 0.5 * (ratio - m1 / dx)
        c = Y[i + 1, J + j]
        upv = np.where(j + 1 <= j1, Y[i + 1, np.minimum(J + j + 1, 2 * J)], 2.0 * c - Y[i + 1, J + j - 1])
        dnv = np.where(j - 1 >= -j1, Y[i + 1, np.maximum(J + j - 1, 0)], 2.0 * c - Y[i + 1, np.minimum(J + j + 1, 2 * J)])
        ey = pu * upv + (1.0 - ratio) * c + pd * dnv
        zz = Z[i, J + j]
        gen = _vec(pack, 4, sh, i * dt, xj, ey, zz) + v2 * _vec(pack, 3, sh, i * dt, xj, ey, zz)
        if has_l and pen_n > 0.0:
            lv = _vec(pack, 5, sh, i * dt, xj)
            gen = gen + pen_n * np.maximum(lv - ey, 0.0)
        u = U[:, i]
        move = np.where(u < pu, 1, np.where(u < pu + pd, -1, 0))
        jn = np.clip(j + move, -j1, j1)
        db = ((jn - j) * dx - m1) / sg
        acc += Y[i + 1, J + jn] - Y[i, J + j] + dt * gen - zz * db
        j = jn
    return acc


def euler_paths_numpy(pack, x0, t0, dt, nt, vlev, normals):
    npaths = normals.shape[0]
    B = np.zeros((npaths, nt + 1))
    QV = np.zeros((npaths, nt + 1))
    X = np.empty((npaths, nt + 1))
    X[:, 0] = x0
    sqdt = np.sqrt(dt)
    for i in range(nt):
        t = t0 + i * dt
        v = vlev[i]
        xi = X[:, i]
        db = v * sqdt * normals[:, i]
        dq = v * v * dt
        sh = xi.shape
        bv = _vec(pack, 0, sh, t, xi)
        hv = _vec(pack, 1, sh, t, xi)
        sg = _vec(pack, 2, sh, t, xi)
        X[:, i + 1] = xi + bv * dt + hv * dq + sg * db
        B[:, i + 1] = B[:, i] + db
        QV[:, i + 1] = QV[:, i] + dq
    return B, QV, X


# ---------------------------------------------------------------------------
# Numba variants
# ---------------------------------------------------------------------------

if backend.USE_NUMBA:
    from numba import njit

    @njit(cache=True)
    def _evals(ops, args, consts, o0, o1, t, x, y, z, stack):
        sp = 0
        for k in range(o0, o1):
            op = ops[k]
            if op == 0:
                stack[sp] = consts[args[k]]
                sp += 1
            elif op == 1:
                stack[sp] = t
                sp += 1
            elif op == 2:
                stack[sp] = x
                sp += 1
            elif op == 3:
                stack[sp] = y
                sp += 1
            elif op == 4:
                stack[sp] = z
                sp += 1
            elif op == 5:
                stack[sp - 2] += stack[sp - 1]
                sp -= 1
            elif op == 6:
                stack[sp - 2] -= stack[sp - 1]
                sp -= 1
            elif op == 7:
                stack[sp - 2] *= stack[sp - 1]
                sp -= 1
            elif op == 8:
                den = stack[sp - 1]
                stack[sp - 2] = np.nan if den == 0.0 else stack[sp - 2] / den
                sp -= 1
            elif op == 9:
                a = stack[sp - 2]
                b = stack[sp - 1]
                if (a < 0.0 and b != np.floor(b)) or (a == 0.0 and b < 0.0):
                    stack[sp - 2] = np.nan
                else:
                    stack[sp - 2] = a**b
                sp -= 1
            elif op == 10:
                stack[sp - 1] = -stack[sp - 1]
            elif op == 11:
                stack[sp - 2] = max(stack[sp - 2], stack[sp - 1])
                sp -= 1
            elif op == 12:
                stack[sp - 2] = min(stack[sp - 2], stack[sp - 1])
                sp -= 1
            elif op == 13:
                stack[sp - 1] = abs(stack[sp - 1])
            elif op == 14:
                stack[sp - 1] = np.exp(stack[sp - 1])
            elif op == 15:
                v = stack[sp - 1]
                stack[sp - 1] = np.log(v) if v > 0.0 else np.nan
            elif op == 16:
                v = stack[sp - 1]
                stack[sp - 1] = np.sqrt(v) if v >= 0.0 else np.nan
            elif op == 17:
                stack[sp - 1] = max(stack[sp - 1], 0.0)
            else:
                stack[sp - 1] = max(-stack[sp - 1], 0.0)
        return stack[0]

    @njit(cache=True)
    def _pde_march_numba(ops, args, consts, offs, xs, t0, dt, nt, nsub, lo2, hi2, mode, pen_n, u_out):
        m = xs.shape[0]
        dx = xs[1] - xs[0]
        stack = np.empty(64, np.float64)
        u = u_out[nt].copy()
        un = np.empty(m, np.float64)
        h = dt / nsub
        for i in range(nt - 1, -1, -1):
            t_known = t0 + (i + 1) * dt
            ok = True
            for s in range(nsub):
                tau = t_known - s * h
                for jj in range(m):
                    uc = u[jj]
                    up = u[jj + 1] if jj + 1 < m else 2.0 * u[m - 1] - u[m - 2]
                    dn = u[jj - 1] if jj >= 1 else 2.0 * u[0] - u[1]
                    d2 = (up - 2.0 * uc + dn) / (dx * dx)
                    dc = (up - dn) / (2.0 * dx)
                    fwd = (up - uc) / dx
                    bwd = (uc - dn) / dx
                    xj = xs[jj]
                    bv = _evals(ops, args, consts, offs[0], offs[1], tau, xj, 0.0, 0.0, stack)
                    hv = _evals(ops, args, consts, offs[1], offs[2], tau, xj, 0.0, 0.0, stack)
                    sg = _evals(ops, args, consts, offs[2], offs[3], tau, xj, 0.0, 0.0, stack)
                    zv = sg * dc
                    fv = _evals(ops, args, consts, offs[3], offs[4], tau, xj, uc, zv, stack)
                    gv = _evals(ops, args, consts, offs[4], offs[5], tau, xj, uc, zv, stack)
                    arg = sg * sg * d2 + 2.0 * fv + 2.0 * hv * (fwd if hv >= 0.0 else bwd)
                    F = (
                        0.5 * (hi2 * max(arg, 0.0) - lo2 * max(-arg, 0.0))
                        + bv * (fwd if bv >= 0.0 else bwd)
                        + gv
                    )
                    if mode == 2:
                        lv = _evals(ops, args, consts, offs[5], offs[6], tau, xj, 0.0, 0.0, stack)
                        F += pen_n * max(lv - uc, 0.0)
                    val = uc + h * F
                    if not np.isfinite(val):
                        ok = False
                    un[jj] = val
                for jj in range(m):
                    u[jj] = un[jj]
            if not ok:
                return i
            if mode == 1:
                ti = t0 + i * dt
                for jj in range(m):
                    lv = _evals(ops, args, consts, offs[5], offs[6], ti, xs[jj], 0.0, 0.0, stack)
                    if lv > u[jj]:
                        u[jj] = lv
            for jj in range(m):
                u_out[i, jj] = u[jj]
        return -1

    @njit(cache=True)
    def _lattice_backward_numba(
        ops, args, consts, offs, J, x0, dx, dt, nt, lo2, hi2, has_l, pen_n, Y, Z, dL, dK, CH
    ):
        stack = np.empty(64, np.float64)
        for i in range(nt - 1, -1, -1):
            j0 = min(i, J)
            j1 = min(i + 1, J)
            ti = i * dt
            for lev in range(-j0, j0 + 1):
                xj = x0 + lev * dx
                c = Y[i + 1, J + lev]
                if lev + 1 <= j1:
                    upv = Y[i + 1, J + lev + 1]
                else:
                    upv = 2.0 * c - Y[i + 1, J + lev - 1]
                if lev - 1 >= -j1:
                    dnv = Y[i + 1, J + lev - 1]
                else:
                    dnv = 2.0 * c - Y[i + 1, J + lev + 1]
                bv = _evals(ops, args, consts, offs[0], offs[1], ti, xj, 0.0, 0.0, stack)
                hv = _evals(ops, args, consts, offs[1], offs[2], ti, xj, 0.0, 0.0, stack)
                sg = _evals(ops, args, consts, offs[2], offs[3], ti, xj, 0.0, 0.0, stack)
                lv = 0.0
                if has_l:
                    lv = _evals(ops, args, consts, offs[5], offs[6], ti, xj, 0.0, 0.0, stack)
                zz = sg * (upv - dnv) / (2.0 * dx)

                q_lo = 0.0
                q_hi = 0.0
                ey_lo = 0.0
                ey_hi = 0.0
                for side in range(2):
                    v2 = lo2 if side == 0 else hi2
                    m1 = (bv + hv * v2) * dt
                    ratio = (sg * sg * v2 * dt + m1 * m1) / (dx * dx)
                    puv = 0.5 * (ratio + m1 / dx)
                    pdv = 0.5 * (ratio - m1 / dx)
                    ey = puv * upv + (1.0 - ratio) * c + pdv * dnv
                    gen = _evals(ops, args, consts, offs[4], offs[5], ti, xj, ey, zz, stack) + v2 * _evals(
                        ops, args, consts, offs[3], offs[4], ti, xj, ey, zz, stack
                    )
                    if has_l:
                        gen += pen_n * max(lv - ey, 0.0)
                    q = ey + dt * gen
                    if side == 0:
                        q_lo = q
                        ey_lo = ey
                    else:
                        q_hi = q
                        ey_hi = ey
                if q_hi >= q_lo:
                    yv = q_hi
                    CH[i, J + lev] = hi2
                    ey_c = ey_hi
                    dK[i, J + lev] = q_lo - q_hi
                else:
                    yv = q_lo
                    CH[i, J + lev] = lo2
                    ey_c = ey_lo
                    dK[i, J + lev] = q_hi - q_lo
                if not np.isfinite(yv):
                    return i
                Y[i, J + lev] = yv
                Z[i, J + lev] = zz
                dL[i, J + lev] = dt * pen_n * max(lv - ey_c, 0.0) if has_l else 0.0
        return -1

    @njit(cache=True)
    def _chain_residuals_numba(
        ops, args, consts, offs, J, x0, dx, dt, nt, lo2, hi2, has_l, pen_n, Y, Z, V, U, out
    ):
        npaths = U.shape[0]
        stack = np.empty(64, np.float64)
        for pth in range(npaths):
            j = 0
            acc = 0.0
            for i in range(nt):
                j1 = min(i + 1, J)
                xj = x0 + j * dx
                v = V[i, J + j]
                v2 = v * v
                ti = i * dt
                bv = _evals(ops, args, consts, offs[0], offs[1], ti, xj, 0.0, 0.0, stack)
                hv = _evals(ops, args, consts, offs[1], offs[2], ti, xj, 0.0, 0.0, stack)
                sg = _evals(ops, args, consts, offs[2], offs[3], ti, xj, 0.0, 0.0, stack)
                m1 = (bv + hv * v2) * dt
                ratio = (sg * sg * v2 * dt + m1 * m1) / (dx * dx)
                pu = 0.5 * (ratio + m1 / dx)
                pd = 0.5 * (ratio - m1 / dx)
                c = Y[i + 1, J + j]
                upv = Y[i + 1, J + j + 1] if j + 1 <= j1 else 2.0 * c - Y[i + 1, J + j - 1]
                dnv = Y[i + 1, J + j - 1] if j - 1 >= -j1 else 2.0 * c - Y[i + 1, J + j + 1]
                ey = pu * upv + (1.0 - ratio) * c + pd * dnv
                zz = Z[i, J + j]
                gen = _evals(ops, args, consts, offs[4], offs[5], ti, xj, ey, zz, stack) + v2 * _evals(
                    ops, args, consts, offs[3], offs[4], ti, xj, ey, zz, stack
                )
                if has_l and pen_n > 0.0:
                    lv = _evals(ops, args, consts, offs[5], offs[6], ti, xj, 0.0, 0.0, stack)
                    gen += pen_n * max(lv - ey, 0.0)
                uu = U[pth, i]
                move = 1 if uu < pu else (-1 if uu < pu + pd else 0)
                jn = j + move
                if jn > j1:
                    jn = j1
                if jn < -j1:
                    jn = -j1
                db = ((jn - j) * dx - m1) / sg
                acc += Y[i + 1, J + jn] - Y[i, J + j] + dt * gen - zz * db
                j = jn
            out[pth] = acc
        return 0

    @njit(cache=True)
    def _euler_paths_numba(ops, args, consts, offs, x0, t0, dt, nt, vlev, normals, B, QV, X):
        npaths = normals.shape[0]
        stack = np.empty(64, np.float64)
        sqdt = np.sqrt(dt)
        for pth in range(npaths):
            bacc = 0.0
            qacc = 0.0
            xcur = x0
            B[pth, 0] = 0.0
            QV[pth, 0] = 0.0
            X[pth, 0] = x0
            for i in range(nt):
                t = t0 + i * dt
                v = vlev[i]
                db = v * sqdt * normals[pth, i]
                dq = v * v * dt
                bv = _evals(ops, args, consts, offs[0], offs[1], t, xcur, 0.0, 0.0, stack)
                hv = _evals(ops, args, consts, offs[1], offs[2], t, xcur, 0.0, 0.0, stack)
                sg = _evals(ops, args, consts, offs[2], offs[3], t, xcur, 0.0, 0.0, stack)
                xcur = xcur + bv * dt + hv * dq + sg * db
                bacc += db
                qacc += dq
                B[pth, i + 1] = bacc
                QV[pth, i + 1] = qacc
                X[pth, i + 1] = xcur
        return 0


# ---------------------------------------------------------------------------
# Dispatchers
# ---------------------------------------------------------------------------


def pde_march(pack, xs, t0, dt, nt, nsub, lo2, hi2, mode, pen_n, u_out):
    if backend.USE_NUMBA:
        return _pde_march_numba(
            pack.ops, pack.args, pack.consts, pack.offsets,
            xs, t0, dt, nt, nsub, lo2, hi2, mode, pen_n, u_out,
        )
    return pde_march_numpy(pack, xs, t0, dt, nt, nsub, lo2, hi2, mode, pen_n, u_out)


def lattice_backward(pack, J, x0, dx, dt, nt, lo2, hi2, has_l, pen_n, Y, Z, dL, dK, CH):
    if backend.USE_NUMBA:
        return _lattice_backward_numba(
            pack.ops, pack.args, pack.consts, pack.offsets,
            J, x0, dx, dt, nt, lo2, hi2, has_l, pen_n, Y, Z, dL, dK, CH,
        )
    return lattice_backward_numpy(pack, J, x0, dx, dt, nt, lo2, hi2, has_l, pen_n, Y, Z, dL, dK, CH)


def chain_residuals(pack, J, x0, dx, dt, nt, lo2, hi2, has_l, pen_n, Y, Z, V, U):
    if backend.USE_NUMBA:
        out = np.empty(U.shape[0])
        _chain_residuals_numba(
            pack.ops, pack.args, pack.consts, pack.offsets,
            J, x0, dx, dt, nt, lo2, hi2, has_l, pen_n, Y, Z, V, U, out,
        )
        return out
    return chain_residuals_numpy(pack, J, x0, dx, dt, nt, lo2, hi2, has_l, pen_n, Y, Z, V, U)


def euler_paths(pack, x0, t0, dt, nt, vlev, normals):
    if backend.USE_NUMBA:
        npaths = normals.shape[0]
        B = np.empty((npaths, nt + 1))
        QV = np.empty((npaths, nt + 1))
        X = np.empty((npaths, nt + 1))
        _euler_paths_numba(
            pack.ops, pack.args, pack.consts, pack.offsets,
            x0, t0, dt, nt, vlev, normals, B, QV, X,
        )
        return B, QV, X
    return euler_paths_numpy(pack, x0, t0, dt, nt, vlev, normals)
