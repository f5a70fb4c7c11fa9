# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled stepping engine: same `advance_block` contract as `_engine_py`.

Paths inside a block are independent, so the hot loop runs path-major with
the GIL released.  All table lookups, softmax mixtures, quadrature sums and
MLP evaluations are inlined here; scratch buffers are allocated once per
call in the Python wrapper.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, isfinite, log, log1p, sqrt, tanh

cnp.import_array()

DEF STATUS_RUNNING = 0
DEF STATUS_HIT = 1
DEF STATUS_RATE = 2
DEF STATUS_CAP = 3

# drift kinds (mirror tables.py)
DEF DRIFT_FREE = 0
DEF DRIFT_SPHERE = 1
DEF DRIFT_POINTS_BM = 2
DEF DRIFT_POINTS_OU = 3
DEF DRIFT_MLP = 4

# kill kinds
DEF KILL_NONE = 0
DEF KILL_EXP = 1
DEF KILL_BALL = 2
DEF KILL_SPHERE_EXIT = 3
DEF KILL_SUPPORT = 4

ENGINE_NAME = "cython"

cdef double PI_C = 3.141592653589793


cdef inline double _hermite(double u0, double du, const double* val,
                            const double* der, Py_ssize_t n, double z) noexcept nogil:
    cdef double u = log(z)
    cdef double t = (u - u0) / du
    cdef double tmax = (n - 1) - 1e-9
    if t < 0.0:
        t = 0.0
    elif t > tmax:
        t = tmax
    cdef Py_ssize_t i = <Py_ssize_t> t
    cdef double s = t - i
    cdef double s2 = s * s
    cdef double s3 = s2 * s
    cdef double h00 = 2.0 * s3 - 3.0 * s2 + 1.0
    cdef double h10 = s3 - 2.0 * s2 + s
    cdef double h01 = -2.0 * s3 + 3.0 * s2
    cdef double h11 = s3 - s2
    return (h00 * val[i] + h10 * du * der[i]
            + h01 * val[i + 1] + h11 * du * der[i + 1])


cdef inline double _kr_eval(double u0, double du, const double* val, const double* der,
                            Py_ssize_t n, double z_hi, double nu, double z) noexcept nogil:
    if z > z_hi:
        return 1.0 + (2.0 * nu + 1.0) / (2.0 * z)
    return _hermite(u0, du, val, der, n, z)


cdef inline double _lg_eval(double u0, double du, const double* val, const double* der,
                            Py_ssize_t n, double z_hi, double nu, double c0,
                            double z) noexcept nogil:
    if z > z_hi:
        return (c0 - nu * log(z) + 0.5 * log(PI_C / (2.0 * z)) - z
                + log1p((4.0 * nu * nu - 1.0) / (8.0 * z)))
    return _hermite(u0, du, val, der, n, z)


cdef inline double _ri_eval(double u0, double du, const double* val, const double* der,
                            Py_ssize_t n, double z_hi, double nu, double z) noexcept nogil:
    cdef double out
    if z > z_hi:
        out = 1.0 - (2.0 * nu + 1.0) / (2.0 * z)
        if out < 0.0:
            out = 0.0
        return out
    return _hermite(u0, du, val, der, n, z)


cdef int _drift_eval(int kind, Py_ssize_t dim, double lin_coef,
                     double nu, double sq2r,
                     double u0, double du, double z_hi, double lg_c0,
                     const double* kr_val, const double* kr_der, Py_ssize_t kr_n,
                     const double* lg_val, const double* lg_der, Py_ssize_t lg_n,
                     const double* ri_val, const double* ri_der, Py_ssize_t ri_n,
                     const double* points, const double* logits,
                     const double* point_sq, Py_ssize_t n_points,
                     const double* q_logpref, const double* q_csq,
                     const double* q_cdot, Py_ssize_t n_quad,
                     const double* mlp_w, const cnp.int64_t* mlp_dims,
                     Py_ssize_t n_mlp_dims, int mlp_act,
                     const double* offset, Py_ssize_t n_offset,
                     const double* x, double* out,
                     double* s_logits, double* s_coef, double* s_quad,
                     double* s_act0, double* s_act1) noexcept nogil:
    """Writes drift(x) into out; returns 0, or 1 on non-finite output."""
    cdef Py_ssize_t i, j, k, a, b, off
    cdef double radius2, radius, z, ri, scale, rho, kr, m, tot, w, acc
    cdef double sqx, dot, lg, ssq, sdot, coefx, zv
    cdef double* src
    cdef double* dst

    for k in range(dim):
        out[k] = lin_coef * x[k]

    if kind == DRIFT_SPHERE:
        radius2 = 0.0
        for k in range(dim):
            radius2 += x[k] * x[k]
        radius = sqrt(radius2)
        if radius > 0.0:
            z = radius * sq2r
            if z < 1e-300:
                z = 1e-300
            ri = _ri_eval(u0, du, ri_val, ri_der, ri_n, z_hi, nu, z)
            scale = sq2r * ri / radius
            for k in range(dim):
                out[k] += scale * x[k]

    elif kind == DRIFT_POINTS_BM:
        # logits and radial coefficients per data point
        m = -1e308
        for i in range(n_points):
            rho = 0.0
            for k in range(dim):
                zv = x[k] - points[i * dim + k]
                rho += zv * zv
            rho = sqrt(rho)
            if rho < 1e-300:
                rho = 1e-300
            z = rho * sq2r
            if z < 1e-300:
                z = 1e-300
            kr = _kr_eval(u0, du, kr_val, kr_der, kr_n, z_hi, nu, z)
            s_coef[i] = sq2r * kr / rho
            if n_points == 1:
                s_logits[i] = 0.0
            else:
                s_logits[i] = logits[i] + _lg_eval(u0, du, lg_val, lg_der, lg_n,
                                                   z_hi, nu, lg_c0, z)
            if s_logits[i] > m:
                m = s_logits[i]
        tot = 0.0
        for i in range(n_points):
            s_logits[i] = exp(s_logits[i] - m)
            tot += s_logits[i]
        for i in range(n_points):
            w = s_logits[i] * s_coef[i] / tot
            for k in range(dim):
                out[k] -= w * (x[k] - points[i * dim + k])

    elif kind == DRIFT_POINTS_OU:
        sqx = 0.0
        for k in range(dim):
            sqx += x[k] * x[k]
        m = -1e308
        for i in range(n_points):
            dot = 0.0
            for k in range(dim):
                dot += x[k] * points[i * dim + k]
            # log-sum-exp over quadrature nodes, plus node-weighted coefficients
            acc = -1e308
            for j in range(n_quad):
                s_quad[j] = (q_logpref[j] - q_csq[j] * (sqx + point_sq[i])
                             + q_cdot[j] * dot)
                if s_quad[j] > acc:
                    acc = s_quad[j]
            tot = 0.0
            ssq = 0.0
            sdot = 0.0
            for j in range(n_quad):
                w = exp(s_quad[j] - acc)
                tot += w
                ssq += w * q_csq[j]
                sdot += w * q_cdot[j]
            lg = acc + log(tot)
            s_logits[i] = logits[i] + lg
            s_coef[i] = ssq / tot   # node-weighted coef_sq
            s_act0[i] = sdot / tot  # node-weighted coef_dot
            if s_logits[i] > m:
                m = s_logits[i]
        if n_points == 1:
            coefx = -2.0 * s_coef[0]
            for k in range(dim):
                out[k] += coefx * x[k] + s_act0[0] * points[k]
        else:
            tot = 0.0
            for i in range(n_points):
                s_logits[i] = exp(s_logits[i] - m)
                tot += s_logits[i]
            for i in range(n_points):
                w = s_logits[i] / tot
                coefx = -2.0 * w * s_coef[i]
                sdot = w * s_act0[i]
                for k in range(dim):
                    out[k] += coefx * x[k] + sdot * points[i * dim + k]

    elif kind == DRIFT_MLP:
        src = s_act0
        dst = s_act1
        for k in range(dim):
            src[k] = x[k]
        off = 0
        for j in range(n_mlp_dims - 1):
            a = <Py_ssize_t> mlp_dims[j]
            b = <Py_ssize_t> mlp_dims[j + 1]
            for i in range(b):
                acc = mlp_w[off + a * b + i]  # bias
                for k in range(a):
                    acc += src[k] * mlp_w[off + k * b + i]
                dst[i] = acc
            off += a * b + b
            if j < n_mlp_dims - 2:
                if mlp_act == 0:
                    for i in range(b):
                        dst[i] = tanh(dst[i])
                else:
                    for i in range(b):
                        zv = dst[i]
                        dst[i] = zv + log1p(exp(-zv)) if zv > 0 else log1p(exp(zv))
            src, dst = dst, src
        for k in range(dim):
            out[k] += src[k]

    if n_offset:
        for k in range(dim):
            out[k] += offset[k]
    for k in range(dim):
        if not isfinite(out[k]):
            return 1
    return 0


cdef inline bint _hit_check(int kind, Py_ssize_t dim, double eps, double radius,
                            const double* center, const double* pts,
                            Py_ssize_t n_pts, const double* x) noexcept nogil:
    cdef Py_ssize_t i, k
    cdef double acc, dv, eps2
    if kind == KILL_BALL:
        acc = 0.0
        for k in range(dim):
            dv = x[k] - center[k]
            acc += dv * dv
        return acc <= eps * eps
    if kind == KILL_SPHERE_EXIT:
        acc = 0.0
        for k in range(dim):
            acc += x[k] * x[k]
        return acc >= radius * radius
    if kind == KILL_SUPPORT:
        eps2 = eps * eps
        for i in range(n_pts):
            acc = 0.0
            for k in range(dim):
                dv = x[k] - pts[i * dim + k]
                acc += dv * dv
                if acc > eps2:
                    break
            if acc <= eps2:
                return True
        return False
    return False


def advance_block(double[:, ::1] states, double[:, :, ::1] noise, double dt,
                  long long k0, n_exp, long long step_cap, dprog, kprog,
                  bint record):
    """Cython twin of `_engine_py.advance_block` (same contract)."""
    cdef Py_ssize_t n = noise.shape[0]
    cdef Py_ssize_t block = noise.shape[1]
    cdef Py_ssize_t dim = noise.shape[2]
    cdef double sq_dt = sqrt(dt)

    status_arr = np.zeros(n, dtype=np.int8)
    kill_arr = np.full(n, -1, dtype=np.int64)
    clip_arr = np.zeros(n, dtype=np.int64)
    rec_arr = np.zeros((n, block, dim)) if record else None

    cdef signed char[::1] status = status_arr
    cdef cnp.int64_t[::1] kill_steps = kill_arr
    cdef cnp.int64_t[::1] clip_counts = clip_arr
    cdef double[:, :, ::1] rec = rec_arr if record else noise[:0]

    cdef bint has_exp = n_exp is not None
    exp_arr = np.ascontiguousarray(n_exp, dtype=np.int64) if has_exp \
        else np.zeros(0, dtype=np.int64)
    cdef cnp.int64_t[::1] n_exp_v = exp_arr

    # unpack drift program
    cdef int dkind = dprog.kind
    cdef double lin_coef = dprog.lin_coef
    cdef double clip_max = dprog.clip_max
    cdef double nu = dprog.nu
    cdef double sq2r = dprog.sq2r
    cdef double u0 = dprog.u0
    cdef double du = dprog.du
    cdef double z_hi = dprog.z_hi
    cdef double lg_c0 = dprog.lg_asym_c0
    cdef double[::1] kr_val = dprog.kr_val
    cdef double[::1] kr_der = dprog.kr_der
    cdef double[::1] lg_val = dprog.lg_val
    cdef double[::1] lg_der = dprog.lg_der
    cdef double[::1] ri_val = dprog.ri_val
    cdef double[::1] ri_der = dprog.ri_der
    pts_arr = np.ascontiguousarray(dprog.points, dtype=np.float64)
    cdef double[:, ::1] points = pts_arr if pts_arr.size else np.zeros((0, dim))
    cdef double[::1] logits = dprog.logits
    cdef double[::1] point_sq = dprog.point_sq
    cdef double[::1] q_logpref = dprog.q_logpref
    cdef double[::1] q_csq = dprog.q_csq
    cdef double[::1] q_cdot = dprog.q_cdot
    cdef double[::1] mlp_w = dprog.mlp_weights
    cdef cnp.int64_t[::1] mlp_dims = dprog.mlp_dims
    cdef int mlp_act = dprog.mlp_activation
    cdef double[::1] offset = dprog.offset
    cdef Py_ssize_t n_points = points.shape[0]
    cdef Py_ssize_t n_quad = q_csq.shape[0]
    cdef Py_ssize_t n_mlp_dims = mlp_dims.shape[0]

    # unpack kill program
    cdef int kkind = kprog.kind
    cdef double keps = kprog.eps
    cdef double kradius = kprog.radius
    kc_arr = np.ascontiguousarray(kprog.center, dtype=np.float64)
    cdef double[::1] kcenter = kc_arr if kc_arr.size else np.zeros(dim)
    kp_arr = np.ascontiguousarray(kprog.points, dtype=np.float64)
    cdef double[:, ::1] kpoints = kp_arr if kp_arr.size else np.zeros((0, dim))
    cdef Py_ssize_t n_kpoints = kpoints.shape[0]

    # scratch
    cdef Py_ssize_t maxw = dim
    cdef Py_ssize_t j
    for j in range(n_mlp_dims):
        if mlp_dims[j] > maxw:
            maxw = <Py_ssize_t> mlp_dims[j]
    if n_points > maxw:
        maxw = n_points
    s_logits_arr = np.zeros(max(n_points, 1))
    s_coef_arr = np.zeros(max(n_points, 1))
    s_quad_arr = np.zeros(max(n_quad, n_points, 1))
    s_act0_arr = np.zeros(max(maxw, 1))
    s_act1_arr = np.zeros(max(maxw, 1))
    drift_arr = np.zeros(dim)
    cdef double[::1] s_logits = s_logits_arr
    cdef double[::1] s_coef = s_coef_arr
    cdef double[::1] s_quad = s_quad_arr
    cdef double[::1] s_act0 = s_act0_arr
    cdef double[::1] s_act1 = s_act1_arr
    cdef double[::1] dr = drift_arr

    cdef Py_ssize_t p, b, k
    cdef long long kg, ne
    cdef double nrm2, fac
    cdef int bad = 0

    with nogil:
        for p in range(n):
            ne = n_exp_v[p] if has_exp else -1
            for b in range(block):
                kg = k0 + b
                if _hit_check(kkind, dim, keps, kradius, &kcenter[0],
                              &kpoints[0, 0] if n_kpoints else NULL,
                              n_kpoints, &states[p, 0]):
                    status[p] = STATUS_HIT
                    kill_steps[p] = kg
                    break
                if ne >= 0 and kg >= ne:
                    status[p] = STATUS_RATE
                    kill_steps[p] = kg
                    break
                if kg >= step_cap:
                    status[p] = STATUS_CAP
                    kill_steps[p] = kg
                    break
                if _drift_eval(dkind, dim, lin_coef, nu, sq2r,
                               u0, du, z_hi, lg_c0,
                               &kr_val[0] if kr_val.shape[0] else NULL,
                               &kr_der[0] if kr_der.shape[0] else NULL,
                               kr_val.shape[0],
                               &lg_val[0] if lg_val.shape[0] else NULL,
                               &lg_der[0] if lg_der.shape[0] else NULL,
                               lg_val.shape[0],
                               &ri_val[0] if ri_val.shape[0] else NULL,
                               &ri_der[0] if ri_der.shape[0] else NULL,
                               ri_val.shape[0],
                               &points[0, 0] if n_points else NULL,
                               &logits[0] if logits.shape[0] else NULL,
                               &point_sq[0] if point_sq.shape[0] else NULL,
                               n_points,
                               &q_logpref[0] if n_quad else NULL,
                               &q_csq[0] if n_quad else NULL,
                               &q_cdot[0] if n_quad else NULL, n_quad,
                               &mlp_w[0] if mlp_w.shape[0] else NULL,
                               &mlp_dims[0] if n_mlp_dims else NULL,
                               n_mlp_dims, mlp_act,
                               &offset[0] if offset.shape[0] else NULL,
                               offset.shape[0],
                               &states[p, 0], &dr[0],
                               &s_logits[0], &s_coef[0], &s_quad[0],
                               &s_act0[0], &s_act1[0]):
                    bad = 1
                    break
                nrm2 = 0.0
                for k in range(dim):
                    nrm2 += dr[k] * dr[k]
                if nrm2 > clip_max * clip_max:
                    fac = clip_max / sqrt(nrm2)
                    for k in range(dim):
                        dr[k] *= fac
                    clip_counts[p] += 1
                for k in range(dim):
                    states[p, k] += dr[k] * dt + sq_dt * noise[p, b, k]
                if record:
                    for k in range(dim):
                        rec[p, b, k] = states[p, k]
            if bad:
                break

    if bad:
        from .errors import DriftOverflowError
        raise DriftOverflowError("non-finite drift during simulation")
    return status_arr, kill_arr, clip_arr, rec_arr
