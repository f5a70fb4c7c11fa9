"""Pure-NumPy stepping engine (fallback when the compiled core is absent).

Implements `advance_block`: advance a batch of paths by at most one noise
block, applying kill checks before each step.  The compiled Cython engine
implements the same contract; both are driven by the orchestrator in `sde`.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import DriftOverflowError
from .tables import (
    DRIFT_FREE,
    DRIFT_MLP,
    DRIFT_POINTS_BM,
    DRIFT_POINTS_OU,
    DRIFT_SPHERE,
    KILL_BALL,
    KILL_EXP,
    KILL_NONE,
    KILL_SPHERE_EXIT,
    KILL_SUPPORT,
    DriftProgram,
    KillProgram,
    hermite_eval,
)

STATUS_RUNNING = 0
STATUS_HIT = 1
STATUS_RATE = 2
STATUS_CAP = 3

ENGINE_NAME = "python"


def _mlp_views(prog: DriftProgram):
    views = getattr(prog, "_mlp_view_cache", None)
    if views is None:
        dims = prog.mlp_dims
        views = []
        off = 0
        for a, b in zip(dims[:-1], dims[1:]):
            w = prog.mlp_weights[off:off + a * b].reshape(a, b)
            off += a * b
            bias = prog.mlp_weights[off:off + b]
            off += b
            views.append((w, bias))
        prog._mlp_view_cache = views
    return views


def _kr_lookup(prog, z):
    out = hermite_eval(prog.u0, prog.du, prog.kr_val, prog.kr_der, np.minimum(z, prog.z_hi))
    big = z > prog.z_hi
    if big.any():
        out = np.where(big, 1.0 + (2.0 * prog.nu + 1.0) / (2.0 * z), out)
    return out


def _lg_lookup(prog, z):
    out = hermite_eval(prog.u0, prog.du, prog.lg_val, prog.lg_der, np.minimum(z, prog.z_hi))
    big = z > prog.z_hi
    if big.any():
        asym = (prog.lg_asym_c0 - prog.nu * np.log(z)
                + 0.5 * np.log(math.pi / (2.0 * z)) - z
                + np.log1p((4.0 * prog.nu * prog.nu - 1.0) / (8.0 * z)))
        out = np.where(big, asym, out)
    return out


def _ri_lookup(prog, z):
    out = hermite_eval(prog.u0, prog.du, prog.ri_val, prog.ri_der, np.minimum(z, prog.z_hi))
    big = z > prog.z_hi
    if big.any():
        out = np.where(big, np.maximum(1.0 - (2.0 * prog.nu + 1.0) / (2.0 * z), 0.0), out)
    return out


def drift_batch(prog: DriftProgram, x: np.ndarray) -> np.ndarray:
    """Engine drift at a batch of states x (M, d)."""
    if prog.kind == DRIFT_FREE:
        return prog.lin_coef * x

    if prog.kind == DRIFT_SPHERE:
        radii = np.sqrt((x * x).sum(axis=1))
        z = radii * prog.sq2r
        ri = _ri_lookup(prog, np.maximum(z, 1e-300))
        with np.errstate(invalid="ignore"):
            scale = np.where(radii > 0.0, prog.sq2r * ri / np.where(radii > 0, radii, 1.0), 0.0)
        return scale[:, None] * x

    if prog.kind == DRIFT_POINTS_BM:
        diff = x[:, None, :] - prog.points[None, :, :]     # (M, n, d)
        rho = np.sqrt((diff * diff).sum(axis=2))
        z = np.maximum(rho * prog.sq2r, 1e-300)
        if prog.points.shape[0] == 1:
            w = np.ones_like(rho)
        else:
            logits = prog.logits[None, :] + _lg_lookup(prog, z)
            logits -= logits.max(axis=1, keepdims=True)
            w = np.exp(logits)
            w /= w.sum(axis=1, keepdims=True)
        coef = prog.sq2r * _kr_lookup(prog, z) / np.maximum(rho, 1e-300)
        return -np.einsum("mn,mnd->md", w * coef, diff)

    if prog.kind == DRIFT_POINTS_OU:
        sqx = (x * x).sum(axis=1)                            # (M,)
        dots = x @ prog.points.T                             # (M, n)
        expo = (prog.q_logpref[None, None, :]
                - np.multiply.outer(sqx[:, None] + prog.point_sq[None, :], prog.q_csq)
                + np.multiply.outer(dots, prog.q_cdot))      # (M, n, J)
        m = expo.max(axis=2, keepdims=True)
        wj = np.exp(expo - m)
        tot = wj.sum(axis=2)
        lg = m[:, :, 0] + np.log(tot)                        # (M, n) log G
        wj /= tot[:, :, None]
        s_sq = wj @ prog.q_csq                               # (M, n)
        s_dot = wj @ prog.q_cdot                             # (M, n)
        if prog.points.shape[0] == 1:
            w = np.ones_like(lg)
        else:
            logits = prog.logits[None, :] + lg
            logits -= logits.max(axis=1, keepdims=True)
            w = np.exp(logits)
            w /= w.sum(axis=1, keepdims=True)
        coef_x = -2.0 * (w * s_sq).sum(axis=1)               # (M,)
        return (prog.lin_coef + coef_x)[:, None] * x + (w * s_dot) @ prog.points

    if prog.kind == DRIFT_MLP:
        a = x
        views = _mlp_views(prog)
        for li, (w, b) in enumerate(views):
            a = a @ w + b
            if li < len(views) - 1:
                a = np.tanh(a) if prog.mlp_activation == 0 else np.logaddexp(a, 0.0)
        return prog.lin_coef * x + a

    raise AssertionError(f"unknown drift kind {prog.kind}")


def _hit_mask(kprog: KillProgram, x: np.ndarray) -> np.ndarray:
    if kprog.kind in (KILL_NONE, KILL_EXP):
        return np.zeros(x.shape[0], dtype=bool)
    if kprog.kind == KILL_BALL:
        diff = x - kprog.center[None, :]
        return (diff * diff).sum(axis=1) <= kprog.eps * kprog.eps
    if kprog.kind == KILL_SPHERE_EXIT:
        return (x * x).sum(axis=1) >= kprog.radius * kprog.radius
    if kprog.kind == KILL_SUPPORT:
        d2 = ((x * x).sum(axis=1)[:, None]
              + (kprog.points * kprog.points).sum(axis=1)[None, :]
              - 2.0 * (x @ kprog.points.T))
        return d2.min(axis=1) <= kprog.eps * kprog.eps
    raise AssertionError(f"unknown kill kind {kprog.kind}")


def advance_block(states, noise, dt, k0, n_exp, step_cap, dprog, kprog, record):
    """Advance a compacted batch of running paths by at most one noise block.

    states   (N, d)  current states, updated in place
    noise    (N, B, d) pre-drawn standard normals
    k0       global index of the current state at block entry (same for all)
    n_exp    (N,) pre-drawn rate-kill step counts, or None
    Returns (status, kill_steps, clip_counts, rec) where rec[i, b] holds the
    state with global index k0 + b + 1 for every executed step.
    """
    n, block, dim = noise.shape
    sq_dt = math.sqrt(dt)
    status = np.zeros(n, dtype=np.int8)
    kill_steps = np.full(n, -1, dtype=np.int64)
    clip_counts = np.zeros(n, dtype=np.int64)
    rec = np.zeros((n, block, dim)) if record else None
    running = np.ones(n, dtype=bool)
    clip2 = dprog.clip_max * dprog.clip_max

    for b in range(block):
        idx = np.flatnonzero(running)
        if idx.size == 0:
            break
        k = k0 + b
        hit = _hit_mask(kprog, states[idx])
        newly = idx[hit]
        if newly.size:
            status[newly] = STATUS_HIT
            kill_steps[newly] = k
            running[newly] = False
            idx = idx[~hit]
        if n_exp is not None and idx.size:
            ratek = n_exp[idx] <= k
            newly = idx[ratek]
            if newly.size:
                status[newly] = STATUS_RATE
                kill_steps[newly] = k
                running[newly] = False
                idx = idx[~ratek]
        if idx.size and k >= step_cap:
            status[idx] = STATUS_CAP
            kill_steps[idx] = k
            running[idx] = False
            idx = idx[:0]
        if idx.size == 0:
            continue

        dr = drift_batch(dprog, states[idx])
        if dprog.offset.size:
            dr = dr + dprog.offset[None, :]
        if not np.isfinite(dr).all():
            raise DriftOverflowError("non-finite drift during simulation")
        nrm2 = (dr * dr).sum(axis=1)
        over = nrm2 > clip2
        if over.any():
            dr[over] *= (dprog.clip_max / np.sqrt(nrm2[over]))[:, None]
            clip_counts[idx[over]] += 1
        states[idx] += dr * dt + sq_dt * noise[idx, b]
        if record:
            rec[idx, b] = states[idx]

    return status, kill_steps, clip_counts, rec
