"""Vectorized closed-loop engine: all trajectories advance in lockstep.

Encoder and decoder each run their own belief filter.  By protocol both
filters consume the same substream of noise and ancestor draws, so their
particle clouds must stay bitwise identical; the engine asserts this every
step, which catches any desync between the symbol stream the encoder
produced and the one the decoder consumed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ImpossibleSymbol
from .rng import EVAL, substream


@dataclass
class RolloutResult:
    horizon: int
    n_traj: int
    cost_sum: np.ndarray                 # (T,) sums over trajectories
    cost_sq_sum: np.ndarray              # (T,)
    final_avg_per_traj: np.ndarray       # (n,) time-averaged cost
    disc_per_traj: np.ndarray | None = None
    grid: np.ndarray | None = None
    grid_avgs: np.ndarray | None = None  # (n, len(grid)) running averages
    shadow_cost_sum: np.ndarray | None = None
    shadow_disc_per_traj: np.ndarray | None = None
    coupling_max_ratio: float | None = None
    coupling_excess: float | None = None
    symbol_counts: np.ndarray | None = None
    symbol_prob_sums: np.ndarray | None = None
    symbol_steps: int = 0


def _assign_reps_1d(parts_sorted, msq, reps_sorted, reps_msq):
    # exact W2^2 between equal-weight same-size 1-d clouds via sorted matching
    n_particles = parts_sorted.shape[1]
    cross = parts_sorted @ reps_sorted.T / n_particles
    d2 = msq[:, None] + reps_msq[None, :] - 2.0 * cross
    return np.argmin(d2, axis=1)


def _w2sq_assignment(a, b):
    from scipy.optimize import linear_sum_assignment
    cost = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=2)
    r, c = linear_sum_assignment(cost)
    return float(cost[r, c].mean())


def _prep_reps_nd(reps):
    """Sorted/flattened representative arrays for pruned exact assignment."""
    stack = []
    for r in reps:
        order = np.argsort(r.particles[:, 0], kind="stable")
        stack.append(r.particles[order])
    stack = np.stack(stack)
    k, n, d = stack.shape
    return {
        "particles": stack,
        "flat": stack.reshape(k, n * d),
        "m2": np.mean(np.sum(stack ** 2, axis=2), axis=1),
        "means": stack.mean(axis=1),
    }


def _assign_reps_nd(parts, prep):
    """Exact nearest representative in W2, vectorized bound pruning.

    The identity matching of coordinate-0-sorted clouds upper-bounds W2^2;
    mean displacement and moment differences lower-bound it.  Exact
    assignment distances are only solved for candidates whose lower bound
    beats the running best.
    """
    n, n_particles, d = parts.shape
    order = np.argsort(parts[:, :, 0], axis=1, kind="stable")
    ps = np.take_along_axis(parts, order[:, :, None], axis=1)
    flat = ps.reshape(n, n_particles * d)
    m2 = np.mean(np.sum(ps ** 2, axis=2), axis=1)
    means = ps.mean(axis=1)
    ub2 = (m2[:, None] + prep["m2"][None, :]
           - 2.0 * flat @ prep["flat"].T / n_particles)
    md = means[:, None, :] - prep["means"][None, :, :]
    lb2 = np.maximum(
        np.sum(md ** 2, axis=2),
        (np.sqrt(m2)[:, None] - np.sqrt(prep["m2"])[None, :]) ** 2)
    rep_parts = prep["particles"]
    idx = np.empty(n, dtype=np.int64)
    for i in range(n):
        k0 = int(np.argmin(ub2[i]))
        best_k = k0
        best = _w2sq_assignment(ps[i], rep_parts[k0])
        for k in np.argsort(lb2[i], kind="stable"):
            if lb2[i, k] >= best:
                break
            if k == k0:
                continue
            val = _w2sq_assignment(ps[i], rep_parts[k])
            if val < best or (val == best and k < best_k):
                best, best_k = val, int(k)
        idx[i] = best_k
    return idx


def _filter_side(parts, members, symbols, w_filt, u, A):
    """Resample ancestors inside the received cell, push through dynamics."""
    mask = members == symbols[:, None]
    m = mask.sum(axis=1)
    if np.any(m == 0):
        bad = int(np.flatnonzero(m == 0)[0])
        raise ImpossibleSymbol(
            f"trajectory {bad}: no belief particles in received cell "
            f"{int(symbols[bad])}; increase n_particles")
    order = np.argsort(~mask, axis=1, kind="stable")
    k = np.minimum((u * m[:, None]).astype(np.int64), (m - 1)[:, None])
    anc = np.take_along_axis(order, k, axis=1)
    sel = np.take_along_axis(parts, anc[:, :, None], axis=1)
    return sel @ A.T + w_filt


def run_closed_loop(model, policy, init, T, n_traj, seed, beta=None,
                    grid=None, shadow_x0=None, collect_symbol_stats=False):
    """Run the policy's closed loop for all trajectories at once.

    shadow_x0 adds a second source copy driven by the same state noise
    (the coupling construction); its distortion against the main loop's
    reproductions is accumulated separately.
    """
    d = model.dim
    n_particles = policy.n_particles
    actions = policy.actions
    action_map = np.asarray(policy.action_map, dtype=np.int64)
    reps = policy.representatives
    chol_t = model.noise._chol.T

    rng_init = substream(seed, EVAL, 0)
    rng_state = substream(seed, EVAL, 1)
    rng_filter = substream(seed, EVAL, 2)
    rng_anc = substream(seed, EVAL, 3)

    x = init.sample(rng_init, n_traj)
    belief0 = init.as_belief(n_particles, rng_init)
    parts_enc = np.tile(belief0.particles, (n_traj, 1, 1))
    parts_dec = parts_enc.copy()

    one_d = d == 1
    if one_d:
        reps_sorted = np.stack([np.sort(r.particles[:, 0]) for r in reps])
        reps_msq = np.mean(reps_sorted ** 2, axis=1)
    else:
        prep_nd = _prep_reps_nd(reps)

    if shadow_x0 is not None:
        x_sh = np.tile(np.atleast_1d(np.asarray(shadow_x0, float)), (n_traj, 1)) \
            if np.asarray(shadow_x0).ndim <= 1 else np.array(shadow_x0, float)
        delta0_sq = np.sum((x_sh - x) ** 2, axis=1)
        coupling_max = 0.0
        coupling_excess = 0.0
    else:
        x_sh = None

    cost_sum = np.zeros(T)
    cost_sq_sum = np.zeros(T)
    cum_cost = np.zeros(n_traj)
    disc = np.zeros(n_traj) if beta is not None else None
    sh_cost_sum = np.zeros(T) if x_sh is not None else None
    sh_disc = np.zeros(n_traj) if (x_sh is not None and beta is not None) else None
    if grid is not None:
        grid = np.asarray(sorted(set(int(g) for g in grid)), dtype=np.int64)
        if len(grid) == 0 or grid[0] < 1 or grid[-1] > T:
            raise ValueError("grid entries must lie in 1..T")
        grid_avgs = np.zeros((n_traj, len(grid)))
        grid_pos = {int(g): i for i, g in enumerate(grid)}
    m_max = max(a.M for a in actions)
    if collect_symbol_stats:
        sym_counts = np.zeros(m_max)
        sym_prob_sums = np.zeros(m_max)

    bt = 1.0
    for t in range(T):
        if not np.array_equal(parts_enc, parts_dec):
            raise ImpossibleSymbol(f"filter desync at t={t}")
        if one_d:
            s = np.sort(parts_enc[:, :, 0], axis=1)
            msq = np.mean(s ** 2, axis=1)
            rep_idx = _assign_reps_1d(s, msq, reps_sorted, reps_msq)
        else:
            rep_idx = _assign_reps_nd(parts_enc, prep_nd)
        act_idx = action_map[rep_idx]

        symbols = np.empty(n_traj, dtype=np.int64)
        members_enc = np.empty((n_traj, n_particles), dtype=np.int64)
        members_dec = np.empty((n_traj, n_particles), dtype=np.int64)
        u_t = np.empty((n_traj, d))
        for a in np.unique(act_idx):
            g = np.flatnonzero(act_idx == a)
            q = actions[a]
            symbols[g] = q.encode_batch(x[g])
            flat_e = parts_enc[g].reshape(-1, d)
            members_enc[g] = q.encode_batch(flat_e).reshape(len(g), n_particles)
            flat_d = parts_dec[g].reshape(-1, d)
            mem_d = q.encode_batch(flat_d).reshape(len(g), n_particles)
            members_dec[g] = mem_d
            onehot = mem_d[:, :, None] == np.arange(q.M)[None, None, :]
            wsum = onehot.sum(axis=1)
            # means accumulate relative to the first particle so identical
            # clouds (point-mass beliefs) decode exactly
            ref = parts_dec[g][:, :1, :]
            vsum = np.einsum("gkm,gkd->gmd", onehot, parts_dec[g] - ref)
            cb = np.broadcast_to(q.sites, (len(g), q.M, d)).copy()
            occ = wsum > 0
            cb[occ] = (np.broadcast_to(ref, (len(g), q.M, d))[occ]
                       + vsum[occ] / wsum[occ, None])
            u_t[g] = cb[np.arange(len(g)), symbols[g]]
            if collect_symbol_stats:
                we = (members_enc[g][:, :, None]
                      == np.arange(q.M)[None, None, :]).sum(axis=1)
                sym_prob_sums[:q.M] += we.sum(axis=0) / n_particles
                sym_counts[:q.M] += np.bincount(symbols[g], minlength=q.M)

        cost = np.sum((x - u_t) ** 2, axis=1)
        cost_sum[t] = cost.sum()
        cost_sq_sum[t] = (cost ** 2).sum()
        cum_cost += cost
        if disc is not None:
            disc += bt * cost
        if x_sh is not None:
            sh = np.sum((x_sh - u_t) ** 2, axis=1)
            sh_cost_sum[t] = sh.sum()
            if sh_disc is not None:
                sh_disc += bt * sh
            gap_sq = np.sum((x_sh - x) ** 2, axis=1)
            bound = model.alpha ** t * delta0_sq
            pos = bound > 0
            if np.any(pos):
                coupling_excess = max(coupling_excess,
                                      float(np.max(gap_sq[pos] - bound[pos])))
            # the ratio is only meaningful while the bound sits above the
            # float rounding floor of the two state recursions
            meas = bound > 1e-16 * delta0_sq
            if np.any(meas):
                coupling_max = max(coupling_max,
                                   float(np.max(gap_sq[meas] / bound[meas])))
        if grid is not None and (t + 1) in grid_pos:
            grid_avgs[:, grid_pos[t + 1]] = cum_cost / (t + 1)

        w_filt = rng_filter.standard_normal((n_traj, n_particles, d)) @ chol_t
        u_rand = rng_anc.random((n_traj, n_particles))
        parts_enc = _filter_side(parts_enc, members_enc, symbols, w_filt,
                                 u_rand, model.A)
        parts_dec = _filter_side(parts_dec, members_dec, symbols, w_filt,
                                 u_rand, model.A)

        w_x = rng_state.standard_normal((n_traj, d)) @ chol_t
        x = x @ model.A.T + w_x
        if x_sh is not None:
            x_sh = x_sh @ model.A.T + w_x
        bt = bt * beta if beta is not None else bt

    return RolloutResult(
        horizon=T,
        n_traj=n_traj,
        cost_sum=cost_sum,
        cost_sq_sum=cost_sq_sum,
        final_avg_per_traj=cum_cost / T,
        disc_per_traj=disc,
        grid=grid if grid is not None else None,
        grid_avgs=grid_avgs if grid is not None else None,
        shadow_cost_sum=sh_cost_sum,
        shadow_disc_per_traj=sh_disc,
        coupling_max_ratio=coupling_max if x_sh is not None else None,
        coupling_excess=coupling_excess if x_sh is not None else None,
        symbol_counts=sym_counts if collect_symbol_stats else None,
        symbol_prob_sums=sym_prob_sums if collect_symbol_stats else None,
        symbol_steps=T * n_traj if collect_symbol_stats else 0,
    )
