"""Euler-Maruyama simulation of the rescaled two-disk dynamics.

The rescaled equation has a fast rotation (1/delta) skew grad H plus the
slow drift beta and noise sqrt(kappa) sigma.  An explicit step at any
affordable dt spirals off Hamiltonian orbits (the energy error per unit
time is (dt/delta^2) * |grad H|^2 * |Hess H| / 2, which beats the slow
drift unless dt is microscopic), so each step splits: midpoint rotation
substeps reprojected onto the starting level set, then one
Euler-Maruyama substep for drift and noise.  The projection keeps the
fast motion exactly level-preserving; phase error is irrelevant because
the slow dynamics only senses orbit averages.

Replica noise comes from per-(seed, block) Philox streams indexed by the
original replica id, so results are independent of batching and alive
compression.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .twodisk import TwoDiskSystem, level_quantities


@dataclass(frozen=True)
class TrajectoryOutcome:
    cause: str  # "hit" | "t_max" | "escape"
    label: int | None
    time: float
    steps: int
    final: tuple
    path: tuple | None = None


@dataclass(frozen=True)
class HitDistribution:
    """Empirical first-hit frequencies over target equilibria.

    replica_outcomes (kept on request) holds one (label, time) pair per
    replica; label 0 means timed out, -1 escaped.
    """

    targets: tuple
    counts: dict
    frequencies: dict
    halfwidths: dict
    replicas: int
    escaped: int
    timed_out: int
    mean_time: float
    replica_outcomes: tuple | None = None


def _wilson(k: int, n: int, z: float = 1.96):
    if n == 0:
        return 0.0, 0.0
    p = k / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return center, half


def _rotate_project(system: TwoDiskSystem, x, y, h0, delta, h, n_sub):
    """Midpoint rotation substeps, each reprojected onto {H = h0}."""
    inv_d = 1.0 / delta
    for _ in range(n_sub):
        gx, gy = system.grad_h(x, y)
        vx, vy = -gy * inv_d, gx * inv_d
        r = np.sqrt(x * x + y * y)
        over = np.maximum(r - system.r_max, 0.0)
        tame = 1.0 / (1.0 + over * np.sqrt(vx * vx + vy * vy))
        mx = x + 0.5 * h * vx * tame
        my = y + 0.5 * h * vy * tame
        gmx, gmy = system.grad_h(mx, my)
        x = x + h * (-gmy) * inv_d * tame
        y = y + h * gmx * inv_d * tame
        for _ in range(2):
            hx, hy = system.grad_h(x, y)
            g2 = hx * hx + hy * hy
            err = system.hamiltonian(x, y) - h0
            corr = np.where(g2 > 1e-12, err / np.maximum(g2, 1e-12), 0.0)
            x = x - corr * hx
            y = y - corr * hy
    return x, y


def _slow_step(system: TwoDiskSystem, x, y, kappa, dt, xi):
    bx, by = system.beta(x, y)
    r = np.sqrt(x * x + y * y)
    over = np.maximum(r - system.r_max, 0.0)
    tame = 1.0 / (1.0 + over * np.sqrt(bx * bx + by * by))
    amp = np.sqrt(kappa * dt * system.diffusion_scalar(x))
    x = x + dt * bx * tame + amp * xi[..., 0]
    y = y + dt * by * tame + amp * xi[..., 1]
    return x, y


def _noise_block(seed: int, block_index: int, n_replicas: int, block_len: int):
    rng = np.random.default_rng(np.random.SeedSequence((seed, block_index)))
    return rng.standard_normal((n_replicas, block_len, 2))


def simulate_sde(
    system: TwoDiskSystem,
    x0,
    delta: float,
    kappa: float,
    dt: float | None = None,
    t_max: float = 1000.0,
    stop=None,
    seed: int = 0,
    rho: float = 0.2,
    targets=(1, 2, 3),
    n_sub: int = 6,
    path_every: int = 0,
) -> TrajectoryOutcome:
    """One trajectory of the rescaled dynamics; reproducible per seed.

    stop(x, y) may return a label to terminate; by default the trajectory
    stops on entering a rho-ball around a target equilibrium.  path_every
    > 0 records (t, x, y) at that step stride into the outcome.
    """
    if dt is None:
        dt = delta / 20.0
    if dt > delta / 20.0 + 1e-15:
        raise ValueError("dt must not exceed delta/20 (fast rotation)")
    points = {i: system.critical_points[i] for i in targets}
    if stop is None:
        def stop(px, py):
            for i, (cx, cy) in points.items():
                if (px - cx) ** 2 + (py - cy) ** 2 <= rho * rho:
                    return i
            return None

    x, y = float(x0[0]), float(x0[1])
    n_steps = int(math.ceil(t_max / dt))
    escape2 = (system.r_max + 1.0) ** 2
    path = []
    block_len = 4096
    noise = None
    for k in range(n_steps):
        if k % block_len == 0:
            noise = _noise_block(seed, k // block_len, 1, block_len)
        h0 = system.hamiltonian(x, y)
        x, y = _rotate_project(system, np.float64(x), np.float64(y), h0,
                               delta, dt / n_sub, n_sub)
        if kappa > 0.0:
            xi = noise[0, k % block_len]
        else:
            xi = np.zeros(2)
        x, y = _slow_step(system, np.float64(x), np.float64(y), kappa, dt, xi)
        x, y = float(x), float(y)
        t = (k + 1) * dt
        if path_every and (k % path_every == 0):
            path.append((t, x, y))
        hit = stop(x, y)
        if hit is not None:
            return TrajectoryOutcome(
                "hit", hit, t, k + 1, (x, y), tuple(path) if path_every else None
            )
        if x * x + y * y > escape2:
            return TrajectoryOutcome(
                "escape", None, t, k + 1, (x, y), tuple(path) if path_every else None
            )
    return TrajectoryOutcome(
        "t_max", None, n_steps * dt, n_steps, (x, y),
        tuple(path) if path_every else None,
    )


def hit_distribution(
    system: TwoDiskSystem,
    start,
    delta: float,
    kappa: float,
    replicas: int,
    seed: int,
    rho: float = 0.2,
    dt: float | None = None,
    t_max: float = 1000.0,
    targets=None,
    n_sub: int = 6,
    block_len: int = 256,
    keep_replicas: bool = False,
) -> HitDistribution:
    """First-hit frequencies of rho-balls around equilibria, vectorised.

    Default targets: all three equilibria for a start in the exterior
    lobe, the other two for a start inside some lobe (the two-target
    escape experiment).
    """
    if dt is None:
        dt = delta / 20.0
    if dt > delta / 20.0 + 1e-15:
        raise ValueError("dt must not exceed delta/20 (fast rotation)")
    if targets is None:
        from .twodisk import OnSeparatrix

        try:
            lobe, _ = system.project_to_graph(*start)
        except OnSeparatrix:
            lobe = 4
        targets = (1, 2, 3) if lobe == 4 else tuple(sorted({1, 2, 3} - {lobe}))
    targets = tuple(targets)
    pts = np.array([system.critical_points[i] for i in targets])

    n_steps = int(math.ceil(t_max / dt))
    escape2 = (system.r_max + 1.0) ** 2
    rho2 = rho * rho

    labels = np.zeros(replicas, dtype=np.int64)  # 0 pending, -1 escape
    times = np.full(replicas, np.nan)
    alive_ids = np.arange(replicas)
    X = np.full(replicas, float(start[0]))
    Y = np.full(replicas, float(start[1]))

    noise = None
    for k in range(n_steps):
        if alive_ids.size == 0:
            break
        if k % block_len == 0:
            noise = _noise_block(seed, k // block_len, replicas, block_len)
        h0 = system.hamiltonian(X, Y)
        X, Y = _rotate_project(system, X, Y, h0, delta, dt / (n_sub), n_sub)
        xi = noise[alive_ids, k % block_len, :]
        X, Y = _slow_step(system, X, Y, kappa, dt, xi)
        t = (k + 1) * dt
        d2 = (X[:, None] - pts[None, :, 0]) ** 2 + (Y[:, None] - pts[None, :, 1]) ** 2
        hit_which = np.argmin(d2, axis=1)
        hit_mask = d2[np.arange(X.size), hit_which] <= rho2
        esc_mask = (X * X + Y * Y > escape2) & ~hit_mask
        done = hit_mask | esc_mask
        if np.any(done):
            hit_ids = alive_ids[hit_mask]
            labels[hit_ids] = np.array(targets)[hit_which[hit_mask]]
            labels[alive_ids[esc_mask]] = -1
            times[alive_ids[done]] = t
            keep = ~done
            alive_ids = alive_ids[keep]
            X = X[keep]
            Y = Y[keep]
    hit_counts = {i: int(np.sum(labels == i)) for i in targets}
    escaped = int(np.sum(labels == -1))
    timed_out = int(np.sum(labels == 0))
    decided = sum(hit_counts.values())
    freqs = {}
    halves = {}
    for i in targets:
        p, half = _wilson(hit_counts[i], max(decided, 1))
        freqs[i] = hit_counts[i] / max(decided, 1)
        halves[i] = half
    mean_time = float(np.nanmean(times)) if decided else math.nan
    outcomes = None
    if keep_replicas:
        outcomes = tuple(
            (int(l), None if math.isnan(t) else float(t))
            for l, t in zip(labels, times)
        )
    return HitDistribution(
        targets=targets,
        counts=hit_counts,
        frequencies=freqs,
        halfwidths=halves,
        replicas=replicas,
        escaped=escaped,
        timed_out=timed_out,
        mean_time=mean_time,
        replica_outcomes=outcomes,
    )


# -- one-dimensional edge diffusion (escape-cost cross-check) ---------------

@njit(cache=True, parallel=True)
def _edge_kernel(z0, z_exit, z_top, grid_lo, grid_dx, beta_tab, a_tab,
                 kappa, dt, max_steps, seeds, out_times):
    n = beta_tab.shape[0]
    for r in prange(seeds.shape[0]):
        np.random.seed(seeds[r])
        z = z0
        t = 0.0
        for _ in range(max_steps):
            pos = (z - grid_lo) / grid_dx
            idx = int(pos)
            if idx < 0:
                idx = 0
            if idx > n - 2:
                idx = n - 2
            w = pos - idx
            if w < 0.0:
                w = 0.0
            if w > 1.0:
                w = 1.0
            b = beta_tab[idx] * (1.0 - w) + beta_tab[idx + 1] * w
            a = a_tab[idx] * (1.0 - w) + a_tab[idx + 1] * w
            z = z + b * dt + math.sqrt(kappa * a * dt) * np.random.normal()
            if z > z_top:
                z = 2.0 * z_top - z
            t += dt
            if z <= z_exit:
                break
        out_times[r] = t


def edge_tables(system: TwoDiskSystem, lobe: int, grid_points: int = 1024):
    """Averaged drift and diffusion of one lobe edge, tabulated in the
    edge coordinate u = |z| (0 at the separatrix, depth at the extremum)."""
    if lobe not in (1, 2, 3):
        raise ValueError("edge diffusion defined for lobes 1-3")
    depth = abs(system.lobe_extremum(lobe))
    u_grid = np.linspace(1e-4 * depth, depth * (1.0 - 1e-4), grid_points)
    beta_tab = np.empty(grid_points)
    a_tab = np.empty(grid_points)
    for i, u in enumerate(u_grid):
        z = -u if lobe in (1, 3) else u
        lq = level_quantities(system, lobe, z, rtol=1e-8)
        beta_tab[i] = lq.beta_avg
        a_tab[i] = lq.a_avg
    return u_grid, beta_tab, a_tab


def edge_exit_time_exact(u_grid, beta_tab, a_tab, kappa, start_frac=0.9,
                         exit_frac=0.05):
    """Mean escape time of the edge diffusion, by the two-sided quadrature.

    dz = b dt + sqrt(kappa a) dW with absorption near the separatrix and
    reflection at the start: E[tau] = int_exit^start exp(-W(y)/kappa)
    [int_y^start (2/(kappa a)) exp(W(t)/kappa) dt] dy with W' = 2b/a.
    Reflecting at the start keeps the probed range away from the lobe
    extremum, where the averaged diffusion degenerates (the averaged Ito
    correction, irrelevant in the kappa -> 0 limit, is not modelled).
    Exponentials are handled in log space relative to their maximum.
    """
    depth = u_grid[-1]
    u0 = start_frac * depth
    u_exit = exit_frac * depth
    mask = (u_grid >= u_exit) & (u_grid <= u0)
    u = u_grid[mask]
    b = beta_tab[mask]
    a = a_tab[mask]
    dW = 2.0 * b / a
    W = np.concatenate(([0.0], np.cumsum(0.5 * (dW[1:] + dW[:-1]) * np.diff(u))))
    phi = W / kappa
    shift = phi.max()
    inner = (2.0 / (kappa * a)) * np.exp(phi - shift)
    cum = np.concatenate(
        ([0.0], np.cumsum(0.5 * (inner[1:] + inner[:-1]) * np.diff(u)))
    )
    upper = cum[-1] - cum  # integral of `inner` from y to the reflector
    outer = np.exp(-(phi - shift)) * upper
    return float(np.trapezoid(outer, u))


def edge_exit_times(
    system: TwoDiskSystem,
    lobe: int,
    kappa_grid,
    replicas: int = 400,
    seed: int = 0,
    dt: float = 2e-4,
    start_frac: float = 0.9,
    exit_frac: float = 0.05,
    grid_points: int = 1024,
    t_cap: float = 1e5,
    tables=None,
):
    """Mean escape times of the averaged one-dimensional edge diffusion.

    dz = beta_avg(z) dt + sqrt(kappa a_avg(z)) dW on the lobe edge, started
    at and reflected at start_frac of the lobe depth, absorbed at exit_frac
    (near the separatrix).  Returns (means, aux) where aux carries the
    escape-cost integral of the probed range in both normalisations for
    comparison with a rate fit of the means.
    """
    if tables is None:
        tables = edge_tables(system, lobe, grid_points)
    u_grid, beta_tab, a_tab = tables
    depth = abs(system.lobe_extremum(lobe))
    u0 = start_frac * depth
    u_exit = exit_frac * depth
    means = []
    for kap in kappa_grid:
        seeds = np.array(
            [
                np.random.SeedSequence((seed, int(round(kap * 1e9)), r)).generate_state(1)[0]
                for r in range(replicas)
            ],
            dtype=np.uint32,
        )
        out = np.empty(replicas)
        _edge_kernel(
            u0,
            u_exit,
            u0,
            float(u_grid[0]),
            float(u_grid[1] - u_grid[0]),
            beta_tab,
            a_tab,
            kap,
            dt,
            int(t_cap / dt),
            seeds,
            out,
        )
        means.append(float(out.mean()))
    # escape cost of the probed range, plain and doubled
    mask = (u_grid >= u_exit) & (u_grid <= u0)
    plain = float(np.trapezoid(beta_tab[mask] / a_tab[mask], u_grid[mask]))
    return means, {"plain": plain, "doubled": 2.0 * plain}
