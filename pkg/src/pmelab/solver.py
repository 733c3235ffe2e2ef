"""Finite-difference solver for u_t = mu * lap(u^m) with Dirichlet data.

The scheme uses the standard 2n+1-point Laplacian applied to w = u^m and
either backward-Euler time stepping (damped Newton per step, symmetrized
Jacobian solved by unpreconditioned CG) or forward Euler under a CFL bound.
On unions of cylinders with nondecreasing time sections the solve proceeds
slab by slab; cells appearing at a junction take their initial values from
the parabolic boundary data at the junction time.

Powers of the field use the odd extension sign(u)*|u|^m so Newton iterates
may transiently cross zero; converged solutions are nonnegative because the
limit system is an M-matrix with nonnegative data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from .geometry import (
    Cylinder,
    ParabolicBoundary,
    SpaceTimeDomain,
    check_monotone_sections,
    parabolic_boundary,
)


class SolverError(RuntimeError):
    """Newton failed to converge, CFL violated, or invalid solver input."""


_DEGENERACY_FLOOR = 1e-12   # Jacobian regularization for cells with u ~ 0


def _pow_odd(u: np.ndarray, m: float) -> np.ndarray:
    """sign(u)|u|^m; the monotone odd extension of u^m to negative values."""
    return np.sign(u) * np.abs(u) ** m


@dataclass(frozen=True)
class SolverConfig:
    scheme: str = "implicit"            # "implicit" | "explicit"
    dt: float | None = None             # None = auto
    newton_tol: float = 1e-10           # on the per-unit-time step residual
    newton_max: int = 40
    linear_tol: float = 1e-10           # CG relative tolerance
    diffusion: float = 1.0              # mu in u_t = mu*lap(u^m)

    def __post_init__(self):
        if self.scheme not in ("implicit", "explicit"):
            raise SolverError(f"unknown scheme {self.scheme!r}")
        if self.newton_tol <= 0 or self.linear_tol <= 0:
            raise SolverError("tolerances must be positive")
        if self.diffusion <= 0:
            raise SolverError("diffusion multiplier must be positive")


@dataclass(frozen=True)
class BoundaryData:
    """Nonnegative data on parabolic-boundary samples: (x, t) -> value."""

    fn: Callable[[np.ndarray, float], float]
    bounds: tuple[float, float]

    def __post_init__(self):
        lo, hi = self.bounds
        if not (0 <= lo <= hi < math.inf):
            raise SolverError(f"bounds must satisfy 0 <= inf <= sup < inf, got {self.bounds}")

    def sample(self, x: np.ndarray, t: float) -> float:
        v = float(self.fn(x, t))
        if v < -1e-12:
            raise SolverError(f"boundary data is negative at ({x}, {t}): {v}")
        return max(v, 0.0)

    @classmethod
    def constant(cls, c: float) -> "BoundaryData":
        return cls(fn=lambda x, t: c, bounds=(c, c))

    def shifted(self, eps: float) -> "BoundaryData":
        """Data f + eps (eps >= 0)."""
        base = self.fn
        return BoundaryData(fn=lambda x, t: base(x, t) + eps,
                            bounds=(self.bounds[0] + eps, self.bounds[1] + eps))

    def clipped_down(self, eps: float) -> "BoundaryData":
        """Data max(f - eps, 0)."""
        base = self.fn
        return BoundaryData(fn=lambda x, t: max(base(x, t) - eps, 0.0),
                            bounds=(max(self.bounds[0] - eps, 0.0),
                                    max(self.bounds[1] - eps, 0.0)))


class Field:
    """Grid function on a space-time domain: values per (cell, level).

    ``values[k]`` is defined (non-nan) on the cells marked in ``defined[k]``;
    ``scheme_mask[k]`` marks the cells where the time step ending at level k
    enforced the discrete equation (the interior samples).
    """

    def __init__(self, domain: SpaceTimeDomain, values: np.ndarray,
                 defined: np.ndarray, scheme_mask: np.ndarray,
                 m: float, config: SolverConfig, stats: dict | None = None):
        self.domain = domain
        self.values = values
        self.defined = defined
        self.scheme_mask = scheme_mask
        self.m = float(m)
        self.config = config
        self.stats = stats or {}
        self.pb: ParabolicBoundary = parabolic_boundary(domain)
        for arr in (values, defined, scheme_mask):
            arr.setflags(write=False)

    @classmethod
    def from_values(cls, domain: SpaceTimeDomain, values: np.ndarray, m: float,
                    config: SolverConfig | None = None) -> "Field":
        """Wrap externally produced values (e.g. a sampled closed form)."""
        config = config or SolverConfig()
        L = domain.num_levels
        defined = np.zeros((L, *domain.grid.extents), dtype=bool)
        scheme = np.zeros_like(defined)
        defined[0] = domain.step_base_mask(0)
        for k in range(domain.num_steps):
            base = domain.step_base(k)
            defined[k] |= base.mask
            defined[k + 1] = base.mask
            scheme[k + 1] = base.core_mask
        vals = np.where(defined, values, np.nan)
        return cls(domain, vals, defined, scheme, m, config)

    def value(self, level: int, idx: tuple[int, ...]) -> float:
        if not self.defined[(level, *idx)]:
            raise SolverError(f"field is undefined at level {level}, cell {idx}")
        return float(self.values[(level, *idx)])

    def interior_values(self) -> np.ndarray:
        return self.values[self.scheme_mask]

    def sup(self) -> float:
        return float(np.nanmax(np.abs(self.values[self.defined])))

    def min(self) -> float:
        return float(np.nanmin(self.values[self.defined]))

    def ball_extremum(self, xi0: np.ndarray, radius: float,
                      reduce: str = "max") -> float:
        """Max/min over interior samples within a space-time ball of xi0."""
        sel = self._ball_mask(xi0, radius)
        if not sel.any():
            raise SolverError("no interior samples within the given radius")
        vals = self.values[sel]
        return float(vals.max() if reduce == "max" else vals.min())

    def _ball_mask(self, xi0: np.ndarray, radius: float) -> np.ndarray:
        xi0 = np.asarray(xi0, dtype=float)
        centers = self.domain.grid.centers()
        d2x = ((centers - xi0[:-1]) ** 2).sum(axis=-1)
        times = self.domain.level_times()
        sel = np.zeros_like(self.scheme_mask)
        for k in range(self.domain.num_levels):
            d2 = d2x + (times[k] - xi0[-1]) ** 2
            sel[k] = self.scheme_mask[k] & (d2 <= radius ** 2)
        return sel

    def scaled(self, factor: float) -> "Field":
        out = Field.__new__(Field)
        out.domain = self.domain
        out.values = self.values * factor
        out.defined = self.defined
        out.scheme_mask = self.scheme_mask
        out.m = self.m
        out.config = self.config
        out.stats = dict(self.stats)
        out.pb = self.pb
        out.values.setflags(write=False)
        return out


def cfl_max_dt(L: float, h: float, m: float, n: int) -> float:
    """Largest stable forward-Euler step for fields bounded by L.

    Linearized diffusion coefficient is m*L^(m-1); the bound is the classical
    h^2 / (2 n m L^(m-1)).  L = 0 freezes the field, so no constraint.
    """
    if L < 0:
        raise SolverError("field bound must be nonnegative")
    if L == 0:
        return math.inf
    return h * h / (2 * n * m * L ** (m - 1))


def _step_matrices(core_idx: np.ndarray, extents: tuple[int, ...]):
    """Adjacency among core cells and, per core cell, its pinned neighbours.

    Returns (A, pinned) where A is the 0/1 adjacency matrix between core
    cells and pinned[i] lists the grid indices of stencil neighbours of core
    cell i that are not core (these carry Dirichlet values).
    """
    ndim = len(extents)
    index_of = -np.ones(extents, dtype=np.int64)
    for i, idx in enumerate(core_idx):
        index_of[tuple(idx)] = i
    rows, cols = [], []
    pinned: list[list[tuple[int, ...]]] = [[] for _ in range(len(core_idx))]
    for i, idx in enumerate(core_idx):
        for ax in range(ndim):
            for step in (-1, 1):
                nb = list(idx)
                nb[ax] += step
                nb_t = tuple(nb)
                j = index_of[nb_t]
                if j >= 0:
                    rows.append(i)
                    cols.append(j)
                else:
                    pinned[i].append(nb_t)
    A = sp.csr_matrix((np.ones(len(rows)), (rows, cols)),
                      shape=(len(core_idx), len(core_idx)))
    return A, pinned


def _newton_step(prev: np.ndarray, bdry_w: np.ndarray, A: sp.csr_matrix,
                 deg: float, c: float, m: float, cfg: SolverConfig,
                 res_scale: float, dt: float) -> tuple[np.ndarray, int]:
    """Solve u - c*(A w(u) + g - deg*w(u)) = prev for one implicit step.

    c = mu*dt/h^2, g = bdry_w (Dirichlet contributions), w = odd power m.
    Returns (u, newton iterations).
    """
    u = prev.copy()

    def residual(uv: np.ndarray) -> np.ndarray:
        w = _pow_odd(uv, m)
        return uv - c * (A @ w + bdry_w - deg * w) - prev

    F = residual(u)
    target = cfg.newton_tol * res_scale * dt
    for it in range(cfg.newton_max):
        if np.max(np.abs(F)) <= target:
            return np.maximum(u, 0.0), it
        d = m * np.maximum(np.abs(u), _DEGENERACY_FLOOR) ** (m - 1)
        s = np.sqrt(d)
        S = sp.diags(s)
        M = sp.diags(np.full(len(u), deg)) - A           # 2n*I - A, SPD part
        J_sym = sp.identity(len(u), format="csr") + c * (S @ M @ S)
        rhs = s * (-F)
        y, info = cg(J_sym, rhs, rtol=cfg.linear_tol, atol=0.0,
                     maxiter=10 * len(u) + 100)
        if info != 0:
            raise SolverError(f"inner CG failed to converge (info={info})")
        delta = y / s
        norm0 = np.linalg.norm(F)
        step = 1.0
        for _ in range(10):
            u_try = u + step * delta
            F_try = residual(u_try)
            if np.linalg.norm(F_try) <= (1 - 1e-4 * step) * norm0:
                break
            step *= 0.5
        u, F = u_try, F_try
    if np.max(np.abs(F)) <= target:
        return np.maximum(u, 0.0), cfg.newton_max
    raise SolverError(
        f"Newton did not converge in {cfg.newton_max} iterations; "
        f"worst step residual {np.max(np.abs(F)) / dt:.3e} "
        f"(target {cfg.newton_tol * res_scale:.3e})")


def solve_union(d: SpaceTimeDomain, data: BoundaryData, cfg: SolverConfig,
                m: float) -> Field:
    """Slab-by-slab Dirichlet solve on a monotone union of cylinders.

    The returned field equals ``data`` on the parabolic-boundary samples,
    satisfies the discrete scheme at every interior (cell, level) and stays
    nonnegative.
    """
    ok, t_bad = check_monotone_sections(d)
    if not ok:
        raise SolverError(f"time sections are not nondecreasing (violation at t={t_bad})")
    if d.num_steps < 1:
        raise SolverError("domain has no time steps to solve")
    grid = d.grid
    h, dt = grid.h, d.dt
    mu = cfg.diffusion
    L_bound = data.bounds[1]
    res_scale = max(1.0, mu * L_bound ** m / h ** 2)
    if cfg.scheme == "explicit":
        max_dt = cfl_max_dt(L_bound, h, m, grid.n) / mu
        if dt > max_dt * (1 + 1e-12):
            raise SolverError(
                f"explicit step dt={dt} exceeds the CFL bound {max_dt:.6g}")

    centers = grid.centers()
    levels = d.num_levels
    values = np.full((levels, *grid.extents), np.nan)
    defined = np.zeros((levels, *grid.extents), dtype=bool)
    scheme_mask = np.zeros_like(defined)

    def fill_data(level: int, mask: np.ndarray):
        t = d.level_time(level)
        for idx in np.argwhere(mask):
            idx = tuple(map(int, idx))
            values[(level, *idx)] = data.sample(centers[idx], t)
        defined[level][mask] = True

    base0 = d.step_base(0)
    fill_data(0, base0.mask)

    newton_iters: list[int] = []
    prev_mask = base0.mask
    for k in range(d.num_steps):
        base = d.step_base(k)
        new_cells = base.mask & ~prev_mask & ~defined[k]
        if new_cells.any():
            fill_data(k, new_cells)       # junction cells take boundary data
        fill_data(k + 1, base.boundary_mask)

        core_idx = np.argwhere(base.core_mask)
        if len(core_idx) == 0:
            prev_mask = base.mask
            continue
        A, pinned = _step_matrices(core_idx, grid.extents)
        deg = 2 * grid.n
        c = mu * dt / h ** 2
        prev_core = np.array([values[(k, *tuple(idx))] for idx in core_idx])
        if np.isnan(prev_core).any():
            raise SolverError("missing initial values on a slab core")

        if cfg.scheme == "implicit":
            bdry_w = np.zeros(len(core_idx))
            for i, nbs in enumerate(pinned):
                for nb in nbs:
                    bdry_w[i] += _pow_odd(values[(k + 1, *nb)], m)
            u_new, its = _newton_step(prev_core, bdry_w, A, deg, c, m, cfg,
                                      res_scale, dt)
            newton_iters.append(its)
        else:
            w_prev = _pow_odd(prev_core, m)
            bdry_w = np.zeros(len(core_idx))
            for i, nbs in enumerate(pinned):
                for nb in nbs:
                    bdry_w[i] += _pow_odd(values[(k, *nb)], m)
            u_new = prev_core + c * (A @ w_prev + bdry_w - deg * w_prev)
            u_new = np.maximum(u_new, 0.0)

        for i, idx in enumerate(core_idx):
            values[(k + 1, *tuple(idx))] = u_new[i]
        defined[k + 1][base.mask] = True
        scheme_mask[k + 1][base.core_mask] = True
        prev_mask = base.mask

    stats = {
        "newton_iterations": newton_iters,
        "residual_scale": res_scale,
        "dt": dt,
        "h": h,
    }
    return Field(d, values, defined, scheme_mask, m, cfg, stats)


def solve_cylinder(cyl: Cylinder, data: BoundaryData, cfg: SolverConfig,
                   m: float, num_steps: int | None = None) -> Field:
    """Dirichlet solve on a single cylinder (degenerate union)."""
    if cfg.dt is not None:
        dt = cfg.dt
    elif num_steps is not None:
        dt = (cyl.t2 - cyl.t1) / num_steps
    else:
        raise SolverError("either cfg.dt or num_steps must be given")
    d = SpaceTimeDomain([cyl], dt)
    return solve_union(d, data, cfg, m)


def discrete_residual(f: Field, idx: tuple[int, ...], level: int) -> float:
    """Pointwise scheme residual (u_k - u_{k-1})/dt - mu*lap_h(u_k^m).

    Only valid at interior samples (cells where the step enforced the
    scheme); boundary samples are rejected.
    """
    if level < 1 or not f.scheme_mask[(level, *idx)]:
        raise SolverError(f"({idx}, level {level}) is not an interior sample")
    d = f.domain
    h = d.grid.h
    u_now = f.values[(level, *idx)]
    u_prev = f.values[(level - 1, *idx)]
    lap = 0.0
    w0 = _pow_odd(u_now, f.m)
    for ax in range(d.grid.n):
        for step in (-1, 1):
            nb = list(idx)
            nb[ax] += step
            lap += _pow_odd(f.values[(level, *tuple(nb))], f.m) - w0
    lap /= h * h
    return float((u_now - u_prev) / d.dt - f.config.diffusion * lap)


def comparison_check(u: Field, v: Field, mode: str = "parabolic",
                     tol: float = 1e-10) -> tuple[bool, list]:
    """Check v <= u at all interior samples (discrete comparison principle).

    ``mode`` names which boundary ordering the caller has arranged
    ("parabolic": v <= u on the parabolic boundary; "elliptic": on all
    boundary samples); the interior check is the same for both.
    """
    if mode not in ("parabolic", "elliptic"):
        raise SolverError(f"unknown comparison mode {mode!r}")
    if u.domain is not v.domain and (
            u.domain.num_levels != v.domain.num_levels
            or not u.domain.grid.compatible_with(v.domain.grid)):
        raise SolverError("comparison requires fields on the same domain")
    scale = max(1.0, u.sup(), v.sup())
    sel = u.scheme_mask & v.scheme_mask
    diff = v.values - u.values
    bad = sel & (diff > tol * scale)
    violations = [(tuple(map(int, w[1:])), int(w[0]), float(diff[tuple(w)]))
                  for w in np.argwhere(bad)]
    return len(violations) == 0, violations
