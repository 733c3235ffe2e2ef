import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pmelab.barriers import barenblatt
from pmelab.capacity import torsion_profile
from pmelab.geometry import Cylinder, Grid, SpaceTimeDomain, SpatialDomain
from pmelab.solver import (
    BoundaryData,
    Field,
    SolverConfig,
    SolverError,
    cfl_max_dt,
    comparison_check,
    discrete_residual,
    solve_cylinder,
    solve_union,
)

M_EXP = 2.0


def unit_box(h=1 / 16, cells=16, origin=(0.0, 0.0)):
    g = Grid(n=2, h=h, origin=origin, extents=(cells, cells))
    return SpatialDomain(g, np.ones((cells, cells), dtype=bool))


def box_cylinder(t2=0.25, dt=0.025, **kw):
    U = unit_box(**kw)
    return SpaceTimeDomain([Cylinder(U, 0.0, t2)], dt=dt), U


def test_constant_data_gives_constant_solution():
    d, U = box_cylinder()
    u = solve_union(d, BoundaryData.constant(1.5), SolverConfig(), M_EXP)
    vals = u.values[u.defined]
    assert vals.min() == vals.max() == pytest.approx(1.5)
    assert discrete_residual(u, (8, 8), 5) == 0.0


def test_stationary_affine_power_profile():
    # u^m affine in x means lap(u^m) = 0: the data profile is a steady state
    a, b = 1.0, 2.0
    d, U = box_cylinder()
    data = BoundaryData(fn=lambda x, t: (a + b * x[0]) ** (1 / M_EXP),
                        bounds=(a ** 0.5, (a + 2 * b) ** 0.5))
    u = solve_union(d, data, SolverConfig(), M_EXP)
    centers = U.grid.centers()
    exact = (a + b * centers[..., 0]) ** (1 / M_EXP)
    err = np.abs(u.values[-1] - exact)[U.mask].max()
    assert err < 1e-9


def test_harmonic_power_profile_is_time_independent():
    # g^m discretely harmonic (affine) induces the steady solution g
    d, U = box_cylinder()
    data = BoundaryData(fn=lambda x, t: (1.0 + x[0] + 0.5 * x[1]) ** 0.5,
                        bounds=(1.0, 2.5 ** 0.5))
    u = solve_union(d, data, SolverConfig(), M_EXP)
    spread = np.nanmax(np.abs(u.values[-1] - u.values[0])[U.mask])
    assert spread < 1e-9


def test_solver_output_nonnegative_and_boundary_pinned():
    d, U = box_cylinder()
    data = BoundaryData(
        fn=lambda x, t: max(math.sin(7 * x[0]) + math.cos(5 * x[1] + t), 0.0),
        bounds=(0.0, 2.0))
    u = solve_union(d, data, SolverConfig(), M_EXP)
    assert np.nanmin(u.values[u.defined]) >= 0.0
    for k, t, idx, center in u.pb.samples():
        assert u.values[(k, *idx)] == pytest.approx(data.sample(center, t))


def test_solve_cylinder_matches_union_route():
    U = unit_box()
    cyl = Cylinder(U, 0.0, 0.25)
    data = BoundaryData.constant(0.7)
    via_cyl = solve_cylinder(cyl, data, SolverConfig(), M_EXP, num_steps=10)
    via_union = solve_union(SpaceTimeDomain([cyl], dt=0.025), data,
                            SolverConfig(), M_EXP)
    assert np.allclose(via_cyl.values, via_union.values, equal_nan=True)


def test_barenblatt_oracle_convergence():
    # two refinement levels, positive data window inside the support
    m, n, C = 2.0, 2, 0.05
    errs = []
    for lev in (0, 1):
        cells = 16 * 2 ** lev
        h = 1.0 / cells
        g = Grid(n=2, h=h, origin=(-0.5, -0.5), extents=(cells, cells))
        U = SpatialDomain(g, np.ones((cells, cells), dtype=bool))
        d = SpaceTimeDomain([Cylinder(U, 1.0, 1.25)], dt=0.25 / (12 * 2 ** lev))
        data = BoundaryData(fn=lambda x, t: barenblatt(x, t, m, n, C),
                            bounds=(0.0, 0.05))
        u = solve_union(d, data, SolverConfig(), m)
        centers = g.centers()
        exact = np.array([[barenblatt(centers[i, j], 1.25, m, n, C)
                           for j in range(cells)] for i in range(cells)])
        errs.append(float(np.abs(u.values[-1] - exact)[U.mask].sum()) * h * h)
    assert errs[1] < errs[0]


def test_barenblatt_truncation_order():
    # scheme residual of the sampled oracle halves when h, dt halve
    # (backward time difference dominates: O(dt) + O(h^2))
    m, n, C = 2.0, 2, 0.05
    worst = []
    for lev in (0, 1):
        cells = 16 * 2 ** lev
        h = 1.0 / cells
        g = Grid(n=2, h=h, origin=(-0.5, -0.5), extents=(cells, cells))
        U = SpatialDomain(g, np.ones((cells, cells), dtype=bool))
        d = SpaceTimeDomain([Cylinder(U, 1.0, 1.25)], dt=0.25 / (8 * 2 ** lev))
        vals = np.zeros((d.num_levels, cells, cells))
        centers = g.centers()
        for k in range(d.num_levels):
            t = d.level_time(k)
            for idx in np.argwhere(U.mask):
                idx = tuple(idx)
                vals[(k, *idx)] = barenblatt(centers[idx], t, m, n, C)
        f = Field.from_values(d, vals, m)
        mid = cells // 2
        worst.append(max(abs(discrete_residual(f, (mid, mid), lv))
                         for lv in (1, d.num_steps // 2, d.num_steps)))
    ratio = worst[0] / worst[1]
    assert 1.5 < ratio < 3.5


def test_cfl_bound_values():
    assert cfl_max_dt(5.0, 0.1, 1.0, 2) == pytest.approx(0.1 ** 2 / 4)
    assert cfl_max_dt(1.0, 0.1, 2.0, 2) == pytest.approx(0.00125)
    assert cfl_max_dt(2.0, 0.1, 2.0, 2) == pytest.approx(0.00125 / 2)
    assert cfl_max_dt(0.0, 0.1, 2.0, 2) == math.inf


def test_explicit_scheme_respects_cfl():
    d, U = box_cylinder(t2=0.25, dt=0.025)
    data = BoundaryData.constant(1.0)
    with pytest.raises(SolverError):
        solve_union(d, data, SolverConfig(scheme="explicit"), M_EXP)
    h = U.grid.h
    dt_ok = 0.9 * cfl_max_dt(1.0, h, M_EXP, 2)
    steps = int(math.ceil(0.25 / dt_ok))
    d2 = SpaceTimeDomain([Cylinder(U, 0.0, 0.25)], dt=0.25 / steps)
    u = solve_union(d2, data, SolverConfig(scheme="explicit"), M_EXP)
    assert np.nanmax(np.abs(u.values[u.defined] - 1.0)) < 1e-12


def test_explicit_matches_implicit_on_smooth_data():
    U = unit_box(h=1 / 8, cells=8)
    data = BoundaryData(fn=lambda x, t: 1.0 + 0.3 * math.sin(3 * x[0]),
                        bounds=(0.7, 1.3))
    h = U.grid.h
    dt = 0.8 * cfl_max_dt(1.3, h, M_EXP, 2)
    steps = int(math.ceil(0.1 / dt))
    d = SpaceTimeDomain([Cylinder(U, 0.0, 0.1)], dt=0.1 / steps)
    ue = solve_union(d, data, SolverConfig(scheme="explicit"), M_EXP)
    ui = solve_union(d, data, SolverConfig(scheme="implicit"), M_EXP)
    diff = np.nanmax(np.abs(ue.values[-1] - ui.values[-1])[U.mask])
    assert diff < 5e-3


def test_newton_failure_carries_residual():
    # a hard jump from a near-vacuum initial state needs several Newton
    # iterations; capping them at one must fail loudly with the residual
    d, _ = box_cylinder(t2=0.25, dt=0.25)
    data = BoundaryData(fn=lambda x, t: 0.01 if t <= 0 else 2.0,
                        bounds=(0.01, 2.0))
    with pytest.raises(SolverError, match="worst step residual"):
        solve_union(d, data, SolverConfig(newton_max=1), M_EXP)


def test_union_constant_on_expanding_stack():
    g = Grid(n=2, h=1 / 16, origin=(0, 0), extents=(16, 16))
    small = np.zeros((16, 16), dtype=bool)
    small[4:12, 4:12] = True
    U = SpatialDomain(g, small)
    V = SpatialDomain(g, np.ones((16, 16), dtype=bool))
    d = SpaceTimeDomain([Cylinder(U, 0.0, 0.125), Cylinder(V, 0.125, 0.25)],
                        dt=0.025)
    u = solve_union(d, BoundaryData.constant(2.0), SolverConfig(), M_EXP)
    vals = u.values[u.defined]
    assert vals.min() == pytest.approx(2.0)
    assert vals.max() == pytest.approx(2.0)


def test_union_rejects_shrinking_stack():
    g = Grid(n=2, h=1 / 16, origin=(0, 0), extents=(16, 16))
    small = np.zeros((16, 16), dtype=bool)
    small[4:12, 4:12] = True
    d = SpaceTimeDomain(
        [Cylinder(SpatialDomain(g, np.ones((16, 16), dtype=bool)), 0.0, 0.125),
         Cylinder(SpatialDomain(g, small), 0.125, 0.25)], dt=0.025)
    with pytest.raises(SolverError, match="not nondecreasing"):
        solve_union(d, BoundaryData.constant(1.0), SolverConfig(), M_EXP)


def test_degenerate_vacuum_region_stays_put():
    # data zero on one side: the front must not smear negatives anywhere
    d, U = box_cylinder()
    data = BoundaryData(fn=lambda x, t: max(x[0] - 0.5, 0.0) * 2,
                        bounds=(0.0, 1.0))
    u = solve_union(d, data, SolverConfig(), M_EXP)
    assert np.nanmin(u.values[u.defined]) >= 0.0


def test_discrete_residual_rejects_boundary_samples():
    d, _ = box_cylinder()
    u = solve_union(d, BoundaryData.constant(1.0), SolverConfig(), M_EXP)
    with pytest.raises(SolverError):
        discrete_residual(u, (0, 5), 3)      # lateral cell
    with pytest.raises(SolverError):
        discrete_residual(u, (8, 8), 0)      # bottom level


def test_comparison_ordered_pair_and_equal_fields():
    d, _ = box_cylinder()
    lo = solve_union(d, BoundaryData.constant(1.0), SolverConfig(), M_EXP)
    hi = solve_union(d, BoundaryData.constant(1.5), SolverConfig(), M_EXP)
    ok, viol = comparison_check(hi, lo)
    assert ok and not viol
    ok_eq, _ = comparison_check(lo, lo)
    assert ok_eq


def test_comparison_randomized_campaign():
    d, _ = box_cylinder(t2=0.1, dt=0.02, h=1 / 8, cells=8)
    rng = np.random.Generator(np.random.Philox(7))
    for _ in range(25):
        coefs = [(rng.uniform(-4, 4), rng.uniform(-4, 4),
                  rng.uniform(0, 0.3)) for _ in range(3)]
        base = rng.uniform(0.5, 1.5)
        gap = rng.uniform(0.0, 0.7)

        def mk(shift):
            def fn(x, t):
                v = base + shift
                for ax, at, amp in coefs:
                    v += amp * math.sin(ax * x[0] + at * x[1] + (ax - at) * t)
                return max(v, 0.0)
            return fn

        lo = solve_union(d, BoundaryData(fn=mk(0.0), bounds=(0, base + 1)),
                         SolverConfig(), M_EXP)
        hi = solve_union(d, BoundaryData(fn=mk(gap), bounds=(0, base + 2)),
                         SolverConfig(), M_EXP)
        ok, viol = comparison_check(hi, lo)
        assert ok, viol[:3]


def test_boundary_data_validation():
    with pytest.raises(SolverError):
        BoundaryData(fn=lambda x, t: 1.0, bounds=(-1.0, 2.0))
    data = BoundaryData(fn=lambda x, t: -5.0, bounds=(0.0, 1.0))
    with pytest.raises(SolverError):
        data.sample(np.zeros(2), 0.0)


# -- pasting with a constant keeps the supersolution sign ---------------------

def _supersolution_field(k_cells=12):
    """Steady field with u^m = 1 + v, v the torsion profile: -lap(u^m) = 1."""
    g = Grid(n=2, h=1 / k_cells, origin=(0, 0), extents=(k_cells, k_cells))
    U = SpatialDomain(g, np.ones((k_cells, k_cells), dtype=bool))
    v = torsion_profile(U, np.array([0.0, 0.5]))
    w = 1.0 + v.values
    u_steady = np.sqrt(w)
    d = SpaceTimeDomain([Cylinder(U, 0.0, 0.2)], dt=0.05)
    vals = np.broadcast_to(u_steady, (d.num_levels, k_cells, k_cells)).copy()
    return Field.from_values(d, vals, M_EXP), U


def _super_residual(field, idx, level):
    # supersolution sign check: time derivative minus laplacian >= 0
    return discrete_residual(field, idx, level)


@settings(max_examples=15, deadline=None)
@given(k=st.floats(min_value=0.2, max_value=3.0))
def test_pasting_min_with_constant_is_supersolution(k):
    field, U = _supersolution_field()
    pasted = np.minimum(field.values, k)
    w = Field.from_values(field.domain, pasted, M_EXP)
    for level in range(1, field.domain.num_levels):
        for idx in map(tuple, np.argwhere(w.scheme_mask[level])):
            assert _super_residual(w, idx, level) >= -1e-11


def test_stability_under_data_perturbation():
    # sup-norm data perturbation moves the solution by no more than the
    # perturbation itself (the implicit step is a sup-norm contraction),
    # checked down an epsilon ladder
    d, U = box_cylinder(h=1 / 8, cells=8, t2=0.1, dt=0.02)
    base = BoundaryData(fn=lambda x, t: 1.0 + 0.4 * math.sin(4 * x[0] + t),
                        bounds=(0.6, 1.4))
    u0 = solve_union(d, base, SolverConfig(), M_EXP)
    for eps in (0.1, 0.05, 0.025):
        u_eps = solve_union(d, base.shifted(eps), SolverConfig(), M_EXP)
        dev = np.nanmax(np.abs(u_eps.values - u0.values)[u0.defined])
        assert dev <= eps + 1e-10


def test_one_dimensional_smoke():
    # n = 1 is allowed for solver validation only
    g = Grid(n=1, h=1 / 16, origin=(0.0,), extents=(16,))
    U = SpatialDomain(g, np.ones((16,), dtype=bool))
    d = SpaceTimeDomain([Cylinder(U, 0.0, 0.2)], dt=0.05)
    u = solve_union(d, BoundaryData.constant(0.8), SolverConfig(), M_EXP)
    vals = u.values[u.defined]
    assert vals.min() == vals.max() == pytest.approx(0.8)


def test_heat_equation_case():
    # m = 1: the step is linear and affine data is a steady state
    d, U = box_cylinder(h=1 / 8, cells=8, t2=0.1, dt=0.02)
    data = BoundaryData(fn=lambda x, t: 1.0 + x[0] + 0.5 * x[1],
                        bounds=(1.0, 2.5))
    u = solve_union(d, data, SolverConfig(), m=1.0)
    centers = U.grid.centers()
    exact = 1.0 + centers[..., 0] + 0.5 * centers[..., 1]
    assert np.abs(u.values[-1] - exact)[U.mask].max() < 1e-9


def test_three_dimensional_smoke():
    g = Grid(n=3, h=0.25, origin=(0.0,) * 3, extents=(6, 6, 6))
    U = SpatialDomain(g, np.ones((6, 6, 6), dtype=bool))
    d = SpaceTimeDomain([Cylinder(U, 0.0, 0.1)], dt=0.05)
    data = BoundaryData(fn=lambda x, t: (1.0 + x[0]) ** 0.5,
                        bounds=(1.0, 2.5 ** 0.5))
    u = solve_union(d, data, SolverConfig(), M_EXP)
    centers = g.centers()
    exact = (1.0 + centers[..., 0]) ** 0.5
    assert np.abs(u.values[-1] - exact)[U.mask].max() < 1e-9


def test_scaling_identity_on_the_stencil():
    # a^(1/(m-1)) times an a-multiplied solution solves the unit scheme
    d, _ = box_cylinder(h=1 / 8, cells=8, t2=0.1, dt=0.02)
    data = BoundaryData(fn=lambda x, t: 1.0 + 0.5 * math.sin(3 * x[0]),
                        bounds=(0.5, 1.5))
    for a in (0.25, 4.0):
        u_a = solve_union(d, data, SolverConfig(diffusion=a), M_EXP)
        v = u_a.scaled(a ** (1.0 / (M_EXP - 1)))
        v_unit = Field(v.domain, v.values.copy(), v.defined.copy(),
                       v.scheme_mask.copy(), M_EXP,
                       SolverConfig(diffusion=1.0), dict(v.stats))
        scale = u_a.stats["residual_scale"] * a ** (1.0 / (M_EXP - 1))
        for idx in [(4, 4), (2, 6)]:
            assert abs(discrete_residual(v_unit, idx, 3)) <= 1e-10 * scale
