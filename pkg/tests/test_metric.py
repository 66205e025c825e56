"""Subunit distance fields: eikonal solve, eps ladder, limit, balls."""

import math

import numpy as np
import pytest

from subunit_lab.errors import ConfigError, DomainError, MonotonicityError
from subunit_lab.forms import DegeneracyProfile, QuadraticFormField, assemble_form
from subunit_lab.grid import GridSpec
from subunit_lab.metric import (DistanceField, ball, dijkstra_distance,
                                extrapolate_distance, solve_distance,
                                solve_ladder, sorted_values)


def test_source_distance_exact_zero(euclid_field):
    assert euclid_field.values[euclid_field.source] == 0.0


def test_epsilon_zero_rejected(euclid_form):
    with pytest.raises(ConfigError):
        solve_distance(euclid_form, (10, 10), 0.0)


def test_source_outside_grid_rejected(euclid_form):
    with pytest.raises(DomainError):
        solve_distance(euclid_form, (500, 10), 0.1)


def test_euclidean_identity(euclid_field):
    # d((0,0),(0.3,0.4)) = 0.5 up to grid error and the tiny eps inflation
    g = euclid_field.grid
    node = g.nearest_node(0.3, 0.4)
    assert abs(euclid_field.values[node] - 0.5) < 2.0 * euclid_field.slack()


def test_euclidean_lower_bound(euclid_field):
    # subunit distance dominates Euclidean distance (C = 1), up to slack
    g = euclid_field.grid
    eu = g.euclid_from(euclid_field.source)
    slack = euclid_field.slack()
    assert np.all(euclid_field.values >= eu / math.sqrt(1 + 1e-6) - slack)


def test_grushin_vertical_distance_against_oracles(grushin_field_origin):
    """Vertical Grushin displacement: continuum distance sqrt(2 pi y); the
    solver must sit within 3% of a brute-force Dijkstra oracle on a finer
    grid and above the 2 sqrt(y) floor."""
    g = grushin_field_origin.grid
    y = 0.2
    d_fmm = grushin_field_origin.values[g.nearest_node(0.0, y)]

    fine = GridSpec(-0.3, 0.3, -0.05, 0.25, 513, 257)
    form_fine = assemble_form(DegeneracyProfile("power", 1.0), fine)
    oracle = dijkstra_distance(form_fine, fine.nearest_node(0.0, 0.0), 1e-3)
    d_oracle = oracle.values[fine.nearest_node(0.0, y)]

    assert abs(d_fmm - d_oracle) / d_oracle < 0.03
    assert d_fmm > 2.0 * math.sqrt(y)
    assert abs(d_fmm - math.sqrt(2 * math.pi * y)) / d_fmm < 0.05


def test_epsilon_monotonicity_nodewise(grushin_form):
    fields = solve_ladder(grushin_form, (128, 128), [0.2, 0.1, 0.05, 0.025])
    for f1, f2 in zip(fields, fields[1:]):
        assert f2.epsilon < f1.epsilon
        assert np.all(f2.values >= f1.values - 1e-9)


def test_extrapolate_constant_form_limit_equals_finest(euclid_form):
    fields = solve_ladder(euclid_form, (64, 64), [0.08, 0.04, 0.02, 0.01])
    limit = extrapolate_distance(fields)
    finest = fields[-1]
    scale = np.maximum(finest.values, 1e-3)
    assert np.nanmax(np.abs(limit.values - finest.values) / scale) < 2e-3
    assert limit.epsilon == 0.0
    assert limit.error_bar is not None


def test_extrapolate_paper_model_monotone_increments(paper_form):
    fields = solve_ladder(paper_form, (128, 128), [0.1, 0.05, 0.025, 0.0125])
    limit = extrapolate_distance(fields)
    # increments shrink monotonically on nodes across the degenerate axis
    g = paper_form.grid
    probe = g.nearest_node(-0.2, 0.3)   # reached by crossing x = 0
    incs = [fields[k + 1].values[probe] - fields[k].values[probe]
            for k in range(len(fields) - 1)]
    assert all(i >= -1e-12 for i in incs)
    assert limit.values[probe] >= fields[-1].values[probe]


def test_extrapolate_flags_unreachable_nodes():
    # q22 = 0 except q11: only the source row is reachable in the limit
    g = GridSpec(-0.5, 0.5, -0.5, 0.5, 33, 33)
    q11 = np.ones(g.shape)
    q22 = np.zeros(g.shape)
    form = QuadraticFormField(grid=g, q11=q11, q22=q22)
    fields = [solve_distance(form, (16, 16), e) for e in (0.02, 0.01, 0.005)]
    limit = extrapolate_distance(fields)
    assert limit.frozen_mask[:, 16].all()          # the source row
    assert not limit.frozen_mask[16, 0]            # vertical displacement
    assert np.isinf(limit.values[16, 0])


def test_extrapolate_rejects_short_or_unsorted_ladders(euclid_form):
    f1 = solve_distance(euclid_form, (64, 64), 0.1)
    f2 = solve_distance(euclid_form, (64, 64), 0.05)
    with pytest.raises(ConfigError):
        extrapolate_distance([f1, f2])
    f3 = solve_distance(euclid_form, (64, 64), 0.2)
    with pytest.raises(ConfigError):
        extrapolate_distance([f1, f2, f3])


def test_extrapolate_monotonicity_error_on_corrupted_ladder(euclid_form):
    fields = solve_ladder(euclid_form, (64, 64), [0.1, 0.05, 0.025])
    bad_vals = fields[2].values.copy()
    bad_vals[10, 10] = max(0.0, bad_vals[10, 10] - 0.2)
    bad = DistanceField(grid=fields[2].grid, source=fields[2].source,
                        epsilon=fields[2].epsilon, values=bad_vals,
                        frozen_mask=fields[2].frozen_mask.copy())
    with pytest.raises(MonotonicityError):
        extrapolate_distance([fields[0], fields[1], bad])


def test_symmetry_sampled_pairs(grushin_form):
    g = grushin_form.grid
    a = g.nearest_node(0.15, 0.1)
    b = g.nearest_node(-0.1, -0.2)
    fa = solve_distance(grushin_form, a, 1e-3)
    fb = solve_distance(grushin_form, b, 1e-3)
    slack = fa.slack()
    assert abs(fa.values[b] - fb.values[a]) <= 2.0 * slack


def test_triangle_inequality_sampled(euclid_field, euclid_form):
    # d(a, c) <= d(a, b) + d(b, c) with a the field source, b fixed
    slack = euclid_field.slack()
    rng = np.random.default_rng(3)
    nodes = [(int(i), int(j)) for i, j in
             zip(rng.integers(20, 236, 12), rng.integers(20, 236, 12))]
    b = nodes[0]
    fb = solve_distance(euclid_form, b, 1e-3)
    for c in nodes[1:]:
        lhs = euclid_field.values[c]
        rhs = euclid_field.values[b] + fb.values[c]
        assert lhs <= rhs + 2.0 * slack


def test_ball_tiny_radius_is_source_only(euclid_field):
    sv = sorted_values(euclid_field)
    r = float(sv[1]) * 0.5          # below the first positive value
    mask = ball(euclid_field, r)
    assert mask.sum() == 1
    assert mask[euclid_field.source]


def test_ball_huge_radius_is_everything(euclid_field):
    mask = ball(euclid_field, float(np.max(euclid_field.values)) * 1.01)
    assert mask.all()


def test_ball_rejects_nonpositive_radius(euclid_field):
    with pytest.raises(DomainError):
        ball(euclid_field, 0.0)


def test_grid_refinement_first_order(grushin_profile):
    # doubling the resolution moves values by less than the slack budget
    coarse = GridSpec(-0.5, 0.5, -0.5, 0.5, 65, 65)
    fine = coarse.refine(2)
    fc = solve_distance(assemble_form(grushin_profile, coarse),
                        (32, 32), 1e-3)
    ff = solve_distance(assemble_form(grushin_profile, fine), (64, 64), 1e-3)
    probe_pts = [(0.3, 0.0), (0.0, 0.25), (-0.2, -0.2), (0.25, 0.25)]
    for x, y in probe_pts:
        vc = fc.values[coarse.nearest_node(x, y)]
        vf = ff.values[fine.nearest_node(x, y)]
        assert abs(vc - vf) <= fc.slack()


def test_determinism_bitwise(grushin_form):
    f1 = solve_distance(grushin_form, (100, 80), 0.01)
    f2 = solve_distance(grushin_form, (100, 80), 0.01)
    assert np.array_equal(f1.values, f2.values)
