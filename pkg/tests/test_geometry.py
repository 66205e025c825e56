"""Ball analytics: volumes, non-doubling order, growth condition, boxes."""

import math

import numpy as np
import pytest

from subunit_lab import geometry
from subunit_lab.errors import (DomainError, RangeError, ResolutionError)
from subunit_lab.forms import DegeneracyProfile, eval_h
from subunit_lab.geometry import (box_sandwich, containment_check,
                                  doubling_chain_bounds,
                                  doubling_classification, fill_delta_curve,
                                  growth_condition_check, nondoubling_order,
                                  volume_curve)
from subunit_lab.metric import solve_distance


def test_euclidean_area_law(euclid_field):
    radii = [0.1, 0.15, 0.2, 0.3]
    analytics = volume_curve(euclid_field, radii)
    for r, v in zip(analytics.radii, analytics.volumes):
        assert abs(v - math.pi * r * r) / (math.pi * r * r) < 0.05
    assert np.all(np.diff(analytics.volumes) > 0)


def test_grushin_volume_in_box_bracket(grushin_field_origin):
    # r^2/8 f(r/2) <= |B_r| <= 4 r^2 f(r/2) with f(r/2) = r/2:
    # bracket [r^3/16, 2 r^3]
    radii = [0.15, 0.2, 0.3, 0.4]
    analytics = volume_curve(grushin_field_origin, radii)
    for r, v in zip(analytics.radii, analytics.volumes):
        assert r ** 3 / 16.0 <= v <= 2.0 * r ** 3


def test_resolution_floor_raises(euclid_field):
    h = euclid_field.grid.hx
    with pytest.raises(ResolutionError):
        volume_curve(euclid_field, [1.5 * h])


def test_euclidean_delta_proportional_to_r(euclid_field):
    # area law: |B(r+d)|/|B(r)| = 5/4 at d = (sqrt(5)/2 - 1) r = 0.118 r
    radii = list(np.geomspace(0.08, 0.42, 18))
    analytics = volume_curve(euclid_field, radii)
    fill_delta_curve(analytics, C=2.0)
    want = math.sqrt(1.25) - 1.0
    for r in (0.12, 0.2, 0.3):
        d, capped, _ = nondoubling_order(analytics, r, 2.0)
        assert not capped
        assert abs(d / r - want) < 0.25 * want
    doubling, slope = doubling_classification(analytics)
    assert doubling                      # delta ~ r: flat slope, doubling band
    assert abs(slope) < 0.3


def test_nondoubling_order_range_error(euclid_field):
    radii = [0.1, 0.15, 0.2]
    analytics = volume_curve(euclid_field, radii)
    with pytest.raises(RangeError):
        nondoubling_order(analytics, 0.9, 2.0)


def test_constant_volume_plateau_capped_or_range_error(euclid_field):
    # degenerate test input: volume curve frozen at one value
    radii = [0.1, 0.15, 0.2]
    analytics = volume_curve(euclid_field, radii)
    analytics._sorted = np.sort(np.where(
        euclid_field.values < 0.05, euclid_field.values, np.inf).ravel())
    analytics._sorted = analytics._sorted[np.isfinite(analytics._sorted)]
    with pytest.raises(RangeError):
        nondoubling_order(analytics, 0.1, 2.0)


def test_upper_window_calibrates_C(grushin_field_origin):
    radii = list(np.geomspace(0.1, 0.45, 16))
    analytics = volume_curve(grushin_field_origin, radii)
    fill_delta_curve(analytics, C=1.001)
    # the 5/4 jump cannot exceed 2C once C is calibrated
    for r in (0.15, 0.25):
        d, capped, C_used = nondoubling_order(analytics, r,
                                              analytics.C_doubling)
        ratio = analytics.volume_at(r + d) / analytics.volume_at(r)
        assert ratio >= 1.25 - 1e-9
        assert ratio <= 2.0 * C_used + 1e-9


def test_window_invariant_on_fresh_radii(grushin_field_origin):
    # post-hoc check on radii not used by the bisection
    radii = list(np.geomspace(0.1, 0.45, 16))
    analytics = volume_curve(grushin_field_origin, radii)
    fill_delta_curve(analytics, C=2.0)
    C = analytics.C_doubling
    for r in (0.13, 0.21, 0.34):
        d, capped, _ = nondoubling_order(analytics, r, C)
        if capped:
            continue
        ratio = analytics.volume_at(r + d) / analytics.volume_at(r)
        assert 1.25 - 1e-9 <= ratio <= 2.0 * C * 1.05


def test_doubling_chain_bounds(grushin_field_origin):
    radii = list(np.geomspace(0.08, 0.45, 20))
    analytics = volume_curve(grushin_field_origin, radii)
    fill_delta_curve(analytics, C=2.0)
    measured, upper, lower = doubling_chain_bounds(analytics, 0.15)
    assert lower / 1.05 <= measured <= upper * 1.05


def test_growth_condition_paper_delta_law():
    # delta(r) = r h(r/2) with the paper h and lambda = 9: g increases
    radii = np.array([0.5 * 2.0 ** (-k) for k in range(9)])
    deltas = np.array([r * eval_h(r / 2.0, 9.0) for r in radii])
    rep = growth_condition_check(radii, deltas, 9.0, 2.0)
    assert rep.increasing
    assert np.all(np.diff(rep.log_g) > 0)       # strictly, not just in thirds
    assert np.all(rep.g_values > 0)


def test_growth_condition_power_delta_fails():
    # delta(r) = r^2: the inner factor dies too fast; g stays bounded
    radii = np.array([0.5 * 2.0 ** (-k) for k in range(9)])
    deltas = radii ** 2
    rep = growth_condition_check(radii, deltas, 9.0, 2.0)
    assert not rep.increasing

    import sympy
    r, lam, C = sympy.symbols("r lam C", positive=True)
    g = sympy.log(r) * sympy.log(1 - sympy.exp(-(r / r ** 2) ** 9) / (2 * 2))
    limit = sympy.limit(g, r, 0, dir="+")
    assert limit == 0                            # bounded, not -> +infinity


def test_growth_condition_half_r_doubling_trivially_increasing():
    # delta = r/2: constant inner factor < 1, g -> +inf like |ln r|
    radii = np.array([0.5 * 2.0 ** (-k) for k in range(9)])
    rep = growth_condition_check(radii, radii / 2.0, 9.0, 2.0)
    assert rep.increasing


def test_growth_condition_input_validation():
    radii = np.array([0.5, 0.25, 0.125])
    with pytest.raises(DomainError):
        growth_condition_check(radii[::-1], radii[::-1] / 2, 9.0, 2.0)
    with pytest.raises(DomainError):
        growth_condition_check(radii, np.zeros(3), 9.0, 2.0)


def test_box_sandwich_euclidean(euclid_field, euclid_profile):
    for r in (0.2, 0.3, 0.4):
        rep = box_sandwich(euclid_field, r, euclid_profile)
        assert rep.inner_checked > 0
        assert rep.inner_violations == 0
        assert rep.outer_violations == 0


def test_box_sandwich_grushin(grushin_field_origin, grushin_profile):
    for r in (0.2, 0.4):
        rep = box_sandwich(grushin_field_origin, r, grushin_profile)
        assert rep.inner_violations == 0
        assert rep.outer_violations == 0


def test_box_sandwich_requires_axis_center(grushin_field_off_axis,
                                           grushin_profile):
    with pytest.raises(DomainError):
        box_sandwich(grushin_field_off_axis, 0.2, grushin_profile)


def test_containment_euclidean_alpha_equals_r(euclid_field):
    radii = [0.15, 0.25, 0.35]
    rep = containment_check(euclid_field, radii)
    assert rep.ok
    for r, a in zip(rep.radii, rep.alphas):
        # eps-regularized field: alpha = r/sqrt(1+eps^2) up to a cell
        assert abs(a - r) < 2.5 * euclid_field.grid.hx


def test_containment_grushin_alpha_scale(grushin_field_origin,
                                         grushin_profile):
    radii = [0.2, 0.3, 0.4]
    rep = containment_check(grushin_field_origin, radii)
    assert rep.ok
    for r, a in zip(rep.radii, rep.alphas):
        scale = 0.5 * r * grushin_profile.value(r / 2.0)
        assert 0.2 * scale < a < 2.0 * scale


def test_containment_alpha_inflates_with_epsilon(grushin_form):
    radii = [0.25]
    alphas = []
    for eps in (0.3, 0.15, 0.05):
        f = solve_distance(grushin_form, (128, 128), eps)
        alphas.append(containment_check(f, radii).alphas[0])
    assert alphas[0] >= alphas[1] >= alphas[2]


def test_volume_curve_monotone_everywhere(paper_field_origin):
    radii = list(np.geomspace(0.12, 0.4, 12))
    analytics = volume_curve(paper_field_origin, radii)
    assert np.all(np.diff(analytics.volumes) >= 0)
    assert np.all(analytics.volumes > 0)
