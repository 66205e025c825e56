"""Ball-measure analytics: volume curves, non-doubling order, boxes.

Volumes are cell-count Lebesgue measure: |B(x, r)| = #{nodes with d < r} *
cell area.  The non-doubling order delta_x(r) is the smallest radius
increment with |B(r + delta)| / |B(r)| >= 5/4, found by bisection on the
monotone volume function; the upper window |B(r + delta)|/|B(r)| <= 2C is
enforced by calibrating C.  All r -> 0 statements become trend tests on the
resolvable dyadic band: balls below the node floor are refused outright.
"""

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import DomainError, GeometryError, RangeError, ResolutionError
from .metric import ball

MIN_BALL_NODES = 25
RATIO_LOW = 1.25          # the 5/4 side of the non-doubling window


@dataclass
class BallAnalytics:
    """Per-center volume curve and derived non-doubling quantities."""

    center: tuple
    radii: np.ndarray
    volumes: np.ndarray
    cell_area: float
    doubling_ratios: np.ndarray        # |B(2r)|/|B(r)|, nan where 2r out of range
    delta_curve: np.ndarray = None     # filled by fill_delta_curve
    delta_capped: np.ndarray = None    # True where delta hit the r cap
    C_doubling: float = None
    _sorted: np.ndarray = dc_field(default=None, repr=False)

    def volume_at(self, s):
        """|B(center, s)| for arbitrary s from the cached value distribution."""
        count = np.searchsorted(self._sorted, s, side="left")
        return float(count) * self.cell_area

    def count_at(self, s):
        return int(np.searchsorted(self._sorted, s, side="left"))


def volume_curve(field, radii, min_nodes=MIN_BALL_NODES):
    """Measure |B(center, r)| over the given radii.

    Raises ResolutionError when any requested ball holds fewer than
    min_nodes nodes (volume quantization would dominate).
    """
    radii = np.asarray(sorted(float(r) for r in radii))
    if radii[0] <= 0:
        raise DomainError("radii must be positive")
    sv = np.sort(field.values[np.isfinite(field.values)].ravel())
    counts = np.searchsorted(sv, radii, side="left")
    if counts.min() < min_nodes:
        r_bad = radii[int(np.argmin(counts))]
        raise ResolutionError(
            f"ball at r={r_bad:g} holds {counts.min()} nodes "
            f"(< {min_nodes}); below the resolution floor")
    area = field.grid.cell_area
    volumes = counts.astype(float) * area
    ratios = np.full(radii.shape, np.nan)
    rmax = sv[-1]
    for k, r in enumerate(radii):
        if 2.0 * r <= rmax:
            c2 = np.searchsorted(sv, 2.0 * r, side="left")
            if counts[k] > 0:
                ratios[k] = c2 / counts[k]
    return BallAnalytics(center=field.source, radii=radii, volumes=volumes,
                         cell_area=area, doubling_ratios=ratios, _sorted=sv)


def nondoubling_order(analytics, r, C=2.0, resolution=None):
    """Smallest delta with |B(r+delta)| / |B(r)| >= 5/4 (bisection).

    Returns (delta, capped, C_used).  delta is capped at r (doubling at that
    scale) when even |B(2r)|/|B(r)| < 5/4 never happens below the cap.  The
    <= 2C side is asserted for the found delta; when violated, C is raised to
    ratio/2 and returned so the caller can record the calibration.
    """
    if C <= 1.0:
        raise DomainError("C must exceed 1")
    radii = analytics.radii
    if not (radii[0] <= r <= radii[-1]):
        raise RangeError(f"r={r:g} outside measured range "
                         f"[{radii[0]:g}, {radii[-1]:g}]")
    v_r = analytics.volume_at(r)
    if v_r <= 0:
        raise ResolutionError(f"empty ball at r={r:g}")
    s_max = float(analytics._sorted[-1])
    target = RATIO_LOW * v_r
    if resolution is None:
        resolution = max(1e-12, (radii[-1] - radii[0]) * 1e-9)

    def vol(s):
        return analytics.volume_at(s)

    hi_limit = min(r + r, s_max, radii[-1] + (radii[-1] - radii[0]))
    if vol(min(2.0 * r, s_max)) < target and vol(hi_limit) < target:
        if 2.0 * r > s_max and vol(s_max) < target:
            raise RangeError(
                f"delta search at r={r:g} exits the measured range "
                f"(max radius {s_max:g})")
        return r, True, C
    lo, hi = 0.0, hi_limit - r
    if vol(r + hi) < target:
        raise RangeError(f"delta search at r={r:g} exits the measured range")
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if vol(r + mid) >= target:
            hi = mid
        else:
            lo = mid
    delta = hi
    capped = delta >= r
    if capped:
        delta = r
    ratio = vol(r + delta) / v_r
    C_used = C
    if ratio > 2.0 * C:
        C_used = ratio / 2.0
    return float(delta), bool(capped), float(C_used)


def fill_delta_curve(analytics, C=2.0):
    """Extract delta(r) at every measured radius; calibrates C_doubling."""
    deltas, caps = [], []
    C_run = C
    for r in analytics.radii:
        d, capped, C_run = nondoubling_order(analytics, float(r), max(C_run, C))
        deltas.append(d)
        caps.append(capped)
    analytics.delta_curve = np.asarray(deltas)
    analytics.delta_capped = np.asarray(caps, dtype=bool)
    analytics.C_doubling = C_run
    return analytics


def doubling_classification(analytics, slope_tol=0.25):
    """Doubling verdict for the band: delta(r)/r not decaying toward 0.

    Fits the log-log slope of delta(r)/r against r; a slope below slope_tol
    in magnitude (flat) or negative (growing as r decreases) classifies the
    band as doubling at the measured scales.
    """
    if analytics.delta_curve is None:
        raise GeometryError("delta curve not filled")
    t = analytics.delta_curve / analytics.radii
    mask = t > 0
    if mask.sum() < 2:
        raise ResolutionError("not enough delta samples to classify")
    slope = np.polyfit(np.log(analytics.radii[mask]), np.log(t[mask]), 1)[0]
    return bool(slope <= slope_tol), float(slope)


@dataclass(frozen=True)
class GrowthReport:
    radii: np.ndarray
    g_values: np.ndarray       # g(r), underflows to 0 when (r/delta)^lam > ~700
    log_g: np.ndarray          # ln g(r), always finite; trend runs on this
    increasing: bool
    first_third_max: float
    last_third_min: float


def growth_condition_check(radii, deltas, lam, C):
    """Trend test of g(r) = ln r * ln(1 - exp(-(r/delta)^lambda) / (2C)).

    radii must decrease toward the resolution floor.  The condition holds
    when g increases toward +inf as r -> 0; the desk-scale surrogate is
    min(last third) > max(first third) on the decreasing-r sequence.

    g is strictly positive but collapses below float resolution as soon as
    (r/delta)^lambda exceeds ~700, so the comparison runs on ln g computed
    stably:  ln g = ln|ln r| + ln(-ln(1 - inner)),  with the second term
    replaced by its asymptote -(r/delta)^lambda - ln(2C) once inner
    underflows.
    """
    radii = np.asarray(radii, dtype=float)
    deltas = np.asarray(deltas, dtype=float)
    if radii.ndim != 1 or radii.shape != deltas.shape or radii.size < 3:
        raise DomainError("need matched r/delta sequences of length >= 3")
    if np.any(np.diff(radii) >= 0):
        raise DomainError("radii must strictly decrease")
    if np.any(deltas <= 0):
        raise DomainError("delta values must be positive")
    if np.any(radii >= 1.0):
        raise DomainError("growth condition is a small-r test; need r < 1")
    power = np.power(radii / deltas, lam)
    with np.errstate(over="ignore", under="ignore"):
        inner = np.exp(-power) / (2.0 * C)
    g = np.log(radii) * np.log1p(-inner)
    log_abs_lnr = np.log(np.abs(np.log(radii)))
    with np.errstate(divide="ignore"):
        tail = np.where(inner > 1e-280,
                        np.log(-np.log1p(-np.maximum(inner, 1e-300))),
                        -power - math.log(2.0 * C))
    log_g = log_abs_lnr + tail
    third = max(1, radii.size // 3)
    first_max = float(np.max(log_g[:third]))
    last_min = float(np.min(log_g[-third:]))
    return GrowthReport(radii=radii, g_values=g, log_g=log_g,
                        increasing=bool(last_min > first_max),
                        first_third_max=first_max, last_third_min=last_min)


@dataclass(frozen=True)
class BoxReport:
    r: float
    inner_checked: int
    inner_violations: int
    outer_checked: int
    outer_violations: int

    @property
    def ok(self):
        return self.inner_violations == 0 and self.outer_violations == 0


def box_sandwich(field, r, profile, collar_cells=1.0):
    """Check the box sandwich  Q~_r subset B_r subset Q_r  for an axis center.

    Q_r  = [-r, r] x [y0 - r f(r/2), y0 + r f(r/2)]
    Q~_r = [r/2, 3r/4] x [y0 - (r/4) f(r/2), y0 + (r/4) f(r/2)]

    Nodes within collar_cells of a box face are excluded (discretization
    collar); report-only, returns violation counts.
    """
    grid = field.grid
    cx, cy = grid.node_xy(field.source)
    if abs(cx) > 0.5 * grid.hx:
        raise DomainError("box_sandwich requires a center on the x = 0 axis")
    fr2 = profile.value(r / 2.0)
    X, Y = grid.meshgrid()
    dx_col = collar_cells * grid.hx
    dy_col = collar_cells * grid.hy
    d = field.values

    # inner box, shrunk by the collar: all nodes must satisfy d < r
    inner = ((X >= cx + r / 2.0 + dx_col) & (X <= cx + 0.75 * r - dx_col)
             & (np.abs(Y - cy) <= 0.25 * r * fr2 - dy_col))
    inner_bad = inner & ~(d < r)

    # ball must stay inside the outer box inflated by the collar
    in_ball = d < r
    outside_outer = ((np.abs(X - cx) > r + dx_col)
                     | (np.abs(Y - cy) > r * fr2 + dy_col))
    outer_bad = in_ball & outside_outer

    return BoxReport(r=float(r),
                     inner_checked=int(inner.sum()),
                     inner_violations=int(inner_bad.sum()),
                     outer_checked=int(in_ball.sum()),
                     outer_violations=int(outer_bad.sum()))


@dataclass(frozen=True)
class ContainmentReport:
    radii: np.ndarray
    outer_violations: np.ndarray   # nodes of B(x, r) beyond E(x, r) + collar
    alphas: np.ndarray             # largest rho with E(x, rho) subset B(x, r)

    @property
    def ok(self):
        return bool(np.all(self.outer_violations == 0) & np.all(self.alphas > 0))


def containment_check(field, radii, collar_cells=1.0):
    """Verify B(x, r) subset E(x, r) (C = 1) and extract alpha_x(r).

    alpha_x(r) is the largest Euclidean radius rho with E(x, rho) subset
    B(x, r); positivity at every sampled r witnesses topology equivalence.
    """
    grid = field.grid
    eu = grid.euclid_from(field.source)
    collar = collar_cells * math.hypot(grid.hx, grid.hy)
    radii = np.asarray(sorted(float(r) for r in radii))
    outer = np.zeros(radii.size, dtype=int)
    alphas = np.zeros(radii.size)
    for k, r in enumerate(radii):
        mask = ball(field, r)
        outer[k] = int(np.count_nonzero(mask & (eu > r + collar)))
        not_in = ~mask
        if np.any(not_in):
            alphas[k] = float(eu[not_in].min())
        else:
            alphas[k] = float(eu.max())
    return ContainmentReport(radii=radii, outer_violations=outer, alphas=alphas)


def doubling_chain_bounds(analytics, r, C=None):
    """Chain bounds on |B(2r)|/|B(r)| from the non-doubling window.

    Returns (measured_ratio, upper_bound, lower_bound) with
    upper = (2C)^(r/delta(r) + 1) and lower = (5/4)^(r/delta(2r) - 1),
    computed in logs to survive huge exponents.
    """
    if analytics.delta_curve is None:
        raise GeometryError("delta curve not filled")
    if C is None:
        C = analytics.C_doubling
    radii = analytics.radii
    k = int(np.argmin(np.abs(radii - r)))
    d_r, _, _ = nondoubling_order(analytics, float(r), C)
    measured = analytics.volume_at(2.0 * r) / analytics.volume_at(r)
    log_upper = (r / d_r + 1.0) * math.log(2.0 * C)
    if 2.0 * r <= radii[-1]:
        d_2r, _, _ = nondoubling_order(analytics, min(2.0 * r, radii[-1]), C)
        log_lower = (r / d_2r - 1.0) * math.log(RATIO_LOW)
    else:
        log_lower = -math.inf
    upper = math.exp(log_upper) if log_upper < 700 else math.inf
    lower = math.exp(log_lower) if log_lower > -700 else 0.0
    return float(measured), upper, lower
