"""Degeneracy profiles f and the diagonal operator fields they induce.

The model operator is diag(1, f(x)^2) on a rectangular grid.  Profiles:

    constant(c)     f = c
    power(k)        f = |x|^k
    exponential(a)  f = exp(-a/|x|),  f(0) = 0
    paper_model(l)  f = exp(-I(x)),   I(x) = integral_x^1 dt / (t h(t))

with the slowly vanishing helper

    h(x) = (-1 / ln(1 - exp((ln x)^(-1/3))))^(1/l),

where the cube root of the negative number ln x is the real one.  h is
finite and increasing on (0, domain_cap], blows up at 1, and tends to 0
as x -> 0+ far more slowly than any power of ln ln(1/x) would suggest:
h is still ~0.84 at x = exp(-1e6).  The quadrature for I(x) runs in the
log variable t = e^s, where the integrand 1/h(e^s) is smooth and bounded.

A quasilinear envelope multiplies the degenerate entry by a bounded
modulation phi(z), keeping the same form Q as its structural envelope.
"""

import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from .errors import DomainError, QuadratureError
from .grid import GridSpec

DEFAULT_DOMAIN_CAP = 0.9
DEFAULT_QUAD_TOL = 1e-10

# probe directions for quadratic-form comparisons (axes and diagonals)
_S = 1.0 / math.sqrt(2.0)
PROBE_XIS = ((1.0, 0.0), (0.0, 1.0), (_S, _S), (_S, -_S))


def lambda_from_sigma(sigma):
    """Continuity-theorem exponent l = (5*sigma - 1)/(sigma - 1)."""
    if sigma <= 1:
        raise DomainError("sigma must exceed 1")
    return (5.0 * sigma - 1.0) / (sigma - 1.0)


def eval_h(x, lam, domain_cap=DEFAULT_DOMAIN_CAP):
    """Helper h(x) of the slow model; finite, positive, increasing in x.

    Raises DomainError outside (0, domain_cap): the inner logarithm
    degenerates as x -> 1-.
    """
    if not 0.0 < x < domain_cap:
        raise DomainError(f"h defined on (0, {domain_cap}), got x={x}")
    if lam <= 1.0:
        raise DomainError("lambda must exceed 1")
    return eval_h_log(math.log(x), lam, domain_cap)


def eval_h_log(ln_x, lam, domain_cap=DEFAULT_DOMAIN_CAP):
    """h evaluated from ln x, reaching arguments that underflow float64
    (the vanishing tail only bites around x = exp(-1e6))."""
    if not ln_x < math.log(domain_cap):
        raise DomainError(f"need ln x < ln({domain_cap})")
    if lam <= 1.0:
        raise DomainError("lambda must exceed 1")
    # t = (ln x)^(-1/3) < 0; 1 - exp(t) computed as -expm1(t) for accuracy
    t = -abs(ln_x) ** (-1.0 / 3.0)
    inner = -math.expm1(t)
    return (-1.0 / math.log(inner)) ** (1.0 / lam)


def _inv_h_logvar(s, lam):
    # integrand 1/h(e^s) of I(x) in the log variable; 0 at s = 0 (x = 1)
    if s >= -1e-16:
        return 0.0
    t = -abs(s) ** (-1.0 / 3.0)
    inner = -math.expm1(t)
    return (-math.log(inner)) ** (1.0 / lam)


@dataclass(frozen=True)
class DegeneracyProfile:
    """One-dimensional degeneracy factor f, even in x, nondecreasing on R+."""

    kind: str                      # constant | power | exponential | paper_model
    param: float
    domain_cap: float = DEFAULT_DOMAIN_CAP
    quad_tol: float = DEFAULT_QUAD_TOL
    cache: tuple = dc_field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in ("constant", "power", "exponential", "paper_model"):
            raise DomainError(f"unknown profile kind {self.kind!r}")
        if self.kind == "paper_model":
            if not 1.0 < self.param:
                raise DomainError("paper_model lambda must exceed 1")
            if not 0.0 < self.domain_cap < 1.0:
                raise DomainError("domain_cap must lie in (0, 1)")
        if self.kind in ("constant", "power", "exponential") and self.param < 0:
            raise DomainError("profile parameter must be nonnegative")
        object.__setattr__(self, "cache", self._build_cache())

    def _build_cache(self):
        # monotone sample table on a log-spaced positive mesh, refined toward 0
        xs = np.geomspace(1e-6, min(self.domain_cap, 0.89), 49)
        return tuple((float(x), self._value_pos(float(x))) for x in xs)

    def _log_integral(self, x):
        """I(x) = integral_x^1 dt/(t h(t)) via Gauss-Kronrod in s = ln t.

        Split at s = -1: on (-1, 0) the integrand is flat-zero to all orders
        at the endpoint (x near 1), which defeats a single adaptive pass.
        """
        lam = self.param
        lo = math.log(x)
        pieces = [(lo, -1.0), (-1.0, 0.0)] if lo < -1.0 else [(lo, 0.0)]
        val = err = 0.0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", IntegrationWarning)
            for a, b in pieces:
                v, e = quad(_inv_h_logvar, a, b, args=(lam,), limit=200,
                            epsabs=self.quad_tol, epsrel=10.0 * self.quad_tol)
                val += v
                err += e
        budget = 100.0 * self.quad_tol * max(1.0, abs(val))
        if err > budget:
            raise QuadratureError(
                f"I({x}) error estimate {err:.3e} exceeds budget {budget:.3e}")
        return val

    def _value_pos(self, x):
        # x > 0 assumed
        if self.kind == "constant":
            return self.param
        if self.kind == "power":
            return x ** self.param if self.param > 0 else 1.0
        if self.kind == "exponential":
            return math.exp(-self.param / x)
        return math.exp(-self._log_integral(x))

    def value(self, x):
        """f(|x|): even extension, f(0) = 0 for the vanishing profiles."""
        ax = abs(float(x))
        if self.kind == "constant":
            return self.param
        if ax == 0.0:
            return 0.0 if self.kind in ("exponential", "paper_model") else \
                (0.0 if self.param > 0 else 1.0)
        if self.kind == "paper_model" and ax >= self.domain_cap:
            raise DomainError(
                f"paper_model restricted to |x| < {self.domain_cap}, got {x}")
        return self._value_pos(ax)

    def log_value(self, x):
        """ln f(|x|); -inf at a genuine zero.  Usable far below underflow."""
        ax = abs(float(x))
        if ax == 0.0 and self.kind != "constant":
            return -math.inf
        if self.kind == "constant":
            return math.log(self.param)
        if self.kind == "power":
            return self.param * math.log(ax)
        if self.kind == "exponential":
            return -self.param / ax
        if ax >= self.domain_cap:
            raise DomainError(
                f"paper_model restricted to |x| < {self.domain_cap}, got {x}")
        return -self._log_integral(ax)


def eval_f(x, profile):
    """Evaluate a degeneracy profile (even extension)."""
    return profile.value(x)


@dataclass(frozen=True)
class QuadraticFormField:
    """Diagonal nonnegative form Q = diag(q11, q22) sampled on a grid."""

    grid: GridSpec
    q11: np.ndarray
    q22: np.ndarray
    k_lower: float = 1.0
    K_upper: float = 1.0
    profile: DegeneracyProfile | None = None
    underflow_radius: float = 0.0   # largest |x| whose q22 column is exactly 0

    def __post_init__(self):
        if self.q11.shape != self.grid.shape or self.q22.shape != self.grid.shape:
            raise DomainError("q11/q22 shape does not match the grid")
        if np.any(self.q11 < 0) or np.any(self.q22 < 0):
            raise DomainError("form entries must be nonnegative")
        if not self.k_lower <= 1.0 <= self.K_upper:
            raise DomainError("structural constants must satisfy k <= 1 <= K")
        self.q11.setflags(write=False)
        self.q22.setflags(write=False)


def assemble_form(profile, grid):
    """Model field q11 = 1, q22 = f(x)^2 on the grid."""
    xs = grid.xs()
    if profile.kind == "paper_model" and np.max(np.abs(xs)) >= profile.domain_cap:
        raise DomainError("grid x-range exceeds the paper_model domain cap")
    fvals = np.array([profile.value(x) for x in xs])
    q22_col = fvals ** 2
    zero_cols = np.abs(xs)[q22_col == 0.0]
    underflow_radius = float(zero_cols.max()) if zero_cols.size else 0.0
    q11 = np.ones(grid.shape)
    q22 = np.broadcast_to(q22_col[:, None], grid.shape).copy()
    return QuadraticFormField(grid=grid, q11=q11, q22=q22, profile=profile,
                              underflow_radius=underflow_radius)


def default_phi(z):
    """Bounded modulation for the quasilinear demo, range (1, 3)."""
    return 2.0 + np.tanh(z)


@dataclass(frozen=True)
class QuasilinearEnvelope:
    """A(x, z) = diag(q11, phi(z) q22) with declared bounds on phi."""

    base: QuadraticFormField
    phi: callable = default_phi
    c_phi: float = 1.0
    C_phi: float = 3.0

    def __post_init__(self):
        if not 0.0 < self.c_phi <= self.C_phi:
            raise DomainError("phi bounds must satisfy 0 < c_phi <= C_phi")

    @property
    def k_lower(self):
        return min(1.0, self.c_phi)

    @property
    def K_upper(self):
        return max(1.0, self.C_phi)

    def coefficients(self, z):
        """Frozen diagonal (a11, a22) at modulation state z (scalar or array)."""
        return self.base.q11, self.phi(z) * self.base.q22


@dataclass(frozen=True)
class EnvelopeReport:
    max_violation: float
    worst_sample: tuple | None
    n_samples: int

    @property
    def ok(self):
        return self.max_violation <= 0.0


def envelope_check(env, samples, xis=PROBE_XIS):
    """Probe the structural sandwich c_phi*xi'Q xi <= xi'A xi <= C_phi*xi'Q xi.

    samples: iterable of ((i, j), z).  Returns the worst violation over the
    fixed probe set; 0 up to rounding when the declared bounds hold.
    """
    samples = list(samples)
    if not samples:
        raise DomainError("envelope_check needs at least one sample")
    q11, q22 = env.base.q11, env.base.q22
    worst = -math.inf
    worst_sample = None
    for (i, j), z in samples:
        a11, a22 = q11[i, j], float(env.phi(z)) * q22[i, j]
        for xi in xis:
            qv = q11[i, j] * xi[0] ** 2 + q22[i, j] * xi[1] ** 2
            av = a11 * xi[0] ** 2 + a22 * xi[1] ** 2
            scale = max(qv, 1e-300)
            v = max(env.c_phi * qv - av, av - env.C_phi * qv) / scale
            if v > worst:
                worst, worst_sample = v, ((i, j), z)
    return EnvelopeReport(max_violation=max(worst, 0.0),
                          worst_sample=worst_sample if worst > 0 else None,
                          n_samples=len(samples))


def profile_table(profile, xs):
    """(x, f, ln f) rows for CSV export."""
    rows = []
    for x in xs:
        rows.append((float(x), profile.value(x), profile.log_value(x)))
    return rows
