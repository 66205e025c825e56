"""Declarative experiment configuration: validation and lossless round-trip.

A config is one JSON document.  Lengths are in domain units, angles none,
radii in metric units of the subunit distance.  Validation failures carry
the dotted field path for the CLI's exit-1 message.
"""

import json
from dataclasses import asdict, dataclass, field as dc_field

from .errors import ConfigError
from .forms import DegeneracyProfile, lambda_from_sigma
from .grid import GridSpec

SCHEMA_VERSION = "1"


@dataclass
class BallSpec:
    center: tuple          # (x, y) in domain coordinates
    r: float
    on_axis: bool = False  # run box-sandwich checks (requires x = 0)

    def validate(self, path):
        if self.r <= 0:
            raise ConfigError("ball radius must be positive", f"{path}.r")
        if self.on_axis and abs(self.center[0]) > 1e-12:
            raise ConfigError("on_axis ball must sit at x = 0",
                              f"{path}.center")


@dataclass
class Params:
    sigma: float = 2.0
    nu: float = 0.5
    nu0: float = 0.5
    mu: float = 0.5
    eta: float = 0.25
    C: float = 2.0
    gamma: float = 1.0
    lam: float = None          # defaults to (5 sigma - 1)/(sigma - 1)
    j_max: int = 12
    # pin cutoff increments to frac*r instead of the measured delta: keeps
    # ramp geometry identical across grid resolutions (refinement compares)
    cutoff_delta_frac: float = None

    def validate(self, path="params"):
        if self.cutoff_delta_frac is not None and \
                not 0.0 < self.cutoff_delta_frac < 1.0:
            raise ConfigError("cutoff_delta_frac must lie in (0, 1)",
                              f"{path}.cutoff_delta_frac")
        if self.sigma <= 1:
            raise ConfigError("sigma must exceed 1", f"{path}.sigma")
        for name in ("nu", "nu0", "mu"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1)", f"{path}.{name}")
        if not 0.0 < self.eta <= 1.0:
            raise ConfigError("eta must lie in (0, 1]", f"{path}.eta")
        if self.C <= 1.0:
            raise ConfigError("C must exceed 1", f"{path}.C")
        if self.gamma == 0 or abs(self.gamma) > 2:
            raise ConfigError("gamma must satisfy 0 < |gamma| <= 2",
                              f"{path}.gamma")
        if self.lam is None:
            self.lam = lambda_from_sigma(self.sigma)
        if self.lam <= 1:
            raise ConfigError("lambda must exceed 1", f"{path}.lam")
        if self.j_max < 1:
            raise ConfigError("j_max must be positive", f"{path}.j_max")


@dataclass
class SolverSpec:
    theta: float = 0.7
    fp_tol: float = 1e-9
    fp_max_iter: int = 40
    lin_tol: float = 1e-12
    lin_max_iter: int = 40000
    boundary: dict = dc_field(default_factory=lambda: {
        "kind": "affine", "ax": 1.0, "by": 0.0, "c": 2.0})
    rhs: float = 0.0
    quasilinear: bool = True
    phi_bounds: tuple = (1.0, 3.0)

    def validate(self, path="solver"):
        if not 0.0 < self.theta <= 1.0:
            raise ConfigError("theta must lie in (0, 1]", f"{path}.theta")
        if self.fp_tol <= 0 or self.lin_tol <= 0:
            raise ConfigError("tolerances must be positive", f"{path}.tol")
        kind = self.boundary.get("kind")
        if kind not in ("affine", "trig"):
            raise ConfigError("boundary.kind must be affine or trig",
                              f"{path}.boundary.kind")


@dataclass
class ExperimentConfig:
    name: str
    profile: dict
    grid: dict
    balls: list
    epsilons: dict = dc_field(default_factory=lambda: {"eps0": 0.1, "rungs": 4})
    radii: dict = dc_field(default_factory=lambda: {"r_max": 0.4, "count": 5})
    params: Params = dc_field(default_factory=Params)
    solver: SolverSpec = dc_field(default_factory=SolverSpec)
    required_flags: list = dc_field(default_factory=list)
    compare_budgets: dict = dc_field(default_factory=lambda: {"default": 0.30})
    seed: int = 0

    def validate(self):
        if not self.name:
            raise ConfigError("experiment needs a name", "name")
        kind = self.profile.get("kind")
        if kind not in ("constant", "power", "exponential", "paper_model"):
            raise ConfigError(f"unknown profile kind {kind!r}", "profile.kind")
        if "param" not in self.profile:
            raise ConfigError("profile.param missing", "profile.param")
        g = self.grid
        for key in ("x0", "x1", "y0", "y1", "nx", "ny"):
            if key not in g:
                raise ConfigError(f"grid.{key} missing", f"grid.{key}")
        if g["nx"] < 17 or g["ny"] < 17:
            raise ConfigError("grid too coarse for any measurement",
                              "grid.nx/ny")
        if not self.balls:
            raise ConfigError("need at least one ball", "balls")
        for k, b in enumerate(self.balls):
            b.validate(f"balls[{k}]")
        e = self.epsilons
        if e.get("eps0", 0) <= 0 or e.get("rungs", 0) < 3:
            raise ConfigError("epsilon ladder needs eps0 > 0 and >= 3 rungs",
                              "epsilons")
        if self.radii.get("count", 0) < 3 or self.radii.get("r_max", 0) <= 0:
            raise ConfigError("radii spec needs r_max > 0 and count >= 3",
                              "radii")
        self.params.validate()
        self.solver.validate()
        return self

    # -- construction helpers ------------------------------------------------

    def make_grid(self):
        g = self.grid
        return GridSpec(g["x0"], g["x1"], g["y0"], g["y1"],
                        int(g["nx"]), int(g["ny"]))

    def make_profile(self):
        kw = {}
        if "domain_cap" in self.profile:
            kw["domain_cap"] = self.profile["domain_cap"]
        return DegeneracyProfile(kind=self.profile["kind"],
                                 param=float(self.profile["param"]), **kw)

    def epsilon_ladder(self):
        e0 = float(self.epsilons["eps0"])
        return [e0 * 2.0 ** (-k) for k in range(int(self.epsilons["rungs"]))]

    def dyadic_radii(self):
        r = float(self.radii["r_max"])
        return [r * 2.0 ** (-k) for k in range(int(self.radii["count"]))]

    # -- serialization -------------------------------------------------------

    def to_dict(self):
        d = asdict(self)
        d["balls"] = [{"center": list(b.center), "r": b.r, "on_axis": b.on_axis}
                      for b in self.balls]
        d["solver"]["phi_bounds"] = list(self.solver.phi_bounds)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        try:
            balls = [BallSpec(center=tuple(b["center"]), r=float(b["r"]),
                              on_axis=bool(b.get("on_axis", False)))
                     for b in d.get("balls", [])]
            params = Params(**d.get("params", {}))
            sv = dict(d.get("solver", {}))
            if "phi_bounds" in sv:
                sv["phi_bounds"] = tuple(sv["phi_bounds"])
            solver = SolverSpec(**sv)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed config: {exc}", "config") from exc
        cfg = cls(name=d.get("name", ""), profile=d.get("profile", {}),
                  grid=d.get("grid", {}), balls=balls,
                  epsilons=d.get("epsilons", {"eps0": 0.1, "rungs": 4}),
                  radii=d.get("radii", {"r_max": 0.4, "count": 5}),
                  params=params, solver=solver,
                  required_flags=list(d.get("required_flags", [])),
                  compare_budgets=dict(d.get("compare_budgets",
                                             {"default": 0.30})),
                  seed=int(d.get("seed", 0)))
        return cfg.validate()

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}", "config") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}", "config") from exc
        return cls.from_dict(raw)

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
