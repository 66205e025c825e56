"""Experiment runner: forms -> metric -> geometry -> cutoff -> solver ->
diagnostics, persisting a deterministic artifact tree.

Artifact layout under the output directory:

    distances/    finest-eps field per ball (x, y, value CSV)
    balls/        per-ball radius table (r, volume, doubling_ratio, delta,
                  delta_over_r, g_of_r)
    cutoffs/      per-j cutoff table and nesting diagram
    solutions/    linear/quasilinear solutions and residual history
    diagnostics/  per-ball JSON with all constants and pass flags
    plots/        self-contained SVG charts
    report.json   the deterministic report (no timestamps)
    run_meta.json wall-clock metadata, excluded from the determinism contract

The PDE is solved once per experiment; ball pipelines (metric, geometry,
cutoffs, diagnostics) are independent and can run on worker threads.
"""

import json
import math
import os
import time

import numpy as np

from . import geometry, svgplot
from .cutoff import build_sequence, build_special_cutoff
from .diagnostics import (caccioppoli_ratio, harnack_check, local_bound_check,
                          log_c_har, log_estimate, moser_iterate,
                          oscillation_curve, shift_m)
from .errors import (ChainTooShortError, GeometryError, RangeError,
                     ResolutionError)
from .forms import QuasilinearEnvelope, assemble_form, envelope_check
from .metric import ball, extrapolate_distance, solve_ladder
from .reporting import SCHEMA_VERSION, json_safe, write_csv, write_report
from .solver import (DiscreteFunction, SolveConfig, assemble_linear,
                     max_principle_slack, poincare_functional, solve_linear,
                     solve_quasilinear, sobolev_functional)

MIN_CHAIN = 4
MP_TOL = 1e-8


def _boundary_fn(spec):
    kind = spec.get("kind", "affine")
    if kind == "affine":
        ax, by, c = spec.get("ax", 1.0), spec.get("by", 0.0), spec.get("c", 2.0)
        return lambda X, Y: ax * X + by * Y + c
    amp = spec.get("amp", 0.5)
    kx, ky = spec.get("kx", 1.0), spec.get("ky", 1.0)
    c = spec.get("c", 2.0)
    return lambda X, Y: c + amp * np.sin(math.pi * kx * X) * np.cos(math.pi * ky * Y)


def _adaptive_radii(field, r_lo_hint, r_hi, n=24,
                    min_nodes=geometry.MIN_BALL_NODES):
    """Geometric radius band [smallest resolvable, r_hi] for the volume curve."""
    sv = np.sort(field.values[np.isfinite(field.values)].ravel())
    if sv.size < min_nodes:
        raise ResolutionError("field resolves fewer nodes than the floor")
    r_floor = float(sv[min_nodes - 1]) * 1.0001
    lo = max(r_lo_hint, r_floor)
    if lo >= r_hi:
        lo = r_floor
    if lo >= r_hi:
        raise ResolutionError(f"no resolvable radius band below {r_hi:g}")
    return list(np.geomspace(lo, r_hi, n))


def _delta_at(analytics, r):
    base_c = analytics.C_doubling if analytics.C_doubling else 2.0
    d, capped, _ = geometry.nondoubling_order(analytics, r, base_c)
    return d, capped


FLAT_SLOPE_TOL = 0.1
FIT_MIN_NODES = 150      # the 5/4 jump needs ~40 cells to be trustworthy


def _fitted_delta_law(analytics):
    """Power-law fit delta(r) = c r^(s+1) of the measured non-doubling order.

    The growth condition amplifies per-radius quantization noise by
    lambda (r/delta)^lambda, so trend checks must run on the fitted law,
    not raw samples.  The fit drops radii whose balls are too small to
    resolve the 5/4 jump and uses a median-of-pairwise-slopes estimate; a
    slope within the noise band is snapped to the flat (doubling) law,
    where the verdict would otherwise flip on the sign of pure noise.
    Returns (c, s) or None."""
    r = analytics.radii
    t = analytics.delta_curve / r
    mask = t > 0
    counts = np.array([analytics.count_at(float(x)) for x in r])
    strict = mask & (counts >= FIT_MIN_NODES)
    if strict.sum() >= 4:
        mask = strict
    if mask.sum() < 3:
        return None
    lr, lt = np.log(r[mask]), np.log(t[mask])
    slopes = [(lt[j] - lt[i]) / (lr[j] - lr[i])
              for i in range(len(lr)) for j in range(i + 1, len(lr))]
    s = float(np.median(slopes))
    if abs(s) <= FLAT_SLOPE_TOL:
        s = 0.0
    lnc = float(np.median(lt - s * lr))
    return math.exp(lnc), s


def solve_global(cfg, form):
    """One linear + optional quasilinear solve shared by all balls."""
    bc = _boundary_fn(cfg.solver.boundary)
    sc = SolveConfig(rhs=cfg.solver.rhs, boundary=bc,
                     fp_theta=cfg.solver.theta, fp_tol=cfg.solver.fp_tol,
                     fp_max_iter=cfg.solver.fp_max_iter,
                     lin_tol=cfg.solver.lin_tol,
                     lin_max_iter=cfg.solver.lin_max_iter)
    system = assemble_linear(form.q11, form.q22, form.grid, sc.rhs, sc.boundary)
    u_lin = solve_linear(system, sc)
    f_is_zero = np.ndim(sc.rhs) == 0 and float(sc.rhs) == 0.0
    mp = max_principle_slack(u_lin, system) if f_is_zero else 0.0
    spread = float(np.ptp(system.boundary_values)) or 1.0

    env = QuasilinearEnvelope(base=form, c_phi=cfg.solver.phi_bounds[0],
                              C_phi=cfg.solver.phi_bounds[1])
    rng = np.random.default_rng(cfg.seed)
    nodes = [(int(i), int(j)) for i, j in
             zip(rng.integers(0, form.grid.nx, 40),
                 rng.integers(0, form.grid.ny, 40))]
    zs = rng.normal(0.0, 2.0, 40)
    env_report = envelope_check(env, list(zip(nodes, zs)))
    q_result = solve_quasilinear(env, sc) if cfg.solver.quasilinear else None

    info = {
        "linear_max_principle_slack": mp,
        "max_principle_ok": bool(mp <= MP_TOL * spread) if f_is_zero else True,
        "envelope_max_violation": env_report.max_violation,
    }
    if q_result is not None:
        info["quasilinear_converged"] = bool(q_result.converged)
        info["quasilinear_iterations"] = q_result.iterations
    return sc, u_lin, q_result, info


def run_ball(cfg, form, profile, spec, ball_id, u, f_rhs, threads=1):
    """Metric + geometry + cutoff + diagnostics for one ball."""
    grid = form.grid
    p = cfg.params
    source = grid.nearest_node(*spec.center)
    ladder = solve_ladder(form, source, cfg.epsilon_ladder(), threads=threads)
    finest = ladder[-1]
    limit = extrapolate_distance(ladder)
    increments = ladder[-1].values - ladder[-2].values
    metric_report = {
        "eps_min": ladder[-1].epsilon,
        "max_last_increment": float(np.nanmax(np.where(
            np.isfinite(increments), increments, np.nan))),
        "unreachable_nodes": int(np.count_nonzero(~limit.frozen_mask)),
    }

    margin = grid.boundary_distance(source)
    r_cap = min(2.05 * spec.r, 0.98 * margin)
    radii = _adaptive_radii(finest, spec.r / 16.0, r_cap)
    for must in (p.nu0 * spec.r, p.nu * spec.r, spec.r):
        if radii[0] <= must <= r_cap:
            radii.append(must)
    radii = sorted(set(radii))
    analytics = geometry.volume_curve(finest, radii)
    geometry.fill_delta_curve(analytics, p.C)
    try:
        doubling, slope = geometry.doubling_classification(analytics)
    except (ResolutionError, GeometryError):
        doubling, slope = False, float("nan")

    growth = None
    law = _fitted_delta_law(analytics)
    if law is not None:
        c_fit, s_fit = law
        fitted = c_fit * analytics.radii ** (s_fit + 1.0)
        dec = slice(None, None, -1)
        growth = geometry.growth_condition_check(
            analytics.radii[dec], fitted[dec], p.lam, p.C)

    cont_radii = [r for r in cfg.dyadic_radii() if radii[0] <= r <= r_cap]
    cont = geometry.containment_check(finest, cont_radii or [spec.r])

    box_reports = []
    if spec.on_axis:
        for r in cfg.dyadic_radii():
            if r <= 0.98 * margin:
                box_reports.append(geometry.box_sandwich(finest, r, profile))

    geometry_report = {
        "radii": analytics.radii.tolist(),
        "volumes": analytics.volumes.tolist(),
        "doubling_ratios": analytics.doubling_ratios.tolist(),
        "delta": analytics.delta_curve.tolist(),
        "delta_over_r": (analytics.delta_curve / analytics.radii).tolist(),
        "C_doubling": analytics.C_doubling,
        "doubling_classified": doubling,
        "delta_slope": slope,
        "growth_increasing": bool(growth.increasing) if growth else None,
        "containment_ok": bool(cont.ok),
        "alphas": cont.alphas.tolist(),
        "box": [{"r": b.r, "inner_violations": b.inner_violations,
                 "outer_violations": b.outer_violations,
                 "inner_checked": b.inner_checked,
                 "outer_checked": b.outer_checked} for b in box_reports],
    }

    delta_nu, _ = _delta_at(analytics, p.nu * spec.r)
    delta_r, _ = _delta_at(analytics, spec.r)
    # cutoff ramps must span a few cells or discrete gradients quantize to
    # 1/h; pin to frac*r when configured, else apply a resolution floor
    ramp_floor = 3.0 * max(grid.hx, grid.hy)
    if p.cutoff_delta_frac is not None:
        delta_nu_used = p.cutoff_delta_frac * spec.r
        delta_r_used = p.cutoff_delta_frac * spec.r
    else:
        delta_nu_used = min(max(delta_nu, 2.0 * ramp_floor / (1.0 - p.nu)),
                            0.8 * spec.r)
        delta_r_used = min(max(delta_r, 2.0 * ramp_floor), 0.8 * spec.r)
    seq = build_sequence(finest, form, spec.r, p.nu, delta_nu_used, p.j_max)
    special = build_special_cutoff(finest, form, spec.r, delta_r_used, p.eta)
    cutoff_report = {
        "n_members": len(seq.psi),
        "support_ratio": seq.support_ratio,
        "grad_envelope": seq.grad_envelope,
        "grad_bounds": seq.grad_bounds,
        "radii": seq.radii,
        "delta_measured": delta_nu,
        "delta_used": delta_nu_used,
        "special_delta_used": delta_r_used,
        "special_grad_constant": special.grad_constant,
    }

    m = shift_m(u.values, f_rhs, spec.r)
    psi1 = seq.psi[0]
    ball_r = ball(finest, spec.r)
    cacc = caccioppoli_ratio(DiscreteFunction(grid, u.values + m), psi1, 1.0,
                             form, f_rhs)
    sob = sobolev_functional(form, psi1, ball_r, spec.r, p.sigma)
    poi = poincare_functional(form, u, ball_r, spec.r)
    moser = moser_iterate(u, finest, spec.r, p.gamma, p.sigma, p.nu, seq,
                          f_rhs, delta_nu_r=delta_nu_used, m=m)
    logest = log_estimate(u, finest, spec.r, delta_r_used, special, form,
                          f_rhs, m=m)
    delta_nu0, _ = _delta_at(analytics, p.nu0 * spec.r)
    har = harnack_check(u, finest, spec.r, p.nu0, p.sigma, delta_nu0,
                        C_cal=math.e, f_rhs=f_rhs, m=m)
    lb = local_bound_check(u, finest, spec.r, p.nu, p.sigma, delta_nu, f_rhs)

    chain = []
    rr = spec.r
    sv = np.sort(finest.values[np.isfinite(finest.values)].ravel())
    while np.searchsorted(sv, rr, side="left") >= geometry.MIN_BALL_NODES:
        chain.append(rr)
        rr *= p.nu0
    osc = None
    chain_short = len(chain) < MIN_CHAIN
    if not chain_short:
        # the Harnack constant down the chain uses the fitted delta law:
        # nu0*r leaves the measured band and per-radius deltas are noise
        # under the huge exponent anyway
        if law is not None:
            c_fit, s_fit = law
            delta_of = lambda s: c_fit * s ** (s_fit + 1.0)
        else:
            delta_of = lambda s: _delta_at(analytics,
                                           max(s, analytics.radii[0]))[0]
        osc = oscillation_curve(
            u, finest, chain, p.nu0, p.mu,
            lambda r: log_c_har(p.nu0 * r, delta_of(p.nu0 * r), p.sigma,
                                math.e),
            f_rhs)

    diag_report = {
        "caccioppoli_c": cacc,
        "sobolev_c": sob,
        "poincare_c": poi,
        "moser": {"N": moser.N, "passed": bool(moser.passed),
                  "gamma_used": moser.gamma_used, "shifted": moser.shifted,
                  "observed_sup": moser.observed_sup,
                  "raw_bound": moser.raw_bound,
                  "empirical_c": moser.empirical_c,
                  "truncated_at": moser.truncated_at},
        "log_estimates": {"inter": logest.inter_constant,
                          "est1": logest.est1_constant,
                          "est2": logest.est2_constant,
                          "floor_proximity": logest.floor_proximity},
        "harnack": {"quotient": har.quotient, "log_c_har": har.log_c_har,
                    "passed": bool(har.passed), "log_slack": har.log_slack},
        "local_bound_c": lb.empirical_c,
        "oscillation": None if osc is None else {
            "radii": osc.radii.tolist(), "omega": osc.omega.tolist(),
            "alpha": osc.alpha_r.tolist(),
            "log_product": osc.log_product.tolist(),
            "pairs_ok": bool(np.all(osc.pair_ok)),
            "monotone": bool(osc.monotone)},
        "chain_too_short": chain_short,
    }

    constants = {
        "sobolev_c": sob, "poincare_c": poi, "caccioppoli_c": cacc,
        "harnack_quotient": har.quotient,
        "moser_empirical_c": moser.empirical_c,
        "log_est_inter": logest.inter_constant,
        "log_est1": logest.est1_constant, "log_est2": logest.est2_constant,
        "cutoff_support_ratio": seq.support_ratio,
        "cutoff_grad_envelope": seq.grad_envelope,
        "special_grad_constant": special.grad_constant,
        "local_bound_c": lb.empirical_c,
        "delta_over_r_at_r": delta_r / spec.r,
    }

    flags = {
        f"{ball_id}.containment": bool(cont.ok),
        f"{ball_id}.alphas_positive": bool(np.all(cont.alphas > 0)),
        f"{ball_id}.harnack": bool(har.passed),
        f"{ball_id}.moser": bool(moser.passed),
        f"{ball_id}.osc_monotone": bool(osc.monotone) if osc else True,
        f"{ball_id}.osc_pairs": bool(np.all(osc.pair_ok)) if osc else True,
    }
    if growth is not None:
        flags[f"{ball_id}.growth_increasing"] = bool(growth.increasing)
    if box_reports:
        flags[f"{ball_id}.box_sandwich"] = all(b.ok for b in box_reports)

    report = {
        "center": [float(c) for c in spec.center],
        "r": spec.r,
        "metric": metric_report,
        "geometry": geometry_report,
        "cutoff": cutoff_report,
        "diagnostics": diag_report,
        "constants": constants,
    }
    artifacts = {"finest": finest, "limit": limit, "analytics": analytics,
                 "seq": seq, "special": special, "growth": growth}
    return report, flags, artifacts


def run_experiment(cfg, out_dir, threads=1, strict=False):
    """Run the full pipeline; returns (report, failed_required_flags)."""
    t0 = time.time()
    cfg.validate()
    for sub in ("distances", "balls", "cutoffs", "solutions", "diagnostics",
                "plots"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
    grid = cfg.make_grid()
    profile = cfg.make_profile()
    form = assemble_form(profile, grid)

    sc, u_lin, q_result, solver_info = solve_global(cfg, form)
    u = q_result.u if (q_result is not None and q_result.converged) else u_lin

    report = {
        "schema_version": SCHEMA_VERSION,
        "name": cfg.name,
        "config": cfg.to_dict(),
        "grid": {"nx": grid.nx, "ny": grid.ny, "hx": grid.hx, "hy": grid.hy},
        "forms": {"underflow_radius": form.underflow_radius,
                  "profile": cfg.profile},
        "balls": {},
        "solver": {k: v for k, v in solver_info.items()
                   if not isinstance(v, bool)},
        "flags": {"max_principle": solver_info["max_principle_ok"],
                  "quasilinear_converged":
                      solver_info.get("quasilinear_converged", True)},
        "budgets": cfg.compare_budgets,
        "notes": [],
    }

    for k, spec in enumerate(cfg.balls):
        ball_id = f"ball{k}"
        try:
            ball_report, flags, art = run_ball(cfg, form, profile, spec,
                                               ball_id, u, sc.rhs, threads)
        except (ResolutionError, ChainTooShortError, RangeError,
                GeometryError) as exc:
            report["notes"].append(f"{ball_id}: skipped ({exc})")
            report["flags"][f"{ball_id}.skipped"] = True
            continue
        report["balls"][ball_id] = ball_report
        report["flags"].update(flags)
        _write_ball_artifacts(out_dir, ball_id, art, ball_report)

    _write_solution_artifacts(out_dir, grid, u_lin, q_result)
    report = json_safe(report)
    write_report(report, os.path.join(out_dir, "report.json"))
    with open(os.path.join(out_dir, "run_meta.json"), "w") as fh:
        json.dump({"elapsed_seconds": time.time() - t0,
                   "written_at": time.strftime("%Y-%m-%dT%H:%M:%S")}, fh)
        fh.write("\n")
    failed = _failed_flags(report, cfg, strict)
    return report, failed


def _failed_flags(report, cfg, strict):
    flags = report["flags"]
    required = set(cfg.required_flags)
    failed = []
    for name, value in sorted(flags.items()):
        req = strict or name in required or any(
            name.endswith("." + r) for r in required)
        if req and value is False:
            failed.append(name)
    return failed


def _write_solution_artifacts(out, grid, u_lin, q_result):
    X, Y = grid.meshgrid()
    write_csv(os.path.join(out, "solutions", "linear.csv"), ("x", "y", "u"),
              zip(X.ravel(), Y.ravel(), u_lin.values.ravel()))
    svgplot.heatmap(os.path.join(out, "plots", "solution.svg"),
                    u_lin.values, grid, title="linear solution")
    if q_result is not None:
        write_csv(os.path.join(out, "solutions", "quasilinear.csv"),
                  ("x", "y", "u"),
                  zip(X.ravel(), Y.ravel(), q_result.u.values.ravel()))
        write_csv(os.path.join(out, "solutions", "residuals.csv"),
                  ("iteration", "residual"),
                  list(enumerate(q_result.residuals, start=1)))


def _write_ball_artifacts(out, ball_id, art, ball_report):
    grid = art["finest"].grid
    X, Y = grid.meshgrid()

    v = art["finest"].values
    write_csv(os.path.join(out, "distances", f"{ball_id}_finest.csv"),
              ("x", "y", "value"), zip(X.ravel(), Y.ravel(), v.ravel()))

    g = ball_report["geometry"]
    growth = art["growth"]
    gmap = {}
    if growth is not None:
        gmap = dict(zip(growth.radii.tolist(), growth.g_values.tolist()))
    rows = []
    for i, r in enumerate(g["radii"]):
        rows.append((r, g["volumes"][i], g["doubling_ratios"][i],
                     g["delta"][i], g["delta_over_r"][i],
                     gmap.get(r, float("nan"))))
    write_csv(os.path.join(out, "balls", f"{ball_id}.csv"),
              ("r", "volume", "doubling_ratio", "delta", "delta_over_r",
               "g_of_r"), rows)

    seq = art["seq"]
    rows = [(j + 1, seq.radii[j], int(seq.supports[j].sum()),
             seq.grad_bounds[j]) for j in range(len(seq.psi))]
    write_csv(os.path.join(out, "cutoffs", f"{ball_id}.csv"),
              ("j", "r_j", "support_nodes", "grad_bound"), rows)
    svgplot.nesting_diagram(
        os.path.join(out, "cutoffs", f"{ball_id}_nesting.svg"),
        seq.supports[:4], grid, title=f"{ball_id} cutoff supports")

    with open(os.path.join(out, "diagnostics", f"{ball_id}.json"), "w") as fh:
        json.dump(json_safe(ball_report["diagnostics"]), fh, indent=2,
                  sort_keys=True)
        fh.write("\n")

    radii = g["radii"]
    svgplot.line_chart(
        os.path.join(out, "plots", f"{ball_id}_volumes.svg"),
        [("volume", radii, g["volumes"])],
        title=f"{ball_id} volume curve", xlabel="r", ylabel="|B(r)|",
        xlog=True, ylog=True)
    dr = [d if d > 0 else float("nan") for d in g["delta_over_r"]]
    svgplot.line_chart(
        os.path.join(out, "plots", f"{ball_id}_delta.svg"),
        [("delta/r", radii, dr)],
        title=f"{ball_id} non-doubling order", xlabel="r", ylabel="delta/r",
        xlog=True, ylog=True)
    diag = ball_report["diagnostics"]
    if diag["oscillation"] is not None:
        o = diag["oscillation"]
        svgplot.line_chart(
            os.path.join(out, "plots", f"{ball_id}_oscillation.svg"),
            [("omega", o["radii"], o["omega"])],
            title=f"{ball_id} oscillation", xlabel="r", ylabel="omega(r)",
            xlog=True, ylog=False)
    if diag["moser"]["N"]:
        svgplot.line_chart(
            os.path.join(out, "plots", f"{ball_id}_moser.svg"),
            [("N_j", list(range(1, len(diag["moser"]["N"]) + 1)),
              diag["moser"]["N"])],
            title=f"{ball_id} Moser ladder", xlabel="j", ylabel="N_j")
