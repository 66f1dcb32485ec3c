"""Reproducible experiment drivers: divergence counterexample, quadratic
saddle-point study with closed-form references, and desk-scale tomography.

Each driver returns a RunReport; emit_report serializes it to per-solver
trace CSVs, a summary JSON, and PGM images under deterministic filenames.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from . import analysis, solvers, stepsize, tomo
from .operators import (
    BlockSkewOperator,
    MatrixOperator,
    MismatchPair,
    ScaledIdentity,
    estimate_operator_norm,
    estimate_sigma_min,
)
from .proximal import ProxFn, project_linf2, prox_box_dual, prox_identity, prox_scaled_quadratic


@dataclass
class QuadraticConfig:
    n: int = 400
    m: int = 200
    alpha: float = 0.15
    beta: float = 1.0
    mismatch_eta: float = 0.15
    theta: float = 0.5
    max_iters: int = 5000
    fixed_point_tol: float = 1e-12
    seed: int = 42


@dataclass
class TomoConfig:
    image_size: int = 64
    num_angles: int = 10
    num_bins: int = 0  # 0 means image_size
    lam0: float = 10.0
    lam1: float = 6.0
    lam2: float = 2.0
    eps: float = 0.1
    noise_rel: float = 0.01
    theta: float = 0.5
    max_iters: int = 5000
    fixed_point_tol: float = 1e-6
    seed: int = 42
    with_oracle: bool = False
    oracle_factor: int = 10


@dataclass
class RunReport:
    experiment: str
    config: dict
    statuses: dict = field(default_factory=dict)
    plan: dict | None = None
    summary: dict = field(default_factory=dict)
    traces: dict = field(default_factory=dict)  # solver -> (columns, rows)
    images: dict = field(default_factory=dict)  # name -> 2d array
    artifact_paths: list = field(default_factory=list)

    @property
    def diverged(self):
        return any(s == "diverged" for s in self.statuses.values())


def _trace_from_result(result):
    """Flatten a RunResult into (columns, rows) with extras appended."""
    columns = list(solvers.TRACE_COLUMNS)
    extra_names = sorted(result.extras)
    columns += extra_names
    rows = []
    for i, row in enumerate(result.trace):
        rows.append(list(row) + [result.extras[name][i] for name in extra_names])
    return tuple(columns), rows


def _empirical_rate(values, window=100, floor=1e-14):
    """Geometric mean contraction factor over the trailing window."""
    vals = [v for v in values if v is not None and v > floor]
    if len(vals) < 2:
        return None
    w = min(window, len(vals) - 1)
    return (vals[-1] / vals[-1 - w]) ** (1.0 / w)


def run_counterexample(dim=10, alpha_mm=0.01, tau=0.1, theta=1.0, seed=7,
                       max_iters=10000, divergence_threshold=1e6):
    """Identity forward map with surrogate adjoint -alpha_mm I.

    With G == 0 and F the l1 norm the mismatched iteration has spectral
    radius above one for any positive alpha_mm and diverges from generic
    starts; alpha_mm = -1 restores the matched method.
    """
    pair = MismatchPair(ScaledIdentity(dim, 1.0), ScaledIdentity(dim, -alpha_mm))
    problem = solvers.SaddleProblem(prox_identity(), prox_box_dual(), pair)
    stepper = solvers.PDDRStepper(problem, tau, theta, mode="mismatched")
    stopping = solvers.StoppingRule(max_iters, fixed_point_tol=1e-12,
                                    divergence_threshold=divergence_threshold)
    state0 = solvers.gaussian_state(problem, seed=seed)
    result = solvers.run(problem, stepper, stopping, initial_state=state0,
                         extra_metrics={"primal_norm": lambda s: np.linalg.norm(s.x)})

    report = RunReport(
        experiment="counterexample",
        config={"dim": dim, "alpha_mm": alpha_mm, "tau": tau, "theta": theta,
                "seed": seed, "max_iters": max_iters,
                "divergence_threshold": divergence_threshold},
    )
    report.statuses["mismatched"] = result.status
    report.traces["mismatched"] = _trace_from_result(result)
    norms = np.asarray(result.extras["primal_norm"])
    half = norms[norms.size // 2:]
    slope = float(np.polyfit(np.arange(half.size), half, 1)[0]) if half.size > 1 else 0.0
    report.summary = {
        "iterations": result.iterations,
        "final_primal_norm": float(np.linalg.norm(result.state.x)),
        "final_governing_norm": float(np.linalg.norm(np.concatenate([result.state.p, result.state.q]))),
        "primal_norm_growth_slope": slope,
        "mismatch_norm": pair.mismatch_norm,
    }
    return report


def _quadratic_operators(config):
    rng = np.random.default_rng(config.seed)
    a = rng.standard_normal((config.m, config.n)) / math.sqrt(config.n)
    e = rng.standard_normal((config.m, config.n))
    if config.mismatch_eta > 0:
        e *= config.mismatch_eta / np.linalg.svd(e, compute_uv=False)[0]
    else:
        e[:] = 0.0
    z = rng.standard_normal(config.m)
    return a, a - e, z


def run_quadratic(config=None):
    """Strongly convex quadratic study with closed-form references.

    Runs matched, mismatched, adapted, and a surrogate-adjoint
    Chambolle-Pock baseline with the certified step size, and records the
    a-priori primal error bound next to the realized distances.
    """
    config = config or QuadraticConfig()
    a_mat, v_mat, z = _quadratic_operators(config)
    pair = MismatchPair(MatrixOperator(a_mat), MatrixOperator(v_mat))
    d = pair.mismatch_norm

    prox_g = prox_scaled_quadratic(config.alpha)
    prox_f = prox_scaled_quadratic(config.beta, shift=z)
    problem = solvers.SaddleProblem(prox_g, prox_f, pair)

    profile = stepsize.ConvexityProfile(config.alpha, config.beta, d)
    mu_g, mu_tg, mu_f, mu_tf = stepsize.select_mus(profile)
    block = BlockSkewOperator(pair, mu_tg, mu_tf)
    b_norm = estimate_operator_norm(block)
    sigma = estimate_sigma_min(block)
    plan = stepsize.compute_plan(profile, config.theta, sigma, b_norm)
    tau, theta = plan.tau, plan.theta

    x_hat, y_hat, x_star = analysis.quadratic_reference(
        a_mat, v_mat, config.alpha, config.beta, z)
    bound = analysis.error_bound(problem, y_hat, gamma_g=config.alpha)

    def objective(x):
        r = a_mat @ x - z
        return 0.5 * config.alpha * float(x @ x) + 0.5 / config.beta * float(r @ r)

    stopping = solvers.StoppingRule(config.max_iters, config.fixed_point_tol)
    dist_true = {"dist_to_true": lambda s: np.linalg.norm(s.x - x_star)}

    report = RunReport(experiment="quadratic", config=asdict(config), plan=plan.as_dict())
    runs = {}
    specs = {
        "matched": (solvers.PDDRStepper(problem, tau, theta, mode="matched"), x_star, None),
        "mismatched": (solvers.PDDRStepper(problem, tau, theta), x_hat, dist_true),
        "adapted": (solvers.PDDRStepper(problem, tau, theta, mu_g=mu_tg, mu_f=mu_tf),
                    x_hat, dist_true),
    }
    for name, (stepper, x_ref, extras) in specs.items():
        res = solvers.run(problem, stepper, stopping, x_ref=x_ref,
                          objective=objective, extra_metrics=extras)
        runs[name] = res
        report.statuses[name] = res.status
        report.traces[name] = _trace_from_result(res)

    norm_a = estimate_operator_norm(pair.forward)
    norm_v = estimate_operator_norm(pair.surrogate)
    step_cp = 0.95 / math.sqrt(norm_a * norm_v)
    cp = solvers.CPStepper(problem, step_cp, step_cp)
    res_cp = solvers.run(problem, cp, stopping, x_ref=x_hat,
                         objective=objective, extra_metrics=dist_true)
    runs["cp"] = res_cp
    report.statuses["cp"] = res_cp.status
    report.traces["cp"] = _trace_from_result(res_cp)

    mm = runs["mismatched"]
    report.summary = {
        "mismatch_norm": d,
        "tau": tau,
        "theta": theta,
        "predicted_rate": stepsize.predicted_rate(plan),
        "empirical_rate": _empirical_rate(mm.distances),
        "error_bound": bound,
        "fixed_point_gap": float(np.linalg.norm(x_hat - x_star)),
        "terminal_dist_to_fixed_point": float(np.linalg.norm(mm.state.x - x_hat)),
        "terminal_dist_to_true": float(np.linalg.norm(mm.state.x - x_star)),
        "cp_step": step_cp,
    }
    return report


def huber_tv_prox(lam0, lam1, eps, z, sino_size, n_pixels):
    """Prox of the stacked dual function for the reconstruction model.

    Dual layout is [data part (sino_size); gradient part (2 n_pixels)].
    The data block is a shifted quadratic; the gradient block is the
    Huber-smoothed dual, a rescale followed by a radial projection.
    """
    z = np.asarray(z, dtype=float)

    def evaluate(dual, tau):
        q = dual[:sino_size]
        p = dual[sino_size:]
        q_new = (q - tau * z) / (1.0 + tau / lam0)
        field = (p / (1.0 + tau * eps)).reshape(2, n_pixels).T
        p_new = project_linf2(field, lam1).T.ravel()
        return np.concatenate([q_new, p_new])

    return ProxFn(evaluate, strong_convexity=min(1.0 / lam0, eps))


def run_tomography(config=None):
    """Regularized reconstruction with a deliberately non-adjoint back end.

    Forward model: ray-driven projector; surrogate adjoint: transpose of a
    pixel-driven projector.  The objective couples a quadratic data term,
    Huber-smoothed isotropic total variation, and Tikhonov regularization,
    giving strong convexity on both sides of the saddle point.
    """
    config = config or TomoConfig()
    num_bins = config.num_bins or config.image_size
    geom = tomo.ParallelGeometry(config.image_size, config.num_angles, num_bins)
    proj = tomo.build_projector_pair(geom)
    pair = proj.mismatch_pair()
    d = pair.mismatch_norm

    n_pix = config.image_size ** 2
    phantom = tomo.shepp_logan_phantom(config.image_size)
    rng = np.random.default_rng(config.seed)
    z = tomo.make_sinogram(proj.radon_forward, phantom, config.noise_rel, rng)

    gamma_f = min(1.0 / config.lam0, config.eps)
    profile = stepsize.ConvexityProfile(config.lam2, gamma_f, d)
    if not profile.exists_unique:
        raise stepsize.CertificateError(
            f"existence condition fails: lam2 * min(1/lam0, eps) = "
            f"{config.lam2 * gamma_f:.4g} <= ||A-V||^2/4 = {0.25 * d * d:.4g}"
        )

    prox_g = prox_scaled_quadratic(config.lam2)
    prox_f = huber_tv_prox(config.lam0, config.lam1, config.eps, z,
                           geom.sinogram_size, n_pix)
    problem = solvers.SaddleProblem(prox_g, prox_f, pair)

    mu_g, mu_tg, mu_f, mu_tf = stepsize.select_mus(profile)
    block = BlockSkewOperator(pair, mu_tg, mu_tf)
    b_norm = estimate_operator_norm(block)
    sigma = estimate_sigma_min(block)
    plan = stepsize.compute_plan(profile, config.theta, sigma, b_norm)
    tau, theta = plan.tau, plan.theta

    grad_mat = proj.gradient.matrix
    radon_mat = proj.radon_forward.matrix

    def objective(x):
        r = radon_mat @ x - z
        g = (grad_mat @ x).reshape(2, n_pix)
        tv = float(np.sum(np.sqrt(np.sum(g * g, axis=0))))
        return (0.5 * config.lam0 * float(r @ r) + config.lam1 * tv
                + 0.5 * config.lam2 * float(x @ x))

    stopping = solvers.StoppingRule(config.max_iters, config.fixed_point_tol)

    report = RunReport(experiment="tomo", config=asdict(config), plan=plan.as_dict())
    runs = {}
    specs = {
        "matched": solvers.PDDRStepper(problem, tau, theta, mode="matched"),
        "mismatched": solvers.PDDRStepper(problem, tau, theta),
        "adapted": solvers.PDDRStepper(problem, tau, theta, mu_g=mu_tg, mu_f=mu_tf),
    }
    x_ref = phantom.ravel()
    for name, stepper in specs.items():
        res = solvers.run(problem, stepper, stopping, x_ref=x_ref, objective=objective)
        runs[name] = res
        report.statuses[name] = res.status
        report.traces[name] = _trace_from_result(res)

    norm_a = estimate_operator_norm(pair.forward)
    norm_v = estimate_operator_norm(pair.surrogate)
    step_cp = 0.95 / math.sqrt(norm_a * norm_v)
    cp = solvers.CPStepper(problem, step_cp, step_cp)
    res_cp = solvers.run(problem, cp, stopping, x_ref=x_ref, objective=objective)
    runs["cp"] = res_cp
    report.statuses["cp"] = res_cp.status
    report.traces["cp"] = _trace_from_result(res_cp)

    mm = runs["mismatched"]
    bound = analysis.error_bound(problem, mm.state.y, gamma_g=config.lam2)
    report.summary = {
        "mismatch_norm": d,
        "tau": tau,
        "theta": theta,
        "predicted_rate": stepsize.predicted_rate(plan),
        "error_bound": bound,
        "final_residuals": {name: (runs[name].residuals[-1] if runs[name].residuals else None)
                            for name in runs},
        "cp_step": step_cp,
    }

    shape = (config.image_size, config.image_size)
    report.images["phantom"] = phantom
    report.images["sinogram"] = z.reshape(config.num_angles, num_bins)
    for name in ("matched", "mismatched", "adapted", "cp"):
        report.images[f"recon_{name}"] = runs[name].state.x.reshape(shape)

    if config.with_oracle:
        oracle_stop = solvers.StoppingRule(
            config.max_iters * config.oracle_factor,
            max(config.fixed_point_tol * 1e-3, 1e-14))
        oracle = solvers.run(problem, specs["mismatched"], oracle_stop,
                             x_ref=x_ref, objective=objective)
        report.statuses["oracle"] = oracle.status
        report.summary["oracle_dist"] = float(np.linalg.norm(mm.state.x - oracle.state.x))
        report.summary["oracle_error_bound"] = analysis.error_bound(
            problem, oracle.state.y, gamma_g=config.lam2)
        report.images["recon_oracle"] = oracle.state.x.reshape(shape)

    return report


def write_pgm(path, image, vmin=None, vmax=None):
    """Write a 2-d array as a binary 8-bit PGM (deterministic bytes)."""
    img = np.asarray(image, dtype=float)
    lo = float(np.min(img)) if vmin is None else vmin
    hi = float(np.max(img)) if vmax is None else vmax
    if hi <= lo:
        scaled = np.zeros_like(img)
    else:
        scaled = (img - lo) / (hi - lo)
    data = np.clip(np.rint(scaled * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def emit_report(report, out_dir):
    """Write trace CSVs, a summary JSON, and PGM images for a RunReport.

    Filenames are deterministic: {experiment}_{solver}.csv,
    {experiment}_summary.json, {experiment}_{image}.pgm.  Empty traces
    produce a header-only CSV; the summary is always valid JSON.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for solver in sorted(report.traces):
        columns, rows = report.traces[solver]
        path = os.path.join(out_dir, f"{report.experiment}_{solver}.csv")
        with open(path, "w", newline="") as fh:
            fh.write(",".join(columns) + "\n")
            for row in rows:
                fh.write(",".join("" if c is None else repr(c) if isinstance(c, float) else str(c)
                                  for c in row) + "\n")
        paths.append(path)

    summary_path = os.path.join(out_dir, f"{report.experiment}_summary.json")
    payload = {
        "experiment": report.experiment,
        "config": report.config,
        "statuses": report.statuses,
        "plan": report.plan,
        "summary": report.summary,
    }
    with open(summary_path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths.append(summary_path)

    for name in sorted(report.images):
        path = os.path.join(out_dir, f"{report.experiment}_{name}.pgm")
        write_pgm(path, report.images[name])
        paths.append(path)

    report.artifact_paths = paths
    return paths
