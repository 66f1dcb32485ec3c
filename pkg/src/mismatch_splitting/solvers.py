"""The four iterations: matched / mismatched primal-dual Douglas-Rachford,
the adapted variant with shifted proxes, and a Chambolle-Pock baseline with
the surrogate adjoint, plus the lifted preconditioned-proximal-point
iteration kept as an equivalence oracle.
"""

from __future__ import annotations

import csv
import time
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .proximal import ProxFn, prox_convex_shifted
from .operators import MismatchPair


@dataclass
class SaddleProblem:
    """min_x max_y G(x) + <Ax, y> - F*(y) with a surrogate adjoint V*."""

    prox_g: ProxFn
    prox_fstar: ProxFn
    pair: MismatchPair

    @property
    def primal_dim(self):
        return self.pair.domain_dim

    @property
    def dual_dim(self):
        return self.pair.codomain_dim


@dataclass
class SolverState:
    x: np.ndarray
    y: np.ndarray
    v: np.ndarray
    w: np.ndarray
    p: np.ndarray
    q: np.ndarray
    k: int = 0

    def copy(self):
        return SolverState(*(a.copy() for a in (self.x, self.y, self.v, self.w, self.p, self.q)), self.k)


@dataclass
class StoppingRule:
    max_iters: int
    fixed_point_tol: float = 1e-9
    divergence_threshold: float = 1e12

    def __post_init__(self):
        if self.max_iters < 0 or self.fixed_point_tol <= 0 or self.divergence_threshold <= 0:
            raise ValueError("stopping rule fields must be positive")


@dataclass
class LiftedState:
    """Reduced state of the relaxed preconditioned proximal point iteration."""

    w_lift: np.ndarray
    alpha: float
    gamma: float
    lam: float

    def __post_init__(self):
        if not (0.0 < self.lam < 2.0):
            raise ValueError("relaxation lambda must lie in (0, 2)")


def zero_state(problem):
    n, m = problem.primal_dim, problem.dual_dim
    z = lambda d: np.zeros(d)
    return SolverState(z(n), z(m), z(n), z(m), z(n), z(m))


def gaussian_state(problem, seed=42):
    rng = np.random.default_rng(seed)
    n, m = problem.primal_dim, problem.dual_dim
    x = rng.standard_normal(n)
    y = rng.standard_normal(m)
    p = rng.standard_normal(n)
    q = rng.standard_normal(m)
    return SolverState(x, y, x.copy(), y.copy(), p, q)


class PDDRStepper:
    """One iteration of (adapted) primal-dual Douglas-Rachford.

    mode 'matched' substitutes the true adjoint A^T for V*; 'mismatched'
    runs verbatim with the surrogate.  Nonzero mu_g/mu_f produce the adapted
    iteration with shifted proxes and the mu-augmented inner system.
    """

    def __init__(self, problem, tau, theta, mode="mismatched", mu_g=0.0, mu_f=0.0):
        if tau <= 0:
            raise ValueError("tau must be positive")
        if mode == "matched":
            if not (0.0 < theta < 2.0):
                raise ValueError("matched mode requires theta in (0, 2)")
            pair = problem.pair.matched()
        elif mode == "mismatched":
            if theta == 0.0:
                raise ValueError("theta must be nonzero")
            pair = problem.pair
        else:
            raise ValueError(f"unknown mode {mode!r}")

        if mu_g < 0 or mu_f < 0:
            raise ValueError("mu shifts must be nonnegative")
        if mu_g > 0 or mu_f > 0:
            if tau >= min(1.0 / mu_g if mu_g > 0 else np.inf,
                          1.0 / mu_f if mu_f > 0 else np.inf):
                raise ValueError("adapted mode requires tau < min(1/mu_g, 1/mu_f)")
            gg = problem.prox_g.strong_convexity
            gf = problem.prox_fstar.strong_convexity
            if mu_g > gg or mu_f > gf:
                raise ValueError("mu shifts must not exceed the strong convexity moduli")
            if mu_g * mu_f < 0.25 * problem.pair.mismatch_norm ** 2:
                warnings.warn(
                    "mu_g * mu_f < ||A-V||^2 / 4: the monotone decomposition is broken",
                    stacklevel=2,
                )

        self.problem = problem
        self.tau = float(tau)
        self.theta = float(theta)
        self.mode = mode
        self.mu_g = float(mu_g)
        self.mu_f = float(mu_f)
        self._prox_g = problem.prox_g if mu_g == 0.0 else prox_convex_shifted(problem.prox_g, mu_g)
        self._prox_f = problem.prox_fstar if mu_f == 0.0 else prox_convex_shifted(problem.prox_fstar, mu_f)
        self._solver = pair.inner_solver(tau, mu_g, mu_f)

    residual_scale_attr = "theta"

    @property
    def residual_scale(self):
        return abs(self.theta)

    def governing(self, state):
        return np.concatenate([state.p, state.q])

    def step(self, state):
        tau, theta = self.tau, self.theta
        x = self._prox_g(state.p, tau)
        y = self._prox_f(state.q, tau)
        v, w = self._solver.solve(2.0 * x - state.p, 2.0 * y - state.q)
        p = state.p + theta * (v - x)
        q = state.q + theta * (w - y)
        return SolverState(x, y, v, w, p, q, state.k + 1)


class CPStepper:
    """Chambolle-Pock / PDHG with the surrogate adjoint substituted for A^T."""

    def __init__(self, problem, tau_p, sigma_d, theta_cp=1.0):
        if tau_p <= 0 or sigma_d <= 0:
            raise ValueError("step sizes must be positive")
        self.problem = problem
        self.tau_p = float(tau_p)
        self.sigma_d = float(sigma_d)
        self.theta_cp = float(theta_cp)

    residual_scale = 1.0

    def governing(self, state):
        return np.concatenate([state.x, state.y])

    def step(self, state):
        prob = self.problem
        x_new = prob.prox_g(state.x - self.tau_p * prob.pair.apply_surrogate_adjoint(state.y), self.tau_p)
        x_bar = x_new + self.theta_cp * (x_new - state.x)
        y_new = prob.prox_fstar(state.y + self.sigma_d * prob.pair.forward.apply(x_bar), self.sigma_d)
        return SolverState(x_new, y_new, x_new.copy(), y_new.copy(), x_new.copy(), y_new.copy(), state.k + 1)


def step_pddr(problem, state, tau, theta, mode="mismatched"):
    return PDDRStepper(problem, tau, theta, mode=mode).step(state)


def step_adapted_pddr(problem, state, tau, theta, mu_g, mu_f):
    return PDDRStepper(problem, tau, theta, mode="mismatched", mu_g=mu_g, mu_f=mu_f).step(state)


def step_cp_mismatched(problem, state, tau_p, sigma_d, theta_cp=1.0):
    return CPStepper(problem, tau_p, sigma_d, theta_cp).step(state)


def step_lifted_ppp(problem, lifted, tau):
    """One step of the reduced preconditioned proximal point iteration.

    Exists as a test oracle: with theta = lambda/(1+alpha) the sequence
    w^k/(1+alpha) reproduces the mismatched PDDR (p, q) sequence exactly.
    """
    alpha, lam = lifted.alpha, lifted.lam
    if not np.isclose(lifted.gamma, (1.0 + alpha) * tau):
        raise ValueError("lifted state requires gamma = (1 + alpha) * tau")
    n = problem.primal_dim
    w = lifted.w_lift
    w_tilde = w / (1.0 + alpha)
    x = problem.prox_g(w_tilde[:n], tau)
    y = problem.prox_fstar(w_tilde[n:], tau)
    refl = 2.0 * np.concatenate([x, y]) - w_tilde
    v, wv = problem.pair.inner_solver(tau).solve(refl[:n], refl[n:])
    w_new = w + lam * (np.concatenate([v, wv]) - np.concatenate([x, y]))
    return replace(lifted, w_lift=w_new)


@dataclass
class RunResult:
    status: str  # converged | diverged | max_iters
    state: SolverState
    residuals: list = field(default_factory=list)
    distances: list = field(default_factory=list)
    objectives: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    @property
    def iterations(self):
        return self.state.k


TRACE_COLUMNS = ("iter", "dist_to_ref", "objective", "residual", "wall_time_ms")


def run(problem, stepper, stopping, initial_state=None, x_ref=None,
        objective: Optional[Callable[[np.ndarray], float]] = None,
        trace_sink=None, extra_metrics=None):
    """Iterate ``stepper`` until the fixed-point residual drops below
    tolerance, the primal norm crosses the divergence threshold, or
    max_iters is reached.

    The residual is ||(p,q)^{k+1} - (p,q)^k|| / theta for PDDR-type steppers,
    which equals the fixed-point defect ||(v,w) - (x,y)||.  Trace records are
    appended to ``trace_sink`` (path or file object) as CSV rows.
    """
    state = initial_state.copy() if initial_state is not None else zero_state(problem)
    result = RunResult(status="max_iters", state=state)
    if extra_metrics:
        result.extras = {name: [] for name in extra_metrics}
    t0 = time.perf_counter()

    close_sink = False
    writer = None
    if trace_sink is not None:
        if hasattr(trace_sink, "write"):
            fh = trace_sink
        else:
            fh = open(trace_sink, "w", newline="")
            close_sink = True
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)

    def record(state, residual):
        dist = float(np.linalg.norm(state.x - x_ref)) if x_ref is not None else None
        obj = float(objective(state.x)) if objective is not None else None
        ms = (time.perf_counter() - t0) * 1e3
        row = (state.k, dist, obj, residual, ms)
        result.trace.append(row)
        if residual is not None:
            result.residuals.append(residual)
        if dist is not None:
            result.distances.append(dist)
        if obj is not None:
            result.objectives.append(obj)
        if extra_metrics:
            for name, fn in extra_metrics.items():
                result.extras[name].append(float(fn(state)))
        if writer is not None:
            writer.writerow(["" if c is None else c for c in row])

    try:
        record(state, None)
        for _ in range(stopping.max_iters):
            prev = stepper.governing(state)
            state = stepper.step(state)
            result.state = state
            residual = float(np.linalg.norm(stepper.governing(state) - prev)) / stepper.residual_scale
            record(state, residual)
            if not np.all(np.isfinite(state.x)) or np.linalg.norm(state.x) > stopping.divergence_threshold:
                result.status = "diverged"
                break
            if residual <= stopping.fixed_point_tol:
                result.status = "converged"
                break
        else:
            result.status = "max_iters"
    finally:
        if close_sink:
            fh.close()
    return result
