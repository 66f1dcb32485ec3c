"""Step-size recipe, monotonicity conditions, and linear-rate formulas.

Everything here is a pure function of scalars; the two operator-dependent
inputs (sigma_min and the norm of the shifted skew block) come from the
operators module.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, asdict
from typing import Optional


@dataclass(frozen=True)
class ConvexityProfile:
    gamma_g: float
    gamma_f: float
    mismatch_norm: float

    def __post_init__(self):
        if self.gamma_g <= 0 or self.gamma_f <= 0:
            raise ValueError("strong convexity moduli must be positive")
        if self.mismatch_norm < 0:
            raise ValueError("mismatch norm must be nonnegative")

    @property
    def exists_unique(self):
        """Strict existence condition gamma_g * gamma_f > ||A-V||^2 / 4."""
        return self.gamma_g * self.gamma_f > 0.25 * self.mismatch_norm**2


@dataclass
class StepPlan:
    """Full output of the step-size recipe for a fixed relaxation theta."""

    mu_g: float
    mu_tilde_g: float
    mu_f: float
    mu_tilde_f: float
    theta: float
    delta: float
    alpha: float
    tau: float
    zeta: float
    tau_s: float
    tau_plus: Optional[float]
    tau_minus: Optional[float]
    upsilon: float
    sigma: float
    b_sigma_norm: float
    eta: float
    rate: float
    c: float

    def as_dict(self):
        return asdict(self)


class CertificateError(RuntimeError):
    """No positive linear-rate certificate is available for these inputs."""


def select_mus(profile):
    """Midpoint instantiation of the admissible (mu, mu-tilde) constants.

    mu_tilde is the midpoint of its open admissible interval and mu the
    midpoint between mu_tilde and the strong convexity modulus, on each of
    the primal and dual sides.
    """
    if not profile.exists_unique:
        raise CertificateError(
            "existence condition gamma_g * gamma_f > ||A-V||^2 / 4 violated; "
            "no admissible mu constants"
        )
    d = profile.mismatch_norm
    ratio = math.sqrt(profile.gamma_g / profile.gamma_f)
    mu_tilde_g = 0.5 * (profile.gamma_g + 0.5 * d * ratio)
    mu_g = 0.5 * (profile.gamma_g + mu_tilde_g)
    mu_tilde_f = 0.5 * (profile.gamma_f + 0.5 * d / ratio)
    mu_f = 0.5 * (profile.gamma_f + mu_tilde_f)
    return mu_g, mu_tilde_g, mu_f, mu_tilde_f


def monotonicity_c(mu_g, mu_tilde_g, mu_f, mu_tilde_f):
    """The constant c bounding tau in the weak-convergence region."""
    return min(
        (mu_g - mu_tilde_g) / (mu_g * mu_tilde_g),
        (mu_f - mu_tilde_f) / (mu_f * mu_tilde_f),
    )


def certify_weak(profile, mus, tau, theta):
    """Membership test for the weak-convergence region.

    Returns (ok, c) where ok is True iff tau in (0, min(1/||A-V||, c)) and
    theta in (0, 2 - 2*tau/c).
    """
    mu_g, mu_tilde_g, mu_f, mu_tilde_f = mus
    c = monotonicity_c(mu_g, mu_tilde_g, mu_f, mu_tilde_f)
    d = profile.mismatch_norm
    tau_cap = min(1.0 / d if d > 0 else math.inf, c)
    ok = (0.0 < tau < tau_cap) and (0.0 < theta < 2.0 - 2.0 * tau / c)
    return ok, c


def compute_plan(profile, theta, sigma, b_sigma_norm):
    """Step-size recipe for a given theta in (0, 1).

    ``sigma`` is the smallest singular value and ``b_sigma_norm`` the norm
    of the mu-tilde-shifted skew block; both must be measured on the block
    built with the mus returned by select_mus(profile).
    """
    if not (0.0 < theta < 1.0):
        raise ValueError("theta must lie in (0, 1)")
    if b_sigma_norm <= 0:
        raise ValueError("b_sigma_norm must be positive")
    if sigma <= 0:
        raise CertificateError(
            "sigma_min of the shifted skew block is not strictly positive; "
            "no positive rate certificate"
        )

    mu_g, mu_tilde_g, mu_f, mu_tilde_f = select_mus(profile)
    d = profile.mismatch_norm
    delta = 1.0 / theta
    alpha = delta - 1.0

    upsilon = 0.5 * min(profile.gamma_g - mu_g, profile.gamma_f - mu_f)
    m_max = max(mu_tilde_g, mu_tilde_f)
    denom = 4.0 * b_sigma_norm**2 + m_max**2

    zeta = (delta - 1.0) / (delta * math.sqrt(denom))
    c = monotonicity_c(mu_g, mu_tilde_g, mu_f, mu_tilde_f)
    norm_cap = 0.99 * delta / ((delta - 1.0) * d) if d > 0 else math.inf
    tau_s = (delta - 1.0) / delta * min(
        (mu_g - mu_tilde_g) / (mu_g * mu_tilde_g),
        (mu_f - mu_tilde_f) / (mu_f * mu_tilde_f),
        norm_cap,
    )

    # intersection points of the linear and rational branches of eta(tau)
    disc = (delta - 1.0) ** 2 * m_max**2 - (
        (delta - 1.0) ** 2 - sigma / upsilon * (2.0 * delta - 1.0) ** 2
    ) * denom
    if disc < 0.0:
        tau_minus = tau_plus = None
        tau_tilde = zeta
    else:
        root = math.sqrt(disc)
        base = (1.0 - delta) * m_max
        tau_minus = (base - root) / (delta * denom)
        tau_plus = (base + root) / (delta * denom)
        if tau_minus < 0.0:
            tau_tilde = tau_plus
        elif tau_minus > 0.0 and 0.0 < tau_plus < zeta:
            tau_tilde = zeta
        elif tau_minus > 0.0 and tau_plus >= zeta > 0.0:
            tau_tilde = tau_plus
        else:
            # case not covered by the stated split (e.g. tau_minus == 0)
            warnings.warn(
                "step-size case split did not match; falling back to the "
                "maximizer of the rational branch",
                stacklevel=2,
            )
            tau_tilde = zeta

    tau = min(tau_s, tau_tilde)
    eta = rate_eta(tau, delta, upsilon, sigma, b_sigma_norm, m_max)
    if eta <= 0.0:
        raise CertificateError("no positive rate certificate (eta <= 0)")

    return StepPlan(
        mu_g=mu_g,
        mu_tilde_g=mu_tilde_g,
        mu_f=mu_f,
        mu_tilde_f=mu_tilde_f,
        theta=theta,
        delta=delta,
        alpha=alpha,
        tau=tau,
        zeta=zeta,
        tau_s=tau_s,
        tau_plus=tau_plus,
        tau_minus=tau_minus,
        upsilon=upsilon,
        sigma=sigma,
        b_sigma_norm=b_sigma_norm,
        eta=eta,
        rate=1.0 / (1.0 + eta),
        c=c,
    )


def rate_eta(tau, delta, upsilon, sigma, b_sigma_norm, mu_tilde_max):
    """The strong-monotonicity constant eta entering the linear rate."""
    g = tau * delta
    return (4.0 * g / 27.0) * min(
        upsilon / (2.0 * delta - 1.0) ** 2,
        sigma / (4.0 * g**2 * b_sigma_norm**2 + (delta - 1.0 + g * mu_tilde_max) ** 2),
    )


def predicted_rate(plan):
    """Per-iteration contraction factor (1 + (1 - theta(1+alpha)) eta)/(1 + eta)."""
    return (1.0 + (1.0 - plan.theta * (1.0 + plan.alpha)) * plan.eta) / (1.0 + plan.eta)
