"""Convex generators, their divergences, and the tilted-risk decomposition.

Two Legendre-type generators are supported:

  - Quadratic: psi(z) = ||z||^2 / 2.  Self-conjugate; the gradient map is the
    identity, and both primal and conjugate divergences are ||u - v||^2 / 2.
  - LogSumExp: psi(z) = log(sum_k exp(z_k)).  The gradient is softmax, the
    conjugate is negative entropy on the probability simplex, and the
    conjugate divergence is KL(u || v) between probability vectors.

Natural parameters of LogSumExp are shift-invariant; the canonical
(normalized) representative of a mean vector mu is log(mu), whose
log-partition is zero.  Divergence values never depend on the representative.

The pointwise decomposition implemented by :func:`tilt_risk_pointwise` splits
the mixture-weighted corrected risk into a weighted Jensen term between the
truth and the predictor, plus a residual divergence that vanishes exactly when
the correction matches the barycenter of their natural parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax


class SimplexError(ValueError):
    """A vector fails the probability-simplex contract."""


@dataclass(frozen=True)
class SimplexPoint:
    """Validated probability vector; strict interior required for KL second slots."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", probs)
        if probs.ndim != 1 or probs.size < 2:
            raise SimplexError("need a 1-d probability vector of length >= 2")
        if np.any(probs < 0):
            raise SimplexError("probabilities must be nonnegative")
        if abs(float(probs.sum()) - 1.0) > 1e-12:
            raise SimplexError("probabilities must sum to one within 1e-12")


def _probs(u) -> np.ndarray:
    if isinstance(u, SimplexPoint):
        return u.probs
    return np.asarray(u, dtype=float)


class Quadratic:
    """psi(z) = ||z||^2 / 2 on R^dim."""

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError(f"dim must be positive, got {dim}")
        self.dim = dim

    def value(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return 0.5 * float(z @ z)

    def grad(self, z) -> np.ndarray:
        return np.asarray(z, dtype=float)

    def grad_conjugate(self, u) -> np.ndarray:
        return np.asarray(u, dtype=float)

    def div_primal(self, z1, z2) -> float:
        d = np.asarray(z1, dtype=float) - np.asarray(z2, dtype=float)
        return 0.5 * float(d @ d)

    def div_conjugate(self, u, v) -> float:
        return self.div_primal(u, v)


class LogSumExp:
    """psi(z) = log(sum_k exp(z_k)) for K-class natural parameters."""

    def __init__(self, num_classes: int):
        if num_classes < 2:
            raise ValueError(f"need at least 2 classes, got {num_classes}")
        self.num_classes = num_classes

    def value(self, z) -> float:
        return float(logsumexp(np.asarray(z, dtype=float)))

    def grad(self, z) -> np.ndarray:
        return softmax(np.asarray(z, dtype=float))

    def grad_conjugate(self, u) -> np.ndarray:
        """Normalized logit representative log(u) of an interior simplex point."""
        probs = _probs(u)
        if np.any(probs <= 0.0):
            raise SimplexError("gradient of the conjugate needs strictly positive probabilities")
        return np.log(probs)

    def div_primal(self, z1, z2) -> float:
        z1 = np.asarray(z1, dtype=float)
        z2 = np.asarray(z2, dtype=float)
        return self.value(z1) - self.value(z2) - float(self.grad(z2) @ (z1 - z2))

    def div_conjugate(self, u, v) -> float:
        """KL(u || v) on the simplex; v must be strictly positive."""
        uv = _probs(u)
        vv = _probs(v)
        if np.any(vv <= 0.0):
            raise SimplexError("KL divergence needs a strictly positive second argument")
        mask = uv > 0.0
        return float(np.sum(uv[mask] * (np.log(uv[mask]) - np.log(vv[mask]))))


Generator = Quadratic | LogSumExp


def bregman_div(gen: Generator, u, v) -> float:
    """Mean-parameter divergence: squared distance / 2 (quadratic) or KL (logsumexp)."""
    return gen.div_conjugate(u, v)


def weighted_jensen(gen: Generator, eta: float, u, v) -> float:
    """eta*psi(u) + (1-eta)*psi(v) - psi(eta*u + (1-eta)*v); nonnegative by convexity."""
    if not (0.0 <= eta <= 1.0):
        raise ValueError(f"eta must be in [0, 1], got {eta}")
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return eta * gen.value(u) + (1.0 - eta) * gen.value(v) - gen.value(eta * u + (1.0 - eta) * v)


@dataclass(frozen=True)
class PointwiseRisk:
    """One point of the decomposed corrected risk; the split is exact."""

    risk_integrand: float
    jensen_term: float
    residual_term: float


def tilt_risk_pointwise(gen: Generator, v_x: float, rho_x: float,
                        mu_corrected, mu_star, mu_f) -> PointwiseRisk:
    """Decompose p*D(mu_corrected, mu_star) + lam*q*D(mu_corrected, mu_f) at one x.

    ``v_x`` is p/(p + lam*q) and ``rho_x`` is p + lam*q at the point, so
    p = v_x*rho_x and lam*q = (1 - v_x)*rho_x.  The integrand equals the
    mixture-weighted Jensen divergence between the natural parameters of the
    truth and the predictor, plus a residual primal divergence from their
    v-barycenter to the natural parameter of the corrected mean.
    """
    if not (0.0 <= v_x <= 1.0):
        raise ValueError(f"v must be in [0, 1], got {v_x}")
    if rho_x <= 0:
        raise ValueError(f"the mixture density must be positive, got {rho_x}")
    p_x = v_x * rho_x
    lam_q_x = (1.0 - v_x) * rho_x

    risk = (p_x * gen.div_conjugate(mu_corrected, mu_star)
            + lam_q_x * gen.div_conjugate(mu_corrected, mu_f))

    theta_star = gen.grad_conjugate(mu_star)
    theta_f = gen.grad_conjugate(mu_f)
    theta_bar = v_x * theta_star + (1.0 - v_x) * theta_f
    jensen = rho_x * weighted_jensen(gen, v_x, theta_star, theta_f)
    residual = rho_x * gen.div_primal(theta_bar, gen.grad_conjugate(mu_corrected))
    return PointwiseRisk(risk_integrand=risk, jensen_term=jensen, residual_term=residual)


def barycenter_correction(gen: Generator, v_x: float, mu_star, mu_f) -> np.ndarray:
    """Mean-space correction b with grad_conjugate(mu_f + b) at the v-barycenter.

    This is the offset that zeroes the residual term of the pointwise
    decomposition: b = grad(v*theta_star + (1-v)*theta_f) - mu_f.
    """
    theta_bar = (v_x * gen.grad_conjugate(mu_star)
                 + (1.0 - v_x) * gen.grad_conjugate(mu_f))
    return gen.grad(theta_bar) - np.asarray(_probs(mu_f), dtype=float)


def kl_tilt_profiled_integrand(rho, mu_f, v: float) -> float:
    """Chernoff-type discrepancy -log sum_k rho_k^v * mu_k^(1-v).

    Nonnegative by Hoelder's inequality; zero exactly when the probability
    vectors agree or the exponent is degenerate (v in {0, 1}).
    """
    if not (0.0 <= v <= 1.0):
        raise ValueError(f"v must be in [0, 1], got {v}")
    rv = _probs(rho)
    mv = _probs(mu_f)
    if np.any(rv <= 0.0) or np.any(mv <= 0.0):
        raise SimplexError("the profiled integrand needs strictly positive probabilities")
    # Computed in log space: exponents of possibly tiny probabilities.
    return -float(logsumexp(v * np.log(rv) + (1.0 - v) * np.log(mv)))


@dataclass(frozen=True)
class LimitCheckEntry:
    lam: float
    ratio: float
    exact_match: bool


def small_lambda_limit_check(gen: Generator, p_x: float, q_x: float,
                             theta_star, theta_f, lambdas) -> list[LimitCheckEntry]:
    """Ratio of the profiled integrand to its small-lam linearization, per lam.

    ratio = [(p + lam*q) * Jensen_v(theta_star, theta_f)] / [lam * q *
    D(theta_f, theta_star)], which tends to one as lam decreases to zero.
    Identical natural parameters make both sides vanish; those entries carry
    the exact-match sentinel instead of a ratio.
    """
    if p_x <= 0 or q_x <= 0:
        raise ValueError("densities must be positive at the evaluation point")
    lams = [float(l) for l in lambdas]
    if any(l <= 0 for l in lams):
        raise ValueError("lambda values must be positive")
    theta_star = np.asarray(theta_star, dtype=float)
    theta_f = np.asarray(theta_f, dtype=float)
    denom_div = gen.div_primal(theta_f, theta_star)
    out = []
    for lam in lams:
        if denom_div == 0.0:
            out.append(LimitCheckEntry(lam=lam, ratio=math.nan, exact_match=True))
            continue
        rho = p_x + lam * q_x
        v = p_x / rho
        num = rho * weighted_jensen(gen, v, theta_star, theta_f)
        out.append(LimitCheckEntry(lam=lam, ratio=num / (lam * q_x * denom_div),
                                   exact_match=False))
    return out


def kl_tilt_surrogate(f_src: np.ndarray, b_src: np.ndarray, teacher_src: np.ndarray,
                      f_tgt: np.ndarray, b_tgt: np.ndarray, lam: float,
                      temperature: float = 2.0) -> dict:
    """Empirical KL surrogate over given logit arrays (no training loop).

    Source term: mean T^2 * KL(softmax_T(f + b) || softmax_T(teacher)) over
    source rows.  Target term: lam times the mean T^2 * KL(softmax_T(f + b)
    || softmax_T(f)) over target rows, which vanishes identically when the
    auxiliary logits are zero.
    """
    if lam <= 0 or temperature <= 0:
        raise ValueError("lam and temperature must be positive")
    t2 = temperature**2

    def mean_kl(a_logits, b_logits):
        a = np.asarray(a_logits, dtype=float) / temperature
        b = np.asarray(b_logits, dtype=float) / temperature
        la = a - logsumexp(a, axis=1, keepdims=True)
        lb = b - logsumexp(b, axis=1, keepdims=True)
        return float(np.mean(np.sum(np.exp(la) * (la - lb), axis=1)))

    src_term = t2 * mean_kl(np.asarray(f_src) + np.asarray(b_src), teacher_src)
    tgt_term = lam * t2 * mean_kl(np.asarray(f_tgt) + np.asarray(b_tgt), f_tgt)
    return {"total": src_term + tgt_term, "source_term": src_term, "target_term": tgt_term}
