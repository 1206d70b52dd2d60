"""Exact population functionals for a source/target density pair.

Given source density p, target density q and penalty strength lam, the
objects here evaluate, by one-dimensional quadrature:

  - the bounded weight  v(x) = p / (p + lam*q)  in [0, 1],
  - the smoothed ratio  w(x) = q / (p + lam*q)  in [0, 1/lam],
  - the optimal offset  b*(x) = -v(x) * (f(x) - fstar(x)),
  - the weighted excess risk  E_q[v * (f - fstar)^2],
  - the joint excess risk  ||f + b - fstar||_p^2 + lam * ||b||_q^2,

and check the exact decomposition

  joint excess risk = lam * weighted excess risk
                      + (1 + lam) * ||b - b*||^2 under density (p + lam*q)/(1 + lam).

The decomposition is an algebraic identity of the integrands, so evaluating
both sides on the same quadrature grid must agree to rounding; any gap beyond
that is a bug, not discretization error.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Literal

import numpy as np

from .densities import DensityModel


class AtomNotAllowedError(ValueError):
    """Population functionals are defined for atom-free densities only."""


QuadRule = Literal["trapezoid", "gauss-legendre"]


@lru_cache(maxsize=8)
def _quad_grid(rule: QuadRule, points: int) -> tuple[np.ndarray, np.ndarray]:
    if rule == "trapezoid":
        xs = np.linspace(0.0, 1.0, points)
        ws = np.full(points, 1.0 / (points - 1))
        ws[0] *= 0.5
        ws[-1] *= 0.5
        return xs, ws
    if rule == "gauss-legendre":
        nodes, weights = np.polynomial.legendre.leggauss(points)
        return 0.5 * (nodes + 1.0), 0.5 * weights
    raise ValueError(f"unknown quadrature rule: {rule!r}")


@dataclass(frozen=True)
class PopulationContext:
    """Immutable (p, q, lam) triple with its quadrature machinery.

    ``quad_points`` must be odd (and >= 3) for the trapezoid rule so the
    grid is symmetric about 1/2; Gauss-Legendre (512 nodes is plenty for
    smooth Beta-type integrands) is available as an alternative.  The
    40001-point default keeps the doubling drift of the composite trapezoid
    rule below 1e-8 relative on Beta-type integrands, whose nonzero endpoint
    slopes dominate the error.
    """

    p: DensityModel
    q: DensityModel
    lam: float
    quad_points: int = 40001
    quad_rule: QuadRule = "trapezoid"

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if self.quad_points < 3:
            raise ValueError("need at least 3 quadrature points")
        if self.quad_rule == "trapezoid" and self.quad_points % 2 == 0:
            raise ValueError("trapezoid rule needs an odd point count")
        for role, model in (("source", self.p), ("target", self.q)):
            if model.atoms():
                raise AtomNotAllowedError(
                    f"{role} density has atoms; population functionals are "
                    "stated for absolutely continuous laws")

    def grid(self) -> tuple[np.ndarray, np.ndarray]:
        return _quad_grid(self.quad_rule, self.quad_points)

    def integrate(self, values: np.ndarray) -> float:
        _, ws = self.grid()
        return float(values @ ws)


@dataclass(frozen=True)
class TargetFunction:
    """The regression truth: a callable on [0, 1] plus a description."""

    eval: Callable[[np.ndarray], np.ndarray]
    description: str = ""

    def __call__(self, xs) -> np.ndarray:
        return np.asarray(self.eval(np.asarray(xs, dtype=float)), dtype=float)


def v_weight(ctx: PopulationContext, x) -> np.ndarray:
    """Bounded weight p / (p + lam*q); values lie in [0, 1] for any (p, q, lam)."""
    xs = np.asarray(x, dtype=float)
    pv = ctx.p.pdf_array(xs)
    qv = ctx.q.pdf_array(xs)
    denom = pv + ctx.lam * qv
    if np.any(denom <= 0.0):
        raise ZeroDivisionError("both densities vanish at an evaluation point")
    return pv / denom


def w_weight(ctx: PopulationContext, x) -> np.ndarray:
    """Smoothed density ratio q / (p + lam*q); bounded by 1/lam but can be spiky."""
    xs = np.asarray(x, dtype=float)
    pv = ctx.p.pdf_array(xs)
    qv = ctx.q.pdf_array(xs)
    denom = pv + ctx.lam * qv
    if np.any(denom <= 0.0):
        raise ZeroDivisionError("both densities vanish at an evaluation point")
    return qv / denom


def optimal_offset(ctx: PopulationContext, f: Callable, fstar: TargetFunction, x) -> np.ndarray:
    """The risk-minimizing offset -v(x) * (f(x) - fstar(x)).

    Bounded by |f - fstar| pointwise and identically zero when f equals the
    truth, regardless of how extreme the density ratio is.
    """
    xs = np.asarray(x, dtype=float)
    return -v_weight(ctx, xs) * (np.asarray(f(xs), dtype=float) - fstar(xs))


def _safe_v(pv: np.ndarray, qv: np.ndarray, lam: float) -> np.ndarray:
    """v = p/(p + lam*q) with zero where both densities vanish.

    Points with p = q = 0 carry no mass under any of the integrating
    measures, so their (undefined) weight contributes nothing; only the
    scalar-op view of v treats them as errors.
    """
    denom = pv + lam * qv
    return np.divide(pv, denom, out=np.zeros_like(pv), where=denom > 0)


def optimal_offset_fn(ctx: PopulationContext, f: Callable, fstar: TargetFunction) -> Callable:
    """The optimal offset as a grid-safe callable.

    Unlike the pointwise op, points where both densities vanish are mapped
    to zero: they are null under every integrating measure, and the offset
    is only ever integrated against those measures.
    """
    def bstar(xs):
        xs = np.asarray(xs, dtype=float)
        pv = ctx.p.pdf_array(xs)
        qv = ctx.q.pdf_array(xs)
        return -_safe_v(pv, qv, ctx.lam) * (np.asarray(f(xs), dtype=float) - fstar(xs))

    return bstar


def err_lambda_sq(ctx: PopulationContext, f: Callable, fstar: TargetFunction) -> float:
    """Weighted target excess risk E_q[v * (f - fstar)^2].

    Atom contributions would enter v-weighted at atoms of q; contexts reject
    atoms at construction, so the quadrature term is the whole value.
    """
    xs, _ = ctx.grid()
    diff = np.asarray(f(xs), dtype=float) - fstar(xs)
    pv = ctx.p.pdf_array(xs)
    qv = ctx.q.pdf_array(xs)
    vals = _safe_v(pv, qv, ctx.lam) * diff**2 * qv
    out = ctx.integrate(vals)
    if not np.isfinite(out):
        raise FloatingPointError("weighted excess risk quadrature is non-finite")
    return out


def auxiliary_excess_risk(ctx: PopulationContext, f: Callable, b: Callable,
                          fstar: TargetFunction) -> float:
    """Joint excess risk ||f + b - fstar||_p^2 + lam * ||b||_q^2."""
    xs, _ = ctx.grid()
    fv = np.asarray(f(xs), dtype=float)
    bv = np.asarray(b(xs), dtype=float)
    resid = fv + bv - fstar(xs)
    vals = resid**2 * ctx.p.pdf_array(xs) + ctx.lam * bv**2 * ctx.q.pdf_array(xs)
    out = ctx.integrate(vals)
    if not np.isfinite(out):
        raise FloatingPointError("joint excess risk quadrature is non-finite")
    return out


@dataclass(frozen=True)
class DecompositionReport:
    lhs: float
    rhs: float
    abs_gap: float
    rel_gap: float


def verify_decomposition(ctx: PopulationContext, f: Callable, b: Callable,
                         fstar: TargetFunction) -> DecompositionReport:
    """Evaluate both sides of the exact risk decomposition on one grid.

    lhs: joint excess risk of (f, b).
    rhs: lam * weighted excess risk of f, plus (1 + lam) times the squared
         distance of b from the optimal offset under the mixture density
         (p + lam*q) / (1 + lam).
    """
    xs, _ = ctx.grid()
    pv = ctx.p.pdf_array(xs)
    qv = ctx.q.pdf_array(xs)
    lam = ctx.lam
    fv = np.asarray(f(xs), dtype=float)
    bv = np.asarray(b(xs), dtype=float)
    h = fv - fstar(xs)

    lhs = ctx.integrate((h + bv) ** 2 * pv + lam * bv**2 * qv)

    v = _safe_v(pv, qv, lam)
    bstar = -v * h
    rhs = ctx.integrate(lam * v * h**2 * qv + (bv - bstar) ** 2 * (pv + lam * qv))

    abs_gap = abs(lhs - rhs)
    scale = max(abs(lhs), abs(rhs), 1e-300)
    return DecompositionReport(lhs=lhs, rhs=rhs, abs_gap=abs_gap, rel_gap=abs_gap / scale)


def minimize_offset_in_span(ctx: PopulationContext, f: Callable, fstar: TargetFunction,
                            bmap) -> tuple[np.ndarray, float]:
    """Best offset within a feature span, by population least squares.

    Returns the coefficient vector and the achieved joint excess risk.  Used
    to check that profiling the offset out of the joint risk approaches the
    weighted excess risk from above as the span gets rich.
    """
    xs, ws = ctx.grid()
    pv = ctx.p.pdf_array(xs)
    qv = ctx.q.pdf_array(xs)
    h = np.asarray(f(xs), dtype=float) - fstar(xs)
    Phi = bmap.design_matrix(xs)
    mix = (pv + ctx.lam * qv) * ws
    G = Phi.T @ (Phi * mix[:, None])
    rhs = -Phi.T @ (h * pv * ws)
    coef, *_ = np.linalg.lstsq(G, rhs, rcond=None)
    bv = Phi @ coef
    risk = ctx.integrate((h + bv) ** 2 * pv + ctx.lam * bv**2 * qv)
    return coef, risk
