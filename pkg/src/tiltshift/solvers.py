"""Closed-form fitting of the joint tilted objective and weighted baselines.

The central solver, :func:`tilt_fit`, minimizes

    (1/n) * sum_i (f(x_i) + b(x_i) - y_i)^2
  + (lam/m) * sum_j b(xt_j)^2
  + ridge_f * ||theta||^2 + ridge_b * ||gamma||^2

over linear-in-features f = Phi_f @ theta and b = Phi_b @ gamma, by solving
the symmetric positive-definite block normal equations

    [[Aff + ridge_f*I,  Afb            ],   [theta,   [cf,
     [Afb.T,            Abb + lam*Bbb + ridge_b*I]] *  gamma] =  cb]

with A-blocks the (1/n)-scaled source Gram blocks, Bbb the (1/m)-scaled
target Gram of the auxiliary class, and c the (1/n)-scaled cross-products
with y.  Only the f-component is ever deployed.

Weighted ridge regression backs the source-ERM and exact importance-weighted
baselines; a kernel estimator of the relative density ratio backs the
estimated-ratio baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .densities import DensityModel
from .features import FeatureMap, GaussianRBF


class DataError(ValueError):
    """Input samples contain non-finite values."""


class RankDeficiencyError(ValueError):
    """The unridged normal equations are singular; names the deficient block."""

    def __init__(self, block: str):
        self.block = block
        super().__init__(f"normal equations are rank-deficient in the {block} block; "
                         "add ridge or shrink the class")


class DegenerateWeightsError(ValueError):
    """All importance weights vanish."""


@dataclass(frozen=True)
class LabeledSample:
    """Source covariates with responses."""

    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        ys = np.asarray(self.ys, dtype=float)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        if xs.shape != ys.shape or xs.ndim != 1 or xs.size < 1:
            raise ValueError("xs and ys must be equal-length 1-d arrays with n >= 1")

    @property
    def n(self) -> int:
        return self.xs.size


@dataclass(frozen=True)
class UnlabeledSample:
    """Target covariates only."""

    xts: np.ndarray

    def __post_init__(self):
        xts = np.asarray(self.xts, dtype=float)
        object.__setattr__(self, "xts", xts)
        if xts.ndim != 1 or xts.size < 1:
            raise ValueError("xts must be a 1-d array with m >= 1")

    @property
    def m(self) -> int:
        return self.xts.size


@dataclass(frozen=True)
class TiltConfig:
    """Penalty strength and ridge floors for the joint solve.

    The ridge floors keep the block system positive definite without
    materially moving the minimizer; they default to 1e-8.
    """

    lam: float
    ridge_f: float = 1e-8
    ridge_b: float = 1e-8

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if self.ridge_f < 0 or self.ridge_b < 0:
            raise ValueError("ridge strengths must be nonnegative")


@dataclass(frozen=True)
class TiltFit:
    """Solution of the joint objective plus solver diagnostics.

    ``source_objective`` is the joint empirical objective evaluated at the
    returned coefficients, reproducible from (theta, gamma) and the data.
    """

    theta: np.ndarray
    gamma: np.ndarray
    source_objective: float
    condition_estimate: float

    def predict(self, fmap: FeatureMap, xs) -> np.ndarray:
        """Deployed prediction: the f-component only."""
        return fmap.design_matrix(xs) @ self.theta


def _objective(Xf, Xb, y, Xtb, lam, ridge_f, ridge_b, theta, gamma) -> float:
    resid = Xf @ theta + (Xb @ gamma if gamma.size else 0.0) - y
    val = float(resid @ resid) / y.size
    if gamma.size:
        tgt = Xtb @ gamma
        val += lam * float(tgt @ tgt) / Xtb.shape[0]
    val += ridge_f * float(theta @ theta) + ridge_b * float(gamma @ gamma)
    return val


@dataclass(frozen=True)
class GramBlocks:
    """Precomputed source/target Gram blocks; lets a lam sweep reuse them."""

    Aff: np.ndarray
    Afb: np.ndarray
    Abb: np.ndarray
    Bbb: np.ndarray
    cf: np.ndarray
    cb: np.ndarray


def gram_blocks(src: LabeledSample, tgt: UnlabeledSample, fmap: FeatureMap,
                bmap: FeatureMap) -> GramBlocks:
    if fmap.output_dim < 1:
        raise ValueError("the predictor class must have at least one feature")
    if not (np.all(np.isfinite(src.xs)) and np.all(np.isfinite(src.ys))
            and np.all(np.isfinite(tgt.xts))):
        raise DataError("samples contain NaN or Inf")
    Xf = fmap.design_matrix(src.xs)
    Xb = bmap.design_matrix(src.xs)
    Xtb = bmap.design_matrix(tgt.xts)
    n, m = src.n, tgt.m
    return GramBlocks(
        Aff=Xf.T @ Xf / n,
        Afb=Xf.T @ Xb / n,
        Abb=Xb.T @ Xb / n,
        Bbb=Xtb.T @ Xtb / m,
        cf=Xf.T @ src.ys / n,
        cb=Xb.T @ src.ys / n,
    )


def solve_blocks(blocks: GramBlocks, cfg: TiltConfig) -> tuple[np.ndarray, np.ndarray, float]:
    """Solve the block normal equations; returns (theta, gamma, condition)."""
    df = blocks.Aff.shape[0]
    db = blocks.Abb.shape[0]
    if db == 0:
        K = blocks.Aff + cfg.ridge_f * np.eye(df)
        theta = _solve_spd(K, blocks.cf, block="f")
        return theta, np.zeros(0), float(np.linalg.cond(K))
    K = np.block([
        [blocks.Aff + cfg.ridge_f * np.eye(df), blocks.Afb],
        [blocks.Afb.T, blocks.Abb + cfg.lam * blocks.Bbb + cfg.ridge_b * np.eye(db)],
    ])
    rhs = np.concatenate([blocks.cf, blocks.cb])
    sol = _solve_spd(K, rhs, block=None, Aff=blocks.Aff, ridge_f=cfg.ridge_f)
    return sol[:df], sol[df:], float(np.linalg.cond(K))


def tilt_fit(src: LabeledSample, tgt: UnlabeledSample, fmap: FeatureMap,
             bmap: FeatureMap, cfg: TiltConfig) -> TiltFit:
    """Unique minimizer of the joint objective over (theta, gamma).

    With ``bmap`` the empty class the gamma block is absent and the result
    is plain ridge source ERM for f.  The full (dim_f + dim_b) system is
    factored as one SPD matrix; a Cholesky failure with zero ridges is
    reported as rank deficiency of the offending block.
    """
    blocks = gram_blocks(src, tgt, fmap, bmap)
    theta, gamma, cond = solve_blocks(blocks, cfg)
    Xf = fmap.design_matrix(src.xs)
    Xb = bmap.design_matrix(src.xs)
    Xtb = bmap.design_matrix(tgt.xts)
    obj = _objective(Xf, Xb, src.ys, Xtb, cfg.lam, cfg.ridge_f, cfg.ridge_b, theta, gamma)
    return TiltFit(theta=theta, gamma=gamma, source_objective=obj, condition_estimate=cond)


def _solve_spd(K: np.ndarray, rhs: np.ndarray, block: str | None,
               Aff: np.ndarray | None = None, ridge_f: float = 0.0) -> np.ndarray:
    try:
        c, low = linalg.cho_factor(K, lower=True)
    except linalg.LinAlgError:
        if block is not None:
            raise RankDeficiencyError(block) from None
        # Name the block whose diagonal Gram lost rank.
        df = Aff.shape[0]
        if np.linalg.matrix_rank(Aff + ridge_f * np.eye(df), hermitian=True) < df:
            raise RankDeficiencyError("f") from None
        raise RankDeficiencyError("b") from None
    return linalg.cho_solve((c, low), rhs)


def weighted_ridge_fit(src: LabeledSample, fmap: FeatureMap, weights,
                       ridge: float = 0.0) -> np.ndarray:
    """Minimizer of (1/n) * sum_i w_i (phi(x_i)' theta - y_i)^2 + ridge*||theta||^2."""
    w = np.asarray(weights, dtype=float)
    if w.shape != src.xs.shape:
        raise ValueError("weights must match the sample length")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and nonnegative")
    if not np.any(w > 0):
        raise DegenerateWeightsError("all importance weights are zero")
    X = fmap.design_matrix(src.xs)
    n = src.n
    Xw = X * w[:, None]
    K = X.T @ Xw / n + ridge * np.eye(fmap.output_dim)
    rhs = Xw.T @ src.ys / n
    try:
        c, low = linalg.cho_factor(K, lower=True)
    except linalg.LinAlgError:
        raise RankDeficiencyError("f") from None
    return linalg.cho_solve((c, low), rhs)


# -- exact-ratio weights -------------------------------------------------------

def exact_ratio_weights(p: DensityModel, q: DensityModel, xs) -> np.ndarray:
    """Pointwise density ratio q(x)/p(x): unnormalized, unclipped."""
    pts = np.asarray(xs, dtype=float)
    pv = p.pdf_array(pts)
    qv = q.pdf_array(pts)
    if np.any(pv <= 0.0):
        raise ZeroDivisionError("source density vanishes at a sample point; "
                                "the raw density ratio is undefined there")
    return qv / pv


def exact_relative_weights(p: DensityModel, q: DensityModel, lam: float, xs) -> np.ndarray:
    """Smoothed ratio q(x) / (p(x) + lam*q(x)); every entry lies in [0, 1/lam].

    lam == 0 is permitted here only, and falls back to the raw ratio.
    """
    if lam < 0:
        raise ValueError(f"lam must be nonnegative, got {lam}")
    if lam == 0.0:
        return exact_ratio_weights(p, q, xs)
    pts = np.asarray(xs, dtype=float)
    pv = p.pdf_array(pts)
    qv = q.pdf_array(pts)
    denom = pv + lam * qv
    if np.any(denom <= 0.0):
        raise ZeroDivisionError("p + lam*q vanishes at a sample point")
    return qv / denom


# -- kernel estimation of the relative ratio -----------------------------------

@dataclass(frozen=True)
class KernelRatioEstimate:
    """Fitted relative-ratio estimator x -> max(0, sum_j beta_j k(x, c_j))."""

    centers: np.ndarray
    bandwidth: float
    beta: np.ndarray
    alpha: float
    ridge: float

    def __call__(self, xs) -> np.ndarray:
        pts = np.atleast_1d(np.asarray(xs, dtype=float))
        K = _gauss_kernel(pts, self.centers, self.bandwidth)
        return np.maximum(0.0, K @ self.beta)


def _gauss_kernel(xs: np.ndarray, centers: np.ndarray, bandwidth: float) -> np.ndarray:
    d = xs[:, None] - centers[None, :]
    return np.exp(-d**2 / (2.0 * bandwidth**2))


def kernel_relative_ratio_fit(src_xs, tgt_xs, alpha: float, centers,
                              bandwidth: float, ridge: float) -> KernelRatioEstimate:
    """Least-squares fit of the alpha-relative density ratio q/(alpha*q + (1-alpha)*p).

    Solves the quadratic (1/2) b'Hb - h'b + (ridge/2)||b||^2 with
    H = alpha * target kernel second moment + (1 - alpha) * source kernel
    second moment and h the mean kernel vector over target samples.
    """
    if not (0.0 <= alpha < 1.0):
        raise ValueError(f"alpha must be in [0, 1), got {alpha}")
    if bandwidth <= 0 or ridge <= 0:
        raise ValueError("bandwidth and ridge must be positive")
    cs = np.asarray(centers, dtype=float)
    if cs.size == 0:
        raise ValueError("need at least one kernel center")
    src = np.asarray(src_xs, dtype=float)
    tgt = np.asarray(tgt_xs, dtype=float)
    Ks = _gauss_kernel(src, cs, bandwidth)
    Kt = _gauss_kernel(tgt, cs, bandwidth)
    H = alpha * (Kt.T @ Kt) / tgt.size + (1.0 - alpha) * (Ks.T @ Ks) / src.size
    h = Kt.mean(axis=0)
    beta = linalg.solve(H + ridge * np.eye(cs.size), h, assume_a="pos")
    return KernelRatioEstimate(centers=cs, bandwidth=bandwidth, beta=beta,
                               alpha=alpha, ridge=ridge)


def median_heuristic_bandwidth(xs) -> float:
    """Median of pairwise absolute gaps among pooled points (positive gaps only)."""
    pts = np.asarray(xs, dtype=float)
    gaps = np.abs(pts[:, None] - pts[None, :])
    pos = gaps[np.triu_indices(pts.size, k=1)]
    pos = pos[pos > 0]
    if pos.size == 0:
        raise ValueError("all points coincide; no median gap")
    return float(np.median(pos))


def kernel_relative_ratio_cv(src_xs, tgt_xs, alpha: float, rng: np.random.Generator,
                             max_centers: int = 100,
                             ridge_grid=(1e-3, 1e-2, 1e-1),
                             n_folds: int = 5) -> KernelRatioEstimate:
    """Protocol wrapper: subsampled target centers, median-heuristic bandwidth,
    and ridge chosen by K-fold cross-validation of the fit objective."""
    src = np.asarray(src_xs, dtype=float)
    tgt = np.asarray(tgt_xs, dtype=float)
    n_centers = min(max_centers, tgt.size)
    centers = rng.choice(tgt, size=n_centers, replace=False)
    bandwidth = median_heuristic_bandwidth(np.concatenate([src, tgt]))

    perm_s = rng.permutation(src.size)
    perm_t = rng.permutation(tgt.size)
    fold_s = perm_s % n_folds
    fold_t = perm_t % n_folds
    scores = np.zeros(len(ridge_grid))
    for k in range(n_folds):
        fit = lambda r: kernel_relative_ratio_fit(  # noqa: E731
            src[perm_s[fold_s != k]], tgt[perm_t[fold_t != k]],
            alpha, centers, bandwidth, r)
        s_hold = src[perm_s[fold_s == k]]
        t_hold = tgt[perm_t[fold_t == k]]
        for i, r in enumerate(ridge_grid):
            est = fit(r)
            ws, wt = est(s_hold), est(t_hold)
            # Held-out value of the unpenalized objective.
            scores[i] += (0.5 * (alpha * np.mean(wt**2) + (1 - alpha) * np.mean(ws**2))
                          - np.mean(wt))
    best = ridge_grid[int(np.argmin(scores))]
    return kernel_relative_ratio_fit(src, tgt, alpha, centers, bandwidth, best)
