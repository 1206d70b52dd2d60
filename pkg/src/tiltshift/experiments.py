"""Synthetic experiment harness: data generation, method fits, aggregation.

Four experiments are supported, each driven by an :class:`ExperimentConfig`:

  - LinearShiftSweep: misspecified cubic predictor under a Beta-to-Beta
    source sweep against a fixed Beta target, with exact-weight baselines.
  - LambdaSensitivity: the same problem at one corruption level, sweeping
    the penalty strength with a source-ERM reference.
  - PointMassRate: worst-case atom-at-zero source against a uniform target,
    checking the effective-sample-size rate of the tilted fit.
  - BoundedRatioSweep: uniform source against a smooth bounded-ratio
    target, sweeping predictor/auxiliary dimensions and the penalty.

Reproducibility contract: every trial draws from its own generator derived
as ``SeedSequence(entropy=seed, spawn_key=(cell_index, trial_index))``, so
results are bit-identical for a fixed (config, seed) regardless of worker
count or trial scheduling, and adding trials never perturbs earlier draws.
Aggregation is a deterministic reduction ordered by (cell, trial).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

import numpy as np
from scipy import linalg

from .densities import (
    Beta,
    DensityModel,
    ShiftPath,
    TiltedCosine,
    Uniform01,
    equal_spaced_levels,
    interpolate_source,
    pointmass_source,
    ratio_span_kappa,
)
from .features import (
    FeatureMap,
    Fourier,
    ShiftedLegendre,
    Sine,
    pointmass_predictor_dim,
    uniform_rbf,
)
from .population import PopulationContext, TargetFunction, err_lambda_sq
from .solvers import (
    LabeledSample,
    TiltConfig,
    UnlabeledSample,
    exact_ratio_weights,
    exact_relative_weights,
    gram_blocks,
    kernel_relative_ratio_fit,
    median_heuristic_bandwidth,
    solve_blocks,
    weighted_ridge_fit,
)

EXPERIMENTS = ("LinearShiftSweep", "LambdaSensitivity", "PointMassRate", "BoundedRatioSweep")
METHODS = ("SourceERM", "ExactIW", "ExactRuLSIF", "KernelRuLSIF", "TILT")

DEFAULT_LAMBDA_GRID = tuple(10.0 ** k for k in range(-6, 5))
DEFAULT_LINEAR_TRUTH = {
    "base_coefs": (0.6, -0.9, 0.8, 1.1),
    # main residual: in the region the shifted source overweights
    "bump_amplitude": 0.8,
    "bump_center": 0.8,
    "bump_width": 0.05,
    "bump_freq": 40.0,
    # small residual in the target-heavy region, where the raw density
    # ratio explodes under shift; unfittable structure there is what makes
    # exact importance weighting fragile
    "left_amplitude": 0.25,
    "left_center": 0.12,
    "left_width": 0.03,
    "left_freq": 60.0,
}
DEFAULT_POINTMASS_TRUTH = {"series_exponent": 2.5, "series_terms": 200}
BOUNDED_RATIO_LOW, BOUNDED_RATIO_HIGH = 0.13, 7.8


def _default_bounded_coefs() -> tuple[float, ...]:
    """Degree-19 orthonormal-polynomial coefficients of the default truth.

    A low-degree base plus the degree-19 projection of a frequency-4 wave:
    exactly realizable for a dimension-20 polynomial class, far outside a
    dimension-8 one, and with the unrepresentable content lying inside a
    20-function trigonometric span (but only half inside an 8-function one,
    which carries cos(8*pi*x) and not sin(8*pi*x)).
    """
    fmap = ShiftedLegendre(19)
    xs = np.linspace(0.0, 1.0, 20001)
    ws = np.full(xs.size, 1.0 / (xs.size - 1))
    ws[0] *= 0.5
    ws[-1] *= 0.5
    wave = 0.9 * np.sin(2.0 * np.pi * 4.0 * xs + 0.7)
    coefs = fmap.design_matrix(xs).T @ (wave * ws)
    coefs[:4] += np.array([0.3, 0.5, -0.4, 0.3])
    return tuple(float(c) for c in coefs)


DEFAULT_BOUNDED_TRUTH = {"legendre_coefs": _default_bounded_coefs()}


class ConfigError(ValueError):
    """A config value violates the documented schema; carries the field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved experiment settings; every field has a config-file equivalent."""

    experiment: str
    seed: int = 20260808
    trials: int = 100
    n_source: int = 320
    n_target: int = 320
    n_test: int = 12000
    noise_sd: float = 0.1
    lambda_grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID
    methods: tuple[str, ...] = ("SourceERM", "ExactIW", "ExactRuLSIF", "TILT")
    # LinearShiftSweep / LambdaSensitivity
    levels: tuple[float, ...] = equal_spaced_levels(21)
    level: float = 0.7
    f_degree: int = 3
    b_centers: int = 25
    # The auxiliary bandwidth and ridge keep the penalty effective beyond
    # the largest target sample: narrow kernels can hide auxiliary mass in
    # the region the empirical penalty never sees, and then no penalty
    # strength recovers the source-only fit.
    b_bandwidth: float = 0.2
    ridge_f: float = 1e-8
    ridge_b: float = 1e-2
    target_beta: tuple[float, float] = (2.0, 5.0)
    source_endpoint_beta: tuple[float, float] = (5.0, 2.0)
    # PointMassRate
    n_grid: tuple[int, ...] = (512, 1024, 2048, 4096, 8192)
    l_grid: tuple[int, ...] = (1, 2, 4, 8)
    pointmass_noise_sd: float = 0.2
    # BoundedRatioSweep
    dim_pairs: tuple[tuple[int, int], ...] = ((20, 8), (8, 20), (8, 8), (20, 20))
    bounded_noise_sd: float = 0.08
    # truth overrides, keyed per experiment family
    truth: dict = field(default_factory=dict)
    # optional tagged records overriding the linear experiments' classes
    f_features: dict | None = None
    b_features: dict | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError("experiment", f"must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.trials < 1:
            raise ConfigError("trials", "must be >= 1")
        if not self.lambda_grid:
            raise ConfigError("lambda_grid", "must be nonempty")
        if any(l <= 0 for l in self.lambda_grid):
            raise ConfigError("lambda_grid", "entries must be positive")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError("methods", f"unknown methods {bad}; valid: {METHODS}")
        if not self.methods:
            raise ConfigError("methods", "must be nonempty")
        for name in ("n_source", "n_target", "n_test"):
            if getattr(self, name) < 1:
                raise ConfigError(name, "must be >= 1")
        if self.noise_sd < 0:
            raise ConfigError("noise_sd", "must be nonnegative")
        if not (0.0 <= self.level <= 1.0):
            raise ConfigError("level", "must be in [0, 1]")
        if not self.levels or any(not 0 <= lv <= 1 for lv in self.levels):
            raise ConfigError("levels", "must be a nonempty sequence in [0, 1]")


_CONFIG_TUPLE_FIELDS = {
    "lambda_grid": float, "methods": str, "levels": float,
    "n_grid": int, "l_grid": int,
}


def _beta_params_from_tagged(key: str, node: dict) -> tuple[float, float]:
    from .densities import Beta, model_from_config
    try:
        model = model_from_config(node)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(key, f"bad density record: {exc}") from None
    if not isinstance(model, Beta):
        raise ConfigError(key, "the sweep endpoints must be beta laws")
    return (model.a, model.b)


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build a config from a parsed JSON document, reporting bad field paths.

    Densities may be given as tagged records (``target_density``,
    ``source_endpoint_density``) and the linear experiments' classes as
    tagged feature records (``f_features``, ``b_features``).
    """
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    raw = dict(raw)
    for tagged, tuple_key in (("target_density", "target_beta"),
                              ("source_endpoint_density", "source_endpoint_beta")):
        if tagged in raw:
            raw[tuple_key] = _beta_params_from_tagged(tagged, raw.pop(tagged))
    known = set(ExperimentConfig.__dataclass_fields__)
    kwargs = {}
    for key, value in raw.items():
        if key in ("schema_version", "description"):
            continue
        if key not in known:
            raise ConfigError(key, "unknown config field")
        if key in _CONFIG_TUPLE_FIELDS:
            conv = _CONFIG_TUPLE_FIELDS[key]
            try:
                value = tuple(conv(v) for v in value)
            except (TypeError, ValueError):
                raise ConfigError(key, "must be a sequence") from None
        elif key == "dim_pairs":
            try:
                value = tuple((int(a), int(b)) for a, b in value)
            except (TypeError, ValueError):
                raise ConfigError(key, "must be a sequence of [d_f, d_b] pairs") from None
        elif key in ("target_beta", "source_endpoint_beta"):
            try:
                a, b = value
                value = (float(a), float(b))
            except (TypeError, ValueError):
                raise ConfigError(key, "must be an [a, b] pair") from None
        kwargs[key] = value
    if "experiment" not in kwargs:
        raise ConfigError("experiment", "missing required field")
    for key in ("f_features", "b_features"):
        if kwargs.get(key) is not None:
            from .features import feature_map_from_config
            try:
                feature_map_from_config(kwargs[key])
            except (ValueError, KeyError, TypeError) as exc:
                raise ConfigError(key, f"bad feature record: {exc}") from None
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError("<root>", str(exc)) from None


def trial_rng(seed: int, cell_index: int, trial_index: int) -> np.random.Generator:
    """Per-trial stream; the documented splitting rule for all experiments."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(cell_index, trial_index)))


# -- truth functions -----------------------------------------------------------

def linear_sweep_truth(overrides: dict | None = None) -> TargetFunction:
    """Cubic orthonormal-polynomial base plus two localized residuals.

    The main bump sits where the shifted source overweights, so a cubic fit
    on shifted data extrapolates poorly into the target region; the small
    left bump sits where the target is heavy but the shifted source is
    thin, so rare source samples there carry enormous raw density-ratio
    weights.
    """
    spec = {**DEFAULT_LINEAR_TRUTH, **(overrides or {})}
    coefs = np.asarray(spec["base_coefs"], dtype=float)
    fmap = ShiftedLegendre(coefs.size - 1)

    def bump(xs, amp, center, width, freq):
        return amp * np.exp(-((xs - center) ** 2) / (2 * width**2)) * np.sin(freq * xs)

    def fn(xs):
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        out = fmap.design_matrix(xs) @ coefs
        out += bump(xs, spec["bump_amplitude"], spec["bump_center"],
                    spec["bump_width"], spec["bump_freq"])
        out += bump(xs, spec["left_amplitude"], spec["left_center"],
                    spec["left_width"], spec["left_freq"])
        return out

    return TargetFunction(fn, "cubic base plus localized high-frequency residuals")


def pointmass_truth(overrides: dict | None = None) -> tuple[TargetFunction, np.ndarray]:
    """Alternating-sign sine series with polynomially decaying coefficients.

    Truncated at ``series_terms`` (default 200); the omitted tail has squared
    norm below sum_{k>200} k^-5 < 3e-10, negligible at experiment scale.
    Returns the truth and its coefficient vector for the series oracle.
    """
    spec = {**DEFAULT_POINTMASS_TRUTH, **(overrides or {})}
    expo = float(spec["series_exponent"])
    terms = int(spec["series_terms"])
    ks = np.arange(1, terms + 1)
    coefs = (-1.0) ** (ks - 1) * ks ** (-expo)
    fmap = Sine(terms)

    def fn(xs):
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        return fmap.design_matrix(xs) @ coefs

    return TargetFunction(fn, "alternating sine series, exponent %g" % expo), coefs


def bounded_ratio_truth(overrides: dict | None = None) -> TargetFunction:
    """Orthonormal-polynomial series of degree 19: realizable for d_f = 20,
    misspecified for d_f = 8, with meaningful energy above degree 7."""
    spec = {**DEFAULT_BOUNDED_TRUTH, **(overrides or {})}
    coefs = np.asarray(spec["legendre_coefs"], dtype=float)
    fmap = ShiftedLegendre(coefs.size - 1)

    def fn(xs):
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        return fmap.design_matrix(xs) @ coefs

    return TargetFunction(fn, "degree-19 orthonormal polynomial series")


# -- records -------------------------------------------------------------------

@dataclass(frozen=True)
class TrialRecord:
    experiment: str
    method: str
    level_or_l: float
    n: int
    m: int
    lam: float | None
    d_f: int | None
    d_b: int | None
    target_mse: float | None
    seed: int
    trial: int
    status: str = "ok"


@dataclass(frozen=True)
class AggregateRecord:
    experiment: str
    method: str
    level_or_l: float | None
    n: int | None
    lam: float | None
    d_f: int | None
    d_b: int | None
    mean: float | None
    q25: float | None
    q75: float | None
    count: int


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    trial_rows: list[TrialRecord]
    aggregate_rows: list[AggregateRecord]
    companion: dict[str, list[dict]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def aggregate(self, method: str, **keys) -> AggregateRecord:
        """The unique aggregate cell matching the given key fields."""
        hits = [r for r in self.aggregate_rows
                if r.method == method and all(getattr(r, k) == v for k, v in keys.items())]
        if len(hits) != 1:
            raise KeyError(f"expected one aggregate for {method} {keys}, found {len(hits)}")
        return hits[0]


GROUP_FIELDS = {
    "LinearShiftSweep": ("method", "level_or_l"),
    "LambdaSensitivity": ("method", "lam"),
    "PointMassRate": ("method", "level_or_l", "n"),
    "BoundedRatioSweep": ("method", "d_f", "d_b", "lam"),
}


def aggregate_trials(experiment: str, rows: Iterable[TrialRecord]) -> list[AggregateRecord]:
    """Deterministic reduction: group by the experiment's cell key, in row order."""
    fields_ = GROUP_FIELDS[experiment]
    groups: dict[tuple, list[TrialRecord]] = {}
    for row in rows:
        groups.setdefault(tuple(getattr(row, f) for f in fields_), []).append(row)
    out = []
    for key, members in groups.items():
        vals = np.array([r.target_mse for r in members
                         if r.status == "ok" and r.target_mse is not None])
        keyed = dict(zip(fields_, key))
        out.append(AggregateRecord(
            experiment=experiment,
            method=keyed.get("method"),
            level_or_l=keyed.get("level_or_l"),
            n=keyed.get("n"),
            lam=keyed.get("lam"),
            d_f=keyed.get("d_f"),
            d_b=keyed.get("d_b"),
            mean=float(vals.mean()) if vals.size else None,
            q25=float(np.percentile(vals, 25)) if vals.size else None,
            q75=float(np.percentile(vals, 75)) if vals.size else None,
            count=len(members),
        ))
    return out


# -- oracle tuning and slope fitting --------------------------------------------

@dataclass(frozen=True)
class Candidate:
    """A fitted predictor with the metadata used for tie-breaking."""

    predict: Callable[[np.ndarray], np.ndarray]
    lam: float | None = None
    b_dim: int | None = None


def oracle_tune(candidates, truth: TargetFunction, target_law: DensityModel,
                quad_points: int = 20001) -> int:
    """Index of the candidate with least exact target MSE.

    The target MSE is computed by quadrature under the target law; ties are
    broken toward smaller penalty, then smaller auxiliary dimension.
    """
    cands = list(candidates)
    if not cands:
        raise ValueError("need at least one candidate")
    xs = np.linspace(0.0, 1.0, quad_points)
    ws = np.full(quad_points, 1.0 / (quad_points - 1))
    ws[0] *= 0.5
    ws[-1] *= 0.5
    qv = target_law.pdf_array(xs) * ws
    tv = truth(xs)
    inf = math.inf

    def sort_key(i):
        c = cands[i]
        mse = float((np.asarray(c.predict(xs)) - tv) ** 2 @ qv)
        return (mse, c.lam if c.lam is not None else inf,
                c.b_dim if c.b_dim is not None else inf)

    return min(range(len(cands)), key=sort_key)


def fit_loglog_slope(points) -> dict:
    """Ordinary least squares of log(mse) on log(size): slope, intercept, r2."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 3:
        raise ValueError("need at least 3 points")
    if any(x <= 0 or y <= 0 for x, y in pts):
        raise ValueError("log-log fit needs positive coordinates")
    lx = np.log([x for x, _ in pts])
    ly = np.log([y for _, y in pts])
    A = np.column_stack([lx, np.ones_like(lx)])
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    fitted = A @ coef
    ss_res = float(np.sum((ly - fitted) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return {"slope": float(coef[0]), "intercept": float(coef[1]), "r2": r2}


# -- shared fitting helpers ------------------------------------------------------

RIDGE_FLOOR = 1e-8


def _linear_classes(cfg: ExperimentConfig) -> tuple[FeatureMap, FeatureMap]:
    from .features import feature_map_from_config
    fmap = (feature_map_from_config(cfg.f_features) if cfg.f_features
            else ShiftedLegendre(cfg.f_degree))
    bmap = (feature_map_from_config(cfg.b_features) if cfg.b_features
            else uniform_rbf(cfg.b_centers, cfg.b_bandwidth))
    return fmap, bmap


def _tilt_lambda_sweep(src, tgt, fmap, bmap, lambda_grid,
                       ridge_f=RIDGE_FLOOR, ridge_b=RIDGE_FLOOR):
    """Solve the joint system across the penalty grid, reusing Gram blocks."""
    blocks = gram_blocks(src, tgt, fmap, bmap)
    out = []
    for lam in lambda_grid:
        theta, _, _ = solve_blocks(blocks, TiltConfig(lam=lam, ridge_f=ridge_f, ridge_b=ridge_b))
        out.append((lam, theta))
    return out


def _mse_on_points(theta, fmap, xs_test, truth_vals) -> float:
    pred = fmap.design_matrix(xs_test) @ theta
    return float(np.mean((pred - truth_vals) ** 2))


def _kernel_rulsif_weights_per_lambda(src_xs, tgt_xs, lambda_grid, rng,
                                      max_centers=100, ridge_grid=(1e-3, 1e-2, 1e-1),
                                      n_folds=5):
    """Estimated smoothed-ratio weights at the source points, per penalty value.

    One centers/bandwidth choice per trial; the relative parameter is
    alpha = lam/(1 + lam), and the fitted alpha-relative ratio is rescaled
    by 1/(1 + lam) to estimate q/(p + lam*q).  Ridge is chosen per lam by
    K-fold cross-validation of the unpenalized fit objective.
    """
    src = np.asarray(src_xs, dtype=float)
    tgt = np.asarray(tgt_xs, dtype=float)
    n_centers = min(max_centers, tgt.size)
    centers = rng.choice(tgt, size=n_centers, replace=False)
    bandwidth = median_heuristic_bandwidth(np.concatenate([src, tgt]))
    perm_s = rng.permutation(src.size)
    perm_t = rng.permutation(tgt.size)
    fold_s, fold_t = perm_s % n_folds, perm_t % n_folds

    out = {}
    for lam in lambda_grid:
        alpha = lam / (1.0 + lam)
        scores = np.zeros(len(ridge_grid))
        for k in range(n_folds):
            tr_s, tr_t = src[perm_s[fold_s != k]], tgt[perm_t[fold_t != k]]
            ho_s, ho_t = src[perm_s[fold_s == k]], tgt[perm_t[fold_t == k]]
            for i, r in enumerate(ridge_grid):
                est = kernel_relative_ratio_fit(tr_s, tr_t, alpha, centers, bandwidth, r)
                ws, wt = est(ho_s), est(ho_t)
                scores[i] += (0.5 * (alpha * np.mean(wt**2) + (1 - alpha) * np.mean(ws**2))
                              - np.mean(wt))
        ridge = ridge_grid[int(np.argmin(scores))]
        est = kernel_relative_ratio_fit(src, tgt, alpha, centers, bandwidth, ridge)
        out[lam] = est(src) / (1.0 + lam)
    return out


# -- linear shift sweep ----------------------------------------------------------

@dataclass(frozen=True)
class _TargetQuad:
    """Fixed-grid machinery for exact target MSE of linear-class predictors."""

    grid: np.ndarray
    q_weights: np.ndarray
    truth_grid: np.ndarray
    design: np.ndarray

    @classmethod
    def build(cls, target: DensityModel, fmap: FeatureMap, truth: TargetFunction,
              points: int = 20001):
        grid = np.linspace(0.0, 1.0, points)
        ws = np.full(points, 1.0 / (points - 1))
        ws[0] *= 0.5
        ws[-1] *= 0.5
        return cls(grid=grid, q_weights=target.pdf_array(grid) * ws,
                   truth_grid=truth(grid), design=fmap.design_matrix(grid))

    def exact_mse(self, theta: np.ndarray) -> float:
        return float((self.design @ theta - self.truth_grid) ** 2 @ self.q_weights)

    def select(self, candidates: list[tuple[float, np.ndarray]]) -> tuple[float, np.ndarray]:
        """(lam, theta) with least exact target MSE; grid order breaks ties."""
        best = None
        for lam, theta in candidates:
            mse = self.exact_mse(theta)
            if best is None or mse < best[0]:
                best = (mse, lam, theta)
        return best[1], best[2]


def _linear_trial(cfg: ExperimentConfig, level: float, cell: int, trial: int,
                  truth: TargetFunction, quad: _TargetQuad) -> list[TrialRecord]:
    rng = trial_rng(cfg.seed, cell, trial)
    target = Beta(*cfg.target_beta)
    path = ShiftPath(Beta(*cfg.target_beta), Beta(*cfg.source_endpoint_beta))
    source = interpolate_source(path, level)
    fmap, bmap = _linear_classes(cfg)

    xs = source.sample(rng, cfg.n_source)
    ys = truth(xs) + cfg.noise_sd * rng.standard_normal(cfg.n_source)
    xt = target.sample(rng, cfg.n_target)
    xtest = target.sample(rng, cfg.n_test)
    truth_test = truth(xtest)
    src = LabeledSample(xs, ys)
    tgt = UnlabeledSample(xt)

    def record(method, lam, d_b, mse, status="ok"):
        return TrialRecord(cfg.experiment, method, level, cfg.n_source, cfg.n_target,
                           lam, fmap.output_dim, d_b, mse, cfg.seed, trial, status)

    rows = []
    for method in cfg.methods:
        try:
            if method == "SourceERM":
                theta = weighted_ridge_fit(src, fmap, np.ones(cfg.n_source), cfg.ridge_f)
                rows.append(record(method, None, None,
                                   _mse_on_points(theta, fmap, xtest, truth_test)))
            elif method == "ExactIW":
                w = exact_ratio_weights(source, target, xs)
                theta = weighted_ridge_fit(src, fmap, w, cfg.ridge_f)
                rows.append(record(method, None, None,
                                   _mse_on_points(theta, fmap, xtest, truth_test)))
            elif method == "ExactRuLSIF":
                cands = []
                for lam in cfg.lambda_grid:
                    w = exact_relative_weights(source, target, lam, xs)
                    cands.append((lam, weighted_ridge_fit(src, fmap, w, cfg.ridge_f)))
                lam, theta = quad.select(cands)
                rows.append(record(method, lam, None,
                                   _mse_on_points(theta, fmap, xtest, truth_test)))
            elif method == "KernelRuLSIF":
                weights = _kernel_rulsif_weights_per_lambda(xs, xt, cfg.lambda_grid, rng)
                cands = [(lam, weighted_ridge_fit(src, fmap, weights[lam], cfg.ridge_f))
                         for lam in cfg.lambda_grid]
                lam, theta = quad.select(cands)
                rows.append(record(method, lam, None,
                                   _mse_on_points(theta, fmap, xtest, truth_test)))
            elif method == "TILT":
                cands = _tilt_lambda_sweep(src, tgt, fmap, bmap, cfg.lambda_grid,
                                           cfg.ridge_f, cfg.ridge_b)
                lam, theta = quad.select(cands)
                rows.append(record(method, lam, bmap.output_dim,
                                   _mse_on_points(theta, fmap, xtest, truth_test)))
        except (ValueError, ZeroDivisionError, linalg.LinAlgError):
            rows.append(record(method, None, None, None, status="failed"))
    return rows


def run_linear_shift_sweep(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Target MSE per (method, corruption level).

    Penalties are tuned oracle-wise by exact quadrature target MSE (the
    selection metric sees no test noise, so tuning cannot ride the
    evaluation draw); the reported MSE uses the Monte-Carlo test draw.
    """
    truth = linear_sweep_truth(cfg.truth)
    quad = _TargetQuad.build(Beta(*cfg.target_beta), _linear_classes(cfg)[0], truth)
    tasks = [(cell, level, trial)
             for cell, level in enumerate(cfg.levels)
             for trial in range(cfg.trials)]
    rows = _run_tasks(
        tasks, threads,
        lambda cell, level, trial: _linear_trial(cfg, level, cell, trial, truth, quad))
    return ExperimentResult(cfg, rows, aggregate_trials(cfg.experiment, rows))


# -- lambda sensitivity -----------------------------------------------------------

def _lambda_sensitivity_trial(cfg: ExperimentConfig, cell: int, trial: int,
                              truth: TargetFunction) -> list[TrialRecord]:
    rng = trial_rng(cfg.seed, cell, trial)
    target = Beta(*cfg.target_beta)
    path = ShiftPath(Beta(*cfg.target_beta), Beta(*cfg.source_endpoint_beta))
    source = interpolate_source(path, cfg.level)
    fmap, bmap = _linear_classes(cfg)

    xs = source.sample(rng, cfg.n_source)
    ys = truth(xs) + cfg.noise_sd * rng.standard_normal(cfg.n_source)
    xt = target.sample(rng, cfg.n_target)
    xtest = target.sample(rng, cfg.n_test)
    truth_test = truth(xtest)
    src = LabeledSample(xs, ys)
    tgt = UnlabeledSample(xt)

    rows = []
    theta = weighted_ridge_fit(src, fmap, np.ones(cfg.n_source), cfg.ridge_f)
    rows.append(TrialRecord(cfg.experiment, "SourceERM", cfg.level, cfg.n_source,
                            cfg.n_target, None, fmap.output_dim, None,
                            _mse_on_points(theta, fmap, xtest, truth_test),
                            cfg.seed, trial))
    for lam, theta in _tilt_lambda_sweep(src, tgt, fmap, bmap, cfg.lambda_grid,
                                         cfg.ridge_f, cfg.ridge_b):
        rows.append(TrialRecord(cfg.experiment, "TILT", cfg.level, cfg.n_source,
                                cfg.n_target, lam, fmap.output_dim, bmap.output_dim,
                                _mse_on_points(theta, fmap, xtest, truth_test),
                                cfg.seed, trial))
    return rows


def run_lambda_sensitivity(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Tilted-fit target MSE per penalty value at one corruption level, with a
    source-ERM reference cell (lam column empty)."""
    truth = linear_sweep_truth(cfg.truth)
    tasks = [(0, None, trial) for trial in range(cfg.trials)]
    rows = _run_tasks(
        tasks, threads,
        lambda cell, _, trial: _lambda_sensitivity_trial(cfg, cell, trial, truth))
    return ExperimentResult(cfg, rows, aggregate_trials(cfg.experiment, rows))


# -- point-mass rate ---------------------------------------------------------------

def _pointmass_quad_grid(points: int = 20001):
    xs = np.linspace(0.0, 1.0, points)
    ws = np.full(points, 1.0 / (points - 1))
    ws[0] *= 0.5
    ws[-1] *= 0.5
    return xs, ws


def _pointmass_trial(cfg: ExperimentConfig, n: int, ratio_bound: int, cell: int,
                     trial: int, truth_grid: np.ndarray, grid: np.ndarray,
                     gw: np.ndarray, truth: TargetFunction) -> list[TrialRecord]:
    rng = trial_rng(cfg.seed, cell, trial)
    source = pointmass_source(float(ratio_bound))
    d_f = pointmass_predictor_dim(n, ratio_bound)
    d_erm = pointmass_predictor_dim(n, 1)
    b_dims = sorted({min(64, d_f), min(64, 2 * d_f), min(64, 4 * d_f)})

    xs = source.sample(rng, n)
    ys = truth(xs) + cfg.pointmass_noise_sd * rng.standard_normal(n)
    xt = Uniform01().sample(rng, n)
    src = LabeledSample(xs, ys)
    tgt = UnlabeledSample(xt)

    def quad_mse(theta, fmap):
        pred = fmap.design_matrix(grid) @ theta
        return float((pred - truth_grid) ** 2 @ gw)

    rows = []
    erm_map = Sine(d_erm)
    theta = weighted_ridge_fit(src, erm_map, np.ones(n), cfg.ridge_f)
    rows.append(TrialRecord(cfg.experiment, "SourceERM", float(ratio_bound), n, n,
                            None, d_erm, None, quad_mse(theta, erm_map),
                            cfg.seed, trial))

    fmap = Sine(d_f)
    best = None  # (mse, lam, d_b); grid order breaks ties toward smaller lam, then d_b
    for lam in cfg.lambda_grid:
        for d_b in b_dims:
            theta, _, _ = solve_blocks(
                gram_blocks(src, tgt, fmap, Sine(d_b)),
                TiltConfig(lam=lam, ridge_f=cfg.ridge_f, ridge_b=cfg.ridge_b))
            mse = quad_mse(theta, fmap)
            if best is None or mse < best[0]:
                best = (mse, lam, d_b)
    rows.append(TrialRecord(cfg.experiment, "TILT", float(ratio_bound), n, n,
                            best[1], d_f, best[2], best[0], cfg.seed, trial))
    return rows


def run_pointmass_rate(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Mean target MSE per (n, ratio bound) cell plus fitted log-log slopes.

    The source-ERM baseline sizes its class by the nominal sample count
    (ratio bound one): it does not observe the shift, so at a fixed
    effective size its variance grows with the bound; the tilted fit sizes
    its class by the effective count and tunes (auxiliary span, penalty)
    oracle-wise.  Target MSE is quadrature against the truncated series.
    """
    truth, _ = pointmass_truth(cfg.truth)
    grid, gw = _pointmass_quad_grid()
    truth_grid = truth(grid)

    cells = []
    warnings = []
    for n in cfg.n_grid:
        for lv in cfg.l_grid:
            if n / lv < 2:
                warnings.append(f"skipped degenerate cell n={n} L={lv} (n/L < 2)")
                continue
            cells.append((n, lv))

    tasks = [(idx, cell, trial) for idx, cell in enumerate(cells)
             for trial in range(cfg.trials)]
    rows = _run_tasks(
        tasks, threads,
        lambda idx, cell, trial: _pointmass_trial(
            cfg, cell[0], cell[1], idx, trial, truth_grid, grid, gw, truth))
    aggregates = aggregate_trials(cfg.experiment, rows)

    slopes = {}
    for method in ("TILT", "SourceERM"):
        pts = [(r.n / r.level_or_l, r.mean) for r in aggregates
               if r.method == method and r.mean is not None]
        if len(pts) >= 3:
            slopes[method] = fit_loglog_slope(pts)
    result = ExperimentResult(cfg, rows, aggregates, warnings=warnings)
    result.companion["slopes"] = [
        {"method": m, **v} for m, v in sorted(slopes.items())]
    return result


# -- bounded-ratio sweep -------------------------------------------------------------

def _bounded_trial(cfg: ExperimentConfig, d_f: int, d_b: int, cell: int, trial: int,
                   truth: TargetFunction, grid: np.ndarray, q_weights: np.ndarray,
                   truth_grid: np.ndarray) -> tuple[list[TrialRecord], list[dict]]:
    rng = trial_rng(cfg.seed, cell, trial)
    p = Uniform01()
    q = TiltedCosine(ratio_span_kappa(BOUNDED_RATIO_LOW, BOUNDED_RATIO_HIGH))
    fmap = ShiftedLegendre(d_f - 1)
    bmap = Fourier(d_b)

    xs = p.sample(rng, cfg.n_source)
    ys = truth(xs) + cfg.bounded_noise_sd * rng.standard_normal(cfg.n_source)
    xt = q.sample(rng, cfg.n_target)
    src = LabeledSample(xs, ys)
    tgt = UnlabeledSample(xt)

    def quad_mse(theta):
        pred = fmap.design_matrix(grid) @ theta
        return float((pred - truth_grid) ** 2 @ q_weights)

    rows = []
    excess_rows = []
    theta = weighted_ridge_fit(src, fmap, np.ones(cfg.n_source), cfg.ridge_f)
    # the reference is fit per (d_f, d_b) cell so it shares that cell's draws
    rows.append(TrialRecord(cfg.experiment, "SourceERM", 0.0, cfg.n_source, cfg.n_target,
                            None, d_f, d_b, quad_mse(theta), cfg.seed, trial))

    for lam, theta in _tilt_lambda_sweep(src, tgt, fmap, bmap, cfg.lambda_grid,
                                         cfg.ridge_f, cfg.ridge_b):
        rows.append(TrialRecord(cfg.experiment, "TILT", 0.0, cfg.n_source, cfg.n_target,
                                lam, d_f, d_b, quad_mse(theta), cfg.seed, trial))
        ctx = PopulationContext(p, q, lam, quad_points=20001)
        fitted = lambda pts, th=theta: fmap.design_matrix(np.atleast_1d(pts)) @ th  # noqa: E731
        excess_rows.append({
            "experiment": cfg.experiment, "method": "TILT", "level_or_L": 0.0,
            "n": cfg.n_source, "m": cfg.n_target, "lambda": lam, "d_f": d_f,
            "d_b": d_b, "weighted_excess": (1.0 + lam) * err_lambda_sq(ctx, fitted, truth),
            "seed": cfg.seed, "trial": trial, "status": "ok",
        })
    return rows, excess_rows


def run_bounded_ratio_sweep(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Tilted-fit target MSE per (d_f, d_b, lam) with per-d_f source-ERM
    references, plus the (1 + lam)-scaled weighted excess risk of each fit.

    Target MSE is exact quadrature under the known bounded-ratio target law.
    """
    truth = bounded_ratio_truth(cfg.truth)
    q = TiltedCosine(ratio_span_kappa(BOUNDED_RATIO_LOW, BOUNDED_RATIO_HIGH))
    grid, gw = _pointmass_quad_grid()
    q_weights = q.pdf_array(grid) * gw
    truth_grid = truth(grid)

    tasks = [(idx, pair, trial) for idx, pair in enumerate(cfg.dim_pairs)
             for trial in range(cfg.trials)]
    payloads = _run_tasks(
        tasks, threads,
        lambda idx, pair, trial: _bounded_trial(
            cfg, pair[0], pair[1], idx, trial, truth, grid, q_weights, truth_grid),
        flatten=False)
    rows = [r for rows_i, _ in payloads for r in rows_i]
    excess = [e for _, excess_i in payloads for e in excess_i]
    result = ExperimentResult(cfg, rows, aggregate_trials(cfg.experiment, rows))
    result.companion["weighted_excess"] = excess
    return result


# -- task runner --------------------------------------------------------------------

def _run_tasks(tasks, threads: int, fn, flatten: bool = True):
    """Execute per-trial tasks, deterministically ordered by task index.

    Each task owns its generator, so scheduling cannot perturb results; the
    reduction is by task order regardless of completion order.
    """
    if threads <= 1:
        outputs = [fn(*t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outputs = list(pool.map(lambda t: fn(*t), tasks))
    if flatten:
        return [row for out in outputs for row in out]
    return outputs


RUNNERS = {
    "LinearShiftSweep": run_linear_shift_sweep,
    "LambdaSensitivity": run_lambda_sensitivity,
    "PointMassRate": run_pointmass_rate,
    "BoundedRatioSweep": run_bounded_ratio_sweep,
}


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    return RUNNERS[cfg.experiment](cfg, threads=threads)


def scaled_for_acceptance(cfg: ExperimentConfig) -> ExperimentConfig:
    """The spec's scaled trial count for acceptance runs."""
    return replace(cfg, trials=min(cfg.trials, 20))
