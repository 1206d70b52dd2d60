"""One-dimensional covariate laws on [0, 1].

Every law used by the synthetic experiments lives here: Beta families, the
uniform law, point-mass mixtures (an atom plus a continuous part), and the
exponential-cosine family whose density ratio against the uniform law is
bounded and smooth.  Each law exposes an exact pointwise density for its
absolutely continuous part, an explicit atom list, and exact sampling from a
caller-owned ``numpy.random.Generator``.

Conventions:
  - ``pdf`` returns only the absolutely continuous density; atoms are never
    folded into it and must be queried via ``atoms()``.
  - All models are immutable after construction and safe to share across
    concurrent trials; sampling mutates only the caller's generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special


class SupportError(ValueError):
    """An evaluation point lies outside the [0, 1] support."""


def _check_support(x: np.ndarray) -> None:
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise SupportError("evaluation points must lie in [0, 1]")


@dataclass(frozen=True)
class DensityModel:
    """Base class for laws on [0, 1]; subclasses implement pdf/sample."""

    def pdf(self, x) -> np.ndarray:
        """Absolutely continuous density at ``x`` (scalar or array)."""
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Draw ``count`` i.i.d. points using the caller's generator."""
        raise NotImplementedError

    def atoms(self) -> list[tuple[float, float]]:
        """(location, mass) pairs; empty for purely continuous laws."""
        return []

    def total_atom_mass(self) -> float:
        return float(sum(m for _, m in self.atoms()))

    def pdf_array(self, x) -> np.ndarray:
        """pdf over an array input, validated once."""
        xs = np.asarray(x, dtype=float)
        _check_support(xs)
        return self.pdf(xs)


def _require_count(count: int) -> int:
    if count < 1:
        raise ValueError(f"sample count must be >= 1, got {count}")
    return int(count)


@dataclass(frozen=True)
class Uniform01(DensityModel):
    """Standard uniform law on [0, 1]."""

    def pdf(self, x) -> np.ndarray:
        xs = np.asarray(x, dtype=float)
        _check_support(xs)
        return np.ones_like(xs)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.uniform(0.0, 1.0, size=_require_count(count))


@dataclass(frozen=True)
class Beta(DensityModel):
    """Beta(a, b) law on [0, 1], densities computed in closed form.

    Sampling delegates to ``Generator.beta`` (the two-Gamma construction),
    which is exact; this choice is recorded here for reproducibility.
    """

    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError(f"Beta parameters must be positive, got ({self.a}, {self.b})")

    def pdf(self, x) -> np.ndarray:
        xs = np.asarray(x, dtype=float)
        _check_support(xs)
        log_norm = special.betaln(self.a, self.b)
        with np.errstate(divide="ignore", invalid="ignore"):
            # power() keeps the a == 1 (resp. b == 1) endpoint finite: 0**0 == 1.
            val = np.power(xs, self.a - 1.0) * np.power(1.0 - xs, self.b - 1.0)
        return val * math.exp(-log_norm)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.beta(self.a, self.b, size=_require_count(count))


@dataclass(frozen=True)
class TiltedCosine(DensityModel):
    """Density proportional to exp(kappa * cos(2*pi*x)) on [0, 1].

    The normalizer is the order-zero modified Bessel function I0(kappa), so
    the max/min density ratio is exactly exp(2*kappa).  Against a uniform
    companion law this yields a smooth, strictly bounded density ratio.
    """

    kappa: float

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError(f"kappa must be nonnegative, got {self.kappa}")

    def pdf(self, x) -> np.ndarray:
        xs = np.asarray(x, dtype=float)
        _check_support(xs)
        return np.exp(self.kappa * np.cos(2.0 * np.pi * xs)) / special.i0(self.kappa)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        # Exact rejection from the uniform proposal; the acceptance ratio
        # exp(kappa*(cos(2 pi x) - 1)) is bounded by 1, and the expected
        # acceptance rate I0(kappa)/exp(kappa) stays workable for kappa <= 4.
        count = _require_count(count)
        out = np.empty(count)
        filled = 0
        while filled < count:
            block = max(count - filled, 64)
            props = rng.uniform(0.0, 1.0, size=2 * block)
            cand, unif = props[:block], props[block:]
            accept = unif <= np.exp(self.kappa * (np.cos(2.0 * np.pi * cand) - 1.0))
            kept = cand[accept]
            take = min(kept.size, count - filled)
            out[filled:filled + take] = kept[:take]
            filled += take
        return out


def ratio_span_kappa(low: float, high: float) -> float:
    """kappa such that the max/min density ratio of TiltedCosine equals high/low."""
    if not (0 < low < high):
        raise ValueError("need 0 < low < high")
    return 0.5 * math.log(high / low)


@dataclass(frozen=True)
class AtomMixture(DensityModel):
    """Mixture of a point mass at ``atom_location`` and a continuous part.

    With mass w at the atom, the continuous density is scaled by (1 - w) so
    that continuous mass plus atom mass is one.
    """

    atom_location: float
    atom_mass: float
    continuous_part: DensityModel

    def __post_init__(self):
        if not (0.0 <= self.atom_mass <= 1.0):
            raise ValueError(f"atom mass must be in [0, 1], got {self.atom_mass}")
        if not (0.0 <= self.atom_location <= 1.0):
            raise SupportError(f"atom location must be in [0, 1], got {self.atom_location}")

    def pdf(self, x) -> np.ndarray:
        return (1.0 - self.atom_mass) * self.continuous_part.pdf(x)

    def atoms(self) -> list[tuple[float, float]]:
        if self.atom_mass == 0.0:
            return []
        return [(self.atom_location, self.atom_mass)]

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        count = _require_count(count)
        is_atom = rng.uniform(0.0, 1.0, size=count) < self.atom_mass
        out = np.full(count, self.atom_location, dtype=float)
        n_cont = int(np.sum(~is_atom))
        if n_cont:
            out[~is_atom] = self.continuous_part.sample(rng, n_cont)
        return out


def pointmass_source(ratio_bound: float) -> AtomMixture:
    """Source law (1/L)*Uniform + (1 - 1/L)*delta_0 with ratio bound L >= 1."""
    if ratio_bound < 1:
        raise ValueError(f"ratio bound must be >= 1, got {ratio_bound}")
    return AtomMixture(0.0, 1.0 - 1.0 / ratio_bound, Uniform01())


@dataclass(frozen=True)
class ShiftPath:
    """A corruption path between two source laws.

    Level 0 is the matched case (source equals the target marginal) and
    level 1 is the fully shifted endpoint.  Levels are kept on record for
    sweep configs but interpolation accepts any point of [0, 1].
    """

    endpoint_a: DensityModel
    endpoint_b: DensityModel
    levels: tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self):
        for lv in self.levels:
            if not (0.0 <= lv <= 1.0):
                raise ValueError(f"corruption level must be in [0, 1], got {lv}")


def interpolate_source(path: ShiftPath, level: float) -> DensityModel:
    """Source law at a corruption level along a Beta-to-Beta path.

    The Beta parameters are interpolated linearly; the sweep never states a
    path through law space beyond its endpoints, and the linear parameter
    path is the simplest one passing through valid Beta laws with an exact
    matched endpoint.
    """
    if not (0.0 <= level <= 1.0):
        raise ValueError(f"corruption level must be in [0, 1], got {level}")
    a_end, b_end = path.endpoint_a, path.endpoint_b
    if not (isinstance(a_end, Beta) and isinstance(b_end, Beta)):
        raise TypeError("interpolation is defined for Beta endpoints only")
    t = float(level)
    return Beta((1 - t) * a_end.a + t * b_end.a, (1 - t) * a_end.b + t * b_end.b)


def equal_spaced_levels(count: int) -> tuple[float, ...]:
    """``count`` equally spaced corruption levels covering [0, 1]."""
    if count < 2:
        raise ValueError("need at least 2 levels")
    return tuple(np.linspace(0.0, 1.0, count).tolist())


# -- free-function forms used by config-driven code ---------------------------

def pdf(model: DensityModel, x):
    return model.pdf_array(x)


def sample(model: DensityModel, rng: np.random.Generator, count: int) -> np.ndarray:
    return model.sample(rng, count)


def model_from_config(node: dict) -> DensityModel:
    """Build a density from a tagged config record, e.g. {"kind": "beta", "a": 2, "b": 5}."""
    kind = node.get("kind")
    if kind == "beta":
        return Beta(float(node["a"]), float(node["b"]))
    if kind == "uniform01":
        return Uniform01()
    if kind == "tilted_cosine":
        return TiltedCosine(float(node["kappa"]))
    if kind == "atom_mixture":
        return AtomMixture(
            float(node["atom_location"]),
            float(node["atom_mass"]),
            model_from_config(node["continuous_part"]),
        )
    raise ValueError(f"unknown density kind: {kind!r}")
