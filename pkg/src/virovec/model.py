"""Geometry, trait space, the parametric rate catalog, and the (K, λ) rescaling.

Everything here is a pure function of (parameters, inputs, rng):
  - Domain: an axis-aligned rectangle with a finite set of host plants inside
    it and a compact trait box (1-D or 2-D) for the virus phenotype.
  - Rate catalog: birth b(plant, z), natural death d(z), competition c,
    vector-borne virus death γ(z), mutation (probability μ + kernel m),
    load β(t, y, plant, N, z) with a distance cutoff and Michaelis–Menten
    saturation in N, unload η(t, y, plant, z) with a distance cutoff, and
    the vector diffusion coefficients/drifts.
  - rate_bounds: closed-form suprema/infima per family, plus the geometric
    plant-multiplicity factors for the plant-summed load/unload rates.
  - rescale: the (K, λ) scaling — β/K^λ, c/K, K^{1−λ}·η, K^{1−λ}·γ and the
    K^{1−λ} diffusion time acceleration.

Rate families are a closed parametric set (constant, Gaussian peak in trait,
cutoff-radial in space) so configs stay serializable and every bound is
computable in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from ._stream import RandomStream

_MUTANT_RETRY_CAP = 10_000
_PMAX_SCAN = 256


class ConfigError(ValueError):
    """A configuration is structurally or semantically invalid."""


class NumericalError(RuntimeError):
    """A numerical procedure failed (blow-up, non-convergence, cap exceeded)."""


# ---------------------------------------------------------------------------
# Domain
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PlantRef:
    """One host plant: its index, position in the rectangle, and variety label."""

    index: int
    position: np.ndarray  # shape (2,)
    variety: int = 0


@dataclass(frozen=True)
class Domain:
    """Rectangle [0,L1]x[0,L2] with plant positions and the trait box."""

    extent: tuple[float, float]
    plant_positions: np.ndarray  # (n_plants, 2)
    plant_varieties: np.ndarray  # (n_plants,) int
    trait_box: np.ndarray  # (trait_dim, 2) rows of (lo, hi)

    @property
    def n_plants(self) -> int:
        return self.plant_positions.shape[0]

    @property
    def trait_dim(self) -> int:
        return self.trait_box.shape[0]

    @property
    def area(self) -> float:
        return self.extent[0] * self.extent[1]

    @property
    def trait_volume(self) -> float:
        return float(np.prod(self.trait_box[:, 1] - self.trait_box[:, 0]))

    def plant(self, index: int) -> PlantRef:
        return PlantRef(
            index=index,
            position=self.plant_positions[index],
            variety=int(self.plant_varieties[index]),
        )

    def plants(self) -> list[PlantRef]:
        return [self.plant(i) for i in range(self.n_plants)]

    def contains_trait(self, z: np.ndarray) -> bool:
        z = np.asarray(z, dtype=float).reshape(-1)
        return bool(
            z.shape[0] == self.trait_dim
            and np.all(z >= self.trait_box[:, 0])
            and np.all(z <= self.trait_box[:, 1])
        )


def build_domain(config: Mapping[str, Any]) -> Domain:
    """Build and validate a Domain from a plain mapping.

    Keys: ``extent`` ([L1, L2]); ``plants`` (explicit [[x,y], ...]) or
    ``lattice`` ({nx, ny, margin} regular grid strictly inside the rectangle);
    optional ``varieties`` (ints, one per plant, default all 0);
    ``trait_box`` ([[lo, hi]] or [[lo1, hi1], [lo2, hi2]]).
    """
    extent = tuple(float(v) for v in config["extent"])
    if len(extent) != 2 or extent[0] <= 0 or extent[1] <= 0:
        raise ConfigError(f"extent must be two positive lengths, got {extent!r}")

    if "plants" in config and "lattice" in config:
        raise ConfigError("give either explicit plants or a lattice, not both")
    if "plants" in config:
        positions = np.asarray(config["plants"], dtype=float)
        if positions.ndim != 2 or positions.shape[1] != 2:
            raise ConfigError("plants must be a list of [x, y] positions")
    elif "lattice" in config:
        lat = config["lattice"]
        nx, ny = int(lat["nx"]), int(lat["ny"])
        margin = float(lat.get("margin", 0.25))
        if nx < 1 or ny < 1:
            raise ConfigError("lattice nx/ny must be >= 1")
        xs = np.linspace(margin * extent[0], (1.0 - margin) * extent[0], nx)
        ys = np.linspace(margin * extent[1], (1.0 - margin) * extent[1], ny)
        positions = np.array([(x, y) for y in ys for x in xs], dtype=float)
    else:
        raise ConfigError("domain config needs 'plants' or 'lattice'")

    if positions.shape[0] == 0:
        raise ConfigError("plant list is empty")
    inside = (
        (positions[:, 0] > 0)
        & (positions[:, 0] < extent[0])
        & (positions[:, 1] > 0)
        & (positions[:, 1] < extent[1])
    )
    if not np.all(inside):
        bad = positions[~inside][0]
        raise ConfigError(f"plant at {tuple(bad)} is not strictly inside the rectangle")
    if len({(float(x), float(y)) for x, y in positions}) != positions.shape[0]:
        raise ConfigError("plant positions must be pairwise distinct")

    varieties = np.asarray(config.get("varieties", [0] * positions.shape[0]), dtype=np.int64)
    if varieties.shape[0] != positions.shape[0]:
        raise ConfigError("varieties must have one label per plant")

    trait_box = np.asarray(config["trait_box"], dtype=float)
    if trait_box.ndim != 2 or trait_box.shape[1] != 2 or trait_box.shape[0] not in (1, 2):
        raise ConfigError("trait_box must be [[lo, hi]] or [[lo1,hi1],[lo2,hi2]]")
    if not np.all(trait_box[:, 1] > trait_box[:, 0]):
        raise ConfigError("trait_box must have strictly positive volume")

    positions.setflags(write=False)
    varieties.setflags(write=False)
    trait_box.setflags(write=False)
    return Domain(
        extent=extent,
        plant_positions=positions,
        plant_varieties=varieties,
        trait_box=trait_box,
    )


# ---------------------------------------------------------------------------
# Rate families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateSpec:
    """Trait-dependent rate: constant or Gaussian peak.

    ``value`` / ``center`` may be per-variety (a sequence with one entry per
    variety label) to make the rate plant-dependent through plant varieties.
    """

    family: str  # "constant" | "gaussian_peak"
    value: float | tuple[float, ...] = 0.0
    amplitude: float = 0.0
    center: tuple[tuple[float, ...], ...] = ()  # one center per variety
    width: float = 1.0

    def __post_init__(self):
        if self.family not in ("constant", "gaussian_peak"):
            raise ConfigError(f"unknown rate family {self.family!r}")
        if self.family == "gaussian_peak":
            if self.amplitude < 0:
                raise ConfigError("gaussian_peak amplitude must be >= 0")
            if self.width <= 0:
                raise ConfigError("gaussian_peak width must be > 0")
            if not self.center:
                raise ConfigError("gaussian_peak needs a center")
        else:
            vals = self.value if isinstance(self.value, tuple) else (self.value,)
            if any(v < 0 or not math.isfinite(v) for v in vals):
                raise ConfigError("constant rate must be finite and >= 0")

    def _center_for(self, variety: int) -> tuple[float, ...]:
        if len(self.center) == 1:
            return self.center[0]
        return self.center[variety]

    def _value_for(self, variety: int) -> float:
        if isinstance(self.value, tuple):
            return self.value[0] if len(self.value) == 1 else self.value[variety]
        return self.value

    def __call__(self, z: Sequence[float], variety: int = 0) -> float:
        if self.family == "constant":
            return float(self._value_for(variety))
        center = self._center_for(variety)
        q = 0.0
        for zd, cd in zip(z, center):
            q += (zd - cd) * (zd - cd)
        return self.amplitude * math.exp(-q / (2.0 * self.width * self.width))

    def extremes(self, trait_box: np.ndarray, varieties: Sequence[int]) -> tuple[float, float]:
        """Exact (inf, sup) over trait_box x the given variety labels.

        Gaussian peak: the sup is at the center clamped into the box, the inf
        at the farthest box corner from the center.
        """
        if self.family == "constant":
            vals = [self._value_for(v) for v in set(varieties)]
            return min(vals), max(vals)
        lo, hi = trait_box[:, 0], trait_box[:, 1]
        inf, sup = math.inf, -math.inf
        for v in set(varieties):
            c = np.asarray(self._center_for(v), dtype=float)
            d_near = np.linalg.norm(np.clip(c, lo, hi) - c)
            d_far = np.linalg.norm(np.maximum(np.abs(lo - c), np.abs(hi - c)))
            sup = max(sup, self.amplitude * math.exp(-(d_near**2) / (2 * self.width**2)))
            inf = min(inf, self.amplitude * math.exp(-(d_far**2) / (2 * self.width**2)))
        return inf, sup


@dataclass(frozen=True)
class KernelSpec:
    """Mutation kernel m(z, ·): truncated Gaussian around the parent, or uniform.

    Densities are with respect to Lebesgue measure on the trait box and
    integrate to 1 over the box (the Gaussian carries the per-parent
    truncation normalizer).
    """

    family: str = "gaussian"  # "gaussian" | "uniform"
    width: float = 0.1

    def __post_init__(self):
        if self.family not in ("gaussian", "uniform"):
            raise ConfigError(f"unknown kernel family {self.family!r}")
        if self.family == "gaussian" and self.width <= 0:
            raise ConfigError("gaussian kernel width must be > 0")

    def density(self, z_from: np.ndarray, z_to: np.ndarray, trait_box: np.ndarray) -> float:
        """m(z_from, z_to): normalized density of the offspring trait."""
        vol = float(np.prod(trait_box[:, 1] - trait_box[:, 0]))
        if self.family == "uniform":
            return 1.0 / vol
        w = self.width
        dens = 1.0
        for d in range(trait_box.shape[0]):
            lo, hi = trait_box[d]
            zf, zt = float(z_from[d]), float(z_to[d])
            phi = math.exp(-((zt - zf) ** 2) / (2 * w * w)) / (w * math.sqrt(2 * math.pi))
            norm = 0.5 * (
                math.erf((hi - zf) / (w * math.sqrt(2))) - math.erf((lo - zf) / (w * math.sqrt(2)))
            )
            dens *= phi / norm
        return dens


@dataclass(frozen=True)
class LoadSpec:
    """Vector charging rate β(t, y, plant, N, z).

    β = β₀ · 1{|y − x| ≤ r_p} · N/(h+N) · (optional trait modulation). The
    Michaelis–Menten factor keeps the rate bounded and Lipschitz in N with
    slope at most β₀/h.
    """

    beta0: float
    r_p: float
    half_sat: float
    trait_modulation: RateSpec | None = None

    def __post_init__(self):
        if self.beta0 < 0:
            raise ConfigError("load beta0 must be >= 0")
        if self.r_p <= 0:
            raise ConfigError("load cutoff radius must be > 0")
        if self.half_sat <= 0:
            raise ConfigError("load half-saturation must be > 0")


@dataclass(frozen=True)
class UnloadSpec:
    """Virus deposition rate η(t, y, plant, z) = η₀ · 1{|y − x| ≤ r_p}."""

    eta0: float
    r_p: float

    def __post_init__(self):
        if self.eta0 < 0:
            raise ConfigError("unload eta0 must be >= 0")
        if self.r_p <= 0:
            raise ConfigError("unload cutoff radius must be > 0")


@dataclass(frozen=True)
class ModelParams:
    """The full rate catalog in parametric, serializable form."""

    birth: RateSpec
    natural_death: RateSpec
    competition: float
    vector_death: RateSpec
    mutation_prob: float
    mutation_kernel: KernelSpec
    load: LoadSpec
    unload: UnloadSpec
    drift_u: tuple[float, float] = (0.0, 0.0)
    drift_c: tuple[float, float] = (0.0, 0.0)
    sigma_u: float = 1.0
    sigma_c: float = 1.0
    trait_box: np.ndarray | None = None  # set for trait validation and sampling

    def __post_init__(self):
        if self.competition < 0:
            raise ConfigError("competition c must be >= 0")
        if not 0.0 <= self.mutation_prob <= 1.0:
            raise ConfigError("mutation_prob must lie in [0, 1]")
        if self.sigma_u < 0 or self.sigma_c < 0:
            raise ConfigError("diffusion coefficients must be >= 0")

    def _check_trait(self, z: Sequence[float]) -> None:
        if self.trait_box is None:
            return
        box = self.trait_box
        z = np.asarray(z, dtype=float).reshape(-1)
        if z.shape[0] != box.shape[0] or np.any(z < box[:, 0]) or np.any(z > box[:, 1]):
            raise ConfigError(f"trait {z.tolist()} outside trait box")


@dataclass(frozen=True)
class Bounds:
    """Rate bounds: suprema/infima per family plus plant-sum geometry factors."""

    b_sup: float
    d_sup: float
    d_inf: float
    gamma_sup: float
    beta_sum_sup: float  # sup over (y, z, N) of Σ_plants β
    eta_sum_sup: float  # sup over (y, z) of Σ_plants η
    competition: float
    load_pair_sup: float  # sup of a single (virus, vector) load rate
    unload_pair_sup: float
    p_max_load: int  # max plants within the load cutoff of any point
    p_max_unload: int


@dataclass(frozen=True)
class ScaledParams:
    """ModelParams after the (K, λ) rescaling.

    β_K = K^{−λ} β, c_K = c/K, η_K = K^{1−λ} η, γ_K = K^{1−λ} γ, and the
    vector diffusion runs on K^{1−λ}-accelerated time (drift and σ² jointly).
    ``load_mass_div`` realizes the saturation-argument convention: the
    Michaelis–Menten factor sees N/load_mass_div (K under "normalized",
    1 under "raw").
    """

    base: ModelParams
    K: int
    lam: float
    beta0_eff: float
    c_eff: float
    eta0_eff: float
    gamma_factor: float
    accel: float
    load_mass_div: float


# ---------------------------------------------------------------------------
# Rate evaluation
# ---------------------------------------------------------------------------


def eval_birth(params: ModelParams, plant: PlantRef, z: Sequence[float]) -> float:
    """Reproduction rate b(plant, z) of one virus."""
    params._check_trait(z)
    return params.birth(z, plant.variety)


def eval_death(params: ModelParams, z: Sequence[float], n_on_plant: float) -> float:
    """Death rate d(z) + c·N of one virus among N on its plant."""
    if n_on_plant < 0:
        raise ConfigError("n_on_plant must be >= 0")
    params._check_trait(z)
    return params.natural_death(z) + params.competition * n_on_plant


def _saturation(n: float, h: float) -> float:
    return n / (h + n) if n > 0 else 0.0


def eval_load(
    params: ModelParams,
    t: float,
    y: Sequence[float],
    plant: PlantRef,
    n_on_plant: float,
    z: Sequence[float],
) -> float:
    """Charging rate β(t, y, plant, N, z) for one (virus, free vector) pair."""
    spec = params.load
    dx = y[0] - plant.position[0]
    dy = y[1] - plant.position[1]
    if dx * dx + dy * dy > spec.r_p * spec.r_p:
        return 0.0
    mod = 1.0 if spec.trait_modulation is None else spec.trait_modulation(z, plant.variety)
    return spec.beta0 * _saturation(n_on_plant, spec.half_sat) * mod


def eval_unload(
    params: ModelParams, t: float, y: Sequence[float], plant: PlantRef, z: Sequence[float]
) -> float:
    """Deposition rate η(t, y, plant, z) for one charged vector onto one plant."""
    spec = params.unload
    dx = y[0] - plant.position[0]
    dy = y[1] - plant.position[1]
    if dx * dx + dy * dy > spec.r_p * spec.r_p:
        return 0.0
    return spec.eta0


def eval_vector_death(params: ModelParams, z: Sequence[float]) -> float:
    """Death rate γ(z) of the virus carried by a charged vector."""
    return params.vector_death(z)


def sample_mutant(params: ModelParams, z: Sequence[float], rng: RandomStream) -> np.ndarray:
    """Draw an offspring trait from m(z, ·) on the trait box.

    Truncated Gaussian by rejection against the box (exact for the normalized
    truncated density); uniform kernels draw directly.
    """
    if params.trait_box is None:
        raise ConfigError("sample_mutant needs params.trait_box")
    box = params.trait_box
    kern = params.mutation_kernel
    dim = box.shape[0]
    if kern.family == "uniform":
        return np.array(
            [box[d, 0] + rng.next_uniform() * (box[d, 1] - box[d, 0]) for d in range(dim)]
        )
    for _ in range(_MUTANT_RETRY_CAP):
        cand = np.array([z[d] + kern.width * rng.next_normal() for d in range(dim)])
        if np.all(cand >= box[:, 0]) and np.all(cand <= box[:, 1]):
            return cand
    raise ConfigError(
        "mutation kernel rejection cap exhausted (width far larger than the trait box?)"
    )


# ---------------------------------------------------------------------------
# Bounds and rescaling
# ---------------------------------------------------------------------------


def _max_plants_in_range(domain: Domain, r_p: float) -> int:
    """Safe overestimate of max #plants within r_p of any point of the rectangle.

    Grid scan over cell centers with the radius padded by the scan cell's
    half-diagonal, so no between-grid-point maximum can be missed; capped at
    the plant count.
    """
    lx, ly = domain.extent
    hx, hy = lx / _PMAX_SCAN, ly / _PMAX_SCAN
    pad = 0.5 * math.hypot(hx, hy)
    xs = (np.arange(_PMAX_SCAN) + 0.5) * hx
    ys = (np.arange(_PMAX_SCAN) + 0.5) * hy
    px = domain.plant_positions[:, 0]
    py = domain.plant_positions[:, 1]
    r2 = (r_p + pad) ** 2
    best = 0
    for y in ys:
        d2 = (xs[:, None] - px[None, :]) ** 2 + (y - py[None, :]) ** 2
        best = max(best, int(np.max(np.sum(d2 <= r2, axis=1))))
        if best == domain.n_plants:
            break
    return min(best, domain.n_plants)


def rate_bounds(params: ModelParams, domain: Domain) -> Bounds:
    """Closed-form rate bounds over the domain (plus scan-based geometry factors)."""
    varieties = [int(v) for v in domain.plant_varieties]
    box = domain.trait_box
    _, b_sup = params.birth.extremes(box, varieties)
    d_inf, d_sup = params.natural_death.extremes(box, [0])
    _, gamma_sup = params.vector_death.extremes(box, [0])
    if params.load.trait_modulation is None:
        mod_sup = 1.0
    else:
        _, mod_sup = params.load.trait_modulation.extremes(box, varieties)
    p_load = _max_plants_in_range(domain, params.load.r_p)
    p_unload = _max_plants_in_range(domain, params.unload.r_p)
    load_pair = params.load.beta0 * mod_sup  # saturation sup over N is 1
    return Bounds(
        b_sup=b_sup,
        d_sup=d_sup,
        d_inf=d_inf,
        gamma_sup=gamma_sup,
        beta_sum_sup=load_pair * p_load,
        eta_sum_sup=params.unload.eta0 * p_unload,
        competition=params.competition,
        load_pair_sup=load_pair,
        unload_pair_sup=params.unload.eta0,
        p_max_load=p_load,
        p_max_unload=p_unload,
    )


def rescale(
    params: ModelParams,
    K: int,
    lam: float,
    load_mass_convention: str = "normalized",
) -> ScaledParams:
    """Apply the (K, λ) rescaling; λ must lie in (0, 1]."""
    if K < 1:
        raise ConfigError("K must be a positive integer")
    if not 0.0 < lam <= 1.0:
        raise ConfigError(f"lambda must lie in (0, 1], got {lam}")
    if load_mass_convention not in ("normalized", "raw"):
        raise ConfigError(f"unknown load mass convention {load_mass_convention!r}")
    accel = float(K) ** (1.0 - lam)
    return ScaledParams(
        base=params,
        K=K,
        lam=lam,
        beta0_eff=params.load.beta0 * float(K) ** (-lam),
        c_eff=params.competition / K,
        eta0_eff=params.unload.eta0 * accel,
        gamma_factor=accel,
        accel=accel,
        load_mass_div=float(K) if load_mass_convention == "normalized" else 1.0,
    )
