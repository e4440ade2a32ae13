"""Individual-based stochastic simulator: public state, ops, and engine driver.

The simulator tracks three populations exactly:
  - viruses, each sitting on a plant with a trait in the trait box;
  - free (uncharged) vectors diffusing in the rectangle;
  - charged vectors, each carrying one virus trait while diffusing.

Jumps (births, deaths, load/unload exchanges, carried-virus deaths) happen at
state-dependent rates and are simulated exactly by thinning against an
envelope rate; vector motion is reflected Euler–Maruyama with mirror folding
at the walls (mirror folding leaves the uniform law on the rectangle exactly
invariant for drift-free motion at any step size).

``simulate`` delegates the event loop to one of two interchangeable engines:
a compiled one (``_engine_cy``, built from the Cython source) and a pure
Python reference (``_engine_py``). Both consume the shared buffered
RandomStream in the same order, so the same seed gives bit-identical
trajectories either way. The remaining ops here (``event_rates``,
``execute_jump``, ``step_diffusion``, ...) are independent vectorized
reference implementations of single steps, used for testing and for building
alternative exact samplers to cross-validate the thinning.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace
from typing import Any, Mapping

import numpy as np

from ._stream import RandomStream, seed_for_replicate
from .model import (
    Bounds,
    ConfigError,
    Domain,
    ModelParams,
    ScaledParams,
    rate_bounds,
    sample_mutant,
)

_TIME_GRID_TOL = 1e-9


# ---------------------------------------------------------------------------
# State containers
# ---------------------------------------------------------------------------


@dataclass
class ParticleState:
    """Exact population state at one instant."""

    t: float
    domain: Domain
    v_plant: np.ndarray  # (n_v,) int64 plant index per virus
    v_trait: np.ndarray  # (n_v, dim)
    u_pos: np.ndarray  # (n_u, 2) free vector positions
    c_pos: np.ndarray  # (n_c, 2) charged vector positions
    c_trait: np.ndarray  # (n_c, dim) carried virus traits

    @property
    def n_v(self) -> int:
        return self.v_plant.shape[0]

    @property
    def n_u(self) -> int:
        return self.u_pos.shape[0]

    @property
    def n_c(self) -> int:
        return self.c_pos.shape[0]

    @property
    def p_v(self) -> int:
        """Total virus count: on plants plus carried."""
        return self.n_v + self.n_c

    def plant_counts(self) -> np.ndarray:
        return np.bincount(self.v_plant, minlength=self.domain.n_plants).astype(np.int64)

    def copy(self) -> "ParticleState":
        return ParticleState(
            t=self.t,
            domain=self.domain,
            v_plant=self.v_plant.copy(),
            v_trait=self.v_trait.copy(),
            u_pos=self.u_pos.copy(),
            c_pos=self.c_pos.copy(),
            c_trait=self.c_trait.copy(),
        )


@dataclass(frozen=True)
class Event:
    """One jump, in the shape ``execute_jump`` applies.

    kinds: clonal_birth(virus), mutant_birth(virus[, trait]), death(virus),
    load(virus, vector), unload(vector, plant), carried_death(vector).
    """

    kind: str
    virus: int = -1
    vector: int = -1
    plant: int = -1
    trait: np.ndarray | None = None


@dataclass(frozen=True)
class EventRates:
    """Total rates of the six event classes at one state."""

    clonal_birth: float
    mutant_birth: float
    death: float
    load: float
    unload: float
    carried_death: float

    @property
    def total(self) -> float:
        return (
            self.clonal_birth
            + self.mutant_birth
            + self.death
            + self.load
            + self.unload
            + self.carried_death
        )


@dataclass
class Trajectory:
    """Observables sampled on a uniform time grid."""

    times: np.ndarray  # (n_samples,)
    n_v: np.ndarray  # (n_samples,) int64
    n_u: np.ndarray
    n_c: np.ndarray
    per_plant: np.ndarray  # (n_samples, n_plants) int64
    hist: np.ndarray  # (n_samples, nbins) int64, trait axis 0
    hist_edges: np.ndarray  # (nbins + 1,)
    drift: np.ndarray  # (n_samples,) compensator integral (if tracked)
    n_events: int
    n_candidates: int
    extinction_time: float  # nan if the virus persisted to the horizon
    final_state: ParticleState

    @property
    def p_v(self) -> np.ndarray:
        return self.n_v + self.n_c


@dataclass(frozen=True)
class SimSetup:
    """Everything needed to run replicates: model, scaling, and options."""

    domain: Domain
    params: ModelParams
    sparams: ScaledParams
    population: Mapping[str, Any]
    sample_dt: float = 0.1
    diffusion_dt: float = 1e-3
    nbins: int = 8
    track_drift: bool = False
    pop_cap: int = 10_000_000


@dataclass(frozen=True)
class ExtinctionResult:
    """Extinction fraction by a horizon, with a Wilson 95% interval."""

    horizon: float
    n_reps: int
    n_extinct: int
    fraction: float
    ci_low: float
    ci_high: float
    extinction_times: np.ndarray  # nan where the replicate persisted
    mean_pv_path: np.ndarray  # per-sample mean of P_v over replicates
    times: np.ndarray


# ---------------------------------------------------------------------------
# Initial populations
# ---------------------------------------------------------------------------


def _sample_traits(spec: Mapping[str, Any], n: int, box: np.ndarray, rng: RandomStream):
    """Draw n traits per the population spec: fixed | uniform | uniform_range."""
    dim = box.shape[0]
    kind = spec.get("kind", "fixed")
    if kind == "fixed":
        val = np.asarray(spec["value"], dtype=float).reshape(-1)
        if val.shape[0] != dim:
            raise ConfigError("fixed trait value has wrong dimension")
        out = np.tile(val, (n, 1))
        if n > 0 and not (np.all(val >= box[:, 0]) and np.all(val <= box[:, 1])):
            raise ConfigError(f"initial trait {val.tolist()} outside trait box")
        return out
    if kind == "uniform":
        lo, hi = box[:, 0], box[:, 1]
    elif kind == "uniform_range":
        lo = np.asarray(spec["lo"], dtype=float)
        hi = np.asarray(spec["hi"], dtype=float)
        if np.any(lo < box[:, 0]) or np.any(hi > box[:, 1]) or np.any(hi <= lo):
            raise ConfigError("uniform_range trait bounds must nest inside the trait box")
    else:
        raise ConfigError(f"unknown trait spec kind {kind!r}")
    u = rng.take_uniforms(n * dim).reshape(n, dim)
    return lo + u * (hi - lo)


def _resolve_count(mass_key, count_key, config, scale: float) -> int:
    if count_key in config:
        return int(config[count_key])
    if mass_key in config:
        return int(math.floor(float(config[mass_key]) * scale))
    return 0


def init_population(
    config: Mapping[str, Any],
    domain: Domain,
    rng: RandomStream,
    sparams: ScaledParams | None = None,
) -> ParticleState:
    """Build the initial state from a population config.

    Counts are either explicit (``virus_counts`` per plant, ``free_count``,
    ``charged_count``) or normalized masses (``virus_masses`` per plant scaled
    by K, ``free_mass``/``charged_mass`` scaled by K^lambda), which need
    ``sparams``. Vector positions are drawn iid uniform on the rectangle.
    Draw order (virus traits, then free positions, then charged positions,
    then carried traits) is fixed so seeds reproduce.
    """
    n_plants = domain.n_plants
    if "virus_counts" in config:
        counts = [int(v) for v in config["virus_counts"]]
    elif "virus_masses" in config:
        if sparams is None:
            raise ConfigError("virus_masses needs the (K, lambda) scaling to resolve counts")
        counts = [int(math.floor(float(m) * sparams.K)) for m in config["virus_masses"]]
    else:
        counts = [0] * n_plants
    if len(counts) != n_plants:
        raise ConfigError(f"need one virus count per plant ({n_plants}), got {len(counts)}")
    if any(c < 0 for c in counts):
        raise ConfigError("virus counts must be >= 0")

    vec_scale = float(sparams.K) ** sparams.lam if sparams is not None else None
    if ("free_mass" in config or "charged_mass" in config) and vec_scale is None:
        raise ConfigError("vector masses need the (K, lambda) scaling to resolve counts")
    n_u = _resolve_count("free_mass", "free_count", config, vec_scale or 1.0)
    n_c = _resolve_count("charged_mass", "charged_count", config, vec_scale or 1.0)
    if n_u < 0 or n_c < 0:
        raise ConfigError("vector counts must be >= 0")

    n_v = sum(counts)
    v_plant = np.repeat(np.arange(n_plants, dtype=np.int64), counts)
    trait_spec = config.get("virus_trait", {"kind": "uniform"})
    v_trait = _sample_traits(trait_spec, n_v, domain.trait_box, rng)

    ext = np.array(domain.extent)
    u_pos = rng.take_uniforms(2 * n_u).reshape(n_u, 2) * ext
    c_pos = rng.take_uniforms(2 * n_c).reshape(n_c, 2) * ext
    c_spec = config.get("charged_trait", trait_spec)
    c_trait = _sample_traits(c_spec, n_c, domain.trait_box, rng)

    return ParticleState(
        t=0.0,
        domain=domain,
        v_plant=v_plant,
        v_trait=v_trait,
        u_pos=u_pos,
        c_pos=c_pos,
        c_trait=c_trait,
    )


# ---------------------------------------------------------------------------
# Vectorized rate evaluation (reference path, independent of the engines)
# ---------------------------------------------------------------------------


def _eval_spec_vec(spec, traits: np.ndarray, varieties: np.ndarray) -> np.ndarray:
    """Evaluate a RateSpec at many (trait, variety) pairs at once."""
    n = traits.shape[0]
    if spec is None:
        return np.ones(n)
    if spec.family == "constant":
        if isinstance(spec.value, tuple):
            vals = np.asarray(spec.value, dtype=float)
            idx = np.zeros(n, dtype=np.int64) if vals.shape[0] == 1 else varieties
            return vals[idx]
        return np.full(n, float(spec.value))
    centers = np.asarray(spec.center, dtype=float)  # (n_var, dim)
    idx = np.zeros(n, dtype=np.int64) if centers.shape[0] == 1 else varieties
    diff = traits - centers[idx]
    q = np.sum(diff * diff, axis=1)
    return spec.amplitude * np.exp(-q / (2.0 * spec.width**2))


def _load_weights(state: ParticleState, sparams: ScaledParams) -> np.ndarray:
    """Per-plant load weight: saturation(count) * sum of modulations on it."""
    params = sparams.base
    n_plants = state.domain.n_plants
    counts = state.plant_counts().astype(float)
    varieties = state.domain.plant_varieties[state.v_plant]
    mods = _eval_spec_vec(params.load.trait_modulation, state.v_trait, varieties)
    summod = np.bincount(state.v_plant, weights=mods, minlength=n_plants)
    hdiv = params.load.half_sat * sparams.load_mass_div
    sat = np.where(counts > 0, counts / (hdiv + counts), 0.0)
    return sat * summod


def _indicator(positions: np.ndarray, domain: Domain, radius: float) -> np.ndarray:
    """(n_vectors, n_plants) cutoff indicator matrix."""
    if positions.shape[0] == 0:
        return np.zeros((0, domain.n_plants), dtype=bool)
    d2 = np.sum(
        (positions[:, None, :] - domain.plant_positions[None, :, :]) ** 2, axis=2
    )
    return d2 <= radius * radius


def event_rates(state: ParticleState, sparams: ScaledParams) -> EventRates:
    """Exact total rate of each event class at the current state."""
    params = sparams.base
    varieties = state.domain.plant_varieties[state.v_plant]
    b = _eval_spec_vec(params.birth, state.v_trait, varieties)
    d = _eval_spec_vec(params.natural_death, state.v_trait, np.zeros_like(varieties))
    counts = state.plant_counts()
    s_b = float(np.sum(b))
    death = float(np.sum(d)) + sparams.c_eff * float(np.sum(counts.astype(float) ** 2))
    lw = _load_weights(state, sparams)
    ind_l = _indicator(state.u_pos, state.domain, params.load.r_p)
    load = sparams.beta0_eff * float(np.sum(ind_l * lw[None, :]))
    ind_u = _indicator(state.c_pos, state.domain, params.unload.r_p)
    unload = sparams.eta0_eff * float(np.sum(ind_u))
    gam = _eval_spec_vec(
        params.vector_death, state.c_trait, np.zeros(state.n_c, dtype=np.int64)
    )
    carried = sparams.gamma_factor * float(np.sum(gam))
    mu = params.mutation_prob
    return EventRates(
        clonal_birth=(1.0 - mu) * s_b,
        mutant_birth=mu * s_b,
        death=death,
        load=load,
        unload=unload,
        carried_death=carried,
    )


def jump_rate_bound(state: ParticleState, sparams: ScaledParams, bounds: Bounds) -> float:
    """Closed-form C*M*(1+M) bound on the total jump rate, M = all individuals.

    Linear-in-M classes (birth, natural death, unload, carried death) and
    quadratic ones (competition, pairwise load) are grouped separately before
    taking the max, so the bound dominates the exact total for every state.
    """
    m = float(state.n_v + state.n_u + state.n_c)
    k_lam = float(sparams.K) ** (-sparams.lam)
    c_lin = (
        bounds.b_sup
        + bounds.d_sup
        + sparams.accel * bounds.eta_sum_sup
        + sparams.gamma_factor * bounds.gamma_sup
    )
    c_quad = sparams.c_eff + k_lam * bounds.load_pair_sup
    return max(c_lin, c_quad) * m * (1.0 + m)


# ---------------------------------------------------------------------------
# Reference single-step ops
# ---------------------------------------------------------------------------


def _fold_array(p: np.ndarray, length: float) -> np.ndarray:
    period = 2.0 * length
    p = np.fmod(p, period)
    p = np.where(p < 0.0, p + period, p)
    return np.where(p > length, period - p, p)


def step_diffusion(
    state: ParticleState, dt: float, sparams: ScaledParams, rng: RandomStream
) -> ParticleState:
    """One reflected Euler–Maruyama step of physical duration dt.

    Vector motion runs on K^(1-lambda)-accelerated time: both the drift
    displacement and the noise variance scale with accel * dt. Coordinates
    are mirror-folded into the rectangle.
    """
    if dt < 0:
        raise ConfigError("dt must be >= 0")
    params = sparams.base
    tau = sparams.accel * dt
    out = state.copy()
    out.t = state.t + dt
    for pos, drift_xy, sig in (
        (out.u_pos, params.drift_u, params.sigma_u),
        (out.c_pos, params.drift_c, params.sigma_c),
    ):
        n = pos.shape[0]
        if n == 0:
            continue
        xi = rng.take_normals(2 * n).reshape(n, 2)
        pos += np.asarray(drift_xy) * tau + sig * math.sqrt(tau) * xi
        pos[:, 0] = _fold_array(pos[:, 0], state.domain.extent[0])
        pos[:, 1] = _fold_array(pos[:, 1], state.domain.extent[1])
    return out


def execute_jump(
    state: ParticleState,
    event: Event,
    rng: RandomStream,
    params: ModelParams | None = None,
) -> ParticleState:
    """Apply one jump and return the new state (the input is not mutated).

    ``mutant_birth`` without an explicit trait samples the mutation kernel,
    which needs ``params``.
    """
    s = state.copy()
    kind = event.kind
    if kind in ("clonal_birth", "mutant_birth"):
        i = event.virus
        if kind == "clonal_birth":
            trait = s.v_trait[i].copy()
        elif event.trait is not None:
            trait = np.asarray(event.trait, dtype=float)
        else:
            if params is None:
                raise ConfigError("sampling a mutant trait needs params")
            trait = sample_mutant(params, s.v_trait[i], rng)
        s.v_plant = np.append(s.v_plant, s.v_plant[i])
        s.v_trait = np.vstack([s.v_trait, trait[None, :]])
    elif kind == "death":
        keep = np.arange(s.n_v) != event.virus
        s.v_plant = s.v_plant[keep]
        s.v_trait = s.v_trait[keep]
    elif kind == "load":
        i, j = event.virus, event.vector
        pos = s.u_pos[j].copy()
        trait = s.v_trait[i].copy()
        keep_v = np.arange(s.n_v) != i
        keep_u = np.arange(s.n_u) != j
        s.v_plant = s.v_plant[keep_v]
        s.v_trait = s.v_trait[keep_v]
        s.u_pos = s.u_pos[keep_u]
        s.c_pos = np.vstack([s.c_pos, pos[None, :]])
        s.c_trait = np.vstack([s.c_trait, trait[None, :]])
    elif kind == "unload":
        j, x = event.vector, event.plant
        pos = s.c_pos[j].copy()
        trait = s.c_trait[j].copy()
        keep = np.arange(s.n_c) != j
        s.c_pos = s.c_pos[keep]
        s.c_trait = s.c_trait[keep]
        s.u_pos = np.vstack([s.u_pos, pos[None, :]])
        s.v_plant = np.append(s.v_plant, np.int64(x))
        s.v_trait = np.vstack([s.v_trait, trait[None, :]])
    elif kind == "carried_death":
        j = event.vector
        pos = s.c_pos[j].copy()
        keep = np.arange(s.n_c) != j
        s.c_pos = s.c_pos[keep]
        s.c_trait = s.c_trait[keep]
        s.u_pos = np.vstack([s.u_pos, pos[None, :]])
    else:
        raise ConfigError(f"unknown event kind {kind!r}")
    return s


def observables(state: ParticleState) -> dict:
    """Scalar summaries of one state."""
    traits = (
        np.vstack([state.v_trait, state.c_trait])
        if state.p_v > 0
        else np.zeros((0, state.domain.trait_dim))
    )
    return {
        "t": state.t,
        "n_v": state.n_v,
        "n_u": state.n_u,
        "n_c": state.n_c,
        "p_v": state.p_v,
        "per_plant": state.plant_counts().tolist(),
        "mean_trait": traits.mean(axis=0).tolist() if state.p_v > 0 else None,
    }


# ---------------------------------------------------------------------------
# Engine packing and the simulate driver
# ---------------------------------------------------------------------------


class EngineInputs:
    """Flat attribute bundle both engines read (scalars and C-contiguous arrays)."""


def _pack_spec(spec, n_var: int, dim: int, default: float):
    """RateSpec -> (code, values[n_var], amp, width, centers[n_var, dim])."""
    values = np.full(n_var, default, dtype=np.float64)
    centers = np.zeros((n_var, dim), dtype=np.float64)
    if spec is None:
        return 0, values, 0.0, 1.0, centers
    if spec.family == "constant":
        for v in range(n_var):
            try:
                values[v] = spec._value_for(v)
            except IndexError:
                raise ConfigError(f"rate spec lacks a value for variety {v}") from None
        return 0, values, 0.0, 1.0, centers
    for v in range(n_var):
        try:
            c = spec._center_for(v)
        except IndexError:
            raise ConfigError(f"rate spec lacks a center for variety {v}") from None
        if len(c) != dim:
            raise ConfigError(f"rate center {c!r} has wrong trait dimension")
        centers[v] = c
    return 1, values, spec.amplitude, spec.width, centers


def _pack_inputs(
    state0: ParticleState,
    big_t: float,
    sparams: ScaledParams,
    sample_dt: float,
    *,
    diffusion_dt: float,
    nbins: int,
    track_drift: bool,
    pop_cap: int,
    refresh_every: int,
) -> EngineInputs:
    domain = state0.domain
    params = sparams.base
    if sample_dt <= 0:
        raise ConfigError("sample_dt must be > 0")
    if diffusion_dt <= 0:
        raise ConfigError("diffusion_dt must be > 0")
    if nbins < 1:
        raise ConfigError("nbins must be >= 1")
    ratio = big_t / sample_dt
    n_steps = int(round(ratio))
    if n_steps < 1 or abs(ratio - n_steps) > _TIME_GRID_TOL * max(1.0, n_steps):
        raise ConfigError("the horizon must be an integer multiple of sample_dt")

    n_var = int(np.max(domain.plant_varieties)) + 1
    dim = domain.trait_dim
    inp = EngineInputs()
    inp.mu = params.mutation_prob
    inp.c_eff = sparams.c_eff
    inp.beta0_eff = sparams.beta0_eff
    inp.eta0_eff = sparams.eta0_eff
    inp.gamma_factor = sparams.gamma_factor
    inp.hdiv = params.load.half_sat * sparams.load_mass_div
    inp.r2_load = params.load.r_p * params.load.r_p
    inp.r2_unload = params.unload.r_p * params.unload.r_p
    inp.accel = sparams.accel
    inp.ax_u, inp.ay_u = params.drift_u
    inp.ax_c, inp.ay_c = params.drift_c
    inp.sig_u = params.sigma_u
    inp.sig_c = params.sigma_c
    inp.lx, inp.ly = domain.extent
    inp.dim = dim
    inp.nbins = nbins
    inp.n_samples = n_steps + 1
    inp.sample_dt = sample_dt
    inp.T = n_steps * sample_dt
    inp.h_diff = diffusion_dt
    inp.track_drift = bool(track_drift)
    inp.refresh_every = refresh_every
    inp.pop_cap = pop_cap
    inp.p_max_unload = rate_bounds(params, domain).p_max_unload

    inp.plant_x = np.ascontiguousarray(domain.plant_positions[:, 0])
    inp.plant_y = np.ascontiguousarray(domain.plant_positions[:, 1])
    inp.plant_var = np.ascontiguousarray(domain.plant_varieties, dtype=np.int64)

    for name, spec, default in (
        ("birth", params.birth, 0.0),
        ("death", params.natural_death, 0.0),
        ("gamma", params.vector_death, 0.0),
        ("mod", params.load.trait_modulation, 1.0),
    ):
        code, values, amp, width, centers = _pack_spec(spec, n_var, dim, default)
        setattr(inp, f"{name}_code", code)
        setattr(inp, f"{name}_values", values)
        setattr(inp, f"{name}_amp", amp)
        setattr(inp, f"{name}_width", width)
        setattr(inp, f"{name}_centers", centers)

    kern = params.mutation_kernel
    inp.kern_code = 0 if kern.family == "uniform" else 1
    inp.kern_width = kern.width
    inp.box_lo = np.ascontiguousarray(domain.trait_box[:, 0])
    inp.box_hi = np.ascontiguousarray(domain.trait_box[:, 1])

    inp.v_plant0 = np.ascontiguousarray(state0.v_plant, dtype=np.int64)
    inp.v_trait0 = np.ascontiguousarray(state0.v_trait, dtype=np.float64).reshape(-1, dim)
    inp.u_pos0 = np.ascontiguousarray(state0.u_pos, dtype=np.float64).reshape(-1, 2)
    inp.c_pos0 = np.ascontiguousarray(state0.c_pos, dtype=np.float64).reshape(-1, 2)
    inp.c_trait0 = np.ascontiguousarray(state0.c_trait, dtype=np.float64).reshape(-1, dim)
    return inp


def _select_engine(engine: str):
    if engine not in ("auto", "compiled", "python"):
        raise ConfigError(f"unknown engine {engine!r}")
    if engine != "python" and not os.environ.get("VIROVEC_PURE"):
        try:
            from . import _engine_cy

            return _engine_cy
        except ImportError:
            if engine == "compiled":
                raise ConfigError(
                    "compiled engine requested but the extension is not built"
                ) from None
    from . import _engine_py

    return _engine_py


def simulate(
    state0: ParticleState,
    big_t: float,
    sparams: ScaledParams,
    sample_dt: float,
    rng: RandomStream,
    *,
    diffusion_dt: float = 1e-3,
    nbins: int = 8,
    track_drift: bool = False,
    engine: str = "auto",
    pop_cap: int = 10_000_000,
    refresh_every: int = 8192,
) -> Trajectory:
    """Run the exact simulation to time ``big_t``, sampling every ``sample_dt``.

    The horizon must be an integer multiple of sample_dt; samples are taken
    at k * sample_dt for k = 0..T/sample_dt (the state recorded at a sample
    instant is the pre-jump state if a jump lands exactly there). If the
    virus population is absorbed at zero, remaining samples repeat the
    absorbed state and ``extinction_time`` records the absorption time.
    """
    inp = _pack_inputs(
        state0,
        big_t,
        sparams,
        sample_dt,
        diffusion_dt=diffusion_dt,
        nbins=nbins,
        track_drift=track_drift,
        pop_cap=pop_cap,
        refresh_every=refresh_every,
    )
    mod = _select_engine(engine)
    out = mod.run(inp, rng)
    domain = state0.domain
    final_state = ParticleState(
        t=inp.T,
        domain=domain,
        v_plant=out["v_plant"],
        v_trait=out["v_trait"],
        u_pos=out["u_pos"],
        c_pos=out["c_pos"],
        c_trait=out["c_trait"],
    )
    edges = np.linspace(domain.trait_box[0, 0], domain.trait_box[0, 1], nbins + 1)
    return Trajectory(
        times=out["times"],
        n_v=out["n_v"],
        n_u=out["n_u"],
        n_c=out["n_c"],
        per_plant=out["per_plant"],
        hist=out["hist"],
        hist_edges=edges,
        drift=out["drift"],
        n_events=out["n_events"],
        n_candidates=out["n_candidates"],
        extinction_time=out["extinction_time"],
        final_state=final_state,
    )


# ---------------------------------------------------------------------------
# Replicated experiments
# ---------------------------------------------------------------------------


def wilson_interval(successes: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson score 95% interval for a binomial fraction."""
    if n == 0:
        return 0.0, 1.0
    phat = successes / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def extinction_probability(
    setup: SimSetup,
    horizon: float,
    n_reps: int,
    seed: int,
    *,
    engine: str = "auto",
) -> ExtinctionResult:
    """Fraction of replicates whose virus population hits zero by the horizon.

    Replicate r uses the deterministic child seed (seed, r), so results are
    reproducible and extendable without re-running earlier replicates.
    """
    if n_reps < 1:
        raise ConfigError("n_reps must be >= 1")
    times = None
    ext_times = np.full(n_reps, math.nan)
    pv_sum = None
    for rep in range(n_reps):
        rng = RandomStream(seed_for_replicate(seed, rep))
        state0 = init_population(setup.population, setup.domain, rng, setup.sparams)
        traj = simulate(
            state0,
            horizon,
            setup.sparams,
            setup.sample_dt,
            rng,
            diffusion_dt=setup.diffusion_dt,
            nbins=setup.nbins,
            track_drift=setup.track_drift,
            engine=engine,
            pop_cap=setup.pop_cap,
        )
        ext_times[rep] = traj.extinction_time
        if times is None:
            times = traj.times
            pv_sum = traj.p_v.astype(float)
        else:
            pv_sum += traj.p_v
    n_ext = int(np.sum(~np.isnan(ext_times)))
    lo, hi = wilson_interval(n_ext, n_reps)
    return ExtinctionResult(
        horizon=horizon,
        n_reps=n_reps,
        n_extinct=n_ext,
        fraction=n_ext / n_reps,
        ci_low=lo,
        ci_high=hi,
        extinction_times=ext_times,
        mean_pv_path=pv_sum / n_reps,
        times=times,
    )


def mean_bound_x0(bounds: Bounds, v0: float, n_plants: int) -> float:
    """Barrier level for the mean normalized virus mass.

    E of the normalized total virus mass stays below max(initial mass, x0)
    with x0 = n_plants * (b_sup - d_inf) / c + 2 * v0; infinite when there is
    no competition (c = 0) and the net growth bound is positive.
    """
    if v0 < 0:
        raise ConfigError("initial mass must be >= 0")
    net = bounds.b_sup - bounds.d_inf
    if bounds.competition <= 0.0:
        return math.inf if net > 0 else 2.0 * v0
    return n_plants * net / bounds.competition + 2.0 * v0
