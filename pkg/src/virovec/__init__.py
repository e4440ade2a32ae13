"""virovec: stochastic and deterministic dynamics of a vector-borne plant virus.

An individual-based simulator (viruses on plants, insect vectors diffusing in
a rectangle) together with the two deterministic large-population limits — a
parabolic integro-differential system and its elliptic-constrained fast-vector
counterpart — plus extinction bounds, a persistence criterion, and a
reproducible experiment runner.
"""

from __future__ import annotations

from .model import (
    Bounds,
    ConfigError,
    Domain,
    KernelSpec,
    LoadSpec,
    ModelParams,
    NumericalError,
    PlantRef,
    RateSpec,
    ScaledParams,
    UnloadSpec,
    build_domain,
    eval_birth,
    eval_death,
    eval_load,
    eval_unload,
    eval_vector_death,
    rate_bounds,
    rescale,
    sample_mutant,
)
from ._stream import RandomStream, seed_for_replicate
from .ide_solver import (
    EllipticResult,
    FieldState,
    Grids,
    build_grids,
    mass_totals,
    mutation_term,
    neumann_laplacian,
    persistence_R,
    rhs_regime1,
    solve_elliptic_vectors,
    stable_dt,
    step_regime1,
    step_regime2,
)
from .experiments import (
    SCHEMA_VERSION,
    ConvergenceReport,
    StudyConfig,
    emit_outputs,
    parse_config,
    run_convergence,
    run_extinction,
    run_ide,
    run_persistence,
    run_simulate,
    run_study,
    validate,
)
from .particle_sim import (
    Event,
    EventRates,
    ExtinctionResult,
    ParticleState,
    SimSetup,
    Trajectory,
    event_rates,
    execute_jump,
    extinction_probability,
    init_population,
    jump_rate_bound,
    mean_bound_x0,
    observables,
    simulate,
    step_diffusion,
    wilson_interval,
)

__version__ = "0.1.0"

__all__ = [
    "Bounds",
    "ConfigError",
    "ConvergenceReport",
    "Domain",
    "EllipticResult",
    "Event",
    "EventRates",
    "ExtinctionResult",
    "FieldState",
    "Grids",
    "KernelSpec",
    "LoadSpec",
    "ModelParams",
    "NumericalError",
    "ParticleState",
    "PlantRef",
    "RandomStream",
    "RateSpec",
    "SCHEMA_VERSION",
    "ScaledParams",
    "SimSetup",
    "StudyConfig",
    "Trajectory",
    "UnloadSpec",
    "build_domain",
    "build_grids",
    "emit_outputs",
    "eval_birth",
    "eval_death",
    "eval_load",
    "eval_unload",
    "eval_vector_death",
    "event_rates",
    "execute_jump",
    "extinction_probability",
    "init_population",
    "jump_rate_bound",
    "mass_totals",
    "mean_bound_x0",
    "mutation_term",
    "neumann_laplacian",
    "observables",
    "parse_config",
    "persistence_R",
    "rate_bounds",
    "rescale",
    "rhs_regime1",
    "run_convergence",
    "run_extinction",
    "run_ide",
    "run_persistence",
    "run_simulate",
    "run_study",
    "sample_mutant",
    "seed_for_replicate",
    "simulate",
    "solve_elliptic_vectors",
    "stable_dt",
    "step_diffusion",
    "step_regime1",
    "step_regime2",
    "validate",
    "wilson_interval",
    "__version__",
]
