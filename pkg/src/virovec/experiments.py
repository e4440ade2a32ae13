"""Study orchestration: TOML configs, seed fan-out, runners, CSV emission.

A study config is a single TOML file with a mandatory ``schema_version = 1``.
Unknown keys anywhere in the file are rejected rather than ignored, so typos
fail loudly. Every study is deterministic given (config, master seed):
replicate r of ladder rung k draws its stream from the master seed through
``seed_for_replicate``, aggregation order is fixed, floats are serialized
with 17 significant digits, and no output embeds wall-clock state — re-runs
produce byte-identical files.

Outputs per study: one or more CSV tables, a ``manifest.json`` listing each
file with its row count and content hash plus the config digest, and a
``run_log.txt`` echoing the resolved config and runtime diagnostics.
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ._stream import RandomStream, seed_for_replicate
from .ide_solver import (
    FieldState,
    build_grids,
    mass_totals,
    persistence_R,
    solve_elliptic_vectors,
    stable_dt,
    step_regime1,
    step_regime2,
)
from .model import (
    ConfigError,
    Domain,
    KernelSpec,
    LoadSpec,
    ModelParams,
    RateSpec,
    ScaledParams,
    UnloadSpec,
    build_domain,
    rate_bounds,
    rescale,
)
from .particle_sim import (
    SimSetup,
    Trajectory,
    extinction_probability,
    init_population,
    mean_bound_x0,
    simulate,
    wilson_interval,
)

SCHEMA_VERSION = 1

_RATE_SPEC_KEYS = {"family": None, "value": None, "amplitude": None, "center": None, "width": None}
_TRAIT_SPEC_KEYS = {"kind": None, "value": None, "lo": None, "hi": None}

# Allowed config structure; None marks a leaf value, dicts nest.
_SCHEMA: dict = {
    "schema_version": None,
    "domain": {
        "extent": None,
        "plants": None,
        "varieties": None,
        "trait_box": None,
        "lattice": {"nx": None, "ny": None, "margin": None},
    },
    "rates": {
        "birth": _RATE_SPEC_KEYS,
        "death": _RATE_SPEC_KEYS,
        "competition": None,
        "vector_death": _RATE_SPEC_KEYS,
        "mutation_prob": None,
        "mutation_kernel": {"family": None, "width": None},
        "load": {"beta0": None, "r_p": None, "half_sat": None, "modulation": _RATE_SPEC_KEYS},
        "unload": {"eta0": None, "r_p": None},
        "motion": {"drift_u": None, "drift_c": None, "sigma_u": None, "sigma_c": None},
    },
    "population": {
        "virus_counts": None,
        "virus_masses": None,
        "virus_trait": _TRAIT_SPEC_KEYS,
        "free_count": None,
        "free_mass": None,
        "charged_count": None,
        "charged_mass": None,
        "charged_trait": _TRAIT_SPEC_KEYS,
    },
    "scaling": {"K": None, "lambda": None, "load_mass_convention": None},
    "run": {
        "horizon": None,
        "sample_dt": None,
        "diffusion_dt": None,
        "nbins": None,
        "seed": None,
        "replicates": None,
        "pop_cap": None,
        "refresh_every": None,
        "track_drift": None,
        "engine": None,
    },
    "ide": {"space": None, "trait": None, "dt_margin": None, "v_total": None},
    "study": {"kind": None, "K_list": None},
    "persistence": {
        "beta_eval": None,
        "trait_points": None,
        "dynamics_check": None,
        "g0": None,
    },
    "output": {"dir": None},
}

_STUDY_KINDS = ("simulate", "ide1", "ide2", "convergence", "extinction", "persistence")


@dataclass
class StudyConfig:
    """A fully-resolved study: model objects plus run options."""

    raw: dict
    digest: str
    kind: str
    domain: Domain
    params: ModelParams
    sparams: ScaledParams
    load_mass_convention: str
    population: dict
    horizon: float
    sample_dt: float
    diffusion_dt: float
    nbins: int
    seed: int
    replicates: int
    pop_cap: int
    refresh_every: int
    track_drift: bool
    engine: str
    k_list: list[int]
    ide_resolution: dict
    dt_margin: float
    v_total: float | None
    beta_eval: str
    trait_points: int
    dynamics_check: bool
    g0: float
    out_dir: str
    diagnostics: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class ConvergenceReport:
    """Per-K sup-time gaps between replicate means and the limit solution."""

    k_list: list[int]
    replicates: int
    regime: int
    gap_virus_total: list[float]
    gap_per_plant: list[float]
    gap_histogram: list[float]
    se_final_mass: list[float]


def _check_keys(section: Mapping[str, Any], schema: Mapping[str, Any], where: str) -> None:
    for key, value in section.items():
        if key not in schema:
            raise ConfigError(f"unknown config key {where}{key!r}")
        sub = schema[key]
        if isinstance(sub, Mapping) and isinstance(value, Mapping):
            _check_keys(value, sub, f"{where}{key}.")
        elif isinstance(sub, Mapping) and not isinstance(value, Mapping):
            raise ConfigError(f"config key {where}{key!r} must be a table")


def _rate_spec(cfg: Mapping[str, Any] | None, what: str, default: float | None = None) -> RateSpec | None:
    if cfg is None:
        if default is None:
            return None
        return RateSpec("constant", value=default)
    family = cfg.get("family", "constant")
    kwargs: dict[str, Any] = {}
    if "value" in cfg:
        v = cfg["value"]
        kwargs["value"] = tuple(v) if isinstance(v, (list, tuple)) else float(v)
    if "amplitude" in cfg:
        kwargs["amplitude"] = float(cfg["amplitude"])
    if "center" in cfg:
        kwargs["center"] = tuple(tuple(float(c) for c in row) for row in cfg["center"])
    if "width" in cfg:
        kwargs["width"] = float(cfg["width"])
    try:
        return RateSpec(family, **kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad {what} spec: {exc}") from exc


def _build_params(rates: Mapping[str, Any], domain: Domain) -> ModelParams:
    for req in ("birth", "death", "load", "unload"):
        if req not in rates:
            raise ConfigError(f"rates section needs a {req!r} entry")
    load_cfg = rates["load"]
    unload_cfg = rates["unload"]
    motion = rates.get("motion", {})
    return ModelParams(
        birth=_rate_spec(rates["birth"], "birth"),
        natural_death=_rate_spec(rates["death"], "death"),
        competition=float(rates.get("competition", 0.0)),
        vector_death=_rate_spec(rates.get("vector_death"), "vector_death", default=0.0),
        mutation_prob=float(rates.get("mutation_prob", 0.0)),
        mutation_kernel=KernelSpec(
            family=rates.get("mutation_kernel", {}).get("family", "gaussian"),
            width=float(rates.get("mutation_kernel", {}).get("width", 0.1)),
        ),
        load=LoadSpec(
            beta0=float(load_cfg["beta0"]),
            r_p=float(load_cfg["r_p"]),
            half_sat=float(load_cfg["half_sat"]),
            trait_modulation=_rate_spec(load_cfg.get("modulation"), "load modulation"),
        ),
        unload=UnloadSpec(eta0=float(unload_cfg["eta0"]), r_p=float(unload_cfg["r_p"])),
        drift_u=tuple(float(a) for a in motion.get("drift_u", (0.0, 0.0))),
        drift_c=tuple(float(a) for a in motion.get("drift_c", (0.0, 0.0))),
        sigma_u=float(motion.get("sigma_u", 1.0)),
        sigma_c=float(motion.get("sigma_c", 1.0)),
        trait_box=domain.trait_box,
    )


def parse_config(
    path: str | Path,
    *,
    kind: str | None = None,
    seed: int | None = None,
    out: str | None = None,
    replicates: int | None = None,
    horizon: float | None = None,
) -> StudyConfig:
    """Parse, validate, and resolve a study config file.

    Keyword overrides (from CLI flags) replace the corresponding file values
    after parsing. Raises ConfigError for unknown keys, schema mismatches,
    or invalid values.
    """
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = tomllib.loads(blob.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"config {path} is not valid TOML: {exc}") from exc

    if "schema_version" not in raw:
        raise ConfigError("config must declare schema_version")
    if raw["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(
            f"unsupported schema_version {raw['schema_version']!r}; this build reads {SCHEMA_VERSION}"
        )
    _check_keys(raw, _SCHEMA, "")
    if "domain" not in raw or "rates" not in raw:
        raise ConfigError("config needs [domain] and [rates] sections")

    domain = build_domain(raw["domain"])
    params = _build_params(raw["rates"], domain)

    scaling = raw.get("scaling", {})
    k_base = int(scaling.get("K", 1))
    lam = float(scaling.get("lambda", 1.0))
    convention = scaling.get("load_mass_convention", "normalized")
    sparams = rescale(params, k_base, lam, load_mass_convention=convention)

    run = raw.get("run", {})
    study = raw.get("study", {})
    study_kind = kind if kind is not None else study.get("kind", "simulate")
    if study_kind not in _STUDY_KINDS:
        raise ConfigError(f"unknown study kind {study_kind!r}; pick one of {_STUDY_KINDS}")

    k_list = [int(k) for k in study.get("K_list", [k_base])]
    if any(k <= 0 for k in k_list):
        raise ConfigError("K_list entries must be positive")
    if any(b <= a for a, b in zip(k_list, k_list[1:])):
        raise ConfigError("K_list must be strictly increasing")

    n_reps = int(replicates if replicates is not None else run.get("replicates", 1))
    if n_reps < 1:
        raise ConfigError("replicates must be >= 1")
    big_t = float(horizon if horizon is not None else run.get("horizon", 1.0))
    if big_t <= 0:
        raise ConfigError("horizon must be > 0")

    ide = raw.get("ide", {})
    resolution = {
        "space": [int(n) for n in ide.get("space", [20, 20])],
        "trait": int(ide.get("trait", 11)),
    }
    pers = raw.get("persistence", {})

    cfg = StudyConfig(
        raw=raw,
        digest=hashlib.sha256(blob).hexdigest(),
        kind=study_kind,
        domain=domain,
        params=params,
        sparams=sparams,
        load_mass_convention=convention,
        population=dict(raw.get("population", {})),
        horizon=big_t,
        sample_dt=float(run.get("sample_dt", 0.1)),
        diffusion_dt=float(run.get("diffusion_dt", 1e-3)),
        nbins=int(run.get("nbins", 8)),
        seed=int(seed if seed is not None else run.get("seed", 0)),
        replicates=n_reps,
        pop_cap=int(run.get("pop_cap", 10_000_000)),
        refresh_every=int(run.get("refresh_every", 8192)),
        track_drift=bool(run.get("track_drift", False)),
        engine=str(run.get("engine", "auto")),
        k_list=k_list,
        ide_resolution=resolution,
        dt_margin=float(ide.get("dt_margin", 0.8)),
        v_total=(float(ide["v_total"]) if "v_total" in ide else None),
        beta_eval=pers.get("beta_eval", "at_unit_mass"),
        trait_points=int(pers.get("trait_points", 33)),
        dynamics_check=bool(pers.get("dynamics_check", False)),
        g0=float(pers.get("g0", 0.01)),
        out_dir=str(out if out is not None else raw.get("output", {}).get("dir", "out")),
    )
    cfg.diagnostics = validate(cfg)
    return cfg


def validate(cfg: StudyConfig) -> list[str]:
    """Soft diagnostics for a parsed config (hard errors raise in parse_config)."""
    notes: list[str] = []
    bounds = rate_bounds(cfg.params, cfg.domain)
    if cfg.sparams.lam < 1.0 and cfg.kind == "ide1":
        notes.append(
            "regime-1 equations describe the lambda=1 scaling; this config sets "
            f"lambda={cfg.sparams.lam}"
        )
    if cfg.kind in ("ide2", "convergence") and bounds.gamma_sup > 0.0:
        notes.append(
            "carried-virus death is positive: the fast-vector stationary system "
            "is solved with it as a zero-order sink, outside the stated "
            "hypotheses for the density argument"
        )
    if cfg.kind == "convergence" and min(cfg.k_list) == 1:
        notes.append("K=1 rung is degenerate: reported, but no convergence claim attaches")
    if cfg.kind == "convergence" and cfg.population.get("virus_trait", {}).get("kind") == "fixed":
        notes.append(
            "fixed initial traits are singular as densities; the limit-solution "
            "comparison needs a uniform initial trait law"
        )
    return notes


# ---------------------------------------------------------------------------
# CSV and manifest emission
# ---------------------------------------------------------------------------


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _render_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> tuple[bytes, int]:
    lines = [",".join(header)]
    count = 0
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
        count += 1
    return ("\n".join(lines) + "\n").encode("utf-8"), count


def emit_outputs(
    tables: Mapping[str, tuple[Sequence[str], Iterable[Sequence[Any]]]],
    out_dir: str | Path,
    cfg: StudyConfig,
    log_lines: Sequence[str] = (),
) -> dict:
    """Write CSV tables, manifest.json, and run_log.txt; return the manifest.

    Deterministic by construction: stable key order, fixed float formatting,
    no timestamps.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for name in sorted(tables):
        header, rows = tables[name]
        blob, count = _render_csv(header, rows)
        (out / name).write_bytes(blob)
        files.append(
            {"name": name, "rows": count, "sha256": hashlib.sha256(blob).hexdigest()}
        )
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "study": cfg.kind,
        "config_digest": cfg.digest,
        "seed": cfg.seed,
        "files": files,
    }
    (out / "manifest.json").write_bytes(
        (json.dumps(manifest, sort_keys=True, indent=2) + "\n").encode("utf-8")
    )
    log = ["resolved config:"]
    log.append(json.dumps(cfg.raw, sort_keys=True, indent=2))
    log.append(f"study: {cfg.kind}")
    log.append(f"seed: {cfg.seed}")
    for note in cfg.diagnostics:
        log.append(f"note: {note}")
    log.extend(log_lines)
    (out / "run_log.txt").write_bytes(("\n".join(log) + "\n").encode("utf-8"))
    return manifest


def _trajectory_table(traj: Trajectory, n_plants: int):
    header = ["t", "P_v", "N_v", "N_u", "N_c"] + [f"plant_{i}" for i in range(n_plants)]
    rows = []
    for k in range(traj.times.shape[0]):
        rows.append(
            [traj.times[k], int(traj.n_v[k] + traj.n_c[k]), int(traj.n_v[k]),
             int(traj.n_u[k]), int(traj.n_c[k])]
            + [int(v) for v in traj.per_plant[k]]
        )
    return header, rows


def _histogram_table(traj: Trajectory):
    header = ["t", "bin_lo", "bin_hi", "count"]
    edges = traj.hist_edges
    rows = []
    for k in range(traj.times.shape[0]):
        for b in range(edges.shape[0] - 1):
            rows.append([traj.times[k], edges[b], edges[b + 1], int(traj.hist[k, b])])
    return header, rows


# ---------------------------------------------------------------------------
# Runners
# ---------------------------------------------------------------------------


def run_simulate(cfg: StudyConfig) -> dict:
    """Particle trajectories: one CSV pair per replicate."""
    tables = {}
    log = []
    for rep in range(cfg.replicates):
        rng = RandomStream(seed_for_replicate(cfg.seed, rep))
        state0 = init_population(cfg.population, cfg.domain, rng, cfg.sparams)
        traj = simulate(
            state0,
            cfg.horizon,
            cfg.sparams,
            cfg.sample_dt,
            rng,
            diffusion_dt=cfg.diffusion_dt,
            nbins=cfg.nbins,
            track_drift=cfg.track_drift,
            engine=cfg.engine,
            pop_cap=cfg.pop_cap,
            refresh_every=cfg.refresh_every,
        )
        tables[f"trajectory_{rep:04d}.csv"] = _trajectory_table(traj, cfg.domain.n_plants)
        tables[f"histogram_{rep:04d}.csv"] = _histogram_table(traj)
        if math.isnan(traj.extinction_time):
            log.append(f"replicate {rep}: alive at horizon, {traj.n_events} events")
        else:
            log.append(
                f"replicate {rep}: extinct at t={_fmt(traj.extinction_time)}, "
                f"{traj.n_events} events"
            )
    return emit_outputs(tables, cfg.out_dir, cfg, log)


def _population_masses(cfg: StudyConfig) -> tuple[list[float], float, float]:
    """Normalized initial masses (per-plant virus, free, charged) for the limit."""
    pop = cfg.population
    k = float(cfg.sparams.K)
    k_lam = k**cfg.sparams.lam
    if "virus_masses" in pop:
        v = [float(m) for m in pop["virus_masses"]]
    elif "virus_counts" in pop:
        v = [float(c) / k for c in pop["virus_counts"]]
    else:
        v = [0.0] * cfg.domain.n_plants
    if len(v) != cfg.domain.n_plants:
        raise ConfigError(f"need one virus mass per plant ({cfg.domain.n_plants})")
    free = float(pop["free_mass"]) if "free_mass" in pop else float(pop.get("free_count", 0)) / k_lam
    charged = (
        float(pop["charged_mass"]) if "charged_mass" in pop
        else float(pop.get("charged_count", 0)) / k_lam
    )
    return v, free, charged


def _initial_fields(cfg: StudyConfig, grids) -> tuple[FieldState, float]:
    """Uniform-density fields matching the population config's initial law."""
    for key in ("virus_trait", "charged_trait"):
        kind = cfg.population.get(key, {"kind": "uniform"}).get("kind", "fixed")
        if kind != "uniform":
            raise ConfigError(
                f"limit-solution studies need {key} kind 'uniform' (got {kind!r})"
            )
    v_masses, free, charged = _population_masses(cfg)
    zlen = float(cfg.domain.trait_box[0, 1] - cfg.domain.trait_box[0, 0])
    area = cfg.domain.area
    g_v = np.repeat((np.asarray(v_masses) / zlen)[:, None], grids.nz, axis=1)
    g_u = np.full((grids.n1, grids.n2), free / area)
    g_c = np.full((grids.n1, grids.n2, grids.nz), charged / (area * zlen))
    v_total = cfg.v_total if cfg.v_total is not None else free + charged
    return FieldState(0.0, g_v, g_u, g_c), float(v_total)


def _sample_grid(cfg: StudyConfig) -> np.ndarray:
    ratio = cfg.horizon / cfg.sample_dt
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > 1e-9 * max(1.0, n):
        raise ConfigError("horizon must be an integer multiple of sample_dt")
    return np.arange(n + 1) * cfg.sample_dt


def _bin_edges(cfg: StudyConfig) -> np.ndarray:
    lo, hi = cfg.domain.trait_box[0]
    return np.linspace(lo, hi, cfg.nbins + 1)


def _field_bin_masses(state: FieldState, grids, nbins: int) -> np.ndarray:
    """Trait-bin masses of viruses plus carried viruses (limit analogue of the
    particle histogram). Bin edges must align with the trait grid."""
    if (grids.nz - 1) % nbins != 0:
        raise ConfigError(
            f"trait resolution {grids.nz} does not align with {nbins} histogram bins; "
            "use trait = nbins*q + 1 nodes"
        )
    per_node = state.g_v.sum(axis=0) + grids.cell_area * state.g_c.sum(axis=(0, 1))
    dz = grids.z[1] - grids.z[0]
    seg = 0.5 * dz * (per_node[:-1] + per_node[1:])  # mass per grid interval
    return seg.reshape(nbins, -1).sum(axis=1)


def _ide_paths(cfg: StudyConfig, regime: int):
    """Advance the limit system over the sample grid; return mass paths.

    Returns dict with times, virus_total, per_plant (n+1, E), free, charged,
    hist (n+1, nbins), and diagnostics log lines.
    """
    grids = build_grids(cfg.domain, cfg.ide_resolution)
    state, v_total = _initial_fields(cfg, grids)
    times = _sample_grid(cfg)
    log: list[str] = []
    n_plants = cfg.domain.n_plants

    per_plant = np.empty((times.shape[0], n_plants))
    free = np.empty(times.shape[0])
    charged = np.empty(times.shape[0])
    hist = np.empty((times.shape[0], cfg.nbins))

    if regime == 2:
        ell = solve_elliptic_vectors(state.g_v, cfg.params, grids, v_total)
        state = FieldState(state.t, state.g_v, ell.g_u, ell.g_c)
        log.append(
            f"elliptic solve at t=0: residual={_fmt(ell.residual)} scale={_fmt(ell.scale)}"
        )

    def record(k: int) -> None:
        m = mass_totals(state, grids)
        per_plant[k] = m["virus_per_plant"]
        free[k] = m["free_vectors"]
        charged[k] = m["charged_vectors"]
        hist[k] = _field_bin_masses(state, grids, cfg.nbins)

    record(0)
    last_res = None
    for k in range(1, times.shape[0]):
        target = times[k]
        while state.t < target - 1e-12:
            bound = stable_dt(state, cfg.params, grids, include_diffusion=(regime == 1))
            n_sub = max(1, math.ceil((target - state.t) / (cfg.dt_margin * bound)))
            dt = (target - state.t) / n_sub
            if regime == 1:
                state = step_regime1(state, dt, cfg.params, grids)
            else:
                state, last_res = step_regime2(state, dt, cfg.params, grids, v_total)
        record(k)
    if regime == 2 and last_res is not None:
        log.append(
            f"elliptic solve at t={_fmt(times[-1])}: residual={_fmt(last_res.residual)} "
            f"scale={_fmt(last_res.scale)}"
        )
    return {
        "times": times,
        "per_plant": per_plant,
        "virus_total": per_plant.sum(axis=1),
        "free": free,
        "charged": charged,
        "hist": hist,
        "log": log,
        "grids": grids,
        "final": state,
    }


def run_ide(cfg: StudyConfig, regime: int) -> dict:
    """Integrate the limit system and emit mass paths plus final snapshots."""
    ref = _ide_paths(cfg, regime)
    times = ref["times"]
    edges = _bin_edges(cfg)
    n_plants = cfg.domain.n_plants

    mass_header = ["t", "virus_total", "free", "charged"] + [
        f"plant_{i}" for i in range(n_plants)
    ]
    mass_rows = [
        [times[k], ref["virus_total"][k], ref["free"][k], ref["charged"][k]]
        + list(ref["per_plant"][k])
        for k in range(times.shape[0])
    ]
    hist_rows = [
        [times[k], edges[b], edges[b + 1], ref["hist"][k, b]]
        for k in range(times.shape[0])
        for b in range(cfg.nbins)
    ]
    grids = ref["grids"]
    state = ref["final"]
    virus_rows = [
        [state.t, x, j, grids.z[j], state.g_v[x, j]]
        for x in range(n_plants)
        for j in range(grids.nz)
    ]
    free_rows = [
        [state.t, i1 * grids.n2 + i2, grids.xs[i1], grids.ys[i2], state.g_u[i1, i2]]
        for i1 in range(grids.n1)
        for i2 in range(grids.n2)
    ]
    charged_rows = [
        [state.t, i1 * grids.n2 + i2, grids.xs[i1], grids.ys[i2], j, grids.z[j],
         state.g_c[i1, i2, j]]
        for i1 in range(grids.n1)
        for i2 in range(grids.n2)
        for j in range(grids.nz)
    ]
    tables = {
        "ide_masses.csv": (mass_header, mass_rows),
        "ide_hist.csv": (["t", "bin_lo", "bin_hi", "mass"], hist_rows),
        "ide_virus_final.csv": (["t", "plant", "trait_node", "z", "value"], virus_rows),
        "ide_free_final.csv": (["t", "cell", "y1", "y2", "value"], free_rows),
        "ide_charged_final.csv": (
            ["t", "cell", "y1", "y2", "trait_node", "z", "value"],
            charged_rows,
        ),
    }
    return emit_outputs(tables, cfg.out_dir, cfg, ref["log"])


def run_convergence(cfg: StudyConfig) -> tuple[dict, ConvergenceReport]:
    """Particle ladder against the matching limit solution.

    Replicate r of rung k draws its seed as (master, k, r); observables are
    K-normalized and averaged in replicate order; the gap per rung is the
    sup over sample times of the absolute error.
    """
    regime = 1 if cfg.sparams.lam == 1.0 else 2
    ref = _ide_paths(cfg, regime)
    times = ref["times"]
    n_t = times.shape[0]
    n_plants = cfg.domain.n_plants
    edges = _bin_edges(cfg)
    lam = cfg.sparams.lam
    for key in ("virus_counts", "free_count", "charged_count"):
        if key in cfg.population:
            raise ConfigError(
                f"convergence studies size populations as floor(K * mass) per rung; "
                f"replace {key!r} with its mass-based counterpart"
            )

    tables = {}
    log = list(ref["log"])
    gaps_total, gaps_plant, gaps_hist, ses = [], [], [], []
    for k_idx, k_val in enumerate(cfg.k_list):
        sparams = rescale(
            cfg.params, k_val, lam, load_mass_convention=cfg.load_mass_convention
        )
        mean_pp = np.zeros((n_t, n_plants))
        sum_u = np.zeros(n_t, dtype=np.int64)
        sum_c = np.zeros(n_t, dtype=np.int64)
        mean_hist = np.zeros((n_t, cfg.nbins))
        finals = np.empty(cfg.replicates)
        k_f = float(k_val)
        k_lam = k_f**lam
        for rep in range(cfg.replicates):
            rng = RandomStream(seed_for_replicate(cfg.seed, k_idx, rep))
            state0 = init_population(cfg.population, cfg.domain, rng, sparams)
            traj = simulate(
                state0,
                cfg.horizon,
                sparams,
                cfg.sample_dt,
                rng,
                diffusion_dt=cfg.diffusion_dt,
                nbins=cfg.nbins,
                engine=cfg.engine,
                pop_cap=cfg.pop_cap,
                refresh_every=cfg.refresh_every,
            )
            mean_pp += traj.per_plant / k_f
            sum_u += traj.n_u
            sum_c += traj.n_c
            mean_hist += traj.hist / k_f
            finals[rep] = traj.n_v[-1] / k_f
        mean_pp /= cfg.replicates
        mean_hist /= cfg.replicates
        mean_total = mean_pp.sum(axis=1)
        # count sums stay integers until one final division, so the conserved
        # N_u + N_c yields a bit-identical normalized vector_total at every time
        denom = cfg.replicates * k_lam
        mean_u = sum_u / denom
        mean_c = sum_c / denom
        vec_total = (sum_u + sum_c) / denom

        gap_total = float(np.max(np.abs(mean_total - ref["virus_total"])))
        gap_plant = float(np.max(np.abs(mean_pp - ref["per_plant"])))
        gap_hist = float(np.max(np.abs(mean_hist - ref["hist"])))
        se = float(np.std(finals, ddof=1) / math.sqrt(cfg.replicates)) if cfg.replicates > 1 else 0.0
        gaps_total.append(gap_total)
        gaps_plant.append(gap_plant)
        gaps_hist.append(gap_hist)
        ses.append(se)
        log.append(
            f"K={k_val}: gap_virus_total={_fmt(gap_total)} gap_per_plant={_fmt(gap_plant)} "
            f"gap_histogram={_fmt(gap_hist)}"
        )

        header = ["t", "virus_total", "free", "charged", "vector_total"] + [
            f"plant_{i}" for i in range(n_plants)
        ]
        rows = [
            [times[j], mean_total[j], mean_u[j], mean_c[j], vec_total[j]]
            + list(mean_pp[j])
            for j in range(n_t)
        ]
        tables[f"convergence_K{k_val}.csv"] = (header, rows)
        tables[f"convergence_K{k_val}_hist.csv"] = (
            ["t", "bin_lo", "bin_hi", "mass"],
            [
                [times[j], edges[b], edges[b + 1], mean_hist[j, b]]
                for j in range(n_t)
                for b in range(cfg.nbins)
            ],
        )

    ref_header = ["t", "virus_total", "free", "charged", "vector_total"] + [
        f"plant_{i}" for i in range(n_plants)
    ]
    tables["ide_reference.csv"] = (
        ref_header,
        [
            [times[j], ref["virus_total"][j], ref["free"][j], ref["charged"][j],
             ref["free"][j] + ref["charged"][j]]
            + list(ref["per_plant"][j])
            for j in range(n_t)
        ],
    )
    tables["convergence_summary.csv"] = (
        ["K", "replicates", "gap_virus_total", "gap_per_plant", "gap_histogram",
         "se_final_mass"],
        [
            [cfg.k_list[i], cfg.replicates, gaps_total[i], gaps_plant[i], gaps_hist[i], ses[i]]
            for i in range(len(cfg.k_list))
        ],
    )
    report = ConvergenceReport(
        k_list=list(cfg.k_list),
        replicates=cfg.replicates,
        regime=regime,
        gap_virus_total=gaps_total,
        gap_per_plant=gaps_plant,
        gap_histogram=gaps_hist,
        se_final_mass=ses,
    )
    manifest = emit_outputs(tables, cfg.out_dir, cfg, log)
    return manifest, report


def run_extinction(cfg: StudyConfig) -> tuple[dict, Any]:
    """Replicated extinction study with a population-mean upper bound check."""
    setup = SimSetup(
        domain=cfg.domain,
        params=cfg.params,
        sparams=cfg.sparams,
        population=cfg.population,
        sample_dt=cfg.sample_dt,
        diffusion_dt=cfg.diffusion_dt,
        nbins=cfg.nbins,
        pop_cap=cfg.pop_cap,
    )
    res = extinction_probability(
        setup, cfg.horizon, cfg.replicates, cfg.seed, engine=cfg.engine
    )
    times = res.times
    ext_times = np.asarray(res.extinction_times)

    rep_rows = [
        [rep, int(np.isfinite(ext_times[rep])),
         (ext_times[rep] if np.isfinite(ext_times[rep]) else math.inf)]
        for rep in range(cfg.replicates)
    ]
    curve_rows = []
    for t in times:
        n_ext = int(np.sum(ext_times <= t))
        lo, hi = wilson_interval(n_ext, cfg.replicates)
        curve_rows.append([t, n_ext / cfg.replicates, lo, hi])

    # population-mean bound (on the K-normalized mass scale) from the initial
    # state and the global rate bounds
    rng0 = RandomStream(seed_for_replicate(cfg.seed, 0))
    state0 = init_population(cfg.population, cfg.domain, rng0, cfg.sparams)
    bounds = rate_bounds(cfg.params, cfg.domain)
    k_f = float(cfg.sparams.K)
    mass0 = state0.p_v / k_f
    x0 = mean_bound_x0(bounds, mass0, cfg.domain.n_plants)
    bound_val = max(mass0, x0)
    mean_rows = [
        [times[k], res.mean_pv_path[k], res.mean_pv_path[k] / k_f, bound_val]
        for k in range(times.shape[0])
    ]

    tables = {
        "extinction_reps.csv": (["rep", "extinct", "extinction_time"], rep_rows),
        "extinction_curve.csv": (["t", "fraction", "ci_low", "ci_high"], curve_rows),
        "extinction_mean_pv.csv": (
            ["t", "mean_P_v", "mean_mass", "mass_bound"],
            mean_rows,
        ),
        "extinction_summary.csv": (
            ["horizon", "replicates", "extinct", "fraction", "ci_low", "ci_high"],
            [[res.horizon, res.n_reps, res.n_extinct, res.fraction, res.ci_low, res.ci_high]],
        ),
    }
    log = [
        f"extinct {res.n_extinct}/{res.n_reps} by t={_fmt(cfg.horizon)} "
        f"(fraction={_fmt(res.fraction)}, wilson=[{_fmt(res.ci_low)}, {_fmt(res.ci_high)}])",
        f"mean-bound x0={_fmt(x0)} initial_P_v={_fmt(float(res.mean_pv_path[0]))}",
    ]
    manifest = emit_outputs(tables, cfg.out_dir, cfg, log)
    return manifest, res


def run_persistence(cfg: StudyConfig) -> tuple[dict, dict]:
    """Net-invasion-rate table over (plant, trait), with an optional
    long-horizon integration cross-check of the sign."""
    grids = build_grids(
        cfg.domain,
        {"space": cfg.ide_resolution["space"], "trait": cfg.trait_points},
    )
    rows = []
    r_min, r_max = math.inf, -math.inf
    arg_max = (0, 0.0)
    for x in range(cfg.domain.n_plants):
        plant = cfg.domain.plant(x)
        for z in grids.z:
            r = persistence_R(cfg.params, plant, float(z), grids, cfg.beta_eval)
            rows.append([x, plant.variety, float(z), r])
            if r > r_max:
                r_max, arg_max = r, (x, float(z))
            r_min = min(r_min, r)

    summary: dict[str, Any] = {
        "beta_eval": cfg.beta_eval,
        "R_min": r_min,
        "R_max": r_max,
        "argmax_plant": arg_max[0],
        "argmax_z": arg_max[1],
    }
    log = [
        f"R range [{_fmt(r_min)}, {_fmt(r_max)}] at beta_eval={cfg.beta_eval}",
    ]

    tail_min = math.nan
    if cfg.dynamics_check:
        _, free, charged = _population_masses(cfg)
        zlen = float(cfg.domain.trait_box[0, 1] - cfg.domain.trait_box[0, 0])
        state = FieldState(
            0.0,
            np.full((cfg.domain.n_plants, grids.nz), cfg.g0 / zlen),
            np.full((grids.n1, grids.n2), free / cfg.domain.area),
            np.full((grids.n1, grids.n2, grids.nz), charged / (cfg.domain.area * zlen)),
        )
        times = _sample_grid(cfg)
        tail_min = math.inf
        for k in range(1, times.shape[0]):
            target = times[k]
            while state.t < target - 1e-12:
                bound = stable_dt(state, cfg.params, grids)
                n_sub = max(1, math.ceil((target - state.t) / (cfg.dt_margin * bound)))
                state = step_regime1(state, (target - state.t) / n_sub, cfg.params, grids)
            if target >= cfg.horizon / 2.0 - 1e-12:
                tail_min = min(tail_min, float(np.min(state.g_v)) * zlen)
        summary["tail_min_mass_density"] = tail_min
        summary["persists"] = bool(tail_min > cfg.g0)
        log.append(
            f"dynamics check: min over [T/2, T] of min-density mass = {_fmt(tail_min)} "
            f"from g0={_fmt(cfg.g0)} -> {'persists' if tail_min > cfg.g0 else 'declines'}"
        )

    tables = {
        "persistence_R.csv": (["plant", "variety", "z", "R"], rows),
        "persistence_summary.csv": (
            ["beta_eval", "R_min", "R_max", "argmax_plant", "argmax_z", "tail_min"],
            [[cfg.beta_eval, r_min, r_max, arg_max[0], arg_max[1], tail_min]],
        ),
    }
    manifest = emit_outputs(tables, cfg.out_dir, cfg, log)
    return manifest, summary


def run_study(cfg: StudyConfig) -> dict:
    """Dispatch on the study kind; returns the output manifest."""
    if cfg.kind == "simulate":
        return run_simulate(cfg)
    if cfg.kind == "ide1":
        return run_ide(cfg, regime=1)
    if cfg.kind == "ide2":
        return run_ide(cfg, regime=2)
    if cfg.kind == "convergence":
        return run_convergence(cfg)[0]
    if cfg.kind == "extinction":
        return run_extinction(cfg)[0]
    if cfg.kind == "persistence":
        return run_persistence(cfg)[0]
    raise ConfigError(f"unknown study kind {cfg.kind!r}")
