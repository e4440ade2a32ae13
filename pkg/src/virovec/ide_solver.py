"""Deterministic large-population limits of the particle system.

Two solvers share one spatial/trait discretization:

  - regime 1 (moderate vector speed): a parabolic integro-differential
    system for the per-plant trait densities g_v(x, z), the free-vector
    density g_u(y), and the charged-vector density g_c(y, z), advanced by
    the method of lines with classical RK4 on cell-centered grids with
    zero-flux (Neumann) boundaries;
  - regime 2 (fast vectors): the same g_v dynamics, but with (g_u, g_c)
    slaved to the instantaneous quasi-stationary elliptic system at each
    step, pinned by the conserved total vector mass.

Discretization choices that tests rely on:
  - trait densities live on a uniform point grid with trapezoid quadrature;
  - the mutation kernel matrix is column-normalized under that quadrature,
    so the birth operator conserves mass exactly at any resolution;
  - spatial exchange terms use the same cutoff-indicator tables on both the
    plant side and the vector side, so load/unload moves vector mass between
    g_u and g_c with exact discrete cancellation (vector mass is conserved
    to roundoff, independent of grid resolution).

The solvers handle a one-dimensional trait box (the particle simulator also
supports two-dimensional traits).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .model import ConfigError, Domain, ModelParams, NumericalError, PlantRef

_NEG_TOL = 1e-10  # relative negativity tolerated (clipped) after a step
_RESIDUAL_TOL = 1e-8


# ---------------------------------------------------------------------------
# Grids and state
# ---------------------------------------------------------------------------


@dataclass
class Grids:
    """Cell-centered space grid, trait point grid, and quadrature weights."""

    domain: Domain
    n1: int
    n2: int
    nz: int
    xs: np.ndarray  # (n1,) cell centers
    ys: np.ndarray  # (n2,)
    h1: float
    h2: float
    cell_area: float
    z: np.ndarray  # (nz,) trait points including both ends
    wz: np.ndarray  # (nz,) trapezoid weights, sum = trait box length
    _tables: dict = field(default_factory=dict, repr=False)

    @property
    def n_cells(self) -> int:
        return self.n1 * self.n2


@dataclass
class FieldState:
    """Deterministic fields at one time."""

    t: float
    g_v: np.ndarray  # (n_plants, nz) per-plant trait densities
    g_u: np.ndarray  # (n1, n2) free-vector density
    g_c: np.ndarray  # (n1, n2, nz) charged-vector density

    def copy(self) -> "FieldState":
        return FieldState(self.t, self.g_v.copy(), self.g_u.copy(), self.g_c.copy())


@dataclass(frozen=True)
class EllipticResult:
    """Quasi-stationary vector fields and solve diagnostics."""

    g_u: np.ndarray
    g_c: np.ndarray
    residual: float
    scale: float


def build_grids(domain: Domain, resolution: Mapping[str, Any]) -> Grids:
    """Build grids from {'space': [n1, n2], 'trait': nz}.

    Space is cell-centered (n1 x n2 cells over the rectangle); the trait grid
    has nz >= 3 points spanning the trait box inclusively.
    """
    if domain.trait_dim != 1:
        raise ConfigError("the deterministic solvers support a 1-D trait box")
    space = resolution.get("space")
    nz = resolution.get("trait")
    if not space or len(space) != 2 or nz is None:
        raise ConfigError("resolution needs 'space': [n1, n2] and 'trait': nz")
    n1, n2, nz = int(space[0]), int(space[1]), int(nz)
    if n1 < 2 or n2 < 2 or nz < 3:
        raise ConfigError("resolution too small: need n1, n2 >= 2 and nz >= 3")
    lx, ly = domain.extent
    h1, h2 = lx / n1, ly / n2
    xs = (np.arange(n1) + 0.5) * h1
    ys = (np.arange(n2) + 0.5) * h2
    lo, hi = domain.trait_box[0]
    z = np.linspace(lo, hi, nz)
    dz = (hi - lo) / (nz - 1)
    wz = np.full(nz, dz)
    wz[0] = wz[-1] = dz / 2.0
    return Grids(
        domain=domain,
        n1=n1,
        n2=n2,
        nz=nz,
        xs=xs,
        ys=ys,
        h1=h1,
        h2=h2,
        cell_area=h1 * h2,
        z=z,
        wz=wz,
    )


# ---------------------------------------------------------------------------
# Rate tables on the grids
# ---------------------------------------------------------------------------


def _spec_on_grid(spec, z: np.ndarray, variety: int, default: float) -> np.ndarray:
    if spec is None:
        return np.full(z.shape[0], default)
    return np.array([spec((zz,), variety) for zz in z])


def _kernel_matrix(params: ModelParams, grids: Grids) -> np.ndarray:
    """Column-normalized mutation kernel: M[i, j] ~ m(z_j -> z_i).

    Columns are normalized against the trapezoid weights so that the discrete
    offspring distribution of every parent integrates to exactly 1 — the
    discrete birth operator then conserves mass at any resolution, and the
    matrix converges to the (erf-normalized) truncated kernel as nz grows.
    """
    kern = params.mutation_kernel
    z = grids.z
    box = grids.domain.trait_box
    if kern.family == "uniform":
        mat = np.full((grids.nz, grids.nz), 1.0 / (box[0, 1] - box[0, 0]))
    else:
        diff = z[:, None] - z[None, :]
        mat = np.exp(-(diff**2) / (2.0 * kern.width**2))
    col_mass = grids.wz @ mat
    return mat / col_mass[None, :]


def _tables(params: ModelParams, grids: Grids) -> dict:
    """Static per-(plant, trait) and per-cell tables, cached per params object."""
    key = id(params)
    hit = grids._tables.get(key)
    if hit is not None:
        return hit
    domain = grids.domain
    n_plants = domain.n_plants
    z = grids.z
    b_table = np.empty((n_plants, grids.nz))
    mod_table = np.empty((n_plants, grids.nz))
    for x in range(n_plants):
        var = int(domain.plant_varieties[x])
        b_table[x] = _spec_on_grid(params.birth, z, var, 0.0)
        mod_table[x] = _spec_on_grid(params.load.trait_modulation, z, var, 1.0)
    d_table = _spec_on_grid(params.natural_death, z, 0, 0.0)
    gamma_table = _spec_on_grid(params.vector_death, z, 0, 0.0)

    cx = grids.xs[:, None, None]  # (n1, 1, 1)
    cy = grids.ys[None, :, None]  # (1, n2, 1)
    px = domain.plant_positions[None, None, :, 0]
    py = domain.plant_positions[None, None, :, 1]
    d2 = (cx - px) ** 2 + (cy - py) ** 2  # (n1, n2, n_plants)
    i_load = (d2 <= params.load.r_p**2).astype(float)
    i_unload = (d2 <= params.unload.r_p**2).astype(float)
    # the cell containing a plant always intersects its cutoff disc; include
    # it so the exchange never silently vanishes on grids coarser than r_p
    for x in range(n_plants):
        ix = min(int(domain.plant_positions[x, 0] / grids.h1), grids.n1 - 1)
        iy = min(int(domain.plant_positions[x, 1] / grids.h2), grids.n2 - 1)
        i_load[ix, iy, x] = 1.0
        i_unload[ix, iy, x] = 1.0

    tab = {
        "b": b_table,
        "d": d_table,
        "gamma": gamma_table,
        "mod": mod_table,
        "kernel": _kernel_matrix(params, grids),
        "i_load": np.ascontiguousarray(np.moveaxis(i_load, 2, 0)),  # (E, n1, n2)
        "i_unload": np.ascontiguousarray(np.moveaxis(i_unload, 2, 0)),
        "n_unload": i_unload.sum(axis=2),  # (n1, n2) plants in unload range
    }
    grids._tables[key] = tab
    return tab


# ---------------------------------------------------------------------------
# Differential operators
# ---------------------------------------------------------------------------


def neumann_laplacian(fld: np.ndarray, grids: Grids) -> np.ndarray:
    """5-point Laplacian with zero-flux boundaries (edge-mirrored ghosts).

    Works on (n1, n2) fields and batched (n1, n2, k) stacks alike.
    """
    pad = ((1, 1), (1, 1)) + ((0, 0),) * (fld.ndim - 2)
    p = np.pad(fld, pad, mode="edge")
    return (p[:-2, 1:-1] + p[2:, 1:-1] - 2.0 * fld) / grids.h1**2 + (
        p[1:-1, :-2] + p[1:-1, 2:] - 2.0 * fld
    ) / grids.h2**2


def _divergence_drift(fld: np.ndarray, a: tuple[float, float], grids: Grids) -> np.ndarray:
    """-div(a * field) for constant drift a, centered differences, edge ghosts.

    Strict zero-flux walls hold for a = 0; with nonzero drift the advective
    wall flux is not exactly cancelled, so conservation tests use zero drift.
    """
    ax, ay = a
    if ax == 0.0 and ay == 0.0:
        return np.zeros_like(fld)
    pad = ((1, 1), (1, 1)) + ((0, 0),) * (fld.ndim - 2)
    p = np.pad(fld, pad, mode="edge")
    ddx = (p[2:, 1:-1] - p[:-2, 1:-1]) / (2.0 * grids.h1)
    ddy = (p[1:-1, 2:] - p[1:-1, :-2]) / (2.0 * grids.h2)
    return -(ax * ddx + ay * ddy)


def mutation_term(
    g_v_plant: np.ndarray, params: ModelParams, grids: Grids, plant: int = 0
) -> np.ndarray:
    """Mutant-birth inflow for one plant: mu * quadrature of b(z') m(z' -> z) g(z').

    Because the kernel matrix is column-normalized, the trait integral of
    clonal births (1 - mu) b g plus this term equals the integral of b g for
    every mu: mutation redistributes birth mass without creating or
    destroying it.
    """
    tab = _tables(params, grids)
    b = tab["b"][plant]
    return params.mutation_prob * (tab["kernel"] @ (b * g_v_plant * grids.wz))


# ---------------------------------------------------------------------------
# Regime 1: parabolic system
# ---------------------------------------------------------------------------


def _virus_masses(g_v: np.ndarray, grids: Grids) -> np.ndarray:
    return g_v @ grids.wz


def rhs_regime1(
    state: FieldState, params: ModelParams, grids: Grids
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Time derivative of (g_v, g_u, g_c) for the moderate-vector-speed limit."""
    tab = _tables(params, grids)
    g_v, g_u, g_c = state.g_v, state.g_u, state.g_c
    n_plants = grids.domain.n_plants
    area = grids.cell_area
    beta0 = params.load.beta0
    eta0 = params.unload.eta0
    h_sat = params.load.half_sat

    v_mass = _virus_masses(g_v, grids)  # (E,)
    sat = np.where(v_mass > 0, v_mass / (h_sat + v_mass), 0.0)
    # per-plant neighborhood integrals of the vector fields
    u_near = area * np.einsum("eij,ij->e", tab["i_load"], g_u)  # (E,)
    c_near = area * np.einsum("eij,ijk->ek", tab["i_unload"], g_c)  # (E, nz)
    # per-plant modulated virus density mass
    g_mod = tab["mod"] * g_v  # (E, nz)

    one_minus_mu = 1.0 - params.mutation_prob
    dg_v = np.empty_like(g_v)
    for x in range(n_plants):
        b = tab["b"][x]
        birth = one_minus_mu * b * g_v[x] + mutation_term(g_v[x], params, grids, plant=x)
        death = (tab["d"] + params.competition * v_mass[x]) * g_v[x]
        load_loss = beta0 * sat[x] * u_near[x] * g_mod[x]
        unload_gain = eta0 * c_near[x]
        dg_v[x] = birth - death - load_loss + unload_gain

    # free vectors
    bhat = beta0 * np.einsum(
        "e,eij->ij", sat * (g_mod @ grids.wz), tab["i_load"]
    )  # (n1, n2)
    c_int = g_c @ grids.wz  # (n1, n2)
    gamma_release = g_c @ (grids.wz * tab["gamma"])
    dg_u = (
        0.5 * params.sigma_u**2 * neumann_laplacian(g_u, grids)
        + _divergence_drift(g_u, params.drift_u, grids)
        - bhat * g_u
        + eta0 * tab["n_unload"] * c_int
        + gamma_release
    )

    # charged vectors: source density over (y, z)
    source = beta0 * np.einsum("e,eij,ek->ijk", sat, tab["i_load"], g_mod) * g_u[:, :, None]
    sink = (eta0 * tab["n_unload"][:, :, None] + tab["gamma"][None, None, :]) * g_c
    dg_c = (
        0.5 * params.sigma_c**2 * neumann_laplacian(g_c, grids)
        + _divergence_drift(g_c, params.drift_c, grids)
        + source
        - sink
    )
    return dg_v, dg_u, dg_c


def stable_dt(
    state: FieldState,
    params: ModelParams,
    grids: Grids,
    include_diffusion: bool = True,
) -> float:
    """Explicit step bound: diffusion CFL and reaction stiffness, the tighter one.

    Pass ``include_diffusion=False`` when the vector fields are slaved to the
    stationary system rather than stepped explicitly — the CFL constraint then
    does not apply and only the virus-side reaction stiffness limits the step.
    """
    tab = _tables(params, grids)
    nu = 0.5 * max(params.sigma_u, params.sigma_c) ** 2
    dt_diff = math.inf
    if include_diffusion and nu > 0:
        dt_diff = 1.0 / (2.0 * nu * (1.0 / grids.h1**2 + 1.0 / grids.h2**2))
    v_mass = _virus_masses(state.g_v, grids)
    u_tot = grids.cell_area * float(np.sum(state.g_u))
    reaction = (
        float(np.max(tab["b"]))
        + float(np.max(tab["d"]))
        + params.competition * float(np.max(v_mass, initial=0.0))
        + params.load.beta0 * float(np.max(tab["mod"])) * max(u_tot, 1.0)
        + params.unload.eta0 * float(np.max(tab["n_unload"]))
        + float(np.max(tab["gamma"]))
    )
    dt_react = 1.0 / (2.0 * reaction) if reaction > 0 else math.inf
    return min(dt_diff, dt_react)


def _clip_negative(arr: np.ndarray, what: str) -> None:
    floor = -_NEG_TOL * max(1.0, float(np.max(arr, initial=0.0)))
    low = float(np.min(arr, initial=0.0))
    if low < floor:
        raise NumericalError(
            f"{what} went negative ({low:.3e}) beyond the roundoff tolerance; "
            "the step size is too large for this configuration"
        )
    np.clip(arr, 0.0, None, out=arr)


def step_regime1(
    state: FieldState, dt: float, params: ModelParams, grids: Grids
) -> FieldState:
    """One classical RK4 step of the parabolic system.

    Rejects steps beyond the explicit stability bound; tiny negative values
    created by roundoff are clipped to zero, anything worse raises.
    """
    if dt <= 0:
        raise ConfigError("dt must be > 0")
    bound = stable_dt(state, params, grids)
    if dt > bound * (1.0 + 1e-12):
        raise ConfigError(
            f"dt={dt:g} exceeds the explicit stability bound {bound:g} "
            "for this grid and rate configuration"
        )

    def rhs(s: FieldState):
        return rhs_regime1(s, params, grids)

    k1 = rhs(state)
    s2 = FieldState(
        state.t + 0.5 * dt,
        state.g_v + 0.5 * dt * k1[0],
        state.g_u + 0.5 * dt * k1[1],
        state.g_c + 0.5 * dt * k1[2],
    )
    k2 = rhs(s2)
    s3 = FieldState(
        state.t + 0.5 * dt,
        state.g_v + 0.5 * dt * k2[0],
        state.g_u + 0.5 * dt * k2[1],
        state.g_c + 0.5 * dt * k2[2],
    )
    k3 = rhs(s3)
    s4 = FieldState(
        state.t + dt,
        state.g_v + dt * k3[0],
        state.g_u + dt * k3[1],
        state.g_c + dt * k3[2],
    )
    k4 = rhs(s4)
    g_v = state.g_v + (dt / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    g_u = state.g_u + (dt / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    g_c = state.g_c + (dt / 6.0) * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    if not (np.all(np.isfinite(g_v)) and np.all(np.isfinite(g_u)) and np.all(np.isfinite(g_c))):
        raise NumericalError("field values blew up; reduce dt or check the configuration")
    _clip_negative(g_v, "virus density")
    _clip_negative(g_u, "free-vector density")
    _clip_negative(g_c, "charged-vector density")
    return FieldState(state.t + dt, g_v, g_u, g_c)


# ---------------------------------------------------------------------------
# Regime 2: elliptic-constrained vectors
# ---------------------------------------------------------------------------


def _neumann_1d(n: int, h: float) -> sparse.csr_matrix:
    """1-D second derivative with zero-flux ends, matching neumann_laplacian."""
    main = np.full(n, -2.0)
    main[0] = main[-1] = -1.0
    off = np.ones(n - 1)
    return sparse.diags([off, main, off], [-1, 0, 1], format="csr") / (h * h)


def _laplacian_2d(grids: Grids) -> sparse.csr_matrix:
    t1 = _neumann_1d(grids.n1, grids.h1)
    t2 = _neumann_1d(grids.n2, grids.h2)
    i1 = sparse.identity(grids.n1, format="csr")
    i2 = sparse.identity(grids.n2, format="csr")
    return (sparse.kron(t1, i2) + sparse.kron(i1, t2)).tocsr()


def solve_elliptic_vectors(
    g_v: np.ndarray,
    params: ModelParams,
    grids: Grids,
    v_total: float,
) -> EllipticResult:
    """Quasi-stationary vector fields given the current virus densities.

    Solves the coupled stationary system for (g_u, g_c): diffusion plus
    load/unload/carried-death exchange, which is linear and homogeneous with
    a one-dimensional kernel; one scalar equation is replaced by the total
    vector mass constraint (the weighted sum of all equations telescopes to
    zero, so no information is lost). Raises if the residual exceeds
    1e-8 relative to the natural matrix scale, or if densities come out
    meaningfully negative (degenerate exchange configurations).
    """
    if params.drift_u != (0.0, 0.0) or params.drift_c != (0.0, 0.0):
        raise ConfigError("the fast-vector solver requires zero vector drift")
    if v_total <= 0:
        raise ConfigError("total vector mass must be > 0")
    tab = _tables(params, grids)
    nc = grids.n_cells
    nz = grids.nz
    area = grids.cell_area
    beta0 = params.load.beta0
    eta0 = params.unload.eta0
    h_sat = params.load.half_sat

    v_mass = g_v @ grids.wz
    sat = np.where(v_mass > 0, v_mass / (h_sat + v_mass), 0.0)
    g_mod = tab["mod"] * g_v
    i_load_flat = tab["i_load"].reshape(grids.domain.n_plants, nc)
    bhat = beta0 * (sat * (g_mod @ grids.wz)) @ i_load_flat  # (nc,)
    n_unl = tab["n_unload"].reshape(nc)
    lap = _laplacian_2d(grids)

    # block rows: [u; c_0; ...; c_{nz-1}] -- all homogeneous
    blocks: list[list] = [[None] * (nz + 1) for _ in range(nz + 1)]
    blocks[0][0] = 0.5 * params.sigma_u**2 * lap - sparse.diags(bhat)
    for j in range(nz):
        out_rate = eta0 * n_unl + tab["gamma"][j]
        blocks[0][j + 1] = sparse.diags(grids.wz[j] * out_rate)
        s_j = beta0 * ((sat * g_mod[:, j]) @ i_load_flat)  # (nc,)
        blocks[j + 1][0] = sparse.diags(s_j)
        blocks[j + 1][j + 1] = 0.5 * params.sigma_c**2 * lap - sparse.diags(out_rate)
    a_hom = sparse.bmat(blocks, format="csr")

    # mass row replaces the first scalar equation
    mass_row = np.concatenate([np.full(nc, area), np.repeat(grids.wz * area, nc)])
    a = a_hom.tolil()
    a[0, :] = mass_row
    rhs = np.zeros(nc * (nz + 1))
    rhs[0] = v_total

    try:
        w = spsolve(a.tocsr(), rhs)
    except Exception as exc:  # singular factorization
        raise NumericalError(f"elliptic vector solve failed: {exc}") from exc
    if not np.all(np.isfinite(w)):
        raise NumericalError(
            "elliptic vector solve produced non-finite values; the exchange "
            "configuration is degenerate (no coupling pins the vector fields)"
        )

    hom_res = a_hom @ w
    scale = max(1.0, float(np.max(np.abs(a_hom).dot(np.abs(w)))))
    residual = float(np.max(np.abs(hom_res[1:])))  # row 0 was replaced
    if residual > _RESIDUAL_TOL * scale:
        raise NumericalError(
            f"elliptic residual {residual:.3e} exceeds {_RESIDUAL_TOL:g} * scale ({scale:.3e})"
        )
    wmax = float(np.max(np.abs(w)))
    if float(np.min(w)) < -_NEG_TOL * max(1.0, wmax):
        raise NumericalError(
            "elliptic vector densities are negative; the configuration is degenerate"
        )
    w = np.clip(w, 0.0, None)
    g_u = w[:nc].reshape(grids.n1, grids.n2)
    g_c = np.moveaxis(
        w[nc:].reshape(nz, grids.n1, grids.n2), 0, 2
    ).copy()  # (n1, n2, nz)
    return EllipticResult(g_u=g_u, g_c=g_c, residual=residual, scale=scale)


def step_regime2(
    state: FieldState,
    dt: float,
    params: ModelParams,
    grids: Grids,
    v_total: float,
) -> tuple[FieldState, EllipticResult]:
    """One RK4 step of g_v with vectors slaved to the elliptic system.

    The elliptic fields are solved once from the pre-step g_v and held frozen
    through the RK4 stages (one sparse solve per step). The returned state
    carries those fields; re-solve at the end of a run if exactly consistent
    final vector fields are needed.
    """
    if dt <= 0:
        raise ConfigError("dt must be > 0")
    ell = solve_elliptic_vectors(state.g_v, params, grids, v_total)
    tab = _tables(params, grids)
    area = grids.cell_area
    u_near = area * np.einsum("eij,ij->e", tab["i_load"], ell.g_u)
    c_near = area * np.einsum("eij,ijk->ek", tab["i_unload"], ell.g_c)

    one_minus_mu = 1.0 - params.mutation_prob

    def rhs_v(g_v: np.ndarray) -> np.ndarray:
        v_mass = g_v @ grids.wz
        sat = np.where(v_mass > 0, v_mass / (params.load.half_sat + v_mass), 0.0)
        out = np.empty_like(g_v)
        for x in range(grids.domain.n_plants):
            b = tab["b"][x]
            birth = one_minus_mu * b * g_v[x] + mutation_term(g_v[x], params, grids, plant=x)
            death = (tab["d"] + params.competition * v_mass[x]) * g_v[x]
            load_loss = (
                params.load.beta0 * sat[x] * u_near[x] * tab["mod"][x] * g_v[x]
            )
            unload_gain = params.unload.eta0 * c_near[x]
            out[x] = birth - death - load_loss + unload_gain
        return out

    k1 = rhs_v(state.g_v)
    k2 = rhs_v(state.g_v + 0.5 * dt * k1)
    k3 = rhs_v(state.g_v + 0.5 * dt * k2)
    k4 = rhs_v(state.g_v + dt * k3)
    g_v = state.g_v + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(g_v)):
        raise NumericalError("virus density blew up; reduce dt or check the configuration")
    _clip_negative(g_v, "virus density")
    return FieldState(state.t + dt, g_v, ell.g_u, ell.g_c), ell


# ---------------------------------------------------------------------------
# Persistence functional and summaries
# ---------------------------------------------------------------------------


def persistence_R(
    params: ModelParams,
    plant: PlantRef,
    z: float,
    grids: Grids,
    beta_eval: str = "at_unit_mass",
) -> float:
    """Net invasion rate of a rare trait-z virus on one plant.

    R = (1 - mu) * b(plant, z) - d(z) - integral over the rectangle of the
    load rate out of the plant, with the saturation factor evaluated at a
    reference plant mass: 'at_unit_mass' uses mass 1 (an established resident
    population), 'at_zero' uses mass 0 (no load pressure at invasion).
    Positive R means the trait can grow where rare.
    """
    if beta_eval not in ("at_unit_mass", "at_zero"):
        raise ConfigError(f"unknown beta_eval {beta_eval!r}")
    tab = _tables(params, grids)
    b = params.birth((z,), plant.variety)
    d = params.natural_death((z,))
    load = 0.0
    if beta_eval == "at_unit_mass":
        sat = 1.0 / (params.load.half_sat + 1.0)
        mod = (
            1.0
            if params.load.trait_modulation is None
            else params.load.trait_modulation((z,), plant.variety)
        )
        near_area = grids.cell_area * float(np.sum(tab["i_load"][plant.index]))
        load = params.load.beta0 * sat * mod * near_area
    return (1.0 - params.mutation_prob) * b - d - load


def mass_totals(state: FieldState, grids: Grids) -> dict:
    """Quadrature masses of all fields."""
    per_plant = _virus_masses(state.g_v, grids)
    free = grids.cell_area * float(np.sum(state.g_u))
    charged = grids.cell_area * float(np.sum(state.g_c @ grids.wz))
    return {
        "virus_per_plant": per_plant,
        "virus_total": float(np.sum(per_plant)),
        "free_vectors": free,
        "charged_vectors": charged,
        "vector_total": free + charged,
    }
