"""The compiled and pure engines must produce bit-identical trajectories.

Both engines consume the shared buffered stream scalar-by-scalar in the same
order and accumulate every sum in the same order, so equality here is exact
(==), not approximate. Any drift between the two files shows up as a failure
on the first diverging event.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from virovec import (
    KernelSpec,
    LoadSpec,
    ModelParams,
    RandomStream,
    RateSpec,
    UnloadSpec,
    build_domain,
    init_population,
    rescale,
    simulate,
)

pytest.importorskip("virovec._engine_cy")


def run_both(domain, params, k_val, lam, pop_cfg, big_t, sample_dt, seed, **kw):
    sparams = rescale(params, K=k_val, lam=lam)
    out = []
    for engine in ("python", "compiled"):
        rng = RandomStream(seed)
        state0 = init_population(pop_cfg, domain, rng, sparams)
        out.append(
            simulate(state0, big_t, sparams, sample_dt, rng, engine=engine, **kw)
        )
    return out


def assert_identical(a, b) -> None:
    assert np.array_equal(a.times, b.times)
    assert np.array_equal(a.n_v, b.n_v)
    assert np.array_equal(a.n_u, b.n_u)
    assert np.array_equal(a.n_c, b.n_c)
    assert np.array_equal(a.per_plant, b.per_plant)
    assert np.array_equal(a.hist, b.hist)
    assert np.array_equal(a.drift, b.drift)  # float: still must be bitwise equal
    assert a.n_events == b.n_events
    assert a.n_candidates == b.n_candidates
    assert (
        math.isnan(a.extinction_time)
        and math.isnan(b.extinction_time)
        or a.extinction_time == b.extinction_time
    )
    assert np.array_equal(a.final_state.v_plant, b.final_state.v_plant)
    assert np.array_equal(a.final_state.v_trait, b.final_state.v_trait)
    assert np.array_equal(a.final_state.u_pos, b.final_state.u_pos)
    assert np.array_equal(a.final_state.c_pos, b.final_state.c_pos)
    assert np.array_equal(a.final_state.c_trait, b.final_state.c_trait)


def test_parity_full_dynamics_1d() -> None:
    domain = build_domain(
        dict(
            extent=[2.0, 1.5],
            plants=[[0.5, 0.5], [1.5, 0.5], [1.0, 1.0]],
            varieties=[0, 1, 0],
            trait_box=[[0.0, 1.0]],
        )
    )
    params = ModelParams(
        birth=RateSpec(
            family="gaussian_peak", amplitude=3.0, center=((0.3,), (0.7,)), width=0.25
        ),
        natural_death=RateSpec(family="constant", value=0.4),
        competition=0.05,
        vector_death=RateSpec(family="constant", value=0.3),
        mutation_prob=0.3,
        mutation_kernel=KernelSpec(family="gaussian", width=0.15),
        load=LoadSpec(
            beta0=2.0,
            r_p=0.7,
            half_sat=2.0,
            trait_modulation=RateSpec(
                family="gaussian_peak", amplitude=1.0, center=((0.5,),), width=0.5
            ),
        ),
        unload=UnloadSpec(eta0=2.5, r_p=0.7),
        drift_u=(0.2, -0.1),
        drift_c=(-0.3, 0.05),
        sigma_u=0.6,
        sigma_c=0.4,
        trait_box=np.array([[0.0, 1.0]]),
    )
    pop = dict(
        virus_counts=[15, 10, 8],
        free_count=12,
        charged_count=4,
        virus_trait=dict(kind="uniform"),
        charged_trait=dict(kind="uniform"),
    )
    a, b = run_both(
        domain,
        params,
        k_val=3,
        lam=0.7,
        pop_cfg=pop,
        big_t=2.0,
        sample_dt=0.25,
        seed=20240817,
        diffusion_dt=0.1,
        track_drift=True,
        refresh_every=64,  # exercise the periodic recompute in both engines
    )
    assert a.n_events > 50  # the run actually did something
    assert_identical(a, b)


def test_parity_2d_trait_uniform_kernel() -> None:
    domain = build_domain(
        dict(
            extent=[1.0, 1.0],
            plants=[[0.3, 0.4], [0.7, 0.6]],
            trait_box=[[0.0, 1.0], [-1.0, 1.0]],
        )
    )
    params = ModelParams(
        birth=RateSpec(family="constant", value=2.0),
        natural_death=RateSpec(
            family="gaussian_peak", amplitude=1.0, center=((0.8, 0.0),), width=0.6
        ),
        competition=0.08,
        vector_death=RateSpec(family="constant", value=0.1),
        mutation_prob=0.5,
        mutation_kernel=KernelSpec(family="uniform"),
        load=LoadSpec(beta0=1.5, r_p=0.5, half_sat=1.0),
        unload=UnloadSpec(eta0=2.0, r_p=0.5),
        sigma_u=0.8,
        sigma_c=0.8,
        trait_box=np.array([[0.0, 1.0], [-1.0, 1.0]]),
    )
    pop = dict(
        virus_counts=[12, 9],
        free_count=10,
        virus_trait=dict(kind="uniform"),
    )
    a, b = run_both(
        domain,
        params,
        k_val=1,
        lam=1.0,
        pop_cfg=pop,
        big_t=3.0,
        sample_dt=0.5,
        seed=99,
        diffusion_dt=0.05,
    )
    assert a.n_events > 50
    assert_identical(a, b)


def test_parity_stream_state_after_run() -> None:
    # after identical runs both engines must leave the stream at the same
    # point, so follow-on draws agree too
    domain = build_domain(
        dict(extent=[1.0, 1.0], plants=[[0.5, 0.5]], trait_box=[[0.0, 1.0]])
    )
    params = ModelParams(
        birth=RateSpec(family="constant", value=1.5),
        natural_death=RateSpec(family="constant", value=0.5),
        competition=0.1,
        vector_death=RateSpec(family="constant", value=0.0),
        mutation_prob=0.2,
        mutation_kernel=KernelSpec(family="gaussian", width=0.1),
        load=LoadSpec(beta0=1.0, r_p=0.4, half_sat=1.0),
        unload=UnloadSpec(eta0=1.0, r_p=0.4),
        trait_box=np.array([[0.0, 1.0]]),
    )
    sparams = rescale(params, K=1, lam=1.0)
    tails = []
    for engine in ("python", "compiled"):
        rng = RandomStream(7)
        state0 = init_population(dict(virus_counts=[10], free_count=5), domain, rng, sparams)
        simulate(state0, 1.0, sparams, 0.25, rng, engine=engine)
        tails.append([rng.next_uniform() for _ in range(5)])
    assert tails[0] == tails[1]
