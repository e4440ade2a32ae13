"""Engine benchmark: compare the compiled and pure event loops.

Run as ``python -m virovec.benchmarks``. Both engines execute the same
trajectory (bit-identical by construction), so the comparison isolates
interpreter overhead in the per-event loop.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from ._stream import RandomStream
from .model import (
    KernelSpec,
    LoadSpec,
    ModelParams,
    RateSpec,
    UnloadSpec,
    build_domain,
    rescale,
)
from .particle_sim import init_population, simulate


def _scenario(k_val: int):
    domain = build_domain(
        dict(
            extent=[2.0, 2.0],
            lattice=dict(nx=2, ny=2, margin=0.25),
            trait_box=[[0.0, 1.0]],
        )
    )
    params = ModelParams(
        birth=RateSpec(family="gaussian_peak", amplitude=3.0, center=((0.4,),), width=0.3),
        natural_death=RateSpec(family="constant", value=0.5),
        competition=0.5,
        vector_death=RateSpec(family="constant", value=0.1),
        mutation_prob=0.1,
        mutation_kernel=KernelSpec(family="gaussian", width=0.08),
        load=LoadSpec(beta0=1.0, r_p=3.0, half_sat=1.0),
        unload=UnloadSpec(eta0=1.5, r_p=3.0),
        sigma_u=0.5,
        sigma_c=0.5,
        trait_box=np.array([[0.0, 1.0]]),
    )
    sparams = rescale(params, K=k_val, lam=1.0)
    pop = dict(
        virus_masses=[1.0, 1.0, 1.0, 1.0],
        free_mass=2.0,
        virus_trait=dict(kind="fixed", value=[0.4]),
    )
    return domain, params, sparams, pop


def _time_engine(engine: str, k_val: int, big_t: float, seed: int) -> tuple[float, int]:
    domain, _, sparams, pop = _scenario(k_val)
    rng = RandomStream(seed)
    state0 = init_population(pop, domain, rng, sparams)
    t0 = time.perf_counter()
    traj = simulate(
        state0, big_t, sparams, 0.25, rng, engine=engine, diffusion_dt=0.05, nbins=8
    )
    return time.perf_counter() - t0, traj.n_events


def main() -> None:
    parser = argparse.ArgumentParser(description="compare simulation engines")
    parser.add_argument("--scale", type=int, default=200, help="population scale K")
    parser.add_argument("--horizon", type=float, default=2.0)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    rows = []
    for engine in ("python", "compiled"):
        try:
            dt, n_events = _time_engine(engine, args.scale, args.horizon, args.seed)
        except Exception as exc:  # the extension may be absent
            print(f"{engine:>10}: unavailable ({exc})")
            continue
        rows.append((engine, dt, n_events))
        print(f"{engine:>10}: {dt:8.3f} s   {n_events:8d} events   {n_events / dt:10.0f} events/s")
    if len(rows) == 2:
        print(f"{'speedup':>10}: {rows[0][1] / rows[1][1]:8.1f}x")


if __name__ == "__main__":
    main()
