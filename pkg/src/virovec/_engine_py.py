"""Pure-Python simulation engine (reference implementation).

Runs the exact individual-based dynamics by thinning a position-free envelope
rate: candidate event times arrive as an exponential clock at the envelope
rate, vectors diffuse (reflected Euler–Maruyama, mirror folding) between
candidates, and each candidate is accepted with probability
(exact total rate)/(envelope rate). Between candidates the jump state is
constant and the envelope never depends on vector positions, so it dominates
the exact rate over the whole waiting interval and the thinning is exact in
law.

The compiled engine in ``_engine_cy`` is a line-by-line transliteration of
this module: both consume the shared buffered RandomStream scalar-by-scalar
in the same order and accumulate sums in the same order, so a given seed
yields bit-identical trajectories on either engine. Keep the two in lockstep
when editing, and keep all arithmetic scalar (no vectorized reductions) —
summation order is part of the contract.

Event categories, with weights in this fixed order:
  0 clonal birth     (1-mu) * sum_i b_i
  1 mutant birth     mu * sum_i b_i
  2 virus death      sum_i d_i + c * sum_x N_x^2
  3 load             beta0 * sum_{free j} sum_x 1{|y_j-x|<=r_p} * Lw[x]
  4 unload           eta0 * sum_{charged} sum_x 1{|y-x|<=r_p}
  5 carried-virus death  sum over charged of gamma_eff
where Lw[x] = N_x/(h_div + N_x) * (sum of load modulation over viruses on x).
"""

from __future__ import annotations

import math

import numpy as np

from .model import NumericalError

_ENV_SLACK = 1.0 + 1e-6  # trap for an envelope that fails to dominate


def _fold(p: float, length: float) -> float:
    """Mirror-reflect a coordinate into [0, length]."""
    period = 2.0 * length
    p = math.fmod(p, period)
    if p < 0.0:
        p += period
    if p > length:
        p = period - p
    return p


def _rate_eval(code, values, amp, width, centers, var, trait, dim) -> float:
    """Evaluate one packed rate family at a trait (per-variety tables)."""
    if code == 0:
        return values[var]
    q = 0.0
    for d in range(dim):
        dz = trait[d] - centers[var, d]
        q += dz * dz
    return amp * math.exp(-q / (2.0 * width * width))


def run(inp, stream) -> dict:
    """Simulate to T, recording observables on the uniform sample grid."""
    # ---- unpack scalars -------------------------------------------------
    mu = inp.mu
    c_eff = inp.c_eff
    beta0 = inp.beta0_eff
    eta0 = inp.eta0_eff
    hdiv = inp.hdiv
    r2_load = inp.r2_load
    r2_unload = inp.r2_unload
    accel = inp.accel
    ax_u, ay_u = inp.ax_u, inp.ay_u
    ax_c, ay_c = inp.ax_c, inp.ay_c
    sig_u, sig_c = inp.sig_u, inp.sig_c
    lx, ly = inp.lx, inp.ly
    gamma_factor = inp.gamma_factor
    dim = inp.dim
    nbins = inp.nbins
    n_samples = inp.n_samples
    sample_dt = inp.sample_dt
    big_t = inp.T
    h_diff = inp.h_diff
    track_drift = inp.track_drift
    refresh_every = inp.refresh_every
    pop_cap = inp.pop_cap
    p_max_unload = inp.p_max_unload

    plant_x = inp.plant_x
    plant_y = inp.plant_y
    plant_var = inp.plant_var
    n_plants = plant_x.shape[0]

    b_code, b_values = inp.birth_code, inp.birth_values
    b_amp, b_width, b_centers = inp.birth_amp, inp.birth_width, inp.birth_centers
    d_code, d_values = inp.death_code, inp.death_values
    d_amp, d_width, d_centers = inp.death_amp, inp.death_width, inp.death_centers
    g_code, g_values = inp.gamma_code, inp.gamma_values
    g_amp, g_width, g_centers = inp.gamma_amp, inp.gamma_width, inp.gamma_centers
    m_code, m_values = inp.mod_code, inp.mod_values
    m_amp, m_width, m_centers = inp.mod_amp, inp.mod_width, inp.mod_centers

    kern_code = inp.kern_code
    kern_width = inp.kern_width
    box_lo, box_hi = inp.box_lo, inp.box_hi
    hist_lo = box_lo[0]
    hist_scale = nbins / (box_hi[0] - box_lo[0])

    # ---- dynamic population arrays --------------------------------------
    n_v = inp.v_plant0.shape[0]
    n_u = inp.u_pos0.shape[0]
    n_c = inp.c_pos0.shape[0]

    cap_v = max(64, 2 * n_v + 8)
    cap_u = max(64, n_u + n_v + n_c + 8)
    cap_c = max(64, 2 * (n_c + n_v) + 8)

    v_plant = np.zeros(cap_v, dtype=np.int64)
    v_trait = np.zeros((cap_v, dim), dtype=np.float64)
    v_b = np.zeros(cap_v, dtype=np.float64)
    v_d = np.zeros(cap_v, dtype=np.float64)
    v_mod = np.zeros(cap_v, dtype=np.float64)
    v_plant[:n_v] = inp.v_plant0
    v_trait[:n_v] = inp.v_trait0

    u_x = np.zeros(cap_u, dtype=np.float64)
    u_y = np.zeros(cap_u, dtype=np.float64)
    u_x[:n_u] = inp.u_pos0[:, 0]
    u_y[:n_u] = inp.u_pos0[:, 1]

    c_x = np.zeros(cap_c, dtype=np.float64)
    c_y = np.zeros(cap_c, dtype=np.float64)
    c_trait = np.zeros((cap_c, dim), dtype=np.float64)
    c_gam = np.zeros(cap_c, dtype=np.float64)
    c_x[:n_c] = inp.c_pos0[:, 0]
    c_y[:n_c] = inp.c_pos0[:, 1]
    c_trait[:n_c] = inp.c_trait0

    p_count = np.zeros(n_plants, dtype=np.int64)
    p_summod = np.zeros(n_plants, dtype=np.float64)
    lw = np.zeros(n_plants, dtype=np.float64)

    # per-virus caches for the initial population
    for i in range(n_v):
        x = v_plant[i]
        var = plant_var[x]
        v_b[i] = _rate_eval(b_code, b_values, b_amp, b_width, b_centers, var, v_trait[i], dim)
        v_d[i] = _rate_eval(d_code, d_values, d_amp, d_width, d_centers, 0, v_trait[i], dim)
        v_mod[i] = _rate_eval(m_code, m_values, m_amp, m_width, m_centers, var, v_trait[i], dim)
    for i in range(n_c):
        c_gam[i] = gamma_factor * _rate_eval(
            g_code, g_values, g_amp, g_width, g_centers, 0, c_trait[i], dim
        )

    def refresh_sums():
        """Recompute all running sums from scratch (controls float drift)."""
        nonlocal s_b, s_d, ssq, s_gam
        for x in range(n_plants):
            p_count[x] = 0
            p_summod[x] = 0.0
        s_b = 0.0
        s_d = 0.0
        s_gam = 0.0
        for i in range(n_v):
            s_b += v_b[i]
            s_d += v_d[i]
            p_count[v_plant[i]] += 1
            p_summod[v_plant[i]] += v_mod[i]
        ssq = 0.0
        for x in range(n_plants):
            ssq += float(p_count[x]) * float(p_count[x])
        for i in range(n_c):
            s_gam += c_gam[i]

    s_b = s_d = ssq = s_gam = 0.0
    refresh_sums()

    # ---- output buffers --------------------------------------------------
    rec_t = np.zeros(n_samples, dtype=np.float64)
    rec_nv = np.zeros(n_samples, dtype=np.int64)
    rec_nu = np.zeros(n_samples, dtype=np.int64)
    rec_nc = np.zeros(n_samples, dtype=np.int64)
    rec_plants = np.zeros((n_samples, n_plants), dtype=np.int64)
    rec_hist = np.zeros((n_samples, nbins), dtype=np.int64)
    rec_drift = np.zeros(n_samples, dtype=np.float64)

    drift = 0.0
    n_events = 0
    n_candidates = 0
    extinction_time = math.nan

    def record(k: int, t_k: float):
        rec_t[k] = t_k
        rec_nv[k] = n_v
        rec_nu[k] = n_u
        rec_nc[k] = n_c
        for x in range(n_plants):
            rec_plants[k, x] = p_count[x]
        for i in range(n_v):
            bi = int((v_trait[i, 0] - hist_lo) * hist_scale)
            if bi < 0:
                bi = 0
            elif bi >= nbins:
                bi = nbins - 1
            rec_hist[k, bi] += 1
        for i in range(n_c):
            bi = int((c_trait[i, 0] - hist_lo) * hist_scale)
            if bi < 0:
                bi = 0
            elif bi >= nbins:
                bi = nbins - 1
            rec_hist[k, bi] += 1
        rec_drift[k] = drift

    def compute_lw() -> float:
        """Per-plant load weights; returns their plain sum."""
        tot = 0.0
        for x in range(n_plants):
            cnt = p_count[x]
            if cnt > 0:
                lw[x] = (cnt / (hdiv + cnt)) * p_summod[x]
            else:
                lw[x] = 0.0
            tot += lw[x]
        return tot

    def load_unload_exact() -> tuple[float, float]:
        """Exact plant-summed load/unload totals at current positions."""
        acc_l = 0.0
        for j in range(n_u):
            yx = u_x[j]
            yy = u_y[j]
            for x in range(n_plants):
                dx = yx - plant_x[x]
                dy = yy - plant_y[x]
                if dx * dx + dy * dy <= r2_load:
                    acc_l += lw[x]
        acc_un = 0.0
        for j in range(n_c):
            yx = c_x[j]
            yy = c_y[j]
            for x in range(n_plants):
                dx = yx - plant_x[x]
                dy = yy - plant_y[x]
                if dx * dx + dy * dy <= r2_unload:
                    acc_un += 1.0
        return beta0 * acc_l, eta0 * acc_un

    def diffuse(dt_phys: float):
        """Reflected EM over dt_phys on accelerated time, folding at walls."""
        nonlocal drift
        if dt_phys <= 0.0:
            return
        nsub = int(math.ceil(dt_phys / h_diff))
        if nsub < 1:
            nsub = 1
        dt_sub = dt_phys / nsub
        tau = accel * dt_sub
        sd_u = sig_u * math.sqrt(tau)
        sd_c = sig_c * math.sqrt(tau)
        for _ in range(nsub):
            if track_drift:
                # compensator of the on-plant virus count: births - deaths
                # - loads + unloads (carried-virus death acts on the vector
                # side only)
                load_ex, unload_ex = load_unload_exact()
                drift += (s_b - s_d - c_eff * ssq - load_ex + unload_ex) * dt_sub
            for j in range(n_u):
                u_x[j] = _fold(u_x[j] + ax_u * tau + sd_u * stream.next_normal(), lx)
                u_y[j] = _fold(u_y[j] + ay_u * tau + sd_u * stream.next_normal(), ly)
            for j in range(n_c):
                c_x[j] = _fold(c_x[j] + ax_c * tau + sd_c * stream.next_normal(), lx)
                c_y[j] = _fold(c_y[j] + ay_c * tau + sd_c * stream.next_normal(), ly)

    def draw_mutant(parent_trait, out) -> None:
        if kern_code == 0:  # uniform over the trait box
            for d in range(dim):
                out[d] = box_lo[d] + stream.next_uniform() * (box_hi[d] - box_lo[d])
            return
        for _ in range(10_000):
            ok = True
            for d in range(dim):
                out[d] = parent_trait[d] + kern_width * stream.next_normal()
            for d in range(dim):
                if out[d] < box_lo[d] or out[d] > box_hi[d]:
                    ok = False
                    break
            if ok:
                return
        raise NumericalError("mutation kernel rejection cap exhausted during simulation")

    def grow_v():
        nonlocal v_plant, v_trait, v_b, v_d, v_mod, cap_v
        new_cap = 2 * cap_v
        v_plant = np.resize(v_plant, new_cap)
        v_trait = np.resize(v_trait, (new_cap, dim))
        v_b = np.resize(v_b, new_cap)
        v_d = np.resize(v_d, new_cap)
        v_mod = np.resize(v_mod, new_cap)
        cap_v = new_cap

    def grow_u():
        nonlocal u_x, u_y, cap_u
        new_cap = 2 * cap_u
        u_x = np.resize(u_x, new_cap)
        u_y = np.resize(u_y, new_cap)
        cap_u = new_cap

    def grow_c():
        nonlocal c_x, c_y, c_trait, c_gam, cap_c
        new_cap = 2 * cap_c
        c_x = np.resize(c_x, new_cap)
        c_y = np.resize(c_y, new_cap)
        c_trait = np.resize(c_trait, (new_cap, dim))
        c_gam = np.resize(c_gam, new_cap)
        cap_c = new_cap

    def add_virus(plant: int, trait) -> None:
        nonlocal n_v, s_b, s_d, ssq
        if n_v == cap_v:
            grow_v()
        var = plant_var[plant]
        b = _rate_eval(b_code, b_values, b_amp, b_width, b_centers, var, trait, dim)
        d = _rate_eval(d_code, d_values, d_amp, d_width, d_centers, 0, trait, dim)
        md = _rate_eval(m_code, m_values, m_amp, m_width, m_centers, var, trait, dim)
        v_plant[n_v] = plant
        for dd in range(dim):
            v_trait[n_v, dd] = trait[dd]
        v_b[n_v] = b
        v_d[n_v] = d
        v_mod[n_v] = md
        n_v += 1
        cnt = p_count[plant]
        ssq += 2.0 * float(cnt) + 1.0
        p_count[plant] = cnt + 1
        p_summod[plant] += md
        s_b += b
        s_d += d

    def remove_virus(i: int) -> None:
        nonlocal n_v, s_b, s_d, ssq
        plant = v_plant[i]
        cnt = p_count[plant]
        ssq -= 2.0 * float(cnt) - 1.0
        p_count[plant] = cnt - 1
        p_summod[plant] -= v_mod[i]
        s_b -= v_b[i]
        s_d -= v_d[i]
        last = n_v - 1
        if i != last:
            v_plant[i] = v_plant[last]
            for dd in range(dim):
                v_trait[i, dd] = v_trait[last, dd]
            v_b[i] = v_b[last]
            v_d[i] = v_d[last]
            v_mod[i] = v_mod[last]
        n_v = last

    def add_free(yx: float, yy: float) -> None:
        nonlocal n_u
        if n_u == cap_u:
            grow_u()
        u_x[n_u] = yx
        u_y[n_u] = yy
        n_u += 1

    def remove_free(j: int) -> None:
        nonlocal n_u
        last = n_u - 1
        if j != last:
            u_x[j] = u_x[last]
            u_y[j] = u_y[last]
        n_u = last

    def add_charged(yx: float, yy: float, trait) -> None:
        nonlocal n_c, s_gam
        if n_c == cap_c:
            grow_c()
        c_x[n_c] = yx
        c_y[n_c] = yy
        for dd in range(dim):
            c_trait[n_c, dd] = trait[dd]
        gam = gamma_factor * _rate_eval(g_code, g_values, g_amp, g_width, g_centers, 0, trait, dim)
        c_gam[n_c] = gam
        s_gam += gam
        n_c += 1

    def remove_charged(j: int) -> None:
        nonlocal n_c, s_gam
        s_gam -= c_gam[j]
        last = n_c - 1
        if j != last:
            c_x[j] = c_x[last]
            c_y[j] = c_y[last]
            for dd in range(dim):
                c_trait[j, dd] = c_trait[last, dd]
            c_gam[j] = c_gam[last]
        n_c = last

    def pick_virus_by_birth(target: float) -> int:
        acc = 0.0
        for i in range(n_v):
            acc += v_b[i]
            if acc >= target:
                return i
        return n_v - 1

    # ---- main loop -------------------------------------------------------
    t = 0.0
    if n_v + n_c == 0:
        extinction_time = 0.0
    record(0, 0.0)
    next_k = 1
    scratch = np.zeros(dim, dtype=np.float64)

    while True:
        lw_sum = compute_lw()
        r_env = (
            s_b
            + s_d
            + c_eff * ssq
            + s_gam
            + n_u * (beta0 * lw_sum)
            + n_c * (eta0 * p_max_unload)
        )
        if r_env <= 0.0:
            while next_k < n_samples:
                record(next_k, next_k * sample_dt)
                next_k += 1
            break

        tau = -math.log1p(-stream.next_uniform()) / r_env
        t_cand = t + tau

        if t_cand > big_t:
            while next_k < n_samples:
                t_k = next_k * sample_dt
                diffuse(t_k - t)
                t = t_k
                record(next_k, t_k)
                next_k += 1
            break

        while next_k < n_samples:
            t_k = next_k * sample_dt
            if t_k > t_cand:
                break
            diffuse(t_k - t)
            t = t_k
            record(next_k, t_k)
            next_k += 1

        diffuse(t_cand - t)
        t = t_cand
        n_candidates += 1

        load_ex, unload_ex = load_unload_exact()
        w0 = (1.0 - mu) * s_b
        w1 = mu * s_b
        w2 = s_d + c_eff * ssq
        w3 = load_ex
        w4 = unload_ex
        w5 = s_gam
        r_ex = w0 + w1 + w2 + w3 + w4 + w5
        if r_ex > r_env * _ENV_SLACK:
            raise NumericalError("thinning envelope violated (internal rate bookkeeping bug)")
        if r_ex <= 0.0:
            continue  # nothing can happen at this candidate

        u2 = stream.next_uniform()
        if u2 * r_env > r_ex:
            continue  # rejected candidate

        # category walk: skip zero-weight categories so the remainder always
        # lands in a selectable one; fall back to the last positive weight
        # if float rounding pushes the target past the cumulative total
        target = stream.next_uniform() * r_ex
        wcat = (w0, w1, w2, w3, w4, w5)
        cat = -1
        rem = 0.0
        cum = 0.0
        for q in range(6):
            cum += wcat[q]
            if wcat[q] > 0.0 and target <= cum:
                cat = q
                rem = target - (cum - wcat[q])
                break
        if cat == -1:
            for q in range(5, -1, -1):
                if wcat[q] > 0.0:
                    cat = q
                    rem = wcat[q]
                    break

        if cat == 0:  # clonal birth
            i = pick_virus_by_birth(rem / (1.0 - mu))
            for dd in range(dim):
                scratch[dd] = v_trait[i, dd]
            add_virus(v_plant[i], scratch)
        elif cat == 1:  # mutant birth
            i = pick_virus_by_birth(rem / mu)
            draw_mutant(v_trait[i], scratch)
            add_virus(v_plant[i], scratch)
        elif cat == 2:  # virus death
            acc = 0.0
            pick = n_v - 1
            for i in range(n_v):
                acc += v_d[i] + c_eff * p_count[v_plant[i]]
                if acc >= rem:
                    pick = i
                    break
            remove_virus(pick)
        elif cat == 3:  # load
            rem_l = rem / beta0
            acc = 0.0
            pick_j = -1
            pick_x = -1
            for j in range(n_u):
                yx = u_x[j]
                yy = u_y[j]
                for x in range(n_plants):
                    dx = yx - plant_x[x]
                    dy = yy - plant_y[x]
                    if dx * dx + dy * dy <= r2_load and lw[x] > 0.0:
                        acc += lw[x]
                        if acc >= rem_l:
                            pick_j = j
                            pick_x = x
                            break
                if pick_j >= 0:
                    break
            if pick_j < 0:  # float-walk guard: take the last eligible pair
                for j in range(n_u - 1, -1, -1):
                    yx = u_x[j]
                    yy = u_y[j]
                    for x in range(n_plants - 1, -1, -1):
                        dx = yx - plant_x[x]
                        dy = yy - plant_y[x]
                        if dx * dx + dy * dy <= r2_load and lw[x] > 0.0:
                            pick_j = j
                            pick_x = x
                            break
                    if pick_j >= 0:
                        break
            if pick_j < 0:
                raise NumericalError("load selected with no eligible (vector, plant) pair")
            # choose the virus on plant pick_x proportionally to its modulation
            t_m = stream.next_uniform() * p_summod[pick_x]
            acc = 0.0
            pick_i = -1
            for i in range(n_v):
                if v_plant[i] == pick_x:
                    acc += v_mod[i]
                    pick_i = i
                    if acc >= t_m:
                        break
            yx = u_x[pick_j]
            yy = u_y[pick_j]
            for dd in range(dim):
                scratch[dd] = v_trait[pick_i, dd]
            remove_virus(pick_i)
            remove_free(pick_j)
            add_charged(yx, yy, scratch)
        elif cat == 4:  # unload
            rem_u = rem / eta0
            acc = 0.0
            pick_j = -1
            pick_x = -1
            for j in range(n_c):
                yx = c_x[j]
                yy = c_y[j]
                for x in range(n_plants):
                    dx = yx - plant_x[x]
                    dy = yy - plant_y[x]
                    if dx * dx + dy * dy <= r2_unload:
                        acc += 1.0
                        if acc >= rem_u:
                            pick_j = j
                            pick_x = x
                            break
                if pick_j >= 0:
                    break
            if pick_j < 0:
                for j in range(n_c - 1, -1, -1):
                    yx = c_x[j]
                    yy = c_y[j]
                    for x in range(n_plants - 1, -1, -1):
                        dx = yx - plant_x[x]
                        dy = yy - plant_y[x]
                        if dx * dx + dy * dy <= r2_unload:
                            pick_j = j
                            pick_x = x
                            break
                    if pick_j >= 0:
                        break
            if pick_j < 0:
                raise NumericalError("unload selected with no eligible (vector, plant) pair")
            yx = c_x[pick_j]
            yy = c_y[pick_j]
            for dd in range(dim):
                scratch[dd] = c_trait[pick_j, dd]
            remove_charged(pick_j)
            add_free(yx, yy)
            add_virus(pick_x, scratch)
        else:  # carried-virus death
            acc = 0.0
            pick_j = n_c - 1
            for j in range(n_c):
                acc += c_gam[j]
                if acc >= rem:
                    pick_j = j
                    break
            yx = c_x[pick_j]
            yy = c_y[pick_j]
            remove_charged(pick_j)
            add_free(yx, yy)

        n_events += 1
        if n_v + n_u + n_c > pop_cap:
            raise NumericalError(f"population cap exceeded ({n_v + n_u + n_c} > {pop_cap})")
        if n_events % refresh_every == 0:
            refresh_sums()
        if n_v + n_c == 0 and math.isnan(extinction_time):
            extinction_time = t

    return {
        "times": rec_t,
        "n_v": rec_nv,
        "n_u": rec_nu,
        "n_c": rec_nc,
        "per_plant": rec_plants,
        "hist": rec_hist,
        "drift": rec_drift,
        "n_events": n_events,
        "n_candidates": n_candidates,
        "extinction_time": extinction_time,
        "v_plant": v_plant[:n_v].copy(),
        "v_trait": v_trait[:n_v].copy(),
        "u_pos": np.column_stack([u_x[:n_u], u_y[:n_u]]),
        "c_pos": np.column_stack([c_x[:n_c], c_y[:n_c]]),
        "c_trait": c_trait[:n_c].copy(),
    }
