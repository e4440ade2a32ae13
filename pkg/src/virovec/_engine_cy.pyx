# cython: language_level=3
"""Compiled simulation engine.

Line-by-line transliteration of ``_engine_py.run``: same event categories,
same selection walks, same accumulation order, and the same scalar draw
order from the shared buffered RandomStream (whose blocks it reads directly,
calling back into Python only to refill). Scalar transcendentals come from
libm, which CPython's math module also wraps, so a given seed produces
trajectories bit-identical to the pure engine. Any behavioral edit must be
made in both files.
"""

import numpy as np

cimport cython
cimport numpy as cnp
from libc.math cimport ceil, exp, fmod, isnan, log1p, sqrt

from .model import NumericalError
from ._stream import BLOCK as _PY_BLOCK

cnp.import_array()

cdef double _ENV_SLACK = 1.0 + 1e-6
cdef Py_ssize_t _BLOCK = _PY_BLOCK


cdef inline double _fold(double p, double length) noexcept nogil:
    cdef double period = 2.0 * length
    p = fmod(p, period)
    if p < 0.0:
        p += period
    if p > length:
        p = period - p
    return p


@cython.boundscheck(False)
@cython.wraparound(False)
@cython.cdivision(True)
@cython.initializedcheck(False)
cdef class _Engine:
    cdef object stream
    cdef double[::1] ubuf, nbuf
    cdef Py_ssize_t iu, inn

    # model scalars
    cdef double mu, c_eff, beta0, eta0, hdiv, r2_load, r2_unload, accel
    cdef double ax_u, ay_u, ax_c, ay_c, sig_u, sig_c, lx, ly, gamma_factor
    cdef double sample_dt, big_t, h_diff, hist_lo, hist_scale
    cdef Py_ssize_t dim, nbins, n_samples, n_plants, refresh_every
    cdef long long pop_cap, p_max_unload
    cdef bint track_drift

    # plants
    cdef const double[::1] plant_x, plant_y
    cdef const cnp.int64_t[::1] plant_var

    # packed rate families
    cdef int b_code, d_code, g_code, m_code, kern_code
    cdef double b_amp, b_width, d_amp, d_width, g_amp, g_width, m_amp, m_width
    cdef double kern_width
    cdef const double[::1] b_values, d_values, g_values, m_values, box_lo, box_hi
    cdef const double[:, ::1] b_centers, d_centers, g_centers, m_centers

    # dynamic populations (object refs keep buffers alive across regrowth)
    cdef object v_plant_a, v_trait_a, v_b_a, v_d_a, v_mod_a
    cdef object u_x_a, u_y_a, c_x_a, c_y_a, c_trait_a, c_gam_a
    cdef cnp.int64_t[::1] v_plant
    cdef double[:, ::1] v_trait, c_trait
    cdef double[::1] v_b, v_d, v_mod, u_x, u_y, c_x, c_y, c_gam
    cdef cnp.int64_t[::1] p_count
    cdef double[::1] p_summod, lw, scratch
    cdef Py_ssize_t n_v, n_u, n_c, cap_v, cap_u, cap_c
    cdef double s_b, s_d, ssq, s_gam, drift

    # outputs
    cdef object rec_t_a, rec_nv_a, rec_nu_a, rec_nc_a, rec_plants_a, rec_hist_a
    cdef object rec_drift_a
    cdef double[::1] rec_t, rec_drift
    cdef cnp.int64_t[::1] rec_nv, rec_nu, rec_nc
    cdef cnp.int64_t[:, ::1] rec_plants, rec_hist
    cdef long long n_events, n_candidates
    cdef double extinction_time

    def __init__(self, inp, stream):
        self.stream = stream
        self.ubuf = stream._ubuf
        self.nbuf = stream._nbuf
        self.iu = stream._iu
        self.inn = stream._in

        self.mu = inp.mu
        self.c_eff = inp.c_eff
        self.beta0 = inp.beta0_eff
        self.eta0 = inp.eta0_eff
        self.hdiv = inp.hdiv
        self.r2_load = inp.r2_load
        self.r2_unload = inp.r2_unload
        self.accel = inp.accel
        self.ax_u = inp.ax_u
        self.ay_u = inp.ay_u
        self.ax_c = inp.ax_c
        self.ay_c = inp.ay_c
        self.sig_u = inp.sig_u
        self.sig_c = inp.sig_c
        self.lx = inp.lx
        self.ly = inp.ly
        self.gamma_factor = inp.gamma_factor
        self.dim = inp.dim
        self.nbins = inp.nbins
        self.n_samples = inp.n_samples
        self.sample_dt = inp.sample_dt
        self.big_t = inp.T
        self.h_diff = inp.h_diff
        self.track_drift = inp.track_drift
        self.refresh_every = inp.refresh_every
        self.pop_cap = inp.pop_cap
        self.p_max_unload = inp.p_max_unload

        self.plant_x = inp.plant_x
        self.plant_y = inp.plant_y
        self.plant_var = inp.plant_var
        self.n_plants = self.plant_x.shape[0]

        self.b_code = inp.birth_code
        self.b_values = inp.birth_values
        self.b_amp = inp.birth_amp
        self.b_width = inp.birth_width
        self.b_centers = inp.birth_centers
        self.d_code = inp.death_code
        self.d_values = inp.death_values
        self.d_amp = inp.death_amp
        self.d_width = inp.death_width
        self.d_centers = inp.death_centers
        self.g_code = inp.gamma_code
        self.g_values = inp.gamma_values
        self.g_amp = inp.gamma_amp
        self.g_width = inp.gamma_width
        self.g_centers = inp.gamma_centers
        self.m_code = inp.mod_code
        self.m_values = inp.mod_values
        self.m_amp = inp.mod_amp
        self.m_width = inp.mod_width
        self.m_centers = inp.mod_centers

        self.kern_code = inp.kern_code
        self.kern_width = inp.kern_width
        self.box_lo = inp.box_lo
        self.box_hi = inp.box_hi
        self.hist_lo = inp.box_lo[0]
        self.hist_scale = inp.nbins / (inp.box_hi[0] - inp.box_lo[0])

        cdef Py_ssize_t n_v = inp.v_plant0.shape[0]
        cdef Py_ssize_t n_u = inp.u_pos0.shape[0]
        cdef Py_ssize_t n_c = inp.c_pos0.shape[0]
        self.n_v = n_v
        self.n_u = n_u
        self.n_c = n_c
        self.cap_v = max(64, 2 * n_v + 8)
        self.cap_u = max(64, n_u + n_v + n_c + 8)
        self.cap_c = max(64, 2 * (n_c + n_v) + 8)

        self.v_plant_a = np.zeros(self.cap_v, dtype=np.int64)
        self.v_trait_a = np.zeros((self.cap_v, self.dim), dtype=np.float64)
        self.v_b_a = np.zeros(self.cap_v, dtype=np.float64)
        self.v_d_a = np.zeros(self.cap_v, dtype=np.float64)
        self.v_mod_a = np.zeros(self.cap_v, dtype=np.float64)
        self.v_plant_a[:n_v] = inp.v_plant0
        self.v_trait_a[:n_v] = inp.v_trait0
        self.v_plant = self.v_plant_a
        self.v_trait = self.v_trait_a
        self.v_b = self.v_b_a
        self.v_d = self.v_d_a
        self.v_mod = self.v_mod_a

        self.u_x_a = np.zeros(self.cap_u, dtype=np.float64)
        self.u_y_a = np.zeros(self.cap_u, dtype=np.float64)
        self.u_x_a[:n_u] = inp.u_pos0[:, 0]
        self.u_y_a[:n_u] = inp.u_pos0[:, 1]
        self.u_x = self.u_x_a
        self.u_y = self.u_y_a

        self.c_x_a = np.zeros(self.cap_c, dtype=np.float64)
        self.c_y_a = np.zeros(self.cap_c, dtype=np.float64)
        self.c_trait_a = np.zeros((self.cap_c, self.dim), dtype=np.float64)
        self.c_gam_a = np.zeros(self.cap_c, dtype=np.float64)
        self.c_x_a[:n_c] = inp.c_pos0[:, 0]
        self.c_y_a[:n_c] = inp.c_pos0[:, 1]
        self.c_trait_a[:n_c] = inp.c_trait0
        self.c_x = self.c_x_a
        self.c_y = self.c_y_a
        self.c_trait = self.c_trait_a
        self.c_gam = self.c_gam_a

        self.p_count = np.zeros(self.n_plants, dtype=np.int64)
        self.p_summod = np.zeros(self.n_plants, dtype=np.float64)
        self.lw = np.zeros(self.n_plants, dtype=np.float64)
        self.scratch = np.zeros(self.dim, dtype=np.float64)

        cdef Py_ssize_t i
        cdef long long x
        for i in range(n_v):
            x = self.v_plant[i]
            self.v_b[i] = self._eval_birth(self.plant_var[x], &self.v_trait[i, 0])
            self.v_d[i] = self._eval_death(&self.v_trait[i, 0])
            self.v_mod[i] = self._eval_mod(self.plant_var[x], &self.v_trait[i, 0])
        for i in range(n_c):
            self.c_gam[i] = self.gamma_factor * self._eval_gamma(&self.c_trait[i, 0])
        self._refresh()

        self.rec_t_a = np.zeros(self.n_samples, dtype=np.float64)
        self.rec_nv_a = np.zeros(self.n_samples, dtype=np.int64)
        self.rec_nu_a = np.zeros(self.n_samples, dtype=np.int64)
        self.rec_nc_a = np.zeros(self.n_samples, dtype=np.int64)
        self.rec_plants_a = np.zeros((self.n_samples, self.n_plants), dtype=np.int64)
        self.rec_hist_a = np.zeros((self.n_samples, self.nbins), dtype=np.int64)
        self.rec_drift_a = np.zeros(self.n_samples, dtype=np.float64)
        self.rec_t = self.rec_t_a
        self.rec_nv = self.rec_nv_a
        self.rec_nu = self.rec_nu_a
        self.rec_nc = self.rec_nc_a
        self.rec_plants = self.rec_plants_a
        self.rec_hist = self.rec_hist_a
        self.rec_drift = self.rec_drift_a

        self.drift = 0.0
        self.n_events = 0
        self.n_candidates = 0
        self.extinction_time = <double> np.nan

    # -- random draws ------------------------------------------------------

    cdef inline double _next_u(self):
        if self.iu == _BLOCK:
            self.stream._refill_uniform()
            self.iu = 0
        cdef double v = self.ubuf[self.iu]
        self.iu += 1
        return v

    cdef inline double _next_n(self):
        if self.inn == _BLOCK:
            self.stream._refill_normal()
            self.inn = 0
        cdef double v = self.nbuf[self.inn]
        self.inn += 1
        return v

    # -- packed rate families ------------------------------------------------

    cdef inline double _eval_birth(self, long long var, double* z) noexcept:
        cdef double q, dz
        cdef Py_ssize_t d
        if self.b_code == 0:
            return self.b_values[var]
        q = 0.0
        for d in range(self.dim):
            dz = z[d] - self.b_centers[var, d]
            q += dz * dz
        return self.b_amp * exp(-q / (2.0 * self.b_width * self.b_width))

    cdef inline double _eval_death(self, double* z) noexcept:
        cdef double q, dz
        cdef Py_ssize_t d
        if self.d_code == 0:
            return self.d_values[0]
        q = 0.0
        for d in range(self.dim):
            dz = z[d] - self.d_centers[0, d]
            q += dz * dz
        return self.d_amp * exp(-q / (2.0 * self.d_width * self.d_width))

    cdef inline double _eval_gamma(self, double* z) noexcept:
        cdef double q, dz
        cdef Py_ssize_t d
        if self.g_code == 0:
            return self.g_values[0]
        q = 0.0
        for d in range(self.dim):
            dz = z[d] - self.g_centers[0, d]
            q += dz * dz
        return self.g_amp * exp(-q / (2.0 * self.g_width * self.g_width))

    cdef inline double _eval_mod(self, long long var, double* z) noexcept:
        cdef double q, dz
        cdef Py_ssize_t d
        if self.m_code == 0:
            return self.m_values[var]
        q = 0.0
        for d in range(self.dim):
            dz = z[d] - self.m_centers[var, d]
            q += dz * dz
        return self.m_amp * exp(-q / (2.0 * self.m_width * self.m_width))

    # -- bookkeeping ---------------------------------------------------------

    cdef void _refresh(self) noexcept:
        cdef Py_ssize_t i, x
        for x in range(self.n_plants):
            self.p_count[x] = 0
            self.p_summod[x] = 0.0
        self.s_b = 0.0
        self.s_d = 0.0
        self.s_gam = 0.0
        for i in range(self.n_v):
            self.s_b += self.v_b[i]
            self.s_d += self.v_d[i]
            self.p_count[self.v_plant[i]] += 1
            self.p_summod[self.v_plant[i]] += self.v_mod[i]
        self.ssq = 0.0
        for x in range(self.n_plants):
            self.ssq += (<double> self.p_count[x]) * (<double> self.p_count[x])
        for i in range(self.n_c):
            self.s_gam += self.c_gam[i]

    cdef void _record(self, Py_ssize_t k, double t_k) noexcept:
        cdef Py_ssize_t i, x
        cdef long long bi
        self.rec_t[k] = t_k
        self.rec_nv[k] = self.n_v
        self.rec_nu[k] = self.n_u
        self.rec_nc[k] = self.n_c
        for x in range(self.n_plants):
            self.rec_plants[k, x] = self.p_count[x]
        for i in range(self.n_v):
            bi = <long long> ((self.v_trait[i, 0] - self.hist_lo) * self.hist_scale)
            if bi < 0:
                bi = 0
            elif bi >= self.nbins:
                bi = self.nbins - 1
            self.rec_hist[k, bi] += 1
        for i in range(self.n_c):
            bi = <long long> ((self.c_trait[i, 0] - self.hist_lo) * self.hist_scale)
            if bi < 0:
                bi = 0
            elif bi >= self.nbins:
                bi = self.nbins - 1
            self.rec_hist[k, bi] += 1
        self.rec_drift[k] = self.drift

    cdef double _compute_lw(self) noexcept:
        cdef double tot = 0.0
        cdef Py_ssize_t x
        cdef long long cnt
        for x in range(self.n_plants):
            cnt = self.p_count[x]
            if cnt > 0:
                self.lw[x] = ((<double> cnt) / (self.hdiv + (<double> cnt))) * self.p_summod[x]
            else:
                self.lw[x] = 0.0
            tot += self.lw[x]
        return tot

    cdef (double, double) _load_unload_exact(self) noexcept:
        cdef double acc_l = 0.0
        cdef double acc_un = 0.0
        cdef double yx, yy, dx, dy
        cdef Py_ssize_t j, x
        for j in range(self.n_u):
            yx = self.u_x[j]
            yy = self.u_y[j]
            for x in range(self.n_plants):
                dx = yx - self.plant_x[x]
                dy = yy - self.plant_y[x]
                if dx * dx + dy * dy <= self.r2_load:
                    acc_l += self.lw[x]
        for j in range(self.n_c):
            yx = self.c_x[j]
            yy = self.c_y[j]
            for x in range(self.n_plants):
                dx = yx - self.plant_x[x]
                dy = yy - self.plant_y[x]
                if dx * dx + dy * dy <= self.r2_unload:
                    acc_un += 1.0
        return self.beta0 * acc_l, self.eta0 * acc_un

    cdef void _diffuse(self, double dt_phys):
        cdef Py_ssize_t nsub, s, j
        cdef double dt_sub, tau, sd_u, sd_c, load_ex, unload_ex
        cdef (double, double) lu
        if dt_phys <= 0.0:
            return
        nsub = <Py_ssize_t> ceil(dt_phys / self.h_diff)
        if nsub < 1:
            nsub = 1
        dt_sub = dt_phys / nsub
        tau = self.accel * dt_sub
        sd_u = self.sig_u * sqrt(tau)
        sd_c = self.sig_c * sqrt(tau)
        for s in range(nsub):
            if self.track_drift:
                # compensator of the on-plant virus count: births - deaths
                # - loads + unloads (carried-virus death acts on the vector
                # side only)
                lu = self._load_unload_exact()
                load_ex = lu[0]
                unload_ex = lu[1]
                self.drift += (
                    self.s_b - self.s_d - self.c_eff * self.ssq
                    - load_ex + unload_ex
                ) * dt_sub
            for j in range(self.n_u):
                self.u_x[j] = _fold(
                    self.u_x[j] + self.ax_u * tau + sd_u * self._next_n(), self.lx
                )
                self.u_y[j] = _fold(
                    self.u_y[j] + self.ay_u * tau + sd_u * self._next_n(), self.ly
                )
            for j in range(self.n_c):
                self.c_x[j] = _fold(
                    self.c_x[j] + self.ax_c * tau + sd_c * self._next_n(), self.lx
                )
                self.c_y[j] = _fold(
                    self.c_y[j] + self.ay_c * tau + sd_c * self._next_n(), self.ly
                )

    cdef void _draw_mutant(self, double* parent, double* out):
        cdef Py_ssize_t d, attempt
        cdef bint ok
        if self.kern_code == 0:
            for d in range(self.dim):
                out[d] = self.box_lo[d] + self._next_u() * (self.box_hi[d] - self.box_lo[d])
            return
        for attempt in range(10000):
            ok = True
            for d in range(self.dim):
                out[d] = parent[d] + self.kern_width * self._next_n()
            for d in range(self.dim):
                if out[d] < self.box_lo[d] or out[d] > self.box_hi[d]:
                    ok = False
                    break
            if ok:
                return
        raise NumericalError("mutation kernel rejection cap exhausted during simulation")

    # -- growth --------------------------------------------------------------

    cdef void _grow_v(self):
        cdef Py_ssize_t new_cap = 2 * self.cap_v
        self.v_plant_a = np.resize(self.v_plant_a, new_cap)
        self.v_trait_a = np.resize(self.v_trait_a, (new_cap, self.dim))
        self.v_b_a = np.resize(self.v_b_a, new_cap)
        self.v_d_a = np.resize(self.v_d_a, new_cap)
        self.v_mod_a = np.resize(self.v_mod_a, new_cap)
        self.v_plant = self.v_plant_a
        self.v_trait = self.v_trait_a
        self.v_b = self.v_b_a
        self.v_d = self.v_d_a
        self.v_mod = self.v_mod_a
        self.cap_v = new_cap

    cdef void _grow_u(self):
        cdef Py_ssize_t new_cap = 2 * self.cap_u
        self.u_x_a = np.resize(self.u_x_a, new_cap)
        self.u_y_a = np.resize(self.u_y_a, new_cap)
        self.u_x = self.u_x_a
        self.u_y = self.u_y_a
        self.cap_u = new_cap

    cdef void _grow_c(self):
        cdef Py_ssize_t new_cap = 2 * self.cap_c
        self.c_x_a = np.resize(self.c_x_a, new_cap)
        self.c_y_a = np.resize(self.c_y_a, new_cap)
        self.c_trait_a = np.resize(self.c_trait_a, (new_cap, self.dim))
        self.c_gam_a = np.resize(self.c_gam_a, new_cap)
        self.c_x = self.c_x_a
        self.c_y = self.c_y_a
        self.c_trait = self.c_trait_a
        self.c_gam = self.c_gam_a
        self.cap_c = new_cap

    # -- population updates ----------------------------------------------------

    cdef void _add_virus(self, long long plant, double* trait):
        cdef double b, d, md
        cdef long long cnt
        cdef Py_ssize_t dd
        if self.n_v == self.cap_v:
            self._grow_v()
        cdef long long var = self.plant_var[plant]
        b = self._eval_birth(var, trait)
        d = self._eval_death(trait)
        md = self._eval_mod(var, trait)
        self.v_plant[self.n_v] = plant
        for dd in range(self.dim):
            self.v_trait[self.n_v, dd] = trait[dd]
        self.v_b[self.n_v] = b
        self.v_d[self.n_v] = d
        self.v_mod[self.n_v] = md
        self.n_v += 1
        cnt = self.p_count[plant]
        self.ssq += 2.0 * (<double> cnt) + 1.0
        self.p_count[plant] = cnt + 1
        self.p_summod[plant] += md
        self.s_b += b
        self.s_d += d

    cdef void _remove_virus(self, Py_ssize_t i) noexcept:
        cdef long long plant = self.v_plant[i]
        cdef long long cnt = self.p_count[plant]
        cdef Py_ssize_t last, dd
        self.ssq -= 2.0 * (<double> cnt) - 1.0
        self.p_count[plant] = cnt - 1
        self.p_summod[plant] -= self.v_mod[i]
        self.s_b -= self.v_b[i]
        self.s_d -= self.v_d[i]
        last = self.n_v - 1
        if i != last:
            self.v_plant[i] = self.v_plant[last]
            for dd in range(self.dim):
                self.v_trait[i, dd] = self.v_trait[last, dd]
            self.v_b[i] = self.v_b[last]
            self.v_d[i] = self.v_d[last]
            self.v_mod[i] = self.v_mod[last]
        self.n_v = last

    cdef void _add_free(self, double yx, double yy):
        if self.n_u == self.cap_u:
            self._grow_u()
        self.u_x[self.n_u] = yx
        self.u_y[self.n_u] = yy
        self.n_u += 1

    cdef void _remove_free(self, Py_ssize_t j) noexcept:
        cdef Py_ssize_t last = self.n_u - 1
        if j != last:
            self.u_x[j] = self.u_x[last]
            self.u_y[j] = self.u_y[last]
        self.n_u = last

    cdef void _add_charged(self, double yx, double yy, double* trait):
        cdef Py_ssize_t dd
        cdef double gam
        if self.n_c == self.cap_c:
            self._grow_c()
        self.c_x[self.n_c] = yx
        self.c_y[self.n_c] = yy
        for dd in range(self.dim):
            self.c_trait[self.n_c, dd] = trait[dd]
        gam = self.gamma_factor * self._eval_gamma(trait)
        self.c_gam[self.n_c] = gam
        self.s_gam += gam
        self.n_c += 1

    cdef void _remove_charged(self, Py_ssize_t j) noexcept:
        cdef Py_ssize_t last, dd
        self.s_gam -= self.c_gam[j]
        last = self.n_c - 1
        if j != last:
            self.c_x[j] = self.c_x[last]
            self.c_y[j] = self.c_y[last]
            for dd in range(self.dim):
                self.c_trait[j, dd] = self.c_trait[last, dd]
            self.c_gam[j] = self.c_gam[last]
        self.n_c = last

    cdef Py_ssize_t _pick_virus_by_birth(self, double target) noexcept:
        cdef double acc = 0.0
        cdef Py_ssize_t i
        for i in range(self.n_v):
            acc += self.v_b[i]
            if acc >= target:
                return i
        return self.n_v - 1

    # -- main loop ---------------------------------------------------------------

    def _run(self):
        cdef double t = 0.0
        cdef Py_ssize_t next_k = 1
        cdef double lw_sum, r_env, tau, t_cand, t_k, load_ex, unload_ex
        cdef double w0, w1, w2, w3, w4, w5, r_ex, u2, target, cum, rem
        cdef double acc, t_m, yx, yy, dx, dy
        cdef double wcat[6]
        cdef (double, double) lu
        cdef Py_ssize_t i, j, x, q, dd, cat, pick, pick_i, pick_j, pick_x

        if self.n_v + self.n_c == 0:
            self.extinction_time = 0.0
        self._record(0, 0.0)

        while True:
            lw_sum = self._compute_lw()
            r_env = (
                self.s_b
                + self.s_d
                + self.c_eff * self.ssq
                + self.s_gam
                + self.n_u * (self.beta0 * lw_sum)
                + self.n_c * (self.eta0 * self.p_max_unload)
            )
            if r_env <= 0.0:
                while next_k < self.n_samples:
                    self._record(next_k, next_k * self.sample_dt)
                    next_k += 1
                break

            tau = -log1p(-self._next_u()) / r_env
            t_cand = t + tau

            if t_cand > self.big_t:
                while next_k < self.n_samples:
                    t_k = next_k * self.sample_dt
                    self._diffuse(t_k - t)
                    t = t_k
                    self._record(next_k, t_k)
                    next_k += 1
                break

            while next_k < self.n_samples:
                t_k = next_k * self.sample_dt
                if t_k > t_cand:
                    break
                self._diffuse(t_k - t)
                t = t_k
                self._record(next_k, t_k)
                next_k += 1

            self._diffuse(t_cand - t)
            t = t_cand
            self.n_candidates += 1

            lu = self._load_unload_exact()
            load_ex = lu[0]
            unload_ex = lu[1]
            w0 = (1.0 - self.mu) * self.s_b
            w1 = self.mu * self.s_b
            w2 = self.s_d + self.c_eff * self.ssq
            w3 = load_ex
            w4 = unload_ex
            w5 = self.s_gam
            r_ex = w0 + w1 + w2 + w3 + w4 + w5
            if r_ex > r_env * _ENV_SLACK:
                raise NumericalError(
                    "thinning envelope violated (internal rate bookkeeping bug)"
                )
            if r_ex <= 0.0:
                continue

            u2 = self._next_u()
            if u2 * r_env > r_ex:
                continue

            target = self._next_u() * r_ex
            wcat[0] = w0
            wcat[1] = w1
            wcat[2] = w2
            wcat[3] = w3
            wcat[4] = w4
            wcat[5] = w5
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
                i = self._pick_virus_by_birth(rem / (1.0 - self.mu))
                for dd in range(self.dim):
                    self.scratch[dd] = self.v_trait[i, dd]
                self._add_virus(self.v_plant[i], &self.scratch[0])
            elif cat == 1:  # mutant birth
                i = self._pick_virus_by_birth(rem / self.mu)
                self._draw_mutant(&self.v_trait[i, 0], &self.scratch[0])
                self._add_virus(self.v_plant[i], &self.scratch[0])
            elif cat == 2:  # virus death
                acc = 0.0
                pick = self.n_v - 1
                for i in range(self.n_v):
                    acc += self.v_d[i] + self.c_eff * self.p_count[self.v_plant[i]]
                    if acc >= rem:
                        pick = i
                        break
                self._remove_virus(pick)
            elif cat == 3:  # load
                rem = rem / self.beta0
                acc = 0.0
                pick_j = -1
                pick_x = -1
                for j in range(self.n_u):
                    yx = self.u_x[j]
                    yy = self.u_y[j]
                    for x in range(self.n_plants):
                        dx = yx - self.plant_x[x]
                        dy = yy - self.plant_y[x]
                        if dx * dx + dy * dy <= self.r2_load and self.lw[x] > 0.0:
                            acc += self.lw[x]
                            if acc >= rem:
                                pick_j = j
                                pick_x = x
                                break
                    if pick_j >= 0:
                        break
                if pick_j < 0:  # float-walk guard: take the last eligible pair
                    for j in range(self.n_u - 1, -1, -1):
                        yx = self.u_x[j]
                        yy = self.u_y[j]
                        for x in range(self.n_plants - 1, -1, -1):
                            dx = yx - self.plant_x[x]
                            dy = yy - self.plant_y[x]
                            if dx * dx + dy * dy <= self.r2_load and self.lw[x] > 0.0:
                                pick_j = j
                                pick_x = x
                                break
                        if pick_j >= 0:
                            break
                if pick_j < 0:
                    raise NumericalError("load selected with no eligible (vector, plant) pair")
                t_m = self._next_u() * self.p_summod[pick_x]
                acc = 0.0
                pick_i = -1
                for i in range(self.n_v):
                    if self.v_plant[i] == pick_x:
                        acc += self.v_mod[i]
                        pick_i = i
                        if acc >= t_m:
                            break
                yx = self.u_x[pick_j]
                yy = self.u_y[pick_j]
                for dd in range(self.dim):
                    self.scratch[dd] = self.v_trait[pick_i, dd]
                self._remove_virus(pick_i)
                self._remove_free(pick_j)
                self._add_charged(yx, yy, &self.scratch[0])
            elif cat == 4:  # unload
                rem = rem / self.eta0
                acc = 0.0
                pick_j = -1
                pick_x = -1
                for j in range(self.n_c):
                    yx = self.c_x[j]
                    yy = self.c_y[j]
                    for x in range(self.n_plants):
                        dx = yx - self.plant_x[x]
                        dy = yy - self.plant_y[x]
                        if dx * dx + dy * dy <= self.r2_unload:
                            acc += 1.0
                            if acc >= rem:
                                pick_j = j
                                pick_x = x
                                break
                    if pick_j >= 0:
                        break
                if pick_j < 0:
                    for j in range(self.n_c - 1, -1, -1):
                        yx = self.c_x[j]
                        yy = self.c_y[j]
                        for x in range(self.n_plants - 1, -1, -1):
                            dx = yx - self.plant_x[x]
                            dy = yy - self.plant_y[x]
                            if dx * dx + dy * dy <= self.r2_unload:
                                pick_j = j
                                pick_x = x
                                break
                        if pick_j >= 0:
                            break
                if pick_j < 0:
                    raise NumericalError("unload selected with no eligible (vector, plant) pair")
                yx = self.c_x[pick_j]
                yy = self.c_y[pick_j]
                for dd in range(self.dim):
                    self.scratch[dd] = self.c_trait[pick_j, dd]
                self._remove_charged(pick_j)
                self._add_free(yx, yy)
                self._add_virus(pick_x, &self.scratch[0])
            else:  # carried-virus death
                acc = 0.0
                pick_j = self.n_c - 1
                for j in range(self.n_c):
                    acc += self.c_gam[j]
                    if acc >= rem:
                        pick_j = j
                        break
                yx = self.c_x[pick_j]
                yy = self.c_y[pick_j]
                self._remove_charged(pick_j)
                self._add_free(yx, yy)

            self.n_events += 1
            if self.n_v + self.n_u + self.n_c > self.pop_cap:
                raise NumericalError(
                    f"population cap exceeded ({self.n_v + self.n_u + self.n_c} > {self.pop_cap})"
                )
            if self.n_events % self.refresh_every == 0:
                self._refresh()
            if self.n_v + self.n_c == 0 and isnan(self.extinction_time):
                self.extinction_time = t


def run(inp, stream):
    """Simulate to T, recording observables on the uniform sample grid."""
    eng = _Engine(inp, stream)
    try:
        eng._run()
    finally:
        stream._iu = eng.iu
        stream._in = eng.inn
    n_v, n_u, n_c = eng.n_v, eng.n_u, eng.n_c
    return {
        "times": eng.rec_t_a,
        "n_v": eng.rec_nv_a,
        "n_u": eng.rec_nu_a,
        "n_c": eng.rec_nc_a,
        "per_plant": eng.rec_plants_a,
        "hist": eng.rec_hist_a,
        "drift": eng.rec_drift_a,
        "n_events": eng.n_events,
        "n_candidates": eng.n_candidates,
        "extinction_time": eng.extinction_time,
        "v_plant": np.asarray(eng.v_plant_a)[:n_v].copy(),
        "v_trait": np.asarray(eng.v_trait_a)[:n_v].copy(),
        "u_pos": np.column_stack([np.asarray(eng.u_x_a)[:n_u], np.asarray(eng.u_y_a)[:n_u]]),
        "c_pos": np.column_stack([np.asarray(eng.c_x_a)[:n_c], np.asarray(eng.c_y_a)[:n_c]]),
        "c_trait": np.asarray(eng.c_trait_a)[:n_c].copy(),
    }
