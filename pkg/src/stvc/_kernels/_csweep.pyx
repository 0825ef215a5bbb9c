# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Gibbs sweep kernel.

Mirrors _pysweep.run_stvc_chain statement for statement: same update
order, same sequential accumulation order, same randomness consumption
(normals via random_standard_normal in the order the pure kernel batches
them, gammas via random_standard_gamma).  Given the same BitGenerator
state the two kernels therefore produce bit-identical chains.
"""

from libc.math cimport isfinite, sqrt
from libc.stdint cimport int64_t

import numpy as np

from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport random_standard_gamma, random_standard_normal


def run_stvc_chain(bitgen, y, x, c_sites, D,
                   fwd_indptr, fwd_indices, rev_indptr, rev_indices,
                   n, T, p,
                   m_alpha, c_alpha, m0, c0, a0, b0,
                   iterations, burn_in, thin, keep_gamma,
                   alpha0, beta0, gamma0, omega0, tau0):
    """See _pysweep.run_stvc_chain; identical contract and return value."""
    cdef double[::1] yl = np.ascontiguousarray(y, dtype=np.float64)
    cdef double[::1] xl = np.ascontiguousarray(x, dtype=np.float64).reshape(-1)
    cdef double[::1] cl = np.ascontiguousarray(c_sites, dtype=np.float64)
    cdef double[::1] Dl = np.ascontiguousarray(D, dtype=np.float64)
    cdef int64_t[::1] fptr = np.ascontiguousarray(fwd_indptr, dtype=np.int64)
    cdef int64_t[::1] fidx = np.ascontiguousarray(fwd_indices, dtype=np.int64)
    cdef int64_t[::1] rptr = np.ascontiguousarray(rev_indptr, dtype=np.int64)
    cdef int64_t[::1] ridx = np.ascontiguousarray(rev_indices, dtype=np.int64)

    cdef Py_ssize_t cn = n, cT = T, cp = p
    cdef Py_ssize_t M = cn * cT
    cdef int citer = iterations, cburn = burn_in, cthin = thin
    cdef bint keep_g = bool(keep_gamma)
    cdef Py_ssize_t R = (citer - cburn) // cthin

    cdef double cma = m_alpha, cca = c_alpha, cm0 = m0, cc0 = c0
    cdef double ca0 = a0, cb0 = b0

    beta_arr = np.ascontiguousarray(beta0, dtype=np.float64).reshape(-1).copy()
    gamma_arr = np.ascontiguousarray(gamma0, dtype=np.float64).reshape(-1).copy()
    omega_arr = np.ascontiguousarray(omega0, dtype=np.float64).copy()
    tau_arr = np.ascontiguousarray(tau0, dtype=np.float64).copy()
    cdef double[::1] beta = beta_arr
    cdef double[::1] gamma = gamma_arr
    cdef double[::1] omega = omega_arr
    cdef double[::1] tau = tau_arr
    cdef double alpha = alpha0

    alphas_arr = np.empty(R)
    betas_arr = np.empty((R, M, cp))
    gammas_arr = np.empty((R, M, cp)) if keep_g else None
    omegas_arr = np.empty((R, cp))
    taus_arr = np.empty((R, cn))
    cdef double[::1] alphas = alphas_arr
    cdef double[:, :, ::1] betas = betas_arr
    cdef double[:, :, ::1] gammas = gammas_arr if keep_g else np.empty((0, M, cp))
    cdef double[:, ::1] omegas = omegas_arr
    cdef double[:, ::1] taus = taus_arr

    cdef bitgen_t *rng
    capsule = bitgen.capsule
    if not PyCapsule_IsValid(capsule, "BitGenerator"):
        raise ValueError("expected a numpy BitGenerator")
    rng = <bitgen_t *> PyCapsule_GetPointer(capsule, "BitGenerator")

    cdef double c0m0 = cc0 * cm0
    cdef double ctot = 0.0
    cdef Py_ssize_t m
    for m in range(M):
        ctot += cl[m]
    cdef double a_tau = ca0 + 0.5 * cT

    cdef Py_ssize_t kept = 0, off, k, l, i, t, jj, uu, j
    cdef int sweep, bad_sweep = 0
    cdef bint ok
    cdef double st, sr, eta, ti, ta, ns, pr, xk, tb, mu, cm, ssum, sinv
    cdef double inner, den, tg, to, sg, rss, r, b_tau, g

    with bitgen.lock:
        for sweep in range(1, citer + 1):
            # alpha
            st = 0.0
            sr = 0.0
            for m in range(M):
                eta = 0.0
                off = m * cp
                for k in range(cp):
                    eta += beta[off + k] * xl[off + k]
                ti = tau[m // cT]
                st += ti
                sr += ti * (yl[m] - eta)
            ta = cca + st
            alpha = (cca * cma + sr) / ta + random_standard_normal(rng) / sqrt(ta)

            # beta, site-major, covariate-inner
            for m in range(M):
                ti = tau[m // cT]
                off = m * cp
                for k in range(cp):
                    ns = 0.0
                    for uu in range(fptr[m], fptr[m + 1]):
                        ns += cl[fidx[uu]] * gamma[fidx[uu] * cp + k]
                    pr = yl[m] - alpha
                    for l in range(cp):
                        if l != k:
                            pr -= beta[off + l] * xl[off + l]
                    xk = xl[off + k]
                    tb = Dl[m] + ti * xk * xk
                    mu = (c0m0 + ns + ti * xk * pr) / tb
                    beta[off + k] = mu + random_standard_normal(rng) / sqrt(tb)

            # gamma, same scan order; shared-site term removed by
            # subtracting its contribution from the full neighbour sum
            for m in range(M):
                cm = cl[m]
                off = m * cp
                for k in range(cp):
                    ssum = 0.0
                    sinv = 0.0
                    for jj in range(rptr[m], rptr[m + 1]):
                        j = ridx[jj]
                        inner = 0.0
                        for uu in range(fptr[j], fptr[j + 1]):
                            inner += cl[fidx[uu]] * gamma[fidx[uu] * cp + k]
                        inner -= cm * gamma[off + k]
                        ssum += beta[j * cp + k] - (c0m0 + inner) / Dl[j]
                        sinv += 1.0 / Dl[j]
                    den = 1.0 + cm * sinv
                    tg = cm * den
                    gamma[off + k] = (omega[k] + ssum) / den + random_standard_normal(rng) / sqrt(tg)

            # omega
            ok = True
            to = cc0 + ctot
            for k in range(cp):
                sg = 0.0
                for m in range(M):
                    sg += cl[m] * gamma[m * cp + k]
                omega[k] = (c0m0 + sg) / to + random_standard_normal(rng) / sqrt(to)
                ok = ok and isfinite(sg) and isfinite(omega[k])

            # tau
            for i in range(cn):
                rss = 0.0
                for t in range(cT):
                    m = i * cT + t
                    eta = alpha
                    off = m * cp
                    for k in range(cp):
                        eta += beta[off + k] * xl[off + k]
                    r = yl[m] - eta
                    rss += r * r
                b_tau = cb0 + 0.5 * rss
                g = random_standard_gamma(rng, a_tau)
                tau[i] = g / b_tau
                ok = ok and isfinite(b_tau) and tau[i] > 0.0 and isfinite(tau[i])

            ok = ok and isfinite(alpha)
            if not ok:
                bad_sweep = sweep
                break

            if sweep > cburn and (sweep - cburn) % cthin == 0:
                alphas[kept] = alpha
                for m in range(M):
                    for k in range(cp):
                        betas[kept, m, k] = beta[m * cp + k]
                        if keep_g:
                            gammas[kept, m, k] = gamma[m * cp + k]
                for k in range(cp):
                    omegas[kept, k] = omega[k]
                for i in range(cn):
                    taus[kept, i] = tau[i]
                kept += 1

    return {
        "bad_sweep": bad_sweep,
        "kept": kept,
        "alphas": alphas_arr,
        "betas": betas_arr,
        "gammas": gammas_arr,
        "omegas": omegas_arr,
        "taus": taus_arr,
        "state": {
            "alpha": alpha,
            "beta": beta_arr.reshape(M, cp),
            "gamma": gamma_arr.reshape(M, cp),
            "omega": omega_arr,
            "tau": tau_arr,
        },
    }
