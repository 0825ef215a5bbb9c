"""Pure-Python Gibbs sweep kernel.

This module is the reference for the sampling schedule; the compiled
kernel (_csweep.pyx) mirrors it statement for statement.  Both consume the
supplied BitGenerator in exactly the same order, so given equal generator
states they produce bit-identical chains:

    per sweep: 1 + 2*M*p + p standard normals
               [alpha | beta site-major covariate-inner | gamma likewise
                | omega per covariate]
               followed by n standard gammas (tau, ascending unit).

All floating-point accumulations are sequential in ascending index order
to match the C loops.  Arrays come in flat unit-major/time-minor layout:
site m = (unit-1)*T + (time-1), coefficient slot m*p + k.
"""

from __future__ import annotations

from math import isfinite, sqrt

import numpy as np


def run_stvc_chain(bitgen, y, x, c_sites, D,
                   fwd_indptr, fwd_indices, rev_indptr, rev_indices,
                   n, T, p,
                   m_alpha, c_alpha, m0, c0, a0, b0,
                   iterations, burn_in, thin, keep_gamma,
                   alpha0, beta0, gamma0, omega0, tau0):
    """Run the full sweep schedule; returns retained draws and final state.

    Returns a dict with ``bad_sweep`` (0 on success, else the 1-based
    sweep at which a non-finite value appeared, aborting the run), the
    retained blocks ``alphas``/``betas``/``gammas``/``omegas``/``taus``,
    and ``state``, the full state at exit.
    """
    gen = np.random.Generator(bitgen)
    M = n * T
    R = (iterations - burn_in) // thin

    yl = [float(v) for v in y]
    xl = [float(v) for v in x]
    cl = [float(v) for v in c_sites]
    Dl = [float(v) for v in D]
    fwd = _rows(fwd_indptr, fwd_indices)
    rev = _rows(rev_indptr, rev_indices)
    # pre-paired (slot offset, weight) per neighbour saves an index lookup
    fwd_w = [[(u * p, cl[u]) for u in row] for row in fwd]

    alpha = float(alpha0)
    beta = [float(v) for v in np.asarray(beta0).ravel()]
    gamma = [float(v) for v in np.asarray(gamma0).ravel()]
    omega = [float(v) for v in omega0]
    tau = [float(v) for v in tau0]

    alphas = np.empty(R)
    betas = np.empty((R, M, p))
    gammas = np.empty((R, M, p)) if keep_gamma else None
    omegas = np.empty((R, p))
    taus = np.empty((R, n))

    c0m0 = c0 * m0
    ctot = 0.0
    for m in range(M):
        ctot += cl[m]
    a_tau = a0 + 0.5 * T
    n_norm = 1 + 2 * M * p + p

    bad_sweep = 0
    kept = 0
    for sweep in range(1, iterations + 1):
        z = gen.standard_normal(n_norm)
        zi = 0

        # alpha
        st = 0.0
        sr = 0.0
        for m in range(M):
            eta = 0.0
            off = m * p
            for k in range(p):
                eta += beta[off + k] * xl[off + k]
            ti = tau[m // T]
            st += ti
            sr += ti * (yl[m] - eta)
        ta = c_alpha + st
        alpha = (c_alpha * m_alpha + sr) / ta + float(z[zi]) / sqrt(ta)
        zi += 1

        # beta, site-major, covariate-inner
        for m in range(M):
            ti = tau[m // T]
            off = m * p
            for k in range(p):
                ns = 0.0
                for uoff, cw in fwd_w[m]:
                    ns += cw * gamma[uoff + k]
                pr = yl[m] - alpha
                for l in range(p):
                    if l != k:
                        pr -= beta[off + l] * xl[off + l]
                xk = xl[off + k]
                tb = Dl[m] + ti * xk * xk
                mu = (c0m0 + ns + ti * xk * pr) / tb
                beta[off + k] = mu + float(z[zi]) / sqrt(tb)
                zi += 1

        # gamma, same scan order; the shared-site term is removed by
        # subtracting its contribution from the full neighbour sum
        for m in range(M):
            cm = cl[m]
            off = m * p
            for k in range(p):
                ssum = 0.0
                sinv = 0.0
                for j in rev[m]:
                    inner = 0.0
                    for uoff, cw in fwd_w[j]:
                        inner += cw * gamma[uoff + k]
                    inner -= cm * gamma[off + k]
                    ssum += beta[j * p + k] - (c0m0 + inner) / Dl[j]
                    sinv += 1.0 / Dl[j]
                den = 1.0 + cm * sinv
                tg = cm * den
                gamma[off + k] = (omega[k] + ssum) / den + float(z[zi]) / sqrt(tg)
                zi += 1

        # omega
        ok = True
        to = c0 + ctot
        for k in range(p):
            sg = 0.0
            for m in range(M):
                sg += cl[m] * gamma[m * p + k]
            omega[k] = (c0m0 + sg) / to + float(z[zi]) / sqrt(to)
            zi += 1
            ok = ok and isfinite(sg) and isfinite(omega[k])

        # tau
        for i in range(n):
            rss = 0.0
            for t in range(T):
                m = i * T + t
                eta = alpha
                off = m * p
                for k in range(p):
                    eta += beta[off + k] * xl[off + k]
                r = yl[m] - eta
                rss += r * r
            b_tau = b0 + 0.5 * rss
            g = float(gen.standard_gamma(a_tau))
            tau[i] = g / b_tau
            ok = ok and isfinite(b_tau) and tau[i] > 0.0 and isfinite(tau[i])

        ok = ok and isfinite(alpha)
        if not ok:
            bad_sweep = sweep
            break

        if sweep > burn_in and (sweep - burn_in) % thin == 0:
            alphas[kept] = alpha
            betas[kept] = np.asarray(beta).reshape(M, p)
            if keep_gamma:
                gammas[kept] = np.asarray(gamma).reshape(M, p)
            omegas[kept] = omega
            taus[kept] = tau
            kept += 1

    return {
        "bad_sweep": bad_sweep,
        "kept": kept,
        "alphas": alphas,
        "betas": betas,
        "gammas": gammas,
        "omegas": omegas,
        "taus": taus,
        "state": {
            "alpha": alpha,
            "beta": np.asarray(beta).reshape(M, p),
            "gamma": np.asarray(gamma).reshape(M, p),
            "omega": np.asarray(omega),
            "tau": np.asarray(tau),
        },
    }


def _rows(indptr, indices):
    ptr = [int(v) for v in indptr]
    idx = [int(v) for v in indices]
    return [idx[ptr[m]:ptr[m + 1]] for m in range(len(ptr) - 1)]
