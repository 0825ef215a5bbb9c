"""Varying-coefficient normal regression and its Gibbs sampler.

The model, for units i = 1..n, times t = 1..T and covariates k = 1..p:

    y_{i,t} | x_{i,t} ~ N(alpha + sum_k beta_{i,t,k} x_{i,t,k}, tau_i)

with alpha ~ N(m_alpha, c_alpha), an independent space-time normal process
prior on the coefficient field of each covariate (see :mod:`stvc.stn`),
and tau_i ~ Ga(a0, b0) shape-rate.  All normals are (mean, precision).

Every full conditional is conjugate (normal or gamma); the closed forms
live in the ``*_conditional`` methods and the sweep itself is delegated
to the kernel backends in :mod:`stvc._kernels`, which consume randomness
in a fixed, documented order so chains are reproducible byte for byte.

Two reference models are fitted by :func:`fit_reference`: per-unit static
coefficients ("Model0", precision tau_i) and one global coefficient
vector ("Model00", single precision), both under N(0, 0.01) coefficient
priors and Ga(0.01, 0.01) precision priors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .graph import NeighborhoodSystem, Site
from .stn import LOG_2PI, _normal_logpdf

GENERATOR = "PCG64"  # the named bit generator behind every chain

MODEL_STVC = "STVC"
MODEL_0 = "Model0"
MODEL_00 = "Model00"

# Reference-model priors: N(0, 0.01) coefficients, Ga(0.01, 0.01) precisions.
REF_COEF_MEAN = 0.0
REF_COEF_PRECISION = 0.01
REF_SHAPE = 0.01
REF_RATE = 0.01


class GibbsOverflowError(RuntimeError):
    """A sweep produced a non-finite value; carries the state at failure."""

    def __init__(self, sweep: int, state: dict):
        super().__init__(f"non-finite sampler state at sweep {sweep}")
        self.sweep = sweep
        self.state = state


@dataclass(frozen=True)
class PanelData:
    """Complete n x T panel: responses y and p covariates x per site.

    Arrays are flat unit-major/time-minor: row m = (unit-1)*T + (time-1).
    """

    n: int
    T: int
    p: int
    y: np.ndarray
    x: np.ndarray
    unit_labels: tuple = ()
    time_labels: tuple = ()

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64)
        x = np.asarray(self.x, dtype=np.float64).reshape(self.n * self.T, self.p)
        if y.shape != (self.n * self.T,):
            raise ValueError(f"y must have {self.n * self.T} entries, got {y.shape}")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise ValueError("panel contains non-finite values")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        y.setflags(write=False)
        x.setflags(write=False)

    @property
    def n_sites(self) -> int:
        return self.n * self.T

    def site_id(self, unit: int, time: int) -> int:
        if not (1 <= unit <= self.n and 1 <= time <= self.T):
            raise ValueError(f"site ({unit},{time}) outside panel {self.n}x{self.T}")
        return (unit - 1) * self.T + (time - 1)


@dataclass(frozen=True)
class Hyperparams:
    """Prior settings: intercept, coefficient process, and precision priors.

    ``c`` may be a scalar (broadcast to every site) or a full per-site
    array in flat layout.
    """

    m_alpha: float = 0.0
    c_alpha: float = 0.01
    m0: float = 0.0
    c0: float = 0.01
    c: float | np.ndarray = 50.0
    a0: float = 0.01
    b0: float = 0.01

    def __post_init__(self):
        for name in ("c_alpha", "c0", "a0", "b0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if not np.all(np.asarray(self.c) > 0):
            raise ValueError("site weights c must be > 0")

    def site_weights(self, system: NeighborhoodSystem) -> np.ndarray:
        c = np.asarray(self.c, dtype=np.float64)
        if c.ndim == 0:
            return np.full(system.n_sites, float(c))
        if c.shape != (system.n_sites,):
            raise ValueError(f"c has shape {c.shape}, lattice has {system.n_sites} sites")
        return c.copy()


@dataclass(frozen=True)
class ChainConfig:
    """Sweep schedule: total iterations, burn-in, thinning stride, seed."""

    iterations: int
    burn_in: int
    thin: int
    seed: int

    def __post_init__(self):
        if self.burn_in < 0 or self.burn_in >= self.iterations:
            raise ValueError("require 0 <= burn_in < iterations")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")

    @property
    def retained(self) -> int:
        return (self.iterations - self.burn_in) // self.thin


@dataclass(frozen=True)
class Chain:
    """Retained posterior draws.

    beta shapes by model: STVC (R, n*T, p); Model0 (R, n, p);
    Model00 (R, p).  tau is (R, n) except Model00 where it is (R, 1).
    gammas/omegas are None unless the state was retained in full.
    """

    model_tag: str
    config: ChainConfig
    n: int
    T: int
    p: int
    alphas: np.ndarray
    betas: np.ndarray
    taus: np.ndarray
    omegas: np.ndarray | None = None
    gammas: np.ndarray | None = None
    generator: str = GENERATOR

    def __post_init__(self):
        for arr in (self.alphas, self.betas, self.taus, self.omegas, self.gammas):
            if arr is not None:
                arr.setflags(write=False)
        if len(self.alphas) != self.config.retained:
            raise ValueError("retained count does not match the schedule")

    def __len__(self) -> int:
        return len(self.alphas)


@dataclass
class GibbsState:
    """Full parameter state of the varying-coefficient sampler.

    ``D`` is the per-site conditional precision of beta given the latents,
    D_m = c0 + sum of c over the forward set; it is static for fixed
    hyperparameters and shared, not copied, across states.
    """

    alpha: float
    beta: np.ndarray   # (M, p)
    gamma: np.ndarray  # (M, p)
    omega: np.ndarray  # (p,)
    tau: np.ndarray    # (n,)
    D: np.ndarray      # (M,)


def linear_predictor(state: GibbsState, data: PanelData, site: Site) -> float:
    """alpha + beta_{i,t}' x_{i,t}; the identity link makes this the mean."""
    m = data.site_id(*site)
    return float(state.alpha + state.beta[m] @ data.x[m])


class STVCModel:
    """Binds (data, hyperparameters, neighbourhood system) and exposes the
    full conditionals, the joint log density and the chain driver."""

    def __init__(self, data: PanelData, hyper: Hyperparams, system: NeighborhoodSystem):
        if (data.n, data.T) != (system.n, system.T):
            raise ValueError(
                f"panel is {data.n}x{data.T} but the neighbourhood system is "
                f"{system.n}x{system.T}"
            )
        self.data = data
        self.hyper = hyper
        self.system = system
        self.c_sites = hyper.site_weights(system)
        contrib = self.c_sites[system.fwd_indices]
        self.D = hyper.c0 + np.add.reduceat(contrib, system.fwd_indptr[:-1])
        self.unit_of_site = np.arange(data.n_sites) // data.T

    # -- conditionals -----------------------------------------------------

    def initial_state(self) -> GibbsState:
        """Deterministic start at the prior means (tau at a0/b0)."""
        d, h = self.data, self.hyper
        M = d.n_sites
        return GibbsState(
            alpha=h.m_alpha,
            beta=np.full((M, d.p), h.m0),
            gamma=np.full((M, d.p), h.m0),
            omega=np.full(d.p, h.m0),
            tau=np.full(d.n, h.a0 / h.b0),
            D=self.D,
        )

    def alpha_conditional(self, state: GibbsState) -> tuple[float, float]:
        d, h = self.data, self.hyper
        resid = d.y - np.einsum("mk,mk->m", state.beta, d.x)
        tau_site = state.tau[self.unit_of_site]
        tau_a = h.c_alpha + tau_site.sum()
        mu_a = (h.c_alpha * h.m_alpha + tau_site @ resid) / tau_a
        return float(mu_a), float(tau_a)

    def beta_conditional(self, state: GibbsState, unit: int, time: int, k: int
                         ) -> tuple[float, float]:
        d, h = self.data, self.hyper
        m = d.site_id(unit, time)
        fwd = self.system.forward_ids(m)
        nbr = self.c_sites[fwd] @ state.gamma[fwd, k - 1]
        others = state.beta[m] @ d.x[m] - state.beta[m, k - 1] * d.x[m, k - 1]
        pr = d.y[m] - state.alpha - others
        xk = d.x[m, k - 1]
        ti = state.tau[unit - 1]
        tau_b = self.D[m] + ti * xk * xk
        mu_b = (h.c0 * h.m0 + nbr + ti * xk * pr) / tau_b
        return float(mu_b), float(tau_b)

    def gamma_conditional(self, state: GibbsState, unit: int, time: int, k: int
                          ) -> tuple[float, float]:
        h = self.hyper
        m = self.data.site_id(unit, time)
        cm = self.c_sites[m]
        ssum = 0.0
        sinv = 0.0
        for j in self.system.reversed_ids(m):
            fwd = self.system.forward_ids(j)
            inner = self.c_sites[fwd] @ state.gamma[fwd, k - 1] - cm * state.gamma[m, k - 1]
            ssum += state.beta[j, k - 1] - (h.c0 * h.m0 + inner) / self.D[j]
            sinv += 1.0 / self.D[j]
        den = 1.0 + cm * sinv
        mu_g = (state.omega[k - 1] + ssum) / den
        tau_g = cm * den
        return float(mu_g), float(tau_g)

    def omega_conditional(self, state: GibbsState, k: int) -> tuple[float, float]:
        h = self.hyper
        tau_o = h.c0 + self.c_sites.sum()
        mu_o = (h.c0 * h.m0 + self.c_sites @ state.gamma[:, k - 1]) / tau_o
        return float(mu_o), float(tau_o)

    def tau_conditional(self, state: GibbsState, unit: int) -> tuple[float, float]:
        d, h = self.data, self.hyper
        rows = slice((unit - 1) * d.T, unit * d.T)
        resid = d.y[rows] - state.alpha - np.einsum("mk,mk->m", state.beta[rows], d.x[rows])
        return float(h.a0 + 0.5 * d.T), float(h.b0 + 0.5 * resid @ resid)

    # -- joint density ----------------------------------------------------

    def log_joint(self, state: GibbsState) -> float:
        """Log likelihood plus log prior of every parameter block."""
        d, h, sys_ = self.data, self.hyper, self.system
        eta = state.alpha + np.einsum("mk,mk->m", state.beta, d.x)
        tau_site = state.tau[self.unit_of_site]
        lp = float(np.sum(_normal_logpdf(d.y, eta, tau_site)))
        lp += float(_normal_logpdf(state.alpha, h.m_alpha, h.c_alpha))
        c0m0 = h.c0 * h.m0
        for k in range(d.p):
            contrib = self.c_sites[sys_.fwd_indices] * state.gamma[sys_.fwd_indices, k]
            nbr = np.add.reduceat(contrib, sys_.fwd_indptr[:-1])
            mean = (c0m0 + nbr) / self.D
            lp += float(np.sum(_normal_logpdf(state.beta[:, k], mean, self.D)))
            lp += float(np.sum(_normal_logpdf(state.gamma[:, k], state.omega[k], self.c_sites)))
            lp += float(_normal_logpdf(state.omega[k], h.m0, h.c0))
        lp += float(
            np.sum(
                h.a0 * np.log(h.b0)
                - math.lgamma(h.a0)
                + (h.a0 - 1.0) * np.log(state.tau)
                - h.b0 * state.tau
            )
        )
        if not math.isfinite(lp):
            raise ValueError("log joint is not finite; invalid state")
        return lp

    # -- chain driver ------------------------------------------------------

    def run_chain(self, cfg: ChainConfig, keep_gamma: bool = False,
                  backend: str | None = None) -> Chain:
        """Run the Gibbs sampler on the selected kernel backend.

        Sweep order: alpha, all beta (site-major, covariate-inner), all
        gamma, all omega, all tau.  The state is initialised at the prior
        means and the PCG64 stream is consumed in the fixed order
        documented in :mod:`stvc._kernels`, so equal (config, seed) give
        byte-identical chains.
        """
        d = self.data
        init = self.initial_state()
        impl = _kernels.kernel(backend) if backend else _kernels.active()
        out = impl.run_stvc_chain(
            np.random.PCG64(cfg.seed),
            d.y, d.x.reshape(-1), self.c_sites, self.D,
            self.system.fwd_indptr, self.system.fwd_indices,
            self.system.rev_indptr, self.system.rev_indices,
            d.n, d.T, d.p,
            self.hyper.m_alpha, self.hyper.c_alpha, self.hyper.m0, self.hyper.c0,
            self.hyper.a0, self.hyper.b0,
            cfg.iterations, cfg.burn_in, cfg.thin, keep_gamma,
            init.alpha, init.beta, init.gamma, init.omega, init.tau,
        )
        if out["bad_sweep"]:
            raise GibbsOverflowError(out["bad_sweep"], out["state"])
        return Chain(
            model_tag=MODEL_STVC, config=cfg, n=d.n, T=d.T, p=d.p,
            alphas=out["alphas"], betas=out["betas"], taus=out["taus"],
            omegas=out["omegas"], gammas=out["gammas"],
        )


def run_chain(data: PanelData, hyper: Hyperparams, system: NeighborhoodSystem,
              cfg: ChainConfig, keep_gamma: bool = False,
              backend: str | None = None) -> Chain:
    """Fit the varying-coefficient model; see :meth:`STVCModel.run_chain`."""
    return STVCModel(data, hyper, system).run_chain(cfg, keep_gamma=keep_gamma,
                                                    backend=backend)


# ---------------------------------------------------------------------------
# Reference models
# ---------------------------------------------------------------------------


def fit_reference(data: PanelData, variant: str, cfg: ChainConfig) -> Chain:
    """Fit a reference model by conjugate Gibbs.

    "Model0": eta_{i,t} = alpha + beta_i' x_{i,t} with precision tau_i;
    "Model00": eta_{i,t} = alpha + beta' x_{i,t} with one precision tau.
    Coefficients have N(0, 0.01) priors, precisions Ga(0.01, 0.01).
    Draw order per sweep: alpha, beta (unit-major where applicable,
    covariate-inner), then the precision(s).
    """
    if variant == MODEL_0:
        return _fit_model0(data, cfg)
    if variant == MODEL_00:
        return _fit_model00(data, cfg)
    raise ValueError(f"unknown reference variant {variant!r}; expected Model0 or Model00")


def _fit_model0(data: PanelData, cfg: ChainConfig) -> Chain:
    gen = np.random.Generator(np.random.PCG64(cfg.seed))
    n, T, p = data.n, data.T, data.p
    y = data.y.reshape(n, T)
    x = data.x.reshape(n, T, p)
    xsq = np.einsum("itk,itk->ik", x, x)

    alpha = REF_COEF_MEAN
    beta = np.full((n, p), REF_COEF_MEAN)
    tau = np.full(n, REF_SHAPE / REF_RATE)
    a_tau = REF_SHAPE + 0.5 * T

    R = cfg.retained
    alphas = np.empty(R)
    betas = np.empty((R, n, p))
    taus = np.empty((R, n))
    kept = 0
    for sweep in range(1, cfg.iterations + 1):
        fit = np.einsum("itk,ik->it", x, beta)
        tau_a = REF_COEF_PRECISION + T * tau.sum()
        mu_a = (REF_COEF_PRECISION * REF_COEF_MEAN + (tau[:, None] * (y - fit)).sum()) / tau_a
        alpha = mu_a + gen.standard_normal() / np.sqrt(tau_a)

        for i in range(n):
            for k in range(p):
                pr = y[i] - alpha - x[i] @ beta[i] + x[i, :, k] * beta[i, k]
                tau_b = REF_COEF_PRECISION + tau[i] * xsq[i, k]
                mu_b = (REF_COEF_PRECISION * REF_COEF_MEAN + tau[i] * (x[i, :, k] @ pr)) / tau_b
                beta[i, k] = mu_b + gen.standard_normal() / np.sqrt(tau_b)

        resid = y - alpha - np.einsum("itk,ik->it", x, beta)
        for i in range(n):
            b_tau = REF_RATE + 0.5 * resid[i] @ resid[i]
            tau[i] = gen.standard_gamma(a_tau) / b_tau

        if not (math.isfinite(alpha) and np.all(tau > 0) and np.all(np.isfinite(tau))):
            raise GibbsOverflowError(sweep, {"alpha": alpha, "beta": beta, "tau": tau})
        if sweep > cfg.burn_in and (sweep - cfg.burn_in) % cfg.thin == 0:
            alphas[kept] = alpha
            betas[kept] = beta
            taus[kept] = tau
            kept += 1

    return Chain(model_tag=MODEL_0, config=cfg, n=n, T=T, p=p,
                 alphas=alphas, betas=betas, taus=taus)


def _fit_model00(data: PanelData, cfg: ChainConfig) -> Chain:
    gen = np.random.Generator(np.random.PCG64(cfg.seed))
    n, T, p = data.n, data.T, data.p
    y = data.y
    x = data.x
    xsq = np.einsum("mk,mk->k", x, x)

    alpha = REF_COEF_MEAN
    beta = np.full(p, REF_COEF_MEAN)
    tau = REF_SHAPE / REF_RATE
    a_tau = REF_SHAPE + 0.5 * n * T

    R = cfg.retained
    alphas = np.empty(R)
    betas = np.empty((R, p))
    taus = np.empty((R, 1))
    kept = 0
    for sweep in range(1, cfg.iterations + 1):
        fit = x @ beta
        tau_a = REF_COEF_PRECISION + n * T * tau
        mu_a = (REF_COEF_PRECISION * REF_COEF_MEAN + tau * (y - fit).sum()) / tau_a
        alpha = mu_a + gen.standard_normal() / np.sqrt(tau_a)

        for k in range(p):
            pr = y - alpha - x @ beta + x[:, k] * beta[k]
            tau_b = REF_COEF_PRECISION + tau * xsq[k]
            mu_b = (REF_COEF_PRECISION * REF_COEF_MEAN + tau * (x[:, k] @ pr)) / tau_b
            beta[k] = mu_b + gen.standard_normal() / np.sqrt(tau_b)

        resid = y - alpha - x @ beta
        b_tau = REF_RATE + 0.5 * resid @ resid
        tau = gen.standard_gamma(a_tau) / b_tau

        if not (math.isfinite(alpha) and tau > 0 and math.isfinite(tau)):
            raise GibbsOverflowError(sweep, {"alpha": alpha, "beta": beta, "tau": tau})
        if sweep > cfg.burn_in and (sweep - cfg.burn_in) % cfg.thin == 0:
            alphas[kept] = alpha
            betas[kept] = beta
            taus[kept, 0] = tau
            kept += 1

    return Chain(model_tag=MODEL_00, config=cfg, n=n, T=T, p=p,
                 alphas=alphas, betas=betas, taus=taus)
