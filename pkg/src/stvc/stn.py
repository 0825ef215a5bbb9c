"""The space-time normal (STN) dependent process and its linked variant.

Every normal here is parameterised by (mean, precision).  The site-latent
process draws, for hyperparameters m0, c0 > 0 and site weights c_{i,t} > 0,

    omega           ~ N(m0, c0)
    gamma_{i,t}     ~ N(omega, c_{i,t})
    beta_{i,t}      ~ N( (c0*m0 + sum_d c_d*gamma_d) / (c0 + sum_d c_d),
                         c0 + sum_d c_d )        d ranging over the
                                                 forward neighbour set

which gives every beta_{i,t} the marginal law N(m0, c0).  The linked
variant replaces the per-site latents by one latent per unordered pair of
linked sites, with the same marginal law.

Two closed forms are implemented for the correlation between two betas;
they differ only in the term contributed by shared weights and coincide
whenever the shared set is empty:

    quadratic   I * (c0 + I)      with I the summed shared weights
    bilinear    c0 * I

``pair_correlation_mc`` / ``link_correlation_mc`` estimate the same
correlation by forward simulation and serve as the arbiter between the
two forms; the validation suite records which one the simulations support.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .graph import NeighborhoodSystem, Site

LOG_2PI = float(np.log(2.0 * np.pi))

SHARED_TERM_QUADRATIC = "quadratic"
SHARED_TERM_BILINEAR = "bilinear"
_SHARED_TERMS = (SHARED_TERM_QUADRATIC, SHARED_TERM_BILINEAR)

# Replication block size for the Monte Carlo estimators.  Fixed (not
# adaptive) so that a given seed always yields the same estimate.
MC_CHUNK = 1 << 16


@dataclass(frozen=True)
class STNParams:
    """Hyperparameters of the site-latent process.

    ``c`` holds the site weights in flat unit-major/time-minor order,
    aligned with the NeighborhoodSystem the params are used with.
    """

    m0: float
    c0: float
    c: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "c", np.asarray(self.c, dtype=np.float64))
        if not self.c0 > 0:
            raise ValueError("c0 must be > 0")
        if not np.all(self.c > 0):
            raise ValueError("all site weights c must be > 0")
        self.c.setflags(write=False)

    @classmethod
    def constant(cls, m0: float, c0: float, value: float, system: NeighborhoodSystem) -> "STNParams":
        return cls(m0=m0, c0=c0, c=np.full(system.n_sites, float(value)))

    @classmethod
    def from_map(cls, m0: float, c0: float, weights: Mapping[Site, float],
                 system: NeighborhoodSystem) -> "STNParams":
        c = np.zeros(system.n_sites)
        if len(weights) != system.n_sites:
            raise ValueError("weights must be given for every lattice site")
        for (i, t), w in weights.items():
            c[system.site_id(i, t)] = w
        return cls(m0=m0, c0=c0, c=c)


@dataclass(frozen=True)
class STNState:
    """One realisation of the process: site values, site latents, omega."""

    n: int
    T: int
    beta: np.ndarray
    gamma: np.ndarray
    omega: float

    def site_id(self, unit: int, time: int) -> int:
        return (unit - 1) * self.T + (time - 1)


def _check_alignment(params: STNParams, system: NeighborhoodSystem):
    if params.c.shape != (system.n_sites,):
        raise ValueError(
            f"params carry {params.c.shape[0]} site weights, lattice has {system.n_sites} sites"
        )


def _normalizers(params: STNParams, system: NeighborhoodSystem) -> np.ndarray:
    """D_m = c0 + sum of weights over the forward set of each site."""
    contrib = params.c[system.fwd_indices]
    return params.c0 + np.add.reduceat(contrib, system.fwd_indptr[:-1])


def sample_stn_forward(params: STNParams, system: NeighborhoodSystem, seed: int) -> STNState:
    """Draw one realisation of the process.

    Randomness is consumed in fixed order (omega, then gamma in ascending
    site order, then beta likewise) from a PCG64 stream, so equal seeds
    give bit-identical states.
    """
    _check_alignment(params, system)
    rng = np.random.Generator(np.random.PCG64(seed))
    M = system.n_sites
    omega = params.m0 + rng.standard_normal() / np.sqrt(params.c0)
    gamma = omega + rng.standard_normal(M) / np.sqrt(params.c)
    D = _normalizers(params, system)
    nbr = np.add.reduceat(params.c[system.fwd_indices] * gamma[system.fwd_indices],
                          system.fwd_indptr[:-1])
    mean = (params.c0 * params.m0 + nbr) / D
    beta = mean + rng.standard_normal(M) / np.sqrt(D)
    return STNState(n=system.n, T=system.T, beta=beta, gamma=gamma, omega=float(omega))


def stn_log_density(params: STNParams, system: NeighborhoodSystem, state: STNState) -> float:
    """Joint log density of (beta, gamma, omega) under the process."""
    _check_alignment(params, system)
    if state.beta.shape != (system.n_sites,) or state.gamma.shape != (system.n_sites,):
        raise ValueError("state dimensions do not match the lattice")
    D = _normalizers(params, system)
    nbr = np.add.reduceat(params.c[system.fwd_indices] * state.gamma[system.fwd_indices],
                          system.fwd_indptr[:-1])
    mean = (params.c0 * params.m0 + nbr) / D
    lp = _normal_logpdf(state.omega, params.m0, params.c0)
    lp += np.sum(_normal_logpdf(state.gamma, state.omega, params.c))
    lp += np.sum(_normal_logpdf(state.beta, mean, D))
    return float(lp)


def _normal_logpdf(x, mean, precision):
    return 0.5 * (np.log(precision) - LOG_2PI) - 0.5 * precision * (x - mean) ** 2


def _closed_form(shared: float, sa: float, sb: float, c0: float, shared_term: str) -> float:
    if shared_term not in _SHARED_TERMS:
        raise ValueError(f"shared_term must be one of {_SHARED_TERMS}")
    if shared_term == SHARED_TERM_QUADRATIC:
        num = shared * (c0 + shared) + sa * sb
    else:
        num = c0 * shared + sa * sb
    return num / ((c0 + sa) * (c0 + sb))


def pair_correlation(params: STNParams, system: NeighborhoodSystem, a: Site, b: Site,
                     shared_term: str = SHARED_TERM_QUADRATIC) -> float:
    """Closed-form correlation of (beta_a, beta_b) for two distinct sites.

    ``shared_term`` selects the algebraic form of the shared-weight term
    (see the module docstring).  The same-site case is rejected: neither
    form evaluates to 1 there.
    """
    _check_alignment(params, system)
    if a == b:
        raise ValueError("pair correlation requires two distinct sites")
    ia = system.site_id(*a)
    ib = system.site_id(*b)
    fa = system.forward_ids(ia)
    fb = system.forward_ids(ib)
    shared = float(params.c[np.intersect1d(fa, fb)].sum())
    sa = float(params.c[fa].sum())
    sb = float(params.c[fb].sum())
    return _closed_form(shared, sa, sb, params.c0, shared_term)


def pair_correlation_mc(params: STNParams, system: NeighborhoodSystem, a: Site, b: Site,
                        reps: int, seed: int) -> float:
    """Monte Carlo Pearson correlation of (beta_a, beta_b) over ``reps``
    independent forward simulations; deterministic given the seed.
    """
    _check_alignment(params, system)
    if reps < 10_000:
        raise ValueError("reps must be >= 10^4")
    if a == b:
        return 1.0
    ia = system.site_id(*a)
    ib = system.site_id(*b)
    moments = _forward_moments(params, system, [ia, ib], reps, seed, pair=True)
    va = moments["var"][0]
    vb = moments["var"][1]
    return float(moments["cov"] / np.sqrt(va * vb))


def marginal_moments_mc(params: STNParams, system: NeighborhoodSystem,
                        reps: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-site empirical mean and variance of beta over forward draws."""
    _check_alignment(params, system)
    sites = list(range(system.n_sites))
    moments = _forward_moments(params, system, sites, reps, seed, pair=False)
    return moments["mean"], moments["var"]


def _forward_moments(params: STNParams, system: NeighborhoodSystem, sites: list[int],
                     reps: int, seed: int, pair: bool) -> dict:
    """Streaming moments of beta at the requested sites.

    Replications are drawn in fixed blocks of MC_CHUNK and reduced by
    moment accumulation; per block the draw order is omega, the gamma
    matrix (replication-major), then one beta vector per requested site.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    M = system.n_sites
    D = _normalizers(params, system)
    c0m0 = params.c0 * params.m0
    fwd = [system.forward_ids(s) for s in sites]

    k = len(sites)
    s1 = np.zeros(k)
    s2 = np.zeros(k)
    s_ab = 0.0
    done = 0
    while done < reps:
        r = min(MC_CHUNK, reps - done)
        omega = params.m0 + rng.standard_normal(r) / np.sqrt(params.c0)
        gamma = omega[:, None] + rng.standard_normal((r, M)) / np.sqrt(params.c)
        betas = np.empty((r, k))
        for idx, s in enumerate(sites):
            mean = (c0m0 + gamma[:, fwd[idx]] @ params.c[fwd[idx]]) / D[s]
            betas[:, idx] = mean + rng.standard_normal(r) / np.sqrt(D[s])
        s1 += betas.sum(axis=0)
        s2 += (betas**2).sum(axis=0)
        if pair:
            s_ab += float(betas[:, 0] @ betas[:, 1])
        done += r

    mean = s1 / reps
    var = s2 / reps - mean**2
    out = {"mean": mean, "var": var}
    if pair:
        out["cov"] = s_ab / reps - mean[0] * mean[1]
    return out


# ---------------------------------------------------------------------------
# Linked variant: one latent per connection instead of one per site.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class STN2Params:
    """Hyperparameters of the link-latent process.

    ``links`` is an (L, 2) array of flat site-id pairs (lo, hi), sorted
    lexicographically; ``weights`` the matching positive link weights.
    """

    m0: float
    c0: float
    n: int
    T: int
    links: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        links = np.asarray(self.links, dtype=np.int64).reshape(-1, 2)
        weights = np.asarray(self.weights, dtype=np.float64)
        if not self.c0 > 0:
            raise ValueError("c0 must be > 0")
        if weights.shape != (links.shape[0],):
            raise ValueError("one weight per link required")
        if not np.all(weights > 0):
            raise ValueError("link weights must be > 0")
        M = self.n * self.T
        if links.size and (links.min() < 0 or links.max() >= M):
            raise ValueError("link endpoint outside the lattice")
        if np.any(links[:, 0] == links[:, 1]):
            raise ValueError("a site cannot be linked to itself")
        object.__setattr__(self, "links", links)
        object.__setattr__(self, "weights", weights)
        links.setflags(write=False)
        weights.setflags(write=False)

    @classmethod
    def from_map(cls, m0: float, c0: float, n: int, T: int,
                 link_weights: Mapping[frozenset[Site], float] | Mapping[tuple[Site, Site], float],
                 ) -> "STN2Params":
        """Build from a mapping of unordered site pairs to weights."""
        pairs = []
        ws = []
        for key, w in link_weights.items():
            (i, t), (j, s) = tuple(key)
            a = (i - 1) * T + (t - 1)
            b = (j - 1) * T + (s - 1)
            pairs.append((min(a, b), max(a, b)))
            ws.append(w)
        order = sorted(range(len(pairs)), key=lambda r: pairs[r])
        links = np.asarray([pairs[r] for r in order], dtype=np.int64).reshape(-1, 2)
        if len(set(map(tuple, links))) != len(links):
            raise ValueError("duplicate link")
        return cls(m0=m0, c0=c0, n=n, T=T, links=links,
                   weights=np.asarray([ws[r] for r in order]))

    def site_id(self, unit: int, time: int) -> int:
        if not (1 <= unit <= self.n and 1 <= time <= self.T):
            raise ValueError(f"site ({unit},{time}) outside lattice {self.n}x{self.T}")
        return (unit - 1) * self.T + (time - 1)

    def incident(self, sid: int) -> np.ndarray:
        """Indices of the links touching the given site."""
        return np.flatnonzero((self.links[:, 0] == sid) | (self.links[:, 1] == sid))

    def link_index(self, a: int, b: int) -> int | None:
        lo, hi = min(a, b), max(a, b)
        hit = np.flatnonzero((self.links[:, 0] == lo) & (self.links[:, 1] == hi))
        return int(hit[0]) if hit.size else None


@dataclass(frozen=True)
class STN2State:
    """One realisation of the link-latent process."""

    n: int
    T: int
    beta: np.ndarray
    gamma_links: np.ndarray
    omega: float


def sample_stn2_forward(params: STN2Params, seed: int) -> STN2State:
    """Forward draw of the link-latent process.

    Draw order: omega, then one latent per link in sorted pair order, then
    beta in ascending site order.  A site with no incident links falls
    back to the N(m0, c0) prior (a warning is emitted since its value is
    then uncoupled from the rest).
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    M = params.n * params.T
    L = params.links.shape[0]
    isolated = np.setdiff1d(np.arange(M), params.links.ravel())
    if isolated.size:
        warnings.warn(
            f"{isolated.size} site(s) have no incident links; their values reduce to the prior",
            stacklevel=2,
        )
    omega = params.m0 + rng.standard_normal() / np.sqrt(params.c0)
    gamma_links = omega + rng.standard_normal(L) / np.sqrt(params.weights)
    beta = np.empty(M)
    c0m0 = params.c0 * params.m0
    for m in range(M):
        inc = params.incident(m)
        prec = params.c0 + params.weights[inc].sum()
        mean = (c0m0 + params.weights[inc] @ gamma_links[inc]) / prec
        beta[m] = mean + rng.standard_normal() / np.sqrt(prec)
    return STN2State(n=params.n, T=params.T, beta=beta, gamma_links=gamma_links,
                     omega=float(omega))


def link_correlation(params: STN2Params, a: Site, b: Site,
                     shared_term: str = SHARED_TERM_QUADRATIC) -> float:
    """Closed-form correlation of (beta_a, beta_b) for a linked site pair.

    The shared term is built from the weight of the single connecting
    link; ``shared_term`` selects its algebraic form as for
    ``pair_correlation``.  Unlinked pairs are rejected.
    """
    ia = params.site_id(*a)
    ib = params.site_id(*b)
    li = params.link_index(ia, ib)
    if li is None:
        raise ValueError(f"sites {a} and {b} are not linked")
    cab = float(params.weights[li])
    sa = float(params.weights[params.incident(ia)].sum())
    sb = float(params.weights[params.incident(ib)].sum())
    return _closed_form(cab, sa, sb, params.c0, shared_term)


def link_correlation_mc(params: STN2Params, a: Site, b: Site, reps: int, seed: int) -> float:
    """Monte Carlo correlation of (beta_a, beta_b) under the link-latent
    process; deterministic given the seed."""
    if reps < 10_000:
        raise ValueError("reps must be >= 10^4")
    if a == b:
        return 1.0
    rng = np.random.Generator(np.random.PCG64(seed))
    ia = params.site_id(*a)
    ib = params.site_id(*b)
    inc_a = params.incident(ia)
    inc_b = params.incident(ib)
    prec_a = params.c0 + params.weights[inc_a].sum()
    prec_b = params.c0 + params.weights[inc_b].sum()
    c0m0 = params.c0 * params.m0
    L = params.links.shape[0]

    s1 = np.zeros(2)
    s2 = np.zeros(2)
    s_ab = 0.0
    done = 0
    while done < reps:
        r = min(MC_CHUNK, reps - done)
        omega = params.m0 + rng.standard_normal(r) / np.sqrt(params.c0)
        glinks = omega[:, None] + rng.standard_normal((r, L)) / np.sqrt(params.weights)
        mean_a = (c0m0 + glinks[:, inc_a] @ params.weights[inc_a]) / prec_a
        mean_b = (c0m0 + glinks[:, inc_b] @ params.weights[inc_b]) / prec_b
        ba = mean_a + rng.standard_normal(r) / np.sqrt(prec_a)
        bb = mean_b + rng.standard_normal(r) / np.sqrt(prec_b)
        s1 += (ba.sum(), bb.sum())
        s2 += ((ba**2).sum(), (bb**2).sum())
        s_ab += float(ba @ bb)
        done += r

    mean = s1 / reps
    var = s2 / reps - mean**2
    cov = s_ab / reps - mean[0] * mean[1]
    return float(cov / np.sqrt(var[0] * var[1]))
