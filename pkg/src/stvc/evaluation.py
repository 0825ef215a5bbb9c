"""Model assessment: CPO, LPML, posterior summaries and ranking tables.

The conditional predictive ordinate of observation (i, t) is estimated
from R retained draws as the harmonic mean of the per-draw likelihoods,

    CPO_{i,t} = [ (1/R) sum_r 1 / N(y_{i,t} | eta^{(r)}_{i,t}, tau^{(r)}) ]^{-1},

and LPML = sum over sites of log CPO; larger is better.  The harmonic
mean is numerically fragile: densities are evaluated in log space, and if
any of them underflows to zero when exponentiated the reciprocal mean for
that site is computed by a max-shift over the reciprocals' logs instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .regression import MODEL_0, MODEL_00, MODEL_STVC, Chain, PanelData
from .stn import LOG_2PI


@dataclass(frozen=True)
class CpoMatrix:
    """Per-site CPO values (and their logs) on the n x T lattice."""

    n: int
    T: int
    values: np.ndarray
    log_values: np.ndarray

    def __post_init__(self):
        self.values.setflags(write=False)
        self.log_values.setflags(write=False)

    def value(self, unit: int, time: int) -> float:
        return float(self.values[(unit - 1) * self.T + (time - 1)])


@dataclass(frozen=True)
class ParamSummary:
    """Posterior mean and equal-tailed credible bounds for one parameter."""

    block: str
    unit: int | None
    time: int | None
    k: int | None
    mean: float
    lo: float
    hi: float


@dataclass(frozen=True)
class NeighborhoodInfo:
    """Neighbourhood descriptor carried into reports and rankings."""

    kind: str | None
    q: int | None
    c: float | None
    median_size: float | None


@dataclass(frozen=True)
class FitReport:
    """Everything a fitted model reports: fit score, summaries, provenance."""

    lpml: float
    cpo: CpoMatrix
    summaries: list[ParamSummary]
    model_tag: str
    neighborhood: NeighborhoodInfo
    config: dict
    seed: int
    generator: str
    data_name: str | None = None


def _log_densities(chain: Chain, data: PanelData) -> np.ndarray:
    """(R, M) log N(y_m | eta_m^{(r)}, tau^{(r)}) for the chain's model."""
    x = data.x
    M = data.n_sites
    unit_of_site = np.arange(M) // data.T
    if chain.model_tag == MODEL_STVC:
        eta = chain.alphas[:, None] + np.einsum("rmk,mk->rm", chain.betas, x)
        tau = chain.taus[:, unit_of_site]
    elif chain.model_tag == MODEL_0:
        beta_site = chain.betas[:, unit_of_site, :]          # (R, M, p)
        eta = chain.alphas[:, None] + np.einsum("rmk,mk->rm", beta_site, x)
        tau = chain.taus[:, unit_of_site]
    elif chain.model_tag == MODEL_00:
        eta = chain.alphas[:, None] + chain.betas @ x.T      # (R, M)
        tau = np.broadcast_to(chain.taus[:, 0][:, None], eta.shape)
    else:
        raise ValueError(f"unknown model tag {chain.model_tag!r}")
    return 0.5 * (np.log(tau) - LOG_2PI) - 0.5 * tau * (data.y - eta) ** 2


def cpo(chain: Chain, data: PanelData) -> CpoMatrix:
    """Monte Carlo CPO estimate at every site of the panel."""
    if len(chain) == 0:
        raise ValueError("chain is empty")
    if (chain.n, chain.T, chain.p) != (data.n, data.T, data.p):
        raise ValueError("chain and panel dimensions differ")
    ld = _log_densities(chain, data)
    R = ld.shape[0]
    values = np.empty(data.n_sites)
    log_values = np.empty(data.n_sites)
    for m in range(data.n_sites):
        col = ld[:, m]
        if not np.all(np.isfinite(col)):  # -inf marks an exactly-zero density
            unit, time = m // data.T + 1, m % data.T + 1
            raise ValueError(
                f"CPO undefined at site ({unit},{time}): zero predictive density in a draw"
            )
        dens = np.exp(col)
        if np.all(dens > 0.0):
            values[m] = R / np.sum(1.0 / dens)
            log_values[m] = np.log(values[m])
        else:
            # max-shift over the reciprocals' logs
            v = -col
            vmax = v.max()
            log_mean_recip = vmax + np.log(np.sum(np.exp(v - vmax))) - np.log(R)
            log_values[m] = -log_mean_recip
            values[m] = np.exp(log_values[m])
    return CpoMatrix(n=data.n, T=data.T, values=values, log_values=log_values)


def lpml(cpo_matrix: CpoMatrix) -> float:
    """Sum of log CPO over all sites."""
    return float(np.sum(cpo_matrix.log_values))


def _quantiles(draws: np.ndarray, level: float) -> tuple[float, float]:
    lo = (1.0 - level) / 2.0
    return (
        float(np.quantile(draws, lo, method="linear")),
        float(np.quantile(draws, 1.0 - lo, method="linear")),
    )


def summarize(chain: Chain, level: float = 0.95) -> list[ParamSummary]:
    """Posterior mean and equal-tailed credible interval per parameter.

    Interval endpoints use linear interpolation between order statistics
    at probabilities (1-level)/2 and 1-(1-level)/2.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    if len(chain) == 0:
        raise ValueError("chain is empty")
    out = [ParamSummary("alpha", None, None, None,
                        float(chain.alphas.mean()), *_quantiles(chain.alphas, level))]

    if chain.model_tag == MODEL_STVC:
        for m in range(chain.n * chain.T):
            unit, time = m // chain.T + 1, m % chain.T + 1
            for k in range(chain.p):
                draws = chain.betas[:, m, k]
                out.append(ParamSummary("beta", unit, time, k + 1,
                                        float(draws.mean()), *_quantiles(draws, level)))
        if chain.omegas is not None:
            for k in range(chain.p):
                draws = chain.omegas[:, k]
                out.append(ParamSummary("omega", None, None, k + 1,
                                        float(draws.mean()), *_quantiles(draws, level)))
    elif chain.model_tag == MODEL_0:
        for i in range(chain.n):
            for k in range(chain.p):
                draws = chain.betas[:, i, k]
                out.append(ParamSummary("beta", i + 1, None, k + 1,
                                        float(draws.mean()), *_quantiles(draws, level)))
    else:
        for k in range(chain.p):
            draws = chain.betas[:, k]
            out.append(ParamSummary("beta", None, None, k + 1,
                                    float(draws.mean()), *_quantiles(draws, level)))

    if chain.model_tag == MODEL_00:
        draws = chain.taus[:, 0]
        out.append(ParamSummary("tau", None, None, None,
                                float(draws.mean()), *_quantiles(draws, level)))
    else:
        for i in range(chain.n):
            draws = chain.taus[:, i]
            out.append(ParamSummary("tau", i + 1, None, None,
                                    float(draws.mean()), *_quantiles(draws, level)))
    return out


@dataclass(frozen=True)
class ComparisonRow:
    """One model in a ranking table."""

    rank: int
    model_tag: str
    kind: str | None
    q: int | None
    c: float | None
    median_size: float | None
    lpml: float
    data_name: str | None
    best_in_type: bool


def compare(reports: list[FitReport]) -> list[ComparisonRow]:
    """Rank fitted models by LPML, descending; ties keep input order.

    The best row within each neighbourhood type (reference models count
    as their own type) is flagged.
    """
    if len(reports) < 2:
        raise ValueError("need at least two reports to compare")
    order = sorted(range(len(reports)), key=lambda r: (-reports[r].lpml, r))
    best: dict[str, float] = {}
    for rep in reports:
        key = rep.neighborhood.kind or rep.model_tag
        if key not in best or rep.lpml > best[key]:
            best[key] = rep.lpml
    rows = []
    for rank, r in enumerate(order, start=1):
        rep = reports[r]
        key = rep.neighborhood.kind or rep.model_tag
        rows.append(ComparisonRow(
            rank=rank,
            model_tag=rep.model_tag,
            kind=rep.neighborhood.kind,
            q=rep.neighborhood.q,
            c=rep.neighborhood.c,
            median_size=rep.neighborhood.median_size,
            lpml=rep.lpml,
            data_name=rep.data_name,
            best_in_type=rep.lpml == best[key],
        ))
    return rows
