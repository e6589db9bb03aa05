"""Monte Carlo simulation of both stochastic volatility models.

Independent cross-validation of the analytic pricers: full-truncation Euler
paths (the 3/2 model is simulated through u = 1/v, a square-root diffusion,
which avoids the v^(3/2) blow-up), budget-crossing detection with linear
interpolation inside the crossing step, antithetic pairing, and
deterministic chunked random streams.

Determinism: paths are processed in fixed-size chunks, each owning a child
``SeedSequence`` of the run seed, so results are bit-identical for a fixed
(seed, config) regardless of worker count or backend.  Worker threads (cap
via the ``TIMERKIT_THREADS`` environment variable) share no state and merge
in chunk order.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._backend import impl, BACKEND
from .errors import CensoringError, DomainError
from .propagators import HestonParams, ThreeHalvesParams

__all__ = [
    "MCConfig",
    "PathOutcome",
    "PathOutcomes",
    "simulate_paths",
    "mc_price",
    "price_from_outcomes",
    "mc_histograms",
]

SCHEME_FT_EULER = "full-truncation-euler"
SCHEME_32_RECIP = "reciprocal-cir-for-3/2"

_CHUNK = 8192
_BLOCK = 256


@dataclass(frozen=True)
class MCConfig:
    """Path count, time resolution, RNG seed and scheme selection.

    ``scheme`` applies to the 3/2 model only: the reciprocal-CIR scheme is
    the default, plain full-truncation Euler on v is kept for comparison.
    Heston always uses full-truncation Euler.
    """

    n_paths: int = 200_000
    steps_per_year: int = 1600
    seed: int = 0
    antithetic: bool = True
    scheme: str = SCHEME_32_RECIP
    max_years: float = 50.0

    def __post_init__(self):
        if self.n_paths < 2:
            raise DomainError("n_paths must be at least 2")
        if self.steps_per_year < 16:
            raise DomainError("steps_per_year must be at least 16")
        if not self.max_years > 0:
            raise DomainError("max_years must be positive")
        if self.scheme not in (SCHEME_FT_EULER, SCHEME_32_RECIP):
            raise DomainError(f"unknown scheme {self.scheme!r}")


@dataclass
class PathOutcome:
    """Terminal record of a single simulated path."""

    stopping_time: float          # nan when censored or horizon reached
    x_at_exercise: float
    exercised_at_horizon: bool
    realized_variance_at_horizon: float  # nan when the budget was exhausted
    censored: bool = False


class PathOutcomes:
    """Column-oriented collection of path outcomes."""

    def __init__(self, stopping_time, x_at_exercise, exercised_at_horizon,
                 realized_variance_at_horizon, censored):
        self.stopping_time = stopping_time
        self.x_at_exercise = x_at_exercise
        self.exercised_at_horizon = exercised_at_horizon
        self.realized_variance_at_horizon = realized_variance_at_horizon
        self.censored = censored

    def __len__(self):
        return self.stopping_time.shape[0]

    def __getitem__(self, i):
        return PathOutcome(
            float(self.stopping_time[i]),
            float(self.x_at_exercise[i]),
            bool(self.exercised_at_horizon[i]),
            float(self.realized_variance_at_horizon[i]),
            bool(self.censored[i]),
        )

    @property
    def censored_fraction(self):
        return float(np.mean(self.censored))


def _model_setup(model, cfg):
    if isinstance(model, HestonParams):
        params = (model.kappa, model.theta, model.sigma, model.r, model.rho)
        return impl.mc_block_heston, params, model.v0
    if isinstance(model, ThreeHalvesParams):
        params = (model.kappa, model.theta, model.eps, model.r, model.rho)
        if cfg.scheme == SCHEME_32_RECIP:
            return impl.mc_block_32_recip, params, 1.0 / model.v0
        return impl.mc_block_32_euler, params, model.v0
    raise DomainError(f"unsupported model type {type(model)!r}")


def _simulate_chunk(seed_seq, n_paths, model, contract, cfg):
    """Simulate one chunk; n_paths counts physical paths (pairs double)."""
    step_fn, params, y0 = _model_setup(model, cfg)
    rng = np.random.default_rng(seed_seq)
    dt = 1.0 / cfg.steps_per_year
    horizon = contract.horizon
    n_steps_total = (int(round(horizon * cfg.steps_per_year))
                     if horizon is not None
                     else int(math.ceil(cfg.max_years * cfg.steps_per_year)))
    sets = 2 if cfg.antithetic else 1
    n_units = n_paths // sets

    x = np.zeros((sets, n_units))
    y = np.full((sets, n_units), y0)
    ivar = np.zeros((sets, n_units))
    done = np.zeros((sets, n_units), dtype=np.uint8)
    tcross = np.full((sets, n_units), np.nan)
    xcross = np.full((sets, n_units), np.nan)
    # original indices of the active columns (antithetic twins share draws)
    idx = np.arange(n_units)
    act_x = x
    act_y = y
    act_iv = ivar
    act_dn = done
    act_tc = tcross
    act_xc = xcross

    step = 0
    while step < n_steps_total and idx.size:
        nsteps = min(_BLOCK, n_steps_total - step)
        draws = rng.standard_normal((2, idx.size, nsteps))
        for s in range(sets):
            normals = draws if s == 0 else -draws
            step_fn(act_x[s], act_y[s], act_iv[s], act_dn[s],
                    act_tc[s], act_xc[s], normals, params,
                    contract.budget, dt, step)
        step += nsteps
        alive = ~(act_dn.all(axis=0).astype(bool))
        if step < n_steps_total and alive.sum() < 0.7 * idx.size:
            # write finished columns home, keep stepping the rest
            fin = ~alive
            cols = idx[fin]
            for s in range(sets):
                x[s, cols] = act_x[s][fin]
                y[s, cols] = act_y[s][fin]
                ivar[s, cols] = act_iv[s][fin]
                done[s, cols] = act_dn[s][fin]
                tcross[s, cols] = act_tc[s][fin]
                xcross[s, cols] = act_xc[s][fin]
            idx = idx[alive]
            act_x = np.ascontiguousarray(act_x[:, alive])
            act_y = np.ascontiguousarray(act_y[:, alive])
            act_iv = np.ascontiguousarray(act_iv[:, alive])
            act_dn = np.ascontiguousarray(act_dn[:, alive])
            act_tc = np.ascontiguousarray(act_tc[:, alive])
            act_xc = np.ascontiguousarray(act_xc[:, alive])
    if idx.size:
        cols = idx
        for s in range(sets):
            x[s, cols] = act_x[s]
            y[s, cols] = act_y[s]
            ivar[s, cols] = act_iv[s]
            done[s, cols] = act_dn[s]
            tcross[s, cols] = act_tc[s]
            xcross[s, cols] = act_xc[s]

    crossed = done.astype(bool)
    if horizon is not None:
        stopping = np.where(crossed, tcross, np.nan)
        x_ex = np.where(crossed, xcross, x)
        at_horizon = ~crossed
        rv = np.where(crossed, np.nan, ivar)
        censored = np.zeros_like(crossed)
    else:
        stopping = np.where(crossed, tcross, np.nan)
        x_ex = np.where(crossed, xcross, x)
        at_horizon = np.zeros_like(crossed)
        rv = np.full(crossed.shape, np.nan)
        censored = ~crossed
    # interleave the antithetic sets so pairs are adjacent
    def flat(a):
        return a.T.reshape(-1)
    return (flat(stopping), flat(x_ex), flat(at_horizon), flat(rv),
            flat(censored))


def _worker_count():
    env = os.environ.get("TIMERKIT_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return min(os.cpu_count() or 1, 8)


def simulate_paths(model, contract, cfg):
    """Simulate budget-crossing paths; returns a :class:`PathOutcomes`.

    For finite-horizon contracts paths stop at min(crossing, horizon); for
    perpetual contracts paths run to the crossing, and those still alive at
    ``max_years`` come back flagged censored.
    """
    sets = 2 if cfg.antithetic else 1
    n_units_total = cfg.n_paths // sets
    if n_units_total < 1:
        raise DomainError("n_paths too small for the antithetic flag")
    chunks = []
    off = 0
    while off < n_units_total:
        take = min(_CHUNK, n_units_total - off)
        chunks.append(take * sets)
        off += take
    seeds = np.random.SeedSequence(cfg.seed).spawn(len(chunks))
    workers = _worker_count()
    if workers > 1 and BACKEND == "compiled" and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(
                lambda args: _simulate_chunk(args[0], args[1], model, contract, cfg),
                zip(seeds, chunks)))
    else:
        parts = [_simulate_chunk(s, n, model, contract, cfg)
                 for s, n in zip(seeds, chunks)]
    cols = [np.concatenate([p[j] for p in parts]) for j in range(5)]
    return PathOutcomes(*cols)


def price_from_outcomes(outcomes, contract, model):
    """Discounted-payoff mean and standard error from simulated paths.

    Antithetic pairs are averaged before the variance estimate.  Perpetual
    runs with more than 0.1% censored paths raise
    :class:`~timerkit.errors.CensoringError`.
    """
    if contract.horizon is None and outcomes.censored_fraction > 1e-3:
        raise CensoringError(
            f"{outcomes.censored_fraction:.2%} of paths hit the time cap")
    return _disc_payoff(outcomes, contract, model)


def _disc_payoff(outcomes, contract, model):
    if contract.horizon is not None:
        t_ex = np.where(outcomes.exercised_at_horizon, contract.horizon,
                        outcomes.stopping_time)
    else:
        t_ex = np.where(outcomes.censored, 0.0, outcomes.stopping_time)
    payoff = np.exp(-model.r * t_ex) * np.maximum(
        contract.s0 * np.exp(outcomes.x_at_exercise) - contract.strike, 0.0)
    if outcomes.censored.any():
        payoff = np.where(outcomes.censored, 0.0, payoff)
    n = payoff.size
    if n % 2 == 0:
        pair_means = 0.5 * (payoff[0::2] + payoff[1::2])
    else:
        pair_means = payoff
    price = float(np.mean(pair_means))
    std_err = float(np.std(pair_means, ddof=1) / math.sqrt(pair_means.size))
    return price, std_err


def mc_price(model, contract, cfg):
    """Simulate and price in one call; returns (price, std_err)."""
    outcomes = simulate_paths(model, contract, cfg)
    if contract.horizon is None and outcomes.censored_fraction > 1e-3:
        raise CensoringError(
            f"{outcomes.censored_fraction:.2%} of paths hit the time cap")
    return _disc_payoff(outcomes, contract, model)


@dataclass
class HistogramTables:
    """Stopping-time and joint (x_T, I_T) histograms of a simulation."""

    stopping_edges: np.ndarray
    stopping_counts: np.ndarray
    x_edges: np.ndarray | None = None
    i_edges: np.ndarray | None = None
    joint_counts: np.ndarray | None = None


def mc_histograms(outcomes, stopping_bins=50, joint_bins=(40, 40),
                  stopping_range=None):
    """Histogram tables from simulated outcomes.

    The one-dimensional table bins stopping times of exercised paths; the
    two-dimensional table bins (log-return, realized variance) of the paths
    that reached the horizon.
    """
    if len(outcomes) == 0:
        raise DomainError("no outcomes to histogram")
    st = outcomes.stopping_time[~np.isnan(outcomes.stopping_time)]
    counts, edges = np.histogram(st, bins=stopping_bins, range=stopping_range)
    tables = HistogramTables(edges, counts)
    mask = outcomes.exercised_at_horizon
    if mask.any():
        j, xe, ie = np.histogram2d(outcomes.x_at_exercise[mask],
                                   outcomes.realized_variance_at_horizon[mask],
                                   bins=joint_bins)
        tables.x_edges = xe
        tables.i_edges = ie
        tables.joint_counts = j
    return tables
