"""Timer call option pricing.

Perpetual prices integrate the conditional Black-Scholes-Merton-type price
against the joint (z_B, T_B) propagator; finite time-horizon prices add the
European-style contribution of paths that survive to the horizon, evaluated
through the spectral function F(l).
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .errors import DomainError
from .quadrature import QuadConfig, _NODES, _WK, _WGFULL, _segments
from . import propagators as pg
from .propagators import HestonParams, ThreeHalvesParams, f_transform

__all__ = [
    "ContractSpec",
    "PriceResult",
    "upsilon_32",
    "upsilon_heston",
    "conditional_price",
    "price_perpetual",
    "price_finite",
    "survival_probability",
]


@dataclass(frozen=True)
class ContractSpec:
    """Timer call contract: spot, strike, variance budget, optional horizon.

    ``budget`` is the realized-variance level (variance times years) whose
    first crossing triggers exercise; a missing ``horizon`` means the
    perpetual contract.
    """

    s0: float
    strike: float
    budget: float
    horizon: float | None = None

    def __post_init__(self):
        if not self.s0 > 0:
            raise DomainError("s0 must be positive")
        if not self.strike >= 0:
            raise DomainError("strike must be nonnegative")
        if not self.budget > 0:
            raise DomainError("budget must be positive")
        if self.horizon is not None and not self.horizon > 0:
            raise DomainError("horizon must be positive when present")


@dataclass
class PriceResult:
    """Price plus error estimate and evaluation diagnostics."""

    price: float
    err_estimate: float
    survival_prob: float | None = None
    diagnostics: dict = field(default_factory=dict)


def upsilon_32(z_b, t_b, p, budget):
    """Conditional log-forward shift for the 3/2 model (z = -ln V)."""
    z_b = np.asarray(z_b, dtype=float)
    return (-(p.rho / p.eps) * (z_b + math.log(p.v0))
            + p.r * t_b - 0.5 * budget
            - p.rho * ((p.kappa * p.theta / p.eps) * t_b
                       - (p.kappa / p.eps + 0.5 * p.eps) * budget))


def upsilon_heston(z_b, t_b, p, budget):
    """Conditional log-forward shift for the Heston model (z = v / sigma)."""
    z_b = np.asarray(z_b, dtype=float)
    return (p.rho * (z_b - p.v0 / p.sigma
                     - (p.kappa * p.theta / p.sigma) * t_b
                     + (p.kappa / p.sigma) * budget)
            + p.r * t_b - 0.5 * budget)


def conditional_price(upsilon, contract, t_b, rho, r):
    """Call price conditional on the stopped variance state.

    The log-return given (z_B, T_B) is Gaussian with mean ``upsilon`` and
    variance (1 - rho^2) * budget, which prices the call in closed form.
    ``upsilon`` may be an array.  The rate enters only the strike-side
    discount (the forward side carries exp(upsilon - r t_b) as a whole).
    """
    ups = np.asarray(upsilon, dtype=float)
    t = np.asarray(t_b, dtype=float)
    s0, k = contract.s0, contract.strike
    s2 = (1.0 - rho * rho) * contract.budget
    if k == 0.0:
        return s0 * np.exp(ups - r * t + 0.5 * s2)
    if s2 < 1e-14:
        return np.exp(-r * t) * np.maximum(s0 * np.exp(ups) - k, 0.0)
    sq = math.sqrt(s2)
    d_minus = (math.log(s0 / k) + ups) / sq
    d_plus = d_minus + sq
    return (s0 * np.exp(ups - r * t + 0.5 * s2) * ndtr(d_plus)
            - k * np.exp(-r * t) * ndtr(d_minus))


# ---------------------------------------------------------------------------
# inner z-integral


def _upsilon(model, z, t_b, budget):
    if isinstance(model, ThreeHalvesParams):
        return upsilon_32(z, t_b, model, budget)
    return upsilon_heston(z, t_b, model, budget)


def _joint_rows(model, z, t_b, budget, cfg):
    if isinstance(model, ThreeHalvesParams):
        return pg._joint_zt_32_rows(z, t_b, model, budget, cfg)
    return pg._joint_zt_heston_rows(z, t_b, model, budget, cfg)


def _log_envelope(model, z, t_b, budget, cfg):
    """Cheap log-magnitude proxy of the joint density at the contour start.

    Used only to locate the support of the z integral; one scaled-Bessel row
    at real Phi replaces the full contour integral.
    """
    from ._backend import impl

    z = np.asarray(z, dtype=float)
    if isinstance(model, ThreeHalvesParams):
        p = model
        eps2 = p.eps**2
        kt = p.kappa * p.theta
        q = p.kappa / eps2 + 0.5
        u = 0.5 * kt * t_b
        coth_u, log_sinh, _ = pg._real_coth_logsinh(u)
        a = np.exp(z)
        a0 = math.exp(p.z0)
        log_c = math.log(2.0 * kt / eps2) + 0.5 * (z + p.z0) - log_sinh
        c = np.exp(np.minimum(log_c, 700.0))
        row = (-(kt / eps2) * (a - a0) + q * (z - p.z0)
               - (kt / eps2) * (a + a0) * coth_u + c)
        phi_r = cfg.phi_r_margin * pg.phi_bound_32(p)
        nu = np.array([2.0 * math.sqrt(2.0 * phi_r) / p.eps + 0j])
        bi = np.abs(impl.besseli_scaled_rr(nu, c)[:, 0])
        return row + np.log(bi + 1e-300)
    p = model
    phi_r = cfg.phi_r_margin * pg.phi_bound_heston(p)
    av = math.sqrt(2.0 * phi_r)
    u = math.sqrt(0.5 * phi_r) * p.sigma * t_b
    coth_u, log_sinh, _ = pg._real_coth_logsinh(u)
    w = 2.0 * av * math.exp(-log_sinh) * np.sqrt(z * p.z0)
    bm, be = impl.besseli_me_cc(2.0 * p.lam, w.astype(complex))
    row = ((p.lam + 1.0) * np.log(z) - p.mu * (z - p.z0)
           - av * coth_u * (z + p.z0) + be.real)
    return row + np.log(np.abs(bm) + 1e-300)


def _z_support(model, t_b, budget, cfg):
    """Locate [lo, hi] carrying the mass of the z integral at this t_b."""
    if isinstance(model, ThreeHalvesParams):
        z0 = model.z0
        grid = np.linspace(z0 - 25.0, z0 + 14.0, 96)
        positive = False
    else:
        z0 = model.z0
        grid = np.geomspace(z0 * 1e-4, z0 * 60.0, 96)
        positive = True
    env = _log_envelope(model, grid, t_b, budget, cfg)
    kmax = int(np.argmax(env))
    top = env[kmax]
    alive = env > top - 46.0
    lo = grid[alive].min()
    hi = grid[alive].max()
    # tighten around a narrow mode the coarse grid may straddle
    if kmax > 0 and kmax < len(grid) - 1 and (alive.sum() <= 3):
        fine = np.linspace(grid[kmax - 1], grid[kmax + 1], 64)
        env_f = _log_envelope(model, fine, t_b, budget, cfg)
        top = max(top, env_f.max())
        alive_f = env_f > top - 46.0
        lo = min(lo, fine[alive_f].min())
        hi = max(hi, fine[alive_f].max())
    pad = 0.05 * (hi - lo)
    lo -= pad
    hi += pad
    if positive:
        lo = max(lo, 1e-12)
    return lo, hi


def _z_edges(model, t_b, budget, cfg, n_panels):
    """Panel edges over the alive z range, spaced by envelope mass."""
    lo, hi = _z_support(model, t_b, budget, cfg)
    grid = np.linspace(lo, hi, 160)
    env = _log_envelope(model, np.maximum(grid, 1e-12), t_b, budget, cfg)
    w = np.exp(np.clip(env - env.max(), -60.0, 0.0)) + 1e-4
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1])
                                           * np.diff(grid))])
    cum /= cum[-1]
    edges = np.interp(np.linspace(0.0, 1.0, n_panels + 1), cum, grid)
    # guard against duplicate edges in flat envelope stretches
    for i in range(1, len(edges)):
        if edges[i] <= edges[i - 1]:
            edges[i] = edges[i - 1] + 1e-12
    return edges


def _inner_integral(model, t_b, contract, cfg, weight, n_panels=20):
    """One batched z integral of P(z, t_b) * weight(z) on K15 panels.

    Returns (value, error estimate, converged).  The whole node set goes
    through a single Bromwich evaluation, which is what makes the pricing
    double integral affordable; panel edges follow the envelope mass so the
    mode gets most of the resolution.
    """
    edges = _z_edges(model, t_b, contract.budget, cfg, n_panels)
    h = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + h[:, None] * _NODES[None, :]).ravel()
    dens, errs, conv = _joint_rows(model, nodes, t_b, contract.budget, cfg)
    if weight == "price":
        ups = _upsilon(model, nodes, t_b, contract.budget)
        wgt = conditional_price(ups, contract, t_b, model.rho, model.r)
    else:
        wgt = np.ones_like(nodes)
    f = (dens * wgt).reshape(n_panels, 15)
    fe = (np.abs(errs) * np.abs(wgt)).reshape(n_panels, 15)
    vals = h * (f @ _WK)
    gvals = h * (f @ _WGFULL)
    err = float(np.sum(np.abs(vals - gvals)) + np.sum(fe @ _WK * h))
    return float(np.sum(vals)), err, conv


def _t_floor(model, cfg):
    """Stopping times below this carry no representable mass (see the
    propagator small-time analysis); the outer integral starts here."""
    if isinstance(model, HestonParams):
        t = 4.0 / (model.sigma * math.sqrt(cfg.phi_i_max))
        u_r = (math.sqrt(0.5 * cfg.phi_r_margin * pg.phi_bound_heston(model))
               * model.sigma * t)
        return t if u_r < 0.5 else 1e-4
    # 3/2: the Bessel argument scales like c0/sinh(kt t/2); keep it within
    # the affordable contour range (the mass below this floor is
    # t^(2 kappa/eps^2 + 2)-suppressed and beyond double precision anyway)
    p = model
    kt = p.kappa * p.theta
    eps2 = p.eps**2
    c0 = (2.0 * kt / eps2) * math.exp(p.z0 + 0.5)
    c_target = math.sqrt(cfg.phi_i_max / 85.0)
    u = math.asinh(c0 / c_target)
    return 2.0 * u / kt


_POOL = None


def _node_pool():
    """Shared thread pool for outer-integral nodes (compiled backend only:
    the hot kernels drop the GIL there).  TIMERKIT_THREADS caps the size."""
    global _POOL
    from ._backend import BACKEND
    if BACKEND != "compiled":
        return None
    if _POOL is None:
        env = os.environ.get("TIMERKIT_THREADS", "").strip()
        try:
            n = max(1, int(env)) if env else min(os.cpu_count() or 1, 8)
        except ValueError:
            n = min(os.cpu_count() or 1, 8)
        if n <= 1:
            return None
        _POOL = ThreadPoolExecutor(max_workers=n)
    return _POOL


def _stopping_density(model, t_b, budget, cfg):
    if isinstance(model, ThreeHalvesParams):
        return pg.stopping_time_density_32(t_b, model, budget, cfg)
    return pg.stopping_time_density_heston(t_b, model, budget, cfg)


def _outer_price(model, contract, cfg, t_hi):
    """T_B integral of (z integral of propagator x conditional price).

    One globally balanced adaptive pass over log-spaced panels between the
    small-time floor and a probed upper cap; fringe nodes where the cheap
    marginal density shows no mass skip the z machinery entirely.
    """
    from .quadrature import _adaptive

    inner_err = [0.0]
    inner_conv = [True]
    n_nodes = [0]
    # conditional prices are bounded by ~20 * s0 for sane parameter sets
    skip_below = 0.02 * cfg.abs_tol / (20.0 * contract.s0)

    t_lo = _t_floor(model, cfg)
    scale = contract.budget / min(model.theta, model.v0)
    t_cap = 2.0 * scale
    while (t_cap < 400.0 * scale
           and _stopping_density(model, t_cap, contract.budget, cfg) > skip_below):
        t_cap *= 1.6
    if t_hi is not None:
        t_cap = min(t_cap, t_hi)
    if t_cap <= t_lo:
        return 0.0, 0.0, True, 0
    low_fringe = 4.0 * t_lo
    high_fringe = 0.5 * t_cap

    def node(t):
        if (t < low_fringe or t > high_fringe) and \
                _stopping_density(model, t, contract.budget, cfg) < skip_below:
            return 0.0
        v, e, c = _inner_integral(model, t, contract, cfg, "price")
        inner_err[0] = max(inner_err[0], e)
        inner_conv[0] = inner_conv[0] and c
        n_nodes[0] += 1
        return v

    pool = _node_pool()

    def f(ts):
        if pool is not None and len(ts) > 3:
            return np.array(list(pool.map(node, ts)))
        return np.array([node(t) for t in ts])

    pts = list(np.geomspace(t_lo, t_cap, 13))
    value, err, evals, ok = _adaptive(f, pts, cfg,
                                      max_panels=cfg.max_subdivisions)
    total_err = float(err) + inner_err[0]
    return float(value), total_err, bool(ok) and inner_conv[0], n_nodes[0]


def price_perpetual(model, contract, cfg=None):
    """Perpetual timer call price (double integral of propagator x payoff)."""
    cfg = cfg or QuadConfig(abs_tol=1e-6, rel_tol=1e-4)
    value, err, ok, nodes = _outer_price(model, contract, cfg, None)
    return PriceResult(value, err, None,
                       {"t_nodes": nodes, "converged": ok})


def _c2_european_part(model, contract, cfg):
    """Horizon contribution via the spectral function: G(0)/2 plus the
    principal-value Fourier integral of G(l)/l."""
    t = contract.horizon
    s0, k = contract.s0, contract.strike
    disc = math.exp(-model.r * t)

    def g_of(l):
        fl_shift = f_transform(complex(l, 1.0), model, t, contract.budget, cfg)
        if k == 0.0:
            return s0 * fl_shift, None
        fl = f_transform(complex(l, 0.0), model, t, contract.budget, cfg)
        return s0 * fl_shift - k * disc * fl, fl

    f0 = f_transform(0.0, model, t, contract.budget, cfg).real
    fi = f_transform(1j, model, t, contract.budget, cfg).real
    if k == 0.0:
        return s0 * fi, f0
    g0 = s0 * fi - k * disc * f0
    m = math.log(k / s0) - model.r * t

    def integrand_vec(lv):
        gs = np.empty(lv.shape, dtype=complex)
        for i, l in enumerate(lv):
            gs[i], _ = g_of(float(l))
        return np.imag(np.exp(1j * lv * m) * gs) / lv

    value, err, evals, ok, _ = _segments(
        integrand_vec, 1e-9, cfg, 10.0, 4.0 * math.pi / max(abs(m), 0.05),
        0.1 * cfg.abs_tol, cfg.l_max)
    c2 = g0 / 2.0 - value / math.pi
    return c2, f0


def price_finite(model, contract, cfg=None):
    """Finite time-horizon timer call price.

    Sum of the budget-exhausted contribution (the T_B-truncated double
    integral) and the horizon contribution, with the survival probability
    F(0) reported alongside.
    """
    cfg = cfg or QuadConfig(abs_tol=1e-6, rel_tol=1e-4)
    if contract.horizon is None:
        raise DomainError("price_finite requires contract.horizon")
    c1, err1, ok, nodes = _outer_price(model, contract, cfg, contract.horizon)
    c2, f0 = _c2_european_part(model, contract, cfg)
    return PriceResult(c1 + c2, err1 + cfg.abs_tol, float(f0),
                       {"t_nodes": nodes, "converged": ok,
                        "exhausted_part": c1, "horizon_part": c2})


def survival_probability(model, contract, cfg=None):
    """Probability the variance budget outlives the horizon, F(0)."""
    cfg = cfg or QuadConfig()
    if contract.horizon is None:
        raise DomainError("survival probability requires contract.horizon")
    val = f_transform(0.0, model, contract.horizon, contract.budget, cfg).real
    return float(min(max(val, 0.0), 1.0))
