"""Model-level densities for the 3/2 and Heston stochastic volatility models.

Implemented here, for both models:

* the joint density of the transformed variance and the stopping time at the
  moment the variance budget is exhausted (a Bromwich integral of a
  Morse-type or Kratzer-type kernel),
* the marginal stopping-time density,
* the spectral function F(l) whose Fourier inverse is the budget-conditioned
  log-return density at a finite horizon,
* the joint density of log-return and realized variance at a fixed horizon.

Variable conventions: the 3/2 model works in z = -ln(V); Heston works in
z = V / sigma.  Public entry points also accept the plain variance via the
``v_b`` keyword and convert.

The Bromwich contour sits at ``phi_r_margin`` times the model's validity
bound by default, and is pushed further right (never left) towards the
integrand's saddle when that shortens the oscillatory tail; the integrand is
analytic to the right of the bound, so converged results are
contour-independent, which the test suite checks explicitly.
"""

import cmath
import math
from dataclasses import dataclass

import numpy as np

from ._backend import impl
from .errors import DomainError
from .quadrature import QuadConfig, QuadResult, bromwich_re, fourier_inverse, integrate_semi_infinite

__all__ = [
    "ThreeHalvesParams",
    "HestonParams",
    "phi_bound_32",
    "phi_bound_32_main_text",
    "phi_bound_heston",
    "joint_z_t_32",
    "joint_z_t_heston",
    "stopping_time_density_32",
    "stopping_time_density_heston",
    "f_transform_32",
    "f_transform_heston",
    "f_transform",
    "density_x_budget",
    "joint_x_i",
]

_LOG_TINY = -700.0


@dataclass(frozen=True)
class ThreeHalvesParams:
    """3/2 model: dv = kappa * v * (theta - v) dt + eps * v^(3/2) dW2.

    ``rho`` correlates the variance shocks with the log-return shocks and
    ``r`` is the continuously compounded risk-free rate.
    """

    v0: float
    kappa: float
    theta: float
    eps: float
    rho: float
    r: float

    def __post_init__(self):
        if not self.v0 > 0:
            raise DomainError("v0 must be positive")
        if not self.theta > 0:
            raise DomainError("theta must be positive")
        if not self.eps > 0:
            raise DomainError("eps must be positive")
        if not abs(self.rho) <= 1:
            raise DomainError("rho must lie in [-1, 1]")
        if not self.kappa > 0:
            # behaviour of the variance-time kernel is uncharacterized there
            raise DomainError("kappa must be positive for the 3/2 model")

    @property
    def z0(self):
        return -math.log(self.v0)

    def z_of_v(self, v):
        if np.any(np.asarray(v) <= 0):
            raise DomainError("variance must be positive")
        return -np.log(v)


@dataclass(frozen=True)
class HestonParams:
    """Heston model: dv = kappa * (theta - v) dt + sigma * sqrt(v) dW2."""

    v0: float
    kappa: float
    theta: float
    sigma: float
    rho: float
    r: float

    def __post_init__(self):
        if not self.v0 > 0:
            raise DomainError("v0 must be positive")
        if not self.theta > 0:
            raise DomainError("theta must be positive")
        if not self.sigma > 0:
            raise DomainError("sigma must be positive")
        if not abs(self.rho) <= 1:
            raise DomainError("rho must lie in [-1, 1]")
        if not self.kappa > 0:
            raise DomainError("kappa must be positive")

    @property
    def lam(self):
        """Kratzer index: kappa * theta / sigma^2 - 1/2."""
        return self.kappa * self.theta / self.sigma**2 - 0.5

    @property
    def mu(self):
        """Drift constant kappa / sigma."""
        return self.kappa / self.sigma

    @property
    def z0(self):
        return self.v0 / self.sigma

    def z_of_v(self, v):
        if np.any(np.asarray(v) <= 0):
            raise DomainError("variance must be positive")
        return np.asarray(v) / self.sigma


def phi_bound_32(p):
    """Minimum admissible contour real part for the 3/2 model.

    This is the Morse-kernel bound (Re[alpha] V0 - 1/2)^2 / (2m) evaluated at
    the 3/2 mapping m = 1/eps^2, alpha*V0 = kappa/eps^2 + 1, i.e.
    (eps^2/2) (kappa/eps^2 + 1/2)^2.
    """
    q = p.kappa / p.eps**2 + 0.5
    return 0.5 * p.eps**2 * q * q


def phi_bound_32_main_text(p):
    """The alternative printed form (2/eps^2)(kappa/eps^2 + 1/2)^2.

    Disagrees with :func:`phi_bound_32` by a factor eps^4/4; the forward
    Laplace transform of the Morse kernel demonstrably diverges between the
    two, so the larger (:func:`phi_bound_32`) is the one used everywhere.
    Kept for the resolution test in the suite.
    """
    q = p.kappa / p.eps**2 + 0.5
    return 2.0 / p.eps**2 * q * q


def phi_bound_heston(p):
    """Minimum admissible contour real part kappa^2 / (2 sigma^2)."""
    return p.kappa**2 / (2.0 * p.sigma**2)


def _apply_log_scale(v, log_scale):
    """Elementwise v * exp(log_scale) computed in log space (no overflow)."""
    v = np.asarray(v, dtype=float)
    s = np.broadcast_to(np.asarray(log_scale, dtype=float), v.shape)
    m = np.abs(v)
    good = m > 0.0
    ls = np.where(good, np.log(np.where(good, m, 1.0)) + s, -np.inf)
    return np.where(ls > -745.0, np.sign(v) * np.exp(np.minimum(ls, 700.0)), 0.0)


def _coth_invsinh_logsinh(u):
    """Stable (coth u, 1/sinh u, log sinh u) for complex u with Re u > 0.

    The log is assembled as u + log(1 - exp(-2u)) - log 2, which is
    continuous on the contour (no winding: 1 - exp(-2u) stays in the right
    half plane for Re u > 0).
    """
    q = np.exp(-2.0 * np.asarray(u))
    om = 1.0 - q
    coth = (1.0 + q) / om
    inv_sinh = 2.0 * np.exp(-np.asarray(u)) / om
    log_sinh = np.asarray(u) + np.log(om) - math.log(2.0)
    return coth, inv_sinh, log_sinh


def _real_coth_logsinh(u):
    """(coth u, log sinh u, log(1+coth u)) for real u > 0, overflow-safe."""
    e = math.exp(-2.0 * u)
    om = 1.0 - e
    coth = (1.0 + e) / om
    log_sinh = u + math.log1p(-e) - math.log(2.0)
    log_one_plus_coth = math.log(2.0) - math.log1p(-e)
    return coth, log_sinh, log_one_plus_coth


def _saddle_phi_32(eps, budget, base, ln_half_c):
    """Contour real part near the Bessel-order saddle (performance only).

    Stationary point of Phi*B + nu*ln(c/2) - lnGamma(nu+1) in Phi with
    nu = 2 sqrt(2 Phi)/eps; any contour right of the validity bound is
    exact, this just minimizes the oscillatory tail for spiky small-time
    kernels.
    """
    x = math.sqrt(base)
    for _ in range(12):
        nu = 2.0 * math.sqrt(2.0) * x / eps
        gap = math.log(max(nu, 1e-300)) - ln_half_c
        if gap <= 0.0:
            return base
        x_new = math.sqrt(2.0) * gap / (eps * budget)
        if abs(x_new - x) <= 1e-3 * x:
            x = x_new
            break
        x = 0.5 * (x + x_new)
    phi = x * x
    cap = 600.0 / budget
    return float(min(max(base, phi), max(base, cap)))


# ---------------------------------------------------------------------------
# 3/2 model


def _joint_zt_32_rows(z, t_b, p, budget, cfg):
    """Joint (z_B, T_B) density on a z grid at one stopping time.

    Returns (density rows, error rows, converged flag).
    """
    z = np.asarray(z, dtype=float)
    eps2 = p.eps**2
    kt = p.kappa * p.theta
    q = p.kappa / eps2 + 0.5
    z0 = p.z0
    u = 0.5 * kt * t_b
    coth_u, log_sinh, _ = _real_coth_logsinh(u)
    a = np.exp(z)
    a0 = math.exp(z0)
    log_c = math.log(2.0 * kt / eps2) + 0.5 * (z + z0) - log_sinh
    c = np.exp(np.minimum(log_c, 700.0))
    row_log = (math.log(kt / eps2) - log_sinh
               - (kt / eps2) * (a - a0)
               + q * (z - z0)
               - q * q * (0.5 * eps2) * budget
               + (p.kappa / eps2 + 1.0) * kt * t_b
               - (kt / eps2) * (a + a0) * coth_u
               + c)
    alive = row_log > _LOG_TINY
    dens = np.zeros_like(z)
    errs = np.zeros_like(z)
    if not alive.any():
        return dens, errs, True
    c_alive = c[alive]
    base = cfg.phi_r_margin * phi_bound_32(p)
    phi_r = _saddle_phi_32(p.eps, budget, base, math.log(max(np.max(c_alive), 1e-300) / 2.0))

    # fold the full row scale into the integrand so quadrature tolerances
    # and error estimates act directly in density units
    shift = np.ascontiguousarray(np.minimum(row_log[alive] + phi_r * budget, 300.0))
    c_alive = np.ascontiguousarray(c_alive)

    def g(phi):
        return impl.morse_joint_g(phi, c_alive, shift, p.eps)

    res = bromwich_re(g, budget, phi_r, cfg, scaled=True)
    dens[alive] = np.asarray(res.value)
    errs[alive] = np.asarray(res.err_estimate)
    return dens, errs, res.converged


def joint_z_t_32(z_b=None, t_b=None, p=None, budget=None, cfg=None, v_b=None):
    """Joint density of (z_B, T_B) for the 3/2 model, z = -ln V.

    ``budget`` is the variance budget at which the pseudotime horizon ends.
    Pass either ``z_b`` or the plain variance ``v_b``.
    """
    cfg = cfg or QuadConfig()
    if v_b is not None:
        z_b = float(p.z_of_v(v_b))
    if t_b <= 0:
        raise DomainError("t_b must be positive")
    if budget is None or budget <= 0:
        raise DomainError("budget must be positive")
    dens, errs, _ = _joint_zt_32_rows(np.array([z_b]), t_b, p, budget, cfg)
    return float(dens[0])


def stopping_time_density_32(t_b, p, budget, cfg=None):
    """Marginal stopping-time density for the 3/2 model."""
    cfg = cfg or QuadConfig()
    if t_b <= 0:
        raise DomainError("t_b must be positive")
    if budget <= 0:
        raise DomainError("budget must be positive")
    eps2 = p.eps**2
    kt = p.kappa * p.theta
    q = p.kappa / eps2 + 0.5
    u = 0.5 * kt * t_b
    coth_u, _, log_1pc = _real_coth_logsinh(u)
    x = (kt / eps2) * (coth_u - 1.0) / p.v0  # N / v0
    if x > 1100.0:
        # stopping earlier than this carries ~t^(2 kappa/eps^2 + 2) mass;
        # the Kummer series is the only cost left and it explodes here
        return 0.0
    log_x = math.log(max(x, 1e-300))
    base = cfg.phi_r_margin * phi_bound_32(p)
    phi_r = _saddle_phi_32_marginal(p.eps, budget, base, log_x)
    coef = 2.0 * math.sqrt(2.0) / p.eps

    lead = (math.log(kt / eps2) + log_1pc
            - q * q * (0.5 * eps2) * budget + phi_r * budget)
    fold = math.exp(min(lead, 300.0))

    def g(phi):
        nu = coef * np.sqrt(phi)
        m = 0.5 * nu - q
        fv, fe = impl.hyp1f1_vec(m + 1.0, nu + 1.0, -x)
        t = (m * log_x
             + impl.loggamma_vec(nu - m) - impl.loggamma_vec(nu + 1.0)
             + fe)
        return fold * np.exp(t) * fv

    res = bromwich_re(g, budget, phi_r, cfg, scaled=True)
    return float(res.value)


def _saddle_phi_32_marginal(eps, budget, base, log_x):
    x = math.sqrt(base)
    for _ in range(12):
        nu = 2.0 * math.sqrt(2.0) * x / eps
        gap = math.log(max(nu, 1e-300)) + math.log(2.0) - log_x
        if gap <= 0.0:
            return base
        x_new = math.sqrt(2.0) * gap / (2.0 * eps * budget)
        if abs(x_new - x) <= 1e-3 * x:
            x = x_new
            break
        x = 0.5 * (x + x_new)
    phi = x * x
    cap = 600.0 / budget
    return float(min(max(base, phi), max(base, cap)))


# ---------------------------------------------------------------------------
# Heston model


def _heston_small_time_dead(p, t_b, cfg):
    """True when the Kratzer contour integral is both unaffordable and
    provably negligible: the kernel needs range ~16/(sigma*t)^2 before its
    decay regime whenever the contour still starts in the small-|u| zone,
    and there the stopping-time mass is exp(-O((budget/t)^2)) = 0 in
    doubles.  For tiny sigma the contour starts beyond that zone (u_r is
    sigma-independent) and the integral stays cheap, so no floor applies."""
    u_r = (math.sqrt(0.5 * cfg.phi_r_margin * phi_bound_heston(p))
           * p.sigma * t_b)
    return u_r < 0.5 and 16.0 / (p.sigma * t_b) ** 2 > cfg.phi_i_max


def _joint_zt_heston_rows(z, t_b, p, budget, cfg):
    """Joint (z_B, T_B) density on a z > 0 grid at one stopping time."""
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise DomainError("Heston z_b = v/sigma must be positive")
    if _heston_small_time_dead(p, t_b, cfg):
        return np.zeros_like(z), np.zeros_like(z), True
    lam = p.lam
    mu = p.mu
    z0 = p.z0
    row_log = ((lam + 1.0) * np.log(z) - lam * math.log(z0)
               - mu * (z - z0) - 0.5 * mu * mu * budget
               + (lam + 0.5) * mu * p.sigma * t_b
               + math.log(0.5 * p.sigma))
    phi_r = cfg.phi_r_margin * phi_bound_heston(p)
    # row scale folded into the integrand: tolerances act in density units
    shift = np.ascontiguousarray(np.minimum(row_log + phi_r * budget, 300.0))
    zc = np.ascontiguousarray(z)

    def g(phi):
        return impl.heston_joint_g(phi, zc, shift, z0, lam, t_b, p.sigma)

    res = bromwich_re(g, budget, phi_r, cfg, scaled=True)
    return np.asarray(res.value), np.asarray(res.err_estimate), res.converged


def joint_z_t_heston(z_b=None, t_b=None, p=None, budget=None, cfg=None, v_b=None):
    """Joint density of (z_B, T_B) for Heston, z = v / sigma (> 0)."""
    cfg = cfg or QuadConfig()
    if v_b is not None:
        z_b = float(p.z_of_v(v_b))
    if z_b is None or z_b <= 0:
        raise DomainError("z_b must be positive (z = v / sigma)")
    if t_b <= 0:
        raise DomainError("t_b must be positive")
    if budget is None or budget <= 0:
        raise DomainError("budget must be positive")
    dens, errs, _ = _joint_zt_heston_rows(np.array([z_b]), t_b, p, budget, cfg)
    return float(dens[0])


def stopping_time_density_heston(t_b, p, budget, cfg=None):
    """Marginal stopping-time density for the Heston model.

    This is the closed z-integral of the joint density; the suite regression
    tests it against the numerical z-marginalization of the joint, which is
    the defining form.
    """
    cfg = cfg or QuadConfig()
    if t_b <= 0:
        raise DomainError("t_b must be positive")
    if budget <= 0:
        raise DomainError("budget must be positive")
    if _heston_small_time_dead(p, t_b, cfg):
        return 0.0
    lam = p.lam
    mu = p.mu
    z0 = p.z0
    phi_r = cfg.phi_r_margin * phi_bound_heston(p)
    lead = min(math.log(p.sigma) - 0.5 * mu * mu * budget
               + (lam + 0.5) * mu * p.sigma * t_b + phi_r * budget, 300.0)

    def g(phi):
        av = np.sqrt(2.0 * phi)
        uu = np.sqrt(0.5 * phi) * (p.sigma * t_b)
        coth, _, log_sinh = _coth_invsinh_logsinh(uu)
        gg = mu + av * coth
        log_ratio = np.log(av) - log_sinh
        ratio2 = np.exp(np.minimum(2.0 * log_ratio.real, 700.0)
                        + 2j * log_ratio.imag)
        expo = ((mu * mu - 2.0 * phi) * z0 / gg
                + (2.0 * lam + 1.0) * log_ratio
                - (2.0 * lam + 2.0) * np.log(gg))
        bracket = (2.0 * lam + 1.0) + ratio2 * z0 / gg
        return np.exp(np.minimum(expo.real + lead, 700.0) + 1j * expo.imag) * bracket

    res = bromwich_re(g, budget, phi_r, cfg, scaled=True)
    return float(res.value)


# ---------------------------------------------------------------------------
# spectral functions F(l) and horizon densities


def _q32(l, pvar, p, horizon):
    """Double-Fourier kernel of the 3/2 joint (x_T, I_T) density.

    Broadcasts over the log-return frequency ``l`` and the realized-variance
    frequency ``pvar``; ``l`` may be complex (the pricing formulas shift it
    by i).
    """
    l = np.asarray(l, dtype=np.complex128)
    pvar = np.asarray(pvar, dtype=np.complex128)
    eps = p.eps
    eps2 = eps * eps
    kt = p.kappa * p.theta
    drift = -0.5 + p.rho * p.kappa / eps + 0.5 * p.rho * eps
    lam2 = ((2.0 * p.kappa / eps2 + 1.0) ** 2
            + (8.0 / eps2) * (1j * l * drift + 0.5 * (1.0 - p.rho**2) * l * l
                              + 1j * pvar))
    lam = np.sqrt(lam2)
    m = 0.5 * lam - p.kappa / eps2 - 0.5 - 1j * l * p.rho / eps
    u = 0.5 * kt * horizon
    n_avg = (2.0 * math.sinh(u) / kt) * math.exp(u) * p.v0
    x = 2.0 / (eps2 * n_avg)
    fv, fe = impl.hyp1f1_vec(m, lam + 1.0, -x)
    t = (m * math.log(x)
         + impl.loggamma_vec(lam + 1.0 - m) - impl.loggamma_vec(lam + 1.0)
         + fe)
    return np.exp(t) * fv


def _qheston(l, pvar, p, horizon):
    """Double-Fourier kernel of the Heston joint (x_T, I_T) density."""
    l = np.asarray(l, dtype=np.complex128)
    pvar = np.asarray(pvar, dtype=np.complex128)
    s = p.sigma
    s2 = s * s
    om = 0.5 * s * np.sqrt(p.kappa**2 / s2 + (1.0 - p.rho**2) * l * l
                           + 1j * l * (2.0 * p.rho * p.kappa / s - 1.0)
                           + 2j * pvar)
    q2 = np.exp(-2.0 * om * horizon)
    gg = (p.kappa + 1j * l * p.rho * s) / (2.0 * om)
    dd = 0.5 * ((1.0 + gg) + (1.0 - gg) * q2)
    log_n = -om * horizon - np.log(dd)
    tail = (1.0 + q2) / (1.0 - q2) - 2.0 * q2 / (dd * (1.0 - q2))
    expo = ((p.kappa / s2) * p.v0 + (p.kappa**2 * p.theta / s2) * horizon
            + 1j * l * p.rho * (p.kappa * p.theta * horizon + p.v0) / s
            + (2.0 * p.kappa * p.theta / s2) * log_n
            - (2.0 * om / s2) * tail * p.v0)
    return np.exp(expo)


def _q_kernel(model):
    if isinstance(model, ThreeHalvesParams):
        return _q32
    if isinstance(model, HestonParams):
        return _qheston
    raise DomainError(f"unsupported model type {type(model)!r}")


def _budget_kernel(pvar, budget):
    """(exp(i p B) - 1) / p with the |p| -> 0 series patched in."""
    pvar = np.asarray(pvar, dtype=float)
    out = np.empty(pvar.shape, dtype=np.complex128)
    tiny = np.abs(pvar) < 1e-4
    pt = pvar[tiny]
    out[tiny] = (1j * budget - 0.5 * pt * budget**2
                 - 1j / 6.0 * pt * pt * budget**3)
    pb = pvar[~tiny]
    out[~tiny] = (np.exp(1j * pb * budget) - 1.0) / pb
    return out


def f_transform(l, model, horizon, budget, cfg=None):
    """Spectral function F(l) of the budget-conditioned log-return density.

    F(0) is the survival probability: the chance the budget is not exhausted
    before the horizon.  ``l`` may be complex; F(-l) = conj(F(l)) for real l.
    """
    cfg = cfg or QuadConfig()
    if horizon <= 0 or budget <= 0:
        raise DomainError("horizon and budget must be positive")
    qk = _q_kernel(model)

    def integrand(pv):
        here = qk(l, pv, model, horizon) * _budget_kernel(pv, budget)
        there = qk(l, -pv, model, horizon) * _budget_kernel(-pv, budget)
        return -1j * (here + there) / (2.0 * math.pi)

    res = integrate_semi_infinite(
        integrand, 0.0, max(2.0 * math.pi / budget, 10.0), cfg,
        oscillation_width=4.0 * math.pi / budget,
        upper_limit=cfg.p_max)
    return complex(res.value)


def f_transform_32(l, p, horizon, budget, cfg=None):
    """F(l) for the 3/2 model."""
    if not isinstance(p, ThreeHalvesParams):
        raise DomainError("expected ThreeHalvesParams")
    return f_transform(l, p, horizon, budget, cfg)


def f_transform_heston(l, p, horizon, budget, cfg=None):
    """F(l) for the Heston model."""
    if not isinstance(p, HestonParams):
        raise DomainError("expected HestonParams")
    return f_transform(l, p, horizon, budget, cfg)


def density_x_budget(x_t, model, horizon, budget, cfg=None):
    """Log-return sub-density at the horizon, budget not yet exhausted.

    Integrates to the survival probability F(0) rather than one.
    """
    cfg = cfg or QuadConfig()

    def spectral(lv):
        return np.array([f_transform(li, model, horizon, budget, cfg)
                         for li in np.atleast_1d(lv)])

    res = fourier_inverse(spectral, x_t - model.r * horizon, cfg)
    return float(res.value)


def joint_x_i(x_t, i_t, model, horizon, cfg=None):
    """Joint density of log-return and realized variance at the horizon."""
    dens = joint_x_i_grid(x_t, np.array([i_t]), model, horizon, cfg)
    return float(dens[0])


def joint_x_i_grid(x_t, i_grid, model, horizon, cfg=None):
    """Joint (x_T, I_T) density at one x and a grid of I values.

    The log-return frequency integral g(p) is evaluated once per p node and
    shared across the I grid (the batch rows of the outer integral), so a
    density slice along I costs little more than a single point.
    """
    cfg = cfg or QuadConfig()
    i_grid = np.atleast_1d(np.asarray(i_grid, dtype=float))
    if np.any(i_grid <= 0) or horizon <= 0:
        raise DomainError("realized variance and horizon must be positive")
    qk = _q_kernel(model)
    xs = x_t - model.r * horizon

    def g_of_p(pp):
        """int dl/2pi exp(i l xs) Q(l, p); Q is not Hermitian in l alone."""
        def igr(lv):
            return (np.exp(1j * lv * xs) * qk(lv, pp, model, horizon)
                    + np.exp(-1j * lv * xs) * qk(-lv, pp, model, horizon))
        res = integrate_semi_infinite(
            igr, 0.0, 10.0, cfg,
            oscillation_width=math.pi / max(abs(xs), 0.3),
            upper_limit=cfg.l_max)
        return res.value / (2.0 * math.pi)

    def outer(pv):
        g = np.array([g_of_p(pp) for pp in pv])
        # rows: one I value each; the symmetry g(-p) = conj g(p) folds the
        # full line onto [0, inf)
        return np.real(np.exp(1j * np.outer(i_grid, pv)) * g[None, :]) / math.pi

    res = integrate_semi_infinite(
        outer, 0.0, max(2.0 * math.pi / float(np.max(i_grid)), 5.0), cfg,
        oscillation_width=4.0 * math.pi / float(np.max(i_grid)),
        upper_limit=cfg.p_max)
    return np.asarray(res.value, dtype=float)
