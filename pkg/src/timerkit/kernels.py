"""Imaginary-time path-integral kernels as standalone operations.

The Morse kernel solves the exponential potential
(m/2) x'^2 + (V0^2 / 2m)(e^{2x} - 2 alpha e^x), the Kratzer kernel the
radial potential r'^2/2 + (lam^2 - 1/4)/(2 r^2) - beta/r, both as inverse
Laplace transforms along a fixed-real-part contour with the Laplace-domain
kernel in its xi-integral form.  The radial harmonic oscillator kernel is
the closed form both model propagators reduce to.

These are cross-check surfaces: the model propagators in
:mod:`timerkit.propagators` are these kernels with the time integral
already collapsed, and the test suite ties the two together through forward
Laplace transforms against the Whittaker-product form, short-time limits
and Chapman-Kolmogorov composition.

The contour sits at ``phi_r_margin * bound + 1``; the absolute offset keeps
the xi decay rate away from zero when the validity bound is small.  Tests
may pass ``phi_r`` explicitly (contour invariance).
"""

import cmath
import math
from dataclasses import dataclass

import numpy as np

from ._backend import impl
from .errors import DomainError
from .quadrature import QuadConfig, _NODES, _WK, bromwich_re

__all__ = [
    "MorseParams",
    "KratzerParams",
    "morse_validity_bound",
    "morse_kernel",
    "kratzer_validity_bound",
    "kratzer_kernel",
    "radial_ho_kernel",
]


@dataclass(frozen=True)
class MorseParams:
    """Kinetic mass, potential depth V0 > 0 and the (complex) alpha."""

    m: float
    v0_pot: float
    alpha_pot: complex

    def __post_init__(self):
        if not self.m > 0:
            raise DomainError("kinetic mass must be positive")
        if not self.v0_pot > 0:
            raise DomainError("V0 must be positive")


@dataclass(frozen=True)
class KratzerParams:
    """Centrifugal index lam > 0 and the (complex) Coulomb strength beta."""

    lam: float
    beta_pot: complex

    def __post_init__(self):
        if not self.lam > 0:
            raise DomainError("lam must be positive")


def morse_validity_bound(p):
    """Minimum admissible contour real part (Re[alpha] V0 - 1/2)^2 / (2m)."""
    a = complex(p.alpha_pot).real * p.v0_pot
    return (a - 0.5) ** 2 / (2.0 * p.m)


def kratzer_validity_bound(p):
    """Minimum admissible contour real part (Re[beta] / (lam + 1/2))^2 / 2."""
    b = complex(p.beta_pot).real
    return 0.5 * (b / (p.lam + 0.5)) ** 2


def _xi_rule(hi, n_panels=36):
    """Geometric K15 panels on (0, hi] resolving the xi -> 0 endpoint."""
    edges = np.geomspace(hi * 1e-9, hi, n_panels + 1)
    h = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + h[:, None] * _NODES[None, :]).ravel()
    weights = (h[:, None] * _WK[None, :]).ravel()
    return nodes, weights


def morse_kernel(x_from, x_to, delta, p, cfg=None, phi_r=None):
    """Imaginary-time Morse transition amplitude over [0, delta].

    One fixed xi rule serves every contour node: the Bessel argument of the
    xi integrand does not depend on Phi, so each contour panel is a single
    order-by-argument Bessel grid.
    """
    cfg = cfg or QuadConfig()
    if delta <= 0:
        raise DomainError("delta must be positive")
    m = p.m
    v0 = p.v0_pot
    alpha = complex(p.alpha_pot)
    bound = morse_validity_bound(p)
    if phi_r is None:
        phi_r = cfg.phi_r_margin * bound + 1.0
    x_s, x_l = min(x_from, x_to), max(x_from, x_to)
    arg0 = 2.0 * v0 * math.exp(0.5 * (x_s + x_l))
    e_sum = v0 * (math.exp(x_s) + math.exp(x_l))
    # xi tail rate on the contour: 2 sqrt(2 m phi_r) + 1 - 2 Re(alpha V0)
    rate = 2.0 * math.sqrt(2.0 * m * phi_r) + 1.0 - 2.0 * alpha.real * v0
    xi, wx = _xi_rule(50.0 / max(rate, 0.2))
    q = np.exp(-2.0 * xi)
    om = 1.0 - q
    coth = (1.0 + q) / om
    inv_sinh = 2.0 * np.exp(-xi) / om
    c = arg0 * inv_sinh
    row = 2.0 * alpha * v0 * xi - e_sum * coth + c
    row_fac = wx * inv_sinh * np.exp(
        np.minimum(row.real, 700.0) + 1j * row.imag)
    coef = 2.0 * math.sqrt(2.0 * m)

    def g(phi):
        nu = coef * np.sqrt(phi)
        grid = impl.besseli_scaled_rr(nu, c)     # (n_xi, n_phi)
        return row_fac @ grid

    res = bromwich_re(g, delta, phi_r, cfg, validity_bound=bound)
    return float(2.0 * m * res.value)


def kratzer_kernel(r_from, r_to, delta, p, cfg=None, phi_r=None):
    """Imaginary-time Kratzer transition amplitude over [0, delta]."""
    cfg = cfg or QuadConfig()
    if delta <= 0:
        raise DomainError("delta must be positive")
    if r_from <= 0 or r_to <= 0:
        raise DomainError("endpoints must be positive")
    lam = p.lam
    beta = complex(p.beta_pot)
    bound = kratzer_validity_bound(p)
    if phi_r is None:
        phi_r = cfg.phi_r_margin * bound + 1.0
    r_s, r_l = min(r_from, r_to), max(r_from, r_to)
    rs = math.sqrt(r_s * r_l)
    rate = (2.0 * lam + 1.0) * math.sqrt(2.0 * phi_r) - 2.0 * beta.real
    xi, wx = _xi_rule(50.0 / max(rate, 0.2))

    def g(phi):
        a = np.sqrt(2.0 * phi)
        u = np.outer(xi, a)
        q = np.exp(-2.0 * u)
        om = 1.0 - q
        coth = (1.0 + q) / om
        inv_sinh = 2.0 * np.exp(-u) / om
        log_sinh = u + np.log(om) - math.log(2.0)
        w = (2.0 * rs) * a[None, :] * inv_sinh
        bm, be = impl.besseli_me_cc(2.0 * lam, w)
        # analytic continuation of w^(2 lam) across sinh windings
        log_w = math.log(2.0 * rs) + np.log(a)[None, :] - log_sinh
        wind = np.round((log_w.imag - np.angle(w)) / (2.0 * math.pi))
        branch = np.exp(1j * (4.0 * math.pi * lam) * wind)
        expo = (2.0 * beta * xi[:, None]
                - (r_s + r_l) * a[None, :] * coth + be)
        integ = ((2.0 * rs) * a[None, :] * branch
                 * np.exp(np.minimum(expo.real, 700.0) + 1j * expo.imag) * bm)
        return wx @ integ

    res = bromwich_re(g, delta, phi_r, cfg, validity_bound=bound)
    return float(res.value)


def radial_ho_kernel(z_from, z_to, t, omega, mass_scale, order):
    """Closed-form radial harmonic oscillator kernel.

    K = m w sqrt(z z') / sinh(w t) * exp(-(m w / 2)(z^2 + z'^2) coth(w t))
        * I_order(m w z z' / sinh(w t)),
    the building block both model propagators reduce to (3/2: mass 4/eps^2
    and w = kappa theta / 2; Heston: mass 4/sigma^2 and the l,p-dependent
    frequency).
    """
    if z_from <= 0 or z_to <= 0:
        raise DomainError("endpoints must be positive")
    if t <= 0:
        raise DomainError("t must be positive")
    omega = complex(omega)
    m = mass_scale
    wt = omega * t
    q = cmath.exp(-2.0 * wt)
    om = 1.0 - q
    coth = (1.0 + q) / om
    inv_sinh = 2.0 * cmath.exp(-wt) / om
    arg = m * omega * z_from * z_to * inv_sinh
    bm, be = impl.besseli_me(complex(order), arg)
    expo = (-0.5 * m * omega * (z_from**2 + z_to**2) * coth) + be
    pref = m * omega * math.sqrt(z_from * z_to) * inv_sinh
    return complex(pref * bm * cmath.exp(complex(min(expo.real, 700.0), expo.imag)))
