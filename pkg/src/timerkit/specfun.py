"""Complex-valued special functions used by the propagators and kernels.

Everything here is deterministic, stateless and safe for concurrent use.
``complex`` is used as the complex-value type throughout; inputs must be
finite, and results that would overflow a double raise
:class:`~timerkit.errors.OverflowSignal` instead of returning ``inf``.

Evaluation strategy (the standard one for these functions):

* ``gamma_c`` / ``log_gamma_c``: Lanczos rational approximation
  (g = 607/128, 15 terms, ~1e-15 ambient accuracy) with reflection /
  recurrence for Re z < 1/2.
* ``bessel_i``: power series for |z| <= 120 (restricted to arguments where
  the series does not cancel), Hankel asymptotics (DLMF 10.40.5) for large
  arguments of moderate order, uniform Debye expansion (DLMF 10.41.3) when
  order and argument are both large.
* ``hyp1f1``: Taylor series after a Kummer transformation for Re z < 0;
  large-argument expansion (DLMF 13.7) for oscillatory arguments.
* Whittaker functions via their Kummer/Tricomi representations.
"""

import cmath
import math

from ._backend import impl
from .errors import DomainError, NoConvergenceError, OverflowSignal, PoleError

__all__ = [
    "gamma_c",
    "log_gamma_c",
    "bessel_i",
    "hyp1f1",
    "whittaker_m",
    "whittaker_w",
]

_MAX_EXP = 709.0


def _check_finite(name, z):
    z = complex(z)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise DomainError(f"{name} must be finite, got {z}")
    return z


def _is_nonpositive_integer(z, tol=0.0):
    n = round(z.real)
    return n <= 0 and abs(z - n) <= tol


def log_gamma_c(z):
    """Principal-branch log Gamma(z).

    Satisfies exp(log_gamma_c(z)) == gamma_c(z) wherever the latter is
    representable.  On the negative real axis (the branch cut) the imaginary
    part is 0 or pi according to the sign of Gamma(z).
    """
    z = _check_finite("z", z)
    if z.imag == 0.0 and _is_nonpositive_integer(z):
        raise PoleError(f"log_gamma_c pole at z={z}")
    return impl.loggamma(z)


def gamma_c(z):
    """Euler gamma function for complex z."""
    z = _check_finite("z", z)
    if z.imag == 0.0 and _is_nonpositive_integer(z):
        raise PoleError(f"gamma_c pole at z={z}")
    lg = impl.loggamma(z)
    if lg.real > _MAX_EXP:
        raise OverflowSignal(
            f"|Gamma({z})| ~ exp({lg.real:.1f}) overflows; use log_gamma_c"
        )
    return cmath.exp(lg)


def bessel_i(nu, z, scaled=False):
    """Modified Bessel function of the first kind, I_nu(z), principal branch.

    With ``scaled=True`` returns ``exp(-Re z) * I_nu(z)``, which stays
    bounded for large real arguments and is the variant used inside all
    Bromwich integrands.
    """
    nu = _check_finite("nu", nu)
    z = _check_finite("z", z)
    m, e = impl.besseli_me(nu, z)
    if scaled:
        e = e - z.real
    if e > _MAX_EXP:
        raise OverflowSignal(
            f"I_{nu}({z}) ~ exp({e:.1f}) overflows; use scaled=True"
        )
    if e < -745.0:
        return 0.0j
    return m * cmath.exp(e)


def _hyp1f1_me_checked(a, b, z):
    try:
        return impl.hyp1f1_me(a, b, z)
    except RuntimeError as exc:
        raise NoConvergenceError(str(exc)) from None


_B_POLE_TOL = 1e-6


def hyp1f1(a, b, z):
    """Confluent hypergeometric function 1F1(a; b; z).

    ``b`` within 1e-6 of a non-positive integer is handled by evaluating at
    b +- 1e-6 and averaging, which removes the reflection instability while
    agreeing with the analytic value to the accuracy the pricing integrands
    need; exactly at the pole a :class:`PoleError` is raised.
    """
    a = _check_finite("a", a)
    b = _check_finite("b", b)
    z = _check_finite("z", z)
    if _is_nonpositive_integer(b):
        raise PoleError(f"hyp1f1 parameter pole at b={b}")
    if _is_nonpositive_integer(b, tol=_B_POLE_TOL):
        n = round(b.real)
        m1, e1 = _hyp1f1_me_checked(a, n + _B_POLE_TOL, z)
        m2, e2 = _hyp1f1_me_checked(a, n - _B_POLE_TOL, z)
        e = max(e1, e2)
        m = 0.5 * (m1 * cmath.exp(e1 - e) + m2 * cmath.exp(e2 - e))
    else:
        m, e = _hyp1f1_me_checked(a, b, z)
    if e > _MAX_EXP:
        raise OverflowSignal(f"1F1({a};{b};{z}) ~ exp({e:.1f}) overflows")
    if e < -745.0:
        return 0.0j
    return m * cmath.exp(e)


def _tricomi_u_me(a, b, z):
    """Tricomi U(a; b; z) as (mantissa, exponent), generic non-integer b."""
    lg = impl.loggamma
    m1, e1 = _hyp1f1_me_checked(a, b, z)
    l1 = lg(1.0 - b) - lg(a - b + 1.0)
    m2, e2 = _hyp1f1_me_checked(a - b + 1.0, 2.0 - b, z)
    l2 = lg(b - 1.0) - lg(a) + (1.0 - b) * cmath.log(z)
    t1 = l1 + e1
    t2 = l2 + e2
    e = max(t1.real, t2.real)
    m = m1 * cmath.exp(t1 - e) + m2 * cmath.exp(t2 - e)
    return m, e


def whittaker_m(kappa, mu, z):
    """Whittaker function M_{kappa,mu}(z), principal branch of z^(mu+1/2)."""
    kappa = _check_finite("kappa", kappa)
    mu = _check_finite("mu", mu)
    z = _check_finite("z", z)
    if z == 0.0:
        return 0.0j
    b = 1.0 + 2.0 * mu
    if _is_nonpositive_integer(b):
        raise PoleError(f"whittaker_m pole at 1+2*mu={b}")
    m, e = _hyp1f1_me_checked(mu - kappa + 0.5, b, z)
    lead = -0.5 * z + (mu + 0.5) * cmath.log(z)
    e_tot = e + lead.real
    if e_tot > _MAX_EXP:
        raise OverflowSignal("whittaker_m overflows")
    if e_tot < -745.0:
        return 0.0j
    return m * cmath.exp(complex(e_tot, lead.imag))


def whittaker_w(kappa, mu, z):
    """Whittaker function W_{kappa,mu}(z) via the Tricomi representation.

    1+2*mu within 1e-6 of an integer is handled by evaluating at mu shifted
    by +-5e-7 and averaging (same rationale as in :func:`hyp1f1`).
    """
    kappa = _check_finite("kappa", kappa)
    mu = _check_finite("mu", mu)
    z = _check_finite("z", z)
    if z == 0.0:
        raise DomainError("whittaker_w requires z != 0")

    def _eval(mu_):
        b = 1.0 + 2.0 * mu_
        m, e = _tricomi_u_me(mu_ - kappa + 0.5, b, z)
        lead = -0.5 * z + (mu_ + 0.5) * cmath.log(z)
        return m, e + lead.real, lead.imag

    b = 1.0 + 2.0 * mu
    n = round(b.real)
    if abs(b - n) <= _B_POLE_TOL:
        if abs(b - n) == 0.0 and b.imag == 0.0:
            d = 5e-7
            m1, e1, p1 = _eval(mu + d)
            m2, e2, p2 = _eval(mu - d)
        else:
            d = 5e-7
            m1, e1, p1 = _eval(mu + d)
            m2, e2, p2 = _eval(mu - d)
        e = max(e1, e2)
        m = 0.5 * (m1 * cmath.exp(complex(e1 - e, p1)) + m2 * cmath.exp(complex(e2 - e, p2)))
        phase = 0.0
    else:
        m, e, phase = _eval(mu)
    if e > _MAX_EXP:
        raise OverflowSignal("whittaker_w overflows")
    if e < -745.0:
        return 0.0j
    return m * cmath.exp(complex(e, phase))
