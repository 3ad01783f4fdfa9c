"""
Free isotropic alpha-stable heat kernel.

Convention: the semigroup has Fourier symbol exp(-t|xi|^alpha). The density
is computed by subordination,

    p(t, x) = int_0^inf (4 pi s)^(-d/2) exp(-|x|^2 / (4 s)) g(t, s) ds,

where g is the one-sided (alpha/2)-stable subordinator density with Laplace
transform exp(-t lambda^(alpha/2)), itself evaluated with Zolotarev's single
integral representation.
"""

import logging
import math
from typing import Tuple

import numpy as np
from scipy import integrate, special

from src.errors import AccuracyError, DomainError
from src.stable.params import QuadratureConfig, StableParams

logger = logging.getLogger(__name__)

DEFAULT_QUAD = QuadratureConfig()


def _check_time(t: float) -> None:
    if not t > 0.0:
        raise DomainError(f"Time t={t} must be positive")


def _quad(func, a: float, b: float, quad: QuadratureConfig, what: str, points=None) -> float:
    """Adaptive Gauss-Kronrod with an accuracy check."""
    value, error = integrate.quad(
        func, a, b,
        epsabs=quad.abs_tol,
        epsrel=quad.rel_tol,
        limit=quad.limit,
        points=points,
    )
    allowed = max(quad.rel_tol * abs(value), quad.abs_tol) * quad.slack
    if not np.isfinite(value) or error > allowed:
        raise AccuracyError(f"Quadrature for {what} did not converge", error, allowed)
    return value


def zolotarev_log_a(u: np.ndarray, a: float) -> np.ndarray:
    """Logarithm of Zolotarev's function A(u) for index a in (0, 1)."""
    u = np.asarray(u, dtype=float)
    with np.errstate(divide='ignore', invalid='ignore'):
        return (a * np.log(np.sin(a * u))
                + (1.0 - a) * np.log(np.sin((1.0 - a) * u))
                - np.log(np.sin(u))) / (1.0 - a)


def _unit_subordinator_density(a: float, s: float, quad: QuadratureConfig) -> float:
    """g_a(1, s) via the Zolotarev integral."""
    if s <= 0.0:
        return 0.0
    power = a / (1.0 - a)
    xs = s ** (-power)

    def integrand(u: float) -> float:
        log_a = zolotarev_log_a(u, a)
        if not np.isfinite(log_a):
            return 0.0
        return math.exp(log_a - math.exp(log_a) * xs)

    inner = _quad(integrand, 0.0, math.pi, quad, 'subordinator density')
    return a / (1.0 - a) * s ** (-1.0 / (1.0 - a)) / math.pi * inner


def subordinator_density(alpha_half: float, t: float, s: float,
                         quad: QuadratureConfig = DEFAULT_QUAD) -> float:
    """
    Density of the one-sided stable subordinator S_t at s.

    Args:
        alpha_half: index in (0, 1)
        t: time
        s: evaluation point

    Returns:
        float: g(t, s) with E exp(-lambda S_t) = exp(-t lambda^alpha_half)
    """
    if not (0.0 < alpha_half < 1.0):
        raise DomainError(f"Subordinator index {alpha_half} outside (0, 1)")
    _check_time(t)
    scale = t ** (1.0 / alpha_half)
    return _unit_subordinator_density(alpha_half, s / scale, quad) / scale


def _subordinated_integral(params: StableParams, rho: float, weight_power: int,
                           quad: QuadratureConfig) -> float:
    """
    int (4 pi s)^(-d/2) exp(-rho^2/(4s)) (2s)^(-weight_power) g(1, s) ds
    on log-substituted s.
    """
    a = params.alpha / 2.0
    d = params.d
    inner_quad = QuadratureConfig(rel_tol=min(quad.rel_tol, 1e-10), abs_tol=0.0,
                                  limit=quad.limit, slack=quad.slack)

    def integrand(v: float) -> float:
        s = math.exp(v)
        gauss = (4.0 * math.pi * s) ** (-d / 2.0) * math.exp(-rho * rho / (4.0 * s))
        if gauss == 0.0:
            return 0.0
        g = _unit_subordinator_density(a, s, inner_quad)
        return gauss * g * s / (2.0 * s) ** weight_power

    v_lo = math.log(1e-5)
    v_hi = math.log(1e8 * max(1.0, rho * rho))
    hints = sorted({0.0, math.log(max(rho * rho / (2.0 * d), 1e-3))})
    return _quad(integrand, v_lo, v_hi, quad, 'free kernel', points=hints)


def eval_free_kernel(params: StableParams, t: float, r: float,
                     quad: QuadratureConfig = DEFAULT_QUAD) -> float:
    """
    Transition density p(t, x, y) for |x - y| = r.

    Args:
        params: stable parameters
        t: time > 0
        r: radial distance >= 0
        quad: accuracy configuration

    Returns:
        float: strictly positive density value
    """
    _check_time(t)
    if r < 0.0:
        raise DomainError(f"Radial distance r={r} must be non-negative")
    scale = t ** (1.0 / params.alpha)
    unit = _subordinated_integral(params, r / scale, 0, quad)
    return unit * scale ** (-params.d)


def eval_free_kernel_gradient(params: StableParams, t: float, x,
                              quad: QuadratureConfig = DEFAULT_QUAD) -> np.ndarray:
    """
    Spatial gradient of p(t, x) obtained by differentiating under the
    subordination integral: grad p(t, x) = -x G(t, |x|).
    """
    _check_time(t)
    x = np.asarray(x, dtype=float)
    if x.shape != (params.d,):
        raise DomainError(f"Point has shape {x.shape}, expected ({params.d},)")
    scale = t ** (1.0 / params.alpha)
    r = float(np.linalg.norm(x))
    factor = _subordinated_integral(params, r / scale, 1, quad) * scale ** (-params.d - 2)
    return -x * factor


def eval_rho_gamma(params: StableParams, gamma: float, t: float, x) -> np.ndarray:
    """
    Comparison function t^gamma / (|x| + t^(1/alpha))^(d + alpha).

    x may be a single point of shape (d,) or an array of points (..., d);
    t may be an array broadcasting against x.shape[:-1].
    """
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0.0)):
        raise DomainError(f"Times must be positive, got min {t.min()}")
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    return t ** gamma / (r + t ** (1.0 / params.alpha)) ** (params.d + params.alpha)


def levy_constant(params: StableParams) -> float:
    """
    Constant c_{d,alpha} of the Levy density c |z|^(-d-alpha) matching the
    symbol |xi|^alpha; also the tail constant p(1, x) ~ c |x|^(-d-alpha).
    """
    d, alpha = params.d, params.alpha
    return (alpha * 2.0 ** (alpha - 1.0) * special.gamma((d + alpha) / 2.0)
            / (math.pi ** (d / 2.0) * special.gamma(1.0 - alpha / 2.0)))


def kernel_at_origin(params: StableParams, t: float = 1.0) -> float:
    """Closed form p(t, 0) = Gamma(d/alpha) / (alpha 2^(d-1) pi^(d/2) Gamma(d/2)) t^(-d/alpha)."""
    _check_time(t)
    d, alpha = params.d, params.alpha
    unit = special.gamma(d / alpha) / (alpha * 2.0 ** (d - 1) * math.pi ** (d / 2.0)
                                       * special.gamma(d / 2.0))
    return unit * t ** (-d / alpha)


def cauchy_kernel(d: int, t: float, r: float) -> float:
    """Closed-form density for alpha = 1."""
    _check_time(t)
    const = special.gamma((d + 1) / 2.0) / math.pi ** ((d + 1) / 2.0)
    return const * t / (t * t + r * r) ** ((d + 1) / 2.0)


def cauchy_kernel_gradient(d: int, t: float, x) -> np.ndarray:
    """Gradient of the closed-form alpha = 1 density."""
    x = np.asarray(x, dtype=float)
    r2 = float(np.dot(x, x))
    const = special.gamma((d + 1) / 2.0) / math.pi ** ((d + 1) / 2.0)
    return -const * t * (d + 1) * x / (t * t + r2) ** ((d + 3) / 2.0)


def free_kernel_fourier_bessel(params: StableParams, t: float, r: float,
                               limit: int = 1000) -> float:
    """
    Cross-check oracle: radial Fourier inversion
    p(t, r) = (2 pi)^(-d/2) r^(1-d/2) int_0^inf e^(-t k^alpha) k^(d/2) J_(d/2-1)(k r) dk.
    """
    _check_time(t)
    d, alpha = params.d, params.alpha
    if r == 0.0:
        return kernel_at_origin(params, t)
    nu = d / 2.0 - 1.0
    cutoff = (40.0 / t) ** (1.0 / alpha)

    def integrand(k: float) -> float:
        return math.exp(-t * k ** alpha) * k ** (d / 2.0) * special.jv(nu, k * r)

    value, _ = integrate.quad(integrand, 0.0, cutoff, limit=limit, epsabs=1e-13, epsrel=1e-10)
    return value * (2.0 * math.pi) ** (-d / 2.0) * r ** (1.0 - d / 2.0)


def scaled_arguments(params: StableParams, t: float, r: np.ndarray) -> Tuple[float, np.ndarray]:
    """Return (t^(1/alpha), r / t^(1/alpha)) for the scaling p(t,r) = t^(-d/alpha) p(1, r t^(-1/alpha))."""
    _check_time(t)
    scale = t ** (1.0 / params.alpha)
    return scale, np.asarray(r, dtype=float) / scale
