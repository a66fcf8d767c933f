"""
Closed-form scalar mathematics for the correlation expansion.

Gaussian cdf and its higher derivatives (via probabilists' Hermite
polynomials), Black-Scholes call pricing in log-spot coordinates, and the
(d^3_x - d^2_x) kernel of the call price.

Every function broadcasts over numpy arrays; scalar input gives a float.
"""

import logging
import math
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
from scipy import special

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

SQRT_2PI = math.sqrt(2.0 * math.pi)


class InvalidInputError(ValueError):
    """Raised when closed-form inputs violate their preconditions."""


class Config:
    """Numerical limits for the closed forms."""

    # Hermite recurrence is evaluated without caching up to this order
    MAX_STABLE_DERIVATIVE = 12


@dataclass(frozen=True)
class BsInputs:
    """Black-Scholes inputs in log-spot coordinates.

    sigma may be an array (one volatility per simulated path).
    """
    t: float
    x: float
    sigma: ArrayLike
    K: float
    r: float
    T: float

    @property
    def tau(self) -> float:
        return self.T - self.t

    def validate(self) -> None:
        if not self.T > self.t:
            raise InvalidInputError(f"maturity T={self.T} must exceed start t={self.t}")
        if not self.K > 0:
            raise InvalidInputError(f"strike K={self.K} must be positive")
        if not np.all(np.asarray(self.sigma) > 0):
            raise InvalidInputError("sigma must be strictly positive")
        if not math.isfinite(self.r):
            raise InvalidInputError(f"rate r={self.r} must be finite")


def _out(value: np.ndarray) -> ArrayLike:
    if np.ndim(value) == 0:
        return float(value)
    return value


def gaussian_cdf(tau: ArrayLike) -> ArrayLike:
    """Standard Gaussian cumulative distribution function N(tau)."""
    return _out(special.ndtr(np.asarray(tau, dtype=float)))


def gaussian_density(tau: ArrayLike) -> ArrayLike:
    """Standard Gaussian density N'(tau)."""
    tau = np.asarray(tau, dtype=float)
    return _out(np.exp(-0.5 * tau * tau) / SQRT_2PI)


def hermite_he(n: int, tau: ArrayLike) -> ArrayLike:
    """
    Probabilists' Hermite polynomial He_n by the three-term recurrence.

    He_{k+1}(tau) = tau He_k(tau) - k He_{k-1}(tau)

    Args:
        n: Polynomial order (n >= 0)
        tau: Evaluation point(s)

    Returns:
        He_n(tau)
    """
    if n < 0:
        raise InvalidInputError(f"Hermite order must be nonnegative, got {n}")
    tau = np.asarray(tau, dtype=float)
    previous = np.ones_like(tau)
    if n == 0:
        return _out(previous)
    current = tau.copy()
    for k in range(1, n):
        previous, current = current, tau * current - k * previous
    return _out(current)


def gaussian_deriv(n: int, tau: ArrayLike) -> ArrayLike:
    """
    n-th derivative of the Gaussian cdf.

    Uses N^{(1+k)}(tau) = (-1)^k He_k(tau) N'(tau), so n = 1 is the density.

    Args:
        n: Derivative order, n >= 1
        tau: Evaluation point(s)

    Returns:
        N^{(n)}(tau)
    """
    if n < 1:
        raise InvalidInputError("gaussian_deriv needs n >= 1; use gaussian_cdf for n = 0")
    if n > Config.MAX_STABLE_DERIVATIVE:
        logger.debug(f"Gaussian derivative of order {n} beyond the tested range")
    k = n - 1
    sign = -1.0 if k % 2 else 1.0
    tau = np.asarray(tau, dtype=float)
    return _out(sign * np.asarray(hermite_he(k, tau)) * np.asarray(gaussian_density(tau)))


def d_values(b: BsInputs) -> Tuple[ArrayLike, ArrayLike]:
    """
    Black-Scholes d1 and d2 in log-spot coordinates.

    Args:
        b: Black-Scholes inputs

    Returns:
        Tuple (d1, d2)
    """
    b.validate()
    sigma = np.asarray(b.sigma, dtype=float)
    vol_sqrt_tau = sigma * math.sqrt(b.tau)
    d2 = (b.x - math.log(b.K) + (b.r - 0.5 * sigma * sigma) * b.tau) / vol_sqrt_tau
    d1 = d2 + vol_sqrt_tau
    return _out(d1), _out(d2)


def discount_factor(r: float, tau: float) -> float:
    return math.exp(-r * tau)


def bs_call_price(b: BsInputs) -> ArrayLike:
    """
    European call price e^x N(d1) - K e^{-r(T-t)} N(d2).

    Args:
        b: Black-Scholes inputs (sigma may be a per-path array)

    Returns:
        Call price(s)
    """
    d1, d2 = d_values(b)
    spot = math.exp(b.x)
    strike_pv = b.K * discount_factor(b.r, b.tau)
    price = spot * special.ndtr(np.asarray(d1)) - strike_pv * special.ndtr(np.asarray(d2))
    return _out(price)


def bs_d2_density_term(b: BsInputs) -> ArrayLike:
    """The bracket [d2 N'(d2)] evaluated at the Black-Scholes inputs."""
    _, d2 = d_values(b)
    d2 = np.asarray(d2)
    return _out(d2 * np.asarray(gaussian_density(d2)))


def bs_h_kernel(b: BsInputs) -> ArrayLike:
    """
    (d^3_x - d^2_x) of the call price, in closed form.

    Equals -K e^{-r(T-t)} d2 N'(d2) / (sigma^2 (T-t)).

    Args:
        b: Black-Scholes inputs

    Returns:
        Kernel value(s)
    """
    sigma = np.asarray(b.sigma, dtype=float)
    bracket = np.asarray(bs_d2_density_term(b))
    strike_pv = b.K * discount_factor(b.r, b.tau)
    return _out(-strike_pv * bracket / (sigma * sigma * b.tau))
