"""
Monte Carlo estimators for the correlation power-series coefficients.

Three families share one batch simulated at rho = 0:

- AS / ExpA: Hull-White type representations through Black-Scholes
  functionals of the integrated variance (g0, g1, u2 and the general u_n).
- ExpM: Malliavin weights Lambda_1, Lambda_2 applied to the payoff,
  optionally localized around the strike.
- AS closed form: g0 and g1 with the integrated variance replaced by its
  sample mean.

Coefficients are stored as derivatives u_k; series_price divides by k!.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Callable, Optional, Tuple

import numpy as np

from core_math import BsInputs, bs_call_price, bs_d2_density_term, d_values, discount_factor, gaussian_deriv
from path_engine import PathBatch, PathFunctionals

logger = logging.getLogger(__name__)

Payoff = Callable[[np.ndarray], np.ndarray]


class EstimatorError(ValueError):
    """Raised for empty batches, unsupported orders or missing coefficients."""


class Config:
    """Estimator limits and policies."""

    MAX_XI_ORDER = 8
    RHO_WARNING = 0.8
    DEFAULT_DELTA_FACTOR = 0.01
    GRID_TOLERANCE = 1e-9


class Method(Enum):
    """Series families."""
    EXP_A = 'expA'
    EXP_M = 'expM'
    AS_CLOSED = 'as_closed'


@dataclass(frozen=True)
class EstimatorResult:
    """Sample mean with its standard error."""
    mean: float
    stderr: float
    n_paths: int
    seed: Optional[int] = None

    @classmethod
    def from_samples(cls, samples: np.ndarray, seed: Optional[int] = None) -> 'EstimatorResult':
        samples = np.asarray(samples, dtype=float).ravel()
        n = samples.size
        if n == 0:
            raise EstimatorError("Cannot estimate from zero samples")
        if not np.all(np.isfinite(samples)):
            raise EstimatorError(f"{int(np.count_nonzero(~np.isfinite(samples)))} non-finite samples")
        stderr = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(mean=float(np.mean(samples)), stderr=stderr, n_paths=n, seed=seed)

    def scaled(self, factor: float) -> 'EstimatorResult':
        return EstimatorResult(self.mean * factor, self.stderr * abs(factor), self.n_paths, self.seed)


@dataclass(frozen=True)
class ExpansionCoefficients:
    """
    Coefficient estimates for one strike from one batch.

    g0, g1 and u2 feed the ExpA series; lam1, lam2 are the ExpM
    derivatives u_1, u_2; g0_bar, g1_bar are the AS closed-form values.
    """
    K: float
    g0: EstimatorResult
    g1: Optional[EstimatorResult] = None
    u2: Optional[EstimatorResult] = None
    lam1: Optional[EstimatorResult] = None
    lam2: Optional[EstimatorResult] = None
    g0_bar: Optional[float] = None
    g1_bar: Optional[float] = None
    localized: bool = False

    @property
    def n_paths(self) -> int:
        return self.g0.n_paths

    @property
    def seed(self) -> Optional[int]:
        return self.g0.seed


@dataclass(frozen=True)
class SeriesPrice:
    """Truncated series value; stderr is an upper bound when correlated."""
    value: float
    stderr: float
    order: int
    method: Method
    correlated: bool = True


@dataclass(frozen=True)
class Localizer:
    """
    C^2 smoothing of the call payoff over [K - delta, K + delta].

    Phi'' is the bump 3/(4 delta) - 3 (S - K)^2 / (4 delta^3) inside the band.
    """
    K: float
    delta: float

    @classmethod
    def for_strike(cls, K: float, delta_factor: float = Config.DEFAULT_DELTA_FACTOR) -> Optional['Localizer']:
        """Localizer with delta = delta_factor * K, or None when delta <= 0."""
        delta = delta_factor * K
        if delta <= 0:
            return None
        return cls(K=K, delta=delta)

    def _shift(self, s):
        z = np.asarray(s, dtype=float) - self.K
        return z, np.abs(z) <= self.delta, z > self.delta

    def phi(self, s) -> np.ndarray:
        z, band, above = self._shift(s)
        d = self.delta
        inner = 3.0 * (z + d) ** 2 / (8.0 * d) - (z ** 4 - d ** 4) / (16.0 * d ** 3) - (z + d) / 4.0
        return np.where(band, inner, np.where(above, z, 0.0))

    def phi_prime(self, s) -> np.ndarray:
        z, band, above = self._shift(s)
        d = self.delta
        inner = 3.0 * (z + d) / (4.0 * d) - (z ** 3 + d ** 3) / (4.0 * d ** 3)
        return np.where(band, inner, np.where(above, 1.0, 0.0))

    def phi_second(self, s) -> np.ndarray:
        z, band, _ = self._shift(s)
        d = self.delta
        return np.where(band, 3.0 / (4.0 * d) - 3.0 * z * z / (4.0 * d ** 3), 0.0)


def call_payoff(K: float) -> Payoff:
    return lambda s: np.maximum(np.asarray(s, dtype=float) - K, 0.0)


def put_payoff(K: float) -> Payoff:
    return lambda s: np.maximum(K - np.asarray(s, dtype=float), 0.0)


def digital_payoff(K: float) -> Payoff:
    return lambda s: (np.asarray(s, dtype=float) > K).astype(float)


def _usable(batch: PathBatch, t: float, T: float) -> PathBatch:
    if len(batch) == 0:
        raise EstimatorError("Empty batch")
    if abs(batch.grid.duration - (T - t)) > Config.GRID_TOLERANCE:
        raise EstimatorError(
            f"Batch grid covers {batch.grid.duration} years but T - t = {T - t}"
        )
    usable = batch.valid_only()
    if len(usable) == 0:
        raise EstimatorError("Batch has no valid paths")
    return usable


def _bs_at_paths(batch: PathBatch, K: float, r: float, t: float, T: float, x: float) -> BsInputs:
    sigma = np.sqrt(batch.m_total / (T - t))
    return BsInputs(t=t, x=x, sigma=sigma, K=K, r=r, T=T)


def estimate_g0(batch: PathBatch, K: float, r: float, t: float, T: float, x: float) -> EstimatorResult:
    """Mean of Black-Scholes prices at the per-path volatility sqrt(<M>/(T-t))."""
    b = _usable(batch, t, T)
    prices = np.atleast_1d(bs_call_price(_bs_at_paths(b, K, r, t, T, x)))
    return EstimatorResult.from_samples(prices, batch.seed)


def _g1_samples(b: PathBatch, K: float, r: float, t: float, T: float, x: float) -> np.ndarray:
    bracket = np.atleast_1d(bs_d2_density_term(_bs_at_paths(b, K, r, t, T, x)))
    return -K * discount_factor(r, T - t) * bracket * b.c_total / b.m_total


def estimate_g1(batch: PathBatch, K: float, r: float, t: float, T: float, x: float) -> EstimatorResult:
    """
    First-order coefficient -K e^{-r(T-t)} E[d2 N'(d2) c / <M>].

    Args:
        batch: Paths simulated at rho = 0
        K: Strike
        r: Rate
        t: Start time
        T: Maturity
        x: Log spot

    Returns:
        EstimatorResult for g1 (= u1)
    """
    b = _usable(batch, t, T)
    return EstimatorResult.from_samples(_g1_samples(b, K, r, t, T, x), batch.seed)


def _u2_samples(b: PathBatch, K: float, r: float, t: float, T: float, x: float) -> np.ndarray:
    _, d2 = d_values(_bs_at_paths(b, K, r, t, T, x))
    third = np.atleast_1d(gaussian_deriv(3, d2))
    return 2.0 * K * discount_factor(r, T - t) * b.m_total ** -1.5 * third * b.ell


def estimate_u2_expA(batch: PathBatch, K: float, r: float, t: float, T: float, x: float) -> EstimatorResult:
    """Second derivative u2 = 2K e^{-r(T-t)} E[<M>^{-3/2} N'''(d2) ell]; the series uses u2 / 2."""
    b = _usable(batch, t, T)
    return EstimatorResult.from_samples(_u2_samples(b, K, r, t, T, x), batch.seed)


@lru_cache(maxsize=None)
def _compositions(total: int, parts: int) -> Tuple[Tuple[int, ...], ...]:
    """Ordered tuples of `parts` positive integers summing to `total`."""
    if parts == 1:
        return ((total,),)
    out = []
    for cut in itertools.combinations(range(1, total), parts - 1):
        bounds = (0,) + cut + (total,)
        out.append(tuple(bounds[i + 1] - bounds[i] for i in range(parts)))
    return tuple(out)


def _central_binomial(n: int) -> float:
    return math.comb(2 * n, n) / 4.0 ** n


def _xi_grid(k: int, q: np.ndarray, i_s: np.ndarray, m_total: np.ndarray, d2: np.ndarray) -> np.ndarray:
    """
    Xi_k on arrays of grid nodes.

    q = <M>_[t,s] / <M>_[t,T], i_s = I_s; m_total and d2 broadcast against them.
    """
    if k < 0 or k > Config.MAX_XI_ORDER:
        raise EstimatorError(f"Xi order must lie in [0, {Config.MAX_XI_ORDER}], got {k}")
    scaled_i = i_s / np.sqrt(m_total)

    def d_term(h: int) -> np.ndarray:
        n = h // 2
        factor = _central_binomial(n) * q ** n
        return factor * d2 if h % 2 == 0 else factor * scaled_i

    d_terms = {h: d_term(h) for h in range(1, k + 1)}
    n_derivs = {nu: gaussian_deriv(2 + nu, d2) for nu in range(0, k + 1)}

    def g2(ell: int) -> np.ndarray:
        if ell == 0:
            return n_derivs[0] * np.ones_like(q)
        total = np.zeros_like(q)
        for nu in range(1, ell + 1):
            inner = np.zeros_like(q)
            for comp in _compositions(ell, nu):
                product = np.ones_like(q)
                for h in comp:
                    product = product * d_terms[h]
                inner = inner + product
            total = total + n_derivs[nu] * inner / math.factorial(nu)
        return total

    xi = np.zeros_like(q)
    for j in range(k + 1):
        ell = k - j
        if ell % 2:
            continue
        xi = xi + q ** (ell // 2) * g2(j)
    return math.factorial(k) * xi


def compute_xi_k(k: int, p: PathFunctionals, s_index: int, K: float, r: float,
                 t: float, T: float, x: float) -> float:
    """
    Xi_k(s) = k! sum_j G_{1,k-j}(s) G_{2,j}(s) at one grid node of one path.

    Args:
        k: Order, 0 <= k <= 8
        p: Path functionals
        s_index: Grid node index into m_running / i_running
        K: Strike
        r: Rate
        t: Start time
        T: Maturity
        x: Log spot

    Returns:
        Xi_k at that node
    """
    if not 0 <= s_index < len(p.m_running):
        raise EstimatorError(f"s_index {s_index} outside grid of {len(p.m_running)} nodes")
    sigma = math.sqrt(p.m_total / (T - t))
    _, d2 = d_values(BsInputs(t=t, x=x, sigma=sigma, K=K, r=r, T=T))
    q = np.asarray(p.m_running[s_index] / p.m_total)
    value = _xi_grid(k, q, np.asarray(p.i_running[s_index]), np.asarray(p.m_total), np.asarray(d2))
    return float(value)


def estimate_un_general(n: int, batch: PathBatch, K: float, r: float, t: float,
                        T: float, x: float) -> EstimatorResult:
    """
    u_n = n K e^{-r(T-t)} E[<M>^{-1} sum_k Xi_{n-1}(s_k) psi_k dt], n >= 1.

    Returns the derivative u_n; divide by n! for the Taylor coefficient.
    """
    if n < 1 or n > Config.MAX_XI_ORDER + 1:
        raise EstimatorError(f"order n must lie in [1, {Config.MAX_XI_ORDER + 1}], got {n}")
    b = _usable(batch, t, T)
    n_steps = b.grid.n_steps
    _, d2 = d_values(_bs_at_paths(b, K, r, t, T, x))
    d2 = np.atleast_1d(d2)[:, None]
    m_total = b.m_total[:, None]
    q = b.m_running[:, :n_steps] / m_total
    xi = _xi_grid(n - 1, q, b.i_running[:, :n_steps], m_total, d2)
    integral = (xi * b.psi).sum(axis=1) * b.grid.dt
    samples = n * K * discount_factor(r, T - t) * integral / b.m_total
    return EstimatorResult.from_samples(samples, batch.seed)


def estimate_as_closed_form(vol_batch: PathBatch, K: float, r: float, t: float,
                            T: float, x: float) -> Tuple[float, float]:
    """
    AS approximations with <M> and c replaced by their sample means.

    Returns:
        Tuple (g0_bar, g1_bar)
    """
    b = _usable(vol_batch, t, T)
    m_bar = float(np.mean(b.m_total))
    c_bar = float(np.mean(b.c_total))
    if not m_bar > 0:
        raise EstimatorError(f"mean integrated variance must be positive, got {m_bar}")
    bs = BsInputs(t=t, x=x, sigma=math.sqrt(m_bar / (T - t)), K=K, r=r, T=T)
    g0_bar = bs_call_price(bs)
    g1_bar = -K * discount_factor(r, T - t) * bs_d2_density_term(bs) * c_bar / m_bar
    return float(g0_bar), float(g1_bar)


def _weights(u, v, zint, inv_f2, tau):
    lam1 = u * zint / tau
    lam2 = u * u / tau ** 2 * (zint * zint - inv_f2) - v * zint / tau + 1.0
    return lam1, lam2


def malliavin_weights(p: PathFunctionals, T_minus_t: float) -> Tuple[float, float]:
    """Closed-form weights (Lambda_1, Lambda_2) of one path."""
    values = (p.u_int, p.v_int, p.zint, p.inv_f2)
    if not all(math.isfinite(v) for v in values) or not T_minus_t > 0:
        raise EstimatorError("Malliavin weights need finite path integrals and T - t > 0")
    lam1, lam2 = _weights(*values, T_minus_t)
    return float(lam1), float(lam2)


def estimate_expM(order: int, batch: PathBatch, payoff: Payoff, loc: Optional[Localizer],
                  r: float, t: float, T: float) -> EstimatorResult:
    """
    Derivative of the price in rho at 0 through Malliavin weights.

    Args:
        order: 1 or 2
        batch: Paths simulated at rho = 0
        payoff: Vectorized terminal payoff h(S)
        loc: Localizer or None for the plain weighted estimator
        r: Rate
        t: Start time
        T: Maturity

    Returns:
        EstimatorResult for u_order (not divided by order!)
    """
    if order not in (1, 2):
        raise EstimatorError(f"ExpM order must be 1 or 2, got {order}")
    b = _usable(batch, t, T)
    tau = T - t
    lam1, lam2 = _weights(b.u_int, b.v_int, b.zint, b.inv_f2, tau)
    weight = lam1 if order == 1 else lam2
    s_T = np.exp(b.xi_hat_T)
    h = np.asarray(payoff(s_T), dtype=float)

    if loc is None:
        samples = h * weight
    else:
        u = b.u_int
        residual = (h - loc.phi(s_T)) * weight
        if order == 1:
            samples = residual + loc.phi_prime(s_T) * s_T * u
        else:
            samples = residual + loc.phi_second(s_T) * s_T * s_T * u * u \
                + loc.phi_prime(s_T) * s_T * (u * u - b.v_int)
    return EstimatorResult.from_samples(discount_factor(r, tau) * samples, batch.seed)


def estimate_coefficients(batch: PathBatch, K: float, r: float, t: float, T: float, x: float,
                          localizer: Optional[Localizer] = None,
                          payoff: Optional[Payoff] = None) -> ExpansionCoefficients:
    """
    Every coefficient of every family for one strike on one batch.

    Args:
        batch: Paths simulated at rho = 0
        K: Strike
        r: Rate
        t: Start time
        T: Maturity
        x: Log spot
        localizer: Used by ExpM when given
        payoff: ExpM payoff, the call by default

    Returns:
        ExpansionCoefficients
    """
    payoff = payoff or call_payoff(K)
    g0_bar, g1_bar = estimate_as_closed_form(batch, K, r, t, T, x)
    coeffs = ExpansionCoefficients(
        K=K,
        g0=estimate_g0(batch, K, r, t, T, x),
        g1=estimate_g1(batch, K, r, t, T, x),
        u2=estimate_u2_expA(batch, K, r, t, T, x),
        lam1=estimate_expM(1, batch, payoff, localizer, r, t, T),
        lam2=estimate_expM(2, batch, payoff, localizer, r, t, T),
        g0_bar=g0_bar,
        g1_bar=g1_bar,
        localized=localizer is not None,
    )
    logger.debug(
        f"K={K}: g0={coeffs.g0.mean:.6f} g1={coeffs.g1.mean:.6f} u2={coeffs.u2.mean:.6f} "
        f"lam1={coeffs.lam1.mean:.6f} lam2={coeffs.lam2.mean:.6f}"
    )
    return coeffs


def series_price(coeffs: ExpansionCoefficients, rho: float, order: int,
                 method) -> SeriesPrice:
    """
    Truncated series sum_{k <= order} g_k rho^k.

    Args:
        coeffs: Coefficient estimates
        rho: Correlation, |rho| < 1
        order: 0, 1 or 2 (0 or 1 for as_closed)
        method: Method or its value ('expA', 'expM', 'as_closed')

    Returns:
        SeriesPrice; the standard error adds the terms in quadrature
    """
    method = Method(method)
    if not abs(rho) < 1.0:
        raise EstimatorError(f"correlation must lie in (-1, 1), got {rho}")
    if abs(rho) > Config.RHO_WARNING:
        logger.warning(f"Evaluating the series at |rho|={abs(rho)} > {Config.RHO_WARNING}; convergence is not guaranteed")

    if method is Method.AS_CLOSED:
        terms = [coeffs.g0_bar, coeffs.g1_bar]
        if order > 1 or any(term is None for term in terms[:order + 1]):
            raise EstimatorError(f"as_closed supports orders 0 and 1, got {order}")
        value = sum(terms[k] * rho ** k for k in range(order + 1))
        return SeriesPrice(value=float(value), stderr=0.0, order=order, method=method, correlated=False)

    if method is Method.EXP_A:
        available = [coeffs.g0, coeffs.g1, coeffs.u2]
    else:
        available = [coeffs.g0, coeffs.lam1, coeffs.lam2]
    if order < 0 or order >= len(available) or any(c is None for c in available[:order + 1]):
        raise EstimatorError(f"{method.value} coefficients not available up to order {order}")

    value = 0.0
    variance = 0.0
    for k in range(order + 1):
        term = available[k].scaled(rho ** k / math.factorial(k))
        value += term.mean
        variance += term.stderr ** 2
    return SeriesPrice(value=value, stderr=math.sqrt(variance), order=order, method=method,
                       correlated=order > 0)
