"""
Reference prices and derivative oracles.

- heston_cf_price: semi-analytic Heston call by Gil-Pelaez inversion of the
  branch-cut-stable characteristic function.
- highres_mc_price / highres_mc_strip: full-correlation Euler Monte Carlo.
- fd_rho_derivative: central differences in rho on common random numbers.
- bs_benchmark: Black-Scholes for the constant model.
- BenchmarkCache: md5-keyed pickle files so table reruns skip 10^6-path work.
"""

import hashlib
import logging
import math
import os
import pickle
import warnings
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Dict, Optional, Sequence

import numpy as np
from scipy import integrate

from core_math import BsInputs, bs_call_price, discount_factor
from estimators import EstimatorResult
from path_engine import TimeGrid, simulate_terminal
from sv_models import ModelName, ModelParams, ModelSpec

logger = logging.getLogger(__name__)


class OracleError(RuntimeError):
    """Raised when a reference price cannot be produced."""


class BenchmarkSource(Enum):
    ANALYTIC_CF = 'analytic_cf'
    HIGHRES_MC = 'highres_mc'
    CLOSED_FORM_BS = 'closed_form_bs'


class Config:
    """Oracle settings."""

    CF_EPSABS = 1e-8
    CF_LIMIT = 500
    # below this vol-of-vol the CF integrand degenerates; use BS at the mean variance
    CF_MIN_VOL_OF_VOL = 1e-6
    HIGHRES_PATHS = 1_000_000
    HIGHRES_STEPS = 1_000
    FD_STEP = {1: 0.05, 2: 0.1}
    FD_MAX_STEP = 0.1
    CACHE_DIR = 'cache'


@dataclass(frozen=True)
class BenchmarkPrice:
    value: float
    stderr: float
    source: BenchmarkSource

    def __post_init__(self):
        if self.stderr < 0:
            raise OracleError(f"stderr must be nonnegative, got {self.stderr}")


def _heston_cf(u: complex, x: float, tau: float, r: float, params: ModelParams, rho: float) -> complex:
    """Characteristic function of ln S_T in the form that keeps the logarithm continuous."""
    kappa, theta, sigma, v0 = params.b, params.a, params.c, params.v0
    iu = 1j * u
    beta = kappa - rho * sigma * iu
    d = np.sqrt(beta * beta + sigma * sigma * (iu + u * u))
    g = (beta - d) / (beta + d)
    decay = np.exp(-d * tau)
    log_term = np.log((1.0 - g * decay) / (1.0 - g))
    big_c = r * iu * tau + kappa * theta / sigma ** 2 * ((beta - d) * tau - 2.0 * log_term)
    big_d = (beta - d) / sigma ** 2 * (1.0 - decay) / (1.0 - g * decay)
    return np.exp(iu * x + big_c + big_d * v0)


def _mean_variance(params: ModelParams, tau: float) -> float:
    a, b, v0 = params.a, params.b, params.v0
    if b * tau < 1e-12:
        return v0
    return a + (v0 - a) * (1.0 - math.exp(-b * tau)) / (b * tau)


def bs_benchmark(K: float, T: float, sigma: float, params: ModelParams, t: float = 0.0) -> BenchmarkPrice:
    """Black-Scholes price for a deterministic volatility."""
    price = bs_call_price(BsInputs(t=t, x=params.x0, sigma=sigma, K=K, r=params.r, T=T))
    return BenchmarkPrice(value=float(price), stderr=0.0, source=BenchmarkSource.CLOSED_FORM_BS)


def heston_cf_price(params: ModelParams, K: float, T: float, rho: float, t: float = 0.0) -> BenchmarkPrice:
    """
    Semi-analytic Heston call price.

    Heston's kappa, theta, sigma_v map to (b, a, c) and v0 is the initial variance.

    Args:
        params: Heston parameters
        K: Strike
        T: Maturity
        rho: Correlation, |rho| < 1
        t: Valuation time

    Returns:
        BenchmarkPrice with zero stderr

    Raises:
        OracleError: If the quadrature does not converge
    """
    if not abs(rho) < 1.0:
        raise ValueError(f"correlation must lie in (-1, 1), got {rho}")
    if params.a is None or params.b is None or params.c is None:
        raise ValueError("heston_cf_price needs Heston parameters a, b, c")
    tau = T - t
    if not tau > 0 or not K > 0:
        raise ValueError(f"need T > t and K > 0, got tau={tau}, K={K}")

    if params.c < Config.CF_MIN_VOL_OF_VOL:
        sigma = math.sqrt(_mean_variance(params, tau))
        logger.debug(f"Vol-of-vol {params.c} below {Config.CF_MIN_VOL_OF_VOL}: BS at mean variance")
        price = bs_benchmark(K, T, sigma, params, t).value
        return BenchmarkPrice(value=price, stderr=0.0, source=BenchmarkSource.ANALYTIC_CF)

    x, r, log_k = params.x0, params.r, math.log(K)
    forward = math.exp(x + r * tau)

    def p1_integrand(u: float) -> float:
        phi = _heston_cf(u - 1j, x, tau, r, params, rho)
        return float(np.real(np.exp(-1j * u * log_k) * phi / (1j * u * forward)))

    def p2_integrand(u: float) -> float:
        phi = _heston_cf(u, x, tau, r, params, rho)
        return float(np.real(np.exp(-1j * u * log_k) * phi / (1j * u)))

    try:
        with warnings.catch_warnings():
            warnings.simplefilter('error', integrate.IntegrationWarning)
            i1, _ = integrate.quad(p1_integrand, 0.0, np.inf, epsabs=Config.CF_EPSABS, limit=Config.CF_LIMIT)
            i2, _ = integrate.quad(p2_integrand, 0.0, np.inf, epsabs=Config.CF_EPSABS, limit=Config.CF_LIMIT)
    except integrate.IntegrationWarning as e:
        raise OracleError(f"Heston quadrature did not converge (K={K}, T={T}, rho={rho}): {str(e)}")

    p1 = 0.5 + i1 / math.pi
    p2 = 0.5 + i2 / math.pi
    price = math.exp(x) * p1 - K * discount_factor(r, tau) * p2
    if not math.isfinite(price):
        raise OracleError(f"Heston price is not finite (K={K}, T={T}, rho={rho})")
    return BenchmarkPrice(value=price, stderr=0.0, source=BenchmarkSource.ANALYTIC_CF)


def highres_mc_strip(m: ModelSpec, rho: float, strikes: Sequence[float], T: float,
                     n_paths: int = Config.HIGHRES_PATHS, n_steps: int = Config.HIGHRES_STEPS,
                     seed: int = 0, t: float = 0.0, workers: int = 1,
                     progress: bool = False) -> Dict[float, BenchmarkPrice]:
    """
    Monte Carlo call prices for several strikes from one full-correlation simulation.

    Returns:
        Mapping strike -> BenchmarkPrice
    """
    p = m.params
    grid = TimeGrid(t=t, T=T, n_steps=n_steps)
    xi_T = simulate_terminal(m, grid, p.x0, p.v0, [rho], seed=seed, n_paths=n_paths,
                             workers=workers, r=p.r, progress=progress)[:, 0]
    s_T = np.exp(xi_T[np.isfinite(xi_T)])
    disc = discount_factor(p.r, T - t)
    prices = {}
    for K in strikes:
        result = EstimatorResult.from_samples(disc * np.maximum(s_T - K, 0.0), seed)
        prices[K] = BenchmarkPrice(value=result.mean, stderr=result.stderr, source=BenchmarkSource.HIGHRES_MC)
    return prices


def highres_mc_price(m: ModelSpec, rho: float, K: float, T: float,
                     n_paths: int = Config.HIGHRES_PATHS, n_steps: int = Config.HIGHRES_STEPS,
                     seed: int = 0, t: float = 0.0, workers: int = 1) -> BenchmarkPrice:
    """Discounted Monte Carlo mean of (S_T - K)+ under the full-correlation dynamics."""
    return highres_mc_strip(m, rho, [K], T, n_paths=n_paths, n_steps=n_steps,
                            seed=seed, t=t, workers=workers)[K]


def fd_rho_derivative(order: int, m: ModelSpec, K: float, T: float, h: Optional[float] = None,
                      seed: int = 0, n_paths: int = 10_000, n_steps: int = 500,
                      t: float = 0.0, workers: int = 1) -> EstimatorResult:
    """
    Central difference of the Monte Carlo price in rho at 0.

    The three prices u(-h), u(0), u(h) share every random number, and the
    standard error comes from the per-path differences.

    Args:
        order: 1 for (u(h) - u(-h)) / 2h, 2 for (u(h) - 2u(0) + u(-h)) / h^2
        m: Model
        K: Strike
        T: Maturity
        h: Step in (0, 0.1]; 0.05 for order 1 and 0.1 for order 2 by default
        seed: Base seed
        n_paths: Number of paths
        n_steps: Grid steps
        t: Valuation time
        workers: Simulation threads

    Returns:
        EstimatorResult of the derivative u_order
    """
    if order not in (1, 2):
        raise ValueError(f"finite-difference order must be 1 or 2, got {order}")
    h = Config.FD_STEP[order] if h is None else h
    if not 0 < h <= Config.FD_MAX_STEP:
        raise ValueError(f"step h must lie in (0, {Config.FD_MAX_STEP}], got {h}")
    p = m.params
    grid = TimeGrid(t=t, T=T, n_steps=n_steps)
    xi_T = simulate_terminal(m, grid, p.x0, p.v0, [-h, 0.0, h], seed=seed,
                             n_paths=n_paths, workers=workers, r=p.r)
    xi_T = xi_T[np.all(np.isfinite(xi_T), axis=1)]
    payoffs = discount_factor(p.r, T - t) * np.maximum(np.exp(xi_T) - K, 0.0)
    down, mid, up = payoffs[:, 0], payoffs[:, 1], payoffs[:, 2]
    if order == 1:
        samples = (up - down) / (2.0 * h)
    else:
        samples = (up - 2.0 * mid + down) / (h * h)
    return EstimatorResult.from_samples(samples, seed)


def percentage_error(estimate: float, truth: BenchmarkPrice) -> float:
    """|estimate - truth| / truth * 100."""
    value = truth.value if isinstance(truth, BenchmarkPrice) else float(truth)
    if not value > 0:
        raise OracleError(f"benchmark must be positive for a percentage error, got {value}")
    return abs(estimate - value) / value * 100.0


class BenchmarkCache:
    """
    Disk cache of benchmark prices.

    Keys are md5 digests of the full benchmark description; values are
    pickled BenchmarkPrice objects, one file per key.
    """

    def __init__(self, cache_dir: Optional[str] = None, refresh: bool = False, enabled: bool = True):
        self.cache_dir = cache_dir or os.getenv('PRICE_CACHE_DIR', Config.CACHE_DIR)
        self.refresh = refresh
        self.enabled = enabled
        if self.enabled:
            os.makedirs(self.cache_dir, exist_ok=True)

    @staticmethod
    def make_key(m: ModelSpec, rho: float, K: float, T: float, oracle: BenchmarkSource, **sizes) -> str:
        parts = (
            m.label, sorted(asdict(m.params).items()), m.epsilon, m.gamma,
            repr(float(rho)), repr(float(K)), repr(float(T)), oracle.value, sorted(sizes.items()),
        )
        return hashlib.md5(repr(parts).encode()).hexdigest()

    def _path(self, key: str) -> str:
        return os.path.join(self.cache_dir, f"{key}.pkl")

    def load(self, key: str) -> Optional[BenchmarkPrice]:
        if not self.enabled or self.refresh:
            return None
        cache_file = self._path(key)
        if os.path.exists(cache_file):
            try:
                with open(cache_file, 'rb') as f:
                    cached = pickle.load(f)
                logger.info(f"Benchmark cache hit: {key[:10]}...")
                return cached
            except Exception as e:
                logger.warning(f"Failed to load benchmark cache {key[:10]}: {str(e)}")
        return None

    def save(self, key: str, value: BenchmarkPrice) -> None:
        if not self.enabled:
            return
        try:
            with open(self._path(key), 'wb') as f:
                pickle.dump(value, f)
            logger.info(f"Saved benchmark to cache: {key[:10]}...")
        except Exception as e:
            logger.warning(f"Failed to save benchmark cache {key[:10]}: {str(e)}")


def default_source(model: ModelName) -> BenchmarkSource:
    return {
        ModelName.HULL_WHITE: BenchmarkSource.HIGHRES_MC,
        ModelName.STEIN_STEIN: BenchmarkSource.HIGHRES_MC,
        ModelName.HESTON: BenchmarkSource.ANALYTIC_CF,
        ModelName.CONSTANT: BenchmarkSource.CLOSED_FORM_BS,
    }[model]
