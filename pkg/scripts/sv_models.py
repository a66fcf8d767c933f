"""
Stochastic volatility models as coefficient bundles.

A model is the triple (mu, eta, f) of the volatility drift, the volatility
diffusion and the asset volatility, together with their first derivatives:

    dv = mu(v) ds + eta(v) dB1
    dS = r S ds + f(v) S (rho dB1 + sqrt(1 - rho^2) dB2)

Builtins: Hull-White, Stein-Stein, Heston and a constant-volatility model
used for degeneracy checks. Two perturbations restore positivity
requirements: the f-floor f_eps(v) = sqrt(|v|^{2 alpha} + eps) and, for
Heston only, the CIR floor eta_gamma(v) = c sqrt(|v| + gamma).
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import numpy as np

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


class ModelError(ValueError):
    """Raised for unknown models or invalid model parameters."""


class ModelName(Enum):
    """Supported volatility models."""
    HULL_WHITE = 'hull_white'
    STEIN_STEIN = 'stein_stein'
    HESTON = 'heston'
    CONSTANT = 'constant'


class Config:
    """Model defaults."""

    DEFAULT_EPSILON = {
        ModelName.HULL_WHITE: 0.0,
        ModelName.STEIN_STEIN: 1e-5,
        ModelName.HESTON: 1e-5,
        ModelName.CONSTANT: 0.0,
    }
    DEFAULT_GAMMA = 1e-5

    # exponent alpha in f(v) = v^alpha
    F_EXPONENT = {
        ModelName.HULL_WHITE: 1.0,
        ModelName.STEIN_STEIN: 1.0,
        ModelName.HESTON: 0.5,
    }


@dataclass(frozen=True)
class ModelParams:
    """
    Model-specific scalars plus the shared market state.

    Hull-White uses (mu, c); Stein-Stein and Heston use (a, b, c);
    the constant model only needs v0 (its volatility).
    """
    r: float
    s0: float
    v0: float
    mu: Optional[float] = None
    a: Optional[float] = None
    b: Optional[float] = None
    c: Optional[float] = None

    @property
    def x0(self) -> float:
        return float(np.log(self.s0))

    @property
    def novikov(self) -> Optional[bool]:
        """2ab >= c^2 when a, b, c are all set (Heston); None otherwise."""
        if self.a is None or self.b is None or self.c is None:
            return None
        return 2.0 * self.a * self.b >= self.c ** 2


@dataclass(frozen=True)
class CoeffBundle:
    """All coefficient values at one (or many) volatility points."""
    mu: ArrayLike
    eta: ArrayLike
    f: ArrayLike
    mu_prime: ArrayLike
    eta_prime: ArrayLike
    f_prime: ArrayLike
    f_eta: ArrayLike
    f_f_prime: ArrayLike


def default_epsilon(name: str) -> float:
    return Config.DEFAULT_EPSILON[_parse_name(name)]


def _parse_name(name: Union[str, ModelName]) -> ModelName:
    if isinstance(name, ModelName):
        return name
    try:
        return ModelName(str(name).strip().lower())
    except ValueError:
        known = ', '.join(m.value for m in ModelName)
        raise ModelError(f"Unknown model '{name}' (known: {known})")


@dataclass(frozen=True)
class ModelSpec:
    """
    Immutable coefficient bundle of a volatility model.

    The coefficient methods broadcast over numpy arrays of v.
    """
    name: ModelName
    params: ModelParams
    epsilon: float = 0.0
    gamma: float = 0.0

    @property
    def label(self) -> str:
        return self.name.value

    # volatility drift
    def mu(self, v: ArrayLike) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        p = self.params
        if self.name is ModelName.HULL_WHITE:
            return p.mu * v
        if self.name in (ModelName.STEIN_STEIN, ModelName.HESTON):
            return p.b * (p.a - v)
        return np.zeros_like(v)

    def mu_prime(self, v: ArrayLike) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        p = self.params
        if self.name is ModelName.HULL_WHITE:
            return np.full_like(v, p.mu)
        if self.name in (ModelName.STEIN_STEIN, ModelName.HESTON):
            return np.full_like(v, -p.b)
        return np.zeros_like(v)

    # volatility diffusion
    def eta(self, v: ArrayLike) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        p = self.params
        if self.name is ModelName.HULL_WHITE:
            return p.c * v
        if self.name is ModelName.STEIN_STEIN:
            return np.full_like(v, p.c)
        if self.name is ModelName.HESTON:
            return p.c * np.sqrt(np.abs(v) + self.gamma)
        return np.zeros_like(v)

    def eta_prime(self, v: ArrayLike) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        p = self.params
        if self.name is ModelName.HULL_WHITE:
            return np.full_like(v, p.c)
        if self.name is ModelName.HESTON:
            with np.errstate(divide='ignore'):
                return p.c * np.sign(v) / (2.0 * np.sqrt(np.abs(v) + self.gamma))
        return np.zeros_like(v)

    # asset volatility
    def f(self, v: ArrayLike) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if self.name is ModelName.CONSTANT:
            return np.full_like(v, self.params.v0)
        alpha = Config.F_EXPONENT[self.name]
        if self.epsilon > 0:
            return np.sqrt(np.abs(v) ** (2.0 * alpha) + self.epsilon)
        if self.name is ModelName.HESTON:
            return np.sqrt(np.abs(v))
        return v.copy()

    def f_prime(self, v: ArrayLike) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if self.name is ModelName.CONSTANT:
            return np.zeros_like(v)
        alpha = Config.F_EXPONENT[self.name]
        if self.epsilon > 0:
            # d/dv sqrt(|v|^{2a} + eps) = a sign(v) |v|^{2a-1} / f_eps(v)
            slope = alpha * np.sign(v) * np.abs(v) ** (2.0 * alpha - 1.0)
            return slope / np.sqrt(np.abs(v) ** (2.0 * alpha) + self.epsilon)
        if self.name is ModelName.HESTON:
            with np.errstate(divide='ignore'):
                return np.sign(v) / (2.0 * np.sqrt(np.abs(v)))
        return np.ones_like(v)


def make_model(name: Union[str, ModelName], params: ModelParams,
               epsilon: Optional[float] = None,
               gamma: Optional[float] = None) -> ModelSpec:
    """
    Build a model from its name and parameters.

    Args:
        name: One of hull_white, stein_stein, heston, constant
        params: Model parameters
        epsilon: f-floor perturbation (model default when None)
        gamma: CIR floor, used by Heston only (default 1e-5 when None)

    Returns:
        Immutable ModelSpec
    """
    model_name = _parse_name(name)
    if epsilon is None:
        epsilon = Config.DEFAULT_EPSILON[model_name]
    if gamma is None:
        gamma = Config.DEFAULT_GAMMA if model_name is ModelName.HESTON else 0.0
    if epsilon < 0:
        raise ModelError(f"epsilon must be nonnegative, got {epsilon}")
    if gamma < 0:
        raise ModelError(f"gamma must be nonnegative, got {gamma}")
    if not params.s0 > 0:
        raise ModelError(f"s0 must be positive, got {params.s0}")
    _validate_params(model_name, params)

    if model_name is ModelName.HESTON and params.novikov is False:
        logger.warning(
            f"Heston parameters violate 2ab >= c^2 (2ab={2 * params.a * params.b:.6f}, "
            f"c^2={params.c ** 2:.6f}); variance may reach zero"
        )
    if model_name is ModelName.CONSTANT:
        epsilon = 0.0
    if model_name is not ModelName.HESTON:
        gamma = 0.0

    spec = ModelSpec(name=model_name, params=params, epsilon=float(epsilon), gamma=float(gamma))
    logger.debug(f"Built model {spec.label} (epsilon={spec.epsilon}, gamma={spec.gamma})")
    return spec


def _validate_params(name: ModelName, params: ModelParams) -> None:
    required = {
        ModelName.HULL_WHITE: ('mu', 'c'),
        ModelName.STEIN_STEIN: ('a', 'b', 'c'),
        ModelName.HESTON: ('a', 'b', 'c'),
        ModelName.CONSTANT: (),
    }[name]
    for field_name in required:
        if getattr(params, field_name) is None:
            raise ModelError(f"{name.value} requires parameter '{field_name}'")
    if 'c' in required and not params.c > 0:
        raise ModelError(f"c must be positive, got {params.c}")
    if name is ModelName.CONSTANT and not params.v0 > 0:
        raise ModelError(f"constant model needs a positive volatility v0, got {params.v0}")


def eval_coeffs(m: ModelSpec, v: ArrayLike) -> CoeffBundle:
    """
    Evaluate every coefficient (and the two products the functionals need).

    Args:
        m: Model
        v: Volatility state (scalar or array)

    Returns:
        CoeffBundle; scalar input gives float fields
    """
    f = m.f(v)
    eta = m.eta(v)
    f_prime = m.f_prime(v)
    values = dict(
        mu=m.mu(v),
        eta=eta,
        f=f,
        mu_prime=m.mu_prime(v),
        eta_prime=m.eta_prime(v),
        f_prime=f_prime,
        f_eta=f * eta,
        f_f_prime=f * f_prime,
    )
    if np.ndim(v) == 0:
        values = {key: float(val) for key, val in values.items()}
    return CoeffBundle(**values)
