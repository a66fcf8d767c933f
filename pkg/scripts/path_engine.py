"""
Euler simulation of the volatility, first variation and log-price.

One forward pass over a uniform grid advances (v, ln Y, xi) for a whole
chunk of paths at once and accumulates every Ito integral as a left-point
sum on the same increments. A backward suffix sum then gives

    psi_k = (f eta)(v_k) * sum_{j >= k} (f f')(v_j) Y_j dt / Y_k

from which c = sum psi_k dt and ell = sum psi_k I_k dt.

Every path owns a counter-based Philox stream keyed by (seed, path index),
and chunk boundaries depend only on the path count, so a batch is
bit-identical whatever the number of workers.
"""

import concurrent.futures
import logging
import math
import time
from dataclasses import dataclass, fields
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from sv_models import ModelSpec, eval_coeffs

logger = logging.getLogger(__name__)


class SimulationError(RuntimeError):
    """Raised when simulated paths cannot be used."""


class Config:
    """Simulation defaults and policies."""

    DEFAULT_N_STEPS = 500
    DEFAULT_N_PATHS = 10_000
    CHUNK_SIZE = 2048
    MAX_INVALID_FRACTION = 0.01
    SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid over [t, T]."""
    t: float
    T: float
    n_steps: int = Config.DEFAULT_N_STEPS

    def __post_init__(self):
        if not self.T > self.t:
            raise ValueError(f"grid end T={self.T} must exceed start t={self.t}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise ValueError(f"n_steps must be an integer >= 2, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return (self.T - self.t) / self.n_steps

    @property
    def duration(self) -> float:
        return self.T - self.t


@dataclass(frozen=True)
class RngStream:
    """Independent Gaussian stream for one path."""
    seed: int
    stream_id: int

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed & Config.SEED_MASK, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def normals(self, n_steps: int) -> Tuple[np.ndarray, np.ndarray]:
        """Standard normal increments (z1, z2) for B1 and B2."""
        draws = self.generator().standard_normal((2, n_steps))
        return draws[0], draws[1]


@dataclass(frozen=True)
class PathFunctionals:
    """Everything one simulated path contributes to the estimators."""
    m_total: float
    psi: np.ndarray
    c_total: float
    ell: float
    u_int: float
    v_int: float
    zint: float
    inv_f2: float
    i_running: np.ndarray
    m_running: np.ndarray
    xi_hat_T: float
    xi_T_rho: Optional[float] = None
    valid: bool = True


@dataclass
class PathBatch:
    """
    Struct-of-arrays container for many paths.

    Scalars have shape (n_paths,); psi has shape (n_paths, n_steps) on the
    left grid points and the running integrals (n_paths, n_steps + 1).
    Iterating yields PathFunctionals in path-index order.
    """
    grid: TimeGrid
    m_total: np.ndarray
    psi: np.ndarray
    c_total: np.ndarray
    ell: np.ndarray
    u_int: np.ndarray
    v_int: np.ndarray
    zint: np.ndarray
    inv_f2: np.ndarray
    i_running: np.ndarray
    m_running: np.ndarray
    xi_hat_T: np.ndarray
    xi_T_rho: np.ndarray
    valid: np.ndarray
    rho: float = 0.0
    seed: Optional[int] = None

    _ARRAY_FIELDS = ('m_total', 'psi', 'c_total', 'ell', 'u_int', 'v_int', 'zint',
                     'inv_f2', 'i_running', 'm_running', 'xi_hat_T', 'xi_T_rho', 'valid')

    def __len__(self) -> int:
        return int(self.m_total.shape[0])

    def __getitem__(self, index: int) -> PathFunctionals:
        return PathFunctionals(
            m_total=float(self.m_total[index]),
            psi=self.psi[index],
            c_total=float(self.c_total[index]),
            ell=float(self.ell[index]),
            u_int=float(self.u_int[index]),
            v_int=float(self.v_int[index]),
            zint=float(self.zint[index]),
            inv_f2=float(self.inv_f2[index]),
            i_running=self.i_running[index],
            m_running=self.m_running[index],
            xi_hat_T=float(self.xi_hat_T[index]),
            xi_T_rho=float(self.xi_T_rho[index]),
            valid=bool(self.valid[index]),
        )

    def __iter__(self) -> Iterator[PathFunctionals]:
        for index in range(len(self)):
            yield self[index]

    @property
    def n_invalid(self) -> int:
        return int(np.count_nonzero(~self.valid))

    def take(self, indices) -> 'PathBatch':
        """Sub-batch of the given path indices (or boolean mask)."""
        values = {name: getattr(self, name)[indices] for name in self._ARRAY_FIELDS}
        return PathBatch(grid=self.grid, rho=self.rho, seed=self.seed, **values)

    def valid_only(self) -> 'PathBatch':
        if self.n_invalid == 0:
            return self
        return self.take(self.valid)

    @classmethod
    def concat(cls, batches: Sequence['PathBatch']) -> 'PathBatch':
        if not batches:
            raise SimulationError("Cannot concatenate an empty list of batches")
        first = batches[0]
        values = {
            name: np.concatenate([getattr(b, name) for b in batches], axis=0)
            for name in cls._ARRAY_FIELDS
        }
        return cls(grid=first.grid, rho=first.rho, seed=first.seed, **values)

    @classmethod
    def from_paths(cls, grid: TimeGrid, paths: Sequence[PathFunctionals],
                   rho: float = 0.0, seed: Optional[int] = None) -> 'PathBatch':
        """Stack individual path records into a batch."""
        if not paths:
            raise SimulationError("Cannot build a batch from zero paths")
        values = {}
        for item in fields(PathFunctionals):
            column = [getattr(p, item.name) for p in paths]
            if item.name == 'xi_T_rho':
                column = [np.nan if c is None else c for c in column]
            values[item.name] = np.array(column, dtype=bool if item.name == 'valid' else float)
        return cls(grid=grid, rho=rho, seed=seed, **values)


def _check_rho(rho: float) -> None:
    if not abs(rho) < 1.0:
        raise ValueError(f"correlation must lie in (-1, 1), got {rho}")


def simulate_from_increments(m: ModelSpec, grid: TimeGrid, x0: float, v0: float,
                             rho: float, z1: np.ndarray, z2: np.ndarray,
                             r: float = 0.0, seed: Optional[int] = None) -> PathBatch:
    """
    Run the Euler recursion on given standard-normal increments.

    Args:
        m: Volatility model
        grid: Time grid
        x0: Initial log spot
        v0: Initial volatility state
        rho: Correlation used for xi_T_rho
        z1: Increments driving B1, shape (n_paths, n_steps)
        z2: Increments driving B2, same shape
        r: Risk-free rate
        seed: Recorded on the batch

    Returns:
        PathBatch with every functional filled in; non-finite paths are
        flagged in `valid`
    """
    _check_rho(rho)
    z1 = np.atleast_2d(np.asarray(z1, dtype=float))
    z2 = np.atleast_2d(np.asarray(z2, dtype=float))
    n_paths, n_steps = z1.shape
    if z2.shape != z1.shape or n_steps != grid.n_steps:
        raise ValueError(
            f"increments must have shape (n_paths, {grid.n_steps}), got {z1.shape} and {z2.shape}"
        )

    dt = grid.dt
    sqrt_dt = math.sqrt(dt)
    rho_bar = math.sqrt(1.0 - rho * rho)

    v = np.full(n_paths, float(v0))
    log_y = np.zeros(n_paths)
    xi_hat = np.full(n_paths, float(x0))
    xi_rho = np.full(n_paths, float(x0))
    m_acc = np.zeros(n_paths)
    u_acc = np.zeros(n_paths)
    v_acc = np.zeros(n_paths)
    z_acc = np.zeros(n_paths)
    inv_f2 = np.zeros(n_paths)

    f_eta = np.empty((n_paths, n_steps))
    weight = np.empty((n_paths, n_steps))
    y_grid = np.empty((n_paths, n_steps))
    i_running = np.empty((n_paths, n_steps + 1))
    m_running = np.empty((n_paths, n_steps + 1))

    with np.errstate(all='ignore'):
        for k in range(n_steps):
            cb = eval_coeffs(m, v)
            y = np.exp(log_y)
            f_eta[:, k] = cb.f_eta
            weight[:, k] = cb.f_f_prime * y * dt
            y_grid[:, k] = y
            i_running[:, k] = u_acc
            m_running[:, k] = m_acc

            dB1 = z1[:, k]
            dB2 = z2[:, k]
            diffusion = cb.f * sqrt_dt
            drift = (r - 0.5 * cb.f * cb.f) * dt

            m_acc = m_acc + cb.f * cb.f * dt
            inv_f2 = inv_f2 + dt / (cb.f * cb.f)
            u_acc = u_acc + diffusion * dB1
            v_acc = v_acc + diffusion * dB2
            z_acc = z_acc + sqrt_dt * dB2 / cb.f
            xi_hat = xi_hat + drift + diffusion * dB2
            xi_rho = xi_rho + drift + diffusion * (rho * dB1 + rho_bar * dB2)

            log_y = log_y + (cb.mu_prime - 0.5 * cb.eta_prime * cb.eta_prime) * dt \
                + cb.eta_prime * sqrt_dt * dB1
            v = v + cb.mu * dt + cb.eta * sqrt_dt * dB1

        i_running[:, n_steps] = u_acc
        m_running[:, n_steps] = m_acc

        # backward suffix sums: tail[k] = sum_{j >= k} weight[j]
        tail = np.cumsum(weight[:, ::-1], axis=1)[:, ::-1]
        psi = f_eta * tail / y_grid
        c_total = psi.sum(axis=1) * dt
        ell = (psi * i_running[:, :n_steps]).sum(axis=1) * dt

    scalars = (v, log_y, xi_hat, xi_rho, m_acc, u_acc, v_acc, z_acc, inv_f2, c_total, ell)
    valid = np.logical_and.reduce([np.isfinite(s) for s in scalars]) & (m_acc > 0)

    return PathBatch(
        grid=grid,
        m_total=m_acc,
        psi=psi,
        c_total=c_total,
        ell=ell,
        u_int=u_acc,
        v_int=v_acc,
        zint=z_acc,
        inv_f2=inv_f2,
        i_running=i_running,
        m_running=m_running,
        xi_hat_T=xi_hat,
        xi_T_rho=xi_rho,
        valid=valid,
        rho=rho,
        seed=seed,
    )


def simulate_path(m: ModelSpec, grid: TimeGrid, x0: float, v0: float, rho: float,
                  rng: RngStream, r: float = 0.0) -> PathFunctionals:
    """
    Simulate one path from its own random stream.

    A path that goes non-finite is returned with valid=False and logged.
    """
    z1, z2 = rng.normals(grid.n_steps)
    path = simulate_from_increments(m, grid, x0, v0, rho, z1[None, :], z2[None, :],
                                    r=r, seed=rng.seed)[0]
    if not path.valid:
        logger.warning(f"Path {rng.stream_id} (seed {rng.seed}) produced a non-finite state")
    return path


def _chunk_bounds(n_paths: int) -> List[Tuple[int, int]]:
    size = Config.CHUNK_SIZE
    return [(start, min(start + size, n_paths)) for start in range(0, n_paths, size)]


def _draw_chunk(seed: int, start: int, stop: int, n_steps: int) -> Tuple[np.ndarray, np.ndarray]:
    z1 = np.empty((stop - start, n_steps))
    z2 = np.empty((stop - start, n_steps))
    for row, stream_id in enumerate(range(start, stop)):
        z1[row], z2[row] = RngStream(seed, stream_id).normals(n_steps)
    return z1, z2


def _enforce_invalid_policy(n_invalid: int, n_paths: int, what: str) -> None:
    if n_invalid == 0:
        return
    fraction = n_invalid / n_paths
    logger.warning(f"{what}: {n_invalid}/{n_paths} paths invalid ({100 * fraction:.3f}%)")
    if fraction > Config.MAX_INVALID_FRACTION:
        raise SimulationError(
            f"{what}: invalid path fraction {fraction:.4f} exceeds "
            f"{Config.MAX_INVALID_FRACTION:.2%}"
        )


def _run_chunks(task, n_paths: int, workers: int, progress: bool, desc: str) -> list:
    bounds = _chunk_bounds(n_paths)
    workers = max(1, int(workers))
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
        results = executor.map(lambda b: task(*b), bounds)
        return list(tqdm(results, total=len(bounds), desc=desc, disable=not progress))


def simulate_batch(m: ModelSpec, grid: TimeGrid, x0: float, v0: float, rho: float,
                   seed: int, n_paths: int, workers: int = 1, r: float = 0.0,
                   progress: bool = False) -> PathBatch:
    """
    Simulate n_paths paths; path i uses RngStream(seed, i).

    Args:
        m: Volatility model
        grid: Time grid
        x0: Initial log spot
        v0: Initial volatility state
        rho: Correlation for the xi_T_rho column (functionals are rho-free)
        seed: Base seed
        n_paths: Number of paths (>= 1)
        workers: Threads used for chunks; does not change the output
        r: Risk-free rate
        progress: Show a progress bar

    Returns:
        PathBatch in path-index order, invalid paths flagged

    Raises:
        SimulationError: If more than 1% of the paths are invalid
    """
    if n_paths < 1:
        raise ValueError(f"n_paths must be >= 1, got {n_paths}")
    _check_rho(rho)
    start_time = time.perf_counter()

    def task(start: int, stop: int) -> PathBatch:
        z1, z2 = _draw_chunk(seed, start, stop, grid.n_steps)
        return simulate_from_increments(m, grid, x0, v0, rho, z1, z2, r=r, seed=seed)

    batch = PathBatch.concat(_run_chunks(task, n_paths, workers, progress, "Simulating paths"))
    _enforce_invalid_policy(batch.n_invalid, n_paths, f"{m.label} batch")
    logger.info(
        f"Simulated {n_paths} {m.label} paths x {grid.n_steps} steps "
        f"in {time.perf_counter() - start_time:.2f}s"
    )
    return batch


def simulate_terminal(m: ModelSpec, grid: TimeGrid, x0: float, v0: float,
                      rhos: Sequence[float], seed: int, n_paths: int,
                      workers: int = 1, r: float = 0.0,
                      progress: bool = False) -> np.ndarray:
    """
    Terminal log-prices for several correlations on common random numbers.

    Only (v, xi) are stepped, so no grids are kept in memory.

    Returns:
        Array of shape (n_paths, len(rhos)); rows of invalid paths are NaN
    """
    if n_paths < 1:
        raise ValueError(f"n_paths must be >= 1, got {n_paths}")
    rhos = np.asarray(list(rhos), dtype=float)
    for rho in rhos:
        _check_rho(rho)
    rho_bar = np.sqrt(1.0 - rhos * rhos)
    dt = grid.dt
    sqrt_dt = math.sqrt(dt)
    start_time = time.perf_counter()

    def task(start: int, stop: int) -> np.ndarray:
        z1, z2 = _draw_chunk(seed, start, stop, grid.n_steps)
        v = np.full(stop - start, float(v0))
        xi = np.full((stop - start, rhos.size), float(x0))
        with np.errstate(all='ignore'):
            for k in range(grid.n_steps):
                f = m.f(v)
                diffusion = (f * sqrt_dt)[:, None]
                drift = ((r - 0.5 * f * f) * dt)[:, None]
                noise = rhos[None, :] * z1[:, k, None] + rho_bar[None, :] * z2[:, k, None]
                xi = xi + drift + diffusion * noise
                v = v + m.mu(v) * dt + m.eta(v) * sqrt_dt * z1[:, k]
        bad = ~np.all(np.isfinite(xi), axis=1) | ~np.isfinite(v)
        xi[bad] = np.nan
        return xi

    xi_T = np.concatenate(_run_chunks(task, n_paths, workers, progress, "Simulating terminals"), axis=0)
    n_invalid = int(np.count_nonzero(np.isnan(xi_T[:, 0])))
    _enforce_invalid_policy(n_invalid, n_paths, f"{m.label} terminal run")
    logger.info(
        f"Simulated {n_paths} {m.label} terminal values x {grid.n_steps} steps "
        f"for {rhos.size} correlation(s) in {time.perf_counter() - start_time:.2f}s"
    )
    return xi_T
