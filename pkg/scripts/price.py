"""
Configuration-driven runner for correlation-expansion pricing tables.

    price run --config configs/table1.cfg [--seed N] [--workers N] [--out PATH]
              [--format csv|markdown] [--oracle-refresh] [--verbose]
    price bench --table {1,2,3,4}

A config file is a flat `key = value` list (comments with #, lists
comma-separated). For every maturity one batch is simulated at rho = 0 and
shared by all strikes, correlations and methods; every (rho, T, K, method)
cell is priced against the configured benchmark.
"""

import argparse
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from dotenv import load_dotenv
from dotenv.parser import parse_stream
from tqdm import tqdm

from estimators import (Localizer, Method, call_payoff, estimate_coefficients, series_price)
from oracles import (BenchmarkCache, BenchmarkPrice, BenchmarkSource, bs_benchmark, default_source,
                     heston_cf_price, highres_mc_strip, percentage_error)
from path_engine import TimeGrid, simulate_batch
from sv_models import ModelError, ModelName, ModelParams, ModelSpec, default_epsilon, make_model

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid experiment configuration; carries the offending line and field."""

    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class Config:
    """Runner constants."""

    CONFIG_DIR = Path(os.getenv('PRICE_CONFIG_DIR', Path(__file__).resolve().parent.parent / 'configs'))
    RESULTS_DIR = Path('results')
    LOG_FILE = 'price_run.log'
    MIN_PATHS = 100
    BENCHMARK_SEED_OFFSET = 1_000_003
    EXPM_CAVEAT_PCT = 7.0
    EXPA_CAVEAT_PCT = 1.5
    CSV_COLUMNS = ['rho', 'T', 'K', 'method', 'price', 'benchmark', 'pct_error', 'stderr', 'seconds']
    BENCH_TABLES = {
        '1': ['table1.cfg'],
        '2': ['table2.cfg'],
        '3': ['table3.cfg'],
        '4': ['table4_short.cfg', 'table4_long.cfg'],
    }

    # method tag -> (series family, order)
    METHODS = {
        'AS': (Method.AS_CLOSED, 1),
        'ExpA-1': (Method.EXP_A, 1),
        'ExpA-2': (Method.EXP_A, 2),
        'ExpM-1': (Method.EXP_M, 1),
        'ExpM-2': (Method.EXP_M, 2),
    }

    KEYS = {
        'model', 'mu', 'a', 'b', 'c', 'r', 's0', 'v0', 't', 'strikes', 'maturities', 'rhos',
        'methods', 'n_steps', 'n_paths', 'seed', 'benchmark', 'benchmark_paths',
        'benchmark_steps', 'delta_factor', 'epsilon', 'gamma', 'localize', 'output_format',
        'workers', 'record_timings',
    }
    DEFAULTS = {
        's0': '100', 'r': '0', 'v0': '0.2', 't': '0', 'maturities': '0.5', 'rhos': '-0.5',
        'methods': 'AS, ExpA-1, ExpA-2, ExpM-1, ExpM-2', 'n_steps': '500', 'n_paths': '10000',
        'seed': '42', 'benchmark_paths': '1000000', 'benchmark_steps': '1000',
        'delta_factor': '0.01', 'gamma': '1e-5', 'localize': 'true', 'output_format': 'csv',
        'workers': '1', 'record_timings': 'false',
    }


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment grid."""
    name: str
    model: ModelName
    params: ModelParams
    strikes: Tuple[float, ...]
    maturities: Tuple[float, ...]
    rhos: Tuple[float, ...]
    methods: Tuple[str, ...]
    t: float = 0.0
    n_steps: int = 500
    n_paths: int = 10_000
    seed: int = 42
    benchmark: BenchmarkSource = BenchmarkSource.HIGHRES_MC
    benchmark_paths: int = 1_000_000
    benchmark_steps: int = 1_000
    delta_factor: float = 0.01
    epsilon: float = 0.0
    gamma: float = 1e-5
    localize: bool = True
    output_format: str = 'csv'
    workers: int = 1
    record_timings: bool = False

    def build_model(self) -> ModelSpec:
        return make_model(self.model, self.params, epsilon=self.epsilon, gamma=self.gamma)


@dataclass(frozen=True)
class TableRow:
    rho: float
    T: float
    K: float
    method: str
    price: float = math.nan
    benchmark: float = math.nan
    pct_error: float = math.nan
    stderr: float = math.nan
    seconds: float = 0.0
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass
class TableArtifact:
    """All cells of one run, in (rho, T, K, method) grid order."""
    name: str
    rows: List[TableRow] = field(default_factory=list)

    def get(self, rho: float, T: float, K: float, method: str) -> TableRow:
        for row in self.rows:
            if (row.rho, row.T, row.K, row.method) == (rho, T, K, method):
                return row
        raise KeyError((rho, T, K, method))

    @property
    def failed_rows(self) -> List[TableRow]:
        return [row for row in self.rows if row.failed]

    def to_dataframe(self) -> pd.DataFrame:
        records = [{col: getattr(row, col) for col in Config.CSV_COLUMNS} for row in self.rows]
        return pd.DataFrame(records, columns=Config.CSV_COLUMNS)

    @classmethod
    def concat(cls, name: str, tables: Sequence['TableArtifact']) -> 'TableArtifact':
        return cls(name=name, rows=[row for table in tables for row in table.rows])


class ConfigParser:
    """Value converters that report the binding's line on failure."""

    @staticmethod
    def to_float(value: str, key: str, line: Optional[int]) -> float:
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"expected a number, got '{value}'", line=line, field=key)

    @staticmethod
    def to_int(value: str, key: str, line: Optional[int]) -> int:
        number = ConfigParser.to_float(value, key, line)
        if not number.is_integer():
            raise ConfigError(f"expected an integer, got '{value}'", line=line, field=key)
        return int(number)

    @staticmethod
    def to_floats(value: str, key: str, line: Optional[int]) -> Tuple[float, ...]:
        items = [item.strip() for item in value.split(',') if item.strip()]
        if not items:
            raise ConfigError("list must not be empty", line=line, field=key)
        return tuple(ConfigParser.to_float(item, key, line) for item in items)

    @staticmethod
    def to_bool(value: str, key: str, line: Optional[int]) -> bool:
        lowered = value.strip().lower()
        if lowered in ('true', 'yes', 'on', '1'):
            return True
        if lowered in ('false', 'no', 'off', '0'):
            return False
        raise ConfigError(f"expected true/false, got '{value}'", line=line, field=key)

    @staticmethod
    def to_methods(value: str, key: str, line: Optional[int]) -> Tuple[str, ...]:
        lookup = {tag.lower(): tag for tag in Config.METHODS}
        methods = []
        for item in (part.strip() for part in value.split(',')):
            if not item:
                continue
            if item.lower() not in lookup:
                raise ConfigError(
                    f"unknown method '{item}' (known: {', '.join(Config.METHODS)})", line=line, field=key
                )
            tag = lookup[item.lower()]
            if tag not in methods:
                methods.append(tag)
        if not methods:
            raise ConfigError("methods must not be empty", line=line, field=key)
        return tuple(methods)


def _read_bindings(path: Path) -> Dict[str, Tuple[str, Optional[int]]]:
    raw: Dict[str, Tuple[str, Optional[int]]] = {}
    with open(path, 'r', encoding='utf-8') as stream:
        for binding in parse_stream(stream):
            text = binding.original.string
            # the original starts at the preceding blank lines
            line = binding.original.line + text[:len(text) - len(text.lstrip())].count('\n')
            if binding.error:
                raise ConfigError(f"cannot parse '{binding.original.string.strip()}'", line=line)
            if binding.key is None:
                continue
            key = binding.key.strip().lower()
            if key not in Config.KEYS:
                raise ConfigError(f"unknown key '{binding.key}'", line=line, field=key)
            if key in raw:
                raise ConfigError(f"duplicate key '{key}'", line=line, field=key)
            if binding.value is None or not binding.value.strip():
                raise ConfigError(f"missing value for '{key}'", line=line, field=key)
            raw[key] = (binding.value.strip(), line)
    return raw


def load_config(path) -> ExperimentConfig:
    """
    Parse and validate an experiment file.

    Args:
        path: Path to a flat key-value config

    Returns:
        ExperimentConfig with every default filled in

    Raises:
        ConfigError: With the line number for parse errors and the field name
            for validation errors
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    raw = _read_bindings(path)
    for required in ('model', 'strikes'):
        if required not in raw:
            raise ConfigError(f"missing required key '{required}'", field=required)

    def get(key: str) -> Tuple[str, Optional[int]]:
        return raw.get(key, (Config.DEFAULTS.get(key), None))

    value, line = raw['model']
    try:
        model = ModelName(value.strip().lower())
    except ValueError:
        known = ', '.join(m.value for m in ModelName)
        raise ConfigError(f"unknown model '{value}' (known: {known})", line=line, field='model')

    def number(key: str) -> Optional[float]:
        value, line = get(key)
        return None if value is None else ConfigParser.to_float(value, key, line)

    def integer(key: str) -> int:
        value, line = get(key)
        return ConfigParser.to_int(value, key, line)

    def floats(key: str) -> Tuple[float, ...]:
        value, line = get(key)
        return ConfigParser.to_floats(value, key, line)

    def flag(key: str) -> bool:
        value, line = get(key)
        return ConfigParser.to_bool(value, key, line)

    params = ModelParams(
        r=number('r'), s0=number('s0'), v0=number('v0'),
        mu=number('mu'), a=number('a'), b=number('b'), c=number('c'),
    )
    epsilon = number('epsilon')
    benchmark_value, benchmark_line = raw.get('benchmark', (default_source(model).value, None))
    try:
        benchmark = BenchmarkSource(benchmark_value.strip().lower())
    except ValueError:
        known = ', '.join(s.value for s in BenchmarkSource)
        raise ConfigError(f"unknown benchmark '{benchmark_value}' (known: {known})",
                          line=benchmark_line, field='benchmark')

    cfg = ExperimentConfig(
        name=path.stem,
        model=model,
        params=params,
        strikes=floats('strikes'),
        maturities=floats('maturities'),
        rhos=floats('rhos'),
        methods=ConfigParser.to_methods(get('methods')[0], 'methods', get('methods')[1]),
        t=number('t'),
        n_steps=integer('n_steps'),
        n_paths=integer('n_paths'),
        seed=integer('seed'),
        benchmark=benchmark,
        benchmark_paths=integer('benchmark_paths'),
        benchmark_steps=integer('benchmark_steps'),
        delta_factor=number('delta_factor'),
        epsilon=default_epsilon(model.value) if epsilon is None else epsilon,
        gamma=number('gamma'),
        localize=flag('localize'),
        output_format=get('output_format')[0].strip().lower(),
        workers=integer('workers'),
        record_timings=flag('record_timings'),
    )
    validate_config(cfg, lines={key: line for key, (_, line) in raw.items()})
    logger.info(f"Loaded config {path} ({cfg.model.value}, {len(cfg.rhos)} rho x "
                f"{len(cfg.maturities)} T x {len(cfg.strikes)} K x {len(cfg.methods)} methods)")
    return cfg


def validate_config(cfg: ExperimentConfig, lines: Optional[Dict[str, Optional[int]]] = None) -> None:
    """Check value ranges and cross-field consistency."""
    lines = lines or {}

    def fail(message: str, key: str):
        raise ConfigError(message, line=lines.get(key), field=key)

    if cfg.n_paths < Config.MIN_PATHS:
        fail(f"n_paths must be >= {Config.MIN_PATHS}, got {cfg.n_paths}", 'n_paths')
    if cfg.n_steps < 2:
        fail(f"n_steps must be >= 2, got {cfg.n_steps}", 'n_steps')
    if cfg.benchmark_paths < 1 or cfg.benchmark_steps < 2:
        fail("benchmark_paths must be >= 1 and benchmark_steps >= 2", 'benchmark_paths')
    if cfg.workers < 1:
        fail(f"workers must be >= 1, got {cfg.workers}", 'workers')
    if any(not K > 0 for K in cfg.strikes):
        fail("strikes must be positive", 'strikes')
    if any(not T > cfg.t for T in cfg.maturities):
        fail(f"maturities must exceed t={cfg.t}", 'maturities')
    if any(not abs(rho) < 1.0 for rho in cfg.rhos):
        fail("correlations must lie in (-1, 1)", 'rhos')
    if cfg.output_format not in ('csv', 'markdown'):
        fail(f"output_format must be csv or markdown, got '{cfg.output_format}'", 'output_format')
    if cfg.benchmark is BenchmarkSource.ANALYTIC_CF and cfg.model is not ModelName.HESTON:
        fail("analytic_cf benchmark is only available for heston", 'benchmark')
    if cfg.benchmark is BenchmarkSource.CLOSED_FORM_BS and cfg.model is not ModelName.CONSTANT:
        fail("closed_form_bs benchmark is only available for the constant model", 'benchmark')
    try:
        cfg.build_model()
    except ModelError as e:
        key = _model_error_field(str(e))
        logger.error(f"Invalid model parameters: {str(e)}")
        raise ConfigError(str(e), line=lines.get(key), field=key)


def _model_error_field(message: str) -> str:
    """Best guess of the config key a ModelError message refers to."""
    for key in ('mu', 'a', 'b', 'c', 's0', 'v0', 'epsilon', 'gamma'):
        if f"'{key}'" in message or message.startswith(f"{key} ") or message.endswith(f" {key}"):
            return key
    if 'volatility v0' in message:
        return 'v0'
    return 'model'


def _benchmarks(cfg: ExperimentConfig, m: ModelSpec, rho: float, T: float,
                cache: BenchmarkCache, progress: bool) -> Dict[float, BenchmarkPrice]:
    p = cfg.params
    if cfg.benchmark is BenchmarkSource.CLOSED_FORM_BS:
        return {K: bs_benchmark(K, T, p.v0, p, cfg.t) for K in cfg.strikes}
    if cfg.benchmark is BenchmarkSource.ANALYTIC_CF:
        return {K: heston_cf_price(p, K, T, rho, cfg.t) for K in cfg.strikes}

    seed = cfg.seed + Config.BENCHMARK_SEED_OFFSET
    sizes = dict(n_paths=cfg.benchmark_paths, n_steps=cfg.benchmark_steps, seed=seed, t=cfg.t)
    keys = {K: cache.make_key(m, rho, K, T, cfg.benchmark, **sizes) for K in cfg.strikes}
    cached = {K: cache.load(key) for K, key in keys.items()}
    if all(value is not None for value in cached.values()):
        return cached
    logger.info(f"Computing high-resolution benchmark for rho={rho}, T={T} "
                f"({cfg.benchmark_paths} paths x {cfg.benchmark_steps} steps)")
    prices = highres_mc_strip(m, rho, cfg.strikes, T, n_paths=cfg.benchmark_paths,
                              n_steps=cfg.benchmark_steps, seed=seed, t=cfg.t,
                              workers=cfg.workers, progress=progress)
    for K, key in keys.items():
        cache.save(key, prices[K])
    return prices


def run_table(cfg: ExperimentConfig, cache: Optional[BenchmarkCache] = None,
              progress: bool = True) -> TableArtifact:
    """
    Price every (rho, T, K, method) cell of the grid.

    Args:
        cfg: Validated experiment configuration
        cache: Benchmark cache (a default one when None)
        progress: Show progress bars

    Returns:
        TableArtifact; cells that raised are kept and marked failed
    """
    cache = cache or BenchmarkCache()
    m = cfg.build_model()
    p = cfg.params
    cells: Dict[Tuple[float, float, float, str], TableRow] = {}

    for T in cfg.maturities:
        coefficients = {}
        seconds = {}
        try:
            grid = TimeGrid(t=cfg.t, T=T, n_steps=cfg.n_steps)
            batch = simulate_batch(m, grid, p.x0, p.v0, 0.0, cfg.seed, cfg.n_paths,
                                   workers=cfg.workers, r=p.r, progress=progress)
        except Exception as e:
            logger.error(f"Simulation failed for T={T}: {str(e)}", exc_info=True)
            batch = None
            batch_error = str(e)

        for K in tqdm(cfg.strikes, desc=f"Coefficients T={T}", disable=not progress):
            if batch is None:
                coefficients[K] = batch_error
                continue
            start = time.perf_counter()
            try:
                localizer = Localizer.for_strike(K, cfg.delta_factor) if cfg.localize else None
                coefficients[K] = estimate_coefficients(batch, K, p.r, cfg.t, T, p.x0,
                                                        localizer=localizer, payoff=call_payoff(K))
            except Exception as e:
                logger.error(f"Coefficient estimation failed for T={T}, K={K}: {str(e)}", exc_info=True)
                coefficients[K] = str(e)
            seconds[K] = time.perf_counter() - start

        for rho in cfg.rhos:
            try:
                benchmarks = _benchmarks(cfg, m, rho, T, cache, progress)
            except Exception as e:
                logger.error(f"Benchmark failed for rho={rho}, T={T}: {str(e)}", exc_info=True)
                benchmarks = {}
            for K in cfg.strikes:
                for tag in cfg.methods:
                    cells[(rho, T, K, tag)] = _price_cell(cfg, rho, T, K, tag, coefficients[K],
                                                          benchmarks.get(K), seconds.get(K, 0.0))
        logger.info(f"Finished maturity T={T}")

    rows = [cells[(rho, T, K, tag)] for rho in cfg.rhos for T in cfg.maturities
            for K in cfg.strikes for tag in cfg.methods]
    table = TableArtifact(name=cfg.name, rows=rows)
    if table.failed_rows:
        logger.warning(f"{len(table.failed_rows)} of {len(rows)} cells failed")
    return table


def _price_cell(cfg: ExperimentConfig, rho: float, T: float, K: float, tag: str,
                coeffs, benchmark: Optional[BenchmarkPrice], seconds: float) -> TableRow:
    if isinstance(coeffs, str):
        return TableRow(rho=rho, T=T, K=K, method=tag, error=coeffs)
    method, order = Config.METHODS[tag]
    start = time.perf_counter()
    try:
        price = series_price(coeffs, rho, order, method)
        bench_value = benchmark.value if benchmark is not None else math.nan
        error = percentage_error(price.value, benchmark) if benchmark is not None else math.nan
    except Exception as e:
        logger.error(f"Cell rho={rho}, T={T}, K={K}, {tag} failed: {str(e)}", exc_info=True)
        return TableRow(rho=rho, T=T, K=K, method=tag, error=str(e))
    elapsed = seconds + time.perf_counter() - start
    return TableRow(
        rho=rho, T=T, K=K, method=tag,
        price=price.value,
        benchmark=bench_value,
        pct_error=error,
        stderr=price.stderr,
        seconds=elapsed if cfg.record_timings else 0.0,
        error=None if benchmark is not None else "benchmark unavailable",
    )


def check_caveats(cfg: ExperimentConfig, table: TableArtifact) -> int:
    """
    Flag large errors on Heston runs that violate 2ab >= c^2.

    Returns:
        Number of ExpA cells above the ExpA threshold
    """
    if cfg.model is not ModelName.HESTON or cfg.params.novikov is not False:
        return 0
    expa_failures = 0
    for row in table.rows:
        if row.failed or np.isnan(row.pct_error):
            continue
        cell = f"rho={row.rho}, T={row.T}, K={row.K}, {row.method}: {row.pct_error:.4f}%"
        if row.method.startswith('ExpM') and row.pct_error > Config.EXPM_CAVEAT_PCT:
            logger.warning(f"{cell} exceeds {Config.EXPM_CAVEAT_PCT}%; variance paths reaching zero "
                           "break Malliavin differentiability of the Heston volatility")
        if row.method.startswith('ExpA') and row.pct_error > Config.EXPA_CAVEAT_PCT:
            logger.error(f"{cell} exceeds {Config.EXPA_CAVEAT_PCT}%")
            expa_failures += 1
    return expa_failures


def _format_number(value: float) -> str:
    return 'failed' if value is None or np.isnan(value) else f"{value:.6f}"


def to_markdown(table: TableArtifact) -> str:
    """Markdown mirror of the CSV, one line per cell."""
    lines = [f"### {table.name}", ""]
    lines.append('| ' + ' | '.join(Config.CSV_COLUMNS) + ' |')
    lines.append('| ' + ' | '.join(['---'] * len(Config.CSV_COLUMNS)) + ' |')
    for row in table.rows:
        cells = [_format_number(row.rho), _format_number(row.T), _format_number(row.K), row.method]
        if row.failed and np.isnan(row.price):
            cells += ['failed'] * 5
        else:
            cells += [_format_number(getattr(row, col)) for col in Config.CSV_COLUMNS[4:]]
        lines.append('| ' + ' | '.join(cells) + ' |')
    return '\n'.join(lines) + '\n'


def emit(table: TableArtifact, fmt: str, out_path) -> Path:
    """
    Write the table as CSV or markdown.

    Args:
        table: Completed table
        fmt: 'csv' or 'markdown'
        out_path: Destination file

    Returns:
        Path written
    """
    out_path = Path(out_path)
    try:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        if fmt == 'csv':
            table.to_dataframe().to_csv(out_path, index=False, float_format='%.6f',
                                        na_rep='failed', lineterminator='\n', encoding='utf-8')
        elif fmt == 'markdown':
            with open(out_path, 'w', encoding='utf-8', newline='\n') as f:
                f.write(to_markdown(table))
        else:
            raise ValueError(f"unknown output format '{fmt}'")
        logger.info(f"Saved {len(table.rows)} rows to {out_path}")
        return out_path
    except Exception as e:
        logger.error(f"Error writing table {out_path}: {str(e)}")
        raise


def _apply_overrides(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    changes = {}
    if args.seed is not None:
        changes['seed'] = args.seed
    workers = args.workers if args.workers is not None else os.getenv('PRICE_WORKERS')
    if workers is not None:
        changes['workers'] = max(1, int(workers))
    if args.format is not None:
        changes['output_format'] = args.format
    return replace(cfg, **changes) if changes else cfg


def _run_configs(paths: Iterable[Path], name: str, args: argparse.Namespace) -> int:
    configs = [_apply_overrides(load_config(path), args) for path in paths]
    cache = BenchmarkCache(refresh=args.oracle_refresh)
    tables = []
    expa_failures = 0
    for cfg in configs:
        table = run_table(cfg, cache=cache, progress=sys.stderr.isatty())
        expa_failures += check_caveats(cfg, table)
        tables.append(table)
    table = tables[0] if len(tables) == 1 else TableArtifact.concat(name, tables)
    fmt = configs[0].output_format
    suffix = '.csv' if fmt == 'csv' else '.md'
    out_path = Path(args.out) if args.out else Config.RESULTS_DIR / f"{name}{suffix}"
    emit(table, fmt, out_path)
    return 1 if expa_failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='price', description='Correlation-expansion option pricing tables')
    sub = parser.add_subparsers(dest='command', required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument('--seed', type=int, default=None, help='Override the config seed')
        p.add_argument('--workers', type=int, default=None, help='Simulation threads (default: config or PRICE_WORKERS)')
        p.add_argument('--out', default=None, help='Output file (default: results/<name>.csv)')
        p.add_argument('--format', choices=['csv', 'markdown'], default=None, help='Output format')
        p.add_argument('--oracle-refresh', action='store_true', help='Recompute cached benchmarks')
        p.add_argument('--verbose', action='store_true', help='Debug logging')

    run = sub.add_parser('run', help='Run one experiment config')
    run.add_argument('--config', required=True, help='Path to a key-value experiment file')
    common(run)

    bench = sub.add_parser('bench', help='Run a shipped table config')
    bench.add_argument('--table', required=True, choices=sorted(Config.BENCH_TABLES), help='Table number')
    common(bench)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point of the `price` command."""
    load_dotenv()
    args = build_parser().parse_args(argv)

    root = logging.getLogger()
    if args.verbose:
        root.setLevel(logging.DEBUG)
    out_dir = Path(args.out).parent if args.out else Config.RESULTS_DIR
    out_dir.mkdir(parents=True, exist_ok=True)
    file_handler = logging.FileHandler(out_dir / Config.LOG_FILE, encoding='utf-8')
    file_handler.setFormatter(logging.Formatter('%(asctime)s - %(levelname)s - %(message)s'))
    root.addHandler(file_handler)

    try:
        if args.command == 'run':
            path = Path(args.config)
            return _run_configs([path], path.stem, args)
        paths = [Config.CONFIG_DIR / name for name in Config.BENCH_TABLES[args.table]]
        return _run_configs(paths, f"table{args.table}", args)
    except ConfigError as e:
        logger.error(f"Configuration error: {str(e)}")
        return 2
    except Exception as e:
        logger.error(f"Run failed: {str(e)}", exc_info=True)
        return 1
    finally:
        root.removeHandler(file_handler)
        file_handler.close()


if __name__ == '__main__':
    sys.exit(main())
