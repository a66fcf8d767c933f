"""
Test package for the correlation-expansion option pricer.

- test_core_math.py: Gaussian derivatives, Black-Scholes prices and the call kernel
- test_sv_models.py: Model coefficients, perturbations and validation
- test_path_engine.py: Euler recursion, path functionals, seeding and threading
- test_estimators.py: ExpA / ExpM / AS coefficient estimators and the series
- test_oracles.py: Heston characteristic function, Monte Carlo oracles, cache
- test_price.py: Config files, table runner, CSV / markdown output, CLI
- test_fixtures.py: Shared parameter sets, hand-built batches and configs

Usage:
    python test_runner.py
    python test_runner.py --module test_estimators
    python test_runner.py --slow --coverage
"""

__version__ = "0.1.0"
__author__ = "sv-rho-expansion contributors"
