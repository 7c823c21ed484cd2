"""Two-scale McKean-Vlasov control experiments (C++ core)."""

from ._tikmv import (
    ConfigError,
    InvalidInput,
    LQModel,
    NumericalError,
    TimeGrid,
    h2_distance,
    main,
    run_study,
    s2_distance,
    simulate_lq_optimal,
    simulate_lq_twoscale,
    solve_riccati_smp,
    solve_riccati_twoscale,
    wasserstein2_1d,
)

__all__ = [
    "ConfigError",
    "InvalidInput",
    "LQModel",
    "NumericalError",
    "TimeGrid",
    "h2_distance",
    "main",
    "run_study",
    "s2_distance",
    "simulate_lq_optimal",
    "simulate_lq_twoscale",
    "solve_riccati_smp",
    "solve_riccati_twoscale",
    "wasserstein2_1d",
]
