"""Matrix-free dynamic trace estimation.

Maintains running trace estimates of a sequence of implicitly accessed
matrices using as few matrix-vector products as possible, via damped
difference tracking with closed-form damping selection, plus low-rank-aware
variants, graph oracles, and matrix-function oracles.
"""

from .estimators import (
    EstimatorState,
    HutchPPConfig,
    deltashift_auto_step,
    deltashift_fixed_step,
    deltashift_init,
    deltashiftpp_init,
    deltashiftpp_step,
    hutchinson,
    hutchinson_exact_variance,
    hutchpp,
    norestart_step,
    optimal_gamma,
    restart_run,
)
from .harness import (
    ExperimentConfig,
    ExperimentRecord,
    allocate_budget,
    run_experiment,
    write_records,
)
from .oracle import (
    MatVecLedger,
    MatVecOracle,
    counted,
    dense_oracle,
    difference_oracle,
    power_oracle,
)
from .probes import ProbeBatch, quadratic_samples, rademacher_batch

__all__ = [
    "EstimatorState",
    "ExperimentConfig",
    "ExperimentRecord",
    "HutchPPConfig",
    "MatVecLedger",
    "MatVecOracle",
    "ProbeBatch",
    "allocate_budget",
    "counted",
    "deltashift_auto_step",
    "deltashift_fixed_step",
    "deltashift_init",
    "deltashiftpp_init",
    "deltashiftpp_step",
    "dense_oracle",
    "difference_oracle",
    "hutchinson",
    "hutchinson_exact_variance",
    "hutchpp",
    "norestart_step",
    "optimal_gamma",
    "power_oracle",
    "quadratic_samples",
    "rademacher_batch",
    "restart_run",
    "run_experiment",
    "write_records",
]
