"""Experiment engine: budget allocation, estimator dispatch, ground truth,
and CSV emission.

A run walks a sequence of per-step oracles, keeps the previous and current
snapshot alive (difference estimators pair probes across them), routes every
apply through a ledger, and emits one record per step.  Budgets translate to
probe counts according to the counting mode: ``base_matvecs`` charges every
base-matrix multiplication against Q (a difference probe costs two applies, a
cubed-adjacency apply costs three multiplications), while ``oracle_calls``
budgets probe vectors per step regardless of pairing, which is the convention
the comparison plots use.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Iterator

import numpy as np

from . import estimators as est
from .dyngraph import (
    DynamicGraph,
    adjacency_oracle,
    choose_live_clique,
    load_edge_list,
    random_clique_nodes,
    random_graph,
    triangle_count_oracle,
)
from .matfunc import (
    ChebyshevScaling,
    chebyshev_oracle,
    expm_lanczos_oracle,
    scaling_from_power_iteration,
)
from .oracle import MatVecLedger, MatVecOracle, counted, dense_oracle
from .probes import REFERENCE, rademacher_batch
from .synth import (
    MatrixSequenceSpec,
    exact_chebyshev_trace,
    exact_trace,
    sequence_matrices,
)

EXPERIMENTS = ("synth", "triangles", "connectivity", "moments")
ESTIMATORS = (
    "hutchinson",
    "norestart",
    "restart",
    "deltashift_fixed",
    "deltashift_auto",
    "deltashiftpp",
)
COUNT_MODES = ("base_matvecs", "oracle_calls")

CSV_HEADER = "step,estimate,ground_truth,abs_error,rel_error,scaled_error,matvecs_step,matvecs_cum,gamma"

_DENSE_TRUTH_LIMIT = 2000


class BudgetError(ValueError):
    """Raised before any matvec when a budget cannot feed the estimator."""


@dataclass
class ExperimentConfig:
    """Flat description of one experiment run; every field round-trips
    through the CLI and the CSV comment header."""

    experiment: str
    estimator: str
    budget: int
    steps: int
    seed: int = 0
    n: int = 500
    count_mode: str = "base_matvecs"
    ell: int | None = None
    ell0: int | None = None
    gamma: float = 0.1
    restart_every: int = 20
    first_fraction: float = 1.0 / 3.0
    dspp_reuse: bool = False
    perturb: str = "low"
    psd_rank: int = 25
    psd_scale: float = 0.05
    graph: str | None = None
    graph_format: str = "snap"
    base_edge_prob: float = 0.05
    clique_min: int = 10
    clique_max: int = 150
    delete_after: int = 75
    lanczos_k: int = 15
    cheb_degree: int = 1
    power_iters: int = 50
    scale_margin: float = 1.05
    truth_mode: str = "auto"
    reference_factor: int = 20
    out: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.count_mode not in COUNT_MODES:
            raise ValueError(f"unknown counting mode {self.count_mode!r}")
        if self.steps < 1:
            raise ValueError(f"need at least one step, got {self.steps}")
        if self.budget < self.steps:
            raise ValueError(
                f"budget {self.budget} is below one matvec per step for m = {self.steps}"
            )
        if self.truth_mode not in ("auto", "exact", "reference"):
            raise ValueError(f"unknown truth mode {self.truth_mode!r}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"fixed damping factor must lie in [0, 1], got {self.gamma}")


@dataclass
class ExperimentRecord:
    step: int
    estimate: float
    ground_truth: float | None
    abs_error: float | None
    rel_error: float | None
    scaled_error: float | None
    matvecs_step: int
    matvecs_cum: int
    gamma: float | None


@dataclass(frozen=True)
class _StepData:
    oracle: MatVecOracle
    truth: float | None
    fro_norm: float | None


# ---------------------------------------------------------------------------
# Budget allocation and probe translation
# ---------------------------------------------------------------------------


def allocate_budget(
    Q: int,
    m: int,
    scheme: str = "uniform",
    q: int | None = None,
    first_fraction: float = 1.0 / 3.0,
) -> list[int]:
    """Split a total budget Q into per-step budgets.

    ``uniform`` gives floor(Q/m) to every step.  ``restart_blocks`` divides Q
    evenly over ceil(m/q) blocks of q steps; within each block the first step
    receives ``first_fraction`` of the block budget and the rest is split
    evenly over the remaining steps.  Sums never exceed Q.
    """
    if Q < m:
        raise BudgetError(f"budget {Q} cannot cover {m} steps")
    if scheme == "uniform":
        return [Q // m] * m
    if scheme != "restart_blocks":
        raise ValueError(f"unknown allocation scheme {scheme!r}")
    if q is None or q < 1:
        raise ValueError("restart_blocks needs a positive block length q")
    if q > m:
        raise ValueError(f"block length {q} exceeds step count {m}")
    if not 0.0 < first_fraction < 1.0:
        raise ValueError(f"first_fraction must lie in (0, 1), got {first_fraction}")
    nblocks = math.ceil(m / q)
    block_budget = Q // nblocks
    budgets: list[int] = []
    remaining = m
    while remaining > 0:
        size = min(q, remaining)
        if size == 1:
            budgets.append(block_budget)
        else:
            first = int(block_budget * first_fraction)
            rest = (block_budget - first) // (size - 1)
            budgets.append(first)
            budgets.extend([rest] * (size - 1))
        remaining -= size
    return budgets


def _probes_from_budget(kind: str, step_budget: int, cost: int, count_mode: str) -> int:
    """Translate one step's budget into a probe count for the step kind.

    ``fresh`` steps spend one oracle call per probe, ``pair`` steps two (one
    per snapshot), and ``dspp`` steps split the translated count between two
    estimator calls.
    """
    if count_mode == "oracle_calls":
        return step_budget if kind != "dspp" else step_budget
    if kind == "fresh":
        return step_budget // cost
    if kind == "pair":
        return step_budget // (2 * cost)
    if kind == "dspp":
        return 2 * (step_budget // (3 * cost))
    raise ValueError(f"unknown step kind {kind!r}")


@dataclass(frozen=True)
class _PlanStep:
    kind: str  # "fresh" | "pair" | "dspp"
    ell: int


def _build_plan(config: ExperimentConfig, cost: int) -> list[_PlanStep]:
    m = config.steps
    if config.estimator == "restart":
        budgets = allocate_budget(
            config.budget,
            m,
            "restart_blocks",
            q=config.restart_every,
            first_fraction=config.first_fraction,
        )
    else:
        budgets = allocate_budget(config.budget, m, "uniform")

    def fresh_ell(b):
        if config.ell0 is not None:
            return config.ell0
        return _probes_from_budget("fresh", b, cost, config.count_mode)

    def pair_ell(b):
        if config.ell is not None:
            return config.ell
        return _probes_from_budget("pair", b, cost, config.count_mode)

    def dspp_ell(b):
        if config.ell is not None:
            return config.ell
        return _probes_from_budget("dspp", b, cost, config.count_mode)

    plan: list[_PlanStep] = []
    for j in range(1, m + 1):
        b = budgets[j - 1]
        if config.estimator == "hutchinson":
            ell = config.ell if config.ell is not None else _probes_from_budget(
                "fresh", b, cost, config.count_mode
            )
            plan.append(_PlanStep("fresh", ell))
        elif config.estimator == "restart":
            if j % config.restart_every == 1 or config.restart_every == 1:
                plan.append(_PlanStep("fresh", fresh_ell(b)))
            else:
                plan.append(_PlanStep("pair", pair_ell(b)))
        elif config.estimator == "deltashiftpp":
            if j == 1:
                plan.append(_PlanStep("fresh", fresh_ell(b)))
            else:
                plan.append(_PlanStep("dspp", dspp_ell(b)))
        else:  # norestart, deltashift_fixed, deltashift_auto
            if j == 1:
                plan.append(_PlanStep("fresh", fresh_ell(b)))
            else:
                plan.append(_PlanStep("pair", pair_ell(b)))
    _validate_plan(config, plan, cost)
    return plan


def _plan_cost(plan: list[_PlanStep], cost: int, count_mode: str) -> int:
    total = 0
    for step in plan:
        if count_mode == "oracle_calls":
            total += step.ell
        elif step.kind == "fresh":
            total += step.ell * cost
        elif step.kind == "pair":
            total += 2 * step.ell * cost
        else:  # dspp: ell//2 applies of A_j plus (ell - ell//2) paired applies
            total += (step.ell // 2) * cost + 2 * (step.ell - step.ell // 2) * cost
    return total


def _validate_plan(config: ExperimentConfig, plan: list[_PlanStep], cost: int) -> None:
    for j, step in enumerate(plan, start=1):
        minimum = 1
        if step.kind == "fresh" and config.estimator == "deltashiftpp":
            minimum = 3  # Hutch++ initialization needs all three phases
        if step.kind == "dspp":
            minimum = 6
        if step.ell < minimum:
            raise BudgetError(
                f"step {j} receives {step.ell} probes but {config.estimator} needs "
                f"at least {minimum}; raise the budget or lower the step count"
            )
    total = _plan_cost(plan, cost, config.count_mode)
    if total > config.budget:
        raise BudgetError(
            f"declared probe counts cost {total} against a budget of {config.budget}"
        )


# ---------------------------------------------------------------------------
# Sequence providers
# ---------------------------------------------------------------------------


def _base_graph(config: ExperimentConfig) -> DynamicGraph:
    if config.graph is not None:
        return load_edge_list(config.graph, fmt=config.graph_format)
    return random_graph(config.n, config.base_edge_prob, config.seed)


def _synth_steps(config: ExperimentConfig, want_exact: bool) -> Iterator[_StepData]:
    kind = {"low": "low_perturb", "high": "high_perturb", "stationary": "stationary"}[
        config.perturb
    ]
    spec = MatrixSequenceSpec(
        n=config.n,
        m=config.steps,
        kind=kind,
        seed=config.seed,
        rank=config.psd_rank,
        psd_scale=config.psd_scale,
    )
    for A in sequence_matrices(spec):
        truth = exact_trace(A) if want_exact else None
        fro = float(np.linalg.norm(A, "fro")) if want_exact else None
        yield _StepData(dense_oracle(A), truth, fro)


def _triangle_truth(graph: DynamicGraph) -> tuple[float, float]:
    """(tr(B^3), ||B^3||_F) from dense eigenvalues; the trace is an integer
    count and is rounded accordingly."""
    w = np.linalg.eigvalsh(graph.dense())
    return float(np.rint(np.sum(w**3))), float(np.sqrt(np.sum(w**6)))


def _triangles_steps(config: ExperimentConfig, want_exact: bool) -> Iterator[_StepData]:
    g = _base_graph(config)
    for j in range(1, config.steps + 1):
        if j > 1:
            if j <= config.delete_after:
                nodes = random_clique_nodes(
                    g.n, config.seed, j, config.clique_min, config.clique_max
                )
                g.add_clique(nodes)
            else:
                cid = choose_live_clique(g, config.seed, j)
                if cid is not None:
                    g.remove_clique(cid)
        if want_exact:
            truth, fro = _triangle_truth(g)
        else:
            truth, fro = None, None
        yield _StepData(triangle_count_oracle(g), truth, fro)


def _connectivity_steps(config: ExperimentConfig, want_exact: bool) -> Iterator[_StepData]:
    g = _base_graph(config)
    for j in range(1, config.steps + 1):
        if j > 1:
            g.add_random_edge(config.seed, j)
        base = adjacency_oracle(g)
        if want_exact:
            w = np.linalg.eigvalsh(g.dense())
            truth = float(np.sum(np.exp(w)))
            fro = float(np.sqrt(np.sum(np.exp(2.0 * w))))
        else:
            truth, fro = None, None
        yield _StepData(expm_lanczos_oracle(base, k=config.lanczos_k), truth, fro)


def _moments_steps(config: ExperimentConfig, want_exact: bool) -> Iterator[_StepData]:
    if config.cheb_degree < 1:
        raise ValueError("moment tracking needs a polynomial degree of at least 1")
    spec = MatrixSequenceSpec(
        n=config.n, m=config.steps, kind="low_perturb", seed=config.seed
    )
    scaling: ChebyshevScaling | None = None
    for H in sequence_matrices(spec):
        base = dense_oracle(H)
        if scaling is None:
            # Scaling is fixed from the first snapshot; the sequence drifts
            # slowly and the margin absorbs the drift.
            scaling = scaling_from_power_iteration(
                base, config.power_iters, config.seed, margin=config.scale_margin
            )
        if want_exact:
            scaled = H / scaling.scale if scaling.scale > 0 else H * 0.0
            w = np.linalg.eigvalsh(scaled)
            coeffs = np.zeros(config.cheb_degree + 1)
            coeffs[config.cheb_degree] = 1.0
            vals = np.polynomial.chebyshev.chebval(w, coeffs)
            truth = float(np.sum(vals))
            fro = float(np.sqrt(np.sum(vals**2)))
        else:
            truth, fro = None, None
        yield _StepData(chebyshev_oracle(base, scaling, config.cheb_degree), truth, fro)


_PROVIDERS = {
    "synth": _synth_steps,
    "triangles": _triangles_steps,
    "connectivity": _connectivity_steps,
    "moments": _moments_steps,
}


def _oracle_call_cost(config: ExperimentConfig) -> int:
    if config.experiment == "triangles":
        return 3
    if config.experiment == "connectivity":
        return config.lanczos_k
    if config.experiment == "moments":
        return config.cheb_degree
    return 1


def _wants_exact_truth(config: ExperimentConfig) -> bool:
    if config.truth_mode == "exact":
        return True
    if config.truth_mode == "reference":
        return False
    return config.n <= _DENSE_TRUTH_LIMIT


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------


def run_experiment(config: ExperimentConfig) -> list[ExperimentRecord]:
    records, _ = run_experiment_with_ledger(config)
    return records


def run_experiment_with_ledger(
    config: ExperimentConfig,
) -> tuple[list[ExperimentRecord], MatVecLedger]:
    """Run one experiment; returns per-step records and the matvec ledger.

    The ledger counts base multiplications for the estimator only; reference
    ground-truth estimates (used when dense truth is out of reach) draw from
    a separate probe stream and are never charged against the budget.
    """
    cost = _oracle_call_cost(config)
    plan = _build_plan(config, cost)
    want_exact = _wants_exact_truth(config)
    provider = _PROVIDERS[config.experiment]

    ledger = MatVecLedger()
    records: list[ExperimentRecord] = []
    state: est.EstimatorState | None = None
    prev_raw: MatVecOracle | None = None

    for j, data in enumerate(provider(config, want_exact), start=1):
        step_plan = plan[j - 1]
        cur = counted(data.oracle, ledger, j)
        gamma_used: float | None = None

        if j == 1:
            ell0 = step_plan.ell
            if config.estimator == "deltashiftpp":
                state = est.deltashiftpp_init(cur, ell0, config.seed)
            else:
                state = est.deltashift_init(cur, ell0, config.seed)
            t = state.t
        elif config.estimator == "hutchinson" or step_plan.kind == "fresh":
            batch = rademacher_batch(config.seed, j, step_plan.ell, data.oracle.dim)
            t = est.hutchinson(cur, step_plan.ell, batch)
            state = est.EstimatorState(
                t=t, v=0.0, step=j, seed=config.seed, ell=step_plan.ell, ell0=step_plan.ell
            )
        else:
            prev = counted(prev_raw, ledger, j)
            if config.estimator == "norestart" or config.estimator == "restart":
                state, t = est.norestart_step(state, prev, cur, step_plan.ell)
            elif config.estimator == "deltashift_fixed":
                state, t = est.deltashift_fixed_step(
                    state, prev, cur, step_plan.ell, config.gamma
                )
                gamma_used = config.gamma
            elif config.estimator == "deltashift_auto":
                state, t = est.deltashift_auto_step(state, prev, cur, step_plan.ell)
                gamma_used = state.gamma_last
            elif config.estimator == "deltashiftpp":
                state, t = est.deltashiftpp_step(
                    state, prev, cur, step_plan.ell, reuse_sketch=config.dspp_reuse
                )
                gamma_used = state.gamma_last
            else:
                raise AssertionError(config.estimator)

        truth = data.truth
        fro = data.fro_norm
        if not want_exact:
            truth = _reference_truth(config, data.oracle, j, cost)

        abs_err = abs(t - truth) if truth is not None else None
        rel_err = abs_err / abs(truth) if truth not in (None, 0.0) else None
        scaled_err = abs_err / fro if (abs_err is not None and fro) else None
        records.append(
            ExperimentRecord(
                step=j,
                estimate=t,
                ground_truth=truth,
                abs_error=abs_err,
                rel_error=rel_err,
                scaled_error=scaled_err,
                matvecs_step=ledger.step_base(j),
                matvecs_cum=ledger.total_base_matvecs,
                gamma=gamma_used,
            )
        )
        prev_raw = data.oracle
    return records, ledger


def _reference_truth(
    config: ExperimentConfig, raw_oracle: MatVecOracle, step: int, cost: int
) -> float:
    """High-budget Hutchinson stand-in when dense truth is unavailable.

    Uses ``reference_factor`` times the per-step fresh budget on a dedicated
    probe stream; a reference, not an exact value, and labeled as such in the
    output header.
    """
    base_budget = config.budget // config.steps
    ell = max(
        1,
        config.reference_factor
        * max(1, _probes_from_budget("fresh", base_budget, cost, config.count_mode)),
    )
    batch = rademacher_batch(config.seed, step, ell, raw_oracle.dim, stream=REFERENCE)
    return est.hutchinson(raw_oracle, ell, batch)


# ---------------------------------------------------------------------------
# Records on disk
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_records(
    records: list[ExperimentRecord], path, config: ExperimentConfig | None = None
) -> None:
    """Write records as CSV with the full configuration echoed as comments."""
    lines: list[str] = []
    if config is not None:
        for f in fields(config):
            lines.append(f"# {f.name}={_fmt(getattr(config, f.name))}")
        lines.append(f"# ground_truth_mode={'exact' if _wants_exact_truth(config) else 'reference'}")
    lines.append(CSV_HEADER)
    for r in records:
        lines.append(
            ",".join(
                _fmt(v)
                for v in (
                    r.step,
                    r.estimate,
                    r.ground_truth,
                    r.abs_error,
                    r.rel_error,
                    r.scaled_error,
                    r.matvecs_step,
                    r.matvecs_cum,
                    r.gamma,
                )
            )
        )
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"failed to write records to {path}: {exc}") from exc


def read_records(path) -> list[ExperimentRecord]:
    """Parse a records CSV back into record objects (comments are skipped)."""

    def parse(text: str, kind):
        return kind(text) if text else None

    records = []
    with open(path, "r", encoding="utf-8") as handle:
        rows = [line.rstrip("\n") for line in handle if not line.startswith("#")]
    if not rows or rows[0] != CSV_HEADER:
        raise ValueError(f"{path} does not start with the expected header")
    for row in rows[1:]:
        if not row:
            continue
        parts = row.split(",")
        records.append(
            ExperimentRecord(
                step=int(parts[0]),
                estimate=float(parts[1]),
                ground_truth=parse(parts[2], float),
                abs_error=parse(parts[3], float),
                rel_error=parse(parts[4], float),
                scaled_error=parse(parts[5], float),
                matvecs_step=int(parts[6]),
                matvecs_cum=int(parts[7]),
                gamma=parse(parts[8], float),
            )
        )
    return records
