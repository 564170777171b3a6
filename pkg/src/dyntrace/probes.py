"""Seeded Rademacher probe vectors and the quadratic-form kernel shared by all estimators.

Every random draw in the package goes through a counter-based Philox stream
keyed by ``(seed, step, stream)``.  The key fully determines the output, so a
probe batch can be regenerated bit-identically from its coordinates, and
batches drawn for different time steps or purposes never overlap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1
_STEP_MASK = (1 << 48) - 1
_STREAM_MASK = (1 << 16) - 1

# Stream tags.  Distinct tags put draws for different purposes on disjoint
# Philox keys even when they share (seed, step).
ESTIMATE = 0  # per-step estimator probe batches
SKETCH = 1  # Hutch++ range sketch
RESIDUAL = 2  # Hutch++ residual probes
SKETCH_DELTA = 3  # second Hutch++ call inside a combined step
RESIDUAL_DELTA = 4
POWER_START = 5  # power-iteration start vector
SYNTH = 6  # synthetic matrix generators
GRAPH = 7  # dynamic-graph update choices
REFERENCE = 8  # high-budget reference estimates, never shared with estimators


def generator(seed: int, step: int, stream: int = ESTIMATE) -> np.random.Generator:
    """Counter-based generator keyed by (seed, step, stream)."""
    if step < 0:
        raise ValueError(f"step must be nonnegative, got {step}")
    key = np.array(
        [seed & _MASK64, ((step & _STEP_MASK) << 16) | (stream & _STREAM_MASK)],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class ProbeBatch:
    """A reproducible batch of +-1 probe vectors for one (seed, step) pair."""

    seed: int
    step: int
    vectors: np.ndarray  # (count, dim), float64, entries exactly +-1
    stream: int = ESTIMATE

    @property
    def count(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def rademacher_batch(
    seed: int, step: int, count: int, dim: int, stream: int = ESTIMATE
) -> ProbeBatch:
    """Draw ``count`` Rademacher probes of dimension ``dim``.

    The batch is a pure function of (seed, step, count, dim, stream):
    regenerating with the same coordinates yields identical vectors, and
    distinct (seed, step) pairs give statistically independent batches.
    """
    if count < 1:
        raise ValueError(f"count must be positive, got {count}")
    if dim < 1:
        raise ValueError(f"dim must be positive, got {dim}")
    bits = generator(seed, step, stream).integers(0, 2, size=(count, dim), dtype=np.int8)
    vectors = bits.astype(np.float64)
    vectors *= 2.0
    vectors -= 1.0
    vectors.setflags(write=False)
    return ProbeBatch(seed=seed, step=step, vectors=vectors, stream=stream)


def quadratic_samples(oracle, batch: ProbeBatch):
    """Apply an oracle to every probe and return (responses, quadratic forms).

    ``responses[i] = A g_i`` and ``forms[i] = g_i^T A g_i``.  Exactly
    ``batch.count`` oracle applies are consumed; callers reuse the cached
    responses for damping selection and variance tracking so no product is
    ever recomputed.
    """
    if oracle.dim != batch.dim:
        raise ValueError(
            f"oracle dimension {oracle.dim} does not match probe dimension {batch.dim}"
        )
    responses = oracle.apply_mat(batch.vectors.T).T
    forms = np.einsum("ij,ij->i", batch.vectors, responses)
    return responses, forms
