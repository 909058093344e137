"""Parametric bootstrap for the raw Wald, LR, score and gradient statistics.

Bootstrap responses are drawn from the restricted fit,
``y* = X beta~ + phi~ eps*`` with ``eps*`` from the fitted error law, and
both models are refitted to each of them.  Replicate ``j`` draws from its
own random stream derived from ``(seed, j)``, so the replicates do not
depend on how the work is split across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial

import numpy as np

from ._parallel import run_chunks
from .design import DesignPartition
from .distcore import kernel
from .estimate import ConvergenceError, FitResult, ModelSpec, fit, fit_batch, fit_restricted
from .testsuite import RAW, statistics, statistics_batch

__all__ = ["BootstrapResult", "BootstrapFailure", "bootstrap_test", "replicate_statistics", "stream"]

MAX_FAILURE_RATE = 0.01
CHUNK = 256
_BOOT_DOMAIN = 0xB007


class BootstrapFailure(RuntimeError):
    """More than 1% of the bootstrap refits failed."""


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the work item labelled ``key``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class BootstrapResult:
    """Bootstrap distribution of one statistic.

    ``replicates`` holds the statistics of successful refits in replicate
    order; failed refits are counted in ``failures`` and left out.
    """

    statistic_name: str
    observed: float
    replicates: np.ndarray
    seed: int
    failures: int = 0

    @property
    def B(self) -> int:
        return int(self.replicates.size)

    @property
    def pvalue(self) -> float:
        """``(1 + #{replicates >= observed}) / (B + 1)``."""
        return float((1 + np.count_nonzero(self.replicates >= self.observed)) / (self.B + 1))

    def critical_value(self, alpha: float) -> float:
        """The ``ceil((1 - alpha)(B + 1))``-th smallest replicate (``inf`` past ``B``)."""
        if not 0 < alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        k = math.ceil((1.0 - alpha) * (self.B + 1) - 1e-9)
        if k > self.B:
            return math.inf
        return float(np.partition(self.replicates, k - 1)[k - 1])

    def rejects(self, alpha: float) -> bool:
        return self.pvalue <= alpha

    def to_json(self) -> dict:
        return {
            "observed": self.observed,
            "B": self.B,
            "failures": self.failures,
            "seed": self.seed,
            "pvalue": self.pvalue,
            "critical_values": {str(a): _finite(self.critical_value(a)) for a in (0.1, 0.05, 0.01)},
        }


def _finite(x):
    return x if math.isfinite(x) else None


def _replicate_chunk(args, *, partition, law, mean, phi, seed, key):
    lo, hi = args
    n = partition.n
    eps = np.empty((n, hi - lo))
    for j in range(lo, hi):
        eps[:, j - lo] = law.sample(stream(seed, *key, j), n)
    Y = mean[:, None] + phi * eps
    fu = fit_batch(partition.X, Y, law)
    fr = fit_batch(partition.X2, Y - partition.offset[:, None], law)
    out = statistics_batch(partition, law, Y, fu, fr)
    ok = fu.ok & fr.ok
    return np.vstack([out[k] for k in RAW]), ok


def replicate_statistics(partition: DesignPartition, law, beta_null, phi_null: float, B: int, seed: int,
                         key=(_BOOT_DOMAIN,), threads: int = 1):
    """Raw statistics of ``B`` parametric bootstrap samples.

    Returns ``(stats, ok)``: a ``(4, B)`` array in the order of
    :data:`~symreg.testsuite.RAW` and a boolean mask of successful refits.
    """
    if B < 1:
        raise ValueError("B must be at least 1")
    law = kernel(law)
    mean = partition.X @ np.asarray(beta_null, dtype=float)
    chunks = [(lo, min(lo + CHUNK, B)) for lo in range(0, B, CHUNK)]
    work = partial(_replicate_chunk, partition=partition, law=law, mean=mean, phi=float(phi_null),
                   seed=seed, key=tuple(key))
    parts = run_chunks(work, chunks, threads)
    stats = np.hstack([p[0] for p in parts])
    ok = np.concatenate([p[1] for p in parts])
    return stats, ok


def bootstrap_test(spec: ModelSpec, fits: tuple[FitResult, FitResult] | None = None, B: int = 600,
                   seed: int = 0, *, threads: int = 1) -> dict[str, BootstrapResult]:
    """Parametric bootstrap of ``S_W``, ``S_LR``, ``S_R`` and ``S_T``.

    Parameters
    ----------
    spec : ModelSpec
        Data and hypothesis.
    fits : (FitResult, FitResult), optional
        Unrestricted and restricted fits of ``spec``; computed if omitted.
    B : int
        Number of bootstrap samples.
    seed : int
        Seed of the per-replicate streams; equal seeds give identical
        replicates.

    Returns
    -------
    dict
        :class:`BootstrapResult` keyed by ``s_w``, ``s_lr``, ``s_r``, ``s_t``.

    Raises
    ------
    BootstrapFailure
        If more than 1% of the refits fail.
    """
    part = spec.partition
    law = spec.family
    fu, fr = fits if fits is not None else (fit(spec), fit_restricted(spec))
    if not fr.converged:
        raise ConvergenceError("restricted fit did not converge; cannot bootstrap", fr.trace)
    observed = statistics(fu, fr, part, law, spec.y)
    stats, ok = replicate_statistics(part, law, fr.beta_hat, fr.phi_hat, B, seed, threads=threads)
    failures = int(B - ok.sum())
    if failures > MAX_FAILURE_RATE * B:
        raise BootstrapFailure(f"{failures} of {B} bootstrap refits failed (limit {MAX_FAILURE_RATE:.0%})")
    return {
        name: BootstrapResult(name, float(obs), stats[i, ok].copy(), int(seed), failures)
        for i, (name, obs) in enumerate(zip(RAW, observed))
    }
