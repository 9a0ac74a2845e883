"""Shared numeric and concurrency helpers."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.special import logsumexp

NEG_INF = -np.inf


def rng_from(seed: int, *path: int) -> np.random.Generator:
    """Generator derived from a root seed and an index path.

    The same (seed, path) always yields the same stream, so replicate k of an
    experiment can be re-run in isolation.
    """
    entropy = (int(seed),) + tuple(int(p) for p in path)
    return np.random.default_rng(np.random.SeedSequence(entropy))


def log_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of two log-weight matrices, (i,k) -> LSE_j a[i,j]+b[j,k]."""
    return logsumexp(a[..., :, :, None] + b[..., None, :, :], axis=-2)


def log_vecmat(v: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Row vector times matrix in log space."""
    return logsumexp(v[:, None] + m, axis=0)


def log_matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Matrix times column vector in log space."""
    return logsumexp(m + v[None, :], axis=1)


def normalized_exp(logw: np.ndarray, axis: int = -1) -> np.ndarray:
    """exp(logw) normalized to sum 1 along ``axis``; requires finite total mass."""
    tot = logsumexp(logw, axis=axis, keepdims=True)
    if not np.all(np.isfinite(tot)):
        raise ValueError("cannot normalize: total mass is zero")
    return np.exp(logw - tot)


def thread_count() -> int:
    raw = os.environ.get("PMMF_THREADS", "").strip()
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return 1


def replicate_map(fn, n: int, threads: int | None = None) -> list:
    """Apply ``fn`` to replicate indices 0..n-1, optionally in a thread pool.

    Results come back ordered by index, so the output is identical no matter
    how many workers ran.
    """
    workers = threads if threads is not None else thread_count()
    if workers <= 1 or n <= 1:
        return [fn(k) for k in range(n)]
    with ThreadPoolExecutor(max_workers=min(workers, n)) as ex:
        return list(ex.map(fn, range(n)))
