"""Exact conditional inference on an observation window.

Everything here conditions the hidden chain on a slice x_{l:n} of the
observed path.  The central object is :class:`WindowSmoother`, a shared
forward/backward workspace over one path; the public operations
(:func:`forward_backward`, :func:`smoothing_block`, :func:`f_matrix`,
:func:`u_matrix`, :func:`pmap_decode`) are thin wrappers over it.

Time indices are 1-based to match the window notation (l, t, n); internal
arrays are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .models import FiniteObs, PairwiseModel, _as_obs_array
from .util import NEG_INF, log_matmul

__all__ = [
    "ZeroLikelihoodError",
    "InvalidWindowError",
    "BlockDistribution",
    "ConditionalTransition",
    "WindowSmoother",
    "forward_backward",
    "smoothing_block",
    "f_matrix",
    "u_matrix",
    "pmap_decode",
    "MAX_BLOCK_LEN",
]

#: hidden-block distributions are dense vectors over Y^m; cap m so the
#: |Y|^m explosion stays accidental-proof (raise the cap deliberately if needed)
MAX_BLOCK_LEN = 8


class ZeroLikelihoodError(ValueError):
    """The conditioning window has zero likelihood under the model."""

    def __init__(self, message: str, first_dead_time: int | None = None):
        super().__init__(message)
        self.first_dead_time = first_dead_time


class InvalidWindowError(ValueError):
    """The window does not satisfy the preconditions of the requested matrix."""


@dataclass(frozen=True)
class BlockDistribution:
    """Conditional law of the hidden block Y_{t:t+m-1} given X_{l:n}.

    ``probs`` is a vector over Y^m in lexicographic order.  ``truncated_at``
    records, when set, that the window stands in for an unbounded one and was
    cut at that index.
    """

    t: int
    l: int
    n: int
    m: int
    probs: np.ndarray
    truncated_at: int | None = None

    def marginalize_last(self) -> "BlockDistribution":
        """Sum out the last block coordinate."""
        if self.m < 2:
            raise ValueError("nothing to marginalize for m = 1")
        ny = round(len(self.probs) ** (1.0 / self.m))
        probs = self.probs.reshape((ny,) * self.m).sum(axis=-1).reshape(-1)
        return BlockDistribution(self.t, self.l, self.n, self.m - 1, probs, self.truncated_at)


@dataclass(frozen=True)
class ConditionalTransition:
    """Row-stochastic matrix of hidden-block probabilities given a start state.

    ``kind`` is "F" for the generic k-step block transition and "U" for the
    r-block matrix with the reference-law fallback on dead rows.
    ``fallback_rows`` lists rows whose conditional likelihood was zero and
    which were filled by convention (uniform for F, reference law for U).
    """

    kind: str
    k: int
    m: int
    s: int
    n: int
    matrix: np.ndarray
    fallback_rows: tuple[int, ...] = ()


def _enumerate_blocks(ny: int, m: int) -> np.ndarray:
    """(ny^m, m) array of hidden blocks in lexicographic order."""
    if m == 1:
        return np.arange(ny, dtype=np.int64)[:, None]
    grids = np.meshgrid(*([np.arange(ny, dtype=np.int64)] * m), indexing="ij")
    return np.stack(grids, axis=-1).reshape(-1, m)


class WindowSmoother:
    """Forward/backward workspace over one observation path x_{1:T}.

    Forward passes are cached per window start (and per initial-law override);
    backward passes are computed in one batched sweep for all requested window
    ends.  All quantities are log-space with exact -inf zeros.
    """

    def __init__(self, model: PairwiseModel, xs):
        self.model = model
        self.xs = _as_obs_array(model.obs_space, xs)
        self.T = len(self.xs)
        self.ny = model.n_states
        if self.T < 1:
            raise ValueError("empty observation path")
        self.logM = model.step_log_matrices(self.xs) if self.T > 1 else np.zeros((0, self.ny, self.ny))
        self._fwd: dict = {}
        self._bwd: dict[int, np.ndarray] = {}

    # -- forward -------------------------------------------------------------

    def forward(self, l: int, init_override=None) -> np.ndarray:
        """(T, Y) log forward weights for the window starting at time l.

        Row t-1 holds log p(x_{l:t}, Y_t = i) under the chain's marginal law
        at time l (rows before l are -inf).
        """
        key = (l, None if init_override is None else id(init_override))
        got = self._fwd.get(key)
        if got is not None:
            return got
        alpha = np.full((self.T, self.ny), NEG_INF)
        alpha[l - 1] = self.model.window_start_log(self.xs, l, init_override)
        for t in range(l, self.T):
            alpha[t] = logsumexp(alpha[t - 1][:, None] + self.logM[t - 1], axis=0)
        self._fwd[key] = alpha
        return alpha

    # -- backward ------------------------------------------------------------

    def ensure_backwards(self, ns) -> None:
        """Batched backward sweep filling the cache for every n in ``ns``."""
        todo = sorted({int(n) for n in ns} - set(self._bwd))
        if not todo:
            return
        for n in todo:
            if not 1 <= n <= self.T:
                raise ValueError(f"window end {n} outside path of length {self.T}")
        cols = {n: k for k, n in enumerate(todo)}
        betas = np.full((len(todo), self.T, self.ny), NEG_INF)
        active = np.full((self.ny, len(todo)), NEG_INF)
        alive = np.zeros(len(todo), dtype=bool)
        for t in range(self.T, 0, -1):
            if t in cols:
                k = cols[t]
                active[:, k] = 0.0
                alive[k] = True
            if alive.any():
                betas[alive, t - 1, :] = active[:, alive].T
            if t > 1 and alive.any():
                active = logsumexp(self.logM[t - 2][:, :, None] + active[None, :, :], axis=1)
        for n, k in cols.items():
            self._bwd[n] = betas[k]

    def backward(self, n: int) -> np.ndarray:
        """(T, Y) log backward weights, row t-1 = log p(x_{t+1:n} | x_t, Y_t=i)."""
        if n not in self._bwd:
            self.ensure_backwards([n])
        return self._bwd[n]

    # -- likelihood ----------------------------------------------------------

    def loglik(self, l: int, n: int) -> float:
        return float(logsumexp(self.forward(l)[n - 1]))

    def first_dead_time(self, l: int, n: int) -> int | None:
        """First t in [l, n] at which all forward mass vanishes, if any."""
        alpha = self.forward(l)
        dead = ~np.isfinite(logsumexp(alpha[l - 1:n], axis=1))
        idx = np.flatnonzero(dead)
        return int(idx[0]) + l if idx.size else None

    def require_positive(self, l: int, n: int, init_override=None) -> None:
        alpha = self.forward(l, init_override)
        tot = logsumexp(alpha[n - 1])
        if not np.isfinite(tot):
            dead = self.first_dead_time(l, n) if init_override is None else None
            raise ZeroLikelihoodError(
                f"window [{l}:{n}] has zero likelihood"
                + (f" (forward mass vanishes at t={dead})" if dead is not None else ""),
                first_dead_time=dead,
            )

    # -- marginals and blocks --------------------------------------------------

    def log_marginals(self, l: int, n: int, init_override=None) -> np.ndarray:
        """(n-l+1, Y) normalized log smoothing marginals for t = l..n."""
        alpha = self.forward(l, init_override)
        beta = self.backward(n)
        joint = alpha[l - 1:n] + beta[l - 1:n]
        tot = logsumexp(joint, axis=1, keepdims=True)
        if not np.all(np.isfinite(tot)):
            self.require_positive(l, n, init_override)
        return joint - tot

    def block_log_probs(self, t: int, l: int, n: int, m: int, init_override=None) -> np.ndarray:
        """(Y^m,) normalized log probabilities of Y_{t:t+m-1} given x_{l:n}.

        The block may extend past the window end; the overhang is handled by
        marginalizing the unobserved future of the chain.
        """
        if not (1 <= l <= t <= n <= self.T):
            raise ValueError(f"need 1 <= l <= t <= n <= {self.T}, got l={l}, t={t}, n={n}")
        if m < 1:
            raise ValueError("block length must be >= 1")
        if m > MAX_BLOCK_LEN:
            raise ValueError(f"block length {m} exceeds cap {MAX_BLOCK_LEN}")
        alpha = self.forward(l, init_override)
        beta = self.backward(n)
        blocks = _enumerate_blocks(self.ny, m)
        m_in = min(m, n - t + 1)
        score = alpha[t - 1][blocks[:, 0]].copy()
        for a in range(1, m_in):
            score += self.logM[t + a - 2][blocks[:, a - 1], blocks[:, a]]
        if m_in == m:
            score += beta[t + m - 2][blocks[:, m - 1]]
        else:
            # block overhangs the window: steps past n use the kernel with the
            # future observations integrated out
            score += self.model.predictive_path_logweights(
                self.xs[n - 1], blocks[:, m_in - 1], blocks[:, m_in:]
            )
        tot = logsumexp(score)
        if not np.isfinite(tot):
            self.require_positive(l, n, init_override)
            raise ZeroLikelihoodError(f"no hidden block has positive mass on window [{l}:{n}]")
        return score - tot

    # -- conditional transition matrices ---------------------------------------

    def step_product(self, s: int, t: int) -> np.ndarray:
        """(Y, Y) log matrix of hidden-path weights from time s to time t."""
        if t == s:
            out = np.full((self.ny, self.ny), NEG_INF)
            np.fill_diagonal(out, 0.0)
            return out
        out = self.logM[s - 1]
        for a in range(s, t - 1):
            out = log_matmul(out, self.logM[a])
        return out

    def f_rows(self, s: int, n: int, k: int, m: int) -> tuple[np.ndarray, np.ndarray]:
        """Unnormalized (Y, Y^m) log scores for the block started k steps after s,
        plus the (Y,) log conditional likelihood of the window tail per start state."""
        t = s + k
        if t > n:
            raise InvalidWindowError(f"block start {t} lies beyond window end {n}")
        if m > MAX_BLOCK_LEN:
            raise ValueError(f"block length {m} exceeds cap {MAX_BLOCK_LEN}")
        beta = self.backward(n)
        blocks = _enumerate_blocks(self.ny, m)
        m_in = min(m, n - t + 1)
        prod = self.step_product(s, t)  # (Y, Y)
        inner = np.zeros(len(blocks))
        for a in range(1, m_in):
            inner += self.logM[t + a - 2][blocks[:, a - 1], blocks[:, a]]
        if m_in == m:
            inner += beta[t + m - 2][blocks[:, m - 1]]
        else:
            inner += self.model.predictive_path_logweights(
                self.xs[n - 1], blocks[:, m_in - 1], blocks[:, m_in:]
            )
        scores = prod[:, blocks[:, 0]] + inner[None, :]
        dens = logsumexp(scores, axis=1)
        return scores, dens


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def forward_backward(model: PairwiseModel, xs, l: int = 1, n: int | None = None):
    """Log forward vectors, log backward vectors and total log-likelihood.

    Returns arrays of shape (n-l+1, Y) aligned with t = l..n.  Normalizing
    exp(forward + backward) per time gives the smoothing marginals.  Raises
    :class:`ZeroLikelihoodError` naming the first dead time index when the
    window has zero likelihood.
    """
    sm = WindowSmoother(model, xs)
    n = sm.T if n is None else n
    sm.require_positive(l, n)
    alpha = sm.forward(l)[l - 1:n]
    beta = sm.backward(n)[l - 1:n]
    return alpha, beta, sm.loglik(l, n)


def smoothing_block(model: PairwiseModel, xs, t: int, m: int = 1,
                    l: int = 1, n: int | None = None,
                    truncated_at: int | None = None) -> BlockDistribution:
    """Conditional law of Y_{t:t+m-1} given the window x_{l:n}.

    The block may extend beyond n (the overhang is predictive).  ``xs`` is the
    full path from time 1; l, t, n are absolute time indices.
    """
    sm = WindowSmoother(model, xs)
    n = sm.T if n is None else n
    logp = sm.block_log_probs(t, l, n, m)
    return BlockDistribution(t=t, l=l, n=n, m=m, probs=np.exp(logp), truncated_at=truncated_at)


def f_matrix(model: PairwiseModel, xs, k: int, m: int = 1) -> ConditionalTransition:
    """Block transition matrix on the window: entry (u, v) is the probability
    that the hidden block starting k steps after the window start equals v,
    given the whole window and a hidden start state u.

    Rows whose start state gives the window tail zero likelihood are filled
    uniformly and reported in ``fallback_rows``; downstream bound computations
    must not rely on them.
    """
    if k < 0 or m < 1:
        raise ValueError("need k >= 0 and m >= 1")
    sm = WindowSmoother(model, xs)
    n = sm.T
    scores, dens = sm.f_rows(1, n, k, m)
    matrix = np.empty_like(scores)
    dead = ~np.isfinite(dens)
    for u in range(sm.ny):
        if dead[u]:
            matrix[u] = 1.0 / scores.shape[1]
        else:
            matrix[u] = np.exp(scores[u] - dens[u])
    return ConditionalTransition(
        kind="F", k=k, m=m, s=1, n=n, matrix=matrix,
        fallback_rows=tuple(int(u) for u in np.flatnonzero(dead)),
    )


def _lambda_log(sm: WindowSmoother, r: int, n: int, proj2) -> np.ndarray:
    """Log of the reference law on the window tail, supported on proj2."""
    beta = sm.backward(n)
    lam = np.full(sm.ny, NEG_INF)
    idx = sorted(proj2)
    lam[idx] = beta[r - 1][idx]
    logc = logsumexp(lam)
    if not np.isfinite(logc):
        raise InvalidWindowError(
            "window tail has zero mass from every admissible state at the block end"
        )
    return lam - logc


def u_matrix(model: PairwiseModel, xs, cert) -> ConditionalTransition:
    """The r-block conditional transition matrix with the certificate's
    reference-law fallback on rows of zero conditional likelihood.

    Requires the leading r observations to belong to the certificate's block
    set.  On live rows this equals the plain block transition; dead rows carry
    the reference law, which for a window of exactly r observations is uniform
    on the certified second projection.
    """
    sm = WindowSmoother(model, xs)
    n = sm.T
    r = cert.r
    if n < r:
        raise InvalidWindowError(f"window of length {n} shorter than block length {r}")
    head = sm.xs[:r]
    if not cert.contains_block(head):
        raise InvalidWindowError("leading block of the window is not in the certified set")
    lam = _lambda_log(sm, r, n, cert.y_plus.proj2)
    scores, dens = sm.f_rows(1, n, r - 1, 1)
    matrix = np.empty((sm.ny, sm.ny))
    dead = ~np.isfinite(dens)
    for u in range(sm.ny):
        matrix[u] = np.exp(lam) if dead[u] else np.exp(scores[u] - dens[u])
    return ConditionalTransition(
        kind="U", k=r - 1, m=1, s=1, n=n, matrix=matrix,
        fallback_rows=tuple(int(u) for u in np.flatnonzero(dead)),
    )


def pmap_decode(model: PairwiseModel, xs, l: int = 1, n: int | None = None) -> np.ndarray:
    """Pointwise most probable hidden state at every time of the window.

    Ties go to the lowest state index (np.argmax semantics), so the decoding
    is deterministic.
    """
    sm = WindowSmoother(model, xs)
    n = sm.T if n is None else n
    sm.require_positive(l, n)
    logm = sm.log_marginals(l, n)
    return np.argmax(logm, axis=1)
