"""Pointwise-MAP segmentation: expected classification error of a window and
Monte-Carlo estimation of the asymptotic per-symbol error constant.

The decoded path maximizes each time's smoothing marginal, which minimizes
the expected number of classification errors; the per-symbol error of that
path along a stationary run converges to a model-intrinsic constant that
measures how hard the model is to segment (0 means perfectly recoverable).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .conditions import ForgettingCertificate
from .forgetting import _kappa_from_mask, _reversed_certificate
from .inference import WindowSmoother
from .models import (
    PairwiseModel,
    sample_trajectory,
    with_stationary_start,
)
from .util import NEG_INF

__all__ = [
    "SegmentationResult",
    "expected_error",
    "REstimateConfig",
    "REstimate",
    "estimate_R",
]


@dataclass(frozen=True)
class SegmentationResult:
    path: np.ndarray
    per_t_confidence: np.ndarray
    expected_errors: float
    normalized_error: float

    def to_json_dict(self) -> dict:
        return {
            "path": [int(y) for y in self.path],
            "per_t_confidence": [float(c) for c in self.per_t_confidence],
            "expected_errors": self.expected_errors,
            "normalized_error": self.normalized_error,
        }


def expected_error(model: PairwiseModel, xs, l: int = 1, n: int | None = None) -> SegmentationResult:
    """Decode the window pointwise and report its expected classification loss.

    The expected number of errors of the decoded path is the window length
    minus the summed per-time confidences (the maxima of the smoothing
    marginals), which no other path can improve on.
    """
    sm = WindowSmoother(model, xs)
    n = sm.T if n is None else n
    sm.require_positive(l, n)
    logm = sm.log_marginals(l, n)
    probs = np.exp(logm)
    path = np.argmax(probs, axis=1)
    conf = probs[np.arange(probs.shape[0]), path]
    errors = float(len(conf) - conf.sum())
    return SegmentationResult(
        path=path,
        per_t_confidence=conf,
        expected_errors=errors,
        normalized_error=errors / len(conf),
    )


# ---------------------------------------------------------------------------
# Per-symbol error constant
# ---------------------------------------------------------------------------

@dataclass
class REstimateConfig:
    """Sliding truncated-window estimator of the per-symbol error constant.

    ``burn_l`` / ``burn_s`` are the window overhangs on each side of t;
    ``burn_l=None`` anchors every window at time 1 (full left history), and
    the default "auto" sizes both overhangs from the certificate so that the
    two-sided envelope would be at most 1e-6 if certified blocks occurred at
    unit rate (the realized envelope is always reported).  Windows never
    extend past the simulated path.
    """

    n_total: int = 20_000
    burn_l: object = "auto"
    burn_s: object = "auto"
    seed: int = 0
    stationary_start: bool = True
    allow_unbounded: bool = False
    n_batches: int = 30
    chunk: int = 2048

    def resolve_burns(self, cert: ForgettingCertificate | None) -> tuple[int | None, int]:
        burn_l, burn_s = self.burn_l, self.burn_s
        if burn_l == "auto" or burn_s == "auto":
            if cert is None:
                raise ValueError("without a certificate the window overhangs must be given")
            steps = math.ceil(math.log(1e-6 / 2.0) / math.log(cert.rho)) * cert.r_prime
            if burn_s == "auto":
                burn_s = steps
            if burn_l == "auto":
                burn_l = steps
        if burn_l is not None:
            burn_l = int(burn_l)
        return burn_l, int(burn_s)


@dataclass(frozen=True)
class REstimate:
    r_hat: float
    stderr: float
    window_bound: float | None
    window_bound_max: float | None
    n_total: int
    seed: int
    burn_l: int | None
    burn_s: int
    n_windows: int

    def to_json_dict(self) -> dict:
        return {
            "R_hat": self.r_hat,
            "stderr": self.stderr,
            "window_bound": self.window_bound,
            "n_total": self.n_total,
            "seed": self.seed,
        }


def _batch_stderr(values: np.ndarray, n_batches: int) -> float:
    n = len(values)
    b = max(1, n // max(1, n_batches))
    k = n // b
    if k < 2:
        return float("nan")
    means = values[: k * b].reshape(k, b).mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(k))


def _anchored_confidences(model, xs, burn_s: int, ts: np.ndarray) -> np.ndarray:
    """max_y of the smoothing marginal at t for windows [1 : t + burn_s]."""
    sm = WindowSmoother(model, xs)
    alpha = sm.forward(1)
    total = sm.T
    conf = np.zeros(len(ts))
    # sweep right-to-left keeping only the backward columns still needed
    ends = {int(t) + burn_s: i for i, t in enumerate(ts)}
    active: dict[int, np.ndarray] = {}
    out_idx = {int(t): i for i, t in enumerate(ts)}
    for time in range(total, 0, -1):
        if time in ends:
            active[time] = np.zeros(model.n_states)
        if time in out_idx and (time + burn_s) in active:
            beta = active[time + burn_s]
            joint = alpha[time - 1] + beta
            tot = logsumexp(joint)
            conf[out_idx[time]] = float(np.exp(joint - tot).max())
            del active[time + burn_s]
        if time > 1 and active:
            keys = list(active)
            stacked = np.stack([active[k] for k in keys], axis=1)  # (Y, K)
            upd = logsumexp(sm.logM[time - 2][:, :, None] + stacked[None, :, :], axis=1)
            for col, k in enumerate(keys):
                active[k] = upd[:, col]
    return conf


def _sliding_confidences(model, xs, burn_l: int, burn_s: int, ts: np.ndarray,
                         chunk: int) -> np.ndarray:
    """Batched fixed-width windows [t - burn_l, t + burn_s] around each t."""
    sm = WindowSmoother(model, xs)
    logm = sm.logM  # (T-1, Y, Y)
    w = burn_l + burn_s
    if w == 0:
        starts = np.asarray(ts)
        vecs = np.stack([model.window_start_log(sm.xs, int(t)) for t in starts])
        probs = np.exp(vecs - logsumexp(vecs, axis=1, keepdims=True))
        return probs.max(axis=1)
    win = np.lib.stride_tricks.sliding_window_view(logm, (w, *logm.shape[1:]))[:, 0, 0]
    conf = np.zeros(len(ts))
    ts = np.asarray(ts, dtype=np.int64)
    for lo in range(0, len(ts), chunk):
        sel = ts[lo:lo + chunk]
        starts = sel - burn_l  # window start times
        mw = win[starts - 1]  # (B, w, Y, Y): steps of window [start, start+w]
        a = np.stack([model.window_start_log(sm.xs, int(s0)) for s0 in starts])
        for j in range(burn_l):
            a = logsumexp(a[:, :, None] + mw[:, j], axis=1)
        b = np.zeros_like(a)
        for j in range(w - 1, burn_l - 1, -1):
            b = logsumexp(mw[:, j] + b[:, None, :], axis=2)
        joint = a + b
        tot = logsumexp(joint, axis=1, keepdims=True)
        conf[lo:lo + len(sel)] = np.exp(joint - tot).max(axis=1)
    return conf


def estimate_R(model: PairwiseModel, cert: ForgettingCertificate | None,
               config: REstimateConfig) -> REstimate:
    """Time-averaged per-symbol expected error of the pointwise decoder,
    estimated with sliding truncated windows.

    A certificate justifies the truncation: the two-sided envelope at the
    chosen overhangs is reported as the systematic-error bound.  Without a
    certificate the truncation is unjustified and the call refuses unless
    ``allow_unbounded`` is set.
    """
    cfg = config
    if cert is None and not cfg.allow_unbounded:
        raise ValueError(
            "no certificate: truncation bias cannot be bounded "
            "(pass allow_unbounded=True to run regardless)"
        )
    burn_l, burn_s = cfg.resolve_burns(cert)
    sim = with_stationary_start(model) if cfg.stationary_start else model
    traj = sample_trajectory(sim, cfg.n_total, cfg.seed)
    t_hi = cfg.n_total - burn_s
    if burn_l is None:
        t_lo = 1
        ts = np.arange(t_lo, t_hi + 1)
        conf = _anchored_confidences(sim, traj.xs, burn_s, ts)
    else:
        t_lo = burn_l + 1
        if t_lo > t_hi:
            raise ValueError("window overhangs leave no interior times")
        ts = np.arange(t_lo, t_hi + 1)
        conf = _sliding_confidences(sim, traj.xs, burn_l, burn_s, ts, cfg.chunk)
    errs = 1.0 - conf
    r_hat = float(errs.mean())
    stderr = _batch_stderr(errs, cfg.n_batches)

    bound_mean = bound_max = None
    if cert is not None:
        _, rev_cert = _reversed_certificate(sim, cert)
        mask_f = cert.block_mask(traj.xs)
        mask_r = rev_cert.block_mask(traj.xs[::-1]) if rev_cert is not None else None
        envs = np.empty(len(ts))
        for i, t in enumerate(ts):
            left_span = (t - 1) if burn_l is None else burn_l
            if left_span >= cert.r_prime:
                c = _kappa_from_mask(mask_f, cert.r_prime, left_span, offset=t - left_span - 1)
                left = 2.0 * cert.rho ** c.kappa_star
            else:
                left = 2.0
            if rev_cert is not None and burn_s >= rev_cert.r_prime:
                off = cfg.n_total - (t + burn_s)
                c = _kappa_from_mask(mask_r, rev_cert.r_prime, burn_s, offset=off)
                right = 2.0 * rev_cert.rho ** c.kappa_star
            else:
                right = 2.0
            envs[i] = min(2.0, left + right)
        bound_mean = float(envs.mean())
        bound_max = float(envs.max())

    return REstimate(
        r_hat=r_hat, stderr=stderr, window_bound=bound_mean,
        window_bound_max=bound_max, n_total=cfg.n_total, seed=cfg.seed,
        burn_l=burn_l, burn_s=burn_s, n_windows=len(ts),
    )
