"""Forgetting diagnostics: contraction coefficients, block counters,
theoretical envelopes, and Monte-Carlo forgetting experiments.

The pathwise bound being exercised everywhere is: the total-variation
distance between two smoothing distributions computed from windows that
share their right end is at most 2 * rho^kappa, where kappa counts the
certified observation blocks in the non-shared stretch and rho comes from
the certificate.  Experiments measure the empirical distances, check that
the envelope is never crossed, and fit empirical decay rates.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats as _stats
from scipy.special import logsumexp

from .conditions import ForgettingCertificate, check_a1_a2_finite
from .inference import BlockDistribution, WindowSmoother
from .models import (
    FiniteObs,
    FinitePMM,
    HiddenMarkovModel,
    LinearSwitchingModel,
    PairwiseModel,
    reverse_model,
    sample_trajectory,
    with_stationary_start,
)
from .util import NEG_INF, replicate_map

__all__ = [
    "dobrushin",
    "KappaCount",
    "kappa",
    "tv_block",
    "theoretical_envelope",
    "RateFit",
    "fit_decay_rate",
    "ForgettingCurve",
    "OneSidedConfig",
    "OneSidedResult",
    "one_sided_experiment",
    "InitialForgettingConfig",
    "initial_forgetting_experiment",
    "TwoSidedConfig",
    "TwoSidedResult",
    "two_sided_experiment",
]

#: slack for envelope-domination checks: empirical TV may exceed the bound by
#: at most this much before it counts as a violation
ENVELOPE_SLACK = 1e-8

#: values below this are treated as numerically zero when fitting log-slopes
FIT_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# Contraction coefficient and TV distance
# ---------------------------------------------------------------------------

def dobrushin(matrix) -> float:
    """Half the maximal total-variation distance between rows.

    Requires a row-stochastic (possibly rectangular) matrix; the result lies
    in [0, 1] and contracts signed measures under right multiplication.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("need a matrix")
    if np.any(m < 0):
        raise ValueError("matrix has negative entries")
    sums = m.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-10):
        bad = int(np.argmax(np.abs(sums - 1.0)))
        raise ValueError(f"row {bad} sums to {sums[bad]!r}; matrix is not stochastic")
    best = 0.0
    for i in range(m.shape[0] - 1):
        diff = np.abs(m[i + 1:] - m[i]).sum(axis=1).max() if m.shape[0] > i + 1 else 0.0
        best = max(best, float(diff))
    return 0.5 * best


def tv_block(a, b) -> float:
    """Total variation distance (full sum norm, in [0, 2]) of two block laws."""
    if isinstance(a, BlockDistribution) and isinstance(b, BlockDistribution):
        if a.m != b.m:
            raise ValueError(f"block lengths differ: {a.m} vs {b.m}")
        pa, pb = a.probs, b.probs
    else:
        pa = a.probs if isinstance(a, BlockDistribution) else np.asarray(a, dtype=np.float64)
        pb = b.probs if isinstance(b, BlockDistribution) else np.asarray(b, dtype=np.float64)
    if pa.shape != pb.shape:
        raise ValueError("distributions have different shapes")
    return float(np.abs(pa - pb).sum())


# ---------------------------------------------------------------------------
# Block counters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KappaCount:
    """Certified-block counts in a window at each of the r-1 start offsets.

    ``k_offsets[k]`` counts almost-non-overlapping certified blocks (adjacent
    blocks share one endpoint) starting k steps into the window;
    ``kappa_bar`` is the same count aligned to the window's right end, which
    always equals ``k_offsets[(len-1) % r_prime]``.
    """

    k_offsets: np.ndarray
    kappa_bar: int
    r_prime: int
    tau: np.ndarray

    @property
    def kappa_star(self) -> int:
        return int(self.k_offsets.max()) if len(self.k_offsets) else 0


def kappa(cert: ForgettingCertificate, xs) -> KappaCount:
    """Count certified blocks in the window slice ``xs`` at every offset."""
    arr = np.asarray(xs)
    span = len(arr) - 1
    rp = cert.r_prime
    if span < rp:
        raise ValueError(f"window of {len(arr)} observations is shorter than a block of {cert.r}")
    mask = cert.block_mask(arr)
    return _kappa_from_mask(mask, rp, span)


def _kappa_from_mask(mask: np.ndarray, rp: int, span: int, offset: int = 0) -> KappaCount:
    """Kappa counts when block membership is already known.

    ``mask[a]`` says whether the block starting a positions after the window
    start is certified; ``offset`` shifts into a longer path-level mask.
    """
    taus = np.array([(span - k) // rp for k in range(rp)], dtype=np.int64)
    counts = np.zeros(rp, dtype=np.int64)
    for k in range(rp):
        if taus[k] > 0:
            idx = offset + k + rp * np.arange(taus[k])
            counts[k] = int(mask[idx].sum())
    kbar = int(counts[span % rp])
    return KappaCount(k_offsets=counts, kappa_bar=kbar, r_prime=rp, tau=taus)


# ---------------------------------------------------------------------------
# Envelopes
# ---------------------------------------------------------------------------

def _u_log_rows(sm: WindowSmoother, a: int, n: int, cert: ForgettingCertificate) -> np.ndarray:
    """Log rows of the r-block conditional transition U for the window x_{a:n},
    evaluated on a smoother holding the whole path (a, n absolute times)."""
    r = cert.r
    prod = sm.step_product(a, a + r - 1)
    beta = sm.backward(n)
    tail = beta[a + r - 2]
    lam = np.full(sm.ny, NEG_INF)
    idx = sorted(cert.y_plus.proj2)
    lam[idx] = tail[idx]
    logc = logsumexp(lam)
    if not np.isfinite(logc):
        raise ValueError(f"window [{a}:{n}] has no admissible tail mass")
    lam -= logc
    scores = prod + tail[None, :]
    dens = logsumexp(scores, axis=1)
    rows = np.where(np.isfinite(dens)[:, None], scores - dens[:, None], lam[None, :])
    return rows


def theoretical_envelope(cert: ForgettingCertificate, xs, s: int, t: int,
                         n: int | None = None,
                         smoother: WindowSmoother | None = None,
                         model: PairwiseModel | None = None) -> float:
    """Sharper product-form envelope: twice the product of the actual
    contraction coefficients of the certified block transitions counted in
    x_{s:t}, capped at 2.  Never exceeds 2 * rho^kappa_star (up to float fuzz)
    because each certified factor is at most rho.
    """
    if smoother is None:
        if model is None:
            raise ValueError("pass either a smoother or a model")
        smoother = WindowSmoother(model, xs)
    arr = smoother.xs
    n = smoother.T if n is None else n
    rp = cert.r_prime
    if t - s < rp:
        return 2.0
    mask = cert.block_mask(arr)
    counts = _kappa_from_mask(mask, rp, t - s, offset=s - 1)
    k_star = int(np.argmax(counts.k_offsets))
    if counts.k_offsets[k_star] == 0:
        return 2.0
    prod = 1.0
    for u in range(int(counts.tau[k_star])):
        a = s + k_star + u * rp
        if mask[a - 1]:
            rows = _u_log_rows(smoother, a, n, cert)
            prod *= dobrushin(np.exp(rows))
    return min(2.0, 2.0 * prod)


# ---------------------------------------------------------------------------
# Rate fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    alpha_hat: float
    slope: float
    stderr: float
    slope_upper95: float
    n_points: int
    fit_window: tuple

    def to_json_dict(self) -> dict:
        return {
            "alpha_hat": self.alpha_hat,
            "slope": self.slope,
            "stderr": self.stderr,
            "slope_upper95": self.slope_upper95,
            "n_points": self.n_points,
            "fit_window": list(self.fit_window),
        }


def fit_decay_rate(ts, values, floor: float = FIT_FLOOR) -> RateFit | None:
    """Least-squares slope of log(values) over ts, excluding numerical zeros.

    Returns None when fewer than three usable points remain.  The fitted rate
    is exp(slope) clipped into (0, 1]; the one-sided 95% upper bound on the
    slope uses the usual t quantile.
    """
    ts = np.asarray(ts, dtype=np.float64)
    vals = np.asarray(values, dtype=np.float64)
    mask = vals > floor
    if mask.sum() < 3 or len(np.unique(ts[mask])) < 2:
        return None
    res = _stats.linregress(ts[mask], np.log(vals[mask]))
    df = int(mask.sum()) - 2
    tq = float(_stats.t.ppf(0.975, df)) if df > 0 else np.inf
    stderr = float(res.stderr) if np.isfinite(res.stderr) else 0.0
    return RateFit(
        alpha_hat=float(min(1.0, np.exp(res.slope))),
        slope=float(res.slope),
        stderr=stderr,
        slope_upper95=float(res.slope + tq * stderr),
        n_points=int(mask.sum()),
        fit_window=(int(ts[mask].min()), int(ts[mask].max())),
    )


# ---------------------------------------------------------------------------
# One-sided experiment
# ---------------------------------------------------------------------------

def _default_t_grid(start: int, stop: int, count: int = 18) -> tuple:
    """Roughly geometric grid of integer times in (start, stop]."""
    if stop <= start + 1:
        return (stop,)
    raw = np.unique(np.round(np.geomspace(start + 1, stop, count)).astype(int))
    return tuple(int(v) for v in raw if v > start)


@dataclass
class OneSidedConfig:
    """Window pair [l:n] vs [s:n]; distances maximized over the n grid.

    ``n_grid`` gives absolute window ends; when None, each t uses the default
    ends t + {0, 5, 25, 125} clipped to n_max, plus n_max itself (the supremum
    over all n is thus only lower-bounded by this finite grid).
    """

    l: int = 1
    s: int = 3
    m: int = 1
    n_paths: int = 20
    n_max: int = 200
    seed: int = 0
    t_grid: tuple = ()
    n_grid: tuple | None = None
    n_offsets: tuple = (0, 5, 25, 125)

    def __post_init__(self):
        if not self.t_grid:
            self.t_grid = _default_t_grid(self.s, max(self.s + 1, int(0.7 * self.n_max)))
        if self.l > self.s:
            raise ValueError("need l <= s")
        if max(self.t_grid) > self.n_max:
            raise ValueError("t grid exceeds n_max")

    def ends_for(self, t: int) -> list[int]:
        if self.n_grid is not None:
            ends = sorted({int(n) for n in self.n_grid if n >= t})
            if not ends:
                ends = [self.n_max]
            return ends
        ends = {min(self.n_max, t + off) for off in self.n_offsets}
        ends.add(self.n_max)
        return sorted(ends)


@dataclass(frozen=True)
class ForgettingCurve:
    """Per-path forgetting measurements against the certified envelope."""

    ts: np.ndarray
    emp_tv: np.ndarray
    envelope: np.ndarray
    delta_envelope: np.ndarray
    kappa_star: np.ndarray
    fitted_alpha: float | None
    fit: RateFit | None
    fit_window: tuple | None
    violations: int
    path_index: int


@dataclass
class OneSidedResult:
    curves: list
    pooled_emp: np.ndarray
    pooled_fit: RateFit | None
    violations_total: int
    config: OneSidedConfig

    @property
    def ts(self) -> np.ndarray:
        return np.asarray(self.config.t_grid)


def _curve_from_path(model, cert, cfg, xs, idx,
                     init_override_pair=None) -> ForgettingCurve:
    """Forgetting curve along one path.

    Without ``init_override_pair`` the two smoothers differ in window start
    (l vs s); with it they share the start s and differ in the time-1 law.
    """
    sm = WindowSmoother(model, xs)
    all_ns = sorted({n for t in cfg.t_grid for n in cfg.ends_for(t)})
    sm.ensure_backwards(all_ns)
    mask = cert.block_mask(sm.xs) if cert is not None else None
    rho = cert.rho if cert is not None else None
    emp = np.zeros(len(cfg.t_grid))
    env = np.full(len(cfg.t_grid), 2.0)
    denv = np.full(len(cfg.t_grid), 2.0)
    kstar = np.zeros(len(cfg.t_grid), dtype=np.int64)
    violations = 0
    for ti, t in enumerate(cfg.t_grid):
        ends = cfg.ends_for(t)
        best = 0.0
        for n in ends:
            if init_override_pair is None:
                pa = sm.block_log_probs(t, cfg.l, n, cfg.m)
                pb = sm.block_log_probs(t, cfg.s, n, cfg.m)
            else:
                pa = sm.block_log_probs(t, cfg.s, n, cfg.m, init_override=init_override_pair[0])
                pb = sm.block_log_probs(t, cfg.s, n, cfg.m, init_override=init_override_pair[1])
            best = max(best, float(np.abs(np.exp(pa) - np.exp(pb)).sum()))
        emp[ti] = best
        if cert is not None and t - cfg.s >= cert.r_prime:
            counts = _kappa_from_mask(mask, cert.r_prime, t - cfg.s, offset=cfg.s - 1)
            kstar[ti] = counts.kappa_star
            env[ti] = 2.0 * rho ** counts.kappa_star
            denv[ti] = theoretical_envelope(cert, None, cfg.s, t, n=max(ends), smoother=sm)
        if emp[ti] > env[ti] + ENVELOPE_SLACK:
            violations += 1
    fit = fit_decay_rate(np.asarray(cfg.t_grid), emp)
    return ForgettingCurve(
        ts=np.asarray(cfg.t_grid), emp_tv=emp, envelope=env, delta_envelope=denv,
        kappa_star=kstar, fitted_alpha=None if fit is None else fit.alpha_hat,
        fit=fit, fit_window=None if fit is None else fit.fit_window,
        violations=violations, path_index=idx,
    )


def one_sided_experiment(model: PairwiseModel, cert: ForgettingCertificate | None,
                         config: OneSidedConfig) -> OneSidedResult:
    """Measure sup_n TV between the [l:n] and [s:n] smoothers along simulated
    paths, against the certificate's envelope.

    Passing ``cert=None`` runs the measurement with the trivial envelope 2,
    which is what a model without any certificate deserves.
    """
    cfg = config

    def run(idx: int) -> ForgettingCurve:
        traj = sample_trajectory(model, cfg.n_max, cfg.seed, idx)
        return _curve_from_path(model, cert, cfg, traj.xs, idx)

    curves = replicate_map(run, cfg.n_paths)
    pooled = np.mean(np.stack([c.emp_tv for c in curves]), axis=0)
    pooled_fit = fit_decay_rate(np.asarray(cfg.t_grid), pooled)
    return OneSidedResult(
        curves=curves, pooled_emp=pooled, pooled_fit=pooled_fit,
        violations_total=sum(c.violations for c in curves), config=cfg,
    )


# ---------------------------------------------------------------------------
# Initial-law forgetting
# ---------------------------------------------------------------------------

@dataclass
class InitialForgettingConfig:
    s: int = 1
    m: int = 1
    n_paths: int = 20
    n_max: int = 200
    seed: int = 0
    t_grid: tuple = ()
    n_grid: tuple | None = None
    n_offsets: tuple = (0, 5, 25, 125)

    def __post_init__(self):
        if not self.t_grid:
            self.t_grid = _default_t_grid(self.s, max(self.s + 1, int(0.7 * self.n_max)))
        if max(self.t_grid) > self.n_max:
            raise ValueError("t grid exceeds n_max")

    def ends_for(self, t: int) -> list[int]:
        return OneSidedConfig.ends_for(self, t)


def _replace_init(model: PairwiseModel, pi) -> PairwiseModel:
    pi = np.asarray(pi, dtype=np.float64)
    if isinstance(model, FinitePMM):
        return FinitePMM(model.n_states, model.n_obs, model.trans, pi)
    if isinstance(model, HiddenMarkovModel):
        return HiddenMarkovModel(model.trans_P, pi, model.emissions)
    if isinstance(model, LinearSwitchingModel):
        return LinearSwitchingModel(model.trans_P, model.state_matrices, model.noise,
                                    pi, model.init_x)
    raise TypeError(f"unsupported model class {type(model).__name__}")


def initial_forgetting_experiment(model: PairwiseModel, pi, pi_tilde,
                                  config: InitialForgettingConfig,
                                  cert: ForgettingCertificate | None = None) -> OneSidedResult:
    """Same pipeline with two time-1 laws instead of two window starts.

    Paths are simulated under ``pi``; every smoothing window [s:n] is then
    evaluated under both laws.  ``pi_tilde`` must put mass wherever ``pi``
    does, otherwise simulated paths could have zero likelihood under it.
    """
    pi = np.asarray(pi, dtype=np.float64)
    pi_tilde = np.asarray(pi_tilde, dtype=np.float64)
    if pi.shape != pi_tilde.shape:
        raise ValueError("initial laws have different shapes")
    if np.any((pi > 0) & (pi_tilde <= 0)):
        bad = int(np.flatnonzero((pi > 0) & (pi_tilde <= 0))[0])
        raise ValueError(
            f"support violation: alternative law puts zero mass on state {bad} "
            "which the sampling law charges"
        )
    cfg = config
    sim_model = _replace_init(model, pi)
    base = OneSidedConfig(
        l=cfg.s, s=cfg.s, m=cfg.m, n_paths=cfg.n_paths, n_max=cfg.n_max,
        seed=cfg.seed, t_grid=cfg.t_grid, n_grid=cfg.n_grid, n_offsets=cfg.n_offsets,
    )

    def run(idx: int) -> ForgettingCurve:
        traj = sample_trajectory(sim_model, cfg.n_max, cfg.seed, idx)
        return _curve_from_path(sim_model, cert, base, traj.xs, idx,
                                init_override_pair=(pi, pi_tilde))

    curves = replicate_map(run, cfg.n_paths)
    pooled = np.mean(np.stack([c.emp_tv for c in curves]), axis=0)
    pooled_fit = fit_decay_rate(np.asarray(cfg.t_grid), pooled)
    return OneSidedResult(
        curves=curves, pooled_emp=pooled, pooled_fit=pooled_fit,
        violations_total=sum(c.violations for c in curves), config=base,
    )


# ---------------------------------------------------------------------------
# Two-sided experiment
# ---------------------------------------------------------------------------

@dataclass
class TwoSidedConfig:
    m: int = 1
    l_grid: tuple = (1, 2, 4, 8, 16, 32)
    s_grid: tuple = (1, 2, 4, 8, 16, 32)
    n_trunc: int = 64
    n_paths: int = 20
    seed: int = 0
    t: int | None = None

    def __post_init__(self):
        if self.t is None:
            self.t = self.n_trunc + 1
        if max(self.l_grid) > self.n_trunc or max(self.s_grid) > self.n_trunc:
            raise ValueError("grids exceed the truncation width")
        if self.t - self.n_trunc < 1:
            raise ValueError("reference window extends before time 1")


@dataclass
class TwoSidedResult:
    l_grid: tuple
    s_grid: tuple
    tv_mean: np.ndarray
    tv_max: np.ndarray
    env_max: np.ndarray
    violations: int
    decay_fit: RateFit | None
    truncation_bound_mean: float
    truncation_bound_max: float
    config: TwoSidedConfig


def _reversed_certificate(model: PairwiseModel, cert: ForgettingCertificate):
    """Certificate for the time-reversed stationary chain, when computable."""
    try:
        rev = reverse_model(model)
    except ValueError:
        return None, None
    if isinstance(rev.obs_space, FiniteObs):
        got = check_a1_a2_finite(rev, r_max=max(cert.r + 1, 4))
        if isinstance(got, ForgettingCertificate):
            return rev, got
    return rev, None


def two_sided_experiment(model: PairwiseModel, cert: ForgettingCertificate,
                         config: TwoSidedConfig,
                         reversed_cert: ForgettingCertificate | None = None) -> TwoSidedResult:
    """Distance of the truncated smoother from the widest-window reference.

    The chain is restarted from its stationary law (the two-sided setting);
    the reference at time t conditions on the full simulated stretch
    [t - n_trunc, t + n_trunc], and the table entry (l, s) compares the
    [t-l, t+s] smoother against it.  The reported envelope combines the
    forward certificate over the left overhang with a reversed-chain
    certificate over the right overhang; the envelope at the reference window
    itself is reported as the truncation-error bound.
    """
    cfg = config
    try:
        sim = with_stationary_start(model)
    except ValueError as exc:
        raise ValueError(f"model is not stationary-representable: {exc}") from exc
    if reversed_cert is None:
        _, reversed_cert = _reversed_certificate(sim, cert)
    t = cfg.t
    big_l = big_s = cfg.n_trunc
    total = t + cfg.n_trunc

    def run(idx: int):
        traj = sample_trajectory(sim, total, cfg.seed, idx)
        sm = WindowSmoother(sim, traj.xs)
        sm.ensure_backwards([t + s for s in cfg.s_grid] + [t + big_s])
        ref = np.exp(sm.block_log_probs(t, t - big_l, t + big_s, cfg.m))
        mask_f = cert.block_mask(sm.xs)
        left_term = {}
        for l in set(cfg.l_grid) | {big_l}:
            if l == big_l:
                left_term[l] = 0.0
            elif l >= cert.r_prime:
                c = _kappa_from_mask(mask_f, cert.r_prime, l, offset=t - l - 1)
                left_term[l] = 2.0 * cert.rho ** c.kappa_star
            else:
                left_term[l] = 2.0
        right_term = {}
        rxs = sm.xs[::-1]
        mask_r = reversed_cert.block_mask(rxs) if reversed_cert is not None else None
        for s in set(cfg.s_grid) | {big_s}:
            if s == big_s:
                right_term[s] = 0.0
            elif reversed_cert is not None and (s - cfg.m + 1) >= reversed_cert.r_prime:
                # the hidden block starts at t; in reversed time the window
                # runs from the reversed image of t+s up to t+m-1
                span = s - cfg.m + 1
                off = total - (t + s)
                c = _kappa_from_mask(mask_r, reversed_cert.r_prime, span, offset=off)
                right_term[s] = 2.0 * reversed_cert.rho ** c.kappa_star
            else:
                right_term[s] = 2.0
        tvs = np.zeros((len(cfg.l_grid), len(cfg.s_grid)))
        envs = np.zeros_like(tvs)
        for li, l in enumerate(cfg.l_grid):
            for si, s in enumerate(cfg.s_grid):
                cur = np.exp(sm.block_log_probs(t, t - l, t + s, cfg.m))
                tvs[li, si] = float(np.abs(cur - ref).sum())
                envs[li, si] = min(2.0, left_term[l] + right_term[s])
        # the reference's own distance to the unbounded-window law
        trunc_ref = min(2.0, (2.0 * cert.rho ** _kappa_from_mask(
            mask_f, cert.r_prime, big_l, offset=t - big_l - 1).kappa_star
            if big_l >= cert.r_prime else 2.0)
            + (2.0 * reversed_cert.rho ** _kappa_from_mask(
                mask_r, reversed_cert.r_prime, big_s - cfg.m + 1, offset=total - (t + big_s)
            ).kappa_star
               if reversed_cert is not None and big_s - cfg.m + 1 >= reversed_cert.r_prime
               else 2.0))
        return tvs, envs, trunc_ref

    outs = replicate_map(run, cfg.n_paths)
    tv_all = np.stack([o[0] for o in outs])
    env_all = np.stack([o[1] for o in outs])
    trunc_all = np.array([o[2] for o in outs])
    violations = int(np.sum(tv_all > env_all + ENVELOPE_SLACK))
    tv_mean = tv_all.mean(axis=0)
    mins = np.minimum.outer(np.asarray(cfg.l_grid), np.asarray(cfg.s_grid)).ravel()
    decay = fit_decay_rate(mins, tv_mean.ravel())
    return TwoSidedResult(
        l_grid=tuple(cfg.l_grid), s_grid=tuple(cfg.s_grid),
        tv_mean=tv_mean, tv_max=tv_all.max(axis=0), env_max=env_all.max(axis=0),
        violations=violations, decay_fit=decay,
        truncation_bound_mean=float(trunc_all.mean()),
        truncation_bound_max=float(trunc_all.max()),
        config=cfg,
    )
