"""Finite-state pairwise Markov chains: model classes, densities, simulation.

A model describes a bivariate Markov chain Z_k = (X_k, Y_k) where the hidden
component Y lives on {0, ..., n_states-1} and the observed component X on
either a finite alphabet {0, ..., n_symbols-1} or R^d.  Densities are taken
with respect to counting measure on finite alphabets and Lebesgue measure on
R^d; no other reference measures are supported.

All density arithmetic is carried out in log space.  A structural zero is an
exact -inf, never a small positive number: "positive density" throughout the
package means ``log value > -inf``.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.sparse.csgraph import connected_components
from scipy.special import logsumexp

from .util import NEG_INF, log_matmul, rng_from

__all__ = [
    "FiniteObs",
    "EuclideanObs",
    "CategoricalEmission",
    "GaussianEmission",
    "CustomEmission",
    "PairwiseModel",
    "FinitePMM",
    "HiddenMarkovModel",
    "LinearSwitchingModel",
    "Trajectory",
    "ValidationReport",
    "NotIrreducibleError",
    "validate_model",
    "sample_trajectory",
    "joint_log_density",
    "block_transition_matrix",
    "block_transition_density",
    "stationary_distribution",
    "with_stationary_start",
    "reverse_model",
    "to_finite_pmm",
]


# ---------------------------------------------------------------------------
# Observation spaces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FiniteObs:
    """Finite observation alphabet {0, ..., n_symbols-1}."""

    n_symbols: int


@dataclass(frozen=True)
class EuclideanObs:
    """Observations in R^dim."""

    dim: int


def _one_obs(obs_space, x) -> np.ndarray:
    """A length-1 observation batch."""
    if isinstance(obs_space, FiniteObs):
        return np.array([int(x)], dtype=np.int64)
    return np.atleast_1d(np.asarray(x, dtype=np.float64))[None, :]


def _as_obs_array(obs_space, xs) -> np.ndarray:
    if isinstance(obs_space, FiniteObs):
        arr = np.asarray(xs, dtype=np.int64)
        if arr.ndim != 1:
            raise ValueError("finite observations must form a 1-d integer sequence")
        return arr
    arr = np.asarray(xs, dtype=np.float64)
    if arr.ndim == 1:
        if obs_space.dim != 1:
            raise ValueError("1-d array given for multi-dimensional observations")
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[1] != obs_space.dim:
        raise ValueError(f"expected observations of dimension {obs_space.dim}")
    return arr


# ---------------------------------------------------------------------------
# Emission specifications
# ---------------------------------------------------------------------------

def _safe_log(w: np.ndarray) -> np.ndarray:
    """log with exact zeros mapped to -inf, silently."""
    with np.errstate(divide="ignore"):
        return np.log(w)


class EmissionSpec(abc.ABC):
    """A per-state observation density: log-density, support test, sampler."""

    kind: str

    @abc.abstractmethod
    def log_density_many(self, xs: np.ndarray) -> np.ndarray:
        """Log density at a batch of observation points."""

    def log_density(self, x) -> float:
        return float(self.log_density_many(self._batch_of_one(x))[0])

    def support_member(self, x) -> bool:
        return self.log_density(x) > NEG_INF

    @abc.abstractmethod
    def sample(self, rng: np.random.Generator):
        """Draw one observation point."""

    @staticmethod
    def _batch_of_one(x) -> np.ndarray:
        arr = np.asarray(x)
        return arr[None] if arr.ndim > 0 else arr.reshape(1)


@dataclass(frozen=True)
class CategoricalEmission(EmissionSpec):
    """Probability weights over a finite alphabet."""

    weights: np.ndarray
    kind: str = field(default="categorical", init=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "_logw", _safe_log(w))

    def log_density_many(self, xs):
        return self._logw[np.asarray(xs, dtype=np.int64)]

    def support_member(self, x) -> bool:
        return self.weights[int(x)] > 0.0

    def sample(self, rng):
        return int(rng.choice(len(self.weights), p=self.weights))


@dataclass(frozen=True)
class GaussianEmission(EmissionSpec):
    """Multivariate normal density on R^d."""

    mean: np.ndarray
    cov: np.ndarray
    kind: str = field(default="gaussian", init=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        chol = np.linalg.cholesky(cov)
        object.__setattr__(self, "_chol", chol)
        d = mean.shape[0]
        log_norm = -0.5 * (d * np.log(2.0 * np.pi)) - np.sum(np.log(np.diag(chol)))
        object.__setattr__(self, "_log_norm", float(log_norm))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def log_density_many(self, xs):
        arr = np.asarray(xs, dtype=np.float64)
        if arr.ndim == 1:
            if self.dim != 1:
                raise ValueError("1-d batch given for a multi-dimensional density")
            arr = arr[:, None]
        diff = arr - self.mean
        sol = solve_triangular(self._chol, diff.T, lower=True)
        return self._log_norm - 0.5 * np.sum(sol * sol, axis=0)

    def support_member(self, x) -> bool:
        return True

    def sample(self, rng):
        z = rng.standard_normal(self.dim)
        return self.mean + self._chol @ z


@dataclass(frozen=True)
class CustomEmission(EmissionSpec):
    """User-supplied (log-density, support predicate, sampler) triple.

    The support predicate is kept separate from the density because support
    membership must be exact, not a magnitude threshold.
    """

    log_density_fn: object
    support_fn: object
    sample_fn: object
    kind: str = field(default="custom", init=False)

    def log_density_many(self, xs):
        return np.array([float(self.log_density_fn(x)) for x in np.asarray(xs)])

    def log_density(self, x) -> float:
        return float(self.log_density_fn(x))

    def support_member(self, x) -> bool:
        return bool(self.support_fn(x))

    def sample(self, rng):
        return self.sample_fn(rng)


# ---------------------------------------------------------------------------
# Model classes
# ---------------------------------------------------------------------------

class PairwiseModel(abc.ABC):
    """Common interface: evaluate the step kernel in log space and simulate.

    Subclasses are immutable after construction and safe for concurrent
    read-only use; all sampling goes through an explicit generator argument.
    """

    n_states: int
    obs_space: object

    # -- kernel evaluation ---------------------------------------------------

    @abc.abstractmethod
    def step_log_matrices(self, xs) -> np.ndarray:
        """(T-1, Y, Y) array M with M[a, i, j] = log q(x_{a+1}, j | x_a, i)."""

    @abc.abstractmethod
    def init_log_vector(self, x) -> np.ndarray:
        """(Y,) array of log densities of Z_1 = (x, i)."""

    @abc.abstractmethod
    def window_start_log(self, xs, l: int, init_override=None) -> np.ndarray:
        """(Y,) log weights w(i) = density of Z_l = (x_l, i) under the chain law.

        ``init_override`` replaces the time-1 law (a Y-vector for HMM/LMSM, a
        vector over X x Y for FinitePMM) before propagating l-1 steps.
        """

    @abc.abstractmethod
    def predictive_path_logweights(self, x_last, start_states, suffix) -> np.ndarray:
        """Log probability of hidden continuations past the observation window.

        Given Z_n = (x_last, start_states[k]), returns for each enumerated
        suffix row the log probability that the next len(suffix) hidden states
        equal ``suffix[k]``, with the unobserved future X marginalized out.
        """

    def log_q(self, x, i: int, x2, j: int) -> float:
        """Scalar kernel density log q(x2, j | x, i)."""
        xs = self._pair_array(x, x2)
        return float(self.step_log_matrices(xs)[0, i, j])

    def init_log_density(self, x, i: int) -> float:
        return float(self.init_log_vector(x)[i])

    def _pair_array(self, x, x2) -> np.ndarray:
        if isinstance(self.obs_space, FiniteObs):
            return np.array([int(x), int(x2)], dtype=np.int64)
        return np.stack([np.atleast_1d(np.asarray(x, dtype=np.float64)),
                         np.atleast_1d(np.asarray(x2, dtype=np.float64))])

    # -- simulation ----------------------------------------------------------

    @abc.abstractmethod
    def init_sample(self, rng: np.random.Generator):
        """Draw (x_1, y_1)."""

    @abc.abstractmethod
    def step_sample(self, x, i: int, rng: np.random.Generator):
        """Draw (x', j) from the kernel at (x, i)."""


def _choice(rng: np.random.Generator, probs: np.ndarray) -> int:
    # inverse-cdf draw; avoids rng.choice overhead in tight loops
    u = rng.random()
    return int(np.searchsorted(np.cumsum(probs), u, side="right").clip(0, len(probs) - 1))


class FinitePMM(PairwiseModel):
    """Pairwise chain on a fully finite space, given by one big row-stochastic
    matrix over pairs z = (x, i), flattened as z = x * n_states + i.
    """

    def __init__(self, n_states: int, n_obs: int, trans, init):
        self.n_states = int(n_states)
        self.n_obs = int(n_obs)
        self.obs_space = FiniteObs(self.n_obs)
        self.trans = np.asarray(trans, dtype=np.float64)
        self.init = np.asarray(init, dtype=np.float64)
        nz = self.n_obs * self.n_states
        if self.trans.shape != (nz, nz):
            raise ValueError(f"transition matrix must be {nz}x{nz}")
        if self.init.shape != (nz,):
            raise ValueError(f"initial vector must have length {nz}")
        self._log_trans4 = _safe_log(
            self.trans.reshape(self.n_obs, self.n_states, self.n_obs, self.n_states)
        )
        self._log_init = _safe_log(self.init)
        self._cum_rows = np.cumsum(self.trans, axis=1)

    def z_index(self, x: int, i: int) -> int:
        return int(x) * self.n_states + int(i)

    def z_unpack(self, z: int) -> tuple[int, int]:
        return divmod(int(z), self.n_states)

    def step_log_matrices(self, xs):
        arr = _as_obs_array(self.obs_space, xs)
        return self._log_trans4[arr[:-1], :, arr[1:], :]

    def init_log_vector(self, x):
        return self._log_init.reshape(self.n_obs, self.n_states)[int(x)]

    def window_start_log(self, xs, l, init_override=None):
        arr = _as_obs_array(self.obs_space, xs)
        init = self.init if init_override is None else np.asarray(init_override, float)
        marg = init @ np.linalg.matrix_power(self.trans, l - 1)
        return _safe_log(marg.reshape(self.n_obs, self.n_states)[arr[l - 1]])

    def predictive_path_logweights(self, x_last, start_states, suffix):
        suffix = np.asarray(suffix, dtype=np.int64)
        start = np.asarray(start_states, dtype=np.int64)
        # c[k, x'] tracks the log mass of unobserved X paths
        c = self._log_trans4[int(x_last), start, :, suffix[:, 0]]
        for a in range(1, suffix.shape[1]):
            step = self._log_trans4[:, suffix[:, a - 1], :, suffix[:, a]]  # (K, X, X)
            c = logsumexp(c[:, :, None] + step, axis=1)
        return logsumexp(c, axis=1)

    def init_sample(self, rng):
        z = _choice(rng, self.init)
        x, i = self.z_unpack(z)
        return x, i

    def step_sample(self, x, i, rng):
        z = self.z_index(x, i)
        u = rng.random()
        z2 = int(np.searchsorted(self._cum_rows[z], u, side="right").clip(0, self.trans.shape[1] - 1))
        return self.z_unpack(z2)


class HiddenMarkovModel(PairwiseModel):
    """HMM special case: the kernel factorizes as q(x', j | x, i) = P[i,j] f_j(x')."""

    def __init__(self, trans_P, init_Y, emissions, obs_space=None):
        self.trans_P = np.asarray(trans_P, dtype=np.float64)
        self.init_Y = np.asarray(init_Y, dtype=np.float64)
        self.emissions = tuple(emissions)
        self.n_states = self.trans_P.shape[0]
        if self.trans_P.shape != (self.n_states, self.n_states):
            raise ValueError("transition matrix must be square")
        if len(self.emissions) != self.n_states:
            raise ValueError("one emission spec per state required")
        first = self.emissions[0]
        if obs_space is not None:
            self.obs_space = obs_space
        elif isinstance(first, CategoricalEmission):
            self.obs_space = FiniteObs(len(first.weights))
        elif isinstance(first, GaussianEmission):
            self.obs_space = EuclideanObs(first.dim)
        else:
            raise ValueError("custom emissions require an explicit obs_space")
        self._logP = _safe_log(self.trans_P)
        self._log_initY = _safe_log(self.init_Y)

    def emission_log_matrix(self, xs) -> np.ndarray:
        """(T, Y) array of log f_i(x_t)."""
        arr = _as_obs_array(self.obs_space, xs)
        return np.stack([em.log_density_many(arr) for em in self.emissions], axis=1)

    def step_log_matrices(self, xs):
        emis = self.emission_log_matrix(xs)
        return self._logP[None, :, :] + emis[1:, None, :]

    def init_log_vector(self, x):
        return self._log_initY + self.emission_log_matrix(_one_obs(self.obs_space, x))[0]

    def state_marginal(self, l: int, init_override=None) -> np.ndarray:
        init = self.init_Y if init_override is None else np.asarray(init_override, float)
        return init @ np.linalg.matrix_power(self.trans_P, l - 1)

    def window_start_log(self, xs, l, init_override=None):
        arr = _as_obs_array(self.obs_space, xs)
        emis = self.emission_log_matrix(arr[l - 1:l])
        return _safe_log(self.state_marginal(l, init_override)) + emis[0]

    def predictive_path_logweights(self, x_last, start_states, suffix):
        suffix = np.asarray(suffix, dtype=np.int64)
        start = np.asarray(start_states, dtype=np.int64)
        out = self._logP[start, suffix[:, 0]].copy()
        for a in range(1, suffix.shape[1]):
            out = out + self._logP[suffix[:, a - 1], suffix[:, a]]
        return out

    def init_sample(self, rng):
        i = _choice(rng, self.init_Y)
        return self.emissions[i].sample(rng), i

    def step_sample(self, x, i, rng):
        j = _choice(rng, self.trans_P[i])
        return self.emissions[j].sample(rng), j


@dataclass(frozen=True)
class PointInit:
    """Point-mass law for the first observation of a switching model."""

    value: np.ndarray

    def log_density(self, x) -> float:
        return 0.0 if np.allclose(np.asarray(x, float).ravel(), self.value, atol=0.0) else NEG_INF

    def sample(self, rng):
        return self.value.copy()


@dataclass(frozen=True)
class DensityInit:
    """First-observation law given by a log-density and a sampler."""

    log_density_fn: object
    sample_fn: object

    def log_density(self, x) -> float:
        return float(self.log_density_fn(x))

    def sample(self, rng):
        return self.sample_fn(rng)


class LinearSwitchingModel(PairwiseModel):
    """Switching autoregression X_k = F(Y_k) X_{k-1} + noise_k(Y_k).

    The kernel is q(x2, j | x1, i) = P[i,j] * h_j(x2 - F(j) x1), with h_j the
    per-state noise density.  The first observation defaults to a point mass
    at the origin when no law is supplied.
    """

    def __init__(self, trans_P, state_matrices, noise, init_Y, init_x=None):
        self.trans_P = np.asarray(trans_P, dtype=np.float64)
        self.n_states = self.trans_P.shape[0]
        self.noise = tuple(noise)
        mats = [np.atleast_2d(np.asarray(m, dtype=np.float64)) for m in state_matrices]
        self.state_matrices = tuple(mats)
        self.dim = mats[0].shape[0]
        if any(m.shape != (self.dim, self.dim) for m in mats):
            raise ValueError("all state matrices must be d x d with the same d")
        self.obs_space = EuclideanObs(self.dim)
        self.init_Y = np.asarray(init_Y, dtype=np.float64)
        self.init_x = init_x if init_x is not None else PointInit(np.zeros(self.dim))
        self._logP = _safe_log(self.trans_P)
        self._log_initY = _safe_log(self.init_Y)

    def step_log_matrices(self, xs):
        arr = _as_obs_array(self.obs_space, xs)
        cols = []
        for j in range(self.n_states):
            resid = arr[1:] - arr[:-1] @ self.state_matrices[j].T
            cols.append(self.noise[j].log_density_many(resid))
        emis = np.stack(cols, axis=1)  # (T-1, Y)
        return self._logP[None, :, :] + emis[:, None, :]

    def init_log_vector(self, x):
        return self._log_initY + self.init_x.log_density(x)

    def window_start_log(self, xs, l, init_override=None):
        if l != 1:
            raise ValueError(
                "switching models only support windows anchored at time 1: "
                "the marginal law of X_l is not available in closed form"
            )
        arr = _as_obs_array(self.obs_space, xs)
        init = self.init_Y if init_override is None else np.asarray(init_override, float)
        return _safe_log(init) + self.init_x.log_density(arr[0])

    def predictive_path_logweights(self, x_last, start_states, suffix):
        suffix = np.asarray(suffix, dtype=np.int64)
        start = np.asarray(start_states, dtype=np.int64)
        out = self._logP[start, suffix[:, 0]].copy()
        for a in range(1, suffix.shape[1]):
            out = out + self._logP[suffix[:, a - 1], suffix[:, a]]
        return out

    def init_sample(self, rng):
        i = _choice(rng, self.init_Y)
        return np.asarray(self.init_x.sample(rng), dtype=np.float64), i

    def step_sample(self, x, i, rng):
        j = _choice(rng, self.trans_P[i])
        x2 = self.state_matrices[j] @ np.asarray(x, float) + np.asarray(self.noise[j].sample(rng), float)
        return x2, j


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    xs: np.ndarray
    ys: np.ndarray
    seed: int

    def __len__(self) -> int:
        return len(self.ys)


def sample_trajectory(model: PairwiseModel, n: int, seed: int, *path_index: int) -> Trajectory:
    """Simulate n steps of the chain; identical seeds give identical paths."""
    if n < 1:
        raise ValueError("trajectory length must be >= 1")
    rng = rng_from(seed, *path_index)
    x, y = model.init_sample(rng)
    xs, ys = [x], [y]
    for _ in range(n - 1):
        x, y = model.step_sample(x, y, rng)
        xs.append(x)
        ys.append(y)
    if isinstance(model.obs_space, FiniteObs):
        xs_arr = np.array(xs, dtype=np.int64)
    else:
        xs_arr = np.asarray(xs, dtype=np.float64).reshape(n, -1)
    return Trajectory(xs=xs_arr, ys=np.array(ys, dtype=np.int64), seed=int(seed))


# ---------------------------------------------------------------------------
# Densities
# ---------------------------------------------------------------------------

def joint_log_density(model: PairwiseModel, xs, ys) -> float:
    """log p(x_{1:n}, y_{1:n}) under the chain; -inf exactly when some factor vanishes."""
    ys = np.asarray(ys, dtype=np.int64)
    arr = _as_obs_array(model.obs_space, xs)
    if len(arr) != len(ys):
        raise ValueError("observation and state sequences must have equal length")
    if len(ys) == 0:
        raise ValueError("sequences must have length >= 1")
    total = float(model.init_log_vector(arr[0])[ys[0]])
    if len(ys) > 1:
        steps = model.step_log_matrices(arr)
        total += float(np.sum(steps[np.arange(len(ys) - 1), ys[:-1], ys[1:]]))
    return total


def block_transition_matrix(model: PairwiseModel, xs) -> np.ndarray:
    """(Y, Y) log matrix of the hidden-state transition weights along a block.

    Entry (i, j) is the log of the total kernel mass of all hidden paths that
    start in i at the first observation and end in j at the last one,
    i.e. log p_{ij}(x_{1:n}).  For n = 2 this is exactly the one-step kernel.
    """
    arr = _as_obs_array(model.obs_space, xs)
    if len(arr) < 2:
        raise ValueError("block transition needs at least two observations")
    steps = model.step_log_matrices(arr)
    out = steps[0]
    for a in range(1, len(steps)):
        out = log_matmul(out, steps[a])
    return out


def block_transition_density(model: PairwiseModel, xs, i: int, j: int) -> float:
    return float(block_transition_matrix(model, xs)[i, j])


# ---------------------------------------------------------------------------
# Stationary laws, irreducibility, derived models
# ---------------------------------------------------------------------------

class NotIrreducibleError(ValueError):
    """The chain has more than one closed communicating class."""


def closed_classes(matrix: np.ndarray) -> list[np.ndarray]:
    """Closed communicating classes of the support digraph of a nonneg matrix."""
    support = np.asarray(matrix) > 0
    n_comp, labels = connected_components(support, directed=True, connection="strong")
    closed = []
    for c in range(n_comp):
        members = np.flatnonzero(labels == c)
        outside = np.setdiff1d(np.arange(support.shape[0]), members)
        if not support[np.ix_(members, outside)].any():
            closed.append(members)
    return closed


def unique_closed_class(matrix: np.ndarray) -> np.ndarray:
    classes = closed_classes(matrix)
    if len(classes) != 1:
        raise NotIrreducibleError(
            f"chain has {len(classes)} closed communicating classes; expected exactly one"
        )
    return classes[0]


def _stationary_of(matrix: np.ndarray) -> np.ndarray:
    """Stationary row vector of a row-stochastic matrix with one closed class."""
    members = unique_closed_class(matrix)
    sub = matrix[np.ix_(members, members)]
    k = len(members)
    a = np.vstack([sub.T - np.eye(k), np.ones((1, k))])
    b = np.zeros(k + 1)
    b[-1] = 1.0
    pi_sub, *_ = np.linalg.lstsq(a, b, rcond=None)
    pi_sub = np.clip(pi_sub, 0.0, None)
    pi_sub /= pi_sub.sum()
    pi = np.zeros(matrix.shape[0])
    pi[members] = pi_sub
    resid = np.abs(pi @ matrix - pi).max()
    if resid > 1e-10:
        raise ValueError(f"stationary solve did not converge (residual {resid:.2e})")
    return pi


def stationary_distribution(model: PairwiseModel) -> np.ndarray:
    """Stationary law: over X x Y for FinitePMM, over Y for HMM and LMSM."""
    if isinstance(model, FinitePMM):
        return _stationary_of(model.trans)
    return _stationary_of(model.trans_P)


def with_stationary_start(model: PairwiseModel) -> PairwiseModel:
    """Copy of the model whose time-1 law is the stationary one."""
    pi = stationary_distribution(model)
    if isinstance(model, FinitePMM):
        return FinitePMM(model.n_states, model.n_obs, model.trans, pi)
    if isinstance(model, HiddenMarkovModel):
        return HiddenMarkovModel(model.trans_P, pi, model.emissions)
    raise ValueError(
        "switching models have no representable stationary observation law"
    )


def reverse_model(model: PairwiseModel) -> PairwiseModel:
    """Time reversal of the stationary chain.

    Requires a strictly positive stationary vector; the reversed HMM keeps the
    same emissions with the reversed hidden transition matrix.
    """
    pi = stationary_distribution(model)
    if np.any(pi <= 0):
        raise ValueError("time reversal needs a strictly positive stationary law")
    if isinstance(model, FinitePMM):
        rev = model.trans.T * pi[None, :] / pi[:, None]
        return FinitePMM(model.n_states, model.n_obs, rev, pi)
    if isinstance(model, HiddenMarkovModel):
        rev = model.trans_P.T * pi[None, :] / pi[:, None]
        return HiddenMarkovModel(rev, pi, model.emissions)
    raise ValueError("switching models cannot be reversed in closed form")


def to_finite_pmm(model: PairwiseModel) -> FinitePMM:
    """Exact conversion of a finite-alphabet model to the flat pair-space form."""
    if isinstance(model, FinitePMM):
        return model
    if not isinstance(model, HiddenMarkovModel) or not isinstance(model.obs_space, FiniteObs):
        raise ValueError("only finite-alphabet hidden Markov models convert exactly")
    nx, ny = model.obs_space.n_symbols, model.n_states
    emis = np.stack([em.weights for em in model.emissions], axis=0)  # (Y, X)
    # row (x, i) -> (x', j): P[i, j] * f_j(x'); independent of x for an HMM
    row = (emis.T[:, None, :] * model.trans_P[None, :, :]).transpose(1, 0, 2).reshape(ny, nx * ny)
    trans = np.tile(row, (nx, 1))
    init = (model.init_Y[None, :] * emis.T).reshape(-1)
    return FinitePMM(ny, nx, trans, init)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass
class ValidationReport:
    issues: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def add(self, where: str, message: str) -> None:
        self.issues.append(f"{where}: {message}")

    def __iter__(self):
        return iter(self.issues)


_ROW_TOL = 1e-12
_DENSITY_TOL = 1e-6


def _check_stochastic(report, name, matrix):
    matrix = np.asarray(matrix)
    if np.any(matrix < 0):
        bad = np.argwhere(matrix < 0)[0]
        report.add(name, f"negative entry at {tuple(bad)}")
    sums = matrix.sum(axis=1)
    for idx in np.flatnonzero(np.abs(sums - 1.0) > _ROW_TOL):
        report.add(name, f"row {idx} sums to {sums[idx]!r}, expected 1")


def _check_prob_vector(report, name, vec):
    vec = np.asarray(vec)
    if np.any(vec < 0):
        report.add(name, "negative entry")
    if abs(vec.sum() - 1.0) > _ROW_TOL:
        report.add(name, f"sums to {vec.sum()!r}, expected 1")


def _density_integral(em: EmissionSpec, rng: np.random.Generator) -> float | None:
    """Numerical integral of exp(log_density); None when not checkable."""
    if isinstance(em, CategoricalEmission):
        return float(em.weights.sum())
    if isinstance(em, GaussianEmission) and em.dim <= 2:
        scale = np.sqrt(np.max(np.linalg.eigvalsh(em.cov)))
        if em.dim == 1:
            grid = np.linspace(em.mean[0] - 12 * scale, em.mean[0] + 12 * scale, 4097)
            vals = np.exp(em.log_density_many(grid[:, None]))
            return float(np.trapezoid(vals, grid))
        g = np.linspace(-9 * scale, 9 * scale, 301)
        xx, yy = np.meshgrid(g + em.mean[0], g + em.mean[1], indexing="ij")
        pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
        vals = np.exp(em.log_density_many(pts)).reshape(301, 301)
        dx = g[1] - g[0]
        return float(np.trapezoid(np.trapezoid(vals, dx=dx, axis=1), dx=dx))
    if isinstance(em, GaussianEmission):
        # higher dimensions: importance sampling against a widened copy
        proposal = GaussianEmission(em.mean, em.cov * 1.5)
        draws = np.stack([proposal.sample(rng) for _ in range(20000)])
        logw = em.log_density_many(draws) - proposal.log_density_many(draws)
        return float(np.mean(np.exp(logw)))
    return None


def _check_emission(report, name, em, rng):
    if isinstance(em, CategoricalEmission):
        _check_prob_vector(report, name + " weights", em.weights)
        for x in range(len(em.weights)):
            if em.support_member(x) != (em.log_density(x) > NEG_INF):
                report.add(name, f"support predicate disagrees with density at symbol {x}")
    integral = _density_integral(em, rng)
    if integral is not None and abs(integral - 1.0) > _DENSITY_TOL:
        report.add(name, f"density integrates to {integral!r}, expected 1 (tol {_DENSITY_TOL})")


def validate_model(model: PairwiseModel, seed: int = 0) -> ValidationReport:
    """Check every structural invariant; an empty report means valid."""
    report = ValidationReport()
    rng = rng_from(seed, 987)
    if isinstance(model, FinitePMM):
        _check_stochastic(report, "trans", model.trans)
        _check_prob_vector(report, "init", model.init)
    elif isinstance(model, HiddenMarkovModel):
        _check_stochastic(report, "trans_P", model.trans_P)
        _check_prob_vector(report, "init_Y", model.init_Y)
        for j, em in enumerate(model.emissions):
            _check_emission(report, f"emission[{j}]", em, rng)
    elif isinstance(model, LinearSwitchingModel):
        _check_stochastic(report, "trans_P", model.trans_P)
        _check_prob_vector(report, "init_Y", model.init_Y)
        for j, em in enumerate(model.noise):
            _check_emission(report, f"noise[{j}]", em, rng)
    else:
        report.add("model", f"unknown model class {type(model).__name__}")
    return report
