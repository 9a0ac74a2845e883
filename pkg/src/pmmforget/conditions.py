"""Verification of the forgetting assumptions and certificate construction.

A :class:`ForgettingCertificate` witnesses the product-support condition on a
set of observation blocks: a block length r, a block set E, the common support
Y+ of the conditional transition weights on E (which must be a product set),
and a constant n0 with 1/n0 <= p_ij(x) <= n0 on E over Y+.  The contraction
factor of the induced block transitions is rho = 1 - 1/n0^2.

Certificates come from four routes: exhaustive enumeration over a finite
observation alphabet, the cluster construction for hidden Markov models, the
positive-row construction, and the small-ball construction for linear
switching models.  Each records its provenance.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .models import (
    CategoricalEmission,
    EuclideanObs,
    FiniteObs,
    FinitePMM,
    GaussianEmission,
    HiddenMarkovModel,
    LinearSwitchingModel,
    PairwiseModel,
    _as_obs_array,
    block_transition_matrix,
    to_finite_pmm,
    unique_closed_class,
)
from .util import NEG_INF, rng_from

__all__ = [
    "YPlusSet",
    "ForgettingCertificate",
    "A1FailureReport",
    "PatternFailure",
    "Cluster",
    "ClusterReport",
    "PrimitivityResult",
    "PositiveRowResult",
    "SopotResult",
    "LmsmCheckFailure",
    "enumerate_y_plus",
    "check_a1_a2_finite",
    "find_clusters",
    "certificate_from_cluster",
    "check_primitive",
    "check_positive_row",
    "check_sopot",
    "check_lmsm",
]


# ---------------------------------------------------------------------------
# Support sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class YPlusSet:
    """Support of the block transition weights: pairs (i, j) with p_ij > 0."""

    r: int
    pairs: frozenset

    @property
    def proj1(self) -> frozenset:
        return frozenset(i for i, _ in self.pairs)

    @property
    def proj2(self) -> frozenset:
        return frozenset(j for _, j in self.pairs)

    @property
    def is_product(self) -> bool:
        return bool(self.pairs) and len(self.pairs) == len(self.proj1) * len(self.proj2)

    def mask(self, n_states: int) -> np.ndarray:
        m = np.zeros((n_states, n_states), dtype=bool)
        for i, j in self.pairs:
            m[i, j] = True
        return m


def enumerate_y_plus(model: PairwiseModel, xs) -> YPlusSet:
    """Exact support of the block transition matrix along the given block."""
    arr = _as_obs_array(model.obs_space, xs)
    mat = block_transition_matrix(model, arr)
    pairs = frozenset((int(i), int(j)) for i, j in np.argwhere(np.isfinite(mat)))
    return YPlusSet(r=len(arr), pairs=pairs)


# ---------------------------------------------------------------------------
# Certificates
# ---------------------------------------------------------------------------

@dataclass
class ForgettingCertificate:
    """A verified (r, E, Y+, n0) witness with rho = 1 - n0^-2.

    For finite alphabets the block set is explicit (``e_blocks``); for
    continuous observations it is a membership predicate, which always folds
    in the n0 bound itself so that every accepted block genuinely satisfies
    the certified inequality.
    """

    r: int
    n0: float
    y_plus: YPlusSet
    provenance: str
    e_blocks: frozenset | None = None
    membership_fn: object = None
    block_sampler: object = None
    notes: tuple = ()

    @property
    def rho(self) -> float:
        return 1.0 - self.n0 ** -2

    @property
    def r_prime(self) -> int:
        return self.r - 1

    def contains_block(self, block) -> bool:
        if self.e_blocks is not None:
            return tuple(int(v) for v in np.asarray(block).ravel()) in self.e_blocks
        if self.membership_fn is not None:
            return bool(self.membership_fn(np.asarray(block, dtype=np.float64)))
        raise ValueError("certificate has neither an explicit block set nor a predicate")

    def block_mask(self, xs) -> np.ndarray:
        """Boolean array over block start offsets: block xs[a:a+r] in E."""
        arr = np.asarray(xs)
        n = len(arr) - self.r + 1
        if n <= 0:
            return np.zeros(0, dtype=bool)
        return np.fromiter(
            (self.contains_block(arr[a:a + self.r]) for a in range(n)),
            dtype=bool, count=n,
        )

    def sample_block(self, rng: np.random.Generator):
        if self.e_blocks is not None:
            blocks = sorted(self.e_blocks)
            return np.array(blocks[int(rng.integers(len(blocks)))])
        if self.block_sampler is not None:
            return self.block_sampler(rng)
        raise ValueError("certificate cannot sample blocks")

    def to_json_dict(self) -> dict:
        out = {
            "r": self.r,
            "n0": self.n0,
            "rho": self.rho,
            "provenance": self.provenance,
            "y_plus": sorted([list(p) for p in self.y_plus.pairs]),
            "notes": list(self.notes),
        }
        if self.e_blocks is not None:
            out["e_blocks"] = sorted([list(b) for b in self.e_blocks])
        else:
            out["e_blocks"] = None
        return out


@dataclass(frozen=True)
class PatternFailure:
    example: tuple
    pairs: tuple
    is_product: bool
    a2_ok: bool
    reason: str


@dataclass
class A1FailureReport:
    """Why no block length r <= r_max admits a certificate, pattern by pattern."""

    r_max: int
    per_r: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return True

    def summary(self) -> str:
        lines = [f"no product-support block set found for any 2 <= r <= {self.r_max}"]
        for r in sorted(self.per_r):
            pats = self.per_r[r]
            lines.append(f"  r={r}: {len(pats)} support patterns, none admissible")
            for p in pats:
                lines.append(
                    f"    example {p.example}: {len(p.pairs)} pairs, {p.reason}"
                )
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# Exhaustive check over a finite observation alphabet
# ---------------------------------------------------------------------------

def _batched_block_logmats(fpmm: FinitePMM, blocks: np.ndarray) -> np.ndarray:
    """(K, Y, Y) log block-transition matrices for K blocks of equal length."""
    out = fpmm._log_trans4[blocks[:, 0], :, blocks[:, 1], :]
    for a in range(1, blocks.shape[1] - 1):
        step = fpmm._log_trans4[blocks[:, a], :, blocks[:, a + 1], :]
        out = logsumexp(out[:, :, :, None] + step[:, None, :, :], axis=2)
    return out


def _mask_is_product(mask: np.ndarray) -> bool:
    if not mask.any():
        return False
    p1 = mask.any(axis=1)
    p2 = mask.any(axis=0)
    return bool(np.array_equal(mask, np.outer(p1, p2)))


def check_a1_a2_finite(model: PairwiseModel, r_max: int = 8):
    """Search all observation blocks of length 2..r_max for a certificate.

    Returns the certificate built from the smallest admissible r, taking as E
    the whole equivalence class of blocks sharing the best support pattern
    (ties broken toward the smallest n0).  When every r fails, returns an
    :class:`A1FailureReport` describing each support pattern and why it fails.

    Raises :class:`NotIrreducibleError` when the pair chain has more than one
    closed communicating class.
    """
    fpmm = to_finite_pmm(model)
    closed = set(int(z) for z in unique_closed_class(fpmm.trans))
    nx, ny = fpmm.n_obs, fpmm.n_states
    report = A1FailureReport(r_max=r_max)
    for r in range(2, r_max + 1):
        blocks = np.array(list(itertools.product(range(nx), repeat=r)), dtype=np.int64)
        mats = _batched_block_logmats(fpmm, blocks)
        masks = np.isfinite(mats)
        keys = masks.reshape(len(blocks), -1)
        _, inverse = np.unique(keys, axis=0, return_inverse=True)
        candidates = []
        failures = []
        for g in range(inverse.max() + 1):
            members = np.flatnonzero(inverse == g)
            mask = masks[members[0]]
            pairs = frozenset((int(i), int(j)) for i, j in np.argwhere(mask))
            yplus = YPlusSet(r=r, pairs=pairs)
            first_syms = set(int(blocks[k, 0]) for k in members)
            a2_ok = any(
                fpmm.z_index(x, i) in closed for x in first_syms for i in yplus.proj1
            )
            if yplus.is_product and a2_ok:
                vals = np.exp(mats[members][:, mask])
                n0 = max(float(vals.max()), 1.0 / float(vals.min()), 1.0)
                candidates.append((n0, -len(members), members, yplus))
            else:
                reason = (
                    "empty support" if not pairs
                    else "support is not a product set" if not yplus.is_product
                    else "no block reaches the chain's closed class"
                )
                failures.append(PatternFailure(
                    example=tuple(int(v) for v in blocks[members[0]]),
                    pairs=tuple(sorted(pairs)),
                    is_product=yplus.is_product,
                    a2_ok=a2_ok,
                    reason=reason,
                ))
        if candidates:
            candidates.sort(key=lambda c: (c[0], c[1]))
            n0, _, members, yplus = candidates[0]
            e_blocks = frozenset(tuple(int(v) for v in blocks[k]) for k in members)
            return ForgettingCertificate(
                r=r, n0=n0, y_plus=yplus, provenance="enumerated", e_blocks=e_blocks,
            )
        report.per_r[r] = failures
    return report


# ---------------------------------------------------------------------------
# Clusters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PrimitivityResult:
    primitive: bool
    exponent: int | None


def check_primitive(matrix) -> PrimitivityResult:
    """Smallest power R at which the support of matrix^R is all-positive.

    Searches up to the Wielandt bound (n-1)^2 + 1 on the support digraph, so
    the answer is exact and R is minimal.
    """
    base = np.asarray(matrix) > 0
    n = base.shape[0]
    bound = (n - 1) ** 2 + 1
    power = base.copy()
    for exponent in range(1, bound + 1):
        if power.all():
            return PrimitivityResult(primitive=True, exponent=exponent)
        if not power.any():
            break
        power = (power.astype(np.int64) @ base.astype(np.int64)) > 0
    return PrimitivityResult(primitive=False, exponent=None)


@dataclass(frozen=True)
class Cluster:
    """A state set whose joint emission support, minus all other supports,
    carries positive reference measure (witnessed by a point or symbol cell)."""

    states: frozenset
    witness: object
    cell_symbols: tuple | None
    primitive: bool
    exponent: int | None


@dataclass
class ClusterReport:
    clusters: list
    undetermined: list = field(default_factory=list)

    @property
    def passing(self) -> list:
        return [c for c in self.clusters if c.primitive]


def _all_categorical(model: HiddenMarkovModel) -> bool:
    return all(isinstance(e, CategoricalEmission) for e in model.emissions)


def _all_gaussian(model: HiddenMarkovModel) -> bool:
    return all(isinstance(e, GaussianEmission) for e in model.emissions)


def find_clusters(model: HiddenMarkovModel, witness_points=None) -> ClusterReport:
    """All maximal emission-support cells and the clusters they witness.

    Finite alphabets are resolved exactly: the cell of a symbol x is the set
    of states whose emission puts positive weight on x.  Gaussian emissions
    have full support, so the single cluster is the whole state set.  Other
    continuous supports are only probed at user-supplied witness points;
    without them the cells are reported as undetermined.
    """
    ny = model.n_states
    report = ClusterReport(clusters=[])
    seen: dict[frozenset, list] = {}
    if _all_categorical(model):
        weights = np.stack([e.weights for e in model.emissions])  # (Y, X)
        for x in range(weights.shape[1]):
            states = frozenset(int(i) for i in np.flatnonzero(weights[:, x] > 0))
            if states:
                seen.setdefault(states, []).append(x)
        for states, syms in seen.items():
            prim = check_primitive(model.trans_P[np.ix_(sorted(states), sorted(states))])
            report.clusters.append(Cluster(
                states=states, witness=syms[0], cell_symbols=tuple(syms),
                primitive=prim.primitive, exponent=prim.exponent,
            ))
    elif _all_gaussian(model):
        states = frozenset(range(ny))
        prim = check_primitive(model.trans_P)
        dim = model.emissions[0].dim
        report.clusters.append(Cluster(
            states=states, witness=np.zeros(dim), cell_symbols=None,
            primitive=prim.primitive, exponent=prim.exponent,
        ))
    else:
        if not witness_points:
            report.undetermined.append(
                "continuous supports need witness points per candidate cell; none given"
            )
            return report
        for w in witness_points:
            states = frozenset(
                int(i) for i in range(ny) if model.emissions[i].support_member(w)
            )
            if states and states not in seen:
                seen[states] = [w]
        for states, ws in seen.items():
            prim = check_primitive(model.trans_P[np.ix_(sorted(states), sorted(states))])
            report.clusters.append(Cluster(
                states=states, witness=ws[0], cell_symbols=None,
                primitive=prim.primitive, exponent=prim.exponent,
            ))
        report.undetermined.append(
            "cells not hit by any witness point remain undetermined"
        )
    report.clusters.sort(key=lambda c: sorted(c.states))
    return report


def _cluster_states_of(cluster_or_states) -> frozenset:
    if isinstance(cluster_or_states, Cluster):
        return cluster_or_states.states
    return frozenset(int(i) for i in cluster_or_states)


def certificate_from_cluster(model: HiddenMarkovModel, cluster, exponent: int | None = None,
                             n0_samples: int = 10_000, seed: int = 0) -> ForgettingCertificate:
    """Certificate built from a passing cluster C.

    The block set takes one free leading observation from the union of the
    supports feeding C, followed by R+1 observations from C's private cell;
    the certified support is then Y_C x C with Y_C the states that can enter
    C in one step.  Finite alphabets get an exact n0 by enumerating the block
    set; continuous models get a sampled envelope inflated by 2, with the
    bound folded into the membership predicate.
    """
    states = _cluster_states_of(cluster)
    sub = model.trans_P[np.ix_(sorted(states), sorted(states))]
    prim = check_primitive(sub)
    if not prim.primitive:
        raise ValueError(f"cluster {sorted(states)} fails: its transition block is not primitive")
    R = prim.exponent if exponent is None else exponent
    r = R + 2
    y_c = frozenset(
        int(i) for i in range(model.n_states)
        if any(model.trans_P[i, j] > 0 for j in states)
    )
    if not y_c:
        raise ValueError("no state can enter the cluster; transition matrix row support empty")
    yplus = YPlusSet(r=r, pairs=frozenset((i, j) for i in y_c for j in states))

    if _all_categorical(model):
        weights = np.stack([e.weights for e in model.emissions])
        cell = tuple(
            x for x in range(weights.shape[1])
            if frozenset(np.flatnonzero(weights[:, x] > 0)) == states
        )
        if not cell:
            raise ValueError(f"state set {sorted(states)} is not a cluster: empty private cell")
        first = tuple(
            x for x in range(weights.shape[1])
            if any(weights[i, x] > 0 for i in y_c)
        )
        blocks = np.array(list(itertools.product(first, *([cell] * (R + 1)))), dtype=np.int64)
        fpmm = to_finite_pmm(model)
        mats = _batched_block_logmats(fpmm, blocks)
        mask = yplus.mask(model.n_states)
        if not np.array_equal(np.isfinite(mats).all(axis=0), mask) or not np.array_equal(
            np.isfinite(mats).any(axis=0), mask
        ):
            raise AssertionError("cluster construction produced an inconsistent support")
        vals = np.exp(mats[:, mask])
        n0 = max(float(vals.max()), 1.0 / float(vals.min()), 1.0)
        e_blocks = frozenset(tuple(int(v) for v in b) for b in blocks)
        return ForgettingCertificate(
            r=r, n0=n0, y_plus=yplus, provenance="cluster_lemma", e_blocks=e_blocks,
        )

    # continuous observations: sample the block set, inflate, and make the
    # bound part of membership so accepted blocks always satisfy it
    rng = rng_from(seed, 41)
    first_states = sorted(y_c)
    cell_states = sorted(states)

    def in_cell(x) -> bool:
        return all(model.emissions[i].support_member(x) for i in states) and not any(
            model.emissions[i].support_member(x) for i in range(model.n_states) if i not in states
        )

    def in_first(x) -> bool:
        return any(model.emissions[i].support_member(x) for i in y_c)

    def draw_cell(r_):
        for _ in range(10_000):
            x = model.emissions[cell_states[int(r_.integers(len(cell_states)))]].sample(r_)
            if in_cell(x):
                return x
        raise RuntimeError("could not sample the cluster cell; supports may be badly aligned")

    def draw_block(r_):
        for _ in range(10_000):
            x1 = model.emissions[first_states[int(r_.integers(len(first_states)))]].sample(r_)
            if in_first(x1):
                rest = [draw_cell(r_) for _ in range(R + 1)]
                return np.stack([np.atleast_1d(x1)] + [np.atleast_1d(x) for x in rest])
        raise RuntimeError("could not sample a leading observation")

    samples = [draw_block(rng) for _ in range(n0_samples)]
    mask = yplus.mask(model.n_states)
    worst = 1.0
    for b in samples:
        mat = block_transition_matrix(model, b)
        finite = np.isfinite(mat)
        if not np.array_equal(finite, mask):
            raise AssertionError("sampled block has unexpected support pattern")
        vals = np.exp(mat[mask])
        worst = max(worst, float(vals.max()), 1.0 / float(vals.min()))
    n0 = 2.0 * worst

    def member(block: np.ndarray) -> bool:
        block = np.asarray(block, dtype=np.float64)
        if block.shape[0] != r:
            return False
        if not in_first(block[0]) or not all(in_cell(x) for x in block[1:]):
            return False
        mat = block_transition_matrix(model, block)
        vals = np.exp(mat[mask])
        return bool(np.isfinite(mat[mask]).all() and vals.min() >= 1.0 / n0 and vals.max() <= n0)

    return ForgettingCertificate(
        r=r, n0=n0, y_plus=yplus, provenance="cluster_lemma",
        membership_fn=member, block_sampler=draw_block,
        notes=("n0 estimated from sampled blocks and inflated by 2; "
               "membership re-checks the bound",),
    )


# ---------------------------------------------------------------------------
# Positive-row construction
# ---------------------------------------------------------------------------

@dataclass
class PositiveRowResult:
    holds: bool
    row: int | None = None
    certificate: ForgettingCertificate | None = None
    word_cells: tuple = ()


def check_positive_row(model: HiddenMarkovModel, r_max_blocks: int = 10_000) -> PositiveRowResult:
    """Does the hidden transition matrix have an all-positive row, and if so,
    build a certificate by funnelling every reachable start state through that
    row's state and fanning out over its cluster.

    Requires an irreducible hidden chain.  Only exact (finite-alphabet)
    emission supports are handled; the constructed word is a sequence of
    cluster cells, and the block set is the full product of those cells with a
    free leading observation.
    """
    unique_closed_class(model.trans_P)  # raises when reducible
    pos_rows = np.flatnonzero((model.trans_P > 0).all(axis=1))
    if pos_rows.size == 0:
        return PositiveRowResult(holds=False)
    l_star = int(pos_rows[0])
    if not _all_categorical(model):
        return PositiveRowResult(holds=True, row=l_star, certificate=None)

    report = find_clusters(model)
    def cluster_containing(state: int) -> Cluster:
        for c in report.clusters:
            if state in c.states:
                return c
        raise AssertionError(f"state {state} belongs to no cluster")  # impossible: support nonempty

    c1 = cluster_containing(l_star)
    ptrans = model.trans_P > 0
    cells: list[Cluster] = [c1]

    def reach_matrix(cell_list) -> np.ndarray:
        reach = np.eye(model.n_states, dtype=bool)
        for c in cell_list:
            allowed = np.zeros(model.n_states, dtype=bool)
            allowed[sorted(c.states)] = True
            reach = (reach.astype(np.int64) @ (ptrans & allowed[None, :]).astype(np.int64)) > 0
        return reach

    for _ in range(2 * model.n_states + 2):
        reach = reach_matrix(cells)
        proj1 = reach.any(axis=1)
        unconnected = proj1 & ~reach[:, l_star]
        if not unconnected.any():
            break
        # route one reachable endpoint of an unconnected state back to l_star
        cols = np.flatnonzero(reach[unconnected].any(axis=0))
        target = int(cols[0])
        path = _shortest_path(ptrans, target, l_star)
        cells.extend(cluster_containing(s) for s in path[1:])
    else:
        raise RuntimeError("positive-row construction did not converge")

    cells.append(c1)  # fan out over the positive row's cluster
    word_cells = tuple(c.cell_symbols for c in cells)
    n_blocks = model.obs_space.n_symbols * int(np.prod([len(w) for w in word_cells]))
    if n_blocks > r_max_blocks:
        raise ValueError(
            f"constructed block set has {n_blocks} members; raise r_max_blocks to enumerate it"
        )
    all_syms = tuple(range(model.obs_space.n_symbols))
    blocks = np.array(list(itertools.product(all_syms, *word_cells)), dtype=np.int64)
    fpmm = to_finite_pmm(model)
    mats = _batched_block_logmats(fpmm, blocks)
    masks = np.isfinite(mats)
    if not (masks == masks[0]).all():
        raise AssertionError("constructed blocks do not share one support pattern")
    pairs = frozenset((int(i), int(j)) for i, j in np.argwhere(masks[0]))
    yplus = YPlusSet(r=blocks.shape[1], pairs=pairs)
    if not yplus.is_product:
        raise AssertionError("positive-row construction failed to produce a product support")
    vals = np.exp(mats[:, masks[0]])
    n0 = max(float(vals.max()), 1.0 / float(vals.min()), 1.0)
    cert = ForgettingCertificate(
        r=blocks.shape[1], n0=n0, y_plus=yplus, provenance="positive_row",
        e_blocks=frozenset(tuple(int(v) for v in b) for b in blocks),
        notes=(f"funnel state {l_star}",),
    )
    return PositiveRowResult(holds=True, row=l_star, certificate=cert, word_cells=word_cells)


def _shortest_path(adj: np.ndarray, src: int, dst: int) -> list[int]:
    """BFS path src -> dst in a boolean adjacency matrix."""
    if src == dst:
        return [src]
    prev = {src: None}
    frontier = [src]
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.flatnonzero(adj[u]):
                v = int(v)
                if v not in prev:
                    prev[v] = u
                    if v == dst:
                        path = [v]
                        while prev[path[-1]] is not None:
                            path.append(prev[path[-1]])
                        return path[::-1]
                    nxt.append(v)
        frontier = nxt
    raise ValueError(f"state {dst} unreachable from {src}; chain not irreducible")


# ---------------------------------------------------------------------------
# Split-point lower bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SopotResult:
    ok: bool
    lam: float | None = None
    t: int | None = None
    state: int | None = None
    failure: str | None = None


def check_sopot(model: PairwiseModel, cert: ForgettingCertificate, t: int, state: int,
                n_samples: int = 2000, seed: int = 0) -> SopotResult:
    """Infimum over certified blocks of p_il(x_{1:t}) p_lj(x_{t:r}) / p_ij(x_{1:r}).

    A positive infimum strengthens the certificate: the split state ``state``
    is then reachable from every admissible start with uniformly positive
    conditional weight.  Exact over an explicit block set, sampled otherwise.
    Fails as soon as any ratio vanishes.
    """
    r = cert.r
    if not 2 <= t <= r - 1:
        raise ValueError(f"split index must satisfy 2 <= t <= {r - 1}")
    if not 0 <= state < model.n_states:
        raise ValueError("split state out of range")
    if cert.e_blocks is not None:
        blocks = [np.array(b) for b in sorted(cert.e_blocks)]
    elif cert.block_sampler is not None:
        rng = rng_from(seed, 7)
        blocks = [cert.block_sampler(rng) for _ in range(n_samples)]
    else:
        raise ValueError("certificate carries no block set to scan")
    p1 = sorted(cert.y_plus.proj1)
    p2 = sorted(cert.y_plus.proj2)
    best = np.inf
    for b in blocks:
        full = block_transition_matrix(model, b)
        head = block_transition_matrix(model, b[:t])
        tail = block_transition_matrix(model, b[t - 1:])
        num = head[np.ix_(p1, [state])] + tail[np.ix_([state], p2)]
        ratio = num - full[np.ix_(p1, p2)]
        if not np.isfinite(num).all():
            return SopotResult(
                ok=False, t=t, state=state,
                failure=f"ratio vanishes on block {tuple(np.asarray(b).ravel())}",
            )
        best = min(best, float(np.exp(ratio.min())))
    return SopotResult(ok=True, lam=best, t=t, state=state)


# ---------------------------------------------------------------------------
# Linear switching models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LmsmCheckFailure:
    stage: str
    detail: str
    point: object = None


def _ball_points(dim: int, radius: float, count: int, rng) -> np.ndarray:
    direc = rng.standard_normal((count, dim))
    direc /= np.linalg.norm(direc, axis=1, keepdims=True)
    radii = radius * rng.random(count) ** (1.0 / dim)
    pts = direc * radii[:, None]
    axis_pts = []
    for k in range(dim):
        e = np.zeros(dim)
        e[k] = radius * (1 - 1e-9)
        axis_pts.extend([e, -e])
    return np.vstack([np.zeros((1, dim)), np.array(axis_pts), pts])


def _batched_lmsm_logmats(model: LinearSwitchingModel, blocks: np.ndarray) -> np.ndarray:
    """(N, Y, Y) log block matrices for N euclidean blocks of shape (r, d)."""
    n, r, _ = blocks.shape
    logP = model._logP
    emis = np.empty((n, r - 1, model.n_states))
    for j in range(model.n_states):
        resid = blocks[:, 1:, :] - np.einsum("nrd,ed->nre", blocks[:, :-1, :], model.state_matrices[j])
        emis[:, :, j] = model.noise[j].log_density_many(resid.reshape(-1, model.dim)).reshape(n, r - 1)
    out = logP[None, :, :] + emis[:, 0, None, :]
    for a in range(1, r - 1):
        step = logP[None, :, :] + emis[:, a, None, :]
        out = logsumexp(out[:, :, :, None] + step[:, None, :, :], axis=2)
    return out


def check_lmsm(model: LinearSwitchingModel, epsilon: float,
               reachable_state: int | None = None,
               grid_points: int = 64, n0_samples: int = 10_000, seed: int = 0):
    """Small-ball certificate for a linear switching model.

    Verifies on a grid of the epsilon-ball that the noise supports agree on a
    common state set C there, that C's transition block is primitive, shrinks
    the ball to eps0 = eps / (1 + max_j ||F(j)||) so one chain step cannot
    leave it, and certifies blocks of R+2 consecutive observations inside the
    small ball.  The reachability of the origin (condition on the chain's
    irreducibility measure) is not decidable here and is recorded as a
    user assertion.
    """
    rng = rng_from(seed, 11)
    d = model.dim
    pts = _ball_points(d, epsilon, grid_points, rng)
    support_sets = []
    for p in pts:
        support_sets.append(frozenset(
            i for i in range(model.n_states) if model.noise[i].support_member(p)
        ))
    c_set = support_sets[0]
    for p, s in zip(pts, support_sets):
        if s != c_set:
            return LmsmCheckFailure(
                stage="support",
                detail=f"noise support set {sorted(s)} at {p} differs from {sorted(c_set)} at 0",
                point=p,
            )
    if not c_set:
        return LmsmCheckFailure(stage="support", detail="no noise density is positive near 0")
    sub = model.trans_P[np.ix_(sorted(c_set), sorted(c_set))]
    prim = check_primitive(sub)
    if not prim.primitive:
        return LmsmCheckFailure(
            stage="primitivity",
            detail=f"transition block of {sorted(c_set)} is not primitive",
        )
    R = prim.exponent
    r = R + 2
    y_c = frozenset(
        int(i) for i in range(model.n_states)
        if any(model.trans_P[i, j] > 0 for j in sorted(c_set))
    )
    if reachable_state is not None and reachable_state not in y_c:
        return LmsmCheckFailure(
            stage="reachability",
            detail=f"asserted state {reachable_state} cannot enter the support set",
        )
    norms = [np.linalg.norm(m, 2) for m in model.state_matrices]
    eps0 = epsilon / (1.0 + max(norms))
    yplus = YPlusSet(r=r, pairs=frozenset((i, j) for i in y_c for j in sorted(c_set)))
    mask = yplus.mask(model.n_states)

    def draw_block(r_):
        return _sample_ball(r_, d, eps0, r)

    samples = np.stack([_sample_ball(rng, d, eps0, r) for _ in range(n0_samples)])
    mats = _batched_lmsm_logmats(model, samples)
    finite = np.isfinite(mats)
    if not (finite == mask[None, :, :]).all():
        bad = int(np.flatnonzero((finite != mask[None, :, :]).any(axis=(1, 2)))[0])
        return LmsmCheckFailure(
            stage="pattern",
            detail="sampled small-ball block has unexpected support",
            point=samples[bad],
        )
    vals = np.exp(mats[:, mask])
    worst = max(float(vals.max()), 1.0 / float(vals.min()), 1.0)
    n0 = 2.0 * worst

    def member(block: np.ndarray) -> bool:
        block = np.asarray(block, dtype=np.float64).reshape(-1, d)
        if block.shape[0] != r:
            return False
        if not (np.linalg.norm(block, axis=1) < eps0).all():
            return False
        mat = _batched_lmsm_logmats(model, block[None])[0]
        if not np.array_equal(np.isfinite(mat), mask):
            return False
        v = np.exp(mat[mask])
        return bool(v.min() >= 1.0 / n0 and v.max() <= n0)

    return ForgettingCertificate(
        r=r, n0=n0, y_plus=yplus, provenance="lmsm_lemma",
        membership_fn=member, block_sampler=draw_block,
        notes=(
            f"small-ball radius eps0={eps0!r} from eps={epsilon!r} and max operator norm",
            "origin reachability (irreducibility measure support) user-asserted",
            "n0 estimated from sampled blocks and inflated by 2; membership re-checks the bound",
        ),
    )


def _sample_ball(rng, dim: int, radius: float, count: int) -> np.ndarray:
    direc = rng.standard_normal((count, dim))
    direc /= np.linalg.norm(direc, axis=1, keepdims=True)
    radii = radius * rng.random(count) ** (1.0 / dim)
    return direc * radii[:, None]
