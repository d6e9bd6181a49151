"""Subsampling designs for the inclusion vector delta.

Two designs are supported: simple random sampling without replacement (SRS)
and stratified random sampling (independent SRS inside each stratum). Draws
are represented by the sorted array of included positions; the population is
always ``0 .. N-1``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidAllocation


class DesignKind(str, enum.Enum):
    SRS = "srs"
    STRATIFIED = "stratified"


@dataclass(frozen=True, eq=False)
class DesignSpec:
    """A sampling design over a population of ``N`` positions.

    For stratified designs ``labels[i]`` is the stratum of position ``i`` and
    ``allocations[r]`` is the number of positions drawn from stratum ``r``
    (strata are the sorted unique labels).
    """

    kind: DesignKind
    N: int
    n: int
    labels: np.ndarray | None = None
    strata: tuple = ()
    stratum_sizes: tuple = ()
    allocations: tuple = ()
    _members: tuple = field(default=(), repr=False, compare=False)

    @classmethod
    def srs(cls, N: int, n: int) -> "DesignSpec":
        N, n = int(N), int(n)
        if N < 0 or n < 0 or n > N:
            raise InvalidAllocation(f"SRS needs 0 <= n <= N, got n={n}, N={N}")
        return cls(DesignKind.SRS, N, n)

    @classmethod
    def stratified(cls, labels, allocations) -> "DesignSpec":
        """Build a stratified design.

        ``allocations`` is either a mapping ``label -> n_r`` or a sequence aligned
        with the sorted unique labels.
        """
        labels = np.asarray(labels)
        if labels.ndim != 1:
            raise InvalidAllocation("stratum labels must be one-dimensional")
        strata, inverse, sizes = np.unique(labels, return_inverse=True, return_counts=True)
        if isinstance(allocations, dict):
            missing = set(allocations) - set(strata.tolist())
            if missing:
                raise InvalidAllocation(f"allocations name unknown strata {sorted(missing)}")
            alloc = [int(allocations.get(s, 0)) for s in strata.tolist()]
        else:
            alloc = [int(a) for a in allocations]
            if len(alloc) != len(strata):
                raise InvalidAllocation(
                    f"{len(alloc)} allocations given for {len(strata)} strata"
                )
        for s, N_r, n_r in zip(strata.tolist(), sizes.tolist(), alloc):
            if n_r < 0 or n_r > N_r:
                raise InvalidAllocation(f"stratum {s!r}: allocation {n_r} outside [0, {N_r}]")
        order = np.argsort(inverse, kind="stable")
        bounds = np.concatenate([[0], np.cumsum(sizes)])
        members = tuple(order[bounds[r]:bounds[r + 1]] for r in range(len(strata)))
        return cls(
            DesignKind.STRATIFIED,
            int(labels.size),
            int(sum(alloc)),
            labels=labels,
            strata=tuple(strata.tolist()),
            stratum_sizes=tuple(int(s) for s in sizes),
            allocations=tuple(alloc),
            _members=members,
        )

    @property
    def stratum_index(self) -> np.ndarray:
        """Per-position stratum number ``0 .. R-1`` (all zeros for SRS)."""
        if self.kind is DesignKind.SRS:
            return np.zeros(self.N, dtype=int)
        return np.searchsorted(np.asarray(self.strata), self.labels)

    def members(self, r: int) -> np.ndarray:
        return self._members[r]

    def inclusion_fraction(self, r: int = 0) -> float:
        if self.kind is DesignKind.SRS:
            return self.n / self.N if self.N else 0.0
        return self.allocations[r] / self.stratum_sizes[r]


def equal_allocation(labels, n: int) -> dict:
    """Split ``n`` as evenly as possible across strata, capped at stratum size.

    Any remainder goes one unit at a time to the strata in label order; units a
    full stratum cannot take are passed on to the next one with room.
    """
    strata, sizes = np.unique(np.asarray(labels), return_counts=True)
    if n > sizes.sum():
        raise InvalidAllocation(f"cannot allocate n={n} over {sizes.sum()} units")
    R = len(strata)
    alloc = np.full(R, n // R)
    alloc[: n % R] += 1
    overflow = np.maximum(alloc - sizes, 0).sum()
    alloc = np.minimum(alloc, sizes)
    while overflow:
        for r in range(R):
            if overflow and alloc[r] < sizes[r]:
                alloc[r] += 1
                overflow -= 1
    return dict(zip(strata.tolist(), alloc.tolist()))


@dataclass(frozen=True, eq=False)
class DeltaDraw:
    included: np.ndarray
    design: DesignSpec

    def indicator(self) -> np.ndarray:
        d = np.zeros(self.design.N, dtype=np.int8)
        d[self.included] = 1
        return d


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def floyd_sample(N: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform size-``n`` subset of ``range(N)`` in O(n) time and memory (Floyd's algorithm)."""
    if n == 0:
        return np.empty(0, dtype=np.int64)
    if n == N:
        return np.arange(N, dtype=np.int64)
    js = np.arange(N - n, N, dtype=np.int64)
    ts = rng.integers(0, js + 1)
    chosen = set()
    for j, t in zip(js.tolist(), ts.tolist()):
        chosen.add(j if t in chosen else t)
    return np.fromiter(sorted(chosen), dtype=np.int64, count=n)


def draw_srs(N: int, n: int, rng_seed=None) -> DeltaDraw:
    spec = DesignSpec.srs(N, n)
    return DeltaDraw(floyd_sample(spec.N, spec.n, _rng(rng_seed)), spec)


def draw_stratified(spec: DesignSpec, rng_seed=None) -> DeltaDraw:
    if spec.kind is not DesignKind.STRATIFIED:
        raise InvalidAllocation("draw_stratified needs a stratified design")
    rng = _rng(rng_seed)
    parts = []
    for r, (N_r, n_r) in enumerate(zip(spec.stratum_sizes, spec.allocations)):
        if n_r > N_r:
            raise InvalidAllocation(f"allocation {n_r} exceeds stratum size {N_r}")
        parts.append(spec.members(r)[floyd_sample(N_r, n_r, rng)])
    included = np.sort(np.concatenate(parts)) if parts else np.empty(0, dtype=np.int64)
    return DeltaDraw(included, spec)


def draw(spec: DesignSpec, rng_seed=None) -> DeltaDraw:
    if spec.kind is DesignKind.SRS:
        return DeltaDraw(floyd_sample(spec.N, spec.n, _rng(rng_seed)), spec)
    return draw_stratified(spec, rng_seed)


def _pair_prob(n: int, N: int) -> float:
    # P(both of two distinct units drawn) under SRS of n from N
    if N <= 1:
        return 0.0
    return (n / N) * ((n - 1) / (N - 1))


@dataclass(frozen=True, eq=False)
class DesignMoments:
    """First and second moments of delta under a design.

    ``incl_prob`` and ``incl_var`` are per position; pairwise quantities are
    available via :meth:`joint_prob` / :meth:`cov` or as dense matrices.
    """

    spec: DesignSpec
    incl_prob: np.ndarray
    incl_var: np.ndarray

    def joint_prob(self, i: int, j: int) -> float:
        if i == j:
            return float(self.incl_prob[i])
        s = self.spec
        if s.kind is DesignKind.SRS:
            return _pair_prob(s.n, s.N)
        si, sj = s.stratum_index[[i, j]]
        if si == sj:
            return _pair_prob(s.allocations[si], s.stratum_sizes[si])
        return float(self.incl_prob[i] * self.incl_prob[j])

    def cov(self, i: int, j: int) -> float:
        if i == j:
            return float(self.incl_var[i])
        return self.joint_prob(i, j) - float(self.incl_prob[i] * self.incl_prob[j])

    def joint_matrix(self) -> np.ndarray:
        s = self.spec
        p = self.incl_prob
        if s.kind is DesignKind.SRS:
            m = np.full((s.N, s.N), _pair_prob(s.n, s.N))
        else:
            r = s.stratum_index
            m = np.outer(p, p)
            for k, (N_r, n_r) in enumerate(zip(s.stratum_sizes, s.allocations)):
                idx = np.flatnonzero(r == k)
                m[np.ix_(idx, idx)] = _pair_prob(n_r, N_r)
        np.fill_diagonal(m, p)
        return m

    def cov_matrix(self) -> np.ndarray:
        c = self.joint_matrix() - np.outer(self.incl_prob, self.incl_prob)
        np.fill_diagonal(c, self.incl_var)
        return c


def design_moments(spec: DesignSpec) -> DesignMoments:
    if spec.kind is DesignKind.SRS:
        p = np.full(spec.N, spec.n / spec.N if spec.N else 0.0)
    else:
        frac = np.array([n_r / N_r for n_r, N_r in zip(spec.allocations, spec.stratum_sizes)])
        p = frac[spec.stratum_index]
    return DesignMoments(spec, p, p * (1 - p))


def srs_coefficients(n: int, N: int):
    """Return ``(p, a, b)`` for SRS of ``n`` from ``N``."""
    p = n / N if N else 0.0
    pair = (n - 1) / (N - 1) if N > 1 else 0.0
    a = p * pair - 2 * p + 1
    b = p * (pair - p)
    return p, a, b


def design_coefficients(spec: DesignSpec, i: int, j: int):
    """Weights ``(true, parametric, cross-product)`` of the pair covariance.

    The covariance of distinct positions ``i`` and ``j`` is
    ``w_true * C~ + w_param * sigma^2 h_ij + w_cross * m_i m_j`` where ``m`` is
    the parametric-minus-true mean difference.
    """
    if spec.kind is DesignKind.SRS:
        p, a, b = srs_coefficients(spec.n, spec.N)
        return a, b + p ** 2, b
    r, t = spec.stratum_index[[i, j]]
    if r == t:
        p, a, b = srs_coefficients(spec.allocations[r], spec.stratum_sizes[r])
        return a, b + p ** 2, b
    p_r = spec.inclusion_fraction(r)
    p_t = spec.inclusion_fraction(t)
    return p_r * p_t - p_r - p_t + 1, p_r * p_t, 0.0
