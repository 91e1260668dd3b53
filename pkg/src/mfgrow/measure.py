"""Empirical measures over gamma groups, moment-matching losses, and the
index-sampling strategies used for weight transfer.

One GroupMeasure per partition group: sample i bundles everything indexed by
that group at position i (vector entries, matrix rows, matrix columns). The
per-sample scalar features are the slice profiles (mean over the opposing
axis); the full slices are kept alongside for reconstruction, so a network
can be reassembled from its measures without loss.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .arch import COL, ROW, GammaPartition
from .errors import ParameterError
from .net import Network


@dataclass(frozen=True)
class Slice:
    """Full per-sample slice data for one (weight, axis): shape (width, k)."""

    weight: str
    axis: str
    values: np.ndarray


@dataclass
class GroupMeasure:
    """The joint sample cloud of one gamma group.

    ``width`` is the group's gamma width (the number of joint samples), never
    a product of weight dimensions.
    """

    group_index: int
    gamma_ids: tuple[int, ...]
    width: int
    features: dict[str, np.ndarray] = field(default_factory=dict)
    slices: dict[str, Slice] = field(default_factory=dict)

    def feature_names(self) -> tuple[str, ...]:
        return tuple(self.features)

    def restricted(self, idx: np.ndarray) -> dict[str, np.ndarray]:
        return {name: vals[idx] for name, vals in self.features.items()}

    def sample_norms(self) -> np.ndarray:
        """Euclidean norm per sample over all concatenated full slices."""
        parts = [s.values for s in self.slices.values()]
        stacked = np.concatenate(parts, axis=1)
        return np.sqrt(np.sum(stacked * stacked, axis=1))

    def to_csv(self) -> str:
        buf = io.StringIO()
        names = list(self.features)
        buf.write("sample," + ",".join(names) + "\n")
        for i in range(self.width):
            vals = ",".join(f"{self.features[n][i]:.12g}" for n in names)
            buf.write(f"{i},{vals}\n")
        return buf.getvalue()


def extract_measures(net: Network, partition: GammaPartition) -> list[GroupMeasure]:
    """One GroupMeasure per group, in partition order."""
    arch = net.arch
    axis_to_group: dict[tuple[str, str], int] = {}
    for u in arch.usages:
        axis_to_group[(u.weight, u.axis)] = partition.group_of(u.gamma)

    measures = [
        GroupMeasure(i, grp, partition.widths[i])
        for i, grp in enumerate(partition.groups)
    ]
    for w in arch.weights:
        axes = ((ROW,) if w.kind == "vector" else (ROW, COL))
        for ax in axes:
            gi = axis_to_group.get((w.name, ax))
            if gi is None:
                continue
            m = measures[gi]
            arr = net.store[w.name]
            if w.kind == "vector":
                name = w.name
                values = arr[:, None]
                profile = arr.copy()
            elif ax == ROW:
                name = f"R({w.name})"
                values = arr
                profile = arr.mean(axis=1)
            else:
                name = f"C({w.name})"
                values = arr.T
                profile = arr.mean(axis=0)
            m.features[name] = profile
            m.slices[name] = Slice(w.name, ax, values)
    return measures


def reassemble(net: Network, measures: list[GroupMeasure]) -> Network:
    """Rebuild the weight store from full slices (round-trip check)."""
    out = net.clone()
    for m in measures:
        for s in m.slices.values():
            w = net.arch.weight(s.weight)
            if w.kind == "vector":
                out.store[s.weight] = s.values[:, 0].copy()
            elif s.axis == ROW:
                out.store[s.weight] = s.values.copy()
            else:
                out.store[s.weight] = s.values.T.copy()
    return out


# ---------------------------------------------------------------------------
# Losses over measures
# ---------------------------------------------------------------------------


def moment_loss(a: np.ndarray, b: np.ndarray, p: int) -> float:
    """Sum over q = 1..p of |mean|a|^q - mean|b|^q|."""
    if p < 1:
        raise ParameterError(f"p must be >= 1, got {p}")
    a = np.abs(np.asarray(a, dtype=np.float64))
    b = np.abs(np.asarray(b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ParameterError("moment_loss needs non-empty features")
    total = 0.0
    for q in range(1, p + 1):
        total += abs(float(np.mean(a**q)) - float(np.mean(b**q)))
    return total


@dataclass(frozen=True)
class TestFunctionSpec:
    """A moment(p) or indicator(p, q) discrepancy with a positive weight."""

    __test__ = False  # not a pytest class, despite the name

    kind: str  # "moment" | "indicator"
    p: int
    q: float = 0.0
    weight: float = 1.0

    def __post_init__(self):
        if self.kind not in ("moment", "indicator"):
            raise ParameterError(f"unknown test function kind {self.kind!r}")
        if self.p < 1:
            raise ParameterError(f"p must be >= 1, got {self.p}")
        if self.kind == "indicator" and self.q <= 0:
            raise ParameterError(f"indicator threshold q must be > 0, got {self.q}")
        if self.weight <= 0:
            raise ParameterError(f"weight must be positive, got {self.weight}")

    def discrepancy(self, a: np.ndarray, b: np.ndarray) -> float:
        aa = np.abs(a) ** self.p
        bb = np.abs(b) ** self.p
        if self.kind == "moment":
            return abs(float(aa.mean()) - float(bb.mean()))
        return abs(float((aa >= self.q).mean()) - float((bb >= self.q).mean()))


def moment_specs(p_max: int, weight: float = 1.0) -> list[TestFunctionSpec]:
    return [TestFunctionSpec("moment", p, weight=weight) for p in range(1, p_max + 1)]


def weighted_measure_loss(x, y, specs: list[TestFunctionSpec]) -> float:
    """Weighted sum of per-spec discrepancies over shared features.

    ``x`` and ``y`` are GroupMeasures or plain name->values dicts.
    """
    xf = x.features if isinstance(x, GroupMeasure) else x
    yf = y.features if isinstance(y, GroupMeasure) else y
    total = 0.0
    for name, vals in xf.items():
        other = yf.get(name)
        if other is None:
            raise ParameterError(f"unknown feature {name!r} in comparison measure")
        for spec in specs:
            total += spec.weight * spec.discrepancy(vals, other)
    return total


# ---------------------------------------------------------------------------
# Index sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RandomStrategy:
    # None: with replacement only when growing past the pool (a same-size
    # draw is then a pure permutation). True forces a bootstrap redraw.
    replace: bool | None = None


@dataclass(frozen=True)
class GroupStrategy:
    n_groups: int

    def __post_init__(self):
        if self.n_groups < 1:
            raise ParameterError(f"n_groups must be >= 1, got {self.n_groups}")


@dataclass(frozen=True)
class FunctionBasedStrategy:
    n_candidates: int
    specs: tuple[TestFunctionSpec, ...]

    def __post_init__(self):
        if self.n_candidates < 1:
            raise ParameterError(f"n_candidates must be >= 1, got {self.n_candidates}")


@dataclass(frozen=True)
class IndexSet:
    """Source sample positions chosen for one group (length = target width)."""

    group_index: int
    indices: np.ndarray


def _surviving_pool(m: GroupMeasure, r2: float) -> np.ndarray:
    """Indices surviving the norm-rate filter: the top ceil((1-r2)*width)
    samples by feature norm, descending (stable on ties)."""
    if not 0.0 <= r2 < 1.0:
        raise ParameterError(f"r2 must lie in [0, 1), got {r2}")
    keep = math.ceil((1.0 - r2) * m.width)
    if keep < 1:
        raise ParameterError(f"r2={r2} leaves zero samples in group {m.group_index}")
    norms = m.sample_norms()
    order = np.argsort(-norms, kind="stable")
    return order[:keep]


def _draw_from_pool(pool: np.ndarray, target: int, gen: np.random.Generator,
                    replace: bool | None = None) -> np.ndarray:
    # Default: with replacement when growing past the pool, without when
    # subsetting.
    if replace is None:
        replace = target > pool.size
    elif not replace and target > pool.size:
        raise ParameterError(
            f"cannot draw {target} distinct samples from a pool of {pool.size}"
        )
    return gen.choice(pool, size=target, replace=replace)


def draw_indices(m: GroupMeasure, target: int, strategy, r2: float, rng) -> IndexSet:
    """Pick ``target`` source positions per the strategy, after the r2
    norm filter."""
    if target < 1:
        raise ParameterError(f"target must be >= 1, got {target}")
    gen = rng.generator() if hasattr(rng, "generator") else rng
    pool = _surviving_pool(m, r2)

    if isinstance(strategy, RandomStrategy):
        idx = _draw_from_pool(pool, target, gen, strategy.replace)
    elif isinstance(strategy, GroupStrategy):
        # Pool is already norm-sorted; split into contiguous norm bands,
        # pick a band uniformly, then a member uniformly within it.
        bands = [b for b in np.array_split(pool, strategy.n_groups) if b.size > 0]
        picks = gen.integers(0, len(bands), size=target)
        idx = np.empty(target, dtype=np.int64)
        for i, b in enumerate(picks):
            band = bands[b]
            idx[i] = band[gen.integers(0, band.size)]
    elif isinstance(strategy, FunctionBasedStrategy):
        reference = m.restricted(pool)
        best = None
        best_loss = math.inf
        for _ in range(strategy.n_candidates):
            cand = _draw_from_pool(pool, target, gen)
            loss = weighted_measure_loss(reference, m.restricted(cand), list(strategy.specs))
            if loss < best_loss:
                best, best_loss = cand, loss
        idx = best
    else:
        raise ParameterError(f"unknown sampling strategy {strategy!r}")
    return IndexSet(m.group_index, np.asarray(idx, dtype=np.int64))


def coupling_contrast(u: np.ndarray, v: np.ndarray) -> tuple[float, float]:
    """(mean(u_i * v_i), mean(u) * mean(v)): the paired empirical pairing
    versus the decoupled product-of-marginals pairing. They differ by the
    empirical covariance."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1 or u.size < 2:
        raise ParameterError("coupling_contrast needs two equal-length 1-d samples, n >= 2")
    return float(np.mean(u * v)), float(u.mean() * v.mean())
