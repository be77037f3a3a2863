"""Pareto machinery for minimisation problems.

Non-dominated filtering, exact hypervolume (m <= 4), hypervolume improvement
and its relative variant, NSGA-II front discovery over surrogate means,
diversity regions, region-balanced batch selection, and the GD/IGD metrics.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import cdist

MAX_HV_OBJECTIVES = 4


@dataclass(frozen=True)
class FrontPoint:
    objectives: tuple[float, ...]
    set: frozenset = frozenset()
    x: tuple[float, ...] = ()


class ParetoArchive:
    """A mutually non-dominated collection of :class:`FrontPoint`."""

    def __init__(self, points: Sequence[FrontPoint] = ()):
        self.points = tuple(points)

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __getitem__(self, i):
        return self.points[i]

    def __eq__(self, other):
        return isinstance(other, ParetoArchive) and self.points == other.points

    def __repr__(self):
        return f"ParetoArchive({len(self.points)} points)"

    @property
    def objectives(self) -> np.ndarray:
        if not self.points:
            return np.empty((0, 0))
        return np.array([p.objectives for p in self.points], dtype=float)


def _as_matrix(points) -> np.ndarray:
    if isinstance(points, ParetoArchive):
        return points.objectives
    if isinstance(points, np.ndarray):
        Y = points.astype(float, copy=False)
    else:
        points = list(points)
        if points and isinstance(points[0], FrontPoint):
            Y = np.array([p.objectives for p in points], dtype=float)
        else:
            Y = np.asarray(points, dtype=float)
    if Y.size == 0:
        return Y.reshape(0, Y.shape[-1] if Y.ndim == 2 else 0)
    return np.atleast_2d(Y)


def dominates(a, b) -> bool:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return bool(np.all(a <= b) and np.any(a < b))


def nondominated_mask(Y) -> np.ndarray:
    """Boolean mask of the non-dominated rows of ``Y``.

    Of several identical rows only the first is kept.
    """
    Y = _as_matrix(Y)
    n = Y.shape[0]
    if n == 0:
        return np.zeros(0, dtype=bool)
    if np.isnan(Y).any():
        raise ValueError("NaN objective value")
    # lexicographic order: anything weakly dominating a row sorts before it
    order = np.lexsort(tuple(Y[:, k] for k in reversed(range(Y.shape[1]))))
    keep = np.zeros(n, dtype=bool)
    if Y.shape[1] == 1:
        keep[order[0]] = True
        return keep
    if Y.shape[1] == 2:
        best = np.inf
        for i in order:
            if Y[i, 1] < best:
                keep[i] = True
                best = Y[i, 1]
        return keep
    front = np.empty((0, Y.shape[1]))
    chunk = 256
    for start in range(0, n, chunk):
        idx = order[start : start + chunk]
        block = Y[idx]
        if len(front):
            covered = (front[None, :, :] <= block[:, None, :]).all(axis=2).any(axis=1)
            idx, block = idx[~covered], block[~covered]
        for i, row in zip(idx, block):
            if len(front) and (front <= row).all(axis=1).any():
                continue
            keep[i] = True
            front = np.vstack([front, row])
    return keep


def non_dominated_filter(points: Iterable) -> ParetoArchive:
    """Maximal non-dominated subset in input order, duplicates collapsed."""
    points = list(points)
    if not points:
        return ParetoArchive()
    if not isinstance(points[0], FrontPoint):
        points = [FrontPoint(tuple(float(v) for v in p)) for p in points]
    mask = nondominated_mask(np.array([p.objectives for p in points], dtype=float))
    return ParetoArchive([p for p, k in zip(points, mask) if k])


# -- hypervolume ------------------------------------------------------------


def _hv2d(Y: np.ndarray, ref: np.ndarray) -> float:
    Y = Y[np.lexsort((Y[:, 1], Y[:, 0]))]
    volume = 0.0
    best = ref[1]
    # sweep left to right; each point adds the strip below the running minimum
    for i in range(len(Y)):
        y2 = Y[i, 1]
        if y2 < best:
            right = ref[0]
            volume += (right - Y[i, 0]) * (best - y2)
            best = y2
    return volume


def _hv_rec(Y: np.ndarray, ref: np.ndarray) -> float:
    m = Y.shape[1]
    if len(Y) == 0:
        return 0.0
    if m == 1:
        return float(ref[0] - Y[:, 0].min())
    if m == 2:
        return _hv2d(Y, ref)
    Y = Y[np.argsort(Y[:, -1], kind="stable")]
    volume = 0.0
    for i in range(len(Y)):
        top = Y[i + 1, -1] if i + 1 < len(Y) else ref[-1]
        depth = top - Y[i, -1]
        if depth > 0:
            slab = Y[: i + 1, :-1]
            slab = slab[nondominated_mask(slab)]
            volume += depth * _hv_rec(slab, ref[:-1])
    return volume


def hypervolume(points, ref_point) -> float:
    """Exact dominated volume between ``points`` and ``ref_point``.

    Every point must be strictly better than the reference point in all
    objectives.  Two objectives use a sort-and-sum sweep, three and four a
    recursive slicing along the last objective.
    """
    Y = _as_matrix(points)
    ref = np.asarray(ref_point, dtype=float).ravel()
    if Y.shape[0] == 0:
        return 0.0
    if Y.shape[1] != ref.size:
        raise ValueError("reference point dimension does not match the objectives")
    if ref.size > MAX_HV_OBJECTIVES:
        raise ValueError(f"hypervolume supports at most {MAX_HV_OBJECTIVES} objectives")
    if np.isnan(Y).any():
        raise ValueError("NaN objective value")
    bad = ~(Y < ref).all(axis=1)
    if bad.any():
        raise ValueError(f"point {Y[bad][0].tolist()} does not dominate the reference point")
    return float(_hv_rec(Y[nondominated_mask(Y)], ref))


def _inside(Y: np.ndarray, ref: np.ndarray) -> np.ndarray:
    return Y[(Y < ref).all(axis=1)] if len(Y) else Y


def hvi(batch, archive, ref_point) -> float:
    """Hypervolume gained by adding ``batch`` to ``archive``.

    Points that do not dominate the reference point add no volume and are
    ignored rather than rejected.
    """
    ref = np.asarray(ref_point, dtype=float).ravel()
    B = _inside(_as_matrix(batch).reshape(-1, ref.size), ref)
    A = _inside(_as_matrix(archive).reshape(-1, ref.size), ref)
    if len(B) == 0:
        return 0.0
    return max(0.0, hypervolume(np.vstack([A, B]), ref) - hypervolume(A, ref))


def rhvi(batch, local_front, ref_point) -> float:
    """``hvi`` divided by the hypervolume of ``local_front``.

    A local front with zero hypervolume yields ``inf`` when the batch
    improves on it and ``0`` otherwise.
    """
    ref = np.asarray(ref_point, dtype=float).ravel()
    base = hypervolume(_inside(_as_matrix(local_front).reshape(-1, ref.size), ref), ref)
    gain = hvi(batch, local_front, ref)
    if base <= 0.0:
        return float("inf") if gain > 0 else 0.0
    return gain / base


def reference_point(Y, margin: float = 0.1) -> np.ndarray:
    """Nadir of ``Y`` pushed out by ``margin`` times each objective's range."""
    Y = _as_matrix(Y)
    lo, hi = Y.min(axis=0), Y.max(axis=0)
    span = hi - lo
    span = np.where(span > 0, span, np.maximum(np.abs(hi), 1.0))
    return hi + margin * span


def hv_contributions(candidates, front, ref_point) -> np.ndarray:
    """Hypervolume each candidate would add to ``front`` on its own."""
    ref = np.asarray(ref_point, dtype=float).ravel()
    C = _as_matrix(candidates).reshape(-1, ref.size)
    F = _inside(_as_matrix(front).reshape(-1, ref.size), ref)
    if ref.size != 2:
        base = hypervolume(F, ref)
        out = np.zeros(len(C))
        for i, c in enumerate(C):
            if (c < ref).all():
                out[i] = max(0.0, hypervolume(np.vstack([F, c]), ref) - base)
        return out
    F = F[nondominated_mask(F)] if len(F) else F
    F = F[np.argsort(F[:, 0], kind="stable")]
    # staircase of F: level over [lefts[j], rights[j]) is levels[j]
    lefts = np.concatenate([[-np.inf], F[:, 0]])
    rights = np.concatenate([F[:, 0], [ref[0]]])
    levels = np.concatenate([[ref[1]], F[:, 1]])
    a = C[:, [0]]
    b = C[:, [1]]
    width = np.clip(rights[None, :] - np.maximum(lefts[None, :], a), 0.0, None)
    height = np.clip(levels[None, :] - b, 0.0, None)
    out = (width * height).sum(axis=1)
    out[~(C < ref).all(axis=1)] = 0.0
    return out


# -- metrics ----------------------------------------------------------------


def _check_front(Y, name: str) -> np.ndarray:
    Y = _as_matrix(Y)
    if Y.shape[0] == 0:
        raise ValueError(f"{name} front is empty")
    return Y


def gd(approx_front, true_front) -> float:
    """Mean distance from each approximated point to its nearest true point."""
    A = _check_front(approx_front, "approximated")
    T = _check_front(true_front, "true")
    return float(cdist(A, T).min(axis=1).mean())


def igd(approx_front, true_front) -> float:
    """Mean distance from each true point to its nearest approximated point."""
    A = _check_front(approx_front, "approximated")
    T = _check_front(true_front, "true")
    return float(cdist(T, A).min(axis=1).mean())


# -- NSGA-II front discovery --------------------------------------------------


def _dominance_matrix(Y: np.ndarray) -> np.ndarray:
    """``D[i, j]`` is True when row ``i`` dominates row ``j``."""
    le = np.ones((len(Y), len(Y)), dtype=bool)
    lt = np.zeros((len(Y), len(Y)), dtype=bool)
    for k in range(Y.shape[1]):
        col = Y[:, k]
        le &= col[:, None] <= col[None, :]
        lt |= col[:, None] < col[None, :]
    return le & lt


def fast_non_dominated_sort(Y: np.ndarray) -> np.ndarray:
    """Front rank (0 = non-dominated) for every row of ``Y``."""
    n = len(Y)
    dom = _dominance_matrix(Y)
    count = dom.sum(axis=0)
    rank = np.full(n, -1)
    current = np.flatnonzero(count == 0)
    r = 0
    while current.size:
        rank[current] = r
        count = count - dom[current].sum(axis=0)
        count[rank >= 0] = -1
        current = np.flatnonzero(count == 0)
        r += 1
    return rank


def crowding_distance(Y: np.ndarray) -> np.ndarray:
    n, m = Y.shape
    dist = np.zeros(n)
    if n <= 2:
        dist[:] = np.inf
        return dist
    for k in range(m):
        order = np.argsort(Y[:, k], kind="stable")
        span = Y[order[-1], k] - Y[order[0], k]
        dist[order[0]] = dist[order[-1]] = np.inf
        if span > 0:
            dist[order[1:-1]] += (Y[order[2:], k] - Y[order[:-2], k]) / span
    return dist


def _rank_and_crowding(Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    rank = fast_non_dominated_sort(Y)
    cd = np.zeros(len(Y))
    for r in range(rank.max() + 1):
        idx = np.flatnonzero(rank == r)
        cd[idx] = crowding_distance(Y[idx])
    return rank, cd


def _survivors(rank: np.ndarray, cd: np.ndarray, size: int) -> np.ndarray:
    # best rank first, then largest crowding distance, then lowest index
    order = np.lexsort((np.arange(len(rank)), -cd, rank))
    return np.sort(order[:size])


def _sbx(P1, P2, lo, hi, rng, eta=15.0, prob=0.9):
    """Simulated binary crossover applied row-wise to two parent matrices."""
    n, d = P1.shape
    u = rng.random((n, d))
    beta = np.where(u <= 0.5, (2 * u) ** (1 / (eta + 1)), (1 / (2 * (1 - u))) ** (1 / (eta + 1)))
    swap = (rng.random((n, d)) <= 0.5) & (np.abs(P1 - P2) > 1e-14) & (rng.random((n, 1)) <= prob)
    C1 = np.where(swap, 0.5 * ((1 + beta) * P1 + (1 - beta) * P2), P1)
    C2 = np.where(swap, 0.5 * ((1 - beta) * P1 + (1 + beta) * P2), P2)
    return np.clip(C1, lo, hi), np.clip(C2, lo, hi)


def _poly_mutation(X, lo, hi, rng, eta=20.0, prob=None):
    n, d = X.shape
    prob = 1.0 / max(d, 1) if prob is None else prob
    u = rng.random((n, d))
    delta = np.where(u < 0.5, (2 * u) ** (1 / (eta + 1)) - 1, 1 - (2 * (1 - u)) ** (1 / (eta + 1)))
    hit = rng.random((n, d)) < prob
    return np.clip(np.where(hit, X + delta * (hi - lo), X), lo, hi)


def _min_norm_direction(G: np.ndarray, iters: int = 30) -> np.ndarray:
    """Negated min-norm point of the convex hull of each row's gradients.

    ``G`` is ``(n, m, d)``.  The result is a common descent direction for all
    ``m`` objectives, or zero at a Pareto-critical point.
    """
    n, m, d = G.shape
    if m == 1:
        return -G[:, 0]
    if m == 2:
        diff = G[:, 0] - G[:, 1]
        denom = (diff * diff).sum(axis=1)
        a = np.clip(-(diff * G[:, 1]).sum(axis=1) / np.where(denom > 0, denom, 1.0), 0.0, 1.0)
        return -(a[:, None] * G[:, 0] + (1 - a[:, None]) * G[:, 1])
    # Frank-Wolfe on the simplex
    w = np.full((n, m), 1.0 / m)
    M = np.einsum("nid,njd->nij", G, G)
    for k in range(iters):
        grad = np.einsum("nij,nj->ni", M, w)
        e = np.eye(m)[grad.argmin(axis=1)]
        step = 2.0 / (k + 2)
        w = (1 - step) * w + step * e
    return -np.einsum("nm,nmd->nd", w, G)


def _polish(objective, X, Y, lo, hi, n_steps: int = 20, step: float = 0.05):
    """First-order refinement of a population towards Pareto-critical points.

    Each point moves along the common descent direction of all objectives
    (finite-difference gradients in unit-box coordinates); a move is kept only
    if it weakly dominates the current point.
    """
    n, d = X.shape
    width = np.where(hi > lo, hi - lo, 1.0)
    U = (X - lo) / width
    t = np.full(n, step)
    h = 1e-6
    for _ in range(n_steps):
        G = np.empty((n, Y.shape[1], d))
        for k in range(d):
            Uh = U.copy()
            sign = np.where(Uh[:, k] + h <= 1.0, 1.0, -1.0)
            Uh[:, k] += sign * h
            Yh = np.atleast_2d(objective(lo + Uh * width)).reshape(n, -1)
            G[:, :, k] = (Yh - Y) / (sign[:, None] * h)
        D = _min_norm_direction(G)
        D[((U <= 0) & (D < 0)) | ((U >= 1) & (D > 0))] = 0.0
        norm = np.linalg.norm(D, axis=1)
        moving = norm > 1e-12
        if not moving.any():
            break
        D[moving] /= norm[moving, None]
        Un = np.clip(U + t[:, None] * D, 0.0, 1.0)
        Yn = np.atleast_2d(objective(lo + Un * width)).reshape(n, -1)
        ok = moving & (Yn <= Y).all(axis=1) & (Yn < Y).any(axis=1)
        U[ok], Y[ok] = Un[ok], Yn[ok]
        t = np.where(ok, np.minimum(t * 1.5, 0.25), t * 0.5)
    return lo + U * width, Y


def nsga2(
    objective: Callable[[np.ndarray], np.ndarray],
    bounds,
    rng: np.random.Generator,
    pop_size: int = 100,
    n_gen: int = 50,
    initial: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Minimise a vectorised ``objective`` over a box with NSGA-II.

    Returns the unique non-dominated members of the final population as
    ``(X, Y)``, sorted by the first objective.
    """
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
    lo, hi = bounds[:, 0], bounds[:, 1]
    d = len(bounds)
    if d == 0:
        X = np.zeros((1, 0))
        return X, np.atleast_2d(objective(X))
    X = lo + (hi - lo) * rng.random((pop_size, d))
    if initial is not None and len(initial):
        seeds = np.clip(np.asarray(initial, dtype=float).reshape(-1, d), lo, hi)[:pop_size]
        X[: len(seeds)] = seeds
    Y = np.atleast_2d(objective(X)).reshape(len(X), -1)
    rank, cd = _rank_and_crowding(Y)
    half = (pop_size + 1) // 2
    for _ in range(n_gen):
        # binary tournaments on (rank, -crowding)
        a, b = rng.integers(0, len(X), size=(2, 2 * half))
        a_wins = (rank[a] < rank[b]) | ((rank[a] == rank[b]) & (cd[a] > cd[b]))
        parents = np.where(a_wins, a, b)
        C1, C2 = _sbx(X[parents[:half]], X[parents[half:]], lo, hi, rng)
        Xc = _poly_mutation(np.vstack([C1, C2])[:pop_size], lo, hi, rng)
        Yc = np.atleast_2d(objective(Xc)).reshape(len(Xc), -1)
        X = np.vstack([X, Xc])
        Y = np.vstack([Y, Yc])
        rank, cd = _rank_and_crowding(Y)
        keep = _survivors(rank, cd, pop_size)
        X, Y = X[keep], Y[keep]
        rank, cd = _rank_and_crowding(Y)
    mask = rank == 0
    X, Y = _polish(objective, X[mask], Y[mask], lo, hi)
    keep = nondominated_mask(Y)
    X, Y = X[keep], Y[keep]
    _, first = np.unique(np.round(X, 12), axis=0, return_index=True)
    first = np.sort(first)
    X, Y = X[first], Y[first]
    order = np.lexsort(tuple(X[:, k] for k in reversed(range(d))) + (Y[:, 0],))
    return X[order], Y[order]


def discover_local_front(
    models: Sequence,
    bounds,
    rng: np.random.Generator,
    pop_size: int = 100,
    n_gen: int = 50,
    initial: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Approximate Pareto set and front of the posterior means of ``models``.

    Each model must provide ``mean(X)`` for ``X`` in the original input units.
    """

    def objective(X):
        return np.column_stack([m.mean(X) for m in models])

    return nsga2(objective, bounds, rng, pop_size, n_gen, initial)


# -- diversity regions and batch selection ------------------------------------


@dataclass(frozen=True)
class DiversityRegionSet:
    labels: np.ndarray
    n_regions: int

    def members(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.labels == k)


def diversity_regions(
    pareto_set, front=None, k_max: int = 8, threshold: float = 0.1
) -> DiversityRegionSet:
    """Single-linkage clusters of the approximated Pareto set.

    ``pareto_set`` should already be normalised to the unit box; points
    closer than ``threshold`` end up in the same region, and at most
    ``k_max`` regions are formed.  ``front`` is accepted for interface
    symmetry and does not influence the grouping.
    """
    X = np.asarray(pareto_set, dtype=float)
    n = len(X)
    if n == 0:
        raise ValueError("empty Pareto set")
    if n == 1 or X.ndim < 2 or X.shape[1] == 0:
        return DiversityRegionSet(np.zeros(n, dtype=int), 1)
    Z = linkage(X, method="single")
    raw = fcluster(Z, t=threshold, criterion="distance")
    if raw.max() > k_max:
        raw = fcluster(Z, t=k_max, criterion="maxclust")
    relabel: dict[int, int] = {}
    labels = np.array([relabel.setdefault(r, len(relabel)) for r in raw], dtype=int)
    return DiversityRegionSet(labels, len(relabel))


def _balanced(counts: np.ndarray, open_regions: np.ndarray) -> bool:
    active = counts[open_regions] if open_regions.any() else counts
    return active.max() - active.min() <= 1 if len(active) else True


def _tie_break(cands: np.ndarray, X: np.ndarray, anchors: np.ndarray) -> int:
    if len(cands) == 1:
        return int(cands[0])
    if len(anchors) and X.shape[1]:
        spread = cdist(X[cands], anchors).min(axis=1)
        far = spread >= spread.max() - 1e-12
        cands = cands[far]
    keys = tuple(X[cands, k] for k in reversed(range(X.shape[1]))) if X.shape[1] else ()
    return int(cands[np.lexsort(keys)[0]]) if keys else int(cands.min())


def select_local_batch(
    candidates_x,
    candidates_y,
    regions: DiversityRegionSet,
    archive,
    ref_point,
    batch_size: int,
    anchors=None,
    max_swap_passes: int = 10,
) -> np.ndarray:
    """Pick ``batch_size`` candidate indices maximising joint hypervolume improvement.

    Greedy picks are followed by single-swap refinement.  Region counts of
    the batch may differ by at most one, counting only regions that still
    have unpicked candidates.  Exact ties prefer the candidate farthest from
    ``anchors`` (already-evaluated inputs, normalised), then the
    lexicographically smallest input.
    """
    X = np.asarray(candidates_x, dtype=float)
    X = X.reshape(len(X), -1)
    Yc = _as_matrix(candidates_y)
    ref = np.asarray(ref_point, dtype=float).ravel()
    A = _inside(_as_matrix(archive).reshape(-1, ref.size), ref)
    n = len(X)
    if batch_size >= n:
        return np.arange(n)
    labels = regions.labels
    K = regions.n_regions
    anchors = np.empty((0, X.shape[1])) if anchors is None else np.asarray(anchors, dtype=float).reshape(-1, X.shape[1])

    def tol(v):
        return 1e-12 * max(1.0, abs(v))

    chosen: list[int] = []
    counts = np.zeros(K, dtype=int)
    for _ in range(batch_size):
        free = np.setdiff1d(np.arange(n), chosen)
        open_regions = np.isin(np.arange(K), labels[free])
        low = counts[open_regions].min()
        eligible = free[(counts[labels[free]] == low)]
        base = np.vstack([A, Yc[chosen]]) if chosen else A
        gains = hv_contributions(Yc[eligible], base, ref)
        best = gains.max()
        tied = eligible[gains >= best - tol(best)]
        pick = _tie_break(tied, X, np.vstack([anchors, X[chosen]]) if chosen else anchors)
        chosen.append(pick)
        counts[labels[pick]] += 1

    def total(idx):
        return hypervolume(np.vstack([A, Yc[idx]]), ref) if len(idx) or len(A) else 0.0

    current = total(_inside_idx(Yc, chosen, ref))
    for _ in range(max_swap_passes):
        improved = False
        for pos in range(len(chosen)):
            rest = chosen[:pos] + chosen[pos + 1 :]
            free = np.setdiff1d(np.arange(n), chosen)
            if not len(free):
                break
            base = np.vstack([A, Yc[rest]]) if rest else A
            base_hv = hypervolume(_inside(base, ref), ref) if len(base) else 0.0
            gains = base_hv + hv_contributions(Yc[free], base, ref)
            order = np.argsort(-gains, kind="stable")
            for j in order:
                if gains[j] <= current + tol(current):
                    break
                c = free[j]
                trial = counts.copy()
                trial[labels[chosen[pos]]] -= 1
                trial[labels[c]] += 1
                still_free = np.setdiff1d(free, [c])
                open_regions = np.isin(np.arange(K), np.concatenate([labels[still_free], labels[rest + [c]]]))
                if not _balanced(trial, open_regions):
                    continue
                chosen[pos] = int(c)
                counts = trial
                current = gains[j]
                improved = True
                break
        if not improved:
            break
    return np.array(chosen, dtype=int)


def _inside_idx(Y, idx, ref):
    return [i for i in idx if (Y[i] < ref).all()]
