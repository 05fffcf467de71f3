"""Emergent phone structure: Ward clustering with bootstrap support values.

Phones are profiled either by their learned weight columns (error
correction) or by their mean kNN vote distributions (memory based).  The
profiles are clustered with Ward's method; cluster stability is assessed
by multiscale bootstrap resampling of the feature columns, which yields a
plain bootstrap probability (BP) and an approximately unbiased (AU)
p-value per merge.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.stats

from .corpus import PhoneInventory, round_half_up
from .ecl import WeightMatrix
from .errors import DataError
from .seeding import derive_seed

DEFAULT_SCALES = tuple(round(0.5 + 0.1 * i, 1) for i in range(10))


@dataclass(frozen=True)
class PhoneProfileMatrix:
    """One feature row per phone, ready for clustering."""

    labels: tuple[str, ...]
    features: np.ndarray = field(repr=False)
    source: str = "WH"

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] != len(self.labels):
            raise ValueError(
                f"features must have shape (n_labels, p), got {features.shape}")
        if not np.isfinite(features).all():
            raise ValueError("profile features must be finite")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", tuple(self.labels))


def ecl_profiles(weights: WeightMatrix, source: str = "WH") -> PhoneProfileMatrix:
    """Profile each phone by its incoming weight column."""
    return PhoneProfileMatrix(labels=weights.inventory.labels,
                              features=weights.values.T.copy(),
                              source=source)


def mbl_profiles(true_phones, vote_shares, inventory: PhoneInventory,
                 source: str = "MBL") -> PhoneProfileMatrix:
    """Profile each phone by its mean kNN vote distribution.

    ``vote_shares`` holds one vote-share row per classified test frame;
    rows are grouped by the frame's true phone and averaged.  Every
    inventory phone must occur at least once.
    """
    true_phones = np.asarray(true_phones, dtype=object)
    shares = np.asarray(vote_shares, dtype=np.float64)
    if shares.ndim != 2 or shares.shape[0] != len(true_phones):
        raise ValueError("vote_shares must have one row per true phone")
    features = np.empty((len(inventory), shares.shape[1]))
    for j, label in enumerate(inventory):
        mask = true_phones == label
        if not mask.any():
            raise DataError(f"no test records for phone {label!r}")
        features[j] = shares[mask].mean(axis=0)
    return PhoneProfileMatrix(labels=inventory.labels, features=features,
                              source=source)


@dataclass(frozen=True)
class Dendrogram:
    """A merge tree over labeled leaves.

    Node ids: leaves are 0..n-1 in label order; merge step k creates node
    n+k.  ``heights`` holds the Ward criterion value of each merge.  When
    bootstrap support has been computed, ``au``/``bp`` hold one value per
    merge and ``au_fitted`` marks merges whose AU came from the multiscale
    model fit (False means a degenerate all-or-nothing fallback).
    """

    labels: tuple[str, ...]
    merges: np.ndarray = field(repr=False)
    heights: np.ndarray = field(repr=False)
    au: np.ndarray | None = field(default=None, repr=False)
    bp: np.ndarray | None = field(default=None, repr=False)
    au_fitted: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_leaves(self) -> int:
        return len(self.labels)

    def leaf_sets(self) -> list[frozenset[int]]:
        """Leaf-index set of every internal node, in merge order."""
        n = self.n_leaves
        sets: list[frozenset[int]] = [frozenset([i]) for i in range(n)]
        for a, b in self.merges:
            sets.append(sets[int(a)] | sets[int(b)])
        return sets[n:]

    def children(self) -> dict[int, tuple[int, int]]:
        n = self.n_leaves
        return {n + k: (int(a), int(b))
                for k, (a, b) in enumerate(self.merges)}


def _pairwise_sq_dists(X: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - X[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def ward_linkage(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Greedy Ward agglomeration over the rows of ``X``.

    The merge criterion between clusters A and B is
    ``2 * |A||B| / (|A|+|B|) * ||mean(A) - mean(B)||^2``, which for
    singletons reduces to the squared Euclidean distance.  After each
    merge the criterion is propagated with the Lance-Williams recurrence.
    At every step the globally minimal pair is merged; exact ties go to
    the lexicographically smallest (i, j) node-id pair.

    Returns ``(merges, heights)`` with node ids as in :class:`Dendrogram`.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < 2:
        raise DataError("clustering needs at least 2 rows")

    total = 2 * n - 1
    D = np.full((total, total), np.inf)
    D[:n, :n] = _pairwise_sq_dists(X)
    np.fill_diagonal(D[:n, :n], np.inf)
    size = np.zeros(total)
    size[:n] = 1.0
    alive = np.zeros(total, dtype=bool)
    alive[:n] = True

    merges = np.empty((n - 1, 2), dtype=np.int64)
    heights = np.empty(n - 1)
    for step in range(n - 1):
        m = n + step
        flat = int(np.argmin(D[:m, :m]))
        i, j = divmod(flat, m)
        if i > j:
            i, j = j, i
        h = D[i, j]
        merges[step] = (i, j)
        heights[step] = h

        alive[i] = alive[j] = False
        others = np.flatnonzero(alive[:m])
        if others.size:
            sk = size[others]
            si, sj = size[i], size[j]
            newd = ((si + sk) * D[i, others] + (sj + sk) * D[j, others]
                    - sk * h) / (si + sj + sk)
            D[m, others] = newd
            D[others, m] = newd
        D[i, :] = D[:, i] = np.inf
        D[j, :] = D[:, j] = np.inf
        size[m] = size[i] + size[j]
        alive[m] = True
    return merges, heights


def ward_cluster(profiles: PhoneProfileMatrix) -> Dendrogram:
    """Ward dendrogram over the profile rows."""
    merges, heights = ward_linkage(profiles.features)
    return Dendrogram(labels=profiles.labels, merges=merges, heights=heights)


def _bootstrap_scale(X: np.ndarray, node_sets: list[frozenset[int]],
                     sample_size: int, n_boot: int, seed: int) -> np.ndarray:
    """BP of every original node under one resampling scale."""
    rng = np.random.default_rng(seed)
    p = X.shape[1]
    counts = np.zeros(len(node_sets))
    for _ in range(n_boot):
        cols = rng.integers(0, p, size=sample_size)
        merges, _ = ward_linkage(X[:, cols])
        seen = set()
        sets: list[frozenset[int]] = [frozenset([i])
                                      for i in range(X.shape[0])]
        for a, b in merges:
            merged = sets[int(a)] | sets[int(b)]
            sets.append(merged)
            seen.add(merged)
        counts += [s in seen for s in node_sets]
    return counts / n_boot


def fit_multiscale(bp_curve, scales, n_boot: int) -> tuple[float, bool]:
    """AU p-value for one node from its BP values across scales.

    Fits ``z_r = v / sqrt(r) + c * sqrt(r)`` with ``z_r = Phi^-1(1 - BP_r)``
    by weighted least squares, using only scales where the BP is strictly
    between 0 and 1 (BP values are clamped away from the boundary before
    the probit transform).  The AU value is ``1 - Phi(v - c)``.

    Nodes observed always or never at every scale cannot support the fit;
    they fall back to AU 1 or 0 by majority, flagged as not fitted.
    """
    bp_curve = np.asarray(bp_curve, dtype=np.float64)
    scales = np.asarray(scales, dtype=np.float64)
    usable = (bp_curve > 0.0) & (bp_curve < 1.0)
    if usable.sum() < 2:
        return (1.0 if bp_curve.mean() >= 0.5 else 0.0), False
    r = scales[usable]
    lo = 1.0 / (2.0 * n_boot)
    bp = np.clip(bp_curve[usable], lo, 1.0 - lo)
    z = scipy.stats.norm.ppf(1.0 - bp)
    design = np.column_stack([1.0 / np.sqrt(r), np.sqrt(r)])
    weights = n_boot * scipy.stats.norm.pdf(z) ** 2 / (bp * (1.0 - bp))
    lhs = design.T @ (design * weights[:, None])
    rhs = design.T @ (weights * z)
    try:
        v, c = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError:
        return float("nan"), False
    return float(1.0 - scipy.stats.norm.cdf(v - c)), True


def bootstrap_pvalues(profiles: PhoneProfileMatrix, dendrogram: Dendrogram,
                      n_boot: int = 1000, scales=DEFAULT_SCALES,
                      seed: int = 0, workers: int = 1) -> Dendrogram:
    """Attach AU/BP support values to every merge of ``dendrogram``.

    For each scale r the feature columns are resampled with replacement to
    size ``round(r * p)`` ``n_boot`` times; the BP of a node at that scale
    is the fraction of replicate dendrograms containing the node's exact
    leaf set.  Reported BP comes from the scale closest to r = 1; AU comes
    from the multiscale fit (see :func:`fit_multiscale`).  With
    ``n_boot = 0`` the dendrogram is returned unchanged (heights only).
    Results are a pure function of (profiles, n_boot, scales, seed);
    ``workers`` only parallelizes over scales.
    """
    if n_boot < 0:
        raise ValueError("n_boot must be >= 0")
    if n_boot == 0:
        return dendrogram
    scales = tuple(float(s) for s in scales)
    if not scales:
        raise ValueError("need at least one scale")
    if any(s <= 0 for s in scales):
        raise ValueError("scales must be positive")
    if len(set(scales)) != len(scales):
        raise ValueError("scales must be distinct")

    X = profiles.features
    p = X.shape[1]
    node_sets = dendrogram.leaf_sets()
    sizes = [max(1, round_half_up(s * p)) for s in scales]
    seeds = [derive_seed(seed, "bootstrap", si) for si in range(len(scales))]

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_bootstrap_scale, X, node_sets, m, n_boot,
                                   sd) for m, sd in zip(sizes, seeds)]
            bp_by_scale = np.stack([f.result() for f in futures])
    else:
        bp_by_scale = np.stack([
            _bootstrap_scale(X, node_sets, m, n_boot, sd)
            for m, sd in zip(sizes, seeds)])

    report_scale = int(np.argmin(np.abs(np.asarray(scales) - 1.0)))
    bp = bp_by_scale[report_scale].copy()

    if len(scales) < 2:
        return replace(dendrogram, bp=bp, au=None, au_fitted=None)
    au = np.empty(len(node_sets))
    fitted = np.empty(len(node_sets), dtype=bool)
    for k in range(len(node_sets)):
        au[k], fitted[k] = fit_multiscale(bp_by_scale[:, k], scales, n_boot)
    return replace(dendrogram, bp=bp, au=au, au_fitted=fitted)


def _newick(dendrogram: Dendrogram) -> str:
    children = dendrogram.children()
    heights = {dendrogram.n_leaves + k: h
               for k, h in enumerate(dendrogram.heights)}

    def node_height(i: int) -> float:
        return heights.get(i, 0.0)

    def render(i: int, parent_height: float) -> str:
        length = "%.17g" % (parent_height - node_height(i))
        if i < dendrogram.n_leaves:
            return f"{dendrogram.labels[i]}:{length}"
        a, b = children[i]
        inner = f"({render(a, node_height(i))},{render(b, node_height(i))})"
        return f"{inner}:{length}"

    root = 2 * dendrogram.n_leaves - 2
    a, b = children[root]
    h = node_height(root)
    return f"({render(a, h)},{render(b, h)});"


def _dot(dendrogram: Dendrogram) -> str:
    lines = ["digraph dendrogram {", "  node [shape=box];"]
    for i, label in enumerate(dendrogram.labels):
        lines.append(f'  n{i} [label="{label}"];')
    children = dendrogram.children()
    for k in range(len(dendrogram.merges)):
        node = dendrogram.n_leaves + k
        parts = [f"h={'%.6g' % dendrogram.heights[k]}"]
        if dendrogram.au is not None:
            parts.append(f'<FONT COLOR="red">au={dendrogram.au[k]:.3f}</FONT>')
        if dendrogram.bp is not None:
            parts.append(
                f'<FONT COLOR="green">bp={dendrogram.bp[k]:.3f}</FONT>')
        label = "<BR/>".join(parts)
        lines.append(f"  n{node} [label=<{label}>];")
        a, b = children[node]
        lines.append(f"  n{node} -> n{a};")
        lines.append(f"  n{node} -> n{b};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def dendrogram_to_dict(dendrogram: Dendrogram) -> dict:
    def arr(x):
        return None if x is None else x.tolist()

    return {
        "labels": list(dendrogram.labels),
        "merges": dendrogram.merges.tolist(),
        "heights": dendrogram.heights.tolist(),
        "au": arr(dendrogram.au),
        "bp": arr(dendrogram.bp),
        "au_fitted": arr(dendrogram.au_fitted),
    }


def dendrogram_from_dict(data: dict) -> Dendrogram:
    def arr(x, dtype=np.float64):
        return None if x is None else np.asarray(x, dtype=dtype)

    return Dendrogram(
        labels=tuple(data["labels"]),
        merges=np.asarray(data["merges"], dtype=np.int64),
        heights=np.asarray(data["heights"], dtype=np.float64),
        au=arr(data.get("au")),
        bp=arr(data.get("bp")),
        au_fitted=arr(data.get("au_fitted"), dtype=bool),
    )


def export_dendrogram(dendrogram: Dendrogram, fmt: str, path) -> None:
    """Write the dendrogram as ``newick``, ``dot`` or ``json``."""
    if fmt == "newick":
        text = _newick(dendrogram) + "\n"
    elif fmt == "dot":
        text = _dot(dendrogram)
    elif fmt == "json":
        import json
        text = json.dumps(dendrogram_to_dict(dendrogram), indent=2) + "\n"
    else:
        raise ValueError(f"unknown dendrogram format {fmt!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def load_dendrogram_json(path) -> Dendrogram:
    import json
    with open(path, "r", encoding="utf-8") as fh:
        return dendrogram_from_dict(json.load(fh))
