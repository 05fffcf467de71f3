"""Memory-based learning: exemplar storage and k-nearest-neighbour voting.

Learning is pure storage.  Classification retrieves the k nearest stored
exemplars by Euclidean distance and takes a majority vote.  All ties are
broken deterministically: equal distances favour the earlier insertion
index, equal vote counts favour the tied label encountered first in the
distance-ordered neighbour list.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from ._validation import as_float_matrix, as_float_vector, check_same_length
from .corpus import N_CUES, FrameDataset, LabeledFrame, PhoneInventory

_CHUNK_ROWS = 262144


@dataclass(frozen=True)
class MblConfig:
    """Hyper-parameters of the memory-based learner."""

    k: int = 7

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")


@dataclass(frozen=True)
class VoteResult:
    """Outcome of one kNN classification."""

    phone: str
    confidence: float
    neighbor_ids: np.ndarray = field(repr=False)
    vote_counts: np.ndarray = field(repr=False)

    @property
    def vote_shares(self) -> np.ndarray:
        return self.vote_counts / self.vote_counts.sum()


class ExemplarStore:
    """An insertion-ordered store of labeled cue vectors."""

    def __init__(self, cues, phone_indices, inventory: PhoneInventory):
        self.cues = np.ascontiguousarray(cues, dtype=np.float64)
        self.phone_indices = np.asarray(phone_indices, dtype=np.int64)
        self.inventory = inventory
        if self.cues.ndim != 2:
            raise ValueError("exemplar cues must be 2-dimensional")
        check_same_length("cues", self.cues, "phone_indices",
                          self.phone_indices)
        if len(self.phone_indices) and (
                self.phone_indices.min() < 0
                or self.phone_indices.max() >= len(inventory)):
            raise ValueError("phone index outside inventory range")

    @classmethod
    def from_dataset(cls, dataset: FrameDataset) -> "ExemplarStore":
        return cls(dataset.cues, dataset.phone_indices, dataset.inventory)

    def __len__(self) -> int:
        return len(self.phone_indices)

    @property
    def n_features(self) -> int:
        return self.cues.shape[1]


def store(exemplars, inventory: PhoneInventory,
          n_cues: int = N_CUES) -> ExemplarStore:
    """Build a store from labeled frames or (cue vector, phone label) pairs.

    Insertion order is preserved.  An empty input yields an empty store
    (queries against it fail; adding is storing).
    """
    items = list(exemplars)
    if not items:
        return ExemplarStore(np.empty((0, n_cues)), [], inventory)
    cues, labels = [], []
    for item in items:
        if isinstance(item, LabeledFrame):
            cues.append(item.cues)
            labels.append(item.phone)
        else:
            c, p = item
            cues.append(as_float_vector(c, name="cues"))
            labels.append(p)
    phone_indices = [inventory.index(p) for p in labels]
    return ExemplarStore(np.stack(cues), phone_indices, inventory)


def _sq_dists(cues: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Squared Euclidean distance from ``query`` to every stored row.

    Computed directly as sum((x - q)^2), chunked over rows to bound the
    temporary memory; chunking cannot change any per-row result.
    """
    n = cues.shape[0]
    out = np.empty(n)
    for lo in range(0, n, _CHUNK_ROWS):
        hi = min(lo + _CHUNK_ROWS, n)
        diff = cues[lo:hi] - query
        out[lo:hi] = np.einsum("ij,ij->i", diff, diff)
    return out


def knn(store: ExemplarStore, query, k: int = 7) -> np.ndarray:
    """Indices of the k nearest exemplars, nearest first.

    Exemplars at equal distance are ordered by insertion index, so the
    result is a pure function of the store contents and the query.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > len(store):
        raise ValueError(
            f"k={k} exceeds the store size of {len(store)} exemplars")
    query = as_float_vector(query, length=store.n_features, name="query")
    d2 = _sq_dists(store.cues, query)
    kth = np.partition(d2, k - 1)[k - 1]
    candidates = np.flatnonzero(d2 <= kth)
    order = np.argsort(d2[candidates], kind="stable")
    return candidates[order][:k]


def predict(store: ExemplarStore, query,
            config: MblConfig | None = None) -> VoteResult:
    """Majority vote over the k nearest exemplars."""
    if config is None:
        config = MblConfig()
    neighbors = knn(store, query, config.k)
    labels = store.phone_indices[neighbors]
    counts = np.bincount(labels, minlength=len(store.inventory))
    best = counts.max()
    winner = next(int(lab) for lab in labels if counts[lab] == best)
    return VoteResult(phone=store.inventory[winner],
                      confidence=best / config.k,
                      neighbor_ids=neighbors,
                      vote_counts=counts)


class ExemplarKnnClassifier(ClassifierMixin, BaseEstimator):
    """Scikit-learn style wrapper around the memory-based learner.

    Parameters
    ----------
    k : int
        Number of neighbours in the vote.
    inventory : PhoneInventory or iterable of str, optional
        Outcome set.  Defaults to the sorted distinct labels of ``y``.
    """

    def __init__(self, k: int = 7, inventory=None):
        self.k = k
        self.inventory = inventory

    def fit(self, X, y):
        """Store the training exemplars verbatim, in order."""
        MblConfig(k=self.k)
        X = as_float_matrix(X, name="X")
        y = np.asarray(y, dtype=object)
        check_same_length("X", X, "y", y)
        if self.inventory is None:
            inventory = PhoneInventory(sorted({str(lab) for lab in y}))
        elif isinstance(self.inventory, PhoneInventory):
            inventory = self.inventory
        else:
            inventory = PhoneInventory(self.inventory)
        phone_indices = [inventory.index(lab) for lab in y]
        self.inventory_ = inventory
        self.classes_ = np.asarray(inventory.labels, dtype=object)
        self.store_ = ExemplarStore(X.copy(), phone_indices, inventory)
        self.n_features_in_ = X.shape[1]
        return self

    def _check_fitted_X(self, X) -> np.ndarray:
        if not hasattr(self, "store_"):
            raise ValueError("this classifier has not been fitted yet")
        return as_float_matrix(X, n_features=self.n_features_in_, name="X")

    def _vote(self, query) -> VoteResult:
        return predict(self.store_, query, MblConfig(k=self.k))

    def predict(self, X) -> np.ndarray:
        X = self._check_fitted_X(X)
        return np.asarray([self._vote(q).phone for q in X], dtype=object)

    def predict_with_score(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Predicted labels plus the winning vote share per row."""
        X = self._check_fitted_X(X)
        votes = [self._vote(q) for q in X]
        labels = np.asarray([v.phone for v in votes], dtype=object)
        return labels, np.asarray([v.confidence for v in votes])

    def vote_share_matrix(self, X) -> np.ndarray:
        """Per-row kNN vote distribution over the inventory, rows sum to 1."""
        X = self._check_fitted_X(X)
        return np.stack([self._vote(q).vote_shares for q in X])

    def kneighbors(self, X, k: int | None = None) -> np.ndarray:
        """Indices of the nearest stored exemplars per row, nearest first."""
        X = self._check_fitted_X(X)
        k = self.k if k is None else k
        return np.stack([knn(self.store_, q, k) for q in X])
