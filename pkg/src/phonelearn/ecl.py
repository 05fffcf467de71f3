"""Error-correction learning over cue/outcome streams.

Weights live in a cue-by-outcome matrix W (zero initialized).  For one
event with cue vector c and one-hot outcome o, the Widrow-Hoff rule is

    a = c @ W                       (activations, one per outcome)
    e = o - a                       (prediction error)
    W <- W + lr * outer(c, e)

The temporal-difference variant replaces the target activation with
``a - discount * a_next`` where ``a_next`` uses the cue vector of the
following event in the same word.  With ``discount = 0`` or at a word
boundary the update falls back to the exact Widrow-Hoff arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from ._validation import as_float_matrix, as_float_vector, check_same_length
from .corpus import PhoneInventory, default_inventory
from .errors import NumericOverflowError

RULES = ("wh", "td")
DIVERSITY_MODES = ("per_outcome", "shared_scalar")
CHAIN_MODES = ("word", "stream")


@dataclass(frozen=True)
class EclConfig:
    """Hyper-parameters of the error-correction learner."""

    learning_rate: float = 0.0001
    discount: float = 0.5
    diversity_mode: str = "per_outcome"
    chain: str = "word"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not 0.0 <= self.discount <= 1.0:
            raise ValueError("discount must be in [0, 1]")
        if self.diversity_mode not in DIVERSITY_MODES:
            raise ValueError(
                f"diversity_mode must be one of {DIVERSITY_MODES}")
        if self.chain not in CHAIN_MODES:
            raise ValueError(f"chain must be one of {CHAIN_MODES}")


@dataclass(frozen=True)
class TrialEvent:
    """One learning event: a cue vector paired with its outcome phone."""

    cues: np.ndarray = field(repr=False)
    phone: str
    word_id: str | None = None

    def __post_init__(self):
        cues = as_float_vector(self.cues, name="cues")
        object.__setattr__(self, "cues", cues)


class WeightMatrix:
    """A cue-by-outcome weight matrix bound to a phone inventory.

    ``values[i, j]`` is the weight from cue dimension i to outcome j;
    columns follow inventory order.
    """

    def __init__(self, values, inventory: PhoneInventory):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("weight values must be 2-dimensional")
        if values.shape[1] != len(inventory):
            raise ValueError(
                f"weight matrix has {values.shape[1]} outcome columns but "
                f"the inventory has {len(inventory)} phones")
        if not np.isfinite(values).all():
            raise NumericOverflowError("weight matrix contains non-finite values")
        self.values = values
        self.inventory = inventory

    @classmethod
    def zeros(cls, n_cues: int, inventory: PhoneInventory) -> "WeightMatrix":
        return cls(np.zeros((n_cues, len(inventory))), inventory)

    @property
    def n_cues(self) -> int:
        return self.values.shape[0]

    def copy(self) -> "WeightMatrix":
        return WeightMatrix(self.values.copy(), self.inventory)

    def save_csv(self, path) -> None:
        """Write as CSV: header = phone labels, one row per cue dimension.

        Values use 17 significant digits, so loading reproduces the exact
        float64 matrix.
        """
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(self.inventory.labels) + "\n")
            for row in self.values:
                fh.write(",".join("%.17g" % v for v in row) + "\n")

    @classmethod
    def load_csv(cls, path) -> "WeightMatrix":
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n")
            if not header:
                raise ValueError(f"{path}: empty weight file")
            inventory = PhoneInventory(header.split(","))
            values = np.loadtxt(fh, delimiter=",", ndmin=2)
        return cls(values, inventory)


def activations(weights: WeightMatrix, cues) -> np.ndarray:
    """Outcome activations ``a_j = sum_i c_i W_ij`` for one cue vector."""
    cues = as_float_vector(cues, length=weights.n_cues, name="cues")
    return cues @ weights.values


def diversity(weights: WeightMatrix, cues, mode: str = "per_outcome") -> np.ndarray:
    """Support normalizer per outcome.

    ``per_outcome``: d_j = sum_i |c_i W_ij|, the absolute evidence mass
    feeding outcome j.  ``shared_scalar``: every entry is sum_k |a_k|,
    which rescales all outcomes identically.
    """
    cues = as_float_vector(cues, length=weights.n_cues, name="cues")
    if mode == "per_outcome":
        return np.abs(cues) @ np.abs(weights.values)
    if mode == "shared_scalar":
        total = np.abs(cues @ weights.values).sum()
        return np.full(len(weights.inventory), total)
    raise ValueError(f"unknown diversity mode {mode!r}")


def _scores(act: np.ndarray, div: np.ndarray) -> np.ndarray:
    out = np.zeros_like(act)
    np.divide(act, div, out=out, where=div > 0)
    return out


def predict(weights: WeightMatrix, cues,
            config: EclConfig | str | None = None) -> tuple[str, np.ndarray]:
    """Predicted phone and per-outcome scores for one cue vector.

    Scores are activations divided by diversity (0 where diversity is 0);
    the winner is the argmax, ties resolved to the lowest inventory index.
    ``config`` may be an :class:`EclConfig` or a bare diversity mode name.
    """
    if config is None:
        mode = "per_outcome"
    elif isinstance(config, str):
        mode = config
    else:
        mode = config.diversity_mode
    act = activations(weights, cues)
    div = diversity(weights, cues, mode)
    scores = _scores(act, div)
    return weights.inventory[int(np.argmax(scores))], scores


def wh_update(weights: WeightMatrix, event: TrialEvent,
              learning_rate: float = 0.0001) -> WeightMatrix:
    """One Widrow-Hoff step; returns a new matrix, the input is untouched."""
    values = weights.values.copy()
    cues = as_float_vector(event.cues, length=weights.n_cues, name="cues")
    j = weights.inventory.index(event.phone)
    _step(values, cues, j, None, learning_rate, 0.0, trial_index=None)
    return WeightMatrix(values, weights.inventory)


def td_update(weights: WeightMatrix, event: TrialEvent, next_cues,
              learning_rate: float = 0.0001,
              discount: float = 0.5) -> WeightMatrix:
    """One temporal-difference step.

    ``next_cues`` is the cue vector of the following event within the same
    word, or None at a word boundary (where the future term vanishes and
    the step reduces to Widrow-Hoff).
    """
    values = weights.values.copy()
    cues = as_float_vector(event.cues, length=weights.n_cues, name="cues")
    if next_cues is not None:
        next_cues = as_float_vector(next_cues, length=weights.n_cues,
                                    name="next_cues")
    j = weights.inventory.index(event.phone)
    _step(values, cues, j, next_cues, learning_rate, discount, trial_index=None)
    return WeightMatrix(values, weights.inventory)


def _step(values: np.ndarray, cues: np.ndarray, outcome: int,
          next_cues: np.ndarray | None, lr: float, discount: float,
          trial_index: int | None) -> None:
    """In-place update for one event.  Shared by both rules.

    With ``discount == 0`` or without a successor the branch below is
    skipped, so a TD learner at discount 0 executes bit-for-bit the same
    arithmetic as Widrow-Hoff.
    """
    act = cues @ values
    if discount != 0.0 and next_cues is not None:
        act = act - discount * (next_cues @ values)
    err = -act
    err[outcome] += 1.0
    if not np.isfinite(err).all():
        raise NumericOverflowError(
            "activations diverged to non-finite values",
            trial_index=trial_index)
    values += np.outer(lr * cues, err)


def _next_indices(word_ids, n: int, chain: str) -> np.ndarray:
    """Successor index per event (-1 where the future term is absent)."""
    nxt = np.arange(1, n + 1, dtype=np.int64)
    nxt[-1] = -1
    if chain == "word" and word_ids is not None:
        ids = np.asarray(word_ids, dtype=object)
        boundary = np.flatnonzero(ids[1:] != ids[:-1])
        nxt[boundary] = -1
    return nxt


def _train_values(values: np.ndarray, X: np.ndarray, outcomes: np.ndarray,
                  next_idx: np.ndarray, lr: float, discount: float,
                  trial_ids: np.ndarray | None) -> np.ndarray:
    for t in range(X.shape[0]):
        tid = int(trial_ids[t]) if trial_ids is not None else t
        ni = next_idx[t]
        _step(values, X[t], int(outcomes[t]),
              X[ni] if ni >= 0 else None, lr, discount, trial_index=tid)
    if not np.isfinite(values).all():
        tid = int(trial_ids[-1]) if trial_ids is not None else X.shape[0] - 1
        raise NumericOverflowError("weights diverged to non-finite values",
                                   trial_index=tid)
    return values


def train_stream(rule: str, events, config: EclConfig | None = None,
                 initial: WeightMatrix | None = None,
                 inventory: PhoneInventory | None = None) -> WeightMatrix:
    """Train over an ordered event stream and return the final weights.

    Events are visited exactly once, in order.  For the TD rule the
    successor of event t is event t+1 when both share a word id (or when
    ``config.chain == "stream"``); the last event never has a successor.
    """
    if rule not in RULES:
        raise ValueError(f"rule must be one of {RULES}, got {rule!r}")
    if config is None:
        config = EclConfig()
    events = list(events)
    if not events:
        raise ValueError("cannot train on an empty event stream")
    if initial is not None:
        inventory = initial.inventory
    elif inventory is None:
        inventory = default_inventory()

    X = np.stack([e.cues for e in events]).astype(np.float64)
    outcomes = np.asarray([inventory.index(e.phone) for e in events])
    word_ids = [e.word_id for e in events]
    values = (initial.values.copy() if initial is not None
              else np.zeros((X.shape[1], len(inventory))))
    if values.shape[0] != X.shape[1]:
        raise ValueError(
            f"initial weights expect {values.shape[0]} cues, events have "
            f"{X.shape[1]}")
    discount = config.discount if rule == "td" else 0.0
    nxt = _next_indices(word_ids, len(events), config.chain)
    values = _train_values(values, X, outcomes, nxt, config.learning_rate,
                           discount, None)
    return WeightMatrix(values, inventory)


class ErrorCorrectionClassifier(ClassifierMixin, BaseEstimator):
    """Scikit-learn style wrapper around the error-correction learner.

    Parameters
    ----------
    rule : {"wh", "td"}
        Update rule: plain Widrow-Hoff or its temporal-difference variant.
    learning_rate : float
    discount : float
        Future-activation discount; only used by the TD rule.
    diversity_mode : {"per_outcome", "shared_scalar"}
        Normalizer used when turning activations into decision scores.
    chain : {"word", "stream"}
        Whether TD successor chaining stops at word boundaries or runs
        through the whole stream.
    inventory : PhoneInventory or iterable of str, optional
        Outcome set.  Defaults to the sorted distinct labels of ``y``.
    """

    def __init__(self, rule: str = "wh", learning_rate: float = 0.0001,
                 discount: float = 0.5, diversity_mode: str = "per_outcome",
                 chain: str = "word", inventory=None):
        self.rule = rule
        self.learning_rate = learning_rate
        self.discount = discount
        self.diversity_mode = diversity_mode
        self.chain = chain
        self.inventory = inventory

    def _config(self) -> EclConfig:
        if self.rule not in RULES:
            raise ValueError(
                f"rule must be one of {RULES}, got {self.rule!r}")
        return EclConfig(learning_rate=self.learning_rate,
                         discount=self.discount,
                         diversity_mode=self.diversity_mode, chain=self.chain)

    def _resolve_inventory(self, y) -> PhoneInventory:
        if self.inventory is None:
            return PhoneInventory(sorted({str(lab) for lab in y}))
        if isinstance(self.inventory, PhoneInventory):
            return self.inventory
        return PhoneInventory(self.inventory)

    def fit(self, X, y, word_ids=None):
        """Train on an ordered stream of (cue vector, phone label) events."""
        config = self._config()
        X = as_float_matrix(X, name="X")
        y = np.asarray(y, dtype=object)
        check_same_length("X", X, "y", y)
        if word_ids is not None:
            check_same_length("X", X, "word_ids", word_ids)
        inventory = self._resolve_inventory(y)
        outcomes = np.asarray([inventory.index(lab) for lab in y])

        discount = self.discount if self.rule == "td" else 0.0
        nxt = _next_indices(word_ids, X.shape[0], config.chain)
        values = _train_values(np.zeros((X.shape[1], len(inventory))), X,
                               outcomes, nxt, self.learning_rate, discount,
                               None)
        self.inventory_ = inventory
        self.classes_ = np.asarray(inventory.labels, dtype=object)
        self.weights_ = WeightMatrix(values, inventory)
        self.n_features_in_ = X.shape[1]
        return self

    def _check_fitted_X(self, X) -> np.ndarray:
        if not hasattr(self, "weights_"):
            raise ValueError("this classifier has not been fitted yet")
        return as_float_matrix(X, n_features=self.n_features_in_, name="X")

    def activation_matrix(self, X) -> np.ndarray:
        """Outcome activations for every row of X, shape (n, n_outcomes)."""
        X = self._check_fitted_X(X)
        return X @ self.weights_.values

    def diversity_matrix(self, X) -> np.ndarray:
        X = self._check_fitted_X(X)
        if self.diversity_mode == "per_outcome":
            return np.abs(X) @ np.abs(self.weights_.values)
        total = np.abs(X @ self.weights_.values).sum(axis=1)
        return np.repeat(total[:, None], len(self.classes_), axis=1)

    def score_matrix(self, X) -> np.ndarray:
        """Diversity-normalized decision scores, shape (n, n_outcomes)."""
        return _scores(self.activation_matrix(X), self.diversity_matrix(X))

    def predict(self, X) -> np.ndarray:
        scores = self.score_matrix(X)
        return self.classes_[np.argmax(scores, axis=1)]

    def predict_with_score(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Predicted labels plus the winning score per row."""
        scores = self.score_matrix(X)
        winners = np.argmax(scores, axis=1)
        return self.classes_[winners], scores[np.arange(len(winners)), winners]
