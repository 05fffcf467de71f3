"""Corpus handling: phone inventory, alignment and feature tables.

The native data model is a flat stream of labeled frames.  Each frame
carries the word token it came from, a stream-wide trial index, a phone
label from the active inventory, and a 39-dimensional cue vector
(13 cepstra + 13 deltas + 13 delta-deltas).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InventoryError, OrderingError, ParseError

N_CUES = 39

SILENCE_LABEL = "silence"

# The 40-phone ARPAbet inventory: silence first, then the 39 phones in
# alphabetical order.  This fixed order defines outcome indices everywhere.
ARPABET_PHONES = (
    SILENCE_LABEL,
    "aa", "ae", "ah", "ao", "aw", "ay", "b", "ch", "d", "dh", "eh", "er",
    "ey", "f", "g", "hh", "ih", "iy", "jh", "k", "l", "m", "n", "ng", "ow",
    "oy", "p", "r", "s", "sh", "t", "th", "uh", "uw", "v", "w", "y", "z",
    "zh",
)


class PhoneInventory:
    """An ordered set of distinct phone labels.

    The position of a label is its outcome index; every learner, weight
    matrix and confusion matrix in the package shares this indexing.
    Labels are case-insensitive and normalized to lower case.
    """

    def __init__(self, labels):
        normalized = tuple(str(lab).strip().lower() for lab in labels)
        if not normalized:
            raise InventoryError("inventory must contain at least one label")
        if any(not lab for lab in normalized):
            raise InventoryError("inventory labels must be non-empty")
        if len(set(normalized)) != len(normalized):
            raise InventoryError("inventory labels must be distinct")
        self._labels = normalized
        self._index = {lab: i for i, lab in enumerate(normalized)}

    @property
    def labels(self) -> tuple[str, ...]:
        return self._labels

    def index(self, label: str) -> int:
        key = str(label).strip().lower()
        try:
            return self._index[key]
        except KeyError:
            raise InventoryError(f"unknown phone label: {label!r}") from None

    def __len__(self) -> int:
        return len(self._labels)

    def __iter__(self):
        return iter(self._labels)

    def __contains__(self, label) -> bool:
        return str(label).strip().lower() in self._index

    def __getitem__(self, i: int) -> str:
        return self._labels[i]

    def __eq__(self, other) -> bool:
        return isinstance(other, PhoneInventory) and other._labels == self._labels

    def __hash__(self):
        return hash(self._labels)

    def __repr__(self) -> str:
        return f"PhoneInventory({len(self)} labels)"


def default_inventory() -> PhoneInventory:
    """The standard 40-phone inventory (silence + 39 ARPAbet phones)."""
    return PhoneInventory(ARPABET_PHONES)


@dataclass(frozen=True)
class PhoneSegment:
    """One aligned phone interval of a word token, in seconds."""

    word_id: str
    phone: str
    start: float
    end: float

    def __post_init__(self):
        if self.start < 0:
            raise ValueError(f"segment start must be >= 0, got {self.start}")
        if not self.end > self.start:
            raise ValueError(
                f"segment end must exceed start, got [{self.start}, {self.end}]")

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class LabeledFrame:
    """One training/test event: a cue vector with its phone label."""

    word_id: str
    trial_index: int
    phone: str
    cues: np.ndarray = field(repr=False)

    def __post_init__(self):
        cues = np.asarray(self.cues, dtype=np.float64)
        if cues.ndim != 1 or cues.shape[0] != N_CUES:
            raise ValueError(
                f"cue vector must have {N_CUES} dimensions, got {cues.shape}")
        object.__setattr__(self, "cues", cues)


class FrameDataset:
    """An ordered, immutable collection of labeled frames.

    Stored columnar: ``word_ids`` (object array), ``trial_index`` (int64,
    strictly increasing), ``phone_indices`` (int64 into the inventory) and
    ``cues`` (float64, shape ``(n, 39)``).
    """

    def __init__(self, inventory: PhoneInventory, word_ids, trial_index,
                 phone_indices, cues):
        self.inventory = inventory
        self.word_ids = np.asarray(word_ids, dtype=object)
        self.trial_index = np.asarray(trial_index, dtype=np.int64)
        self.phone_indices = np.asarray(phone_indices, dtype=np.int64)
        self.cues = np.asarray(cues, dtype=np.float64)

        n = len(self.word_ids)
        if not (len(self.trial_index) == len(self.phone_indices)
                == self.cues.shape[0] == n):
            raise ValueError("dataset columns have inconsistent lengths")
        if self.cues.ndim != 2 or self.cues.shape[1] != N_CUES:
            raise ValueError(
                f"cues must have shape (n, {N_CUES}), got {self.cues.shape}")
        if n > 1 and not np.all(np.diff(self.trial_index) > 0):
            raise OrderingError("trial_index must be strictly increasing")
        if n and (self.phone_indices.min() < 0
                  or self.phone_indices.max() >= len(inventory)):
            raise InventoryError("phone index outside inventory range")
        for arr in (self.word_ids, self.trial_index, self.phone_indices,
                    self.cues):
            arr.setflags(write=False)

    @classmethod
    def from_frames(cls, inventory: PhoneInventory, frames) -> "FrameDataset":
        frames = list(frames)
        word_ids = [f.word_id for f in frames]
        trial_index = [f.trial_index for f in frames]
        phone_indices = [inventory.index(f.phone) for f in frames]
        cues = (np.stack([f.cues for f in frames])
                if frames else np.empty((0, N_CUES)))
        return cls(inventory, word_ids, trial_index, phone_indices, cues)

    def __len__(self) -> int:
        return len(self.word_ids)

    def __getitem__(self, i: int) -> LabeledFrame:
        return LabeledFrame(
            word_id=self.word_ids[i],
            trial_index=int(self.trial_index[i]),
            phone=self.inventory[self.phone_indices[i]],
            cues=self.cues[i].copy(),
        )

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def phone_labels(self) -> np.ndarray:
        """Phone label of every frame, as an object array."""
        labels = np.asarray(self.inventory.labels, dtype=object)
        return labels[self.phone_indices]

    def distinct_words(self) -> list[str]:
        """Distinct word ids in order of first appearance."""
        seen: dict[str, None] = {}
        for w in self.word_ids:
            if w not in seen:
                seen[w] = None
        return list(seen)

    def subset(self, indices) -> "FrameDataset":
        """Rows at ``indices`` (kept in the given order, original trial ids)."""
        idx = np.asarray(indices, dtype=np.intp)
        return FrameDataset(self.inventory, self.word_ids[idx],
                            self.trial_index[idx], self.phone_indices[idx],
                            self.cues[idx])

    def renumbered(self) -> "FrameDataset":
        """Same frames with trial_index rewritten to 0..n-1."""
        return FrameDataset(self.inventory, self.word_ids,
                            np.arange(len(self), dtype=np.int64),
                            self.phone_indices, self.cues)


def load_alignments(path, inventory: PhoneInventory | None = None) -> list[PhoneSegment]:
    """Read a phone alignment table.

    The format is tab-separated with four columns per row
    (``word_id``, ``phone``, ``start``, ``end``); lines starting with ``#``
    and blank lines are ignored.  Within one word the segments must be
    ordered by start time and non-overlapping.
    """
    if inventory is None:
        inventory = default_inventory()
    segments: list[PhoneSegment] = []
    last_end: dict[str, float] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 4:
                raise ParseError(
                    f"expected 4 tab-separated fields, got {len(fields)}",
                    line=lineno)
            word_id, phone, start_s, end_s = fields
            word_id = word_id.strip()
            if not word_id:
                raise ParseError("empty word_id", line=lineno)
            try:
                start = float(start_s)
                end = float(end_s)
            except ValueError:
                raise ParseError(
                    f"could not parse start/end times: {start_s!r}, {end_s!r}",
                    line=lineno) from None
            if start < 0:
                raise ParseError(f"negative start time {start}", line=lineno)
            if not end > start:
                raise ParseError(
                    f"end must exceed start, got [{start}, {end}]", line=lineno)
            phone = phone.strip().lower()
            if phone not in inventory:
                raise InventoryError(
                    f"line {lineno}: unknown phone label: {phone!r}")
            prev_end = last_end.get(word_id)
            if prev_end is not None and start < prev_end:
                raise ParseError(
                    f"segment of word {word_id!r} starts at {start} before "
                    f"the previous segment ends at {prev_end}", line=lineno)
            last_end[word_id] = end
            segments.append(PhoneSegment(word_id, phone, start, end))
    return segments


_FEATURE_COLUMNS = ("word_id", "trial_index", "phone") + tuple(
    f"mfcc_{i:02d}" for i in range(N_CUES))


def load_feature_table(path, inventory: PhoneInventory | None = None) -> FrameDataset:
    """Read a labeled-frame feature table (CSV).

    Columns: ``word_id, trial_index, phone, mfcc_00..mfcc_38``.  Rows must
    be ordered by strictly increasing ``trial_index``.
    """
    if inventory is None:
        inventory = default_inventory()
    word_ids: list[str] = []
    trial_index: list[int] = []
    phone_indices: list[int] = []
    rows: list[list[float]] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("feature table is empty (missing header)",
                             line=1) from None
        if tuple(header) != _FEATURE_COLUMNS:
            raise ParseError(
                "unexpected feature table header; expected "
                f"{','.join(_FEATURE_COLUMNS[:4])},...", line=1)
        prev_trial = None
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(_FEATURE_COLUMNS):
                raise ParseError(
                    f"expected {len(_FEATURE_COLUMNS)} fields, got {len(row)}",
                    line=lineno)
            try:
                trial = int(row[1])
            except ValueError:
                raise ParseError(f"bad trial_index {row[1]!r}",
                                 line=lineno) from None
            if prev_trial is not None and trial <= prev_trial:
                raise OrderingError(
                    f"trial_index {trial} does not increase past {prev_trial}",
                    line=lineno)
            prev_trial = trial
            phone = row[2].strip().lower()
            if phone not in inventory:
                raise InventoryError(
                    f"line {lineno}: unknown phone label: {row[2]!r}")
            try:
                cues = [float(v) for v in row[3:]]
            except ValueError:
                raise ParseError("bad cue value", line=lineno) from None
            word_ids.append(row[0])
            trial_index.append(trial)
            phone_indices.append(inventory.index(phone))
            rows.append(cues)
    cues_arr = np.asarray(rows, dtype=np.float64) if rows else np.empty((0, N_CUES))
    return FrameDataset(inventory, word_ids, trial_index, phone_indices, cues_arr)


def write_feature_table(dataset: FrameDataset, path) -> None:
    """Write ``dataset`` as a feature-table CSV.

    Floats are written with 17 significant digits so that a round trip
    through the file reproduces the exact same float64 values.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(_FEATURE_COLUMNS) + "\n")
        for i in range(len(dataset)):
            cues = ",".join("%.17g" % v for v in dataset.cues[i])
            fh.write(f"{dataset.word_ids[i]},{int(dataset.trial_index[i])},"
                     f"{dataset.inventory[dataset.phone_indices[i]]},{cues}\n")


def round_half_up(x: float) -> int:
    """Round to the nearest integer with halves going up."""
    return int(math.floor(x + 0.5))


def split_sizes(n: int, test_fraction: float) -> tuple[int, int]:
    """(train, test) sizes for an ``n``-frame dataset.

    The test size is ``test_fraction * n`` rounded half-up.
    """
    n_test = round_half_up(test_fraction * n)
    return n - n_test, n_test


def split_train_test(dataset: FrameDataset, test_fraction: float,
                     seed: int) -> tuple[FrameDataset, FrameDataset]:
    """Random train/test partition of a frame dataset.

    Frames are sampled into the test set uniformly without replacement;
    both halves keep the original stream order and original trial indices.
    """
    if len(dataset) == 0:
        raise ValueError("cannot split an empty dataset")
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(
            f"test_fraction must be in (0, 1), got {test_fraction}")
    _, n_test = split_sizes(len(dataset), test_fraction)
    rng = np.random.default_rng(seed)
    test_idx = np.sort(rng.choice(len(dataset), size=n_test, replace=False))
    mask = np.zeros(len(dataset), dtype=bool)
    mask[test_idx] = True
    train = dataset.subset(np.flatnonzero(~mask))
    test = dataset.subset(test_idx)
    return train, test


def sample_vocabulary(dataset: FrameDataset, n_words: int, seed: int) -> set[str]:
    """Sample ``n_words`` distinct word ids uniformly without replacement."""
    words = dataset.distinct_words()
    if n_words < 1:
        raise ValueError(f"n_words must be >= 1, got {n_words}")
    if n_words > len(words):
        raise ValueError(
            f"requested {n_words} words but the dataset has only "
            f"{len(words)} distinct words")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(np.asarray(words, dtype=object), size=n_words,
                        replace=False)
    return set(chosen.tolist())


def label_distribution(dataset: FrameDataset) -> np.ndarray:
    """Relative frequency of each inventory phone among the frames.

    Returns a vector indexed like the inventory; entries sum to 1.
    """
    if len(dataset) == 0:
        raise ValueError("label distribution of an empty dataset is undefined")
    counts = np.bincount(dataset.phone_indices, minlength=len(dataset.inventory))
    return counts / counts.sum()
