"""Training regimes: Gaussian resynthesis and multi-session replication.

``gaussian_generate`` replaces the raw frames of each phone by draws from
a Gaussian centred on the phone's mean frame, with the standard error of
the mean as spread.  ``build_session`` assembles one learning session:
a sampled vocabulary, its frames replicated many times with additive
noise on half of them, and an unnoised test set of known plus new words.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import FrameDataset, round_half_up
from .errors import DataError
from .seeding import derive_seed


@dataclass(frozen=True)
class GaussianConfig:
    """Parameters of the Gaussian resynthesis regime."""

    n_per_phone: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.n_per_phone < 1:
            raise ValueError("n_per_phone must be >= 1")


@dataclass(frozen=True)
class SessionConfig:
    """Parameters of one replicated learning session."""

    n_sessions: int = 5
    vocab_size: int = 300
    replications: int = 1000
    noise_fraction: float = 0.5
    noise_sd_scale: float = 0.05
    test_words: int = 200
    replicate_order: str = "tiled"
    seed: int = 0

    def __post_init__(self):
        if self.n_sessions < 1:
            raise ValueError("n_sessions must be >= 1")
        if self.vocab_size < 1:
            raise ValueError("vocab_size must be >= 1")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not 0.0 <= self.noise_fraction <= 1.0:
            raise ValueError("noise_fraction must be in [0, 1]")
        if self.noise_sd_scale < 0:
            raise ValueError("noise_sd_scale must be >= 0")
        if self.test_words < 2 or self.test_words % 2:
            raise ValueError("test_words must be an even number >= 2")
        if self.replicate_order not in ("tiled", "shuffled"):
            raise ValueError("replicate_order must be 'tiled' or 'shuffled'")


@dataclass(frozen=True)
class Session:
    """One constructed learning session."""

    index: int
    train: FrameDataset = field(repr=False)
    test: FrameDataset = field(repr=False)
    vocabulary: frozenset[str]
    known_words: frozenset[str]
    new_words: frozenset[str]


def _phone_moments(train: FrameDataset, j: int) -> tuple[np.ndarray, np.ndarray]:
    rows = train.cues[train.phone_indices == j]
    if rows.shape[0] < 2:
        raise DataError(
            f"phone {train.inventory[j]!r} has {rows.shape[0]} frames; "
            "need at least 2 to estimate a Gaussian")
    mu = rows.mean(axis=0)
    se = rows.std(axis=0, ddof=1) / np.sqrt(rows.shape[0])
    return mu, se


def gaussian_generate(train: FrameDataset,
                      config: GaussianConfig | None = None) -> FrameDataset:
    """Draw ``n_per_phone`` synthetic frames per phone and shuffle them.

    For each inventory phone the generator fits a diagonal Gaussian with
    the phone's mean frame as centre and the standard error of the mean
    (sample SD with ddof=1 over sqrt(n)) as per-feature spread, then draws
    frames independently.  The pooled draws are shuffled with the same
    seeded generator, so the label distribution is uniform by
    construction and the output is a pure function of (train, config).
    """
    if config is None:
        config = GaussianConfig()
    rng = np.random.default_rng(config.seed)
    inventory = train.inventory
    blocks = []
    for j in range(len(inventory)):
        mu, se = _phone_moments(train, j)
        blocks.append(rng.normal(mu, se, size=(config.n_per_phone, len(mu))))
    cues = np.concatenate(blocks, axis=0)
    phone_indices = np.repeat(np.arange(len(inventory)), config.n_per_phone)
    perm = rng.permutation(cues.shape[0])
    cues = cues[perm]
    phone_indices = phone_indices[perm]
    word_ids = [f"{inventory[j]}_g{i}"
                for i, j in enumerate(phone_indices)]
    return FrameDataset(inventory, word_ids,
                        np.arange(cues.shape[0], dtype=np.int64),
                        phone_indices, cues)


def gaussian_scaling_series(train: FrameDataset, sizes,
                            seed: int = 0) -> list[FrameDataset]:
    """One Gaussian dataset per requested per-phone sample size.

    Each dataset gets its own seed derived from ``seed`` and the size, so
    the series is reproducible element by element.
    """
    out = []
    for size in sizes:
        cfg = GaussianConfig(n_per_phone=int(size),
                             seed=derive_seed(seed, "gaussian", int(size)))
        out.append(gaussian_generate(train, cfg))
    return out


def _word_runs(word_ids: np.ndarray) -> list[np.ndarray]:
    """Index runs of consecutive equal word ids, in stream order."""
    runs = []
    start = 0
    for i in range(1, len(word_ids) + 1):
        if i == len(word_ids) or word_ids[i] != word_ids[start]:
            runs.append(np.arange(start, i, dtype=np.intp))
            start = i
    return runs


def build_session(corpus: FrameDataset, config: SessionConfig,
                  session_index: int) -> Session:
    """Assemble the training stream and test set of one session.

    Word samples, replication order and noise draws all come from a single
    generator seeded by (config.seed, session index), so a session is a
    pure function of its inputs.  Test frames are taken unmodified from
    the corpus: half from sampled vocabulary words (known), half from
    words outside the vocabulary (new).
    """
    if not 0 <= session_index < config.n_sessions:
        raise ValueError(
            f"session_index must be in [0, {config.n_sessions}), "
            f"got {session_index}")
    rng = np.random.default_rng(derive_seed(config.seed, "session",
                                            session_index))
    words = corpus.distinct_words()
    half_test = config.test_words // 2
    if len(words) < config.vocab_size + half_test:
        raise ValueError(
            f"corpus has {len(words)} distinct words; need at least "
            f"{config.vocab_size + half_test} for vocabulary plus new words")

    words_arr = np.asarray(words, dtype=object)
    vocab = rng.choice(words_arr, size=config.vocab_size, replace=False)
    vocab_set = set(vocab.tolist())
    known = rng.choice(vocab, size=half_test, replace=False)
    outside = np.asarray([w for w in words if w not in vocab_set],
                         dtype=object)
    new = rng.choice(outside, size=half_test, replace=False)

    base_idx = np.flatnonzero(
        np.asarray([w in vocab_set for w in corpus.word_ids]))
    base = corpus.subset(base_idx)
    if len(base) < 2:
        raise DataError("vocabulary sample yields fewer than 2 frames")
    feature_sd = base.cues.std(axis=0, ddof=1)

    if config.replicate_order == "tiled":
        order = np.tile(np.arange(len(base), dtype=np.intp),
                        config.replications)
    else:
        runs = _word_runs(base.word_ids)
        chunks = []
        for _ in range(config.replications):
            for r in rng.permutation(len(runs)):
                chunks.append(runs[r])
        order = np.concatenate(chunks)

    cues = base.cues[order].copy()
    n_total = cues.shape[0]
    n_noised = round_half_up(config.noise_fraction * n_total)
    if n_noised:
        chosen = rng.choice(n_total, size=n_noised, replace=False)
        noise = rng.normal(0.0, 1.0, size=(n_noised, cues.shape[1]))
        cues[chosen] += noise * (config.noise_sd_scale * feature_sd)

    train = FrameDataset(base.inventory, base.word_ids[order],
                         np.arange(n_total, dtype=np.int64),
                         base.phone_indices[order], cues)

    test_words = set(known.tolist()) | set(new.tolist())
    test_idx = np.flatnonzero(
        np.asarray([w in test_words for w in corpus.word_ids]))
    test = corpus.subset(test_idx)

    return Session(index=session_index, train=train, test=test,
                   vocabulary=frozenset(vocab_set),
                   known_words=frozenset(known.tolist()),
                   new_words=frozenset(new.tolist()))
