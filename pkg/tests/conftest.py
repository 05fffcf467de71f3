"""Shared fixtures: synthetic frame corpora with controllable geometry."""

import numpy as np
import pytest

from phonelearn import FrameDataset, default_inventory


def build_corpus(phones, words_per_phone=3, frames_per_word=4, seed=0,
                 spread=0.3, separation=8.0, inventory=None):
    """One well-separated Gaussian blob of cue vectors per phone label.

    Words are consecutive runs of ``frames_per_word`` frames sharing a
    word id; trial indices run 0..n-1 in stream order.
    """
    rng = np.random.default_rng(seed)
    if inventory is None:
        inventory = default_inventory()
    centers = {p: rng.normal(0.0, 1.0, 39) * separation for p in phones}
    word_ids, trials, pidx, cues = [], [], [], []
    t = 0
    w = 0
    for p in phones:
        for _ in range(words_per_phone):
            wid = f"word{w:04d}"
            w += 1
            for _ in range(frames_per_word):
                word_ids.append(wid)
                trials.append(t)
                t += 1
                pidx.append(inventory.index(p))
                cues.append(centers[p] + rng.normal(0.0, spread, 39))
    return FrameDataset(inventory, np.asarray(word_ids, dtype=object),
                        np.asarray(trials, dtype=np.int64),
                        np.asarray(pidx, dtype=np.int64),
                        np.asarray(cues, dtype=np.float64))


@pytest.fixture
def corpus_factory():
    return build_corpus


@pytest.fixture(scope="session")
def full_corpus():
    """All 40 inventory phones, 3 words each, 4 frames per word."""
    return build_corpus(default_inventory().labels)
