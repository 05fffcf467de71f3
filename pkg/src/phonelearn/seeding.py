"""Deterministic seed derivation.

All stochastic stages draw from ``numpy.random.default_rng`` seeded either
with a caller-supplied seed or with a seed derived from a master seed and a
stage name.  Derivation goes through SHA-256 rather than Python's builtin
``hash`` (which is salted per process) so results are reproducible across
runs and machines.
"""

from __future__ import annotations

import hashlib


def derive_seed(master: int, *parts: object) -> int:
    """Derive a child seed from ``master`` and a sequence of labels.

    Parameters
    ----------
    master : int
        The run-level seed.
    *parts : object
        Stage labels (strings, indices, sizes).  Each is folded into the
        digest via its ``str`` form.

    Returns
    -------
    int
        A non-negative 63-bit integer suitable for ``default_rng``.
    """
    h = hashlib.sha256()
    h.update(str(int(master)).encode("utf-8"))
    for part in parts:
        h.update(b"\x1f")
        h.update(str(part).encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "big") >> 1
