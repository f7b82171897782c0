"""Counter-based random streams keyed by (master seed, replication, label).

Every replication owns a family of Philox streams. The Philox key is
``(master_seed, replication)`` and the label picks a disjoint region of the
256-bit counter space (the top counter word), so that draws from one label
can never overlap or shift draws from another. Each uniform or normal
consumes exactly one 64-bit counter output.
"""

from __future__ import annotations

import zlib

import numpy as np
from numpy.random import Philox
from scipy.special import ndtri

_MASK64 = (1 << 64) - 1
_TWO_M53 = 2.0 ** -53


def label_id(label: str) -> int:
    """Stable 32-bit identifier of a stream label."""
    return zlib.crc32(label.encode("utf-8"))


def bit_generator(master_seed: int, replication: int, label: str) -> Philox:
    key = np.array([master_seed & _MASK64, replication & _MASK64], dtype=np.uint64)
    counter = np.array([0, 0, 0, label_id(label)], dtype=np.uint64)
    return Philox(key=key, counter=counter)


def _raw(master_seed, replications, label, count):
    reps = np.atleast_1d(np.asarray(replications, dtype=np.int64))
    out = np.empty((reps.size, count), dtype=np.uint64)
    for k, rep in enumerate(reps):
        out[k] = bit_generator(master_seed, int(rep), label).random_raw(count)
    return out


def uniforms(master_seed: int, replications, label: str, count: int) -> np.ndarray:
    """Uniforms on the open interval (0, 1), shape ``(len(replications), count)``.

    The top 53 bits of each raw output are centred in their cell, so 0 and 1
    are never produced and the inverse normal CDF stays finite.
    """
    raw = _raw(master_seed, replications, label, count)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53


def normals(master_seed: int, replications, label: str, count: int) -> np.ndarray:
    """Standard normals by inverse-CDF transform of :func:`uniforms`."""
    return ndtri(uniforms(master_seed, replications, label, count))
