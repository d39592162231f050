"""Deterministic random-stream plumbing.

Every run derives all of its randomness from one root seed.  Substreams
are split by purpose tag with the documented rule

    stream(root, tag) = numpy Generator seeded with
                        SeedSequence((root, crc32(tag.encode("utf-8"))))

so adding a new consumer never perturbs existing streams, and reruns with
the same root seed are bit-identical.

The gamma sampler here is the rejection sampler used by the Dirichlet
sampling oracle: squeeze-free Marsaglia-Tsang, valid for every shape > 0
by boosting shapes below one and rescaling with a uniform power.
"""

from __future__ import annotations

import zlib

import numpy as np


def split_stream(root_seed: int, tag: str) -> np.random.Generator:
    """Independent substream for (root seed, purpose tag)."""
    if not isinstance(root_seed, (int, np.integer)) or root_seed < 0:
        raise ValueError("root seed must be a non-negative integer")
    key = zlib.crc32(tag.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence((int(root_seed), key)))


_MAX_REJECTION_ROUNDS = 512


def gamma_rejection(rng: np.random.Generator, shape) -> np.ndarray:
    """Draws from Gamma(shape_i, 1) for an array of shapes, all > 0.

    Marsaglia-Tsang: d = k - 1/3, c = 1/sqrt(9 d); propose x ~ N(0, 1),
    v = (1 + c x)^3, accept when ln u < x^2/2 + d - d v + d ln v.  Shapes
    below one are boosted by one and the draw rescaled by u^(1/k).
    """
    k = np.asarray(shape, dtype=np.float64)
    if not np.all(k > 0.0):
        raise ValueError("gamma shapes must be strictly positive")
    flat = k.ravel()
    boost = flat < 1.0
    keff = np.where(boost, flat + 1.0, flat)
    d = keff - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty_like(flat)
    active = np.ones(flat.shape, dtype=bool)
    for _ in range(_MAX_REJECTION_ROUNDS):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        x = rng.standard_normal(idx.size)
        u = rng.random(idx.size)
        v = (1.0 + c[idx] * x) ** 3
        ok = v > 0.0
        lv = np.log(np.where(ok, v, 1.0))
        accept = ok & (np.log(u) < 0.5 * x * x + d[idx] - d[idx] * v + d[idx] * lv)
        hit = idx[accept]
        out[hit] = d[hit] * v[accept]
        active[hit] = False
    else:  # pragma: no cover - acceptance rate is ~96 percent
        raise RuntimeError("gamma rejection sampler failed to terminate")
    if boost.any():
        u2 = rng.random(int(boost.sum()))
        out[boost] *= u2 ** (1.0 / flat[boost])
    return out.reshape(k.shape)
