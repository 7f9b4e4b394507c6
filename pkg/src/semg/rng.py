"""Named deterministic random streams.

Every stochastic subsystem pulls from its own generator, derived from the
master seed plus a path of labels.  String labels are folded to integers with
CRC-32 so the spawn tree is stable across runs and platforms.  Two streams
with different paths never share state; the same (seed, path) always yields
the identical sequence.

Stream catalogue (label paths used across the package):

    ("tx",), ("shadow",)                 environment synthesis, keyed by the
                                         environment's own seed
    ("train-env", i) / ("eval-env", i) /
    ("scenario-env", i)                  per-environment seeds derived from a
                                         run seed
    ("meas", i)                          measurement noise for mission i
    ("init",), ("train",)               network init and training draws
    ("sample", ...)                      reverse-diffusion sampling chains
    ("objective", env, rep)              common-random-number streams for
                                         policy objective evaluation; never
                                         keyed by the action
    ("sweep", env, rep)                  sampling noise shared across every
                                         energy-fraction grid point
    ("policy-init",), ("policy-iter", k),
    ("ddpg", ...), ("random-search",)    optimizer internals
"""

import zlib

import numpy as np

__all__ = ["seed_sequence", "stream", "child_seed"]


def _fold(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    if isinstance(part, (int, np.integer)):
        return int(part)
    raise TypeError(f"stream path parts must be str or int, got {type(part)!r}")


def seed_sequence(root_seed: int, *path) -> np.random.SeedSequence:
    """SeedSequence for the stream named by `path` under `root_seed`."""
    return np.random.SeedSequence([int(root_seed)] + [_fold(p) for p in path])


def stream(root_seed: int, *path) -> np.random.Generator:
    """Fresh Generator for the named stream.  Same arguments, same draws."""
    return np.random.default_rng(seed_sequence(root_seed, *path))


def child_seed(root_seed: int, *path) -> int:
    """A derived integer seed, e.g. to stamp into a config or checkpoint."""
    return int(seed_sequence(root_seed, *path).generate_state(1, np.uint64)[0])
