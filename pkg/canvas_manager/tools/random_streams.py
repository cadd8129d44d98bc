####################################################################################################
####################  CanvasX | Random Streams                   ###################################
####################  Developed by: DatSciX                      ###################################
####################################################################################################

"""
Deterministic random streams. Every consumer derives its own numpy Generator from the job
seed plus a tag tuple, so draws never depend on call order.
"""

import hashlib

import numpy as np


def derive_seed(seed: int, *keys: object) -> int:
    """Stable 64-bit sub-seed for (seed, keys). Never uses the per-process salted hash()."""
    tag = "\x1f".join([str(seed)] + [str(key) for key in keys])
    return int.from_bytes(hashlib.sha256(tag.encode("utf-8")).digest()[:8], "big")


def stream_for(seed: int, *keys: object) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *keys))
