"""Seed management: one root seed, named pseudo-random substreams."""

import hashlib
import logging
import random
from contextlib import contextmanager
from typing import Iterator, Optional

import numpy as np
import torch

logger = logging.getLogger(__name__)

DEFAULT_SEED = 42

_root_seed: int = DEFAULT_SEED
_saved_threads: Optional[int] = None


def set_seed(seed: int) -> None:
    """Set the root seed and reseed the global random, numpy and torch generators."""
    global _root_seed
    _root_seed = int(seed)
    random.seed(_root_seed)
    np.random.seed(_root_seed % 2**32)
    torch.manual_seed(_root_seed)
    logger.debug(f"Root seed set to {_root_seed}")


def get_seed() -> int:
    return _root_seed


def derive_seed(name: str, seed: Optional[int] = None) -> int:
    """Stable 63-bit seed for substream `name` (identical across processes)."""
    base = _root_seed if seed is None else int(seed)
    digest = hashlib.sha256(f"{base}/{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def substream(name: str, seed: Optional[int] = None) -> np.random.Generator:
    return np.random.default_rng(derive_seed(name, seed))


def torch_generator(name: str, seed: Optional[int] = None) -> torch.Generator:
    generator = torch.Generator()
    generator.manual_seed(derive_seed(name, seed))
    return generator


@contextmanager
def seeded_torch(name: str, seed: Optional[int] = None) -> Iterator[None]:
    """Run a block (e.g. parameter init) under the torch substream `name`."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(derive_seed(name, seed))
        yield


def configure_determinism(deterministic: bool = True) -> None:
    """Deterministic mode: deterministic kernels and serial intra-op reductions.

    Leaving deterministic mode restores the thread count in effect before it was entered.
    """
    global _saved_threads
    torch.use_deterministic_algorithms(deterministic, warn_only=True)
    if deterministic:
        if _saved_threads is None:
            _saved_threads = torch.get_num_threads()
        torch.set_num_threads(1)
    elif _saved_threads is not None:
        torch.set_num_threads(_saved_threads)
        _saved_threads = None
