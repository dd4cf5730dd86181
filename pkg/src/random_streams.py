"""Reproducible random substreams and the block-parallel Monte Carlo runner.

Samples are produced in blocks of ``settings.block_size``. Block ``b`` of the
stream named ``name`` under ``seed`` is drawn from a counter-based Philox
generator keyed by ``SeedSequence(seed, spawn_key=(stream_id, b))``, so every
sample depends only on (seed, stream, sample index). Workers pick up whole
blocks and results are concatenated in block order, which keeps every
downstream reduction in a fixed order whatever the number of workers.
"""
import logging
import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence, Tuple, TypeVar

import numpy as np

from src.config import settings

logger = logging.getLogger(__name__)

T = TypeVar("T")

STREAM_NAMES = (
    "collect",
    "validate",
    "identity",
    "cov",
    "uif_oracle",
    "expectation",
    "inner",
)


def stream_id(name: str) -> int:
    """Stable integer identifier of a named substream."""
    return zlib.crc32(name.encode("utf-8"))


class RandomStream:
    """Deterministic uniform source for one block of one named substream."""

    def __init__(self, seed: int, name: str, block: int = 0):
        self.seed = int(seed)
        self.name = name
        self.block = int(block)
        sequence = np.random.SeedSequence(
            entropy=self.seed, spawn_key=(stream_id(name), self.block)
        )
        self._generator = np.random.Generator(np.random.Philox(sequence))

    def uniform(self, size=None) -> np.ndarray | float:
        """Uniform draws on the open interval (0, 1)."""
        # random() is on [0, 1); lift exact zeros into the open interval
        return np.maximum(self._generator.random(size), np.finfo(float).tiny)

    def generator(self) -> np.random.Generator:
        """Underlying numpy generator."""
        return self._generator

    def __repr__(self) -> str:
        return f"RandomStream(seed={self.seed}, name={self.name!r}, block={self.block})"


def block_plan(n_samples: int, block_size: int | None = None) -> List[Tuple[int, int, int]]:
    """Split ``n_samples`` into (block index, start, count) triples."""
    block_size = block_size or settings.block_size
    plan = []
    for index, start in enumerate(range(0, n_samples, block_size)):
        plan.append((index, start, min(block_size, n_samples - start)))
    return plan


def map_blocks(
    n_samples: int,
    seed: int,
    name: str,
    fn: Callable[[RandomStream, int, int], T],
    workers: int | None = None,
) -> List[T]:
    """Run ``fn(stream, start, count)`` for every block and keep block order.

    Args:
        n_samples: Total number of samples
        seed: Run seed
        name: Substream name
        fn: Block worker; receives the block's stream, the global index of its
            first sample and the number of samples
        workers: Thread count (defaults to settings.threads)

    Returns:
        List of per-block results in block order
    """
    workers = max(1, workers or settings.threads)
    plan = block_plan(n_samples)

    def _run(item: Tuple[int, int, int]) -> T:
        index, start, count = item
        return fn(RandomStream(seed, name, index), start, count)

    logger.debug(f"Running {len(plan)} blocks of stream '{name}' on {workers} workers")
    if workers == 1 or len(plan) <= 1:
        return [_run(item) for item in plan]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(_run, plan))


def draw_inputs(dists: Sequence, stream: RandomStream, count: int) -> np.ndarray:
    """Draw ``count`` independent input vectors, shape (n, count)."""
    return np.stack([d.sample(stream, count) for d in dists])
