"""Counter-based random streams and deterministic block scheduling.

Work is cut into fixed-size row blocks. Block ``b`` of a stream labelled
``purpose`` draws from ``Philox(SeedSequence(seed, spawn_key=(tag, b)))``,
so the bytes produced depend only on (seed, purpose, count) and never on
the number of worker threads.
"""

from __future__ import annotations

import logging
import zlib
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from multinormex.types import FloatArray

logger = logging.getLogger(__name__)

# ── Constants ──────────────────────────────────────────────────────────

DEFAULT_BLOCK_ROWS = 8192
"""Rows per block for family and Theta sampling."""

SUBSTREAM_RULE = "Philox(SeedSequence(entropy=seed, spawn_key=(crc32(purpose), block)))"
"""Human-readable derivation rule recorded in run manifests."""

_MAX_SEED = 2**64


def stream_tag(purpose: str) -> int:
    """Stable 32-bit tag of a stream label."""
    return zlib.crc32(purpose.encode("utf-8"))


def check_seed(seed: int) -> int:
    """Validate a 64-bit unsigned seed."""
    if not 0 <= seed < _MAX_SEED:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def block_generator(seed: int, purpose: str, block: int) -> np.random.Generator:
    """Generator for one block of a labelled stream."""
    sequence = np.random.SeedSequence(
        entropy=check_seed(seed), spawn_key=(stream_tag(purpose), block)
    )
    return np.random.Generator(np.random.Philox(sequence))


def derive_seed(seed: int, label: str) -> int:
    """Child seed for an independent sub-experiment."""
    sequence = np.random.SeedSequence(
        entropy=check_seed(seed), spawn_key=(stream_tag(label),)
    )
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def block_sizes(count: int, block_rows: int) -> list[int]:
    """Sizes of the consecutive blocks covering ``count`` rows."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    full, rest = divmod(count, block_rows)
    return [block_rows] * full + ([rest] if rest else [])


def run_blocks[T](
    fn: Callable[[np.random.Generator, int], T],
    count: int,
    seed: int,
    purpose: str,
    *,
    threads: int = 1,
    block_rows: int = DEFAULT_BLOCK_ROWS,
) -> list[T]:
    """Apply ``fn(rng, rows)`` to every block, returning results in block order."""
    sizes = block_sizes(count, block_rows)
    check_seed(seed)

    def job(item: tuple[int, int]) -> T:
        block, rows = item
        return fn(block_generator(seed, purpose, block), rows)

    logger.debug(
        "run_blocks: purpose=%s, count=%d, blocks=%d, threads=%d",
        purpose,
        count,
        len(sizes),
        threads,
    )
    if threads <= 1 or len(sizes) == 1:
        return [job(item) for item in enumerate(sizes)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(job, enumerate(sizes)))


def map_blocks(
    fn: Callable[[np.random.Generator, int], FloatArray],
    count: int,
    seed: int,
    purpose: str,
    *,
    threads: int = 1,
    block_rows: int = DEFAULT_BLOCK_ROWS,
) -> FloatArray:
    """Like :func:`run_blocks` for array-valued blocks, stacked along rows."""
    parts = run_blocks(
        fn, count, seed, purpose, threads=threads, block_rows=block_rows
    )
    return np.concatenate(parts, axis=0)
