"""Small shared helpers: seed fan-out, RNG coercion, bounded parallelism."""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")
U = TypeVar("U")

THREADS_ENV_VAR = "CFSEARCH_THREADS"


def child_seed(root_seed: int, tag: str) -> int:
    """Derive a per-module seed from the run seed and a module tag.

    The split is ``sha256("<root_seed>:<tag>")`` truncated to 63 bits, so
    adding a new consumer tag never perturbs the stream any existing tag
    sees.  Tags are short stable strings such as ``"pretrain"`` or
    ``"evolution"``.
    """
    digest = hashlib.sha256(f"{root_seed}:{tag}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFFFFFFFFFFFFFF


def as_rng(seed_or_rng: int | np.random.Generator | None) -> np.random.Generator:
    """Accept an integer seed, a ready Generator, or None for fresh entropy."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    if seed_or_rng is None:
        return np.random.default_rng()
    return np.random.default_rng(int(seed_or_rng))


def thread_count() -> int:
    """Evaluation parallelism cap, from the environment (default 1).

    Invalid or non-positive values fall back to 1 rather than erroring:
    the variable is an operational knob, not part of any result.
    """
    raw = os.environ.get(THREADS_ENV_VAR, "1")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


def ordered_map(fn: Callable[[T], U], items: Sequence[T]) -> list[U]:
    """Map ``fn`` over ``items``, preserving order.

    Runs on a thread pool when the environment allows more than one
    worker.  ``fn`` must be pure with respect to the result so that the
    parallel and serial schedules agree element for element.
    """
    workers = thread_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def stable_choice(rng: np.random.Generator, options: Sequence[T]) -> T:
    """Pick one element uniformly; explicit helper to keep call sites terse."""
    return options[int(rng.integers(0, len(options)))]


def format_float(x: float) -> str:
    """Shortest round-trip decimal form, used by every text artifact."""
    return repr(float(x))


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()
