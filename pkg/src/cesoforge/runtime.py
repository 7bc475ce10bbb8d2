"""Id and clock source with an optional deterministic mode.

Every generated STIX id and timestamp flows through the active context. The
default context uses ``uuid4`` and the wall clock; a seeded context draws ids
from a private RNG and ticks a synthetic clock one second per call, which is
what makes ``--seed`` runs byte-identical.
"""

from __future__ import annotations

import random
import threading
import uuid
from contextlib import contextmanager
from datetime import datetime, timedelta, timezone
from typing import Iterator

_SEEDED_EPOCH = datetime(2024, 1, 1, tzinfo=timezone.utc)


class Context:
    def __init__(self, seed: int | None = None):
        self.seed = seed
        self._rng = random.Random(seed) if seed is not None else None
        self._ticks = 0
        self._draws = 0
        self._lock = threading.Lock()

    @property
    def position(self) -> tuple[int, int]:
        """(draws, ticks) consumed so far; meaningful only when seeded."""
        return self._draws, self._ticks

    def fast_forward(self, draws: int, ticks: int) -> None:
        """Resume a seeded stream at a previously recorded position, so ids
        never repeat across separate invocations sharing one seed."""
        if self._rng is None:
            return
        with self._lock:
            for _ in range(max(0, draws - self._draws)):
                self._rng.getrandbits(128)
            self._draws = max(self._draws, draws)
            self._ticks = max(self._ticks, ticks)

    def new_uuid(self) -> str:
        if self._rng is None:
            return str(uuid.uuid4())
        with self._lock:
            bits = self._rng.getrandbits(128)
            self._draws += 1
        return str(uuid.UUID(int=bits, version=4))

    def new_id(self, kind: str) -> str:
        return f"{kind}--{self.new_uuid()}"

    def now(self) -> datetime:
        if self._rng is None:
            wall = datetime.now(timezone.utc)
            # STIX wire timestamps carry millisecond precision; quantize at the
            # source so serialize/parse round-trips are exact.
            return wall.replace(microsecond=wall.microsecond // 1000 * 1000)
        with self._lock:
            self._ticks += 1
            ticks = self._ticks
        return _SEEDED_EPOCH + timedelta(seconds=ticks)


_current = Context()


def current() -> Context:
    return _current


def set_seed(seed: int | None) -> None:
    """Install a fresh context; ``None`` restores wall-clock behaviour."""
    global _current
    _current = Context(seed)


@contextmanager
def seeded(seed: int) -> Iterator[Context]:
    global _current
    previous = _current
    _current = Context(seed)
    try:
        yield _current
    finally:
        _current = previous


def new_uuid() -> str:
    return _current.new_uuid()


def new_id(kind: str) -> str:
    return _current.new_id(kind)


def now() -> datetime:
    return _current.now()
