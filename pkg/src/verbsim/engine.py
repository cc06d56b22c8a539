"""Small deterministic discrete-event engine.

Processes are generators.  A process yields

* an ``int`` to sleep that many ticks,
* ``Acquire(lock)`` to take a FIFO mutex (resumes immediately when free),
* ``PARK`` to sleep until someone calls :meth:`Engine.wake` on it.

Simulated time is an integer.  Events at the same tick are ordered by a
seeded random key, then by insertion order, so a run is a pure function
of its inputs and the seed.
"""
from __future__ import annotations

import heapq
import random
from typing import Callable, Generator, List, Optional


class SimLock:
    """FIFO mutex in simulated time; records the ticks spent waiting."""

    __slots__ = ("name", "holder", "waiters", "wait_ticks", "acquisitions")

    def __init__(self, name: str):
        self.name = name
        self.holder = None
        self.waiters: List = []
        self.wait_ticks = 0
        self.acquisitions = 0


class Acquire:
    __slots__ = ("lock",)

    def __init__(self, lock: SimLock):
        self.lock = lock


PARK = object()


class Process:
    __slots__ = ("gen", "parked", "name", "done")

    def __init__(self, gen: Generator, name: str = ""):
        self.gen = gen
        self.parked = False
        self.name = name
        self.done = False


class Engine:
    def __init__(self, seed: int = 0):
        self.now = 0
        self._heap: list = []
        self._seq = 0
        self._rand = random.Random(seed).random
        self.events = 0

    def at(self, time: int, fn: Callable, arg=None):
        """Run ``fn(arg)`` at tick ``time`` (never earlier than now)."""
        if time < self.now:
            time = self.now
        self._seq += 1
        heapq.heappush(self._heap, (time, self._rand(), self._seq, fn, arg))

    def spawn(self, gen: Generator, name: str = "") -> Process:
        proc = Process(gen, name)
        self.at(self.now, self._step, proc)
        return proc

    def wake(self, proc: Process):
        if proc.parked:
            proc.parked = False
            self.at(self.now, self._step, proc)

    def release(self, lock: SimLock):
        if lock.waiters:
            proc, since = lock.waiters.pop(0)
            lock.holder = proc
            lock.wait_ticks += self.now - since
            lock.acquisitions += 1
            self.at(self.now, self._step, proc)
        else:
            lock.holder = None

    def _step(self, proc: Process):
        gen = proc.gen
        while True:
            try:
                cmd = next(gen)
            except StopIteration:
                proc.done = True
                return
            if cmd.__class__ is int:
                self.at(self.now + cmd, self._step, proc)
                return
            if cmd.__class__ is Acquire:
                lock = cmd.lock
                if lock.holder is None:
                    lock.holder = proc
                    lock.acquisitions += 1
                    continue
                lock.waiters.append((proc, self.now))
                return
            if cmd is PARK:
                proc.parked = True
                return
            raise TypeError(f"process {proc.name!r} yielded {cmd!r}")

    def run(self, until: Optional[int] = None):
        heap = self._heap
        pop = heapq.heappop
        while heap:
            if until is not None and heap[0][0] > until:
                break
            time, _, _, fn, arg = pop(heap)
            self.now = time
            self.events += 1
            fn(arg)
