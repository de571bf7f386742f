import time
from contextlib import contextmanager
from typing import Callable, Dict, Iterator

PHASES = ("forward", "backward", "basis_refresh", "scaling", "precondition", "update")


class PhaseTimer:
    """Cumulative wall time and entry count per step phase."""

    def __init__(self, clock: Callable[[], float] = time.perf_counter):
        self.clock = clock
        self.seconds: Dict[str, float] = {name: 0.0 for name in PHASES}
        self.counts: Dict[str, int] = {name: 0 for name in PHASES}

    @contextmanager
    def phase(self, name: str) -> Iterator[None]:
        if name not in self.seconds:
            raise KeyError(f"Unknown phase {name!r}")
        start = self.clock()
        try:
            yield
        finally:
            # clamp: an injected clock need not be monotone
            self.seconds[name] += max(self.clock() - start, 0.0)
            self.counts[name] += 1

    @property
    def total_seconds(self) -> float:
        return sum(self.seconds.values())

    def snapshot(self) -> Dict[str, Dict]:
        return {"seconds": dict(self.seconds), "counts": dict(self.counts)}
