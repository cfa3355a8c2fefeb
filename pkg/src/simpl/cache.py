"""Runtime memo tables for the cache construct.

One table per cache site per run; keys are tuples of the current values of
the cells the specializer discovered as inputs (whole arrays enter as
tuples). `debug=True` re-runs the body on every hit and aborts on
disagreement, which flags an unsound cache — an engine bug or an effectful
body that escaped the specialization-time check.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import CacheMismatchError
from .ir import ResidualProgram


@dataclass
class RtCache:
    cache_id: str
    table: dict = field(default_factory=dict)
    hits: int = 0
    misses: int = 0

    def check(self, key, recomputed) -> None:
        if key in self.table:
            self.hits += 1
            stored = self.table[key]
            if stored != recomputed:
                raise CacheMismatchError(self.cache_id, key, stored, recomputed)
        else:
            self.misses += 1
            self.table[key] = recomputed

    def stats(self) -> dict:
        return {"id": self.cache_id, "hits": self.hits, "misses": self.misses,
                "size": len(self.table)}


def make_caches(rp: ResidualProgram) -> dict[str, RtCache]:
    return {cid: RtCache(cid) for cid in rp.caches}


def stats_list(caches: dict[str, RtCache]) -> list[dict]:
    return [caches[cid].stats() for cid in sorted(caches)]
