from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field


def estimate_tokens(text: str) -> int:
    """Rough token count: one token per four code points, rounded up."""
    return math.ceil(len(text) / 4)


@dataclass
class UsageLedger:
    price_per_million_tokens: float = 0.0
    requests: int = 0
    texts_embedded: int = 0
    tokens_estimated: int = 0
    latencies_ms: list[float] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    @property
    def cost_estimate(self) -> float:
        return self.tokens_estimated * self.price_per_million_tokens / 1e6

    def record(self, texts: int, tokens: int, latency_ms: float) -> None:
        with self._lock:
            self.requests += 1
            self.texts_embedded += texts
            self.tokens_estimated += tokens
            self.latencies_ms.append(float(latency_ms))

    def snapshot(self) -> "UsageLedger":
        with self._lock:
            return UsageLedger(
                self.price_per_million_tokens,
                self.requests,
                self.texts_embedded,
                self.tokens_estimated,
                list(self.latencies_ms),
            )

    def since(self, earlier: "UsageLedger") -> "UsageLedger":
        """Delta between this ledger and an earlier snapshot of it."""
        now = self.snapshot()
        return UsageLedger(
            self.price_per_million_tokens,
            now.requests - earlier.requests,
            now.texts_embedded - earlier.texts_embedded,
            now.tokens_estimated - earlier.tokens_estimated,
            now.latencies_ms[len(earlier.latencies_ms):],
        )

    def merge(self, other: "UsageLedger") -> "UsageLedger":
        # the merged ledger prices tokens at the left operand's rate
        return UsageLedger(
            self.price_per_million_tokens,
            self.requests + other.requests,
            self.texts_embedded + other.texts_embedded,
            self.tokens_estimated + other.tokens_estimated,
            self.latencies_ms + other.latencies_ms,
        )

    def to_dict(self) -> dict:
        return {
            "price_per_million_tokens": self.price_per_million_tokens,
            "requests": self.requests,
            "texts_embedded": self.texts_embedded,
            "tokens_estimated": self.tokens_estimated,
            "cost_estimate": self.cost_estimate,
            "latencies_ms": list(self.latencies_ms),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UsageLedger":
        return cls(
            float(d.get("price_per_million_tokens", 0.0)),
            int(d.get("requests", 0)),
            int(d.get("texts_embedded", 0)),
            int(d.get("tokens_estimated", 0)),
            [float(x) for x in d.get("latencies_ms", [])],
        )


def nearest_rank(sorted_values: list[float], q: float) -> float:
    n = len(sorted_values)
    rank = max(1, math.ceil(q * n))
    return sorted_values[rank - 1]


def ledger_summary(ledger: UsageLedger) -> dict[str, float]:
    lat = sorted(ledger.latencies_ms)
    if not lat:
        p50 = p95 = mean = 0.0
    else:
        p50 = nearest_rank(lat, 0.50)
        p95 = nearest_rank(lat, 0.95)
        mean = math.fsum(lat) / len(lat)
    return {
        "p50_ms": p50,
        "p95_ms": p95,
        "mean_ms": mean,
        "cost_estimate": ledger.cost_estimate,
        "tokens_estimated": ledger.tokens_estimated,
    }
