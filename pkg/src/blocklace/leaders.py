"""Leader assignment: round-robin for eventual synchrony and a simulated
shared random coin for asynchrony."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .blocks import MinerId


class CoinError(Exception):
    pass


def _prf(seed: int, r: int, n: int) -> int:
    h = hashlib.sha256(b"blocklace/coin/" + seed.to_bytes(8, "big", signed=False)
                       + r.to_bytes(8, "big")).digest()
    return int.from_bytes(h[:8], "big") % n


class LeaderSchedule:
    """Pure function (round, n) -> miner for leader rounds, or None."""

    mode = "deterministic"

    def __init__(self, n: int, stride: int):
        self.n = n
        self.stride = stride

    def leader_at(self, d: int) -> MinerId | None:
        if d <= 0 or d % self.stride != 0:
            return None
        return (d // self.stride) % self.n


class CoinOracle:
    """Shared random coin: one fixed value per leader round, revealed only
    after f+1 distinct miners have invoked it."""

    def __init__(self, seed: int, n: int, f: int, stride: int):
        self.seed = seed
        self.n = n
        self.f = f
        self.stride = stride
        self.callers: dict[int, set[int]] = {}
        self.revealed: dict[int, MinerId] = {}
        self.reveal_log: list[tuple[int, MinerId]] = []  # in reveal order
        self.peek_log: list[tuple[int, bool]] = []  # adversary guard queries

    def value(self, r: int) -> MinerId:
        return _prf(self.seed, r, self.n)

    def request(self, p: MinerId, r: int) -> MinerId | None:
        """Register p's invocation for round r; returns the value once at
        least f+1 distinct miners asked, else None (pending)."""
        if r <= 0 or r % self.stride != 0:
            raise CoinError(f"round {r} is not a leader round")
        group = self.callers.setdefault(r, set())
        group.add(p)
        if r in self.revealed:
            return self.revealed[r]
        if len(group) >= self.f + 1:
            v = self.value(r)
            self.revealed[r] = v
            self.reveal_log.append((r, v))
            return v
        return None

    def is_revealed(self, r: int) -> bool:
        return r in self.revealed

    def revealed_value(self, r: int) -> MinerId | None:
        return self.revealed.get(r)

    def adversary_peek_guard(self, r: int) -> bool:
        """The only coin surface the adversary may touch; audited."""
        ok = r in self.revealed
        self.peek_log.append((r, ok))
        return ok


class CoinSchedule:
    """Schedule view over an oracle: unrevealed rounds have no leader yet."""

    mode = "coin"

    def __init__(self, oracle: CoinOracle):
        self.oracle = oracle
        self.n = oracle.n
        self.stride = oracle.stride

    def leader_at(self, d: int) -> MinerId | None:
        if d <= 0 or d % self.stride != 0:
            return None
        return self.oracle.revealed_value(d)


@dataclass
class RevealedCoinSchedule:
    """Offline view with every coin value treated as revealed. For analysis
    and generated-blocklace tests, never for live miners."""

    seed: int
    n: int
    stride: int
    mode: str = field(default="coin", init=False)

    def leader_at(self, d: int) -> MinerId | None:
        if d <= 0 or d % self.stride != 0:
            return None
        return _prf(self.seed, d, self.n)
