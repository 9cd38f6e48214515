"""Signed blocks, their canonical encoding, and the simulated PKI."""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass

DIGEST_SIZE = 32
MAX_POINTERS = 0xFFFF
MAX_SHARE = 0xFFFF
MAX_PAYLOAD = 0xFFFFFFFF

MinerId = int


class BlockError(ValueError):
    pass


@dataclass(frozen=True)
class Block:
    """One blocklace vertex: creator, payload, hash pointers to prior blocks.

    Pointers are unique 32-byte digests kept in sorted order so that two
    structurally equal blocks encode identically. The signature covers the
    canonical encoding and is excluded from it.
    """

    creator: MinerId
    payload: bytes
    pointers: tuple[bytes, ...]
    share: bytes = b""
    signature: bytes = b""

    def is_initial(self) -> bool:
        return not self.pointers


def make_block(creator: MinerId, payload: bytes, pointers, share: bytes = b"") -> Block:
    """Build an unsigned block, normalizing the pointer set."""
    pts = tuple(sorted(set(pointers)))
    blk = Block(creator=creator, payload=payload, pointers=pts, share=share)
    problem = structural_error(blk)
    if problem:
        raise BlockError(problem)
    return blk


def structural_error(b: Block) -> str | None:
    """Return a reason string if the block violates structural limits."""
    if b.creator < 0:
        return "negative creator"
    if len(b.payload) > MAX_PAYLOAD:
        return "payload too long"
    if len(b.pointers) > MAX_POINTERS:
        return "too many pointers"
    if len(b.share) > MAX_SHARE:
        return "share too long"
    for p in b.pointers:
        if len(p) != DIGEST_SIZE:
            return "pointer is not a 32-byte digest"
    if list(b.pointers) != sorted(set(b.pointers)):
        return "pointers not sorted and unique"
    return None


def encode_block(b: Block) -> bytes:
    """Canonical encoding; deterministic, signature excluded.

    Layout: creator u32be | payload-len u32be | payload | pointer-count u16be |
    sorted pointer digests | share-len u16be | share.
    """
    parts = [
        b.creator.to_bytes(4, "big"),
        len(b.payload).to_bytes(4, "big"),
        b.payload,
        len(b.pointers).to_bytes(2, "big"),
    ]
    parts.extend(b.pointers)
    parts.append(len(b.share).to_bytes(2, "big"))
    parts.append(b.share)
    return b"".join(parts)


def block_id(b: Block) -> bytes:
    return hashlib.sha256(encode_block(b)).digest()


def decode_block(data: bytes, signature: bytes = b"") -> Block:
    """Inverse of encode_block. Raises BlockError on any framing problem."""
    try:
        pos = 0
        creator = int.from_bytes(data[pos:pos + 4], "big")
        pos += 4
        plen = int.from_bytes(data[pos:pos + 4], "big")
        pos += 4
        payload = data[pos:pos + plen]
        if len(payload) != plen:
            raise BlockError("truncated payload")
        pos += plen
        count = int.from_bytes(data[pos:pos + 2], "big")
        pos += 2
        pointers = []
        for _ in range(count):
            d = data[pos:pos + DIGEST_SIZE]
            if len(d) != DIGEST_SIZE:
                raise BlockError("truncated pointer")
            pointers.append(d)
            pos += DIGEST_SIZE
        slen = int.from_bytes(data[pos:pos + 2], "big")
        pos += 2
        share = data[pos:pos + slen]
        if len(share) != slen:
            raise BlockError("truncated share")
        pos += slen
        if pos != len(data):
            raise BlockError("trailing bytes")
    except (IndexError, ValueError) as exc:
        raise BlockError(str(exc)) from exc
    blk = Block(creator=creator, payload=payload, pointers=tuple(pointers),
                share=share, signature=signature)
    problem = structural_error(blk)
    if problem:
        raise BlockError(problem)
    return blk


class Keyring:
    """Simulator-issued per-miner MAC keys standing in for a real PKI."""

    def __init__(self, seed: int, n: int):
        self.n = n
        self._keys = [
            hashlib.sha256(b"blocklace/key/" + seed.to_bytes(8, "big", signed=False)
                           + i.to_bytes(4, "big")).digest()
            for i in range(n)
        ]

    def key(self, i: MinerId) -> bytes:
        return self._keys[i]

    def sign(self, b: Block) -> Block:
        sig = hmac.new(self.key(b.creator), encode_block(b), hashlib.sha256).digest()
        return Block(creator=b.creator, payload=b.payload, pointers=b.pointers,
                     share=b.share, signature=sig)

    def verify(self, b: Block) -> bool:
        if not (0 <= b.creator < self.n):
            return False
        want = hmac.new(self.key(b.creator), encode_block(b), hashlib.sha256).digest()
        return hmac.compare_digest(want, b.signature)


def block_wire(b: Block) -> bytes:
    """Length-framed encoding plus signature, as carried inside a package."""
    enc = encode_block(b)
    return len(enc).to_bytes(4, "big") + enc + len(b.signature).to_bytes(2, "big") + b.signature


def encode_package(blocks) -> bytes:
    """Count-prefixed list of framed blocks."""
    out = [len(blocks).to_bytes(4, "big")]
    out.extend(block_wire(b) for b in blocks)
    return b"".join(out)


def decode_package(data: bytes) -> list[Block]:
    count = int.from_bytes(data[0:4], "big")
    pos = 4
    blocks = []
    for _ in range(count):
        elen = int.from_bytes(data[pos:pos + 4], "big")
        pos += 4
        enc = data[pos:pos + elen]
        pos += elen
        slen = int.from_bytes(data[pos:pos + 2], "big")
        pos += 2
        sig = data[pos:pos + slen]
        pos += slen
        blocks.append(decode_block(enc, sig))
    if pos != len(data):
        raise BlockError("trailing bytes in package")
    return blocks
