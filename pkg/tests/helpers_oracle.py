"""Brute-force reference implementations used as independent test oracles.

Everything here works on plain dicts extracted from blocks (id -> pointers,
id -> creator) and recomputes reachability from scratch, deliberately
sharing no code with the store's bitmask machinery.
"""

from __future__ import annotations


def graph_of(store) -> tuple[dict, dict]:
    pointers = {}
    creators = {}
    for bid in store.accepted_ids():
        blk = store.get(bid)
        pointers[bid] = tuple(blk.pointers)
        creators[bid] = blk.creator
    return pointers, creators


def bf_reachable(pointers: dict, root) -> set:
    """All blocks reachable from root by pointer paths, root included."""
    seen = {root}
    stack = [root]
    while stack:
        cur = stack.pop()
        for p in pointers.get(cur, ()):
            if p in pointers and p not in seen:
                seen.add(p)
                stack.append(p)
    return seen


def bf_acknowledges(pointers: dict, a, b) -> bool:
    return a != b and b in bf_reachable(pointers, a)


def bf_closure(pointers: dict, roots) -> set:
    out = set()
    for r in roots:
        out |= bf_reachable(pointers, r)
    return out


def bf_depth(pointers: dict, b) -> int:
    """Longest pointer path from b, plus one."""
    memo = {}

    def go(x):
        if x not in memo:
            memo[x] = 1 + max((go(p) for p in pointers.get(x, ()) if p in pointers),
                              default=0)
        return memo[x]

    return go(b)


def bf_equivocation(pointers: dict, creators: dict, b1, b2) -> bool:
    if b1 == b2 or creators[b1] != creators[b2]:
        return False
    return not (bf_acknowledges(pointers, b1, b2) or bf_acknowledges(pointers, b2, b1))


def bf_approves(pointers: dict, creators: dict, b1, b) -> bool:
    cl = bf_reachable(pointers, b)
    if b1 not in cl:
        return False
    return not any(bf_equivocation(pointers, creators, b1, b2) for b2 in cl)


def bf_approval_creators(pointers: dict, creators: dict, b1,
                         depth: int | None = None) -> set:
    out = set()
    for b in pointers:
        if depth is not None and bf_depth(pointers, b) != depth:
            continue
        if bf_approves(pointers, creators, b1, b):
            out.add(creators[b])
    return out


def bf_ratifies(pointers: dict, creators: dict, b1, b2, alpha: int,
                quorum: int) -> bool:
    target = bf_depth(pointers, b1) + alpha
    cl2 = bf_reachable(pointers, b2)
    found = set()
    for b in cl2:
        if bf_depth(pointers, b) == target and bf_approves(pointers, creators, b1, b):
            found.add(creators[b])
    return len(found) >= quorum


def bf_ratifies_any_depth(pointers: dict, creators: dict, b1, b2,
                          quorum: int) -> bool:
    """Permissive variant counting approvers anywhere in the closure."""
    cl2 = bf_reachable(pointers, b2)
    found = {creators[b] for b in cl2 if bf_approves(pointers, creators, b1, b)}
    return len(found) >= quorum


def bf_super_ratified(pointers: dict, creators: dict, leader_at, params,
                      quorum: int, cand) -> bool:
    r = bf_depth(pointers, cand)
    if leader_at(r) != creators[cand]:
        return False
    ratifiers = set()
    lead_ok = params.alpha != 1
    for b in pointers:
        if bf_depth(pointers, b) != r + params.beta:
            continue
        if bf_ratifies(pointers, creators, cand, b, params.alpha, quorum):
            ratifiers.add(creators[b])
            if creators[b] == leader_at(r + params.beta):
                lead_ok = True
    return len(ratifiers) >= quorum and lead_ok
