"""Exact tour lengths: equivalence-class dynamic programming and a Held-Karp oracle."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tourgraph import (
    ACTION_PAIRS,
    HORIZONTAL_TABLE,
    VERTICAL_TABLE,
    EqState,
    Rollout,
    horizontal_cost,
    pair_mask,
    replay,
    vertical_cost,
)
from .warehouse import AisleSequence, Instance, distance_matrix, to_aisle_sequence

BRUTE_FORCE_LIMIT = 12


@dataclass
class DpTable:
    """``cost[k][s]`` is the cheapest partial tour reaching state ``s`` after aisle k."""

    cost: list[dict[EqState, float]]
    back: list[dict[EqState, tuple[EqState, int]]]


def build_table(seq: AisleSequence, simplified: bool = False) -> DpTable:
    n = len(seq)
    h = seq.h
    layer: dict[EqState, float] = {EqState.INITIAL: 0}
    costs, backs = [], []
    for k, aisle in enumerate(seq):
        is_final = k == n - 1
        nxt: dict[EqState, float] = {}
        back: dict[EqState, tuple[EqState, int]] = {}
        width_cost = None if is_final else {
            hz: horizontal_cost(hz, aisle.x, seq[k + 1].x) for hz in range(4)
        }
        for state, base in layer.items():
            mask = pair_mask(state, len(aisle.ys), is_final, k == n - 2, simplified)
            for idx in np.flatnonzero(mask):
                v, hz = ACTION_PAIRS[idx]
                target = VERTICAL_TABLE[state][v]
                c = base + vertical_cost(v, aisle.ys, h)
                if not is_final:
                    target = HORIZONTAL_TABLE[target][hz]
                    c += width_cost[hz]
                # strict improvement keeps the lowest pair index on ties
                if target not in nxt or c < nxt[target]:
                    nxt[target] = c
                    back[target] = (state, int(idx))
        costs.append(nxt)
        backs.append(back)
        layer = nxt
    return DpTable(costs, backs)


def solve_sequence(seq: AisleSequence, simplified: bool = False) -> Rollout:
    table = build_table(seq, simplified)
    final = table.cost[-1]
    state = min(final, key=lambda s: (final[s], s.value))
    actions = []
    for back in reversed(table.back):
        state, idx = back[state]
        actions.append(ACTION_PAIRS[idx])
    actions.reverse()
    rollout = replay(actions, seq, simplified)
    assert rollout.total_length == final[rollout.final_state]
    return rollout


def solve_optimal(inst: Instance, simplified: bool = False) -> tuple[float, Rollout]:
    """Shortest pick tour length and the action sequence that realises it.

    With ``simplified`` the gap action is excluded, giving the best tour that
    enters each aisle at most once.
    """
    rollout = solve_sequence(to_aisle_sequence(inst), simplified)
    return rollout.total_length, rollout


def brute_force_tsp(inst: Instance, limit: int = BRUTE_FORCE_LIMIT):
    """Held-Karp over depot and items with the shortest-path metric."""
    if inst.m > limit:
        raise ValueError(f"brute force is limited to {limit} items, got {inst.m}")
    d = distance_matrix(inst)
    m = inst.m
    if m == 1:
        return d[0, 1] * 2
    big = np.iinfo(np.int64).max // 4 if d.dtype == np.int64 else np.inf
    full = 1 << m
    # dp[mask, j]: shortest depot -> ... -> item j path through exactly ``mask``
    dp = np.full((full, m), big, dtype=d.dtype)
    for j in range(m):
        dp[1 << j, j] = d[0, j + 1]
    items = d[1:, 1:]
    bits = np.arange(m)
    for mask in range(1, full):
        members = bits[(mask >> bits) & 1 == 1]
        if len(members) < 2:
            continue
        for j in members:
            prev = mask ^ (1 << j)
            ks = members[members != j]
            dp[mask, j] = np.min(dp[prev, ks] + items[ks, j])
    return (dp[full - 1] + d[1:, 0]).min().item()
