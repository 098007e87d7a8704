"""Classical picker-routing heuristics expressed as tour-graph action sequences.

Every heuristic returns a replayed :class:`Rollout`, so its length is computed
by the same edge accounting as the exact solver.  When the depot aisle holds
no real picks it is left along the front cross-aisle (bottom, then 02) before
the heuristic proper starts at the first aisle with picks.
"""
from __future__ import annotations

from enum import Enum

from .tourgraph import (
    ActionPair,
    HorizontalAction as H,
    Rollout,
    VerticalAction as V,
    replay,
    vertical_cost,
)
from .warehouse import AisleSequence, NonEmptyAisle


class HeuristicKind(Enum):
    SSHAPE = "sshape"
    RETURN = "return"
    LARGEST_GAP = "largestgap"
    COMPOSITE = "composite"


def _depot_only(aisle: NonEmptyAisle) -> bool:
    return aisle.index == 1 and len(aisle.ys) == 1


def _split_prefix(seq: AisleSequence) -> tuple[list[ActionPair], list[NonEmptyAisle]]:
    aisles = list(seq)
    if len(aisles) > 1 and _depot_only(aisles[0]):
        return [ActionPair(V.BOTTOM, H.H02)], aisles[1:]
    return [], aisles


def s_shape(seq: AisleSequence) -> Rollout:
    """Traverse every aisle with picks; an odd last aisle is entered and left from the front."""
    actions, aisles = _split_prefix(seq)
    k = len(aisles)
    for i in range(k):
        last = i == k - 1
        if last:
            # after an even number of traversals the picker is back at the front
            v = V.BOTTOM if i % 2 == 0 else V.ONE_PASS
            actions.append(ActionPair(v, H.H11))
        else:
            # back cross-aisle on the way out after an odd traversal count
            actions.append(ActionPair(V.ONE_PASS, H.H11 if i % 2 == 0 else H.H02))
    return replay(actions, seq)


def return_policy(seq: AisleSequence) -> Rollout:
    actions = [ActionPair(V.BOTTOM, H.H02) for _ in range(len(seq) - 1)]
    actions.append(ActionPair(V.BOTTOM, H.H11))
    return replay(actions, seq)


def _largest_gap_action(ys, h) -> V:
    front = ys[0]
    back = h - ys[-1]
    interior = max((b - a for a, b in zip(ys, ys[1:])), default=-1)
    best = max(front, back, interior)
    # ties: bottom, then top, then gap
    if back == best:
        return V.BOTTOM
    if front == best:
        return V.TOP
    return V.GAP


def largest_gap(seq: AisleSequence) -> Rollout:
    """Full traversals of the outer aisles; inner aisles skip their largest gap.

    Both cross-aisles are walked once between the outer aisles (out along
    the back, home along the front), so every horizontal action is 11.
    """
    actions, aisles = _split_prefix(seq)
    k = len(aisles)
    if k == 1:
        actions.append(ActionPair(V.BOTTOM, H.H11))
        return replay(actions, seq)
    for i, aisle in enumerate(aisles):
        if i in (0, k - 1):
            v = V.ONE_PASS
        else:
            v = _largest_gap_action(aisle.ys, seq.h)
        actions.append(ActionPair(v, H.H11))
    return replay(actions, seq)


def _side_cost(aisle: NonEmptyAisle, h, at_front: bool, final: bool):
    """Cheapest way to serve ``aisle`` from one side, ignoring what follows."""
    if final:
        return 2 * aisle.ys[-1] if at_front else h
    stay = 2 * aisle.ys[-1] if at_front else 2 * (h - aisle.ys[0])
    return min(stay, h)


def composite(seq: AisleSequence) -> Rollout:
    """Greedy return-or-traverse choice per aisle with one aisle of look-ahead.

    The picker starts at the front.  For each aisle it compares returning to
    the side it came from with traversing to the opposite side, each scored
    with the cheapest way to then serve the next aisle from that side.  The
    horizontal action follows from the side the picker leaves on: 02 along
    the front (walked again on the way home), 11 along the back.
    """
    h = seq.h
    aisles = list(seq)
    k = len(aisles)
    at_front = True
    actions = []
    for i, aisle in enumerate(aisles):
        if i == k - 1:
            actions.append(ActionPair(V.BOTTOM if at_front else V.ONE_PASS, H.H11))
            break
        nxt = aisles[i + 1]
        next_final = i + 1 == k - 1
        stay_v = V.BOTTOM if at_front else V.TOP
        stay = vertical_cost(stay_v, aisle.ys, h) + _side_cost(nxt, h, at_front, next_final)
        cross = h + _side_cost(nxt, h, not at_front, next_final)
        if cross < stay:
            at_front = not at_front
            v = V.ONE_PASS
        else:
            v = stay_v
        actions.append(ActionPair(v, H.H02 if at_front else H.H11))
    return replay(actions, seq)


HEURISTICS = {
    HeuristicKind.SSHAPE: s_shape,
    HeuristicKind.RETURN: return_policy,
    HeuristicKind.LARGEST_GAP: largest_gap,
    HeuristicKind.COMPOSITE: composite,
}


def run_heuristic(kind: HeuristicKind | str, seq: AisleSequence) -> Rollout:
    return HEURISTICS[HeuristicKind(kind)](seq)
