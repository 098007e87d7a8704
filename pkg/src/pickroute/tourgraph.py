"""Aisle-by-aisle tour construction as a Markov decision process.

States are the classical equivalence classes of a partial tour
subgraph: the parity of the rightmost back (``a``) and front (``b``)
cross-aisle nodes followed by the number of connected components.  Each
non-empty aisle receives one vertical action (how the aisle is traversed)
and, unless it is the last one, one horizontal action (how the two
cross-aisle segments to the next non-empty aisle are traversed).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from typing import NamedTuple, Sequence

import numpy as np

from .warehouse import AisleSequence, NonEmptyAisle


class InvalidActionError(ValueError):
    def __init__(self, message: str, index: int | None = None):
        super().__init__(message if index is None else f"step {index}: {message}")
        self.index = index


class EqState(Enum):
    UU1C = "UU1C"
    E01C = "E01C"
    OE1C = "0E1C"
    EE1C = "EE1C"
    EE2C = "EE2C"
    INITIAL = "000C"

    def __str__(self):
        return self.value

    @property
    def terminal(self) -> bool:
        return self in TERMINAL_STATES


TERMINAL_STATES = frozenset({EqState.E01C, EqState.OE1C, EqState.EE1C})


class VerticalAction(IntEnum):
    ONE_PASS = 0
    TOP = 1
    BOTTOM = 2
    GAP = 3

    def __str__(self):
        return ("1pass", "top", "bottom", "gap")[self]


class HorizontalAction(IntEnum):
    H11 = 0
    H20 = 1
    H02 = 2
    H22 = 3

    def __str__(self):
        return self.name[1:]


class ActionPair(NamedTuple):
    vertical: VerticalAction
    horizontal: HorizontalAction

    @property
    def index(self) -> int:
        return 4 * int(self.vertical) + int(self.horizontal)

    @classmethod
    def from_index(cls, k: int) -> "ActionPair":
        return ACTION_PAIRS[k]

    def __str__(self):
        return f"({self.vertical},{self.horizontal})"


ACTION_PAIRS = tuple(ActionPair(v, h) for v in VerticalAction for h in HorizontalAction)
N_ACTIONS = len(ACTION_PAIRS)

_S = EqState
_V = VerticalAction
_H = HorizontalAction

# None marks a transition that can never be part of a valid tour.
VERTICAL_TABLE: dict[EqState, dict[VerticalAction, EqState]] = {
    _S.UU1C: {_V.ONE_PASS: _S.EE1C, _V.TOP: _S.UU1C, _V.BOTTOM: _S.UU1C, _V.GAP: _S.UU1C},
    _S.E01C: {_V.ONE_PASS: _S.UU1C, _V.TOP: _S.E01C, _V.BOTTOM: _S.EE2C, _V.GAP: _S.EE2C},
    _S.OE1C: {_V.ONE_PASS: _S.UU1C, _V.TOP: _S.EE2C, _V.BOTTOM: _S.OE1C, _V.GAP: _S.EE2C},
    _S.EE1C: {_V.ONE_PASS: _S.UU1C, _V.TOP: _S.EE1C, _V.BOTTOM: _S.EE1C, _V.GAP: _S.EE1C},
    _S.EE2C: {_V.ONE_PASS: _S.UU1C, _V.TOP: _S.EE2C, _V.BOTTOM: _S.EE2C, _V.GAP: _S.EE2C},
    _S.INITIAL: {_V.ONE_PASS: _S.UU1C, _V.TOP: _S.E01C, _V.BOTTOM: _S.OE1C, _V.GAP: _S.EE2C},
}

HORIZONTAL_TABLE: dict[EqState, dict[HorizontalAction, EqState | None]] = {
    _S.UU1C: {_H.H11: _S.UU1C, _H.H20: None, _H.H02: None, _H.H22: None},
    _S.E01C: {_H.H11: None, _H.H20: _S.E01C, _H.H02: None, _H.H22: _S.EE2C},
    _S.OE1C: {_H.H11: None, _H.H20: None, _H.H02: _S.OE1C, _H.H22: _S.EE2C},
    _S.EE1C: {_H.H11: None, _H.H20: _S.E01C, _H.H02: _S.OE1C, _H.H22: _S.EE1C},
    _S.EE2C: {_H.H11: None, _H.H20: None, _H.H02: None, _H.H22: _S.EE2C},
    _S.INITIAL: {h: None for h in _H},
}


def transition(s: EqState, a: VerticalAction | HorizontalAction) -> EqState | None:
    """Next equivalence class, or None when the action is invalid in ``s``."""
    if isinstance(a, VerticalAction):
        return VERTICAL_TABLE[s][a]
    return HORIZONTAL_TABLE[s][a]


def largest_interior_gap(ys: Sequence) -> float:
    if len(ys) < 2:
        raise InvalidActionError("gap needs at least two picks in the aisle")
    return max(b - a for a, b in zip(ys, ys[1:]))


def vertical_cost(action: VerticalAction, ys: Sequence, h):
    """Length of the aisle edges added by ``action``; ``ys`` is sorted."""
    if not ys:
        raise ValueError("vertical actions need a non-empty aisle")
    if action == _V.ONE_PASS:
        return h
    if action == _V.TOP:
        return 2 * (h - ys[0])
    if action == _V.BOTTOM:
        return 2 * ys[-1]
    return 2 * (h - largest_interior_gap(ys))


def horizontal_cost(action: HorizontalAction, x, x_next):
    if not x_next > x:
        raise ValueError(f"aisles must be strictly increasing in x ({x} -> {x_next})")
    width = x_next - x
    return 4 * width if action == _H.H22 else 2 * width


def pair_mask(
    state: EqState,
    n_items: int,
    is_final: bool,
    next_is_final: bool,
    simplified: bool = False,
) -> np.ndarray:
    """Boolean vector over the 16 action pairs; True marks a valid pair."""
    mask = np.zeros(N_ACTIONS, dtype=bool)
    for k, (v, hz) in enumerate(ACTION_PAIRS):
        if v == _V.GAP and (simplified or n_items < 2):
            continue
        after_v = VERTICAL_TABLE[state][v]
        if is_final:
            mask[k] = hz == _H.H11 and after_v in TERMINAL_STATES
            continue
        after_h = HORIZONTAL_TABLE[after_v][hz]
        if after_h is None or (next_is_final and after_h == _S.EE2C):
            continue
        mask[k] = True
    return mask


@dataclass(frozen=True)
class EnvState:
    """Position of the tour construction: ``cursor`` is the next aisle (0-based)."""

    aisle_seq: AisleSequence
    cursor: int = 0
    eq_state: EqState = EqState.INITIAL
    accumulated_cost: float = 0
    history: tuple[ActionPair, ...] = ()

    @property
    def done(self) -> bool:
        return self.cursor >= len(self.aisle_seq)

    @property
    def aisle(self) -> NonEmptyAisle:
        return self.aisle_seq[self.cursor]

    @property
    def is_final(self) -> bool:
        return self.cursor == len(self.aisle_seq) - 1

    def mask(self, simplified: bool = False) -> np.ndarray:
        if self.done:
            raise InvalidActionError("tour is already complete")
        n = len(self.aisle_seq)
        mask = pair_mask(
            self.eq_state,
            len(self.aisle.ys),
            self.cursor == n - 1,
            self.cursor == n - 2,
            simplified,
        )
        assert mask.any(), f"no valid action in {self.eq_state} at aisle {self.cursor}"
        return mask


def reset(seq: AisleSequence) -> EnvState:
    if len(seq) == 0:
        raise ValueError("empty aisle sequence")
    return EnvState(seq)


def valid_action_pairs(env: EnvState, simplified: bool = False) -> list[ActionPair]:
    return [ACTION_PAIRS[k] for k in np.flatnonzero(env.mask(simplified))]


def step_cost(env: EnvState, pair: ActionPair):
    aisle = env.aisle
    cost = vertical_cost(pair.vertical, aisle.ys, env.aisle_seq.h)
    if not env.is_final:
        cost += horizontal_cost(pair.horizontal, aisle.x, env.aisle_seq[env.cursor + 1].x)
    return cost


def step(env: EnvState, pair: ActionPair, simplified: bool = False) -> tuple[EnvState, float]:
    """Apply ``pair`` to the current aisle and advance to the next one."""
    pair = ActionPair(VerticalAction(pair[0]), HorizontalAction(pair[1]))
    if not env.mask(simplified)[pair.index]:
        raise InvalidActionError(f"{pair} is not valid in state {env.eq_state}")
    nxt = VERTICAL_TABLE[env.eq_state][pair.vertical]
    if not env.is_final:
        nxt = HORIZONTAL_TABLE[nxt][pair.horizontal]
    cost = step_cost(env, pair)
    return (
        replace(
            env,
            cursor=env.cursor + 1,
            eq_state=nxt,
            accumulated_cost=env.accumulated_cost + cost,
            history=env.history + (pair,),
        ),
        cost,
    )


@dataclass
class Rollout:
    actions: list[ActionPair]
    step_costs: list
    total_length: float
    log_probs: list[float] | None = None
    final_state: EqState | None = None
    aisle_indices: list[int] = field(default_factory=list)

    def dumps(self) -> str:
        """Text form: one ``aisle vertical horizontal cost`` line per aisle, then the total."""
        lines = [
            f"{idx} {pair.vertical} {pair.horizontal} {cost}"
            for idx, pair, cost in zip(self.aisle_indices, self.actions, self.step_costs)
        ]
        lines.append(f"total {self.total_length}")
        return "\n".join(lines) + "\n"


def replay(actions: Sequence[ActionPair], seq: AisleSequence, simplified: bool = False) -> Rollout:
    """Run ``actions`` from the initial state; raises on the first invalid step."""
    if len(actions) != len(seq):
        raise InvalidActionError(f"expected {len(seq)} actions, got {len(actions)}")
    env = reset(seq)
    costs = []
    for i, pair in enumerate(actions):
        try:
            env, cost = step(env, pair, simplified)
        except InvalidActionError as exc:
            raise InvalidActionError(str(exc), i) from None
        costs.append(cost)
    assert env.eq_state.terminal
    return Rollout(
        list(env.history),
        costs,
        env.accumulated_cost,
        final_state=env.eq_state,
        aisle_indices=[a.index for a in seq],
    )


def rollout_length(actions: Sequence[ActionPair], seq: AisleSequence):
    return replay(actions, seq).total_length
