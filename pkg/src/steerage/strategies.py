"""Enumeration of Alice's deterministic output-and-message strategies.

A strategy assigns to every setting ``x`` a pair ``(a, c)`` of an output
``a in {0, ..., n_a-1}`` and a message ``c in {0, ..., d-1}``.  With ``m``
settings there are ``(n_a * d) ** m`` strategies; they index the PSD block
variables of the membership programs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ResourceLimitError

#: Hard cap on the number of enumerated strategies.
STRATEGY_CAP = 10**6


@dataclass(frozen=True)
class DeterministicStrategy:
    """One deterministic assignment ``x -> (a, c)``."""

    m: int
    assignment: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if len(self.assignment) != self.m:
            raise ValueError("assignment length must equal the number of settings")

    def output(self, x: int) -> int:
        return self.assignment[x][0]

    def message(self, x: int) -> int:
        return self.assignment[x][1]

    def __str__(self) -> str:
        return "(a,c): " + "".join(f"({a},{c})" for a, c in self.assignment)


@dataclass(frozen=True)
class StrategySet:
    """All deterministic strategies for fixed (m, n_a, d), in lexicographic order.

    ``outputs`` and ``messages`` are ``(count, m)`` integer arrays; row ``k``
    is the k-th strategy.  The mixed-radix index of a strategy uses radix
    ``n_a * d`` per setting with setting 0 most significant and the pair
    ``(a, c)`` packed as ``a * d + c``.
    """

    m: int
    n_a: int
    d: int
    outputs: np.ndarray
    messages: np.ndarray

    @property
    def count(self) -> int:
        return self.outputs.shape[0]

    def strategy(self, index: int) -> DeterministicStrategy:
        return DeterministicStrategy(
            self.m,
            tuple((int(a), int(c)) for a, c in zip(self.outputs[index], self.messages[index])),
        )

    def __iter__(self):
        return (self.strategy(k) for k in range(self.count))

    def index_of(self, strategy: DeterministicStrategy) -> int:
        radix = self.n_a * self.d
        idx = 0
        for a, c in strategy.assignment:
            idx = idx * radix + a * self.d + c
        return idx


def enumerate_strategies(m: int, n_a: int = 2, d: int = 1, cap: int = STRATEGY_CAP) -> StrategySet:
    """All ``(n_a*d)**m`` strategies, lexicographically ordered, duplicate-free."""
    if m < 1:
        raise ValueError(f"need at least one setting, got m={m}")
    if n_a < 2:
        raise ValueError(f"need at least two outputs, got n_a={n_a}")
    if d < 1:
        raise ValueError(f"need at least one message level, got d={d}")
    count = (n_a * d) ** m
    if count > cap:
        raise ResourceLimitError(f"{count} strategies exceed the cap of {cap}")

    # Mixed-radix digits, setting 0 most significant; digit = a*d + c.
    digits = np.array(list(itertools.product(range(n_a * d), repeat=m)), dtype=np.int64)
    outputs = digits // d
    messages = digits % d
    outputs.setflags(write=False)
    messages.setflags(write=False)
    return StrategySet(m=m, n_a=n_a, d=d, outputs=outputs, messages=messages)


def indicator(strategy: DeterministicStrategy, a: int, c: int, x: int) -> int:
    """D_lambda(a, c | x): 1 iff the strategy assigns (a, c) to setting x."""
    if not 0 <= x < strategy.m:
        raise ValueError(f"setting index {x} out of range for m={strategy.m}")
    if a < 0 or c < 0:
        raise ValueError("output and message indices must be nonnegative")
    return 1 if strategy.assignment[x] == (a, c) else 0


def quotient_by_message_relabeling(strategies: StrategySet) -> StrategySet:
    """Keep one representative per orbit of the message-relabeling group.

    Permuting message labels maps every feasible membership model onto
    another one with the same visibility, so restricting the block variables
    to lexicographic orbit minima does not change feasibility.  Returns the
    input unchanged for d = 1.
    """
    if strategies.d == 1:
        return strategies

    d = strategies.d
    digits = strategies.outputs * d + strategies.messages
    radix_powers = (strategies.n_a * d) ** np.arange(strategies.m - 1, -1, -1, dtype=np.int64)

    keep = np.ones(strategies.count, dtype=bool)
    indices = digits @ radix_powers
    for perm in itertools.permutations(range(d)):
        perm_arr = np.asarray(perm, dtype=np.int64)
        if np.array_equal(perm_arr, np.arange(d)):
            continue
        permuted_digits = strategies.outputs * d + perm_arr[strategies.messages]
        permuted_indices = permuted_digits @ radix_powers
        keep &= indices <= permuted_indices

    outputs = strategies.outputs[keep].copy()
    messages = strategies.messages[keep].copy()
    outputs.setflags(write=False)
    messages.setflags(write=False)
    return StrategySet(m=strategies.m, n_a=strategies.n_a, d=d, outputs=outputs, messages=messages)
