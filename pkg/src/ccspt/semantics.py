"""Operational semantics of CCSP_t.

Transition generation for closed terms, bounded state-space exploration
into a finite LTS, stability and initials, strong bisimilarity by
partition refinement, and head normal forms.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .terms import (
    NIL,
    TAU,
    TIMEOUT,
    Choice,
    Hide,
    Nil,
    Par,
    Prefix,
    Rec,
    Rename,
    RecSpec,
    Term,
    Var,
    format_term,
    is_visible,
    substitute,
    sum_terms,
)


class UnguardedRecursion(RuntimeError):
    """Raised when unfolding recursion never reaches a prefix."""


class IncompleteStateSpace(RuntimeError):
    """Raised when an operation needs a fully explored LTS but the
    exploration was cut off by the state budget."""


DEFAULT_UNFOLD_BUDGET = 1000

_outgoing_cache: dict = {}


def outgoing(term: Term, unfold_budget: int = DEFAULT_UNFOLD_BUDGET) -> frozenset:
    """The set of pairs (label, successor) such that term --label--> successor.

    Raises UnguardedRecursion when more than unfold_budget recursive
    unfoldings happen without passing a prefix.
    """
    cached = _outgoing_cache.get(term)
    if cached is not None:
        return cached
    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 4 * unfold_budget + 1000))
    try:
        return _outgoing(term, unfold_budget)
    except RecursionError:
        raise UnguardedRecursion(
            "recursion never reaches a prefix (stack exhausted)"
        ) from None
    finally:
        sys.setrecursionlimit(limit)


def _outgoing(term: Term, budget: int) -> frozenset:
    cached = _outgoing_cache.get(term)
    if cached is not None:
        return cached
    if isinstance(term, Nil):
        result = frozenset()
    elif isinstance(term, Prefix):
        result = frozenset({(term.action, term.body)})
    elif isinstance(term, Choice):
        result = _outgoing(term.left, budget) | _outgoing(term.right, budget)
    elif isinstance(term, Par):
        sync = term.sync
        left = _outgoing(term.left, budget)
        right = _outgoing(term.right, budget)
        moves = set()
        for label, succ in left:
            if label not in sync:
                moves.add((label, Par(sync, succ, term.right)))
        for label, succ in right:
            if label not in sync:
                moves.add((label, Par(sync, term.left, succ)))
        for label, lsucc in left:
            if label in sync:
                for rlabel, rsucc in right:
                    if rlabel == label:
                        moves.add((label, Par(sync, lsucc, rsucc)))
        result = frozenset(moves)
    elif isinstance(term, Hide):
        result = frozenset(
            (TAU if label in term.hidden else label, Hide(term.hidden, succ))
            for label, succ in _outgoing(term.body, budget)
        )
    elif isinstance(term, Rename):
        moves = set()
        for label, succ in _outgoing(term.body, budget):
            if not is_visible(label):
                moves.add((label, Rename(term.rel, succ)))
            else:
                for a, b in term.rel:
                    if a == label:
                        moves.add((b, Rename(term.rel, succ)))
        result = frozenset(moves)
    elif isinstance(term, Rec):
        # unfold in place until the body starts with something else
        unfolded = term
        while isinstance(unfolded, Rec):
            if budget <= 0:
                raise UnguardedRecursion(
                    f"recursion through {unfolded.name} never reaches a prefix"
                )
            budget -= 1
            unfolded = substitute(unfolded.spec.get(unfolded.name), unfolded.spec)
        result = _outgoing(unfolded, budget)
    elif isinstance(term, Var):
        raise ValueError(f"term is not closed: free variable {term.name}")
    else:
        raise TypeError(f"not a term: {term!r}")
    _outgoing_cache[term] = result
    return result


def is_stable(term: Term) -> bool:
    """No outgoing tau-transition."""
    return all(label != TAU for label, _ in outgoing(term))


def initials(term: Term) -> Optional[frozenset]:
    """The visible actions enabled at a stable term; None when unstable."""
    moves = outgoing(term)
    if any(label == TAU for label, _ in moves):
        return None
    return frozenset(label for label, _ in moves if is_visible(label))


@dataclass
class Lts:
    """A finite explored fragment of the transition relation.

    states[i] is the term of state i; roots are the indices of the terms
    exploration started from (initial = roots[0]).  complete is False when
    the state budget cut the exploration short, in which case transitions
    leading outside the explored set are missing.
    """

    states: list
    roots: list
    transitions: list  # (source index, label, target index)
    complete: bool
    stable: list
    state_initials: list  # frozenset per state, None at unstable states
    index: dict = field(repr=False)
    succ: list = field(repr=False)  # per state: dict label -> sorted tuple of targets

    @property
    def initial(self) -> int:
        return self.roots[0]

    def require_complete(self):
        if not self.complete:
            raise IncompleteStateSpace(
                "state budget exhausted before the state space was closed"
            )

    def labels(self) -> list:
        seen = sorted({label for _, label, _ in self.transitions})
        return seen

    # -- exports ----------------------------------------------------------

    def to_aut(self) -> str:
        lines = [f"des ({self.initial},{len(self.transitions)},{len(self.states)})"]
        for src, label, dst in self.transitions:
            lines.append(f'({src},"{label}",{dst})')
        return "\n".join(lines) + "\n"

    def to_dot(self) -> str:
        lines = ["digraph lts {", "  rankdir=LR;", '  node [shape=circle];']
        for i in range(len(self.states)):
            shape = "doublecircle" if i in self.roots else "circle"
            label = format_term(self.states[i]).replace('"', '\\"')
            lines.append(f'  s{i} [shape={shape},tooltip="{label}"];')
        for src, label, dst in self.transitions:
            lines.append(f'  s{src} -> s{dst} [label="{label}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(
            {
                "initial": self.initial,
                "complete": self.complete,
                "states": [format_term(t) for t in self.states],
                "transitions": [
                    {"from": s, "label": l, "to": d} for s, l, d in self.transitions
                ],
            },
            indent=2,
        )

    def to_text(self) -> str:
        lines = [
            f"states: {len(self.states)}  transitions: {len(self.transitions)}  "
            f"complete: {'yes' if self.complete else 'no'}"
        ]
        for i, term in enumerate(self.states):
            mark = "*" if i == self.initial else " "
            lines.append(f"{mark}{i}: {format_term(term)}")
        for src, label, dst in self.transitions:
            lines.append(f"  {src} --{label}--> {dst}")
        return "\n".join(lines) + "\n"


DEFAULT_MAX_STATES = 10_000


def explore(term: Term, max_states: int = DEFAULT_MAX_STATES) -> Lts:
    """Breadth-first closure of outgoing() starting from one term."""
    return explore_many([term], max_states)


def explore_many(terms: Iterable[Term], max_states: int = DEFAULT_MAX_STATES) -> Lts:
    """Explore from several roots into one shared LTS."""
    states: list = []
    index: dict = {}
    complete = True

    def intern(t: Term) -> Optional[int]:
        nonlocal complete
        got = index.get(t)
        if got is not None:
            return got
        if len(states) >= max_states:
            complete = False
            return None
        index[t] = len(states)
        states.append(t)
        return index[t]

    roots = []
    for t in terms:
        i = intern(t)
        if i is None:
            raise IncompleteStateSpace("state budget smaller than the number of roots")
        roots.append(i)

    transitions = []
    stable = []
    state_initials = []
    frontier = 0
    while frontier < len(states):
        src = frontier
        frontier += 1
        moves = outgoing(states[src])
        tau_here = False
        inits = set()
        for label, succ in sorted(moves, key=lambda m: (m[0], format_term(m[1]))):
            if label == TAU:
                tau_here = True
            elif is_visible(label):
                inits.add(label)
            dst = intern(succ)
            if dst is not None:
                transitions.append((src, label, dst))
        stable.append(not tau_here)
        state_initials.append(None if tau_here else frozenset(inits))

    succ: list = [dict() for _ in states]
    grouped: dict = {}
    for src, label, dst in transitions:
        grouped.setdefault((src, label), []).append(dst)
    for (src, label), targets in grouped.items():
        succ[src][label] = tuple(sorted(set(targets)))

    return Lts(
        states=states,
        roots=roots,
        transitions=transitions,
        complete=complete,
        stable=stable,
        state_initials=state_initials,
        index=index,
        succ=succ,
    )


# ---------------------------------------------------------------------------
# strong bisimilarity


def strong_bisim(lts: Lts, s: int, t: int) -> bool:
    """Partition refinement on a completely explored LTS."""
    lts.require_complete()
    partition = bisim_partition(lts)
    return partition[s] == partition[t]


def bisim_partition(lts: Lts) -> list:
    """Block index per state of the coarsest strong bisimulation partition."""
    n = len(lts.states)
    block = [0] * n
    while True:
        signatures = []
        for i in range(n):
            sig = frozenset(
                (label, block[dst]) for label, dsts in lts.succ[i].items() for dst in dsts
            )
            signatures.append((block[i], sig))
        renumber: dict = {}
        new_block = []
        for sig in signatures:
            if sig not in renumber:
                renumber[sig] = len(renumber)
            new_block.append(renumber[sig])
        if new_block == block:
            return block
        block = new_block


def bisimilar(left: Term, right: Term, max_states: int = DEFAULT_MAX_STATES) -> bool:
    """Convenience wrapper: explore both terms together and compare roots."""
    lts = explore_many([left, right], max_states)
    return strong_bisim(lts, lts.roots[0], lts.roots[1])


# ---------------------------------------------------------------------------
# head normal forms


@dataclass(frozen=True)
class HeadNormalForm:
    """A term presented as a guarded sum of its outgoing transitions."""

    summands: tuple  # (label, Term) pairs, deterministically ordered

    def as_term(self) -> Term:
        return sum_terms(Prefix(label, body) for label, body in self.summands)


def hnf(term: Term, unfold_budget: int = DEFAULT_UNFOLD_BUDGET) -> HeadNormalForm:
    moves = outgoing(term, unfold_budget)
    ordered = tuple(sorted(moves, key=lambda m: (m[0], format_term(m[1]))))
    return HeadNormalForm(ordered)
