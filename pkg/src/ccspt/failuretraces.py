"""Partial failure traces of CCSP_t processes.

A partial failure trace is a finite sequence of visible actions and
refusal sets, implicitly ended by the tag top.  Traces are represented as
tuples whose entries are action names (str) or refusal sets (frozenset).

This module decides membership, enumerates bounded trace sets, produces
the rooted variants (st, post-st and t-prefixed elements), compares
processes under the four relations (failure trace and rooted failure
trace equivalence and preorder), and compiles a process into a finite
automaton over actions and refusal symbols for exact set comparison.
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Optional

from .semantics import (
    DEFAULT_MAX_STATES,
    IncompleteStateSpace,
    Lts,
    explore_many,
)
from .terms import TAU, TIMEOUT, Term, is_visible, sort

# ---------------------------------------------------------------------------
# trace symbols


def is_refusal(symbol) -> bool:
    return isinstance(symbol, frozenset)


def is_action(symbol) -> bool:
    return isinstance(symbol, str)


def check_trace(trace) -> tuple:
    """Validate and normalise a trace given as an iterable of symbols."""
    out = []
    for symbol in trace:
        if isinstance(symbol, str):
            if not is_visible(symbol):
                raise ValueError(f"traces contain visible actions only: {symbol!r}")
            out.append(symbol)
        elif isinstance(symbol, (frozenset, set)):
            symbol = frozenset(symbol)
            if any(not is_visible(a) for a in symbol):
                raise ValueError(f"refusal sets contain visible actions only: {symbol!r}")
            out.append(symbol)
        else:
            raise TypeError(f"not a trace symbol: {symbol!r}")
    return tuple(out)


_NAME_RE = re.compile(r"[a-z_][a-z0-9_]*\Z")


def parse_trace(text: str) -> tuple:
    """Parse the whitespace-separated trace format, e.g. ``a {b,c} b top``.

    The terminal ``top`` is optional on input.
    """
    symbols = []
    tokens = text.split()
    for i, tok in enumerate(tokens):
        if tok == "top":
            if i != len(tokens) - 1:
                raise ValueError("'top' can only end a trace")
            break
        if tok.startswith("{"):
            if not tok.endswith("}"):
                raise ValueError(f"unterminated refusal set: {tok!r}")
            inner = tok[1:-1]
            names = [n for n in inner.split(",") if n] if inner else []
            for n in names:
                if not _NAME_RE.match(n) or n in ("t", "tau", "top"):
                    raise ValueError(f"bad action name in refusal set: {n!r}")
            symbols.append(frozenset(names))
        else:
            if not _NAME_RE.match(tok) or tok in ("t", "tau", "top"):
                raise ValueError(f"bad action name: {tok!r}")
            symbols.append(tok)
    return tuple(symbols)


def format_trace(trace) -> str:
    parts = []
    for symbol in trace:
        if is_refusal(symbol):
            parts.append("{" + ",".join(sorted(symbol)) + "}")
        else:
            parts.append(symbol)
    parts.append("top")
    return " ".join(parts)


def trace_project(trace) -> tuple:
    """Drop all refusal sets, keeping the action sequence."""
    return tuple(s for s in trace if is_action(s))


def is_system_ended(trace, i: int) -> bool:
    """Is the refusal set at position i followed by an action inside it?"""
    if not 0 <= i < len(trace) or not is_refusal(trace[i]):
        raise ValueError(f"position {i} is not a refusal set of the trace")
    return i + 1 < len(trace) and is_action(trace[i + 1]) and trace[i + 1] in trace[i]


def trace_sort_key(trace):
    """Order traces by length, then pointwise with actions before refusals
    and refusal sets ordered by size then name."""
    return (len(trace), tuple(_symbol_key(s) for s in trace))


def _symbol_key(symbol):
    if is_action(symbol):
        return (0, symbol)
    return (1, len(symbol), tuple(sorted(symbol)))


# ---------------------------------------------------------------------------
# rooted elements


@dataclass(frozen=True)
class RootedElement:
    """An element of a rooted trace set.

    kind is one of "plain", "stable" (the st tag), "post-stable"
    (the post-st tag) or "timeout".  A timeout element t X sigma stores
    the refusal set X and the remaining trace sigma separately.
    """

    kind: str
    refusal: Optional[frozenset] = None
    trace: Optional[tuple] = None

    def sequence(self) -> tuple:
        """The underlying symbol sequence (X sigma for timeout elements)."""
        if self.kind == "plain":
            return self.trace
        if self.kind == "timeout":
            return (self.refusal,) + self.trace
        raise ValueError(f"{self.kind} elements carry no trace")


ST = RootedElement("stable")
POST_ST = RootedElement("post-stable")


def plain(trace) -> RootedElement:
    return RootedElement("plain", trace=check_trace(trace))


def timeout_prefixed(refusal, trace) -> RootedElement:
    refusal = frozenset(refusal)
    if any(not is_visible(a) for a in refusal):
        raise ValueError("refusal sets contain visible actions only")
    return RootedElement("timeout", refusal=refusal, trace=check_trace(trace))


def parse_rooted(text: str) -> RootedElement:
    stripped = text.strip()
    if stripped == "st":
        return ST
    if stripped == "post-st":
        return POST_ST
    tokens = stripped.split()
    if tokens and tokens[0] == "t":
        rest = parse_trace(" ".join(tokens[1:]))
        if not rest or not is_refusal(rest[0]):
            raise ValueError("a timeout element needs a refusal set after 't'")
        return RootedElement("timeout", refusal=rest[0], trace=rest[1:])
    return RootedElement("plain", trace=parse_trace(text))


def format_rooted(el: RootedElement) -> str:
    if el.kind == "stable":
        return "st"
    if el.kind == "post-stable":
        return "post-st"
    if el.kind == "timeout":
        return "t " + format_trace((el.refusal,) + el.trace)
    return format_trace(el.trace)


def rooted_sort_key(el: RootedElement):
    if el.kind == "stable":
        return (0, 0, ())
    if el.kind == "post-stable":
        return (0, 1, ())
    if el.kind == "plain":
        return (1,) + trace_sort_key(el.trace)
    return (2,) + trace_sort_key((el.refusal,) + el.trace)


# ---------------------------------------------------------------------------
# col: collapsing duplicated adjacent refusal sets


def _collapse_once(seq) -> set:
    out = set()
    for i in range(len(seq) - 1):
        if is_refusal(seq[i]) and seq[i] == seq[i + 1]:
            out.add(seq[:i] + seq[i + 1 :])
    return out


def col_closure(items: Iterable) -> set:
    """Smallest superset closed under collapsing some adjacent pair of
    equal refusal sets.  Accepts plain traces and rooted elements mixed."""
    result = set()
    todo = list(items)
    while todo:
        item = todo.pop()
        if item in result:
            continue
        result.add(item)
        if isinstance(item, RootedElement):
            if item.kind == "plain":
                todo.extend(
                    RootedElement("plain", trace=t) for t in _collapse_once(item.trace)
                )
            elif item.kind == "timeout":
                for t in _collapse_once((item.refusal,) + item.trace):
                    if t and is_refusal(t[0]):
                        todo.append(RootedElement("timeout", refusal=t[0], trace=t[1:]))
        else:
            todo.extend(_collapse_once(item))
    return result


# ---------------------------------------------------------------------------
# the analyzer: explored state space with failure trace machinery on top


class FtAnalyzer:
    """Failure-trace queries over the completely explored state space of
    one or more root terms."""

    def __init__(self, terms, max_states: int = DEFAULT_MAX_STATES):
        self.terms = tuple(terms)
        self.lts = explore_many(self.terms, max_states)
        self.lts.require_complete()
        self.n = len(self.lts.states)
        self.succ = self.lts.succ
        self.stable = self.lts.stable
        self.initials = self.lts.state_initials
        self._preds: Optional[dict] = None

    def root(self, i: int = 0) -> int:
        return self.lts.roots[i]

    def _pred_map(self) -> dict:
        if self._preds is None:
            preds: dict = {}
            for src in range(self.n):
                for label, dsts in self.succ[src].items():
                    for dst in dsts:
                        preds.setdefault(label, {}).setdefault(dst, []).append(src)
            self._preds = preds
        return self._preds

    # -- membership (least fixed point by worklist saturation) ---------------

    def member(self, trace, root: Optional[int] = None) -> bool:
        """Does trace top belong to the failure trace set of the root?

        True facts are pairs (state, i) meaning the trace suffix from
        position i belongs to the state's set.  Saturation seeds every
        state at the end position and applies the derivation rules
        backwards until nothing new appears.
        """
        trace = check_trace(trace)
        root = self.root() if root is None else root
        n_pos = len(trace)
        preds = self._pred_map()
        tau_preds = preds.get(TAU, {})
        t_preds = preds.get(TIMEOUT, {})

        true: list = [set() for _ in range(n_pos + 1)]
        work = deque()

        def mark(state: int, pos: int):
            if state not in true[pos]:
                true[pos].add(state)
                work.append((state, pos))

        for s in range(self.n):
            mark(s, n_pos)

        def refusable(state: int, X: frozenset) -> bool:
            return self.stable[state] and not (self.initials[state] & X)

        while work:
            s2, j = work.popleft()
            # consume an action backwards
            if j > 0 and is_action(trace[j - 1]):
                for s in preds.get(trace[j - 1], {}).get(s2, ()):
                    mark(s, j - 1)
            # bridge tau backwards
            for s in tau_preds.get(s2, ()):
                mark(s, j)
            # enter a refusal at this very state
            if j > 0 and is_refusal(trace[j - 1]) and refusable(s2, trace[j - 1]):
                mark(s2, j - 1)
            # bridge a time-out while a refusal is pending
            if j < n_pos and is_refusal(trace[j]):
                X = trace[j]
                for s in t_preds.get(s2, ()):
                    if refusable(s, X):
                        mark(s, j)
            # a time-out ended by an action inside the pending refusal
            if (
                j > 0
                and is_refusal(trace[j - 1])
                and j < n_pos
                and is_action(trace[j])
                and trace[j] in trace[j - 1]
            ):
                for s in t_preds.get(s2, ()):
                    if refusable(s, trace[j - 1]):
                        mark(s, j - 1)

        return root in true[0]

    # -- simple reachability helpers -----------------------------------------

    def tau_reaches_stable(self, root: int) -> bool:
        seen = {root}
        queue = deque([root])
        while queue:
            s = queue.popleft()
            if self.stable[s]:
                return True
            for dst in self.succ[s].get(TAU, ()):
                if dst not in seen:
                    seen.add(dst)
                    queue.append(dst)
        return False

    def has_post_stable(self, root: Optional[int] = None) -> bool:
        root = self.root() if root is None else root
        return (not self.stable[root]) and self.tau_reaches_stable(root)


class _LruCache:
    """A small keep-most-recent cache; explored state spaces can be big,
    so only a bounded number stay alive."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.data: dict = {}

    def get(self, key):
        got = self.data.get(key)
        if got is not None:
            self.data[key] = self.data.pop(key)  # move to the fresh end
        return got

    def put(self, key, value):
        if len(self.data) >= self.capacity:
            self.data.pop(next(iter(self.data)))
        self.data[key] = value


_analyzer_cache = _LruCache(256)


def analyzer_for(terms, max_states: int = DEFAULT_MAX_STATES) -> FtAnalyzer:
    key = (tuple(terms), max_states)
    got = _analyzer_cache.get(key)
    if got is None:
        got = FtAnalyzer(key[0], max_states)
        _analyzer_cache.put(key, got)
    return got


def ft_member(term: Term, trace, max_states: int = DEFAULT_MAX_STATES) -> bool:
    """Is trace top a partial failure trace of the closed term?"""
    return analyzer_for((term,), max_states).member(trace)


# ---------------------------------------------------------------------------
# the refusal automaton, in an encoded internal form
#
# Automaton states are pairs of an LTS state and a mode: neutral,
# refusing(X) while a refusal symbol X has been read but not yet
# discharged, or forced(X) when the pending time-out must be ended by an
# action inside X.  Everything is packed into one integer per state.


class _FtNfa:
    def __init__(self, an: FtAnalyzer, sigma: tuple):
        if len(sigma) > 16:
            raise AlphabetTooLarge(
                f"{len(sigma)} actions would need {1 << len(sigma)} refusal symbols"
            )
        self.an = an
        self.sigma = tuple(sigma)
        self.bit = {a: 1 << i for i, a in enumerate(self.sigma)}
        self.n_refusals = 1 << len(self.sigma)
        self.M = 1 + 2 * self.n_refusals
        self.tau_succ = [an.succ[s].get(TAU, ()) for s in range(an.n)]
        self.t_succ = [an.succ[s].get(TIMEOUT, ()) for s in range(an.n)]
        self.stable = an.stable
        imask = []
        for s in range(an.n):
            inits = an.initials[s]
            if inits is None:
                imask.append(-1)
            else:
                imask.append(sum(self.bit[a] for a in inits if a in self.bit))
        self.imask = imask
        self._refusal_sets = [
            frozenset(a for i, a in enumerate(self.sigma) if mask & (1 << i))
            for mask in range(self.n_refusals)
        ]
        self._closure_cache: dict = {}

    def refusal_set(self, mask: int) -> frozenset:
        return self._refusal_sets[mask]

    def refusal_mask(self, X: frozenset) -> Optional[int]:
        mask = 0
        for a in X:
            b = self.bit.get(a)
            if b is None:
                return None
            mask |= b
        return mask

    # silent moves

    def closure(self, states: frozenset) -> frozenset:
        got = self._closure_cache.get(states)
        if got is not None:
            return got
        M = self.M
        R = self.n_refusals
        seen = set(states)
        stack = list(states)
        while stack:
            enc = stack.pop()
            s, mode = divmod(enc, M)
            new = []
            if mode == 0:
                for s2 in self.tau_succ[s]:
                    new.append(s2 * M)
            elif mode <= R:
                mask = mode - 1
                for s2 in self.tau_succ[s]:
                    new.append(s2 * M + mode)
                if self.stable[s] and not (self.imask[s] & mask):
                    new.append(s * M)  # discharge the refusal here
                    for s2 in self.t_succ[s]:
                        new.append(s2 * M + mode)  # keep refusing across t
                        new.append(s2 * M + 1 + R + mask)  # or require an action in X
            else:
                for s2 in self.tau_succ[s]:
                    new.append(s2 * M + mode)
            for enc2 in new:
                if enc2 not in seen:
                    seen.add(enc2)
                    stack.append(enc2)
        result = frozenset(seen)
        self._closure_cache[states] = result
        return result

    def init_config(self, root: int) -> frozenset:
        return self.closure(frozenset({root * self.M}))

    def accepting(self, config: frozenset) -> bool:
        M = self.M
        return any(enc % M == 0 for enc in config)

    def step_action(self, config: frozenset, a: str) -> frozenset:
        M = self.M
        R = self.n_refusals
        abit = self.bit.get(a, 0)
        targets = set()
        for enc in config:
            s, mode = divmod(enc, M)
            if mode == 0:
                for s2 in self.an.succ[s].get(a, ()):
                    targets.add(s2 * M)
            elif mode > R and abit and (mode - 1 - R) & abit:
                for s2 in self.an.succ[s].get(a, ()):
                    targets.add(s2 * M)
        if not targets:
            return frozenset()
        return self.closure(frozenset(targets))

    def step_refusal(self, config: frozenset, mask: int) -> frozenset:
        M = self.M
        targets = frozenset(
            enc + 1 + mask for enc in config if enc % M == 0
        )
        if not targets:
            return frozenset()
        return self.closure(targets)

    def step(self, config: frozenset, symbol) -> frozenset:
        if isinstance(symbol, str):
            return self.step_action(config, symbol)
        mask = self.refusal_mask(symbol)
        if mask is None:
            return frozenset()
        return self.step_refusal(config, mask)

    def accepts(self, root: int, trace) -> bool:
        config = self.init_config(root)
        for symbol in trace:
            config = self.step(config, symbol)
            if not config:
                return False
        return self.accepting(config)

    # bounded language enumeration; a walk over the prefix tree, so the
    # cost is proportional to the number of traces produced

    def traces(self, config: frozenset, k: int) -> set:
        out = set()
        stack = [(config, ())]
        while stack:
            config, word = stack.pop()
            if self.accepting(config):
                out.add(word)
            if len(word) >= k:
                continue
            for a in self.sigma:
                c2 = self.step_action(config, a)
                if c2:
                    stack.append((c2, word + (a,)))
            for mask in range(self.n_refusals):
                c2 = self.step_refusal(config, mask)
                if c2:
                    stack.append((c2, word + (self.refusal_set(mask),)))
        return out

    def projected(self, config: frozenset, budget: int) -> set:
        """Action sequences of the traces of length <= budget.

        Only the empty set and singletons are tried as refusal sets: any
        trace shrinks to one of that shape with the same length and
        projection, so nothing is missed.
        """
        masks = [0] + [1 << i for i in range(len(self.sigma))]
        out = set()
        best: dict = {}
        stack = [(config, (), budget)]
        while stack:
            config, word, left = stack.pop()
            key = (config, word)
            if best.get(key, -1) >= left:
                continue
            best[key] = left
            if self.accepting(config):
                out.add(word)
            if left <= 0:
                continue
            for a in self.sigma:
                c2 = self.step_action(config, a)
                if c2:
                    stack.append((c2, word + (a,), left - 1))
            for mask in masks:
                c2 = self.step_refusal(config, mask)
                if c2:
                    stack.append((c2, word, left - 1))
        return out


_nfa_cache = _LruCache(64)


def _nfa_for(an: FtAnalyzer, sigma: tuple) -> _FtNfa:
    key = (an, sigma)
    got = _nfa_cache.get(key)
    if got is None:
        got = _FtNfa(an, sigma)
        _nfa_cache.put(key, got)
    return got


def _sigma_for(terms, sigma) -> tuple:
    if sigma is not None:
        out = tuple(sorted(set(sigma)))
    else:
        acts = set()
        for t in terms:
            acts |= sort(t)
        out = tuple(sorted(acts))
    if any(not is_visible(a) for a in out):
        raise ValueError("the working alphabet contains visible actions only")
    return out


def ft_enumerate(
    term: Term,
    max_len: int,
    sigma=None,
    max_states: int = DEFAULT_MAX_STATES,
) -> set:
    """All partial failure traces of length at most max_len whose refusal
    sets only mention actions in sigma (default: the sort of the term)."""
    an = analyzer_for((term,), max_states)
    nfa = _nfa_for(an, _sigma_for((term,), sigma))
    return set(nfa.traces(nfa.init_config(an.root()), max_len))


def rooted_elements(
    term: Term,
    max_len: int,
    sigma=None,
    max_states: int = DEFAULT_MAX_STATES,
) -> set:
    """The bounded rooted trace set of a term.

    Plain traces come from ft_enumerate.  A timeout element t X sigma is
    counted with length |X sigma|, so it appears iff |X sigma| <= max_len.
    """
    an = analyzer_for((term,), max_states)
    nfa = _nfa_for(an, _sigma_for((term,), sigma))
    return _rooted_from(an, nfa, an.root(), max_len)


def _rooted_from(an: FtAnalyzer, nfa: _FtNfa, root: int, max_len: int) -> set:
    out = set()
    for trace in nfa.traces(nfa.init_config(root), max_len):
        out.add(RootedElement("plain", trace=trace))
    if an.stable[root]:
        out.add(ST)
        imask = nfa.imask[root]
        for mask in range(nfa.n_refusals):
            if imask & mask:
                continue
            X = nfa.refusal_set(mask)
            for s2 in nfa.t_succ[root]:
                config = nfa.step_refusal(nfa.init_config(s2), mask)
                if not config:
                    continue
                for suffix in nfa.traces(config, max_len - 1):
                    out.add(RootedElement("timeout", refusal=X, trace=suffix))
    if an.has_post_stable(root):
        out.add(POST_ST)
    return out


# ---------------------------------------------------------------------------
# language comparison on the automaton level (exact mode)


@dataclass(frozen=True)
class _Lang:
    init: frozenset
    step: Callable
    accepting: Callable


def _fft_lang(nfa: _FtNfa, root: int) -> _Lang:
    return _Lang(nfa.init_config(root), nfa.step, nfa.accepting)


_TPART_INIT = frozenset({-1})


def _tpart_lang(an: FtAnalyzer, nfa: _FtNfa, root: int) -> _Lang:
    """The language {X sigma | t X sigma is a rooted element of the root}."""

    def step(config, symbol):
        if -1 in config:
            if isinstance(symbol, str) or not an.stable[root]:
                return frozenset()
            mask = nfa.refusal_mask(symbol)
            if mask is None or (nfa.imask[root] & mask):
                return frozenset()
            targets = set()
            for s2 in nfa.t_succ[root]:
                targets |= nfa.step_refusal(nfa.init_config(s2), mask)
            return frozenset(targets)
        return nfa.step(config, symbol)

    def accepting(config):
        if -1 in config:
            return False
        return nfa.accepting(config)

    return _Lang(_TPART_INIT, step, accepting)


def _all_symbols(nfa: _FtNfa) -> list:
    """Actions first, then refusal sets by size and name, so that a
    breadth-first difference search returns the least witness in the
    trace ordering."""
    symbols = list(nfa.sigma)
    symbols.extend(
        sorted(
            (nfa.refusal_set(m) for m in range(nfa.n_refusals)),
            key=lambda X: (len(X), tuple(sorted(X))),
        )
    )
    return symbols


def _lang_equal(a: _Lang, b: _Lang, symbols, max_len=None) -> tuple:
    """(True, None) or (False, (witness word, side)) where side names the
    language owning the witness ("left" or "right").  With max_len the
    comparison only covers words up to that length."""
    seen = set()
    queue = deque([(a.init, b.init, ())])
    while queue:
        ca, cb, word = queue.popleft()
        if (ca, cb) in seen:
            continue
        seen.add((ca, cb))
        acc_a, acc_b = a.accepting(ca), b.accepting(cb)
        if acc_a != acc_b:
            return False, (word, "left" if acc_a else "right")
        if not ca and not cb:
            continue
        if max_len is not None and len(word) >= max_len:
            continue
        for symbol in symbols:
            na, nb = a.step(ca, symbol), b.step(cb, symbol)
            if (na or nb) and (na, nb) not in seen:
                queue.append((na, nb, word + (symbol,)))
    return True, None


def _lang_includes(big: _Lang, small: _Lang, symbols, max_len=None) -> tuple:
    """Is the small language a subset of the big one?  Returns
    (True, None) or (False, witness word in small only)."""
    seen = set()
    queue = deque([(big.init, small.init, ())])
    while queue:
        cb, cs, word = queue.popleft()
        if (cb, cs) in seen:
            continue
        seen.add((cb, cs))
        if small.accepting(cs) and not big.accepting(cb):
            return False, word
        if not cs:
            continue
        if max_len is not None and len(word) >= max_len:
            continue
        for symbol in symbols:
            nb, ns = big.step(cb, symbol), small.step(cs, symbol)
            if ns and (nb, ns) not in seen:
                queue.append((nb, ns, word + (symbol,)))
    return True, None


# ---------------------------------------------------------------------------
# the public relations


@dataclass(frozen=True)
class Verdict:
    """Outcome of an equivalence or preorder query.

    holds is the verdict; witness (with the side it belongs to) explains a
    negative one.  depth is the enumeration bound of a bounded check, None
    for an exact one.
    """

    holds: bool
    witness: object = None
    side: Optional[str] = None
    depth: Optional[int] = None

    def __bool__(self) -> bool:
        return self.holds

    def describe(self) -> str:
        if self.holds:
            scope = "exactly" if self.depth is None else f"up to depth {self.depth}"
            return f"holds {scope}"
        w = self.witness
        if isinstance(w, RootedElement):
            text = format_rooted(w)
        elif isinstance(w, tuple):
            text = format_trace(w)
        else:
            text = str(w)
        return f"fails, witness ({self.side}): {text}"


DEFAULT_DEPTH = 5


def _prepare(left, right, sigma, max_states, exact=False):
    sigma = _sigma_for((left, right), sigma)
    if exact and len(sigma) > MAX_EXACT_ALPHABET:
        raise AlphabetTooLarge(
            f"exact comparison over {len(sigma)} actions; restrict the alphabet"
        )
    an = analyzer_for((left, right), max_states)
    return an, _nfa_for(an, sigma)


def ft_equiv(
    left: Term,
    right: Term,
    depth: int = DEFAULT_DEPTH,
    exact: bool = False,
    sigma=None,
    max_states: int = DEFAULT_MAX_STATES,
) -> Verdict:
    """Do the two terms have the same partial failure traces?

    Bounded mode decides equality of the enumerations up to the given
    depth; the search itself is breadth-first over automaton configuration
    pairs, so the sets are never materialised.
    """
    an, nfa = _prepare(left, right, sigma, max_states, exact)
    cap = None if exact else depth
    ok, info = _lang_equal(
        _fft_lang(nfa, an.root(0)), _fft_lang(nfa, an.root(1)), _all_symbols(nfa), cap
    )
    if ok:
        return Verdict(True, depth=cap)
    word, side = info
    return _validated(an, word, side, cap)


def _validated(an: FtAnalyzer, trace, side: str, depth) -> Verdict:
    in_left = an.member(trace, an.root(0))
    in_right = an.member(trace, an.root(1))
    if in_left == in_right or (side == "left") != in_left:
        raise AssertionError(
            f"witness failed revalidation: {format_trace(trace)} "
            f"left={in_left} right={in_right}"
        )
    return Verdict(False, witness=trace, side=side, depth=depth)


def ft_preorder(
    left: Term,
    right: Term,
    depth: int = DEFAULT_DEPTH,
    exact: bool = False,
    sigma=None,
    max_states: int = DEFAULT_MAX_STATES,
) -> Verdict:
    """Does the left term's failure trace set contain the right one's?

    This is the orientation in which "left refines right" means the left
    set is the larger one.
    """
    an, nfa = _prepare(left, right, sigma, max_states, exact)
    cap = None if exact else depth
    ok, word = _lang_includes(
        _fft_lang(nfa, an.root(0)), _fft_lang(nfa, an.root(1)), _all_symbols(nfa), cap
    )
    if ok:
        return Verdict(True, depth=cap)
    return _validated(an, word, "right", cap)


def _rooted_bits(an: FtAnalyzer, root: int) -> tuple:
    return (an.stable[root], an.has_post_stable(root))


def rft_equiv(
    left: Term,
    right: Term,
    depth: int = DEFAULT_DEPTH,
    exact: bool = False,
    sigma=None,
    max_states: int = DEFAULT_MAX_STATES,
) -> Verdict:
    """Rooted failure trace equivalence."""
    an, nfa = _prepare(left, right, sigma, max_states, exact)
    return _rft_compare(an, nfa, inclusion=False, cap=None if exact else depth)


def rft_preorder(
    left: Term,
    right: Term,
    depth: int = DEFAULT_DEPTH,
    exact: bool = False,
    sigma=None,
    max_states: int = DEFAULT_MAX_STATES,
) -> Verdict:
    """Does the left term's rooted set contain the right one's?"""
    an, nfa = _prepare(left, right, sigma, max_states, exact)
    return _rft_compare(an, nfa, inclusion=True, cap=None if exact else depth)


def _rooted_holds(an: FtAnalyzer, nfa: _FtNfa, root: int, el: RootedElement) -> bool:
    if el.kind == "stable":
        return an.stable[root]
    if el.kind == "post-stable":
        return an.has_post_stable(root)
    if el.kind == "plain":
        return an.member(el.trace, root)
    if not an.stable[root]:
        return False
    mask = nfa.refusal_mask(el.refusal)
    if mask is None or (nfa.imask[root] & mask):
        return False
    seq = (el.refusal,) + el.trace
    for s2 in nfa.t_succ[root]:
        if nfa.accepts(s2, seq):
            return True
    return False


def _validated_rooted(an, nfa, el, side, depth) -> Verdict:
    in_left = _rooted_holds(an, nfa, an.root(0), el)
    in_right = _rooted_holds(an, nfa, an.root(1), el)
    if in_left == in_right or (side == "left") != in_left:
        raise AssertionError(f"witness failed revalidation: {format_rooted(el)}")
    return Verdict(False, witness=el, side=side, depth=depth)


def _rft_compare(an: FtAnalyzer, nfa: _FtNfa, inclusion: bool, cap) -> Verdict:
    r0, r1 = an.root(0), an.root(1)
    symbols = _all_symbols(nfa)
    bits0 = _rooted_bits(an, r0)
    bits1 = _rooted_bits(an, r1)
    for (b0, b1, el) in ((bits0[0], bits1[0], ST), (bits0[1], bits1[1], POST_ST)):
        if b0 != b1 and (not inclusion or (b1 and not b0)):
            side = "left" if b0 else "right"
            return Verdict(False, witness=el, side=side, depth=cap)
    compare = _lang_includes if inclusion else _lang_equal
    ok, info = compare(_fft_lang(nfa, r0), _fft_lang(nfa, r1), symbols, cap)
    if not ok:
        word = info if inclusion else info[0]
        side = "right" if inclusion else info[1]
        return _validated(an, word, side, cap)
    ok, info = compare(
        _tpart_lang(an, nfa, r0), _tpart_lang(an, nfa, r1), symbols, cap
    )
    if not ok:
        word = info if inclusion else info[0]
        side = "right" if inclusion else info[1]
        el = RootedElement("timeout", refusal=word[0], trace=tuple(word[1:]))
        return _validated_rooted(an, nfa, el, side, cap)
    return Verdict(True, depth=cap)


def trace_equiv(
    left: Term,
    right: Term,
    depth: int = DEFAULT_DEPTH,
    sigma=None,
    max_states: int = DEFAULT_MAX_STATES,
) -> Verdict:
    """Equality of the action sequences obtained by dropping refusal sets
    from the bounded failure trace enumerations."""
    an, nfa = _prepare(left, right, sigma, max_states)
    t_left = nfa.projected(nfa.init_config(an.root(0)), depth)
    t_right = nfa.projected(nfa.init_config(an.root(1)), depth)
    if t_left == t_right:
        return Verdict(True, depth=depth)
    candidates = [(w, "left") for w in t_left - t_right]
    candidates += [(w, "right") for w in t_right - t_left]
    word, side = min(candidates, key=lambda c: (trace_sort_key(c[0]), c[1]))
    return Verdict(False, witness=word, side=side, depth=depth)


# ---------------------------------------------------------------------------
# the materialised refusal automaton


class AlphabetTooLarge(RuntimeError):
    pass


MAX_EXACT_ALPHABET = 6


@dataclass
class RefusalAutomaton:
    """A finite automaton over actions and refusal-set symbols whose
    language is the failure trace set of a process, restricted to refusal
    sets inside sigma.

    states pairs an LTS state index with a mode tag; silent lists
    epsilon transitions; letters maps symbols to labelled transitions.
    Accepting states are exactly those in neutral mode.
    """

    sigma: tuple
    states: tuple  # (lts state, mode) with mode "neutral" | ("refusing", X) | ("forced", X)
    initial: int
    silent: tuple  # (src, dst)
    letters: dict  # symbol -> tuple of (src, dst)
    accepting: frozenset

    def _closure(self, config: set) -> frozenset:
        by_src: dict = {}
        for src, dst in self.silent:
            by_src.setdefault(src, []).append(dst)
        seen = set(config)
        stack = list(config)
        while stack:
            s = stack.pop()
            for dst in by_src.get(s, ()):
                if dst not in seen:
                    seen.add(dst)
                    stack.append(dst)
        return frozenset(seen)

    def accepts(self, word) -> bool:
        word = check_trace(word)
        config = self._closure({self.initial})
        for symbol in word:
            if is_refusal(symbol) and not symbol <= set(self.sigma):
                return False
            moves = self.letters.get(symbol, ())
            config = self._closure({dst for src, dst in moves if src in config})
            if not config:
                return False
        return bool(config & self.accepting)

    def language(self, max_len: int) -> set:
        out = set()
        start = self._closure({self.initial})
        symbols = list(self.sigma) + [
            frozenset(X) for X in _subsets(self.sigma)
        ]
        stack = [(start, ())]
        while stack:
            config, word = stack.pop()
            if config & self.accepting:
                out.add(word)
            if len(word) >= max_len:
                continue
            for symbol in symbols:
                moves = self.letters.get(symbol, ())
                nxt = self._closure({dst for src, dst in moves if src in config})
                if nxt:
                    stack.append((nxt, word + (symbol,)))
        return out


def _subsets(items):
    items = list(items)
    for mask in range(1 << len(items)):
        yield frozenset(a for i, a in enumerate(items) if mask & (1 << i))


def build_refusal_nfa(
    term: Term, sigma=None, max_states: int = DEFAULT_MAX_STATES
) -> RefusalAutomaton:
    """Compile a process into its refusal automaton over sigma."""
    sigma = _sigma_for((term,), sigma)
    if len(sigma) > MAX_EXACT_ALPHABET:
        raise AlphabetTooLarge(
            f"{len(sigma)} actions would need {1 << len(sigma)} refusal symbols"
        )
    an = analyzer_for((term,), max_states)
    nfa = _nfa_for(an, sigma)
    M, R = nfa.M, nfa.n_refusals

    def describe(enc: int):
        s, mode = divmod(enc, M)
        if mode == 0:
            return (s, "neutral")
        if mode <= R:
            return (s, ("refusing", nfa.refusal_set(mode - 1)))
        return (s, ("forced", nfa.refusal_set(mode - 1 - R)))

    # reachable encoded states through single silent or letter moves
    def silent_succ(enc: int):
        s, mode = divmod(enc, M)
        out = []
        if mode == 0:
            out += [s2 * M for s2 in nfa.tau_succ[s]]
        elif mode <= R:
            mask = mode - 1
            out += [s2 * M + mode for s2 in nfa.tau_succ[s]]
            if nfa.stable[s] and not (nfa.imask[s] & mask):
                out.append(s * M)
                for s2 in nfa.t_succ[s]:
                    out.append(s2 * M + mode)
                    out.append(s2 * M + 1 + R + mask)
        else:
            out += [s2 * M + mode for s2 in nfa.tau_succ[s]]
        return out

    def letter_succ(enc: int):
        s, mode = divmod(enc, M)
        out = []
        if mode == 0:
            for a in sigma:
                for s2 in an.succ[s].get(a, ()):
                    out.append((a, s2 * M))
            for mask in range(R):
                out.append((nfa.refusal_set(mask), s * M + 1 + mask))
        elif mode > R:
            mask = mode - 1 - R
            for a in sigma:
                if nfa.bit[a] & mask:
                    for s2 in an.succ[s].get(a, ()):
                        out.append((a, s2 * M))
        return out

    start = an.root() * M
    seen = {start}
    queue = deque([start])
    silent = []
    letters: dict = {}
    while queue:
        enc = queue.popleft()
        for enc2 in silent_succ(enc):
            silent.append((enc, enc2))
            if enc2 not in seen:
                seen.add(enc2)
                queue.append(enc2)
        for symbol, enc2 in letter_succ(enc):
            letters.setdefault(symbol, []).append((enc, enc2))
            if enc2 not in seen:
                seen.add(enc2)
                queue.append(enc2)

    order = sorted(seen)
    renum = {enc: i for i, enc in enumerate(order)}
    return RefusalAutomaton(
        sigma=sigma,
        states=tuple(describe(enc) for enc in order),
        initial=renum[start],
        silent=tuple(sorted((renum[a], renum[b]) for a, b in silent)),
        letters={
            symbol: tuple(sorted((renum[a], renum[b]) for a, b in moves))
            for symbol, moves in letters.items()
        },
        accepting=frozenset(renum[enc] for enc in order if enc % M == 0),
    )
