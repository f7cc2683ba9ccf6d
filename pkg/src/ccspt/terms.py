"""Syntax of CCSP_t.

Process terms, recursive specifications, a parser and printer for the
concrete syntax, substitution, and the static checks: free variables,
guardedness, time-guardedness and sort.

Action labels are plain strings.  Visible actions are lowercase
identifiers drawn from a countable set A; the silent action and the
time-out are the reserved labels ``tau`` and ``t``, which are not in A.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Iterator, Optional

TAU = "tau"
TIMEOUT = "t"

#: names that can never be used for visible actions or process variables
RESERVED = frozenset({"tau", "t", "top", "hide", "rename", "in"})


def is_visible(label: str) -> bool:
    """True for ordinary action labels, false for tau and the time-out."""
    return label != TAU and label != TIMEOUT


class Term:
    """Base class of process terms.  All terms are immutable and hashable."""

    __slots__ = ()

    def __str__(self) -> str:
        return format_term(self)


@dataclass(frozen=True, slots=True)
class Nil(Term):
    """The inactive process 0."""


@dataclass(frozen=True, slots=True)
class Prefix(Term):
    action: str
    body: Term


@dataclass(frozen=True, slots=True)
class Choice(Term):
    left: Term
    right: Term


@dataclass(frozen=True, slots=True)
class Par(Term):
    """Parallel composition synchronising on the visible actions in sync."""

    sync: frozenset
    left: Term
    right: Term

    def __post_init__(self):
        sync = frozenset(self.sync)
        if any(not is_visible(a) for a in sync):
            raise ValueError("synchronisation sets contain visible actions only")
        object.__setattr__(self, "sync", sync)


@dataclass(frozen=True, slots=True)
class Hide(Term):
    """Abstraction: actions in hidden become tau."""

    hidden: frozenset
    body: Term

    def __post_init__(self):
        hidden = frozenset(self.hidden)
        if any(not is_visible(a) for a in hidden):
            raise ValueError("hidden sets contain visible actions only")
        object.__setattr__(self, "hidden", hidden)


@dataclass(frozen=True, slots=True)
class Rename(Term):
    """Relational renaming; rel is a finite set of (from, to) pairs.

    An action with no pair in rel is blocked, tau and t are preserved.
    """

    rel: frozenset
    body: Term

    def __post_init__(self):
        rel = frozenset((a, b) for a, b in self.rel)
        if any(not (is_visible(a) and is_visible(b)) for a, b in rel):
            raise ValueError("renamings relate visible actions only")
        object.__setattr__(self, "rel", rel)


@dataclass(frozen=True, slots=True)
class Var(Term):
    name: str


@dataclass(frozen=True, slots=True)
class RecSpec:
    """A finite recursive specification {Y = S_Y | Y in V_S}.

    Stored as a name-sorted tuple of (variable, right-hand side) pairs so
    that specifications compare and hash structurally.
    """

    equations: tuple

    def __post_init__(self):
        eqs = tuple(sorted(self.equations))
        seen = set()
        for name, rhs in eqs:
            if name in seen:
                raise ValueError(f"duplicate equation for {name}")
            if not isinstance(rhs, Term):
                raise TypeError("right-hand sides must be terms")
            seen.add(name)
        object.__setattr__(self, "equations", eqs)

    @classmethod
    def of(cls, mapping=None, **eqs) -> "RecSpec":
        items = dict(mapping or {})
        items.update(eqs)
        return cls(tuple(items.items()))

    @property
    def names(self) -> frozenset:
        return frozenset(name for name, _ in self.equations)

    def get(self, name: str) -> Term:
        for n, rhs in self.equations:
            if n == name:
                return rhs
        raise KeyError(name)

    def items(self):
        return self.equations

    def __contains__(self, name: str) -> bool:
        return any(n == name for n, _ in self.equations)


@dataclass(frozen=True, slots=True)
class Rec(Term):
    """<X|S>: the X-component of the recursive specification S."""

    name: str
    spec: RecSpec

    def __post_init__(self):
        if self.name not in self.spec:
            raise ValueError(f"{self.name} is not defined by the specification")


NIL = Nil()


def sum_terms(terms: Iterable[Term]) -> Term:
    """Fold a finite list of summands into nested binary choices (0 if empty)."""
    terms = list(terms)
    if not terms:
        return NIL
    out = terms[0]
    for t in terms[1:]:
        out = Choice(out, t)
    return out


def prefix_chain(actions: Iterable[str], tail: Term = NIL) -> Term:
    """a1.a2. ... .tail"""
    out = tail
    for a in reversed(list(actions)):
        out = Prefix(a, out)
    return out


# ---------------------------------------------------------------------------
# binding structure


@lru_cache(maxsize=None)
def free_vars(term: Term) -> frozenset:
    if isinstance(term, Var):
        return frozenset({term.name})
    if isinstance(term, Nil):
        return frozenset()
    if isinstance(term, Prefix):
        return free_vars(term.body)
    if isinstance(term, (Hide, Rename)):
        return free_vars(term.body)
    if isinstance(term, (Choice, Par)):
        return free_vars(term.left) | free_vars(term.right)
    if isinstance(term, Rec):
        inner = frozenset()
        for _, rhs in term.spec.items():
            inner |= free_vars(rhs)
        return inner - term.spec.names
    raise TypeError(f"not a term: {term!r}")


def is_closed(term: Term) -> bool:
    return not free_vars(term)


def _spec_free_vars(spec: RecSpec) -> frozenset:
    fv = frozenset()
    for _, rhs in spec.items():
        fv |= free_vars(rhs)
    return fv - spec.names


def substitute(term: Term, spec: RecSpec) -> Term:
    """<term|spec>: replace each free occurrence of a specification
    variable Y by <Y|spec>.

    Substitution keeps out of the scope of inner Rec binders that shadow a
    variable.  Capture (an inner binder catching a variable free in the
    replacement) is rejected; the parser rules it out by refusing rebinding.
    """
    names = spec.names
    repl_fv = _spec_free_vars(spec)

    def go(t: Term, shadowed: frozenset) -> Term:
        if isinstance(t, Var):
            if t.name in names and t.name not in shadowed:
                return Rec(t.name, spec)
            return t
        if isinstance(t, Nil):
            return t
        if not (free_vars(t) & (names - shadowed)):
            return t
        if isinstance(t, Prefix):
            return Prefix(t.action, go(t.body, shadowed))
        if isinstance(t, Choice):
            return Choice(go(t.left, shadowed), go(t.right, shadowed))
        if isinstance(t, Par):
            return Par(t.sync, go(t.left, shadowed), go(t.right, shadowed))
        if isinstance(t, Hide):
            return Hide(t.hidden, go(t.body, shadowed))
        if isinstance(t, Rename):
            return Rename(t.rel, go(t.body, shadowed))
        if isinstance(t, Rec):
            binders = t.spec.names
            if repl_fv & binders:
                raise ValueError(
                    f"substitution would capture {sorted(repl_fv & binders)}"
                )
            inner_shadowed = shadowed | binders
            new_eqs = tuple(
                (y, go(rhs, inner_shadowed)) for y, rhs in t.spec.items()
            )
            return Rec(t.name, RecSpec(new_eqs))
        raise TypeError(f"not a term: {t!r}")

    return go(term, frozenset())


# ---------------------------------------------------------------------------
# guardedness


def _unguarded_vars(term: Term, time_only: bool) -> frozenset:
    # variables occurring free outside every guarding prefix; a guarding
    # prefix is any alpha.__ normally, only t.__ in time_only mode
    if isinstance(term, Var):
        return frozenset({term.name})
    if isinstance(term, Nil):
        return frozenset()
    if isinstance(term, Prefix):
        if not time_only or term.action == TIMEOUT:
            return frozenset()
        return _unguarded_vars(term.body, time_only)
    if isinstance(term, (Hide, Rename)):
        return _unguarded_vars(term.body, time_only)
    if isinstance(term, (Choice, Par)):
        return _unguarded_vars(term.left, time_only) | _unguarded_vars(
            term.right, time_only
        )
    if isinstance(term, Rec):
        out = frozenset()
        for _, rhs in term.spec.items():
            out |= _unguarded_vars(rhs, time_only)
        return out - term.spec.names
    raise TypeError(f"not a term: {term!r}")


def _acyclic(edges: dict) -> bool:
    WHITE, GREY, BLACK = 0, 1, 2
    colour = {v: WHITE for v in edges}

    def visit(v) -> bool:
        colour[v] = GREY
        for w in edges.get(v, ()):
            if w not in colour:
                continue
            if colour[w] == GREY or (colour[w] == WHITE and not visit(w)):
                return False
        colour[v] = BLACK
        return True

    for v in edges:
        if colour[v] == WHITE and not visit(v):
            return False
    return True


def is_guarded(spec: RecSpec) -> bool:
    """No cycle of variables reachable through unguarded occurrences."""
    names = spec.names
    edges = {
        x: _unguarded_vars(rhs, time_only=False) & names for x, rhs in spec.items()
    }
    return _acyclic(edges)


def is_time_guarded(spec: RecSpec) -> bool:
    """Like is_guarded, but only a time-out prefix counts as a guard."""
    names = spec.names
    edges = {
        x: _unguarded_vars(rhs, time_only=True) & names for x, rhs in spec.items()
    }
    return _acyclic(edges)


# ---------------------------------------------------------------------------
# sort


@lru_cache(maxsize=None)
def sort(term: Term) -> frozenset:
    """Syntactic over-approximation of the visible actions a closed term
    (or anything reachable from it) can ever perform."""
    if isinstance(term, (Nil, Var)):
        return frozenset()
    if isinstance(term, Prefix):
        base = sort(term.body)
        return base | {term.action} if is_visible(term.action) else base
    if isinstance(term, (Choice, Par)):
        return sort(term.left) | sort(term.right)
    if isinstance(term, Hide):
        return sort(term.body) - term.hidden
    if isinstance(term, Rename):
        inner = sort(term.body)
        return frozenset(b for a, b in term.rel if a in inner)
    if isinstance(term, Rec):
        out = frozenset()
        for _, rhs in term.spec.items():
            out |= sort(rhs)
        return out
    raise TypeError(f"not a term: {term!r}")


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<parl>\|\[)
  | (?P<parr>\]\|)
  | (?P<arrow>->)
  | (?P<punct>[=;+.(){}<>|,])
  | (?P<zero>0)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
    """,
    re.VERBOSE,
)


@dataclass(frozen=True, slots=True)
class _Token:
    kind: str
    text: str
    line: int
    col: int


class ParseError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


def _tokenize(text: str) -> list:
    tokens = []
    line, col, pos = 1, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        value = m.group()
        if kind == "nl":
            line += 1
            col = 1
        elif kind in ("ws", "comment"):
            col += len(value)
        else:
            tokens.append(_Token(kind, value, line, col))
            col += len(value)
        pos = m.end()
    tokens.append(_Token("eof", "", line, col))
    return tokens


def _is_variable_name(name: str) -> bool:
    return name[0].isupper()


def _is_action_name(name: str) -> bool:
    return name[0].islower() or name[0] == "_"


class _Parser:
    def __init__(self, tokens: list, bound: frozenset = frozenset()):
        self.tokens = tokens
        self.pos = 0
        self.bound = set(bound)

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, message: str, tok: Optional[_Token] = None):
        tok = tok or self.peek()
        raise ParseError(message, tok.line, tok.col)

    def expect(self, text: str) -> _Token:
        tok = self.peek()
        if tok.text != text:
            shown = tok.text or "end of input"
            self.error(f"expected {text!r}, found {shown!r}")
        return self.next()

    def at(self, text: str) -> bool:
        return self.peek().text == text

    # expr := sum ("|[" names "]|" sum)*
    def parse_expr(self) -> Term:
        left = self.parse_sum()
        while self.peek().kind == "parl":
            self.next()
            sync = self.parse_name_set()
            if self.peek().kind != "parr":
                self.error("expected ']|'")
            self.next()
            right = self.parse_sum()
            left = Par(sync, left, right)
        return left

    # sum := prefix ("+" prefix)*
    def parse_sum(self) -> Term:
        left = self.parse_prefix()
        while self.at("+"):
            self.next()
            left = Choice(left, self.parse_prefix())
        return left

    def parse_prefix(self) -> Term:
        tok = self.peek()
        if tok.kind == "zero":
            self.next()
            return NIL
        if tok.text == "(":
            self.next()
            inner = self.parse_expr()
            self.expect(")")
            return inner
        if tok.text == "<":
            return self.parse_rec()
        if tok.kind != "name":
            shown = tok.text or "end of input"
            self.error(f"expected a process, found {shown!r}")
        if tok.text == "hide":
            self.next()
            self.expect("{")
            hidden = self.parse_name_set()
            self.expect("}")
            self.expect("in")
            return Hide(hidden, self.parse_prefix())
        if tok.text == "rename":
            self.next()
            self.expect("{")
            rel = self.parse_pair_set()
            self.expect("}")
            self.expect("in")
            return Rename(rel, self.parse_prefix())
        if tok.text == "top" or tok.text == "in":
            self.error(f"{tok.text!r} is reserved")
        if tok.text in (TAU, TIMEOUT) or _is_action_name(tok.text):
            self.next()
            action = tok.text
            if self.at("."):
                self.next()
                return Prefix(action, self.parse_prefix())
            return Prefix(action, NIL)  # a abbreviates a.0
        # uppercase: process variable
        self.next()
        if self.at("."):
            self.error(f"process variable {tok.text} cannot be used as a prefix")
        return Var(tok.text)

    # "<" NAME "|" NAME "=" expr ("," NAME "=" expr)* ">"
    def parse_rec(self) -> Term:
        self.expect("<")
        head = self.peek()
        if head.kind != "name" or not _is_variable_name(head.text):
            self.error("expected a process variable")
        self.next()
        self.expect("|")
        eqs = []
        names = []
        while True:
            var = self.peek()
            if var.kind != "name" or not _is_variable_name(var.text):
                self.error("expected a process variable")
            if var.text in self.bound or var.text in names:
                self.error(f"{var.text} is already bound here", var)
            self.next()
            names.append(var.text)
            self.expect("=")
            # right-hand sides are parsed after all binders are known,
            # so remember the token span for a second pass
            start = self.pos
            depth = 0
            while True:
                tok = self.peek()
                if tok.kind == "eof":
                    self.error("unterminated '<'")
                if tok.text in "(<{":
                    depth += 1
                elif tok.text in ")>}":
                    if depth == 0 and tok.text == ">":
                        break
                    depth -= 1
                elif tok.text == "," and depth == 0:
                    break
                self.next()
            eqs.append((var.text, start, self.pos))
            if self.at(","):
                self.next()
                continue
            break
        self.expect(">")
        if head.text not in names:
            self.error(f"{head.text} is not defined by this specification", head)
        inner_bound = frozenset(self.bound) | frozenset(names)
        parsed = []
        for name, start, stop in eqs:
            sub = _Parser(self.tokens[start:stop] + [self.tokens[-1]], inner_bound)
            rhs = sub.parse_expr()
            if sub.peek().kind != "eof":
                sub.error("trailing input in equation")
            parsed.append((name, rhs))
        return Rec(head.text, RecSpec(tuple(parsed)))

    def parse_name_set(self) -> frozenset:
        names = []
        if self.peek().kind == "name" and self.peek().text not in ("in",):
            names.append(self.parse_action_name())
            while self.at(","):
                self.next()
                names.append(self.parse_action_name())
        return frozenset(names)

    def parse_pair_set(self) -> frozenset:
        pairs = []
        if self.peek().kind == "name":
            pairs.append(self.parse_pair())
            while self.at(","):
                self.next()
                pairs.append(self.parse_pair())
        return frozenset(pairs)

    def parse_pair(self):
        a = self.parse_action_name()
        if self.peek().kind != "arrow":
            self.error("expected '->'")
        self.next()
        b = self.parse_action_name()
        return (a, b)

    def parse_action_name(self) -> str:
        tok = self.peek()
        if tok.kind != "name" or not _is_action_name(tok.text):
            self.error("expected an action name")
        if tok.text in RESERVED:
            self.error(f"{tok.text!r} is reserved and cannot name an action")
        self.next()
        return tok.text


def parse_term(text: str, bound: Iterable = ()) -> Term:
    """Parse a single process expression.

    Variables listed in bound (typically the names of an enclosing
    specification) may not be rebound by an inline <...> binder.
    """
    parser = _Parser(_tokenize(text), frozenset(bound))
    term = parser.parse_expr()
    if parser.peek().kind != "eof":
        parser.error("trailing input")
    return term


def parse_spec(text: str) -> RecSpec:
    """Parse a file of equations ``Name = expr;`` into one specification."""
    tokens = _tokenize(text)
    # split on top-level semicolons
    chunks = []
    start = 0
    for i, tok in enumerate(tokens):
        if tok.text == ";":
            chunks.append(tokens[start:i])
            start = i + 1
    if start < len(tokens) - 1:
        tail = tokens[start:-1]
        if tail:
            raise ParseError("missing ';' after equation", tail[0].line, tail[0].col)
    eof = tokens[-1]
    names = []
    for chunk in chunks:
        if len(chunk) < 2 or chunk[0].kind != "name" or chunk[1].text != "=":
            tok = chunk[0] if chunk else eof
            raise ParseError("expected 'Name = expr;'", tok.line, tok.col)
        if not _is_variable_name(chunk[0].text):
            raise ParseError(
                f"equation names start with an uppercase letter: {chunk[0].text!r}",
                chunk[0].line,
                chunk[0].col,
            )
        if chunk[0].text in names:
            raise ParseError(
                f"duplicate equation for {chunk[0].text}", chunk[0].line, chunk[0].col
            )
        names.append(chunk[0].text)
    bound = frozenset(names)
    eqs = []
    for chunk in chunks:
        sub = _Parser(chunk[2:] + [eof], bound)
        rhs = sub.parse_expr()
        if sub.peek().kind != "eof":
            sub.error("trailing input in equation")
        eqs.append((chunk[0].text, rhs))
    return RecSpec(tuple(eqs))


def unbound_names(spec: RecSpec) -> frozenset:
    """Variables used somewhere in the specification but never defined."""
    out = frozenset()
    for _, rhs in spec.items():
        out |= free_vars(rhs)
    return out - spec.names


def resolve(term: Term, spec: RecSpec) -> Term:
    """Close a query term against a specification: <term|spec>."""
    return substitute(term, spec)


# ---------------------------------------------------------------------------
# printing

_PREC_PAR, _PREC_SUM, _PREC_PREFIX = 0, 1, 2


def format_term(term: Term) -> str:
    """Render a term in the concrete syntax; parses back to an equal term."""
    return _fmt(term, _PREC_PAR)


def _fmt(term: Term, min_prec: int) -> str:
    if isinstance(term, Nil):
        return "0"
    if isinstance(term, Var):
        return term.name
    if isinstance(term, Prefix):
        if isinstance(term.body, Nil):
            out = term.action
        else:
            out = f"{term.action}.{_fmt(term.body, _PREC_PREFIX)}"
        return out
    if isinstance(term, Choice):
        out = f"{_fmt(term.left, _PREC_SUM)} + {_fmt(term.right, _PREC_PREFIX)}"
        return f"({out})" if min_prec > _PREC_SUM else out
    if isinstance(term, Par):
        names = ",".join(sorted(term.sync))
        out = f"{_fmt(term.left, _PREC_PAR)} |[{names}]| {_fmt(term.right, _PREC_SUM)}"
        return f"({out})" if min_prec > _PREC_PAR else out
    if isinstance(term, Hide):
        names = ",".join(sorted(term.hidden))
        return f"hide {{{names}}} in {_fmt(term.body, _PREC_PREFIX)}"
    if isinstance(term, Rename):
        pairs = ",".join(f"{a}->{b}" for a, b in sorted(term.rel))
        return f"rename {{{pairs}}} in {_fmt(term.body, _PREC_PREFIX)}"
    if isinstance(term, Rec):
        eqs = ", ".join(f"{n} = {_fmt(rhs, _PREC_PAR)}" for n, rhs in term.spec.items())
        return f"<{term.name} | {eqs}>"
    raise TypeError(f"not a term: {term!r}")
