import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccspt.terms import (
    NIL,
    RESERVED,
    Choice,
    Hide,
    Par,
    ParseError,
    Prefix,
    Rec,
    RecSpec,
    Rename,
    Var,
    format_term,
    free_vars,
    is_closed,
    is_guarded,
    is_time_guarded,
    parse_spec,
    parse_term,
    prefix_chain,
    resolve,
    sort,
    substitute,
    sum_terms,
    unbound_names,
)
from oracle import random_term


def test_parse_basic_shapes():
    assert parse_term("0") == NIL
    assert parse_term("a") == Prefix("a", NIL)
    assert parse_term("a.b") == Prefix("a", Prefix("b", NIL))
    assert parse_term("tau.a") == Prefix("tau", Prefix("a", NIL))
    assert parse_term("t.a") == Prefix("t", Prefix("a", NIL))
    assert parse_term("a + b") == Choice(Prefix("a", NIL), Prefix("b", NIL))


def test_precedence_prefix_over_sum_over_par():
    # a.b + c is (a.b) + c
    assert parse_term("a.b + c") == Choice(
        Prefix("a", Prefix("b", NIL)), Prefix("c", NIL)
    )
    # sums group under the parallel operator
    t = parse_term("a + b |[x]| c + d")
    assert isinstance(t, Par)
    assert t.sync == frozenset({"x"})
    assert t.left == parse_term("a + b")
    assert t.right == parse_term("c + d")
    # and the parallel operator is left-associative
    t2 = parse_term("a |[x]| b |[y]| c")
    assert isinstance(t2, Par) and t2.sync == frozenset({"y"})
    assert isinstance(t2.left, Par) and t2.left.sync == frozenset({"x"})


def test_empty_sync_set():
    t = parse_term("a |[ ]| b")
    assert isinstance(t, Par) and t.sync == frozenset()
    assert parse_term("a |[]| b") == t


def test_choice_is_left_associative():
    assert parse_term("a + b + c") == Choice(
        Choice(Prefix("a", NIL), Prefix("b", NIL)), Prefix("c", NIL)
    )


def test_hide_and_rename():
    t = parse_term("hide {a,b} in a.c")
    assert t == Hide(frozenset({"a", "b"}), Prefix("a", Prefix("c", NIL)))
    r = parse_term("rename {a->b, c->d} in a")
    assert r == Rename(frozenset({("a", "b"), ("c", "d")}), Prefix("a", NIL))
    # binds like a prefix: hide applies to the first summand only
    s = parse_term("hide {a} in a + b")
    assert isinstance(s, Choice)
    assert isinstance(s.left, Hide)


def test_inline_recursion():
    t = parse_term("<X | X = a.X>")
    assert isinstance(t, Rec)
    assert t.name == "X"
    assert t.spec.get("X") == Prefix("a", Var("X"))


def test_inline_recursion_forward_reference():
    t = parse_term("<X | X = a.Y, Y = b.X>")
    assert t.spec.get("X") == Prefix("a", Var("Y"))
    assert t.spec.get("Y") == Prefix("b", Var("X"))


def test_inline_recursion_head_must_be_defined():
    with pytest.raises(ParseError):
        parse_term("<Z | X = a.X>")


def test_rebinding_rejected():
    with pytest.raises(ParseError, match="already bound"):
        parse_term("<X | X = a.<X | X = b.X>>")
    with pytest.raises(ParseError, match="already bound"):
        parse_term("<X | X = a, X = b>")


def test_reserved_words():
    with pytest.raises(ParseError):
        parse_term("top")
    with pytest.raises(ParseError):
        parse_term("hide {t} in a")
    with pytest.raises(ParseError):
        parse_term("rename {tau->a} in a")
    with pytest.raises(ParseError):
        parse_term("a |[tau]| b")


def test_variable_cannot_be_prefixed():
    with pytest.raises(ParseError, match="cannot be used as a prefix"):
        parse_term("X.a")


def test_parse_error_position():
    with pytest.raises(ParseError) as exc:
        parse_term("a + ;")
    assert exc.value.line == 1
    assert exc.value.col == 5


def test_trailing_input_rejected():
    with pytest.raises(ParseError, match="trailing"):
        parse_term("a b")


def test_parse_spec_and_resolve():
    spec = parse_spec(
        """
        # a tiny watchdog
        Sys = work.Sys + t.Alarm;
        Alarm = ring.Sys;
        """
    )
    assert spec.names == frozenset({"Sys", "Alarm"})
    assert unbound_names(spec) == frozenset()
    closed = resolve(parse_term("Sys", bound=spec.names), spec)
    assert is_closed(closed)
    assert isinstance(closed, Rec) and closed.name == "Sys"


def test_parse_spec_duplicate_name():
    with pytest.raises(ParseError, match="duplicate"):
        parse_spec("P = a; P = b;")


def test_parse_spec_missing_semicolon():
    with pytest.raises(ParseError, match="';'"):
        parse_spec("P = a")


def test_free_vars_and_substitute():
    t = parse_term("a.X + Y")
    assert free_vars(t) == frozenset({"X", "Y"})
    spec = RecSpec.of(X=parse_term("b.X", bound={"X"}))
    s = substitute(t, spec)
    assert free_vars(s) == frozenset({"Y"})
    assert s == Choice(Prefix("a", Rec("X", spec)), Var("Y"))


def test_substitute_respects_shadowing():
    spec = RecSpec.of(X=Prefix("a", NIL))
    inner = parse_term("<Y | Y = b.Y>")
    t = Choice(Var("X"), inner)
    s = substitute(t, spec)
    assert s.right == inner  # the inner binder is untouched
    assert isinstance(s.left, Rec)


def test_guardedness():
    assert is_guarded(RecSpec.of(X=parse_term("a.X", bound={"X"})))
    assert is_guarded(RecSpec.of(X=parse_term("tau.X", bound={"X"})))
    assert not is_guarded(RecSpec.of(X=parse_term("X + a", bound={"X"})))
    # cycle through two variables
    bad = RecSpec.of(
        X=parse_term("Y + a", bound={"X", "Y"}),
        Y=parse_term("X", bound={"X", "Y"}),
    )
    assert not is_guarded(bad)
    # broken by a guard on one edge
    ok = RecSpec.of(
        X=parse_term("Y + a", bound={"X", "Y"}),
        Y=parse_term("b.X", bound={"X", "Y"}),
    )
    assert is_guarded(ok)


def test_time_guardedness_is_stronger():
    a_loop = RecSpec.of(X=parse_term("a.X", bound={"X"}))
    t_loop = RecSpec.of(X=parse_term("t.X", bound={"X"}))
    assert is_guarded(a_loop) and not is_time_guarded(a_loop)
    assert is_guarded(t_loop) and is_time_guarded(t_loop)
    # a time guard deeper in the body still counts
    deep = RecSpec.of(X=parse_term("a.t.X + t.b.X", bound={"X"}))
    assert is_time_guarded(deep)
    # one unguarded-in-time occurrence spoils it
    mixed = RecSpec.of(X=parse_term("t.X + a.X", bound={"X"}))
    assert is_guarded(mixed) and not is_time_guarded(mixed)


def test_sort():
    assert sort(parse_term("a.b + c")) == frozenset({"a", "b", "c"})
    assert sort(parse_term("tau.t.a")) == frozenset({"a"})
    assert sort(parse_term("hide {a} in a.b")) == frozenset({"b"})
    # unmapped actions are blocked, so they leave the sort
    assert sort(parse_term("rename {a->b} in a.c")) == frozenset({"b"})
    assert sort(parse_term("<X | X = a.X + t.b.X>")) == frozenset({"a", "b"})


def test_sum_and_prefix_helpers():
    assert sum_terms([]) == NIL
    assert sum_terms([Prefix("a", NIL)]) == Prefix("a", NIL)
    assert prefix_chain(["a", "b"]) == parse_term("a.b")


def test_reserved_is_closed_under_syntax():
    for word in RESERVED:
        if word in ("tau", "t"):
            continue  # these are actions of the calculus itself
        with pytest.raises(ParseError):
            parse_term(f"x |[{word}]| y")


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**9), st.integers(1, 14))
def test_print_parse_roundtrip(seed, size):
    t = random_term(random.Random(seed), size)
    assert parse_term(format_term(t)) == t


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**9))
def test_roundtrip_with_recursion(seed):
    rng = random.Random(seed)
    from oracle import random_guarded_rec

    t = random_guarded_rec(rng)
    assert parse_term(format_term(t)) == t
