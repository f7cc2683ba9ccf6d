"""Workbench for CCSP_t, a process calculus with a time-out action.

The calculus has visible actions, the silent action tau and a time-out
action t that may fire only in states offering no silent step.  The
package parses process terms, generates their transition systems,
decides and enumerates partial failure traces and their rooted variant,
checks the standard equivalences and preorders built on them, validates
algebraic laws, and constructs distinguishing tests for may testing.
"""

from .terms import (
    ParseError,
    RecSpec,
    Term,
    format_term,
    free_vars,
    is_closed,
    is_guarded,
    is_time_guarded,
    parse_spec,
    parse_term,
    sort,
    substitute,
)
from .semantics import (
    IncompleteStateSpace,
    Lts,
    UnguardedRecursion,
    bisimilar,
    explore,
    explore_many,
    hnf,
    initials,
    is_stable,
    outgoing,
    strong_bisim,
)
from .failuretraces import (
    AlphabetTooLarge,
    FtAnalyzer,
    RefusalAutomaton,
    RootedElement,
    Verdict,
    build_refusal_nfa,
    col_closure,
    format_rooted,
    format_trace,
    ft_enumerate,
    ft_equiv,
    ft_member,
    ft_preorder,
    is_system_ended,
    parse_rooted,
    parse_trace,
    rft_equiv,
    rft_preorder,
    rooted_elements,
    trace_equiv,
    trace_project,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
