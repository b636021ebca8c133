"""Minimal s-expression reader shared by the domain, state, concept and policy formats."""

from __future__ import annotations

from typing import List, Union


class ParseError(ValueError):
    """Malformed input, with a 1-based source position when one is known."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.line = line
        self.col = col
        if line is not None:
            message = f"{message} (line {line}, column {col})"
        super().__init__(message)


class Symbol(str):
    """An atom token. Remembers where it came from for error messages."""

    line: int = 0
    col: int = 0


class SList(list):
    line: int = 0
    col: int = 0


SExpr = Union[Symbol, SList]


def tokenize(text: str):
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line, col = line + 1, 1
            i += 1
        elif ch.isspace():
            i += 1
            col += 1
        elif ch == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif ch in "()":
            yield ch, line, col
            i += 1
            col += 1
        else:
            start = i
            while i < n and not text[i].isspace() and text[i] not in "();":
                i += 1
            yield text[start:i], line, col
            col += i - start


def parse_all(text: str) -> List[SExpr]:
    """Parse every top-level expression in ``text``."""
    stack: List[SList] = []
    top: List[SExpr] = []
    for tok, line, col in tokenize(text):
        if tok == "(":
            lst = SList()
            lst.line, lst.col = line, col
            stack.append(lst)
        elif tok == ")":
            if not stack:
                raise ParseError("unexpected ')'", line, col)
            done = stack.pop()
            (stack[-1] if stack else top).append(done)
        else:
            sym = Symbol(tok)
            sym.line, sym.col = line, col
            (stack[-1] if stack else top).append(sym)
    if stack:
        raise ParseError("unclosed '('", stack[-1].line, stack[-1].col)
    return top


def parse_one(text: str) -> SExpr:
    exprs = parse_all(text)
    if len(exprs) != 1:
        line = exprs[1].line if len(exprs) > 1 else None
        col = exprs[1].col if len(exprs) > 1 else None
        raise ParseError(f"expected exactly one expression, found {len(exprs)}", line, col)
    return exprs[0]


def where(expr) -> tuple:
    return getattr(expr, "line", None), getattr(expr, "col", None)


def expect_list(expr, head: str | None = None, min_len: int = 0) -> SList:
    if not isinstance(expr, list):
        raise ParseError(f"expected a list{f' ({head} ...)' if head else ''}, got {expr!r}", *where(expr))
    if head is not None and (not expr or expr[0] != head):
        raise ParseError(f"expected ({head} ...)", *where(expr))
    if len(expr) < min_len:
        raise ParseError(f"too few elements in ({expr[0] if expr else ''} ...)", *where(expr))
    return expr


def expect_symbol(expr) -> Symbol:
    if isinstance(expr, list):
        raise ParseError("expected a symbol, got a list", *where(expr))
    return expr


def to_text(expr) -> str:
    if isinstance(expr, list):
        return "(" + " ".join(to_text(e) for e in expr) + ")"
    return str(expr)
