"""Rule language front end: lexer, recursive-descent parser, validator.

The grammar covers window declarations and complex-event declarations::

    window sample_wnd {
      size 8
      value ipv4.totalLen
    }
    complex_event sample_evt {
      value sum(ipv4.totalLen)
      strategy skip-till-next-match
      pattern ([ipv4.totalLen > 500] && [tcp.dstPort == 80]) ;
              ([sum(sample_wnd) > 6000] || [ipv4.protocol == 17])
    }

Pattern operators bind, from tightest to loosest: ``[...]`` predicates,
``&&``, ``||``, ``;``. All binary operators are left-associative and
parentheses override. A window whose ``value`` is a bracketed predicate
stores 0/1 outcomes and is the only valid target of ``count``.
"""

from __future__ import annotations

import dataclasses
import enum
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping, Union

from .errors import (
    AggregateError,
    DuplicateNameError,
    HeaderSpecError,
    LexicalError,
    RuleSyntaxError,
    UnresolvedFieldError,
    UnresolvedWindowError,
)

__all__ = [
    "Token", "tokenize", "parse_rules", "parse_predicate", "validate",
    "format_rules", "format_pattern", "format_predicate",
    "parse_headers", "load_headers",
    "RuleAst", "WindowDecl", "ComplexEventDecl", "Strategy",
    "FieldRef", "AggRef", "PredicateExpr", "Pred", "Seq", "And", "Or",
    "PatternNode", "AGG_FUNCS", "COMPARATORS", "pattern_leaves",
]

KEYWORDS = {
    "window": "KW_WINDOW",
    "size": "KW_SIZE",
    "value": "KW_VALUE",
    "complex_event": "KW_COMPLEX_EVENT",
    "return_value": "KW_RETURN_VALUE",
    "strategy": "KW_STRATEGY",
    "pattern": "KW_PATTERN",
}

AGG_FUNCS = ("sum", "min", "max", "count", "avg")
COMPARATORS = ("==", "!=", "<", "<=", ">", ">=")

_TOKEN_RE = re.compile(
    r"""
    (?P<WS>[ \t\r]+)
   |(?P<NL>\n)
   |(?P<COMMENT>\#[^\n]*)
   |(?P<INT>[0-9]+)
   |(?P<IDENT>[A-Za-z_][A-Za-z0-9_]*(?:[.\-][A-Za-z_][A-Za-z0-9_]*)*)
   |(?P<AND>&&)
   |(?P<OR>\|\|)
   |(?P<CMP>==|!=|<=|>=|<|>)
   |(?P<LBRACE>\{)
   |(?P<RBRACE>\})
   |(?P<LBRACKET>\[)
   |(?P<RBRACKET>\])
   |(?P<LPAREN>\()
   |(?P<RPAREN>\))
   |(?P<SEMI>;)
    """,
    re.VERBOSE,
)

_FIELD_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*\.[A-Za-z_][A-Za-z0-9_]*$")
_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


@dataclass(frozen=True)
class Token:
    kind: str
    value: str | int
    line: int
    col: int


def tokenize(source_text: str) -> list[Token]:
    """Split rule text into tokens; columns and lines are 1-based."""
    tokens: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(source_text):
        m = _TOKEN_RE.match(source_text, pos)
        col = pos - line_start + 1
        if m is None:
            raise LexicalError(f"unexpected character {source_text[pos]!r}", line, col)
        kind = m.lastgroup
        text = m.group()
        if kind == "NL":
            line += 1
            line_start = m.end()
        elif kind == "INT":
            tokens.append(Token("INT", int(text), line, col))
        elif kind == "IDENT":
            tokens.append(Token(KEYWORDS.get(text, "IDENT"), text, line, col))
        elif kind not in ("WS", "COMMENT"):
            tokens.append(Token(kind, text, line, col))
        pos = m.end()
    return tokens


# --------------------------------------------------------------------------
# AST

def _loc():
    return dataclasses.field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class FieldRef:
    header: str
    field: str
    width: int | None = dataclasses.field(default=None, compare=False)
    loc: tuple[int, int] | None = _loc()

    @property
    def name(self) -> str:
        return f"{self.header}.{self.field}"

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class AggRef:
    func: str
    target: Union[str, FieldRef]  # window name or header field
    loc: tuple[int, int] | None = _loc()

    @property
    def targets_window(self) -> bool:
        return isinstance(self.target, str)

    def __str__(self) -> str:
        return f"{self.func}({self.target})"


@dataclass(frozen=True)
class PredicateExpr:
    lhs: Union[FieldRef, AggRef]
    cmp: str
    rhs: Union[int, FieldRef]
    loc: tuple[int, int] | None = _loc()

    def __str__(self) -> str:
        return f"{self.lhs} {self.cmp} {self.rhs}"


@dataclass(frozen=True)
class Pred:
    expr: PredicateExpr


@dataclass(frozen=True)
class Seq:
    left: "PatternNode"
    right: "PatternNode"


@dataclass(frozen=True)
class And:
    left: "PatternNode"
    right: "PatternNode"


@dataclass(frozen=True)
class Or:
    left: "PatternNode"
    right: "PatternNode"


PatternNode = Union[Pred, Seq, And, Or]
ReturnSpec = Union[int, FieldRef, AggRef]

_OP_TOKENS = {Seq: ";", And: "&&", Or: "||"}


class Strategy(enum.Enum):
    SKIP_TILL_NEXT_MATCH = "skip-till-next-match"
    STRICT = "strict"


@dataclass(frozen=True)
class WindowDecl:
    name: str
    size: int
    value: Union[FieldRef, PredicateExpr]
    loc: tuple[int, int] | None = _loc()

    @property
    def is_predicate_window(self) -> bool:
        return isinstance(self.value, PredicateExpr)


@dataclass(frozen=True)
class ComplexEventDecl:
    name: str
    return_value: ReturnSpec
    strategy: Strategy
    pattern: PatternNode
    loc: tuple[int, int] | None = _loc()


@dataclass(frozen=True)
class RuleAst:
    windows: tuple[WindowDecl, ...] = ()
    events: tuple[ComplexEventDecl, ...] = ()

    def window(self, name: str) -> WindowDecl | None:
        for w in self.windows:
            if w.name == name:
                return w
        return None


def pattern_leaves(node: PatternNode) -> Iterator[PredicateExpr]:
    """Predicate leaves in left-to-right source order."""
    if isinstance(node, Pred):
        yield node.expr
    else:
        yield from pattern_leaves(node.left)
        yield from pattern_leaves(node.right)


# --------------------------------------------------------------------------
# Parser

class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0
        lines = text.split("\n")
        self.eof = Token("EOF", "", len(lines), len(lines[-1]) + 1)

    def peek(self) -> Token:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else self.eof

    def next(self) -> Token:
        tok = self.peek()
        if tok is not self.eof:
            self.pos += 1
        return tok

    def error(self, message: str, tok: Token | None = None) -> RuleSyntaxError:
        tok = tok or self.peek()
        found = "end of input" if tok.kind == "EOF" else repr(str(tok.value))
        return RuleSyntaxError(f"{message}, found {found}", tok.line, tok.col)

    def expect(self, kind: str, what: str) -> Token:
        if self.peek().kind != kind:
            raise self.error(f"expected {what}")
        return self.next()

    def at(self, kind: str) -> bool:
        return self.peek().kind == kind

    # declarations ----------------------------------------------------

    def rules(self) -> RuleAst:
        windows: list[WindowDecl] = []
        events: list[ComplexEventDecl] = []
        seen: set[str] = set()
        while not self.at("EOF"):
            tok = self.peek()
            if tok.kind == "KW_WINDOW":
                decl = self.window_decl()
                windows.append(decl)
            elif tok.kind == "KW_COMPLEX_EVENT":
                decl = self.event_decl()
                events.append(decl)
            else:
                raise self.error("expected 'window' or 'complex_event'")
            if decl.name in seen:
                raise DuplicateNameError(f"duplicate name {decl.name!r}", *decl.loc)
            seen.add(decl.name)
        return RuleAst(tuple(windows), tuple(events))

    def decl_name(self) -> tuple[str, tuple[int, int]]:
        tok = self.expect("IDENT", "a name")
        if not _NAME_RE.match(tok.value):
            raise RuleSyntaxError(f"invalid name {tok.value!r}", tok.line, tok.col)
        return tok.value, (tok.line, tok.col)

    def window_decl(self) -> WindowDecl:
        self.next()
        name, loc = self.decl_name()
        self.expect("LBRACE", "'{'")
        size = value = None
        while not self.at("RBRACE"):
            tok = self.peek()
            if tok.kind == "KW_SIZE" and size is None:
                self.next()
                size_tok = self.expect("INT", "window size")
                if size_tok.value < 1:
                    raise RuleSyntaxError("window size must be at least 1",
                                          size_tok.line, size_tok.col)
                size = size_tok.value
            elif tok.kind == "KW_VALUE" and value is None:
                self.next()
                if self.at("LBRACKET"):
                    self.next()
                    value = self.predicate()
                    self.expect("RBRACKET", "']'")
                else:
                    value = self.field_ref()
            else:
                raise self.error("expected 'size', 'value' or '}'")
        end = self.next()
        if size is None or value is None:
            missing = "size" if size is None else "value"
            raise RuleSyntaxError(f"window {name!r} lacks '{missing}'", end.line, end.col)
        return WindowDecl(name, size, value, loc=loc)

    def event_decl(self) -> ComplexEventDecl:
        self.next()
        name, loc = self.decl_name()
        self.expect("LBRACE", "'{'")
        ret = strategy = pattern = None
        while not self.at("RBRACE"):
            tok = self.peek()
            if tok.kind in ("KW_VALUE", "KW_RETURN_VALUE") and ret is None:
                self.next()
                ret = self.return_spec()
            elif tok.kind == "KW_STRATEGY" and strategy is None:
                self.next()
                stok = self.expect("IDENT", "a strategy")
                try:
                    strategy = Strategy(stok.value)
                except ValueError:
                    raise RuleSyntaxError(
                        f"unknown strategy {stok.value!r}", stok.line, stok.col) from None
            elif tok.kind == "KW_PATTERN" and pattern is None:
                self.next()
                pattern = self.pattern()
            else:
                raise self.error("expected 'value', 'strategy', 'pattern' or '}'")
        end = self.next()
        if ret is None:
            raise RuleSyntaxError(f"complex_event {name!r} lacks 'value'", end.line, end.col)
        if pattern is None:
            raise RuleSyntaxError(f"complex_event {name!r} lacks 'pattern'", end.line, end.col)
        return ComplexEventDecl(name, ret, strategy or Strategy.SKIP_TILL_NEXT_MATCH,
                                pattern, loc=loc)

    def return_spec(self) -> ReturnSpec:
        if self.at("INT"):
            return self.next().value
        return self.operand()

    # patterns --------------------------------------------------------

    def pattern(self) -> PatternNode:
        node = self.disjunction()
        while self.at("SEMI"):
            self.next()
            node = Seq(node, self.disjunction())
        return node

    def disjunction(self) -> PatternNode:
        node = self.conjunction()
        while self.at("OR"):
            self.next()
            node = Or(node, self.conjunction())
        return node

    def conjunction(self) -> PatternNode:
        node = self.primary()
        while self.at("AND"):
            self.next()
            node = And(node, self.primary())
        return node

    def primary(self) -> PatternNode:
        if self.at("LBRACKET"):
            self.next()
            expr = self.predicate()
            self.expect("RBRACKET", "']'")
            return Pred(expr)
        if self.at("LPAREN"):
            self.next()
            node = self.pattern()
            self.expect("RPAREN", "')'")
            return node
        raise self.error("expected '[' or '('")

    def predicate(self) -> PredicateExpr:
        start = self.peek()
        lhs = self.operand()
        cmp = self.expect("CMP", "a comparison operator").value
        if self.at("INT"):
            rhs = self.next().value
        elif self.at("IDENT"):
            rhs = self.field_ref()
        else:
            raise self.error("expected an integer or a field reference")
        return PredicateExpr(lhs, cmp, rhs, loc=(start.line, start.col))

    def operand(self) -> FieldRef | AggRef:
        tok = self.peek()
        if tok.kind == "IDENT" and tok.value in AGG_FUNCS and self._lookahead_paren():
            self.next()
            self.next()
            target_tok = self.expect("IDENT", "a window name or field reference")
            if "." in target_tok.value:
                target = self._as_field(target_tok)
            elif _NAME_RE.match(target_tok.value):
                target = target_tok.value
            else:
                raise RuleSyntaxError(f"invalid aggregation target {target_tok.value!r}",
                                      target_tok.line, target_tok.col)
            self.expect("RPAREN", "')'")
            return AggRef(tok.value, target, loc=(tok.line, tok.col))
        return self.field_ref()

    def _lookahead_paren(self) -> bool:
        nxt = self.pos + 1
        return nxt < len(self.tokens) and self.tokens[nxt].kind == "LPAREN"

    def field_ref(self) -> FieldRef:
        return self._as_field(self.expect("IDENT", "a field reference"))

    @staticmethod
    def _as_field(tok: Token) -> FieldRef:
        if not _FIELD_RE.match(tok.value):
            raise RuleSyntaxError(f"expected a field reference 'header.field', "
                                  f"found {tok.value!r}", tok.line, tok.col)
        header, field = tok.value.split(".")
        return FieldRef(header, field, loc=(tok.line, tok.col))


def parse_rules(source_text: str) -> RuleAst:
    return _Parser(source_text).rules()


def parse_predicate(text: str) -> PredicateExpr:
    """Parse a single bare predicate such as ``ipv4.totalLen > 500``."""
    p = _Parser(text)
    expr = p.predicate()
    if not p.at("EOF"):
        raise p.error("trailing input after predicate")
    return expr


# --------------------------------------------------------------------------
# Pretty printing

def format_predicate(expr: PredicateExpr) -> str:
    return str(expr)


def format_pattern(node: PatternNode) -> str:
    if isinstance(node, Pred):
        return f"[{node.expr}]"

    def wrap(child: PatternNode) -> str:
        text = format_pattern(child)
        return text if isinstance(child, Pred) else f"({text})"

    return f"{wrap(node.left)} {_OP_TOKENS[type(node)]} {wrap(node.right)}"


def format_rules(ast: RuleAst) -> str:
    out: list[str] = []
    for w in ast.windows:
        value = f"[{w.value}]" if w.is_predicate_window else str(w.value)
        out += [f"window {w.name} {{", f"  size {w.size}", f"  value {value}", "}"]
    for e in ast.events:
        out += [
            f"complex_event {e.name} {{",
            f"  value {e.return_value}",
            f"  strategy {e.strategy.value}",
            f"  pattern {format_pattern(e.pattern)}",
            "}",
        ]
    return "\n".join(out) + ("\n" if out else "")


# --------------------------------------------------------------------------
# Header sidecar

def parse_headers(text: str) -> dict[str, int]:
    """Parse ``<header>.<field> <width_bits>`` lines; ``#`` starts a comment."""
    headers: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2 or not _FIELD_RE.match(parts[0]) or not parts[1].isdigit():
            raise HeaderSpecError(f"line {lineno}: expected '<header>.<field> <width>'")
        width = int(parts[1])
        if not 1 <= width <= 64:
            raise HeaderSpecError(f"line {lineno}: width must be between 1 and 64 bits")
        if parts[0] in headers:
            raise HeaderSpecError(f"line {lineno}: field {parts[0]} defined twice")
        headers[parts[0]] = width
    return headers


def load_headers(path: str | Path) -> dict[str, int]:
    return parse_headers(Path(path).read_text(encoding="utf-8"))


# --------------------------------------------------------------------------
# Validation

def _is_power_of_two(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


class _Validator:
    def __init__(self, ast: RuleAst, headers: Mapping[str, int]):
        self.headers = headers
        self.windows = {w.name: w for w in ast.windows}

    def field(self, ref: FieldRef) -> FieldRef:
        width = self.headers.get(ref.name)
        if width is None:
            raise UnresolvedFieldError(f"unknown field {ref.name!r}", *(ref.loc or (None, None)))
        return dataclasses.replace(ref, width=width)

    def agg(self, ref: AggRef, allow_predicate_windows: bool = True) -> AggRef:
        loc = ref.loc or (None, None)
        if not ref.targets_window:
            if ref.func not in ("sum", "min", "max"):
                raise AggregateError(
                    f"{ref.func} needs a declared window, not header field {ref.target}", *loc)
            return dataclasses.replace(ref, target=self.field(ref.target))
        window = self.windows.get(ref.target)
        if window is None:
            raise UnresolvedWindowError(f"unknown window {ref.target!r}", *loc)
        if window.is_predicate_window and not allow_predicate_windows:
            raise AggregateError(
                f"predicate window {window.name!r} cannot feed another window", *loc)
        if ref.func == "count" and not window.is_predicate_window:
            raise AggregateError(
                f"count needs a predicate window; {window.name!r} stores field values", *loc)
        if ref.func == "avg" and not _is_power_of_two(window.size):
            raise AggregateError(
                f"avg needs a power-of-two window size; {window.name!r} has size {window.size}",
                *loc)
        return ref

    def operand(self, op, allow_predicate_windows=True):
        if isinstance(op, FieldRef):
            return self.field(op)
        if isinstance(op, AggRef):
            return self.agg(op, allow_predicate_windows)
        return op

    def predicate(self, expr: PredicateExpr, allow_predicate_windows=True) -> PredicateExpr:
        return dataclasses.replace(
            expr,
            lhs=self.operand(expr.lhs, allow_predicate_windows),
            rhs=self.operand(expr.rhs, allow_predicate_windows),
        )

    def pattern(self, node: PatternNode) -> PatternNode:
        if isinstance(node, Pred):
            return Pred(self.predicate(node.expr))
        return type(node)(self.pattern(node.left), self.pattern(node.right))

    def window(self, w: WindowDecl) -> WindowDecl:
        if w.is_predicate_window:
            return dataclasses.replace(w, value=self.predicate(w.value, False))
        return dataclasses.replace(w, value=self.field(w.value))

    def event(self, e: ComplexEventDecl) -> ComplexEventDecl:
        return dataclasses.replace(
            e, return_value=self.operand(e.return_value), pattern=self.pattern(e.pattern))


def validate(ast: RuleAst, headers: Mapping[str, int]) -> RuleAst:
    """Bind every field reference to its width and check aggregate targets.

    Returns a new AST; the input is not modified.
    """
    v = _Validator(ast, headers)
    return RuleAst(tuple(v.window(w) for w in ast.windows),
                   tuple(v.event(e) for e in ast.events))
