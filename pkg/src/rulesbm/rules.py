"""Weighted first-order rule language: parser, AST, and canonical printer.

Grammar, one statement per line ('#' starts a comment):

    decl    := "latent" name "/" arity
    rule    := weight ":" literal ("&" literal)* "->" literal ["^" exp] ["."]
    weight  := nonnegative decimal | "learnable"
    literal := ["!"] name "(" term ("," term)* ")"
    term    := identifier                (variable)
             | '"' chars '"' | digits   (constant)

Predicates named `pi` (node membership) and `B` (community interaction) are
built in; `latent` declarations mark unobserved predicates; anything else is
observed and its arity is inferred from use. Every head variable must occur in
the body.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple


class RuleSyntaxError(ValueError):
    """Parse or validation failure, carrying line and column."""

    def __init__(self, line, col, message):
        super().__init__("line %d, col %d: %s" % (line, col, message))
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Variable:
    name: str


@dataclass(frozen=True)
class Constant:
    value: str | int


@dataclass(frozen=True)
class Literal:
    negated: bool
    predicate: str
    args: tuple

    @property
    def arity(self) -> int:
        return len(self.args)

    def variables(self):
        return [a for a in self.args if isinstance(a, Variable)]


@dataclass(frozen=True)
class Rule:
    weight: float | None  # None marks a learnable weight
    body: tuple[Literal, ...]
    head: Literal
    exponent: int = 1

    @property
    def learnable(self) -> bool:
        return self.weight is None

    def literals(self):
        return list(self.body) + [self.head]


@dataclass(frozen=True)
class PredicateDecl:
    name: str
    arity: int
    kind: str  # "pi" | "B" | "latent" | "observed"


class RuleSet(NamedTuple):
    rules: list
    decls: list

    def decl_for(self, name):
        for d in self.decls:
            if d.name == name:
                return d
        return None


_BUILTIN_KINDS = {"pi": "pi", "B": "B"}


class _Tokenizer:
    """Single-line tokenizer tracking column positions."""

    def __init__(self, text, lineno):
        self.text = text
        self.lineno = lineno
        self.pos = 0

    def error(self, message, col=None):
        raise RuleSyntaxError(self.lineno, (self.pos if col is None else col) + 1, message)

    def _skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos] in " \t":
            self.pos += 1

    def peek(self):
        self._skip_ws()
        if self.pos >= len(self.text):
            return None
        return self.text[self.pos]

    def next(self):
        """Return (kind, value, col); kinds: name, number, string, punct, end."""
        self._skip_ws()
        start = self.pos
        if self.pos >= len(self.text):
            return ("end", None, start)
        c = self.text[self.pos]
        if c == '"':
            self.pos += 1
            begin = self.pos
            while self.pos < len(self.text) and self.text[self.pos] != '"':
                self.pos += 1
            if self.pos >= len(self.text):
                self.error("unterminated string constant", start)
            value = self.text[begin:self.pos]
            self.pos += 1
            return ("string", value, start)
        if c.isalpha() or c == "_":
            begin = self.pos
            while self.pos < len(self.text) and (self.text[self.pos].isalnum() or self.text[self.pos] == "_"):
                self.pos += 1
            return ("name", self.text[begin:self.pos], start)
        if c.isdigit() or (c == "." and self.pos + 1 < len(self.text) and self.text[self.pos + 1].isdigit()):
            begin = self.pos
            while self.pos < len(self.text) and (self.text[self.pos].isdigit() or self.text[self.pos] in ".eE"):
                if self.text[self.pos] in "eE" and self.pos + 1 < len(self.text) and self.text[self.pos + 1] in "+-":
                    self.pos += 1
                self.pos += 1
            return ("number", self.text[begin:self.pos], begin)
        if c == "-" and self.text[self.pos:self.pos + 2] != "->":
            self.error("negative weights are not allowed")
        two = self.text[self.pos:self.pos + 2]
        if two == "->":
            self.pos += 2
            return ("punct", "->", start)
        if c in ":!&(),^./":
            self.pos += 1
            return ("punct", c, start)
        self.error("unexpected character %r" % c)


class _Parser:
    def __init__(self, tok):
        self.tok = tok

    def expect_punct(self, value):
        kind, got, col = self.tok.next()
        if kind != "punct" or got != value:
            self.tok.error("expected %r, got %r" % (value, got), col)

    def parse_term(self):
        kind, value, col = self.tok.next()
        if kind == "name":
            return Variable(value)
        if kind == "string":
            return Constant(value)
        if kind == "number":
            if any(ch in value for ch in ".eE"):
                self.tok.error("constants must be integers or quoted strings", col)
            return Constant(int(value))
        self.tok.error("expected a term, got %r" % value, col)

    def parse_literal(self):
        negated = False
        if self.tok.peek() == "!":
            self.expect_punct("!")
            negated = True
        kind, name, col = self.tok.next()
        if kind != "name":
            self.tok.error("expected a predicate name, got %r" % name, col)
        self.expect_punct("(")
        args = [self.parse_term()]
        while self.tok.peek() == ",":
            self.expect_punct(",")
            args.append(self.parse_term())
        self.expect_punct(")")
        return Literal(negated=negated, predicate=name, args=tuple(args))

    def parse_rule(self, weight):
        body = [self.parse_literal()]
        while self.tok.peek() == "&":
            self.expect_punct("&")
            body.append(self.parse_literal())
        self.expect_punct("->")
        head = self.parse_literal()
        exponent = 1
        if self.tok.peek() == "^":
            self.expect_punct("^")
            kind, value, col = self.tok.next()
            if kind != "number" or value not in ("1", "2"):
                self.tok.error("exponent must be 1 or 2, got %r" % value, col)
            exponent = int(value)
        if self.tok.peek() == ".":
            self.expect_punct(".")
        kind, value, col = self.tok.next()
        if kind != "end":
            self.tok.error("trailing input %r after rule" % value, col)
        head_vars = {v.name for v in head.variables()}
        body_vars = {v.name for lit in body for v in lit.variables()}
        missing = head_vars - body_vars
        if missing:
            self.tok.error("head variable %r does not occur in the body" % sorted(missing)[0], col)
        return Rule(weight=weight, body=tuple(body), head=head, exponent=exponent)


def parse_rules(source: str) -> RuleSet:
    """Parse rule text into (rules, decls).

    decls contains one entry per predicate: explicit `latent name/arity`
    declarations plus inferred entries for `pi`, `B`, and observed predicates.
    Raises RuleSyntaxError with line and column on bad syntax, negative or
    malformed weights, bad exponents, unsafe head variables, redeclaration, or
    inconsistent arity across rules.
    """
    rules: list[Rule] = []
    latent: dict[str, tuple[int, int]] = {}  # name -> (arity, lineno)
    for lineno, raw in enumerate(source.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        tok = _Tokenizer(line, lineno)
        kind, value, col = tok.next()
        if kind == "name" and value == "latent":
            kind, name, col = tok.next()
            if kind != "name":
                tok.error("expected a predicate name after 'latent'", col)
            kind2, slash, col2 = tok.next()
            if kind2 != "punct" or slash != "/":
                tok.error("expected name/arity", col2)
            kind3, arity, col3 = tok.next()
            if kind3 != "number" or not arity.isdigit() or int(arity) < 1:
                tok.error("arity must be a positive integer", col3)
            if name in _BUILTIN_KINDS:
                tok.error("%r is a built-in predicate and cannot be declared latent" % name, col)
            if name in latent:
                tok.error("predicate %r declared twice" % name, col)
            kind4, value4, col4 = tok.next()
            if kind4 != "end":
                tok.error("trailing input after declaration", col4)
            latent[name] = (int(arity), lineno)
            continue
        if kind == "name" and value == "learnable":
            weight = None
        elif kind == "number":
            weight = float(value)
        else:
            tok.error("expected a weight or 'learnable', got %r" % value, col)
        parser = _Parser(tok)
        parser.expect_punct(":")
        rules.append(parser.parse_rule(weight))

    arities: dict[str, int] = {name: a for name, (a, _) in latent.items()}
    first_use: dict[str, int] = {}
    for lineno_idx, rule in enumerate(rules):
        for lit in rule.literals():
            name = lit.predicate
            if name == "pi" and lit.arity != 2:
                raise RuleSyntaxError(0, 0, "pi takes (node, community), got arity %d" % lit.arity)
            if name == "B" and lit.arity != 2:
                raise RuleSyntaxError(0, 0, "B takes (community, community), got arity %d" % lit.arity)
            if name in arities and arities[name] != lit.arity:
                raise RuleSyntaxError(
                    0, 0, "predicate %r used with arity %d but known as arity %d"
                    % (name, lit.arity, arities[name]))
            arities.setdefault(name, lit.arity)
            first_use.setdefault(name, lineno_idx)

    decls = []
    for name in sorted(arities, key=lambda n: (n not in latent, first_use.get(n, 1 << 30), n)):
        if name in _BUILTIN_KINDS:
            kind = _BUILTIN_KINDS[name]
        elif name in latent:
            kind = "latent"
        else:
            kind = "observed"
        decls.append(PredicateDecl(name=name, arity=arities[name], kind=kind))
    return RuleSet(rules=rules, decls=decls)


def _format_term(term) -> str:
    if isinstance(term, Variable):
        return term.name
    if isinstance(term.value, int):
        return str(term.value)
    return '"%s"' % term.value


def _format_literal(lit: Literal) -> str:
    bang = "!" if lit.negated else ""
    return "%s%s(%s)" % (bang, lit.predicate, ", ".join(_format_term(a) for a in lit.args))


def print_rules(rules, decls=()) -> str:
    """Canonical text form; parse_rules(print_rules(rs)) round-trips the AST."""
    lines = []
    for d in decls:
        if d.kind == "latent":
            lines.append("latent %s/%d" % (d.name, d.arity))
    for rule in rules:
        weight = "learnable" if rule.learnable else repr(rule.weight)
        text = "%s : %s -> %s" % (
            weight,
            " & ".join(_format_literal(l) for l in rule.body),
            _format_literal(rule.head),
        )
        if rule.exponent == 2:
            text += " ^2"
        lines.append(text)
    return "\n".join(lines) + ("\n" if lines else "")
