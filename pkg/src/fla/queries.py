"""Label-predicate queries over segment sets.

Grammar (case-insensitive keywords):

    query  := expr ("then" expr)*
    expr   := term ("or" term)*
    term   := factor ("and" factor)*
    factor := "not" factor | "(" expr ")" | atom
    atom   := "true" | "false"
            | FEATURE ("="|"!=") CLASS
            | "duration" (">="|"<=") NUMBER ["s"|"f"]

CLASS is a class id or a text label attached to the model; durations are
seconds by default ("30" or "30s") or frames with an "f" suffix. A segment
satisfies an expr; a track satisfies `A then B` if it has a segment
matching A strictly before one matching B.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .classify import Segment, SegmentSet
from .em import FlaModel
from .errors import QueryError

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<op>>=|<=|!=|=|\(|\))|(?P<number>\d+(?:\.\d+)?[sf]?)|(?P<word>[A-Za-z_][\w\-]*))"
)

_KEYWORDS = {"and", "or", "not", "then", "true", "false", "duration"}


@dataclass(frozen=True)
class Token:
    kind: str  # "op" | "number" | "word" | "end"
    text: str
    position: int


def _tokenize(text: str) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            at = len(text) - len(stripped)
            raise QueryError(f"unexpected character {text[at]!r}", at)
        for kind in ("op", "number", "word"):
            if m.group(kind) is not None:
                tokens.append(Token(kind, m.group(kind), m.start(kind)))
                break
        pos = m.end()
    tokens.append(Token("end", "", len(text)))
    return tokens


# AST nodes: ("class", feature, value, negate), ("duration", op, value, unit),
# ("const", bool), ("and"|"or", a, b), ("not", a); a query is a list of exprs.


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.idx = 0

    def peek(self) -> Token:
        return self.tokens[self.idx]

    def next(self) -> Token:
        tok = self.tokens[self.idx]
        self.idx += 1
        return tok

    def expect_op(self, *ops: str) -> Token:
        tok = self.next()
        if tok.kind != "op" or tok.text not in ops:
            raise QueryError(f"expected {' or '.join(repr(o) for o in ops)}", tok.position)
        return tok

    def parse(self) -> list:
        stages = [self.parse_expr()]
        while self._take_word("then"):
            stages.append(self.parse_expr())
        tok = self.peek()
        if tok.kind != "end":
            raise QueryError(f"unexpected token {tok.text!r}", tok.position)
        return stages

    def _take_word(self, word: str) -> bool:
        tok = self.peek()
        if tok.kind == "word" and tok.text.lower() == word:
            self.next()
            return True
        return False

    def parse_expr(self):
        node = self.parse_term()
        while self._take_word("or"):
            node = ("or", node, self.parse_term())
        return node

    def parse_term(self):
        node = self.parse_factor()
        while self._take_word("and"):
            node = ("and", node, self.parse_factor())
        return node

    def parse_factor(self):
        tok = self.peek()
        if tok.kind == "word" and tok.text.lower() == "not":
            self.next()
            return ("not", self.parse_factor())
        if tok.kind == "op" and tok.text == "(":
            self.next()
            node = self.parse_expr()
            self.expect_op(")")
            return node
        return self.parse_atom()

    def parse_atom(self):
        tok = self.next()
        if tok.kind != "word":
            raise QueryError(f"expected a condition, got {tok.text!r}", tok.position)
        word = tok.text.lower()
        if word == "true":
            return ("const", True)
        if word == "false":
            return ("const", False)
        if word == "duration":
            op = self.expect_op(">=", "<=").text
            val = self.next()
            if val.kind != "number":
                raise QueryError("expected a duration value", val.position)
            unit = "s"
            text = val.text
            if text[-1] in "sf":
                unit = text[-1]
                text = text[:-1]
            return ("duration", op, float(text), unit)
        if word in _KEYWORDS:
            raise QueryError(f"unexpected keyword {tok.text!r}", tok.position)
        # feature condition
        op = self.expect_op("=", "!=").text
        val = self.next()
        if val.kind not in ("word", "number"):
            raise QueryError("expected a class id or label", val.position)
        if val.kind == "word" and val.text.lower() in _KEYWORDS:
            raise QueryError(f"unexpected keyword {val.text!r}", val.position)
        return ("class", tok.text, val.text, op == "!=")


@dataclass(frozen=True)
class QueryPredicate:
    """Parsed query: one or more segment expressions joined by `then`."""

    text: str
    stages: tuple

    @classmethod
    def parse(cls, text: str) -> "QueryPredicate":
        return cls(text, tuple(_Parser(text).parse()))


def _resolve(node, feature_names, class_counts, model: FlaModel | None):
    """Type-check class references and map labels to ids."""
    kind = node[0]
    if kind in ("and", "or"):
        return (kind, _resolve(node[1], feature_names, class_counts, model),
                _resolve(node[2], feature_names, class_counts, model))
    if kind == "not":
        return (kind, _resolve(node[1], feature_names, class_counts, model))
    if kind == "class":
        _, feature, value, negate = node
        if feature not in feature_names:
            raise QueryError(f"unknown feature {feature!r}")
        fi = feature_names.index(feature)
        if model is not None:
            cid = model.class_id(feature, value)
        else:
            if not value.lstrip("-").isdigit():
                raise QueryError(
                    f"class label {value!r} needs a model file to resolve"
                )
            cid = int(value)
        if class_counts and not (0 <= cid < class_counts[fi]):
            raise QueryError(f"class id {cid} out of range for feature {feature!r}")
        return ("class", fi, cid, negate)
    return node


def _matches(node, segment: Segment, frame_rate: int) -> bool:
    kind = node[0]
    if kind == "const":
        return node[1]
    if kind == "and":
        return _matches(node[1], segment, frame_rate) and _matches(node[2], segment, frame_rate)
    if kind == "or":
        return _matches(node[1], segment, frame_rate) or _matches(node[2], segment, frame_rate)
    if kind == "not":
        return not _matches(node[1], segment, frame_rate)
    if kind == "class":
        _, fi, cid, negate = node
        hit = segment.labels[fi] == cid
        return hit != negate
    _, op, value, unit = node
    measured = segment.n_frames if unit == "f" else segment.duration_seconds(frame_rate)
    return measured >= value if op == ">=" else measured <= value


@dataclass(frozen=True)
class QueryMatch:
    track_id: str
    witnesses: tuple[Segment, ...]


def evaluate_query(
    segset: SegmentSet,
    predicate: QueryPredicate | str,
    frame_rate: int = 15,
    model: FlaModel | None = None,
) -> list[QueryMatch]:
    """Return every track satisfying the predicate with witness segments.

    Single-stage queries return all matching segments of a track; `then`
    chains return one earliest witness per stage, in increasing time order.
    Results are sorted by track id, so they do not depend on track order.
    """
    if isinstance(predicate, str):
        predicate = QueryPredicate.parse(predicate)
    class_counts = tuple(model.class_counts) if model is not None else ()
    stages = [
        _resolve(s, segset.feature_names, class_counts, model) for s in predicate.stages
    ]
    matches = []
    for tid in sorted(segset.track_ids):
        segments = segset.for_track(tid)
        if len(stages) == 1:
            witnesses = tuple(
                s for s in segments if _matches(stages[0], s, frame_rate)
            )
            if witnesses:
                matches.append(QueryMatch(tid, witnesses))
            continue
        chain = []
        start_after = -1
        for stage in stages:
            found = None
            for s in segments:
                if s.start > start_after and _matches(stage, s, frame_rate):
                    found = s
                    break
            if found is None:
                chain = []
                break
            chain.append(found)
            start_after = found.end
        if chain:
            matches.append(QueryMatch(tid, tuple(chain)))
    return matches
