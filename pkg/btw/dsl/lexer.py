"""Tokenizer for `.btw` spec files."""

from __future__ import annotations

from dataclasses import dataclass

from btw.errors import Diagnostic, Severity, SourceSpan

SYNTAX = "E100"

# Longest first so two-character operators win
PUNCTUATION = ["->", "==", "!=", "<=", ">=", "{", "}", "(", ")", "[", "]", ",", ";", ":", ".", "<", ">", "=", "+", "-", "*", "$"]


@dataclass(frozen=True)
class Token:
    kind: str  # name | ident | int | punct | eof
    text: str
    span: SourceSpan
    value: object = None

    def is_(self, kind: str, text: str | None = None) -> bool:
        return self.kind == kind and (text is None or self.text == text)

    def describe(self) -> str:
        if self.kind == "eof":
            return "end of input"
        if self.kind == "name":
            return f"name \"{self.value}\""
        return f"'{self.text}'"


def tokenize(text: str, filename: str = "<input>") -> tuple[list[Token], list[Diagnostic]]:
    tokens: list[Token] = []
    diagnostics: list[Diagnostic] = []
    line, col, i = 1, 1, 0
    n = len(text)

    def span(start_line: int, start_col: int) -> SourceSpan:
        return SourceSpan(filename, start_line, start_col, line, col)

    while i < n:
        ch = text[i]

        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
                col += 1
            continue

        start_line, start_col, start = line, col, i

        if ch == '"':
            i += 1
            col += 1
            chars = []
            closed = False
            while i < n and text[i] != "\n":
                c = text[i]
                if c == "\\" and i + 1 < n and text[i + 1] in '"\\':
                    chars.append(text[i + 1])
                    i += 2
                    col += 2
                    continue
                i += 1
                col += 1
                if c == '"':
                    closed = True
                    break
                chars.append(c)
            if not closed:
                diagnostics.append(Diagnostic(
                    SYNTAX, Severity.ERROR, "unterminated name", span(start_line, start_col),
                    hint="close the name with a double quote",
                ))
            tokens.append(Token("name", text[start:i], span(start_line, start_col), "".join(chars)))
            continue

        if ch.isdigit():
            while i < n and text[i].isdigit():
                i += 1
                col += 1
            tokens.append(Token("int", text[start:i], span(start_line, start_col), int(text[start:i])))
            continue

        if ch.isalpha() or ch == "_":
            while i < n and (text[i].isalnum() or text[i] == "_"):
                i += 1
                col += 1
            tokens.append(Token("ident", text[start:i], span(start_line, start_col)))
            continue

        for p in PUNCTUATION:
            if text.startswith(p, i):
                i += len(p)
                col += len(p)
                tokens.append(Token("punct", p, span(start_line, start_col)))
                break
        else:
            i += 1
            col += 1
            diagnostics.append(Diagnostic(
                SYNTAX, Severity.ERROR, f"unexpected character {ch!r}", span(start_line, start_col),
            ))

    tokens.append(Token("eof", "", SourceSpan(filename, line, col, line, col)))
    return tokens, diagnostics
