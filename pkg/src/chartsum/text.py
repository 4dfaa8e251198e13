"""Tokenization, sentence counting, and number normalization.

Every component that inspects natural-language text (corpus statistics, the
variable matchers, the evaluation metrics) goes through these functions so
that they all see the same token stream.
"""

from __future__ import annotations

import math
import re
import string

_PUNCT = frozenset(string.punctuation)
_SENTENCE_BREAK = re.compile(r"[.!?]\s+(?=[A-Z])")
_NUMBER_RE = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)$")

NUMBER_REL_TOL = 1e-9


def tokenize(text: str) -> list[str]:
    """Split on whitespace, then peel leading/trailing punctuation off each
    chunk as separate tokens. Case-preserving; internal punctuation (hyphens,
    apostrophes, thousands separators) stays inside the token."""
    tokens: list[str] = []
    for chunk in text.split():
        i, j = 0, len(chunk)
        lead: list[str] = []
        while i < j and chunk[i] in _PUNCT:
            lead.append(chunk[i])
            i += 1
        trail: list[str] = []
        while j > i and chunk[j - 1] in _PUNCT:
            trail.append(chunk[j - 1])
            j -= 1
        tokens.extend(lead)
        if i < j:
            tokens.append(chunk[i:j])
        tokens.extend(reversed(trail))
    return tokens


def detokenize(tokens: list[str]) -> str:
    return " ".join(tokens)


def sentence_count(text: str) -> int:
    """Sentences end at '. ', '! ', '? ' followed by an uppercase letter, or
    at end of text."""
    if not text.strip():
        return 0
    return len(_SENTENCE_BREAK.findall(text)) + 1


def normalize_number(token: str) -> str | None:
    """Canonical string form of a numeric token, or None if not a number.

    Strips thousands separators, trims trailing zeros after the decimal
    point, and canonicalizes the minus sign.
    """
    t = token.strip().replace(",", "").replace("−", "-")
    if not _NUMBER_RE.match(t):
        return None
    if t.startswith("+"):
        t = t[1:]
    if "." in t:
        t = t.rstrip("0").rstrip(".")
        if t in ("", "-"):
            t = t + "0"
    return t


def parse_number(token: str) -> float | None:
    n = normalize_number(token)
    return float(n) if n is not None else None


def numbers_match(a: str, b: str) -> bool:
    """True when both strings are numbers and are equal after normalization
    or numerically within relative tolerance."""
    na, nb = normalize_number(a), normalize_number(b)
    if na is None or nb is None:
        return False
    if na == nb:
        return True
    return math.isclose(float(na), float(nb), rel_tol=NUMBER_REL_TOL, abs_tol=0.0)


def format_number(x: float) -> str:
    """Canonical text for a numeric JSON cell."""
    f = float(x)
    if f.is_integer() and abs(f) < 1e15:
        return str(int(f))
    return repr(f)
