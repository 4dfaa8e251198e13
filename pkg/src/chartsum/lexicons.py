"""Word lists and date patterns used by the variable matchers.

Lookups are case-insensitive; the stored lexeme order defines the index
carried by trend/scale variables, so the lists must never be reordered
without invalidating existing templated corpora.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

TREND_UP = (
    "increase", "increases", "increased", "increasing",
    "grow", "grows", "grew", "growing", "growth",
    "rise", "rises", "rose", "rising",
    "climb", "climbs", "climbed", "climbing",
    "gain", "gains", "gained", "gaining",
    "up", "upward", "upwards",
)

TREND_DOWN = (
    "decrease", "decreases", "decreased", "decreasing",
    "decline", "declines", "declined", "declining",
    "drop", "drops", "dropped", "dropping",
    "fall", "falls", "fell", "falling",
    "shrink", "shrinks", "shrank", "shrinking",
    "down", "downward", "downwards",
)

SCALE = (
    "hundred", "hundreds",
    "thousand", "thousands",
    "million", "millions",
    "billion", "billions",
    "trillion", "trillions",
    "percent", "percentage", "%",
)

MONTHS = (
    "january", "february", "march", "april", "may", "june",
    "july", "august", "september", "october", "november", "december",
    "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept",
    "oct", "nov", "dec",
)

YEAR_PATTERN = re.compile(r"^(19|20)\d\d$")


@dataclass(frozen=True)
class Lexicons:
    trend_up: tuple[str, ...] = TREND_UP
    trend_down: tuple[str, ...] = TREND_DOWN
    scale: tuple[str, ...] = SCALE
    months: tuple[str, ...] = MONTHS
    year_pattern: re.Pattern = YEAR_PATTERN
    _up_index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_up_index", {w: i for i, w in enumerate(self.trend_up)})
        object.__setattr__(self, "_down_index", {w: i for i, w in enumerate(self.trend_down)})
        object.__setattr__(self, "_scale_index", {w: i for i, w in enumerate(self.scale)})
        object.__setattr__(self, "_month_set", set(self.months))

    def trend_index(self, token: str) -> tuple[str, int] | None:
        t = token.lower()
        if t in self._up_index:
            return ("up", self._up_index[t])
        if t in self._down_index:
            return ("down", self._down_index[t])
        return None

    def scale_index(self, token: str) -> int | None:
        return self._scale_index.get(token.lower())

    def is_month(self, token: str) -> bool:
        return token.lower() in self._month_set

    def is_year(self, token: str) -> bool:
        return bool(self.year_pattern.match(token))

    def date_kind(self, tokens: tuple[str, ...]) -> str | None:
        """Classify a token span as a date pattern: 'year', 'month', or
        'month-year'. None when the span is not a date."""
        if len(tokens) == 1:
            if self.is_year(tokens[0]):
                return "year"
            if self.is_month(tokens[0]):
                return "month"
            return None
        if len(tokens) == 2 and self.is_month(tokens[0]) and self.is_year(tokens[1]):
            return "month-year"
        return None

    def validate(self) -> None:
        """Category lists must be disjoint."""
        up, down = set(self.trend_up), set(self.trend_down)
        scale, months = set(self.scale), set(self.months)
        for a, b in ((up, down), (up, scale), (up, months),
                     (down, scale), (down, months), (scale, months)):
            overlap = a & b
            if overlap:
                raise ValueError(f"lexicon categories overlap: {sorted(overlap)}")


DEFAULT_LEXICONS = Lexicons()
DEFAULT_LEXICONS.validate()
