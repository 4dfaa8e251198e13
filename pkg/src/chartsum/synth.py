"""Synthetic chart corpus generator for desk-scale training and testing.

Summaries are assembled from sentence patterns that mention the title,
extremes, endpoints, and a trend word. Every content token is copied
verbatim from the chart (title tokens, cell text, lexicon words), so
templatization grounds every data reference and the roundtrip is exact.
Chart types follow the 3564/3199/902/640 simple-line/simple-bar/
complex-line/complex-bar distribution.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .corpus import Cell, ChartSample, Corpus, DataTable

CHART_TYPE_WEIGHTS = (
    ("simple-line", 3564),
    ("simple-bar", 3199),
    ("complex-line", 902),
    ("complex-bar", 640),
)

ENTITIES = (
    "Acme Corp", "Borealis Group", "Cascade Holdings", "Delta Dynamics",
    "Evergreen Partners", "Fairview Media", "Granite Works", "Harborline Ltd",
    "Ironwood Labs", "Juniper Systems",
)

CITIES = (
    "Berlin", "Tokyo", "Madrid", "Oslo", "Lima", "Cairo",
    "Denver", "Porto", "Quito", "Dakar", "Hanoi", "Perth",
)

SERIES = (
    "Broadcasting", "Commercial", "Matchday", "Retail", "Licensing",
    "Online", "Wholesale", "Domestic", "International", "Corporate",
)

MONTH_NAMES = (
    "January", "February", "March", "April", "May", "June",
    "July", "August", "September", "October", "November", "December",
)

DOMAINS = {
    "finance": {"metrics": ("revenue", "profit", "turnover"), "scale": "million", "unit": "euros"},
    "trade": {"metrics": ("exports", "output", "shipments"), "scale": "thousand", "unit": "tons"},
    "media": {"metrics": ("subscribers", "attendance", "viewership"), "scale": "million", "unit": "users"},
    "share": {"metrics": ("penetration", "adoption", "coverage"), "scale": "percent", "unit": ""},
}

UP_WORDS = ("increasing", "rising", "growing", "climbing")
DOWN_WORDS = ("decreasing", "declining", "falling", "dropping")


@dataclass(frozen=True)
class SynthSpec:
    n_samples: int
    seed: int = 0
    domains: tuple[str, ...] | None = None
    min_rows: int = 4
    max_rows: int = 10
    min_series: int = 2
    max_series: int = 4


def _chart_type_quota(n: int) -> list[str]:
    total = sum(w for _, w in CHART_TYPE_WEIGHTS)
    types: list[str] = []
    cum = 0.0
    prev = 0
    for name, w in CHART_TYPE_WEIGHTS:
        cum += w / total
        boundary = min(n, int(cum * n))
        types.extend([name] * (boundary - prev))
        prev = boundary
    types.extend([CHART_TYPE_WEIGHTS[0][0]] * (n - len(types)))
    return types


def _draw_values(rng: random.Random, k: int, style: str) -> list[str]:
    """k distinct formatted values; the [101, 997] integer range keeps clear
    of the 1900-2099 year window so values never collide with dates."""
    if style == "decimal":
        return [f"{v / 10:.1f}" for v in rng.sample(range(11, 1000), k)]
    if style == "thousands":
        return [f"{v * 50:,}" for v in rng.sample(range(21, 200), k)]
    return [str(v) for v in rng.sample(range(101, 998), k)]


def _x_column(rng: random.Random, n_rows: int, temporal: bool) -> tuple[str, list[str]]:
    if not temporal:
        return "City", rng.sample(CITIES, n_rows)
    if n_rows <= 12 and rng.random() < 0.2:
        return "Month", list(MONTH_NAMES[:n_rows])
    start = rng.randint(1995, 2012)
    return "Year", [str(start + i) for i in range(n_rows)]


def _trend_word(rng: random.Random, first: str, last: str) -> str:
    up = float(last.replace(",", "")) >= float(first.replace(",", ""))
    return rng.choice(UP_WORDS if up else DOWN_WORDS)


def _generate_sample(rng: random.Random, idx: int, chart_type: str, spec: SynthSpec) -> ChartSample:
    domain_names = spec.domains or tuple(DOMAINS)
    domain = DOMAINS[rng.choice(list(domain_names))]
    metric = rng.choice(domain["metrics"])
    scale = domain["scale"]
    entity = rng.choice(ENTITIES)

    is_line = chart_type.endswith("line")
    is_complex = chart_type.startswith("complex")
    n_rows = rng.randint(spec.min_rows, spec.max_rows)
    if not is_line:
        n_rows = min(n_rows, len(CITIES))
    n_series = rng.randint(spec.min_series, spec.max_series) if is_complex else 1

    x_name, x_cells = _x_column(rng, n_rows, temporal=is_line)
    style = "decimal" if scale == "percent" else rng.choice(("int", "int", "thousands"))
    values = _draw_values(rng, n_rows * n_series, style)
    columns = [values[s * n_rows:(s + 1) * n_rows] for s in range(n_series)]

    series_names = rng.sample(SERIES, n_series) if is_complex else [metric.capitalize()]
    headers = [x_name] + series_names
    rows = tuple(
        tuple(Cell.from_raw(text) for text in (x_cells[r], *(columns[s][r] for s in range(n_series))))
        for r in range(n_rows)
    )

    if is_line and x_name == "Year":
        title = f"{entity} {metric} from {x_cells[0]} to {x_cells[-1]}"
    elif is_line:
        title = f"{entity} monthly {metric}"
    else:
        title = f"{entity} {metric} by city in {rng.randint(2015, 2023)}"

    # Focus series for salient points; complex charts also call out one series.
    focus = rng.randrange(n_series)
    col = columns[focus]
    numeric = [float(v.replace(",", "")) for v in col]
    i_max = max(range(n_rows), key=lambda i: numeric[i])
    i_min = min(range(n_rows), key=lambda i: numeric[i])

    sentences: list[list[str]] = [["This", "statistic", "shows"] + title.split() + ["."]]
    if is_line:
        sentences.append(
            ["The", "highest", "value", "was", col[i_max], scale, "in", x_cells[i_max], "."]
        )
        if rng.random() < 0.7:
            sentences.append(
                ["The", "lowest", "value", "was", col[i_min], scale, "in", x_cells[i_min], "."]
            )
        if rng.random() < 0.7:
            sentences.append(
                ["The", "value", "was", col[0], scale, "in", x_cells[0],
                 "and", col[-1], scale, "in", x_cells[-1], "."]
            )
        if rng.random() < 0.8:
            sentences.append(
                ["Overall", "the", "values", "were", _trend_word(rng, col[0], col[-1]),
                 "over", "the", "period", "."]
            )
    else:
        sentences.append(
            [x_cells[i_max], "had", "the", "highest", "value", "at", col[i_max], scale, "."]
        )
        if rng.random() < 0.8:
            sentences.append(
                [x_cells[i_min], "had", "the", "lowest", "value", "at", col[i_min], scale, "."]
            )
    if is_complex and rng.random() < 0.7:
        other = (focus + 1) % n_series
        o_col = columns[other]
        o_max = max(range(n_rows), key=lambda i: float(o_col[i].replace(",", "")))
        sentences.append(
            [series_names[other], "reached", o_col[o_max], scale, "in", x_cells[o_max], "."]
        )

    summary = " ".join(" ".join(s) for s in sentences)
    unit = domain["unit"]
    y_label = f"{metric.capitalize()} in {scale} {unit}".strip()
    return ChartSample(
        id=f"synth-{spec.seed}-{idx:05d}",
        table=DataTable(headers=tuple(headers), rows=rows),
        title=title,
        x_label=x_name if is_line else "City",
        y_label=y_label,
        chart_type=chart_type,
        summary=summary,
    )


def generate_synthetic_corpus(spec: SynthSpec, seed: int | None = None) -> Corpus:
    """Deterministic synthetic corpus; `seed` overrides `spec.seed`."""
    if spec.n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = random.Random(spec.seed if seed is None else seed)
    types = _chart_type_quota(spec.n_samples)
    rng.shuffle(types)
    samples = tuple(
        _generate_sample(rng, i, chart_type, spec) for i, chart_type in enumerate(types)
    )
    return Corpus(samples=samples)
