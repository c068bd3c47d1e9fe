"""CSV input for trial responses and Likert ratings.

responses: ``participant,sigma,response`` with response ``same`` or ``different``.
likert:    ``participant,sigma,attribute,rating[,block]`` with integer ratings
           1..5. The optional block column (for instance the animation shown)
           splits a participant into several rows of the rating table; every
           (participant, block, sigma, attribute) appears once.
"""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from pathlib import Path

import numpy as np

from .fit import TrialResponse
from .stats import LikertTable

RESPONSE_COLUMNS = ("participant", "sigma", "response")
LIKERT_COLUMNS = ("participant", "sigma", "attribute", "rating")
LIKERT_BLOCK_COLUMNS = LIKERT_COLUMNS + ("block",)


class CSVFormatError(ValueError):
    """Malformed input; ``problems`` lists (line number, message) pairs."""

    def __init__(self, source: str, problems: list[tuple[int, str]]):
        self.problems = problems
        lines = "; ".join(f"line {n}: {m}" for n, m in problems[:20])
        more = f" (+{len(problems) - 20} more)" if len(problems) > 20 else ""
        super().__init__(f"{source}: {lines}{more}")


def _header(reader, allowed: tuple[tuple[str, ...], ...], source: str) -> tuple[str, ...]:
    header = next(reader, None)
    got = tuple(h.strip() for h in header) if header else ()
    if got not in allowed:
        raise CSVFormatError(source, [(1, f"header must be {','.join(allowed[0])}")])
    return got


def _rows(text: str, allowed: tuple[tuple[str, ...], ...], source: str):
    reader = csv.reader(io.StringIO(text))
    header = _header(reader, allowed, source)
    yield header
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        yield lineno, [c.strip() for c in row]


def parse_responses(text: str, source: str = "responses") -> list[TrialResponse]:
    out, problems = [], []
    rows = _rows(text, (RESPONSE_COLUMNS,), source)
    next(rows)
    for lineno, row in rows:
        if len(row) != 3:
            problems.append((lineno, f"expected 3 fields, got {len(row)}"))
            continue
        try:
            out.append(TrialResponse(row[0], float(row[1]), row[2]))
        except ValueError as exc:
            problems.append((lineno, str(exc)))
    if problems:
        raise CSVFormatError(source, problems)
    return out


def parse_likert(text: str, source: str = "likert") -> dict[str, LikertTable]:
    """One complete participant-by-level table per attribute."""
    cells: dict[str, dict[tuple[str, float], int]] = defaultdict(dict)
    problems = []
    rows = _rows(text, (LIKERT_COLUMNS, LIKERT_BLOCK_COLUMNS), source)
    width = len(next(rows))
    for lineno, row in rows:
        if len(row) != width:
            problems.append((lineno, f"expected {width} fields, got {len(row)}"))
            continue
        pid, sig, attr, rating = row[:4]
        if width == 5:
            pid = f"{pid}/{row[4]}"
        try:
            s = float(sig)
            v = int(rating)
        except ValueError:
            problems.append((lineno, "sigma must be a number and rating an integer"))
            continue
        if not 1 <= v <= 5:
            problems.append((lineno, f"rating {v} outside 1..5"))
            continue
        if (pid, s) in cells[attr]:
            problems.append((lineno, f"duplicate rating for {pid}, sigma {s:g}, {attr}"))
            continue
        cells[attr][(pid, s)] = v
    if problems:
        raise CSVFormatError(source, problems)
    tables = {}
    for attr in sorted(cells):
        pids = sorted({p for p, _ in cells[attr]})
        levels = sorted({s for _, s in cells[attr]})
        grid = np.full((len(pids), len(levels)), np.nan)
        for (p, s), v in cells[attr].items():
            grid[pids.index(p), levels.index(s)] = v
        if np.isnan(grid).any():
            raise CSVFormatError(source, [(0, f"attribute {attr}: table is incomplete")])
        tables[attr] = LikertTable(attr, tuple(levels), grid.astype(np.int64), tuple(pids))
    return tables


def read_responses(path: str | Path) -> list[TrialResponse]:
    return parse_responses(Path(path).read_text(), str(path))


def read_likert(path: str | Path) -> dict[str, LikertTable]:
    return parse_likert(Path(path).read_text(), str(path))


def format_responses(responses) -> str:
    lines = [",".join(RESPONSE_COLUMNS)]
    lines += [f"{r.participant_id},{r.sigma_px:g},{r.response}" for r in responses]
    return "\n".join(lines) + "\n"


def format_likert(tables: dict[str, LikertTable]) -> str:
    """Rows named ``participant/block`` are written back with a block column."""
    blocked = any("/" in p for t in tables.values() for p in t.participants)
    lines = [",".join(LIKERT_BLOCK_COLUMNS if blocked else LIKERT_COLUMNS)]
    for attr in sorted(tables):
        t = tables[attr]
        for i, row_id in enumerate(t.participants):
            pid, _, block = row_id.partition("/")
            for j, s in enumerate(t.levels):
                cells = [pid, f"{s:g}", attr, str(int(t.ratings[i, j]))]
                if blocked:
                    cells.append(block)
                lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
