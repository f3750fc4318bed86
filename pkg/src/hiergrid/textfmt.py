"""Reader for the sectioned text format shared by case, config, catalog and
operating-point files.

A file is a sequence of records, one per line. A line holding a single
upper-case word opens a section; every following non-blank line is a record
of whitespace-separated tokens belonging to that section. ``#`` starts a
comment.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path


class FormatError(ValueError):
    """Malformed input file; carries the offending location."""

    def __init__(self, message: str, source: str = "<text>", lineno: int | None = None):
        self.source = source
        self.lineno = lineno
        where = f"{source}:{lineno}" if lineno is not None else source
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class Record:
    section: str
    tokens: tuple[str, ...]
    lineno: int


def parse_sections(text: str, allowed: set[str], source: str = "<text>") -> dict[str, list[Record]]:
    out: dict[str, list[Record]] = {name: [] for name in allowed}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = tuple(line.split())
        if len(tokens) == 1 and tokens[0].isalpha() and tokens[0].isupper():
            if tokens[0] not in allowed:
                raise FormatError(f"unknown section {tokens[0]!r}", source, lineno)
            current = tokens[0]
            continue
        if current is None:
            raise FormatError("record outside of any section", source, lineno)
        out[current].append(Record(current, tokens, lineno))
    return out


def read_sections(path: str | Path, allowed: set[str]) -> dict[str, list[Record]]:
    path = Path(path)
    return parse_sections(path.read_text(encoding="utf-8"), allowed, source=str(path))


def convert(record: Record, types: tuple, names: tuple[str, ...], source: str = "<text>") -> tuple:
    """Convert a record's tokens to typed values; arity and type errors name the field."""
    if len(record.tokens) != len(types):
        raise FormatError(
            f"{record.section} record expects {len(types)} fields ({' '.join(names)}), got {len(record.tokens)}",
            source,
            record.lineno,
        )
    values = []
    for tok, typ, name in zip(record.tokens, types, names):
        try:
            if typ is bool:
                if tok not in ("0", "1", "true", "false"):
                    raise ValueError(tok)
                values.append(tok in ("1", "true"))
            else:
                values.append(typ(tok))
        except ValueError:
            raise FormatError(
                f"field {name!r} of {record.section}: cannot read {tok!r} as {typ.__name__}",
                source,
                record.lineno,
            ) from None
    return tuple(values)
