"""Dataset ingestion, social-media text normalization, and corpus statistics.

Datasets are line-oriented JSONL files; each record carries an ``id``, a
``text``, and either a scalar ``label`` (binary task) or a ``labels`` list
(label names or a full 0/1 vector). Text normalization replaces emojis with
their names, drops URL and @mention tokens, strips ``#`` symbols, lowercases,
and collapses whitespace. The normalization is a fixpoint: running it twice
never changes the output.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path


class DataError(ValueError):
    """Malformed input data (bad record, unknown label, duplicate id, ...)."""


_BUNDLED_EMOJI_TABLE = "emoji_table.tsv"

# Codepoint ranges treated as emoji when deleting glyphs that have no entry
# in the name table. Covers the plane-1 pictograph blocks, legacy symbol
# blocks, variation selectors, ZWJ, and the combining keycap.
_EMOJI_RANGES = (
    (0x1F000, 0x1FFFF),
    (0x2600, 0x27BF),
    (0x2B00, 0x2BFF),
    (0x2190, 0x2199),
    (0x2B05, 0x2B07),
    (0x203C, 0x203C),
    (0x2049, 0x2049),
    (0xFE00, 0xFE0F),
    (0x200D, 0x200D),
    (0x20E3, 0x20E3),
)

_URL_PREFIXES = ("http://", "https://", "www.")


@dataclass(frozen=True)
class LabelSchema:
    """Ordered label names; length 1 means the binary task."""

    names: tuple[str, ...]

    def __post_init__(self):
        if len(self.names) < 1:
            raise DataError("schema needs at least one label")
        seen = set()
        for name in self.names:
            if not name:
                raise DataError("empty label name")
            if "\t" in name or "\n" in name:
                raise DataError(f"label name {name!r} contains tab or newline")
            if name in seen:
                raise DataError(f"duplicate label name {name!r}")
            seen.add(name)

    @property
    def n_labels(self) -> int:
        return len(self.names)

    @property
    def is_binary(self) -> bool:
        return len(self.names) == 1

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DataError(f"unknown label {name!r}") from None


@dataclass(frozen=True)
class Instance:
    """One text example: id, raw text, normalized text, gold bit vector."""

    id: str
    raw_text: str
    text: str
    labels: tuple[int, ...]


@dataclass(frozen=True)
class Dataset:
    schema: LabelSchema
    instances: tuple[Instance, ...]

    def __post_init__(self):
        width = self.schema.n_labels
        seen: set[str] = set()
        for inst in self.instances:
            if len(inst.labels) != width:
                raise DataError(
                    f"instance {inst.id!r} has {len(inst.labels)} labels, schema has {width}"
                )
            if inst.id in seen:
                raise DataError(f"duplicate id {inst.id!r}")
            seen.add(inst.id)

    def __len__(self) -> int:
        return len(self.instances)

    @property
    def ids(self) -> list[str]:
        return [inst.id for inst in self.instances]


@dataclass(frozen=True)
class PreprocessConfig:
    demojize: bool = True
    emoji_table_path: str | None = None
    strip_urls: bool = True
    strip_mentions: bool = True
    strip_hashtag_symbol: bool = True
    lowercase: bool = True
    max_tokens: int = 128

    def __post_init__(self):
        if self.max_tokens < 1:
            raise DataError("max_tokens must be >= 1")


@dataclass
class CorpusStats:
    n_instances: int
    per_label_positive: list[int]
    per_label_positive_pct: list[float]
    imbalance_ratio_per_label: list[float]  # n_neg / n_pos, math.inf when n_pos == 0
    all_zero_rows: int
    label_cardinality_histogram: dict[int, int]
    label_names: list[str] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Emoji table


def _parse_emoji_lines(lines, source: str) -> dict[str, str]:
    table: dict[str, str] = {}
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{source}: malformed emoji table line {lineno}")
        codepoints, name = parts
        try:
            seq = "".join(chr(int(cp[2:], 16)) for cp in codepoints.split())
        except (ValueError, IndexError):
            raise DataError(
                f"{source}: bad codepoint sequence {codepoints!r} at line {lineno}"
            ) from None
        if not seq:
            raise DataError(f"{source}: empty codepoint sequence at line {lineno}")
        name = " ".join(name.strip().lower().replace("_", " ").split())
        table[seq] = name
    return table


def load_emoji_table(path: str | Path | None = None) -> dict[str, str]:
    """Load an emoji name table; ``None`` loads the bundled one."""
    if path is None:
        text = (
            resources.files("polarpipe")
            .joinpath("data", _BUNDLED_EMOJI_TABLE)
            .read_text(encoding="utf-8")
        )
        return _parse_emoji_lines(text.splitlines(), _BUNDLED_EMOJI_TABLE)
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        return _parse_emoji_lines(fh, str(path))


_bundled_table_cache: dict[str, str] | None = None


def _emoji_table_for(cfg: PreprocessConfig) -> dict[str, str]:
    global _bundled_table_cache
    if cfg.emoji_table_path is not None:
        return load_emoji_table(cfg.emoji_table_path)
    if _bundled_table_cache is None:
        _bundled_table_cache = load_emoji_table(None)
    return _bundled_table_cache


def _is_emoji_char(ch: str) -> bool:
    cp = ord(ch)
    for lo, hi in _EMOJI_RANGES:
        if lo <= cp <= hi:
            return True
    return False


def _demojize(text: str, table: dict[str, str], max_seq: int) -> str:
    # longest table match first at every position, so sequences that open
    # with a plain character (keycaps like "1" + VS16 + U+20E3) still resolve
    out: list[str] = []
    i = 0
    n = len(text)
    while i < n:
        matched = False
        for k in range(min(max_seq, n - i), 0, -1):
            name = table.get(text[i : i + k])
            if name is not None:
                out.append(" " + name + " ")
                i += k
                matched = True
                break
        if matched:
            continue
        if not _is_emoji_char(text[i]):
            out.append(text[i])
        i += 1  # emoji with no table entry: delete
    return "".join(out)


# ---------------------------------------------------------------------------
# Normalization


def _is_url_token(token: str) -> bool:
    low = token.lower()
    return any(low.startswith(p) for p in _URL_PREFIXES)


def _preprocess_pass(text: str, cfg: PreprocessConfig, table, max_seq) -> str:
    if cfg.demojize:
        text = _demojize(text, table, max_seq)
    if cfg.strip_urls or cfg.strip_mentions:
        kept = []
        for token in text.split():
            if cfg.strip_urls and _is_url_token(token):
                continue
            if cfg.strip_mentions and token.startswith("@"):
                continue
            kept.append(token)
        text = " ".join(kept)
    if cfg.strip_hashtag_symbol:
        text = text.replace("#", "")
    if cfg.lowercase:
        text = text.lower()
    return " ".join(text.split())


def preprocess(raw: str, cfg: PreprocessConfig | None = None) -> str:
    """Normalize one text.

    Steps, in order: emoji-to-name replacement (unnamed emojis deleted),
    URL token removal, @mention token removal, ``#`` stripping, lowercasing,
    whitespace collapsing, trimming. The pass repeats until stable so that
    stripping a ``#`` can never leave behind a live URL or mention token.
    """
    if cfg is None:
        cfg = PreprocessConfig()
    table = _emoji_table_for(cfg) if cfg.demojize else {}
    max_seq = max((len(k) for k in table), default=1)
    text = _preprocess_pass(raw, cfg, table, max_seq)
    while True:
        again = _preprocess_pass(text, cfg, table, max_seq)
        if again == text:
            return text
        text = again


def truncate(text: str, max_tokens: int) -> str:
    """Keep at most ``max_tokens`` whitespace-delimited tokens."""
    tokens = text.split()
    if len(tokens) <= max_tokens:
        return " ".join(tokens)
    return " ".join(tokens[:max_tokens])


# ---------------------------------------------------------------------------
# JSONL ingestion


def _labels_from_record(record: dict, schema: LabelSchema, lineno: int) -> tuple[int, ...]:
    width = schema.n_labels
    if "label" in record and "labels" in record:
        raise DataError(f"both 'label' and 'labels' present at line {lineno}")
    if "label" in record:
        if width != 1:
            raise DataError(
                f"scalar 'label' at line {lineno} but schema has {width} labels"
            )
        value = record["label"]
        if value not in (0, 1) or isinstance(value, bool):
            raise DataError(f"label must be 0 or 1 at line {lineno}, got {value!r}")
        return (int(value),)
    if "labels" not in record:
        raise DataError(f"missing 'label' or 'labels' at line {lineno}")
    values = record["labels"]
    if not isinstance(values, list):
        raise DataError(f"'labels' must be a list at line {lineno}")
    if not values:
        return (0,) * width
    if all(isinstance(v, str) for v in values):
        bits = [0] * width
        for name in values:
            if name not in schema.names:
                raise DataError(f"unknown label {name!r} at line {lineno}")
            bits[schema.names.index(name)] = 1
        return tuple(bits)
    if all(isinstance(v, int) and not isinstance(v, bool) for v in values):
        if len(values) != width:
            raise DataError(
                f"label vector of length {len(values)} at line {lineno}, expected {width}"
            )
        if any(v not in (0, 1) for v in values):
            raise DataError(f"label vector entries must be 0/1 at line {lineno}")
        return tuple(int(v) for v in values)
    raise DataError(f"'labels' mixes types at line {lineno}")


def load_dataset(
    path: str | Path,
    schema: LabelSchema,
    cfg: PreprocessConfig | None = None,
) -> Dataset:
    """Read a JSONL dataset, normalizing text and mapping labels to the schema.

    Raw text is preserved on each instance; ``text`` holds the normalized,
    truncated form. Line order is preserved. Raises :class:`DataError` with
    the offending line number on malformed records, unknown label names, or
    duplicate ids.
    """
    if cfg is None:
        cfg = PreprocessConfig()
    path = Path(path)
    instances: list[Instance] = []
    seen_ids: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"malformed record at line {lineno}: {exc.msg}") from None
            if not isinstance(record, dict):
                raise DataError(f"record at line {lineno} is not an object")
            if "id" not in record:
                raise DataError(f"missing 'id' at line {lineno}")
            if not isinstance(record["id"], str):
                raise DataError(f"'id' must be a string at line {lineno}")
            if "text" not in record or not isinstance(record["text"], str):
                raise DataError(f"missing or non-string 'text' at line {lineno}")
            ident = record["id"]
            if ident in seen_ids:
                raise DataError(f"duplicate id {ident!r} at line {lineno}")
            seen_ids.add(ident)
            raw = record["text"]
            labels = _labels_from_record(record, schema, lineno)
            text = truncate(preprocess(raw, cfg), cfg.max_tokens)
            instances.append(Instance(id=ident, raw_text=raw, text=text, labels=labels))
    return Dataset(schema=schema, instances=tuple(instances))


def save_dataset(ds: Dataset, path: str | Path) -> None:
    """Write a dataset back to JSONL, preserving raw text and label names."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for inst in ds.instances:
            record: dict = {"id": inst.id, "text": inst.raw_text}
            if ds.schema.is_binary:
                record["label"] = inst.labels[0]
            else:
                record["labels"] = [
                    name for name, bit in zip(ds.schema.names, inst.labels) if bit
                ]
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# Statistics


def summarize(ds: Dataset) -> CorpusStats:
    """Per-label counts, positive rates, neg/pos ratios, and cardinality histogram."""
    if len(ds) == 0:
        raise DataError("cannot summarize an empty dataset")
    n = len(ds)
    width = ds.schema.n_labels
    positives = [0] * width
    cardinality: Counter[int] = Counter()
    for inst in ds.instances:
        active = sum(inst.labels)
        cardinality[active] += 1
        for i, bit in enumerate(inst.labels):
            positives[i] += bit
    ratios = []
    for pos in positives:
        if pos == 0:
            ratios.append(math.inf)
        else:
            ratios.append((n - pos) / pos)
    return CorpusStats(
        n_instances=n,
        per_label_positive=positives,
        per_label_positive_pct=[p / n for p in positives],
        imbalance_ratio_per_label=ratios,
        all_zero_rows=cardinality.get(0, 0),
        label_cardinality_histogram=dict(sorted(cardinality.items())),
        label_names=list(ds.schema.names),
    )
