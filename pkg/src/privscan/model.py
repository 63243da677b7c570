"""Shared domain types: boxes, detections, timings and the data-type taxonomy."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Literal, Mapping

from .errors import DuplicateIdError, SchemaError, TaxonomyReferenceError

_ID_RE = re.compile(r"[a-z_]+")


def normalize_phrase(phrase: str) -> str:
    return " ".join(phrase.split()).lower()


# phrases shorter than this only match on word edges ("id" must not hit "video")
WORD_EDGE_BELOW = 4


def phrase_occurs(text_lower: str, phrase: str) -> bool:
    if len(phrase) >= WORD_EDGE_BELOW:
        return phrase in text_lower
    return re.search(rf"(?<![a-z0-9]){re.escape(phrase)}(?![a-z0-9])", text_lower) is not None


def first_phrase(text: str, phrases) -> str | None:
    """First phrase (in lexicon order) occurring in ``text``, case-insensitively."""
    norm = normalize_phrase(text)
    for p in phrases:
        if phrase_occurs(norm, p):
            return p
    return None


@dataclass(frozen=True)
class DataType:
    id: str
    display_name: str

    def __post_init__(self):
        if not _ID_RE.fullmatch(self.id or ""):
            raise SchemaError(f"invalid data type id {self.id!r}")


@dataclass(frozen=True)
class BoundingBox:
    """Integer pixel box, origin top-left, right/bottom exclusive."""

    left: int
    top: int
    right: int
    bottom: int

    def __post_init__(self):
        if min(self.left, self.top) < 0 or self.left >= self.right or self.top >= self.bottom:
            raise ValueError(f"invalid box {self.as_list()}")

    @property
    def width(self) -> int:
        return self.right - self.left

    @property
    def height(self) -> int:
        return self.bottom - self.top

    @property
    def area(self) -> int:
        return self.width * self.height

    def as_list(self) -> list[int]:
        return [self.left, self.top, self.right, self.bottom]

    @classmethod
    def from_list(cls, values) -> "BoundingBox":
        if len(values) != 4 or not all(isinstance(v, int) and not isinstance(v, bool) for v in values):
            raise ValueError(f"box must be four integers, got {values!r}")
        return cls(*values)

    def intersects(self, other: "BoundingBox") -> bool:
        return (
            max(self.left, other.left) < min(self.right, other.right)
            and max(self.top, other.top) < min(self.bottom, other.bottom)
        )

    def clip(self, width: int, height: int) -> "BoundingBox | None":
        """Clip to a ``width`` x ``height`` screen; None when nothing is left."""
        l, t = max(self.left, 0), max(self.top, 0)
        r, b = min(self.right, width), min(self.bottom, height)
        if l >= r or t >= b:
            return None
        return BoundingBox(l, t, r, b)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.right, b.right) - max(a.left, b.left)
    ih = min(a.bottom, b.bottom) - max(a.top, b.top)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    data_type: str
    score: float
    source: Literal["icon", "text"]

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score out of range: {self.score}")
        if self.source not in ("icon", "text"):
            raise ValueError(f"unknown detection source {self.source!r}")

    def to_json(self) -> dict:
        return {
            "box": self.box.as_list(),
            "data_type": self.data_type,
            "score": self.score,
            "source": self.source,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "Detection":
        return cls(BoundingBox.from_list(obj["box"]), obj["data_type"], float(obj["score"]), obj["source"])


@dataclass(frozen=True)
class UiElement:
    """One entry of the UI-text sidecar (an accessibility-tree excerpt)."""

    box: BoundingBox
    text: str

    def __post_init__(self):
        if not " ".join(self.text.split()):
            raise ValueError("sidecar element text is empty")


def parse_sidecar(obj) -> list[UiElement]:
    """Validate ``{"elements": [{"box": [l,t,r,b], "text": str}, ...]}``.

    Raises ValueError on any schema violation.
    """
    if not isinstance(obj, dict) or not isinstance(obj.get("elements"), list):
        raise ValueError('sidecar must be an object with an "elements" list')
    elements = []
    for i, item in enumerate(obj["elements"]):
        if not isinstance(item, dict) or not isinstance(item.get("text"), str):
            raise ValueError(f"element {i}: expected object with string text")
        try:
            elements.append(UiElement(BoundingBox.from_list(item.get("box") or []), item["text"]))
        except (ValueError, TypeError) as exc:
            raise ValueError(f"element {i}: {exc}") from None
    return elements


def sidecar_to_json(elements: list[UiElement]) -> dict:
    return {"elements": [{"box": e.box.as_list(), "text": e.text} for e in elements]}


@dataclass(frozen=True)
class ScanTimings:
    context_detection_ms: int = 0
    segment_extraction_ms: int = 0
    cpp_presentation_ms: int = 0
    overall_ms: int = 0

    def __post_init__(self):
        parts = (self.context_detection_ms, self.segment_extraction_ms, self.cpp_presentation_ms)
        if min(*parts, self.overall_ms) < 0:
            raise ValueError("timings must be non-negative")
        # glue between stages is not attributed to any component
        if self.overall_ms < sum(parts):
            raise ValueError(f"overall_ms {self.overall_ms} below component sum {sum(parts)}")

    def to_json(self) -> dict:
        return {
            "context_detection_ms": self.context_detection_ms,
            "segment_extraction_ms": self.segment_extraction_ms,
            "cpp_presentation_ms": self.cpp_presentation_ms,
            "overall_ms": self.overall_ms,
        }


@dataclass(frozen=True)
class Taxonomy:
    types: tuple[DataType, ...]
    lexicon: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    templates: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    @property
    def ids(self) -> list[str]:
        return [t.id for t in self.types]

    def get(self, type_id: str) -> DataType:
        for t in self.types:
            if t.id == type_id:
                return t
        raise KeyError(type_id)

    def phrases(self, type_id: str) -> tuple[str, ...]:
        return self.lexicon.get(type_id, ())


def _string_list(value, where: str) -> list[str]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise SchemaError(f"{where} must be a list of strings")
    return value


def load_taxonomy(document: bytes | str) -> Taxonomy:
    """Parse and validate a taxonomy document.

    Phrases are lowercased and whitespace-normalized; duplicates collapse
    onto their first occurrence.
    """
    try:
        obj = json.loads(document)
    except (ValueError, UnicodeDecodeError) as exc:
        raise SchemaError(f"taxonomy is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise SchemaError("taxonomy must be an object")
    raw_types = obj.get("types")
    if not isinstance(raw_types, list) or not raw_types:
        raise SchemaError("taxonomy needs a non-empty types list")

    types = []
    seen = set()
    for entry in raw_types:
        if not isinstance(entry, dict) or not isinstance(entry.get("id"), str) \
                or not isinstance(entry.get("display_name"), str):
            raise SchemaError(f"malformed type entry {entry!r}")
        if entry["id"] in seen:
            raise DuplicateIdError(f"duplicate data type id {entry['id']!r}")
        seen.add(entry["id"])
        types.append(DataType(entry["id"], entry["display_name"]))

    def keyed(name: str) -> dict[str, tuple[str, ...]]:
        raw = obj.get(name, {})
        if not isinstance(raw, dict):
            raise SchemaError(f"{name} must be an object")
        out = {}
        for key, values in raw.items():
            if key not in seen:
                raise TaxonomyReferenceError(f"{name} key {key!r} has no declared data type")
            out[key] = values
        return out

    lexicon = {}
    for key, values in keyed("lexicon").items():
        phrases: list[str] = []
        for p in _string_list(values, f"lexicon[{key}]"):
            norm = normalize_phrase(p)
            if not norm:
                raise SchemaError(f"empty phrase in lexicon[{key}]")
            if norm not in phrases:
                phrases.append(norm)
        lexicon[key] = tuple(phrases)

    templates = {
        key: tuple(_string_list(values, f"templates[{key}]"))
        for key, values in keyed("templates").items()
    }
    return Taxonomy(tuple(types), lexicon, templates)


def dump_taxonomy(taxonomy: Taxonomy) -> bytes:
    obj = {
        "types": [{"id": t.id, "display_name": t.display_name} for t in taxonomy.types],
        "lexicon": {k: list(v) for k, v in taxonomy.lexicon.items()},
        "templates": {k: list(v) for k, v in taxonomy.templates.items()},
    }
    return json.dumps(obj, indent=2, ensure_ascii=False).encode("utf-8")


def data_path(*parts: str):
    """Traversable pointing into the bundled ``privscan/data`` directory."""
    node = resources.files("privscan") / "data"
    for p in parts:
        node = node / p
    return node


def default_taxonomy() -> Taxonomy:
    return load_taxonomy(data_path("taxonomy.json").read_bytes())
