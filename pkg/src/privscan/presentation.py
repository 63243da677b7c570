"""Per-type overlay rendering with the tallest-gap card placement heuristic."""

from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np
from PIL import ImageDraw, ImageFont

from .errors import EmptyDetectionsError
from .imaging import check_raster, from_pil, to_pil
from .model import BoundingBox, DataType, Detection, Taxonomy
from .segments import PolicySegment

log = logging.getLogger(__name__)

MAX_SUMMARY = 280
TRUNCATE_AT = 277
ELLIPSIS = "…"

CARD_WIDTH_FRACTION = 0.9
CARD_MIN_HEIGHT = 120
BOTTOM_MARGIN_FRACTION = 0.02
OUTLINE_WIDTH = 3

PALETTE = {
    "location": (220, 38, 38),
    "camera": (37, 99, 235),
    "photos": (5, 150, 105),
    "account": (124, 58, 237),
    "contacts": (217, 119, 6),
    "microphone": (219, 39, 119),
    "identifiers": (71, 85, 105),
}


def type_color(type_id: str) -> tuple[int, int, int]:
    if type_id in PALETTE:
        return PALETTE[type_id]
    digest = hashlib.sha256(type_id.encode()).digest()
    return (digest[0] // 2 + 40, digest[1] // 2 + 40, digest[2] // 2 + 40)


# ---------------------------------------------------------------- layout

@dataclass(frozen=True)
class VerticalGap:
    top: int
    bottom: int

    def __post_init__(self):
        if self.top >= self.bottom:
            raise ValueError("gap must have positive height")

    @property
    def height(self) -> int:
        return self.bottom - self.top


def compute_gaps(screen_height: int, boxes: Sequence[BoundingBox]) -> list[VerticalGap]:
    """Free y-intervals between adjacent vertical boundaries (box edges and screen edges)."""
    bounds = sorted({0, screen_height, *(b.top for b in boxes), *(b.bottom for b in boxes)})
    bounds = [y for y in bounds if 0 <= y <= screen_height]
    gaps = []
    for y1, y2 in zip(bounds, bounds[1:]):
        if not any(b.top < y2 and y1 < b.bottom for b in boxes):
            gaps.append(VerticalGap(y1, y2))
    return gaps


def select_gap(gaps: Sequence[VerticalGap]) -> VerticalGap | None:
    """Tallest gap; the topmost one wins ties."""
    best = None
    for g in gaps:
        if best is None or g.height > best.height or (g.height == best.height and g.top < best.top):
            best = g
    return best


def layout_card(gap: VerticalGap | None, screen_width: int, screen_height: int,
                required_height: int) -> tuple[BoundingBox, bool]:
    """Card box and overflow flag.

    The card is 90% of the screen wide and horizontally centred. It sits
    vertically centred in the gap when it fits, else bottom-anchored.
    """
    card_w = max(1, screen_width * 9 // 10)
    left = (screen_width - card_w) // 2
    if gap is not None and gap.height >= required_height:
        top = gap.top + (gap.height - required_height) // 2
        return BoundingBox(left, top, left + card_w, top + required_height), False
    bottom = max(1, screen_height - screen_height * 2 // 100)
    top = max(0, bottom - required_height)
    return BoundingBox(left, top, left + card_w, bottom), True


# ---------------------------------------------------------------- summaries

class Summarizer(Protocol):
    name: str

    def summarize(self, segments: Sequence[str], data_type: DataType) -> str: ...


def truncate_words(text: str, limit: int = TRUNCATE_AT) -> str:
    """Longest prefix of at most ``limit`` chars ending on a word, plus an ellipsis."""
    if len(text) <= MAX_SUMMARY:
        return text
    cut = text[:limit]
    if not text[limit].isspace():
        space = max(cut.rfind(" "), cut.rfind("\n"), cut.rfind("\t"))
        if space > 0:
            cut = cut[:space]
    return cut.rstrip() + ELLIPSIS


class ExtractiveSummarizer:
    """Deterministic fallback: the first segment sentence, shortened on a word edge."""

    name = "deterministic"

    def summarize(self, segments, data_type):
        return truncate_words(segments[0])


class ExternalSummarizer:
    """HTTP completion backend.

    POSTs ``{"data_type", "display_name", "segments", "max_chars"}`` and
    expects ``{"summary": str}`` back.
    """

    name = "external"

    def __init__(self, url: str, key: str | None = None, timeout: float = 15.0, client=None):
        import httpx

        self.url = url
        self.key = key
        self.client = client or httpx.Client(timeout=timeout)

    def summarize(self, segments, data_type):
        headers = {"Authorization": f"Bearer {self.key}"} if self.key else {}
        resp = self.client.post(self.url, headers=headers, json={
            "data_type": data_type.id,
            "display_name": data_type.display_name,
            "segments": list(segments),
            "max_chars": MAX_SUMMARY,
        })
        resp.raise_for_status()
        summary = resp.json()["summary"]
        if not isinstance(summary, str) or not summary.strip():
            raise ValueError("summarizer returned an empty summary")
        return truncate_words(" ".join(summary.split()))


def summarizer_from_env(env=None) -> Summarizer:
    env = os.environ if env is None else env
    choice = env.get("PRIVSCAN_SUMMARIZER", "deterministic")
    if choice == "deterministic":
        return ExtractiveSummarizer()
    if choice == "external":
        url = env.get("PRIVSCAN_SUMMARIZER_URL")
        if not url:
            raise ValueError("PRIVSCAN_SUMMARIZER=external needs PRIVSCAN_SUMMARIZER_URL")
        return ExternalSummarizer(url, env.get("PRIVSCAN_SUMMARIZER_KEY"))
    raise ValueError(f"unknown PRIVSCAN_SUMMARIZER {choice!r}")


_FALLBACK = ExtractiveSummarizer()


def summarize(segments: Sequence[PolicySegment], data_type: DataType, backend: Summarizer | None = None,
              warnings: list[str] | None = None) -> tuple[str, bool]:
    """Returns ``(summary, undisclosed)``; backend failures fall back silently
    except for a warning line."""
    if not segments:
        return f"No disclosure found for {data_type.display_name}.", True
    texts = [s.text for s in segments]
    backend = backend or _FALLBACK
    try:
        summary = backend.summarize(texts, data_type)
    except Exception as exc:
        if backend is _FALLBACK:
            raise
        log.warning("summarizer %s failed for %s: %s", backend.name, data_type.id, exc)
        if warnings is not None:
            warnings.append(f"summarizer {backend.name} failed for {data_type.id}: {exc}; used extractive fallback")
        summary = _FALLBACK.summarize(texts, data_type)
    return summary, False


# ---------------------------------------------------------------- rendering

@dataclass(frozen=True)
class CppCard:
    data_type: str
    summary: str
    segment_count: int
    undisclosed: bool
    box: BoundingBox
    overflow: bool = False

    def __post_init__(self):
        if not self.summary or len(self.summary) > MAX_SUMMARY:
            raise ValueError("summary must be 1..280 characters")
        if self.undisclosed != (self.segment_count == 0):
            raise ValueError("undisclosed must hold exactly when no segment was found")

    def to_json(self) -> dict:
        return {
            "summary": self.summary,
            "undisclosed": self.undisclosed,
            "segment_count": self.segment_count,
            "box": self.box.as_list(),
        }


@dataclass
class AnnotatedImage:
    data_type: str
    image: np.ndarray
    card: CppCard
    detection_boxes: list[BoundingBox]


@dataclass(frozen=True)
class CardStyle:
    padding: int
    title_font: ImageFont.FreeTypeFont | ImageFont.ImageFont
    body_font: ImageFont.FreeTypeFont | ImageFont.ImageFont
    line_gap: int

    @classmethod
    def for_width(cls, screen_width: int) -> "CardStyle":
        title = max(12, screen_width // 24)
        body = max(10, screen_width // 34)
        return cls(max(8, screen_width // 45), _font(title), _font(body), max(2, body // 4))


_FONTS: dict[int, ImageFont.FreeTypeFont | ImageFont.ImageFont] = {}


def _font(size: int):
    # Pillow's embedded default face, so metrics do not depend on system fonts
    if size not in _FONTS:
        _FONTS[size] = ImageFont.load_default(size)
    return _FONTS[size]


def _line_height(font) -> int:
    left, top, right, bottom = font.getbbox("Ag")
    return bottom - min(top, 0)


def wrap_text(text: str, font, width: int) -> list[str]:
    lines: list[str] = []
    for word in text.split():
        while font.getlength(word) > width and len(word) > 1:
            # hard-break words wider than the card
            k = len(word)
            while k > 1 and font.getlength(word[:k]) > width:
                k -= 1
            if lines and not lines[-1]:
                lines[-1] = word[:k]
            else:
                lines.append(word[:k])
            word = word[k:]
        if lines and font.getlength(f"{lines[-1]} {word}") <= width:
            lines[-1] = f"{lines[-1]} {word}"
        else:
            lines.append(word)
    return lines


def card_height(summary: str, screen_width: int, style: CardStyle | None = None) -> tuple[int, list[str]]:
    style = style or CardStyle.for_width(screen_width)
    inner = screen_width * 9 // 10 - 2 * style.padding
    lines = wrap_text(summary, style.body_font, max(1, inner))
    body_lh = _line_height(style.body_font) + style.line_gap
    height = 2 * style.padding + _line_height(style.title_font) + style.line_gap * 2 + body_lh * len(lines)
    return max(CARD_MIN_HEIGHT, height), lines


def _leader(card: BoundingBox, boxes: Sequence[BoundingBox]) -> tuple[tuple[int, int], tuple[int, int]] | None:
    def vdist(b):
        if b.bottom <= card.top:
            return card.top - b.bottom
        if b.top >= card.bottom:
            return b.top - card.bottom
        return 0

    if not boxes:
        return None
    target = min(boxes, key=lambda b: (vdist(b), b.top, b.left))
    cx = (target.left + target.right) // 2
    sx = min(max(cx, card.left), card.right - 1)
    if target.bottom <= card.top:
        return (sx, card.top), (cx, target.bottom - 1)
    if target.top >= card.bottom:
        return (sx, card.bottom - 1), (cx, target.top)
    return None  # overlapping (overflow) card: no room for a leader


def render_annotated(screen: np.ndarray, detections: Sequence[Detection], card: CppCard,
                     data_type: DataType, lines: list[str] | None = None) -> AnnotatedImage:
    check_raster(screen)
    types = {d.data_type for d in detections}
    if types - {card.data_type}:
        raise ValueError("render_annotated takes detections of the card's data type only")
    h, w = screen.shape[:2]
    color = type_color(card.data_type)
    style = CardStyle.for_width(w)
    if lines is None:
        _, lines = card_height(card.summary, w, style)

    img = to_pil(screen).copy()
    draw = ImageDraw.Draw(img)
    radius = max(4, min(w, h) // 120)
    boxes = [d.box for d in detections]
    for b in boxes:
        draw.rounded_rectangle([b.left, b.top, b.right - 1, b.bottom - 1], radius=radius,
                               outline=color + (255,), width=OUTLINE_WIDTH)
    leader = _leader(card.box, boxes)
    if leader is not None:
        draw.line(leader, fill=color + (255,), width=OUTLINE_WIDTH)

    c = card.box
    draw.rounded_rectangle([c.left, c.top, c.right - 1, c.bottom - 1], radius=radius * 2,
                           fill=(255, 255, 255, 255), outline=color + (255,), width=OUTLINE_WIDTH)
    x = c.left + style.padding
    y = c.top + style.padding
    draw.text((x, y), data_type.display_name, font=style.title_font, fill=color + (255,))
    y += _line_height(style.title_font) + style.line_gap * 2
    body_lh = _line_height(style.body_font) + style.line_gap
    for line in lines:
        if y + body_lh > c.bottom:
            break
        draw.text((x, y), line, font=style.body_font, fill=(31, 41, 55, 255))
        y += body_lh
    return AnnotatedImage(card.data_type, from_pil(img), card, boxes)


def present(screen: np.ndarray, detections: Sequence[Detection], segments: dict[str, list[PolicySegment]],
            taxonomy: Taxonomy, summarizer: Summarizer | None = None,
            warnings: list[str] | None = None) -> list[AnnotatedImage]:
    """One annotated image per detected data type, ordered by type id."""
    if not detections:
        raise EmptyDetectionsError("present() needs at least one detection")
    check_raster(screen)
    h, w = screen.shape[:2]
    style = CardStyle.for_width(w)
    out = []
    for type_id in sorted({d.data_type for d in detections}):
        mine = [d for d in detections if d.data_type == type_id]
        dtype = taxonomy.get(type_id)
        segs = segments.get(type_id, [])
        summary, undisclosed = summarize(segs, dtype, summarizer, warnings)
        needed, lines = card_height(summary, w, style)
        box, overflow = layout_card(select_gap(compute_gaps(h, [d.box for d in mine])), w, h, needed)
        card = CppCard(type_id, summary, len(segs), undisclosed, box, overflow)
        out.append(render_annotated(screen, mine, card, dtype, lines))
    return out
