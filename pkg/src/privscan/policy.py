"""Privacy-policy ingest: URL normalization, disk cache, HTML to text, sentences."""

from __future__ import annotations

import hashlib
import json
import os
import re
import tempfile
import threading
import time
from dataclasses import dataclass
from html.parser import HTMLParser
from pathlib import Path
from typing import Callable
from urllib.parse import urlsplit, urlunsplit

from .errors import CacheIoError, FetchError, InvalidUrlError

CACHE_TTL_SECONDS = 24 * 3600
MAX_TEXT_BYTES = 2 * 1024 * 1024
DEFAULT_CACHE_DIR = "./.privscan-cache"

# (status, body) for one GET; raise on transport failure
HttpGet = Callable[[str], "tuple[int, bytes]"]

_DEFAULT_PORTS = {"http": 80, "https": 443}


def normalize_url(raw: str) -> str:
    try:
        parts = urlsplit(raw.strip())
        port = parts.port
    except ValueError as exc:
        raise InvalidUrlError(f"unparseable URL {raw!r}: {exc}") from None
    scheme = parts.scheme.lower()
    if scheme not in _DEFAULT_PORTS:
        raise InvalidUrlError(f"only http/https policy URLs are supported, got {raw!r}")
    host = (parts.hostname or "").lower()
    if not host:
        raise InvalidUrlError(f"URL has no host: {raw!r}")
    if ":" in host:
        host = f"[{host}]"
    netloc = host if port in (None, _DEFAULT_PORTS[scheme]) else f"{host}:{port}"
    if parts.username:
        creds = parts.username + (f":{parts.password}" if parts.password else "")
        netloc = f"{creds}@{netloc}"
    return urlunsplit((scheme, netloc, parts.path or "/", parts.query, ""))


@dataclass(frozen=True)
class Sentence:
    index: int
    text: str
    offset: int


@dataclass
class PolicyDocument:
    source_url: str
    html: bytes
    text: str
    sentences: list[Sentence]
    fetched_at: float
    from_cache: bool
    truncated: bool = False


@dataclass(frozen=True)
class CacheEntry:
    key: str
    html_path: Path
    stored_at: float


def cache_key(url: str) -> str:
    return hashlib.sha256(normalize_url(url).encode("utf-8")).hexdigest()


class CacheStore:
    """``<key>.html`` + ``<key>.meta`` pairs under one directory.

    Writes go through a temp file and an atomic rename. Misses on one key
    are serialized so concurrent callers trigger a single fetch.
    """

    def __init__(self, root=None, ttl: float = CACHE_TTL_SECONDS, clock: Callable[[], float] = time.time):
        self.root = Path(root or os.environ.get("PRIVSCAN_CACHE_DIR") or DEFAULT_CACHE_DIR)
        self.ttl = ttl
        self.clock = clock
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def lock_for(self, key: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(key, threading.Lock())

    def _paths(self, key: str) -> tuple[Path, Path]:
        return self.root / f"{key}.html", self.root / f"{key}.meta"

    def lookup(self, url: str) -> CacheEntry | None:
        """Live entry for ``url`` or None when absent or older than the TTL."""
        key = cache_key(url)
        html_path, meta_path = self._paths(key)
        try:
            meta = json.loads(meta_path.read_text("utf-8"))
        except FileNotFoundError:
            return None
        except (OSError, ValueError) as exc:
            raise CacheIoError(f"unreadable cache meta {meta_path}: {exc}") from None
        stored_at = float(meta.get("stored_at", 0))
        if self.clock() - stored_at > self.ttl or not html_path.exists():
            return None
        return CacheEntry(key, html_path, stored_at)

    def read(self, entry: CacheEntry) -> bytes:
        try:
            return entry.html_path.read_bytes()
        except OSError as exc:
            raise CacheIoError(f"unreadable cache entry {entry.html_path}: {exc}") from None

    def store(self, url: str, html: bytes) -> CacheEntry:
        key = cache_key(url)
        html_path, meta_path = self._paths(key)
        stored_at = self.clock()
        try:
            self.root.mkdir(parents=True, exist_ok=True)
            _atomic_write(html_path, html)
            meta = {"stored_at": stored_at, "url": normalize_url(url)}
            _atomic_write(meta_path, json.dumps(meta).encode("utf-8"))
        except OSError as exc:
            raise CacheIoError(f"cannot write cache under {self.root}: {exc}") from None
        return CacheEntry(key, html_path, stored_at)


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def httpx_get(url: str, timeout: float = 20.0) -> tuple[int, bytes]:
    import httpx

    try:
        resp = httpx.get(url, timeout=timeout, follow_redirects=True,
                         headers={"User-Agent": "privscan/0.1 (+policy fetch)"})
    except httpx.HTTPError as exc:
        raise FetchError(f"GET {url} failed: {exc}") from None
    return resp.status_code, resp.content


def fetch_policy(url: str, cache: CacheStore, fetcher: HttpGet = httpx_get) -> PolicyDocument:
    norm = normalize_url(url)
    key = cache_key(norm)
    with cache.lock_for(key):
        entry = cache.lookup(norm)
        if entry is not None:
            html = cache.read(entry)
            from_cache, fetched_at = True, entry.stored_at
        else:
            try:
                status, html = fetcher(norm)
            except FetchError:
                raise
            except Exception as exc:
                raise FetchError(f"GET {norm} failed: {exc}") from None
            if not 200 <= status < 300:
                raise FetchError(f"GET {norm} returned HTTP {status}", status=status)
            entry = cache.store(norm, html)
            from_cache, fetched_at = False, entry.stored_at
    text, truncated = limit_text(html_to_text(html))
    return PolicyDocument(norm, html, text, split_sentences(text), fetched_at, from_cache, truncated)


# ---------------------------------------------------------------- HTML -> text

_DROP = {"script", "style", "nav", "noscript", "template", "head", "svg"}
_BLOCK = {
    "address", "article", "aside", "blockquote", "body", "br", "caption", "dd", "div", "dl", "dt",
    "fieldset", "figcaption", "figure", "footer", "form", "h1", "h2", "h3", "h4", "h5", "h6",
    "header", "hr", "html", "li", "main", "ol", "p", "pre", "section", "summary", "table", "tbody",
    "td", "tfoot", "th", "thead", "tr", "ul", "details",
}
_VOID = {"br", "hr", "img", "input", "meta", "link", "wbr", "source", "area", "base", "col"}


class _TextExtractor(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.paragraphs: list[str] = []
        self._buf: list[str] = []
        self._skip: list[str] = []

    def _flush(self):
        para = " ".join("".join(self._buf).split())
        if para:
            self.paragraphs.append(para)
        self._buf = []

    def handle_starttag(self, tag, attrs):
        if tag in _DROP and tag not in _VOID:
            self._skip.append(tag)
        elif tag in _BLOCK and not self._skip:
            self._flush()

    def handle_startendtag(self, tag, attrs):
        if tag in _BLOCK and not self._skip:
            self._flush()

    def handle_endtag(self, tag):
        if self._skip:
            if tag in self._skip:
                # tolerate unbalanced markup inside dropped regions
                while self._skip and self._skip.pop() != tag:
                    pass
            return
        if tag in _BLOCK:
            self._flush()

    def handle_data(self, data):
        if not self._skip:
            self._buf.append(data)

    def close(self):
        super().close()
        self._flush()


def html_to_text(html: bytes | str) -> str:
    if isinstance(html, bytes):
        html = html.decode("utf-8", errors="replace")
    parser = _TextExtractor()
    parser.feed(html)
    parser.close()
    return "\n".join(parser.paragraphs)


# ---------------------------------------------------------------- sentences

ABBREVIATIONS = frozenset({
    "e.g.", "i.e.", "etc.", "vs.", "cf.", "mr.", "mrs.", "ms.", "dr.", "inc.", "ltd.", "co.",
    "corp.", "no.", "u.s.", "st.", "approx.", "jr.", "sr.",
})
_TERMINATOR = re.compile(r"[.!?]+[\"')\]”’]*")


def _word_before(text: str, end: int) -> str:
    start = end
    while start > 0 and not text[start - 1].isspace():
        start -= 1
    return text[start:end].lower().lstrip("(\"'“").rstrip("\"')]”’")


def split_sentences(text: str) -> list[Sentence]:
    """Split on . ! ? followed by whitespace and an uppercase letter, or a newline.

    Newlines (paragraph breaks) always end a sentence. A terminator closing
    a known abbreviation does not. Every sentence is
    ``text[offset:offset + len(sentence)]``.
    """
    cuts = {m.start() for m in re.finditer("\n", text)}
    for m in _TERMINATOR.finditer(text):
        end = m.end()
        gap = len(text[end:]) - len(text[end:].lstrip(" \t"))
        nxt = text[end + gap:end + gap + 1]
        if gap == 0 or not (nxt.isupper() or nxt.isdigit() or (nxt and nxt in "\"'(“")):
            continue
        if _word_before(text, end) in ABBREVIATIONS:
            continue
        cuts.add(end)

    sentences = []
    start = 0
    for cut in sorted(cuts) + [len(text)]:
        if cut <= start:
            continue
        chunk = text[start:cut]
        lead = len(chunk) - len(chunk.lstrip())
        body = chunk.strip()
        if body:
            sentences.append(Sentence(len(sentences), body, start + lead))
        start = cut
    return sentences


def limit_text(text: str, max_bytes: int = MAX_TEXT_BYTES) -> tuple[str, bool]:
    """Truncate at the last sentence boundary that keeps the UTF-8 size in budget."""
    if len(text.encode("utf-8")) <= max_bytes:
        return text, False
    head = text.encode("utf-8")[:max_bytes].decode("utf-8", errors="ignore")
    sentences = split_sentences(head)
    # the last sentence of the cut may itself have been cut
    complete = sentences[:-1] if sentences else []
    if not complete:
        return "", True
    last = complete[-1]
    return text[: last.offset + len(last.text)], True
