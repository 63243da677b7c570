"""Client SDK: capture sanitization, upload, two-stage decode and the scan session.

A :class:`ScanClient` owns one session and allows a single scan in flight.
The session walks Idle -> Capturing -> Uploading -> Presenting | Empty | Failed
and returns to Idle only when the caller dismisses the result.
"""

from __future__ import annotations

import enum
import io
import json
import struct
import threading
import zlib
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import httpx
import numpy as np
from PIL import Image

from .errors import (
    BusyError,
    CaptureTooLargeError,
    CorruptImageError,
    ImageSaveError,
    InsetsExceedImageError,
    NotAPngError,
)
from .imaging import PNG_SIGNATURE, check_raster, encode_png, from_pil
from .model import BoundingBox, UiElement, sidecar_to_json
from .wire import ScanResult, decode_result

MAX_DECODE_DIM = 2000
MAX_UPLOAD_BYTES = 5 * 1024 * 1024


@dataclass(frozen=True)
class CaptureInsets:
    top_px: int = 0
    bottom_px: int = 0
    exclusion_boxes: tuple[BoundingBox, ...] = ()

    def validate(self, width: int, height: int) -> None:
        if self.top_px < 0 or self.bottom_px < 0:
            raise InsetsExceedImageError("insets must be non-negative")
        if self.top_px + self.bottom_px >= height:
            raise InsetsExceedImageError(
                f"insets {self.top_px}+{self.bottom_px} leave nothing of a {height}px capture")
        for b in self.exclusion_boxes:
            if b.right > width or b.bottom > height:
                raise InsetsExceedImageError(f"exclusion box {b.as_list()} outside {width}x{height} capture")


def _median_border(image: np.ndarray) -> np.ndarray:
    border = np.concatenate([image[0], image[-1], image[:, 0], image[:, -1]])
    return np.median(border, axis=0).round().astype(np.uint8)


def sanitize_capture(capture: np.ndarray, insets: CaptureInsets) -> np.ndarray:
    """Crop the system bars, then paint each exclusion box (capture
    coordinates) with the median border colour of what remains."""
    check_raster(capture)
    h, w = capture.shape[:2]
    insets.validate(w, h)
    out = capture[insets.top_px:h - insets.bottom_px].copy()
    if insets.exclusion_boxes:
        fill = _median_border(out)
        for b in insets.exclusion_boxes:
            out[max(0, b.top - insets.top_px):max(0, b.bottom - insets.top_px), b.left:b.right] = fill
    return out


def translate_sidecar(elements: Sequence[UiElement], insets: CaptureInsets,
                      capture_height: int, capture_width: int) -> list[UiElement]:
    """Shift capture-space sidecar boxes into sanitized-screen space.

    Elements falling wholly in a cropped bar or inside an exclusion box are dropped.
    """
    content_h = capture_height - insets.top_px - insets.bottom_px
    out = []
    for e in elements:
        if any(x.left <= e.box.left and x.top <= e.box.top and e.box.right <= x.right
               and e.box.bottom <= x.bottom for x in insets.exclusion_boxes):
            continue
        b = e.box
        top, bottom = b.top - insets.top_px, b.bottom - insets.top_px
        l, t, r, bt = max(b.left, 0), max(top, 0), min(b.right, capture_width), min(bottom, content_h)
        if l < r and t < bt:
            out.append(UiElement(BoundingBox(l, t, r, bt), e.text))
    return out


def compress_capture(image: np.ndarray, limit: int = MAX_UPLOAD_BYTES) -> bytes:
    data = encode_png(image)
    if len(data) > limit:
        raise CaptureTooLargeError(f"compressed capture is {len(data)} bytes, limit {limit}")
    return data


def png_dimensions(data: bytes) -> tuple[int, int]:
    """Stage one: width and height from the IHDR chunk, no pixel decode."""
    if len(data) < 24 or not data.startswith(PNG_SIGNATURE) or data[12:16] != b"IHDR":
        raise NotAPngError("missing PNG signature or IHDR header")
    width, height = struct.unpack(">II", data[16:24])
    if width == 0 or height == 0:
        raise NotAPngError("PNG header declares an empty image")
    return width, height


def subsample_factor(width: int, height: int, max_dim: int = MAX_DECODE_DIM) -> int:
    """Smallest power of two f with max(width, height) / f <= max_dim."""
    f = 1
    while max(width, height) > max_dim * f:
        f *= 2
    return f


def decode_two_stage(data: bytes, max_dim: int = MAX_DECODE_DIM) -> np.ndarray:
    width, height = png_dimensions(data)
    f = subsample_factor(width, height, max_dim)
    try:
        with Image.open(io.BytesIO(data)) as img:
            img.load()
            if f > 1:
                # floor division of both sides; never below one pixel
                ow, oh = max(1, width // f), max(1, height // f)
                img = img.convert("RGBA").resize((ow, oh), Image.BOX, box=(0, 0, min(width, ow * f), min(height, oh * f)))
            return from_pil(img)
    except (OSError, SyntaxError, ValueError, zlib.error) as exc:
        raise CorruptImageError(f"stage-two decode failed: {exc}") from None


class SessionState(enum.Enum):
    IDLE = "Idle"
    CAPTURING = "Capturing"
    UPLOADING = "Uploading"
    PRESENTING = "Presenting"
    EMPTY = "Empty"
    FAILED = "Failed"


BUSY_STATES = (SessionState.CAPTURING, SessionState.UPLOADING)


@dataclass(frozen=True)
class ResultPage:
    """One swipeable result: a decoded overlay image and its card."""

    data_type: str
    image: np.ndarray
    card: dict


@dataclass(frozen=True)
class ScanSession:
    state: SessionState = SessionState.IDLE
    result: ScanResult | None = None
    pages: tuple[ResultPage, ...] = ()
    error: str | None = None
    policy_url: str | None = None


class ScanClient:
    """Single-in-flight scan client.

    ``http`` may be any ``httpx.Client`` (a Starlette ``TestClient`` works,
    which is how the tests drive an in-process service).
    """

    def __init__(self, endpoint: str, http: httpx.Client | None = None, *,
                 max_dim: int = MAX_DECODE_DIM, timeout: float = 60.0):
        self.endpoint = endpoint.rstrip("/")
        self.http = http or httpx.Client(timeout=timeout)
        self.max_dim = max_dim
        self._lock = threading.Lock()
        self._session = ScanSession()
        self._executor = ThreadPoolExecutor(max_workers=1, thread_name_prefix="privscan-scan")

    @property
    def session(self) -> ScanSession:
        with self._lock:
            return self._session

    def _set(self, **changes) -> ScanSession:
        with self._lock:
            self._session = replace(self._session, **changes)
            return self._session

    def submit_scan(self, capture: np.ndarray, policy_url: str, insets: CaptureInsets | None = None,
                    sidecar: Sequence[UiElement] | None = None, options: dict | None = None,
                    on_complete: Callable[[ScanSession], None] | None = None) -> "Future[ScanSession]":
        """Start a scan and return immediately; the future resolves to the final session."""
        with self._lock:
            if self._session.state is not SessionState.IDLE:
                raise BusyError(f"a scan is already {self._session.state.value}")
            self._session = ScanSession(SessionState.CAPTURING, policy_url=policy_url)
        return self._executor.submit(self._run, capture, policy_url, insets or CaptureInsets(),
                                     sidecar, options, on_complete)

    def _run(self, capture, policy_url, insets, sidecar, options, on_complete) -> ScanSession:
        try:
            screen = sanitize_capture(capture, insets)
            body = compress_capture(screen)
            files = {"screenshot": ("screenshot.png", body, "image/png")}
            data = {"policy_url": policy_url}
            if sidecar is not None:
                h, w = capture.shape[:2]
                data["ui_sidecar"] = json.dumps(sidecar_to_json(translate_sidecar(sidecar, insets, h, w)))
            if options:
                data["options"] = json.dumps(options)
            self._set(state=SessionState.UPLOADING)
            resp = self.http.post(f"{self.endpoint}/v1/scan", files=files, data=data)
            if resp.status_code != 200:
                raise RuntimeError(f"HTTP {resp.status_code}: {_error_text(resp)}")
            result = decode_result(resp.content)
            pages = tuple(ResultPage(t, decode_two_stage(result.images[t], self.max_dim),
                                     result.cards[t]) for t in sorted(result.images))
            state = SessionState.PRESENTING if result.detections else SessionState.EMPTY
            final = self._set(state=state, result=result, pages=pages)
        except Exception as exc:
            final = self._set(state=SessionState.FAILED, error=f"{type(exc).__name__}: {exc}")
        if on_complete is not None:
            on_complete(final)
        return final

    def dismiss(self) -> None:
        """Close the result viewer and return to Idle."""
        with self._lock:
            if self._session.state in BUSY_STATES:
                raise BusyError("cannot dismiss a scan that is still running")
            self._session = ScanSession()

    def close(self) -> None:
        self._executor.shutdown(wait=True)
        self.http.close()


def _error_text(resp: httpx.Response) -> str:
    try:
        obj = resp.json()
        return f"{obj.get('error')}: {obj.get('detail')}"
    except ValueError:
        return resp.text[:200]


def save_image(page: ResultPage, directory, stem: str = "scan") -> Path:
    path = Path(directory) / f"{stem}-{page.data_type}.png"
    try:
        Image.fromarray(check_raster(page.image), "RGBA").save(path, format="PNG")
    except OSError as exc:
        raise ImageSaveError(f"cannot write {path}: {exc}") from None
    return path
