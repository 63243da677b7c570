"""Scan service: multipart ``POST /v1/scan`` running the three timed stages."""

from __future__ import annotations

import asyncio
import json
import logging
import os
import time
from dataclasses import dataclass

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response
from starlette.concurrency import run_in_threadpool
from starlette.datastructures import UploadFile

from . import __version__
from .detection import DetectionParams, TemplateLibrary, detect_context
from .errors import CorruptImageError, FetchError, InvalidUrlError
from .imaging import decode_png, encode_png
from .model import ScanTimings, Taxonomy, UiElement, default_taxonomy, parse_sidecar
from .policy import CacheStore, HttpGet, fetch_policy, httpx_get, normalize_url
from .presentation import ExtractiveSummarizer, Summarizer, present, summarizer_from_env
from .segments import extract_segments
from .wire import ScanResult, encode_result

log = logging.getLogger(__name__)

MAX_SCREENSHOT_BYTES = 5 * 1024 * 1024
DEFAULT_MAX_CONCURRENCY = 8
DEFAULT_QUEUE_SIZE = 16


class ScanError(Exception):
    def __init__(self, status: int, code: str, detail: str, upstream_status: int | None = None):
        super().__init__(f"{status} {code}: {detail}")
        self.status = status
        self.code = code
        self.detail = detail
        self.upstream_status = upstream_status

    def body(self) -> dict:
        out = {"error": self.code, "detail": self.detail}
        if self.upstream_status is not None:
            out["upstream_status"] = self.upstream_status
        return out


@dataclass
class ScanRequest:
    screenshot: bytes
    policy_url: str
    ui_sidecar: list[UiElement] | None = None
    options: dict | None = None


_OPTION_KEYS = {"ncc_threshold", "nms_iou", "scales", "summarizer"}


def _ms(ns: int) -> int:
    return ns // 1_000_000


class ScanService:
    """Holds the long-lived pieces (taxonomy, templates, policy cache) of the pipeline."""

    def __init__(self, taxonomy: Taxonomy | None = None, library: TemplateLibrary | None = None,
                 cache: CacheStore | None = None, fetcher: HttpGet = httpx_get,
                 summarizer: Summarizer | None = None, params: DetectionParams | None = None,
                 external_summarizer: Summarizer | None = None):
        self.taxonomy = taxonomy or default_taxonomy()
        self.library = library if library is not None else TemplateLibrary.from_taxonomy(self.taxonomy)
        self.cache = cache or CacheStore()
        self.fetcher = fetcher
        self.summarizer = summarizer or ExtractiveSummarizer()
        self.external_summarizer = external_summarizer
        self.params = params or DetectionParams()

    @classmethod
    def from_env(cls) -> "ScanService":
        summarizer = summarizer_from_env()
        external = summarizer if summarizer.name == "external" else None
        return cls(summarizer=summarizer, external_summarizer=external)

    def _resolve_options(self, options: dict | None) -> tuple[DetectionParams, Summarizer]:
        if not options:
            return self.params, self.summarizer
        if not isinstance(options, dict) or set(options) - _OPTION_KEYS:
            raise ScanError(422, "BadOptions", f"options may only contain {sorted(_OPTION_KEYS)}")
        try:
            params = DetectionParams(
                ncc_threshold=float(options.get("ncc_threshold", self.params.ncc_threshold)),
                scales=tuple(options.get("scales", self.params.scales)),
                nms_iou=float(options.get("nms_iou", self.params.nms_iou)),
            )
        except (TypeError, ValueError) as exc:
            raise ScanError(422, "BadOptions", str(exc)) from None
        summarizer = self.summarizer
        choice = options.get("summarizer")
        if choice == "deterministic":
            summarizer = ExtractiveSummarizer()
        elif choice == "external":
            if self.external_summarizer is None:
                raise ScanError(422, "BadOptions", "external summarizer is not configured on this service")
            summarizer = self.external_summarizer
        elif choice is not None:
            raise ScanError(422, "BadOptions", f"unknown summarizer {choice!r}")
        return params, summarizer

    def handle_scan(self, request: ScanRequest) -> ScanResult:
        start = time.perf_counter_ns()
        try:
            policy_url = normalize_url(request.policy_url)
        except InvalidUrlError as exc:
            raise ScanError(400, "BadUrl", str(exc)) from None
        params, summarizer = self._resolve_options(request.options)
        warnings: list[str] = []

        # context detection: decode + detect
        t0 = time.perf_counter_ns()
        if len(request.screenshot) > MAX_SCREENSHOT_BYTES:
            raise ScanError(400, "BadImage", f"screenshot exceeds {MAX_SCREENSHOT_BYTES} bytes")
        try:
            screen = decode_png(request.screenshot)
        except CorruptImageError as exc:
            raise ScanError(400, "BadImage", f"screenshot is not a decodable PNG: {exc}") from None
        detections = detect_context(screen, request.ui_sidecar, self.taxonomy, params, self.library, warnings)
        t1 = time.perf_counter_ns()

        if not detections:
            timings = ScanTimings(_ms(t1 - t0), 0, 0, _ms(time.perf_counter_ns() - start))
            return ScanResult([], timings=timings, warnings=warnings)

        # segment extraction: fetch or cache read + parse + match
        try:
            doc = fetch_policy(policy_url, self.cache, self.fetcher)
        except FetchError as exc:
            raise ScanError(502, "PolicyFetchFailed", str(exc), upstream_status=exc.status) from None
        segments = extract_segments(doc, self.taxonomy)
        if doc.truncated:
            warnings.append("policy text truncated to the extraction size limit")
        t2 = time.perf_counter_ns()

        # presentation: summarize + layout + render + encode
        pages = present(screen, detections, segments, self.taxonomy, summarizer, warnings)
        images = {p.data_type: encode_png(p.image) for p in pages}
        cards = {p.data_type: p.card.to_json() for p in pages}
        t3 = time.perf_counter_ns()

        timings = ScanTimings(_ms(t1 - t0), _ms(t2 - t1), _ms(t3 - t2), _ms(time.perf_counter_ns() - start))
        return ScanResult(detections, images, cards, timings, warnings, doc.from_cache).validate()


async def _read_scan_request(request: Request) -> ScanRequest:
    try:
        form = await request.form()
    except Exception as exc:
        raise ScanError(400, "BadRequest", f"expected multipart/form-data: {exc}") from None

    shot = form.get("screenshot")
    if isinstance(shot, UploadFile):
        data = await shot.read(MAX_SCREENSHOT_BYTES + 1)
    elif isinstance(shot, str) and shot:
        data = shot.encode("latin-1", errors="replace")
    else:
        raise ScanError(400, "BadImage", "missing screenshot part")
    if len(data) > MAX_SCREENSHOT_BYTES:
        raise ScanError(400, "BadImage", f"screenshot exceeds {MAX_SCREENSHOT_BYTES} bytes")

    url = form.get("policy_url")
    if isinstance(url, UploadFile):
        url = (await url.read()).decode("utf-8", errors="replace")
    if not url:
        raise ScanError(400, "BadUrl", "missing policy_url part")

    sidecar = None
    raw = form.get("ui_sidecar")
    if raw is not None:
        if isinstance(raw, UploadFile):
            raw = await raw.read()
        try:
            sidecar = parse_sidecar(json.loads(raw))
        except (ValueError, TypeError) as exc:
            raise ScanError(422, "BadSidecar", str(exc)) from None

    options = None
    raw = form.get("options")
    if raw is not None:
        if isinstance(raw, UploadFile):
            raw = await raw.read()
        try:
            options = json.loads(raw) if raw else None
        except ValueError as exc:
            raise ScanError(422, "BadOptions", f"options is not JSON: {exc}") from None
    return ScanRequest(data, url, sidecar, options)


def create_app(service: ScanService | None = None, max_concurrency: int = DEFAULT_MAX_CONCURRENCY,
               queue_size: int = DEFAULT_QUEUE_SIZE) -> FastAPI:
    app = FastAPI(title="privscan", version=__version__)
    app.state.service = service or ScanService.from_env()
    app.state.pending = 0
    app.state.limit = asyncio.Semaphore(max_concurrency)

    @app.get("/healthz")
    async def healthz():
        return {"status": "ok", "version": __version__}

    @app.post("/v1/scan")
    async def scan(request: Request):
        if app.state.pending >= max_concurrency + queue_size:
            return JSONResponse({"error": "Overloaded", "detail": "scan queue is full"}, status_code=429)
        app.state.pending += 1
        try:
            scan_request = await _read_scan_request(request)
            async with app.state.limit:
                result = await run_in_threadpool(app.state.service.handle_scan, scan_request)
            body = await run_in_threadpool(encode_result, result)
            return Response(body, media_type="application/json")
        except ScanError as exc:
            return JSONResponse(exc.body(), status_code=exc.status)
        except Exception as exc:
            log.exception("scan failed")
            return JSONResponse({"error": "Internal", "detail": f"{type(exc).__name__}: {exc}"}, status_code=500)
        finally:
            app.state.pending -= 1

    return app


def serve(host: str = "127.0.0.1", port: int | None = None, service: ScanService | None = None) -> None:
    import uvicorn

    port = port or int(os.environ.get("PRIVSCAN_PORT", "8080"))
    uvicorn.run(create_app(service), host=host, port=port, log_level="info")
