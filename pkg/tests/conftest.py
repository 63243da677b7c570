from __future__ import annotations

import numpy as np
import pytest
from PIL import Image

from privscan.detection import TemplateLibrary
from privscan.model import BoundingBox, default_taxonomy


@pytest.fixture(scope="session")
def taxonomy():
    return default_taxonomy()


@pytest.fixture(scope="session")
def library(taxonomy):
    return TemplateLibrary.from_taxonomy(taxonomy)


def background(rng: np.random.Generator, width: int = 540, height: int = 960) -> np.ndarray:
    """Light app-like screen: flat base, a few soft panels, mild noise."""
    base = rng.integers(235, 256, size=3)
    img = np.empty((height, width, 4), dtype=np.int16)
    img[..., :3] = base
    img[..., 3] = 255
    for _ in range(rng.integers(2, 6)):
        top = int(rng.integers(0, height - 40))
        bottom = int(min(height, top + rng.integers(20, 200)))
        img[top:bottom, :, :3] = rng.integers(200, 256, size=3)
    img[..., :3] += rng.integers(-3, 4, size=(height, width, 3))
    return np.clip(img, 0, 255).astype(np.uint8)


def composite(screen: np.ndarray, rgba: np.ndarray, left: int, top: int, scale: float = 1.0) -> BoundingBox:
    """Alpha-blend ``rgba`` resized by ``scale`` onto ``screen`` in place; returns its box."""
    h, w = rgba.shape[:2]
    size = (max(1, round(w * scale)), max(1, round(h * scale)))
    icon = Image.fromarray(rgba, "RGBA")
    if size != (w, h):
        icon = icon.resize(size, Image.LANCZOS)
    base = Image.fromarray(screen, "RGBA")
    base.alpha_composite(icon, (left, top))
    screen[...] = np.asarray(base)
    return BoundingBox(left, top, left + size[0], top + size[1])


COMPOSITE_SCALES = (0.75, 1.0, 1.5)


def composite_scene(rng: np.random.Generator, library, per_screen: int = 3):
    """Screen with ``per_screen`` library icons at non-overlapping spots; returns (screen, truth)."""
    screen = background(rng)
    h, w = screen.shape[:2]
    truth: list[tuple[str, BoundingBox]] = []
    picks = rng.choice(len(library.templates), size=per_screen, replace=False)
    for i in picks:
        tpl = library.templates[int(i)]
        scale = float(rng.choice(COMPOSITE_SCALES))
        size = round(tpl.rgba.shape[0] * scale)
        for _ in range(100):
            left = int(rng.integers(0, w - size))
            top = int(rng.integers(0, h - size))
            grown = BoundingBox(max(0, left - 8), max(0, top - 8), left + size + 8, top + size + 8)
            if not any(grown.intersects(b) for _, b in truth):
                break
        truth.append((tpl.data_type, composite(screen, tpl.rgba, left, top, scale)))
    return screen, truth


# ---------------------------------------------------------------- acceptance report

_CRITERIA: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    number, title = marker.args
    detail = getattr(item, "acceptance_detail", "")
    if rep.failed:
        msg = str(call.excinfo.value).splitlines()[0] if call.excinfo else ""
        detail = f"{detail} {msg}".strip()
    _CRITERIA[number] = ("PASS" if rep.passed else "FAIL", f"{title}: {detail}" if detail else title)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        verdict, text = _CRITERIA[number]
        terminalreporter.write_line(f"[{verdict}] {number:>2}. {text}")
