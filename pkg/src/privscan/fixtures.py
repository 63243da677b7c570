"""Bundled dummy-app captures (home, posting, settings, rewards) and policy."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .client import CaptureInsets, sanitize_capture, translate_sidecar
from .imaging import decode_png
from .model import BoundingBox, UiElement, data_path, parse_sidecar


@lru_cache(maxsize=1)
def manifest() -> dict:
    return json.loads(data_path("fixtures", "manifest.json").read_text("utf-8"))


def fixture_insets() -> CaptureInsets:
    raw = manifest()["insets"]
    return CaptureInsets(raw["top_px"], raw["bottom_px"],
                         tuple(BoundingBox.from_list(b) for b in raw["exclusion_boxes"]))


def policy_html() -> bytes:
    return data_path("fixtures", manifest()["policy"]).read_bytes()


@dataclass(frozen=True)
class Fixture:
    name: str
    capture: np.ndarray
    sidecar: tuple[UiElement, ...]
    insets: CaptureInsets

    def sanitized(self) -> tuple[np.ndarray, list[UiElement]]:
        """Screen and sidecar as the SDK would upload them."""
        h, w = self.capture.shape[:2]
        return (sanitize_capture(self.capture, self.insets),
                translate_sidecar(self.sidecar, self.insets, h, w))


def load_fixture(name: str) -> Fixture:
    if name not in manifest()["pages"]:
        raise KeyError(f"unknown fixture {name!r}")
    capture = decode_png(data_path("fixtures", f"{name}.png").read_bytes())
    sidecar = parse_sidecar(json.loads(data_path("fixtures", f"{name}.sidecar.json").read_text("utf-8")))
    return Fixture(name, capture, tuple(sidecar), fixture_insets())


def condition_fixtures() -> dict[str, Fixture]:
    """The three timed conditions, keyed icon_only / text_only / mixed."""
    return {cond: load_fixture(page) for cond, page in manifest()["conditions"].items()}
