"""Context detection: icon template matching plus UI-text lexicon matching.

Icon matching is masked, zero-mean normalized cross-correlation on luma.
All correlations go through one FFT size per screen, so the screen spectra
are computed once and every (template, scale) pair costs a forward and an
inverse transform. Templates sharing a mask at a given scale also share the
window statistics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.fft as sfft
from PIL import Image

from .errors import TemplateLargerThanScreenError
from .imaging import check_raster, decode_png, grayscale, load_png
from .model import BoundingBox, Detection, Taxonomy, UiElement, data_path, first_phrase, iou

DEFAULT_SCALES = (0.5, 0.625, 0.78, 1.0, 1.25, 1.56, 2.0)

# windows whose luma variance is below one gray level squared count as flat
FLAT_VARIANCE = 1.0


@dataclass(frozen=True)
class DetectionParams:
    ncc_threshold: float = 0.85
    scales: tuple[float, ...] = DEFAULT_SCALES
    nms_iou: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))
        if not 0.0 < self.ncc_threshold <= 1.0:
            raise ValueError("ncc_threshold must be in (0, 1]")
        if not 0.0 < self.nms_iou < 1.0:
            raise ValueError("nms_iou must be in (0, 1)")
        if not self.scales or any(s <= 0 for s in self.scales):
            raise ValueError("scales must be positive")
        if any(b <= a for a, b in zip(self.scales, self.scales[1:])):
            raise ValueError("scales must be strictly increasing")


@dataclass
class _Scaled:
    data_type: str
    gray: np.ndarray
    mask: np.ndarray  # float64 0/1
    spectra: dict = field(default_factory=dict, repr=False)  # (kind, fft shape) -> conj spectrum


@dataclass
class IconTemplate:
    data_type: str
    name: str
    rgba: np.ndarray
    _scaled: dict = field(default_factory=dict, repr=False)

    def at_scale(self, scale: float) -> _Scaled:
        hit = self._scaled.get(scale)
        if hit is None:
            h, w = self.rgba.shape[:2]
            size = (max(1, round(w * scale)), max(1, round(h * scale)))
            img = Image.fromarray(self.rgba, "RGBA")
            if size != (w, h):
                img = img.resize(size, Image.LANCZOS)
            arr = np.asarray(img)
            hit = _Scaled(self.data_type, grayscale(arr), (arr[..., 3] >= 128).astype(np.float64))
            self._scaled[scale] = hit
        return hit


class TemplateLibrary:
    """Icon templates keyed by data type, loaded from taxonomy references."""

    def __init__(self, templates: Iterable[IconTemplate] = ()):
        self.templates = list(templates)

    def __len__(self):
        return len(self.templates)

    @classmethod
    def from_taxonomy(cls, taxonomy: Taxonomy, root=None) -> "TemplateLibrary":
        base = Path(root) if root is not None else None
        items = []
        for type_id in taxonomy.ids:
            for ref in taxonomy.templates.get(type_id, ()):
                if base is None:
                    rgba = decode_png(data_path(*ref.split("/")).read_bytes())
                else:
                    rgba = load_png(base / ref)
                items.append(IconTemplate(type_id, ref, rgba))
        return cls(items)


def _local_peaks(score: np.ndarray, threshold: float) -> list[tuple[int, int]]:
    """Positions >= threshold that strictly exceed all eight neighbours."""
    ys, xs = np.nonzero(score >= threshold)
    if ys.size == 0:
        return []
    padded = np.pad(score, 1, constant_values=-np.inf)
    centre = score[ys, xs]
    keep = np.ones(ys.size, dtype=bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy or dx:
                keep &= centre > padded[ys + 1 + dy, xs + 1 + dx]
    return list(zip(ys[keep].tolist(), xs[keep].tolist()))


class _Correlator:
    """Screen spectra shared by every correlation against one screen.

    The template numerator runs in float32; window statistics need float64
    because they subtract two large sums.
    """

    def __init__(self, gray: np.ndarray):
        self.h, self.w = gray.shape
        self.shape = (sfft.next_fast_len(self.h, real=True), sfft.next_fast_len(self.w, real=True))
        centred = gray - gray.mean()  # NCC is offset-invariant; this keeps FFT error small
        self.f_img32 = sfft.rfft2(centred.astype(np.float32), self.shape)
        self.f_img = sfft.rfft2(centred, self.shape)
        self.f_sq = sfft.rfft2(centred * centred, self.shape)

    def _valid(self, spectrum, kernel_shape) -> np.ndarray:
        kh, kw = kernel_shape
        return sfft.irfft2(spectrum, self.shape)[: self.h - kh + 1, : self.w - kw + 1]

    def _spectrum(self, kernel: np.ndarray, dtype, cache: dict | None, kind: str):
        key = (kind, self.shape)
        if cache is not None and key in cache:
            return cache[key]
        spectrum = np.conj(sfft.rfft2(kernel.astype(dtype), self.shape))
        if cache is not None:
            cache[key] = spectrum
        return spectrum

    def numerator(self, tz: np.ndarray, cache: dict | None = None) -> np.ndarray:
        return self._valid(self.f_img32 * self._spectrum(tz, np.float32, cache, "tz"), tz.shape)

    def window_variance(self, mask: np.ndarray, cache: dict | None = None) -> np.ndarray:
        """Sum of squared deviations from the masked window mean."""
        fm = self._spectrum(mask, np.float64, cache, "mask")
        s1 = self._valid(self.f_img * fm, mask.shape)
        s2 = self._valid(self.f_sq * fm, mask.shape)
        return s2 - s1 * s1 / mask.sum()


def _inverse_std(corr: _Correlator, mask: np.ndarray, cache: dict | None = None) -> np.ndarray:
    """1/sqrt(window variance), zero on flat windows."""
    var_img = corr.window_variance(mask, cache)
    flat = var_img <= FLAT_VARIANCE * mask.sum()
    out = np.zeros_like(var_img)
    np.divide(1.0, np.sqrt(var_img, where=~flat, out=np.ones_like(var_img)), where=~flat, out=out)
    return out


def ncc_map(screen_gray: np.ndarray, template_gray: np.ndarray, mask: np.ndarray | None = None,
            *, _corr: _Correlator | None = None, _inv_std: np.ndarray | None = None,
            _cache: dict | None = None) -> np.ndarray:
    """Masked zero-mean NCC of a template over every valid offset of the screen.

    Flat windows (and a flat template) score 0.
    """
    if mask is None:
        mask = np.ones_like(template_gray, dtype=np.float64)
    corr = _corr or _Correlator(screen_gray)
    n = mask.sum()
    tz = np.where(mask > 0, template_gray - (template_gray * mask).sum() / max(n, 1), 0.0)
    var_t = float((tz * tz).sum())
    if n == 0 or var_t <= FLAT_VARIANCE * n * 1e-6:
        return np.zeros((corr.h - mask.shape[0] + 1, corr.w - mask.shape[1] + 1))
    inv_std = _inverse_std(corr, mask, _cache) if _inv_std is None else _inv_std
    out = corr.numerator(tz, _cache) * inv_std
    out *= 1.0 / np.sqrt(var_t)
    return np.clip(out, -1.0, 1.0, out=out)


def match_icons(screen: np.ndarray, library: TemplateLibrary, params: DetectionParams,
                warnings: list[str] | None = None) -> list[Detection]:
    check_raster(screen)
    gray = grayscale(screen)
    h, w = gray.shape
    notes = warnings if warnings is not None else []
    corr: _Correlator | None = None
    found: list[Detection] = []
    attempted = 0
    for scale in params.scales:
        groups: dict[bytes, list[_Scaled]] = {}
        for tpl in library.templates:
            sc = tpl.at_scale(scale)
            th, tw = sc.gray.shape
            if th > h or tw > w:
                notes.append(f"template {tpl.name} at scale {scale:g} ({tw}x{th}) exceeds screen {w}x{h}; skipped")
                continue
            key = sc.mask.shape[0].to_bytes(4, "big") + sc.mask.astype(np.uint8).tobytes()
            groups.setdefault(key, []).append(sc)
        for members in groups.values():
            if corr is None:
                corr = _Correlator(gray)
            mask = members[0].mask
            inv_std = _inverse_std(corr, mask, members[0].spectra)
            th, tw = mask.shape
            for sc in members:
                attempted += 1
                score = ncc_map(gray, sc.gray, mask, _corr=corr, _inv_std=inv_std, _cache=sc.spectra)
                for y, x in _local_peaks(score, params.ncc_threshold):
                    found.append(Detection(BoundingBox(x, y, x + tw, y + th), sc.data_type,
                                           min(1.0, float(score[y, x])), "icon"))
    if library.templates and attempted == 0:
        notes.append(str(TemplateLargerThanScreenError(
            f"every template exceeds the {w}x{h} screen at every scale")))
    return found


def match_text(sidecar: Sequence[UiElement], taxonomy: Taxonomy) -> list[Detection]:
    out = []
    for element in sidecar:
        for type_id in taxonomy.ids:
            if first_phrase(element.text, taxonomy.phrases(type_id)) is not None:
                out.append(Detection(element.box, type_id, 1.0, "text"))
    return out


def _priority(indexed: tuple[int, Detection]):
    i, d = indexed
    return (-d.score, d.box.top, d.box.left, i)


def dedup_nms(detections: Sequence[Detection], nms_iou: float) -> list[Detection]:
    """Greedy per-type NMS; output keeps the score-descending visiting order."""
    kept: list[Detection] = []
    by_type: dict[str, list[Detection]] = {}
    for _, d in sorted(enumerate(detections), key=_priority):
        same = by_type.setdefault(d.data_type, [])
        if all(iou(d.box, k.box) <= nms_iou for k in same):
            same.append(d)
            kept.append(d)
    return kept


def detect_context(screen: np.ndarray, sidecar: Sequence[UiElement] | None, taxonomy: Taxonomy,
                   params: DetectionParams | None = None, library: TemplateLibrary | None = None,
                   warnings: list[str] | None = None) -> list[Detection]:
    params = params or DetectionParams()
    if library is None:
        library = TemplateLibrary.from_taxonomy(taxonomy)
    check_raster(screen)
    h, w = screen.shape[:2]
    candidates = match_icons(screen, library, params, warnings)
    if sidecar:
        for d in match_text(sidecar, taxonomy):
            box = d.box.clip(w, h)
            if box is None:
                if warnings is not None:
                    warnings.append(f"sidecar element {d.box.as_list()} lies outside the screen; ignored")
                continue
            candidates.append(Detection(box, d.data_type, d.score, d.source))
    kept = dedup_nms(candidates, params.nms_iou)
    clipped = [Detection(d.box.clip(w, h), d.data_type, d.score, d.source) for d in kept]
    return sorted(clipped, key=lambda d: (d.data_type, d.box.top, d.box.left))
