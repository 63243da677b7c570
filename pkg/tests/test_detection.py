import cv2
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import background, composite, composite_scene
from privscan.detection import DetectionParams, TemplateLibrary, dedup_nms, detect_context, match_icons, ncc_map
from privscan.fixtures import load_fixture
from privscan.imaging import grayscale, solid
from privscan.model import BoundingBox, Detection, UiElement, iou


def test_params_validation():
    with pytest.raises(ValueError):
        DetectionParams(ncc_threshold=0)
    with pytest.raises(ValueError):
        DetectionParams(nms_iou=1.0)
    with pytest.raises(ValueError):
        DetectionParams(scales=(1.0, 0.5))


def test_library_loads_bundled_templates(library, taxonomy):
    assert sorted({t.data_type for t in library.templates}) == \
        sorted(t for t in taxonomy.ids if taxonomy.templates.get(t))
    assert all(t.rgba.shape == (64, 64, 4) for t in library.templates)


# --------------------------------------------------------------- NCC

def test_ncc_agrees_with_opencv(library):
    rng = np.random.default_rng(3)
    screen = background(rng, 160, 140)
    screen[..., :3] = np.clip(screen[..., :3].astype(int) + rng.integers(-30, 30, screen[..., :3].shape),
                              0, 255)
    tpl = library.templates[0]
    composite(screen, tpl.rgba, 40, 50, 1.0)
    sc = tpl.at_scale(1.0)
    ours = ncc_map(grayscale(screen), sc.gray, sc.mask)
    ref = cv2.matchTemplate(grayscale(screen).astype(np.float32), sc.gray.astype(np.float32),
                            cv2.TM_CCOEFF_NORMED, mask=sc.mask.astype(np.float32))
    assert ours.shape == ref.shape
    ok = np.isfinite(ref)
    assert ok.mean() > 0.99
    assert np.abs(ours[ok] - np.clip(ref[ok], -1, 1)).max() < 1e-3
    assert np.unravel_index(np.argmax(ours), ours.shape) == (50, 40)


def test_flat_screen_scores_zero(library):
    sc = library.templates[0].at_scale(1.0)
    flat = grayscale(solid(100, 100, (200, 200, 200, 255)))
    assert not ncc_map(flat, sc.gray, sc.mask).any()


def test_blank_screen_has_no_detections(library, taxonomy):
    for color in ((255, 255, 255, 255), (18, 18, 18, 255)):
        assert detect_context(solid(540, 960, color), None, taxonomy, library=library) == []


def test_composites_found_at_each_scale(library, taxonomy):
    rng = np.random.default_rng(11)
    for _ in range(4):
        screen, truth = composite_scene(rng, library)
        found = detect_context(screen, None, taxonomy, library=library)
        for data_type, box in truth:
            assert any(d.data_type == data_type and iou(d.box, box) >= 0.8 for d in found), (data_type, box)
        for d in found:
            assert any(iou(d.box, b) > 0 for _, b in truth), d


def test_raising_threshold_never_adds_detections(library, taxonomy):
    screen = load_fixture("posting").sanitized()[0]
    counts = [len(detect_context(screen, None, taxonomy, DetectionParams(ncc_threshold=t), library))
              for t in (0.7, 0.85, 0.95)]
    assert counts == sorted(counts, reverse=True)


def test_oversized_templates_are_skipped_with_warning(library, taxonomy):
    warnings = []
    assert match_icons(solid(40, 40), library, DetectionParams(scales=(1.0,)), warnings) == []
    assert any("exceeds" in w for w in warnings)
    assert any("every template" in w for w in warnings)


# --------------------------------------------------------------- text

def test_text_detection_and_clipping(library, taxonomy):
    screen = solid(200, 100)
    sidecar = [UiElement(BoundingBox(10, 10, 150, 30), "Use my Location"),
               UiElement(BoundingBox(150, 80, 260, 120), "Sign in"),
               UiElement(BoundingBox(300, 300, 320, 320), "Camera"),
               UiElement(BoundingBox(10, 40, 100, 60), "About")]
    warnings = []
    found = detect_context(screen, sidecar, taxonomy, library=library, warnings=warnings)
    assert [(d.data_type, d.box.as_list(), d.source) for d in found] == [
        ("account", [150, 80, 200, 100], "text"),
        ("location", [10, 10, 150, 30], "text"),
    ]
    assert any("outside the screen" in w for w in warnings)


def test_absent_and_empty_sidecar_are_equivalent(library, taxonomy):
    screen = load_fixture("posting").sanitized()[0]
    assert detect_context(screen, None, taxonomy, library=library) == \
        detect_context(screen, [], taxonomy, library=library)


def test_exclusion_box_hides_covered_icon(library, taxonomy):
    fx = load_fixture("home")
    screen, sidecar = fx.sanitized()
    assert [d.source for d in detect_context(screen, sidecar, taxonomy, library=library)] == ["icon", "text"]
    # the floating button sits under the exclusion box and is painted over
    b = fx.insets.exclusion_boxes[0]
    region = screen[b.top - fx.insets.top_px:b.bottom - fx.insets.top_px, b.left:b.right]
    assert (region == region[0, 0]).all()


# --------------------------------------------------------------- NMS

def brute_force_nms(dets, thr):
    """Reference: repeatedly take the best remaining, drop its overlaps of the same type."""
    remaining = list(range(len(dets)))
    out = []
    while remaining:
        best = min(remaining, key=lambda i: (-dets[i].score, dets[i].box.top, dets[i].box.left, i))
        out.append(dets[best])
        remaining = [i for i in remaining if i != best and not (
            dets[i].data_type == dets[best].data_type and iou(dets[i].box, dets[best].box) > thr)]
    return out


@st.composite
def detection_sets(draw, max_size=50):
    n = draw(st.integers(0, max_size))
    out = []
    for _ in range(n):
        left, top = draw(st.integers(0, 80)), draw(st.integers(0, 80))
        w, h = draw(st.integers(1, 30)), draw(st.integers(1, 30))
        score = draw(st.sampled_from([0.5, 0.8, 0.9, 1.0]))
        out.append(Detection(BoundingBox(left, top, left + w, top + h),
                             draw(st.sampled_from(["camera", "photos"])), score, "icon"))
    return out


@settings(max_examples=150, deadline=None)
@given(detection_sets(), st.sampled_from([0.3, 0.5, 0.7]))
def test_nms_matches_brute_force(dets, thr):
    assert dedup_nms(dets, thr) == brute_force_nms(dets, thr)


@settings(max_examples=100, deadline=None)
@given(detection_sets())
def test_nms_survivors_do_not_overlap(dets):
    kept = dedup_nms(dets, 0.5)
    for i, a in enumerate(kept):
        for b in kept[i + 1:]:
            assert a.data_type != b.data_type or iou(a.box, b.box) <= 0.5
    assert dedup_nms(kept, 0.5) == kept


def test_nms_keeps_other_types():
    box = BoundingBox(0, 0, 10, 10)
    dets = [Detection(box, "camera", 0.9, "icon"), Detection(box, "photos", 0.8, "icon"),
            Detection(box, "camera", 0.95, "icon")]
    assert dedup_nms(dets, 0.5) == [dets[2], dets[1]]


def test_library_from_root(tmp_path, taxonomy):
    import shutil

    from privscan.model import data_path

    (tmp_path / "templates").mkdir()
    for type_id in taxonomy.ids:
        for ref in taxonomy.templates.get(type_id, ()):
            shutil.copyfile(str(data_path(*ref.split("/"))), tmp_path / ref)
    assert len(TemplateLibrary.from_taxonomy(taxonomy, tmp_path)) == 6
