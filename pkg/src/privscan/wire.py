"""Scan response codec shared by the service and the SDK."""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field

from .model import Detection, ScanTimings


@dataclass
class ScanResult:
    detections: list[Detection]
    images: dict[str, bytes] = field(default_factory=dict)
    cards: dict[str, dict] = field(default_factory=dict)
    timings: ScanTimings = field(default_factory=ScanTimings)
    warnings: list[str] = field(default_factory=list)
    policy_from_cache: bool = False

    def validate(self) -> "ScanResult":
        types = {d.data_type for d in self.detections}
        if set(self.images) != types or set(self.cards) != types:
            raise ValueError("images and cards must cover exactly the detected data types")
        return self


def encode_result(result: ScanResult) -> bytes:
    """JSON body with a fixed key order and base64 PNGs sorted by type id."""
    body = {
        "detections": [d.to_json() for d in result.detections],
        "images": {k: base64.b64encode(result.images[k]).decode("ascii") for k in sorted(result.images)},
        "cards": {k: result.cards[k] for k in sorted(result.cards)},
        "timings": result.timings.to_json(),
        "warnings": list(result.warnings),
        "policy_from_cache": result.policy_from_cache,
    }
    return json.dumps(body, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


def decode_result(data: bytes | str) -> ScanResult:
    obj = json.loads(data)
    return ScanResult(
        detections=[Detection.from_json(d) for d in obj["detections"]],
        images={k: base64.b64decode(v, validate=True) for k, v in obj["images"].items()},
        cards=dict(obj["cards"]),
        timings=ScanTimings(**obj["timings"]),
        warnings=list(obj.get("warnings", [])),
        policy_from_cache=bool(obj["policy_from_cache"]),
    )
