"""Candidate placement regions and selection policies.

Region proposals arrive as a JSON file (one per scene); the semantic
reasoning that produced them is out of process. Selection is deterministic:
either the file names a region explicitly, or the highest-scoring one wins,
or an external scorer is consulted with an explicit fallback.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional


class RegionError(ValueError):
    pass


@dataclass(frozen=True)
class Region:
    id: int
    bbox: tuple[int, int, int, int]  # (x, y, w, h) in pixels
    label: str = ""
    score: Optional[float] = None


@dataclass
class RegionSet:
    image_id: str
    width: int
    height: int
    regions: list[Region] = field(default_factory=list)
    selected: Optional[int] = None


def _validate(rs: RegionSet) -> RegionSet:
    if not rs.regions:
        raise RegionError("no candidate regions")
    seen = set()
    for i, r in enumerate(rs.regions):
        if r.id in seen:
            raise RegionError(f"region {i}: duplicate id {r.id}")
        seen.add(r.id)
        x, y, w, h = r.bbox
        if w < 1 or h < 1:
            raise RegionError(f"region {i}: bbox sides must be >= 1, got {r.bbox}")
        if x < 0 or y < 0 or x + w > rs.width or y + h > rs.height:
            raise RegionError(
                f"region {i}: bbox {r.bbox} exceeds image bounds "
                f"{rs.width}x{rs.height}"
            )
    if rs.selected is not None and rs.selected not in seen:
        raise RegionError(f"selected id {rs.selected} references no region")
    return rs


def load_regions(path) -> RegionSet:
    """Parse and validate a region-proposal file.

    Expected document: {"image_id": str, "width": int, "height": int,
    "selected": int?, "regions": [{"id": int, "bbox": [x, y, w, h],
    "label": str, "score": number?}]}.
    """
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise RegionError(f"region file {path}: {e}") from e
    try:
        regions = [
            Region(
                id=int(r["id"]),
                bbox=tuple(int(v) for v in r["bbox"]),
                label=str(r.get("label", "")),
                score=None if r.get("score") is None else float(r["score"]),
            )
            for r in doc["regions"]
        ]
        rs = RegionSet(
            image_id=str(doc["image_id"]),
            width=int(doc["width"]),
            height=int(doc["height"]),
            regions=regions,
            selected=None if doc.get("selected") is None else int(doc["selected"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise RegionError(f"region file {path}: malformed document ({e})") from e
    return _validate(rs)


def select_region(
    rs: RegionSet,
    policy: str = "explicit",
    scorer: Optional[Callable[[RegionSet], dict[int, float]]] = None,
) -> Region:
    """Pick the placement region.

    explicit   -> the region named by rs.selected.
    max-score  -> highest score, ties broken by lowest id.
    external   -> scores from `scorer` (a bridge callback); falls back to
                  explicit when the scorer is missing or unreachable.
    """
    if not rs.regions:
        raise RegionError("no candidate regions")
    if policy == "explicit":
        if rs.selected is None:
            raise RegionError("explicit policy requires a selected region id")
        return next(r for r in rs.regions if r.id == rs.selected)
    if policy == "max-score":
        scored = [r for r in rs.regions if r.score is not None]
        if not scored:
            raise RegionError("max-score policy requires at least one scored region")
        return max(scored, key=lambda r: (r.score, -r.id))
    if policy == "external":
        if scorer is not None:
            try:
                scores = scorer(rs)
                best = max(rs.regions, key=lambda r: (scores.get(r.id, float("-inf")), -r.id))
                return best
            except (OSError, ConnectionError):
                pass  # bridge unavailable: fall back below
        return select_region(rs, "explicit")
    raise RegionError(f"unknown selection policy {policy!r}")


def centroid(r: Region) -> tuple[float, float]:
    """Center of the region's bounding box, real-valued (x, y)."""
    x, y, w, h = r.bbox
    return (x + w / 2.0, y + h / 2.0)
