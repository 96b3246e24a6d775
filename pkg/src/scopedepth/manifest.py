"""Train/test split manifests for phantom colonoscopy sequences.

Manifests are JSON-lines, one record per video (or video half):

    {"segment": str, "texture": str, "video": str, "frames": int,
     "set": "Train"|"Test", "half": null|"P1"|"P2"}

``half`` marks splits that use only the first (P1) or second (P2) half of a
sequence's frames.  Two manifests ship with the package: ``c3vd_split1``
(cross-segment hold-out) and ``c3vd_split2`` (in-distribution).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

__all__ = ["ManifestError", "ManifestEntry", "SplitManifest", "parse_manifest", "load_bundled_manifest"]

_RECORD_KEYS = {"segment", "texture", "video", "frames", "set", "half"}
_SETS = {"Train", "Test"}
_HALVES = {None, "P1", "P2"}

BUNDLED_MANIFESTS = ("c3vd_split1", "c3vd_split2")


class ManifestError(ValueError):
    """Malformed or inconsistent manifest content."""


@dataclass(frozen=True)
class ManifestEntry:
    segment: str
    texture: str
    video: str
    frames: int
    subset: str  # "Train" or "Test"
    half: str | None = None

    @property
    def sequence_id(self) -> str:
        """Directory-friendly id, e.g. ``cecum_t1a`` or ``descending_t4a_p2``."""
        base = f"{self.segment.lower()}_t{self.texture}{self.video}"
        return base if self.half is None else f"{base}_{self.half.lower()}"

    @property
    def key(self) -> tuple[str, str, str, str | None]:
        return (self.segment, self.texture, self.video, self.half)


@dataclass(frozen=True)
class SplitManifest:
    entries: tuple[ManifestEntry, ...]

    @property
    def train(self) -> tuple[ManifestEntry, ...]:
        return tuple(e for e in self.entries if e.subset == "Train")

    @property
    def test(self) -> tuple[ManifestEntry, ...]:
        return tuple(e for e in self.entries if e.subset == "Test")

    def by_sequence_id(self) -> dict[str, ManifestEntry]:
        return {e.sequence_id: e for e in self.entries}


def _parse_record(line: str, lineno: int) -> ManifestEntry:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"line {lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(rec, dict):
        raise ManifestError(f"line {lineno}: record is not an object")
    if set(rec) != _RECORD_KEYS:
        missing = _RECORD_KEYS - set(rec)
        extra = set(rec) - _RECORD_KEYS
        raise ManifestError(
            f"line {lineno}: bad keys (missing {sorted(missing)}, extra {sorted(extra)})"
        )
    if rec["set"] not in _SETS:
        raise ManifestError(f"line {lineno}: unknown set label {rec['set']!r}")
    if rec["half"] not in _HALVES:
        raise ManifestError(f"line {lineno}: half must be null, \"P1\" or \"P2\", got {rec['half']!r}")
    frames = rec["frames"]
    if not isinstance(frames, int) or isinstance(frames, bool) or frames <= 0:
        raise ManifestError(f"line {lineno}: frame count must be a positive integer, got {frames!r}")
    if not all(isinstance(rec[k], str) for k in ("segment", "texture", "video")):
        raise ManifestError(f"line {lineno}: segment/texture/video must be strings")
    return ManifestEntry(
        segment=rec["segment"],
        texture=rec["texture"],
        video=rec["video"],
        frames=frames,
        subset=rec["set"],
        half=rec["half"],
    )


def parse_manifest(text: str) -> SplitManifest:
    """Parse JSON-lines manifest text, validating every record."""
    entries: list[ManifestEntry] = []
    seen: set[tuple[str, str, str, str | None]] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        entry = _parse_record(line, lineno)
        if entry.key in seen:
            raise ManifestError(f"line {lineno}: duplicate entry {entry.key}")
        seen.add(entry.key)
        entries.append(entry)
    if not entries:
        raise ManifestError("manifest holds no records")
    return SplitManifest(tuple(entries))


def load_bundled_manifest(name: str) -> SplitManifest:
    """Load one of the manifests shipped with the package.

    ``name`` is one of ``c3vd_split1`` / ``c3vd_split2`` (``split1`` and
    ``split2`` are accepted shorthands).
    """
    canonical = {"split1": "c3vd_split1", "split2": "c3vd_split2"}.get(name, name)
    if canonical not in BUNDLED_MANIFESTS:
        raise ManifestError(f"unknown bundled manifest {name!r}; available: {BUNDLED_MANIFESTS}")
    text = resources.files("scopedepth").joinpath(f"data/{canonical}.jsonl").read_text("utf-8")
    return parse_manifest(text)
