"""Extraction manifest: one CSV row per pre-cropped region image.

Schema (header required):

    path,client,video,frame,region,label,pais

``path`` is resolved relative to the manifest file's directory unless
absolute. ``pais`` must be non-empty exactly for attack rows. Every
(client, video, frame, region) combination may appear once, and all regions
must cover the same (client, video, frame) set so the emitted views align.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from .errors import ManifestError

_COLUMNS = ("path", "client", "video", "frame", "region", "label", "pais")
_LABELS = {"bonafide", "attack"}


@dataclass(frozen=True)
class ManifestRow:
    path: Path
    client: str
    video: str
    frame: int
    region: str
    label: str
    pais: str | None

    def frame_key(self) -> tuple[str, str, int]:
        return (self.client, self.video, self.frame)


@dataclass
class Manifest:
    rows: list[ManifestRow]

    @property
    def regions(self) -> list[str]:
        return sorted({r.region for r in self.rows})

    def region_rows(self, region: str) -> list[ManifestRow]:
        rows = [r for r in self.rows if r.region == region]
        return sorted(rows, key=lambda r: r.frame_key())


def load_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc

    reader = csv.DictReader(text.splitlines())
    if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != list(_COLUMNS):
        raise ManifestError(
            f"manifest header must be exactly {','.join(_COLUMNS)}, "
            f"got {reader.fieldnames}"
        )

    rows: list[ManifestRow] = []
    seen: set[tuple] = set()
    for lineno, rec in enumerate(reader, start=2):
        try:
            frame = int(rec["frame"])
        except (TypeError, ValueError):
            raise ManifestError(f"{path}:{lineno}: frame must be an integer") from None
        if frame < 0:
            raise ManifestError(f"{path}:{lineno}: frame must be non-negative")
        label = (rec["label"] or "").strip()
        if label not in _LABELS:
            raise ManifestError(f"{path}:{lineno}: unknown label {label!r}")
        pais = (rec["pais"] or "").strip() or None
        if (pais is not None) != (label == "attack"):
            raise ManifestError(
                f"{path}:{lineno}: pais must be set exactly for attack rows"
            )
        image = Path(rec["path"])
        if not image.is_absolute():
            image = path.parent / image
        row = ManifestRow(
            path=image,
            client=rec["client"].strip(),
            video=rec["video"].strip(),
            frame=frame,
            region=rec["region"].strip(),
            label=label,
            pais=pais,
        )
        if not row.client or not row.video or not row.region:
            raise ManifestError(f"{path}:{lineno}: client/video/region must be non-empty")
        key = (row.client, row.video, row.frame, row.region)
        if key in seen:
            raise ManifestError(f"{path}:{lineno}: duplicate entry for {key}")
        seen.add(key)
        rows.append(row)

    if not rows:
        raise ManifestError(f"manifest {path} has no rows")

    manifest = Manifest(rows=rows)
    reference = None
    for region in manifest.regions:
        keys = [(r.client, r.video, r.frame, r.label, r.pais) for r in manifest.region_rows(region)]
        if reference is None:
            reference = keys
        elif keys != reference:
            raise ManifestError(
                f"region {region!r} does not cover the same frames as {manifest.regions[0]!r}"
            )
    return manifest
