"""Bit-exact multi-view feature-pack storage.

A pack is a directory holding, per view, three files named
``<region>_<rep>.header.json``, ``<region>_<rep>.meta.jsonl`` and
``<region>_<rep>.f32``:

* header.json -- ``{"magic":"OCKR","version":1,"region":"R1","rep":"N1",
  "dim":1024,"count":M,"l2_normalized":true}``
* meta.jsonl  -- one object per row, line k describing row k:
  ``{"client":"c01","video":"v003","frame":12,"label":"bonafide","pais":null}``
* .f32        -- M x D little-endian IEEE-754 32-bit floats, row-major,
  no padding, no header.

Values are float32 on disk and widened to float64 in memory; rows are kept
in canonical (client, video, frame) order so kernels and solvers see a
deterministic layout.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np

from .errors import PackFormatError, PreconditionError

MAGIC = "OCKR"
FORMAT_VERSION = 1

LABEL_BONAFIDE = "bonafide"
LABEL_ATTACK = "attack"
_LABELS = frozenset({LABEL_BONAFIDE, LABEL_ATTACK})

#: tolerance on ||v|| - 1 for vectors declared normalised
NORM_TOL = 1e-6


@dataclass(frozen=True, order=True)
class ViewId:
    """One view of the problem: a facial-region tag plus a representation tag."""

    region: str
    rep: str

    @property
    def stem(self) -> str:
        return f"{self.region}_{self.rep}"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.stem


@dataclass(frozen=True)
class RowMeta:
    """Identity and labelling of one stored frame (shared across views)."""

    client_id: str
    video_id: str
    frame_index: int
    label: str
    pais: str | None = None

    def key(self) -> tuple:
        return (self.client_id, self.video_id, self.frame_index, self.label, self.pais)

    def sort_key(self) -> tuple:
        return (self.client_id, self.video_id, self.frame_index)


@dataclass(frozen=True)
class FeatureRow:
    """One labelled feature vector of a single view."""

    client_id: str
    video_id: str
    frame_index: int
    label: str
    vector: np.ndarray
    pais: str | None = None

    @property
    def meta(self) -> RowMeta:
        return RowMeta(self.client_id, self.video_id, self.frame_index, self.label, self.pais)


@dataclass
class FeaturePack:
    """In-memory pack: one shared row list plus one (n, dim) matrix per view.

    Row i of every view matrix refers to ``rows[i]``.
    """

    rows: list[RowMeta]
    views: dict[ViewId, np.ndarray] = field(default_factory=dict)

    @property
    def view_ids(self) -> list[ViewId]:
        return sorted(self.views)

    def __len__(self) -> int:
        return len(self.rows)

    def dim(self, view: ViewId) -> int:
        return self.views[view].shape[1]

    def matrix(self, view: ViewId) -> np.ndarray:
        return self.views[view]


def _validate_meta(meta: RowMeta) -> None:
    if meta.label not in _LABELS:
        raise PackFormatError(f"unknown label {meta.label!r}")
    if (meta.pais is not None) != (meta.label == LABEL_ATTACK):
        raise PackFormatError(
            f"pais must be present iff label is attack "
            f"(got label={meta.label!r}, pais={meta.pais!r})"
        )
    if not isinstance(meta.frame_index, int) or meta.frame_index < 0:
        raise PackFormatError(f"frame_index must be a non-negative integer, got {meta.frame_index!r}")


def _check_vectors(values: np.ndarray, view: ViewId) -> None:
    if not np.all(np.isfinite(values)):
        raise PackFormatError(f"non-finite value in view {view}")
    norms = np.linalg.norm(values, axis=1)
    if np.any(norms == 0.0):
        raise PackFormatError(f"zero vector in view {view}: cannot normalise")


def write_pack(rows_by_view: Mapping[ViewId, Sequence[FeatureRow]], path: str | Path) -> None:
    """Write a feature pack, canonicalising row order.

    Rows are sorted by (client, video, frame); all views must then carry the
    same key sequence. Vectors are stored as float32 exactly as given (after
    the float32 cast), so a write/read round trip is bit-exact.
    """
    if not rows_by_view:
        raise PreconditionError("pack must contain at least one view")
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)

    sorted_views: dict[ViewId, list[FeatureRow]] = {}
    for view, rows in rows_by_view.items():
        if not rows:
            raise PreconditionError(f"view {view} has no rows")
        sorted_views[view] = sorted(rows, key=lambda r: r.meta.sort_key())

    key_lists = {view: [r.meta.key() for r in rows] for view, rows in sorted_views.items()}
    reference_view = min(key_lists)
    reference = key_lists[reference_view]
    for view, keys in key_lists.items():
        if keys != reference:
            raise PackFormatError(f"view key mismatch between {reference_view} and {view}")

    for view, rows in sorted_views.items():
        dim = np.asarray(rows[0].vector).shape[-1]
        block = np.empty((len(rows), dim), dtype="<f4")
        for i, row in enumerate(rows):
            _validate_meta(row.meta)
            vec = np.asarray(row.vector, dtype=np.float64).reshape(-1)
            if vec.shape[0] != dim:
                raise PackFormatError(
                    f"dim mismatch in view {view}: row {i} has {vec.shape[0]}, expected {dim}"
                )
            block[i] = vec.astype("<f4")
        _check_vectors(block.astype(np.float64), view)
        norms = np.linalg.norm(block.astype(np.float64), axis=1)
        normalized = bool(np.all(np.abs(norms - 1.0) <= NORM_TOL))

        header = {
            "magic": MAGIC,
            "version": FORMAT_VERSION,
            "region": view.region,
            "rep": view.rep,
            "dim": int(dim),
            "count": len(rows),
            "l2_normalized": normalized,
        }
        (path / f"{view.stem}.header.json").write_text(
            json.dumps(header, separators=(",", ":")) + "\n", encoding="utf-8"
        )
        with (path / f"{view.stem}.meta.jsonl").open("w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(
                    json.dumps(
                        {
                            "client": row.client_id,
                            "video": row.video_id,
                            "frame": row.frame_index,
                            "label": row.label,
                            "pais": row.pais,
                        },
                        separators=(",", ":"),
                    )
                    + "\n"
                )
        (path / f"{view.stem}.f32").write_bytes(block.tobytes(order="C"))


def _read_header(header_path: Path) -> dict:
    try:
        header = json.loads(header_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise PackFormatError(f"corrupt header {header_path.name}: {exc}") from exc
    if not isinstance(header, dict) or header.get("magic") != MAGIC:
        raise PackFormatError(f"bad magic in {header_path.name}")
    if header.get("version") != FORMAT_VERSION:
        raise PackFormatError(
            f"unsupported version {header.get('version')!r} in {header_path.name}"
        )
    for key in ("region", "rep", "dim", "count", "l2_normalized"):
        if key not in header:
            raise PackFormatError(f"header {header_path.name} missing field {key!r}")
    return header


def _read_meta_lines(meta_path: Path, count: int) -> list[RowMeta]:
    rows: list[RowMeta] = []
    with meta_path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise PackFormatError(f"{meta_path.name}:{lineno + 1}: bad JSON") from exc
            meta = RowMeta(
                client_id=obj["client"],
                video_id=obj["video"],
                frame_index=obj["frame"],
                label=obj["label"],
                pais=obj.get("pais"),
            )
            _validate_meta(meta)
            rows.append(meta)
    if len(rows) != count:
        raise PackFormatError(
            f"{meta_path.name}: {len(rows)} metadata rows, header declares {count}"
        )
    return rows


def read_pack(path: str | Path) -> FeaturePack:
    """Load a pack directory, widening to float64 and enforcing invariants.

    Raw views (``l2_normalized=false``) are normalised row-wise on load;
    views declared normalised are verified within ``NORM_TOL``.
    """
    path = Path(path)
    header_paths = sorted(path.glob("*.header.json"))
    if not header_paths:
        raise PackFormatError(f"no view headers found in {path}")

    meta_by_view: dict[ViewId, list[RowMeta]] = {}
    views: dict[ViewId, np.ndarray] = {}
    for header_path in header_paths:
        header = _read_header(header_path)
        view = ViewId(region=header["region"], rep=header["rep"])
        dim, count = int(header["dim"]), int(header["count"])

        stem = header_path.name[: -len(".header.json")]
        block_path = path / f"{stem}.f32"
        meta_path = path / f"{stem}.meta.jsonl"
        if not block_path.exists() or not meta_path.exists():
            raise PackFormatError(f"view {view}: missing companion files for {stem}")

        raw = np.frombuffer(block_path.read_bytes(), dtype="<f4")
        if raw.size != count * dim:
            raise PackFormatError(
                f"view {view}: truncated value block "
                f"({raw.size} values, expected {count}x{dim})"
            )
        values = raw.reshape(count, dim).astype(np.float64)
        _check_vectors(values, view)

        norms = np.linalg.norm(values, axis=1)
        if header["l2_normalized"]:
            if np.any(np.abs(norms - 1.0) > NORM_TOL):
                worst = float(np.max(np.abs(norms - 1.0)))
                raise PackFormatError(
                    f"view {view}: declared normalised but not (max |norm-1| = {worst:.3g})"
                )
        else:
            values = values / norms[:, None]

        meta_by_view[view] = _read_meta_lines(meta_path, count)
        views[view] = values

    view_ids = sorted(views)
    reference = [m.key() for m in meta_by_view[view_ids[0]]]
    for view in view_ids[1:]:
        if [m.key() for m in meta_by_view[view]] != reference:
            raise PackFormatError(f"view key mismatch between {view_ids[0]} and {view}")

    return FeaturePack(rows=meta_by_view[view_ids[0]], views=views)


def select(pack: FeaturePack, predicate: Callable[[RowMeta], bool]) -> FeaturePack:
    """Row subset of the pack, preserving per-view alignment. May be empty."""
    idx = [i for i, meta in enumerate(pack.rows) if predicate(meta)]
    rows = [pack.rows[i] for i in idx]
    views = {view: values[idx] for view, values in pack.views.items()}
    return FeaturePack(rows=rows, views=views)


def by_client(client_id: str) -> Callable[[RowMeta], bool]:
    return lambda meta: meta.client_id == client_id


def bonafide_only() -> Callable[[RowMeta], bool]:
    return lambda meta: meta.label == LABEL_BONAFIDE


def pack_digest(pack: FeaturePack) -> str:
    """SHA-256 over the canonical on-disk representation (views in sorted order)."""
    digest = hashlib.sha256()
    for view in pack.view_ids:
        values = pack.views[view]
        digest.update(f"{view.region}/{view.rep}/{values.shape[1]}".encode())
        for meta in pack.rows:
            digest.update(json.dumps(meta.key(), separators=(",", ":")).encode())
        digest.update(np.ascontiguousarray(values.astype("<f4")).tobytes())
    return digest.hexdigest()


@dataclass(frozen=True)
class VideoFrames:
    """All frames of one (client, video), each view stacked as an (F, dim) matrix."""

    client_id: str
    video_id: str
    label: str
    pais: str | None
    frames: dict[ViewId, np.ndarray]

    @property
    def frame_count(self) -> int:
        return next(iter(self.frames.values())).shape[0]


def iter_videos(pack: FeaturePack) -> Iterator[VideoFrames]:
    """Group pack rows into videos, following canonical row order."""
    start = 0
    n = len(pack.rows)
    while start < n:
        head = pack.rows[start]
        stop = start
        while stop < n and (
            pack.rows[stop].client_id == head.client_id
            and pack.rows[stop].video_id == head.video_id
        ):
            if (pack.rows[stop].label, pack.rows[stop].pais) != (head.label, head.pais):
                raise PackFormatError(
                    f"video ({head.client_id}, {head.video_id}) mixes labels"
                )
            stop += 1
        yield VideoFrames(
            client_id=head.client_id,
            video_id=head.video_id,
            label=head.label,
            pais=head.pais,
            frames={view: values[start:stop] for view, values in pack.views.items()},
        )
        start = stop
