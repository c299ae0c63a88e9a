"""Deterministic synthetic multi-view feature packs with tunable separability.

Randomness comes from numpy's Philox (4x64) counter-based generator keyed by
the spec seed, with a fixed draw order, so the same spec always produces
bit-identical packs on any platform.

Geometry: every client gets a unit latent direction; bona fide frames
scatter around it with the configured spread, attack frames are additionally
displaced along a per-PAIS direction scaled by the attack shift and the
species multiplier. The displacement is taken orthogonal to the client
direction: rows are L2-normalised, so a radial displacement would be erased
by normalisation. Each view observes the latent point through its own fixed
partial isometry plus independent per-view noise, so fusing views genuinely
averages the noise away.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import PreconditionError
from .featurestore import (
    LABEL_ATTACK,
    LABEL_BONAFIDE,
    FeaturePack,
    RowMeta,
    ViewId,
)


@dataclass(frozen=True)
class PaisSpec:
    """One attack-instrument species and its displacement multiplier."""

    name: str
    shift_multiplier: float = 1.0


@dataclass(frozen=True)
class SynthSpec:
    seed: int
    clients: int
    frames_per_video: int
    videos_per_client: int
    views: tuple[tuple[str, str, int], ...]  # (region, rep, dim)
    spread: float = 0.08
    attack_shift: float = 0.8
    pais_list: tuple[PaisSpec, ...] = (PaisSpec("print", 1.0), PaisSpec("replay", 0.75))
    view_noise: float = 0.0
    latent_dim: int = 8

    def __post_init__(self) -> None:
        if self.clients < 1 or self.frames_per_video < 1 or self.videos_per_client < 1:
            raise PreconditionError("clients, frames_per_video, videos_per_client must be >= 1")
        if not self.views:
            raise PreconditionError("at least one view is required")
        if any(int(dim) < 2 for _, _, dim in self.views):
            raise PreconditionError("view dims must be >= 2")
        if not self.pais_list:
            raise PreconditionError("at least one PAIS is required")
        if self.latent_dim < 1:
            raise PreconditionError("latent_dim must be >= 1")
        if self.spread < 0.0 or self.view_noise < 0.0:
            raise PreconditionError("spread and view_noise must be non-negative")

    @property
    def view_ids(self) -> list[ViewId]:
        return [ViewId(region=r, rep=n) for r, n, _ in self.views]


def spec_from_dict(obj: Mapping) -> SynthSpec:
    """Build a SynthSpec from a parsed TOML/JSON mapping."""
    try:
        views = tuple((str(r), str(n), int(d)) for r, n, d in obj["views"])
        pais = tuple(
            PaisSpec(name=str(p["name"]), shift_multiplier=float(p.get("shift", 1.0)))
            for p in obj.get("pais", [{"name": "print"}])
        )
        return SynthSpec(
            seed=int(obj["seed"]),
            clients=int(obj["clients"]),
            frames_per_video=int(obj["frames_per_video"]),
            videos_per_client=int(obj["videos_per_client"]),
            views=views,
            spread=float(obj.get("spread", 0.08)),
            attack_shift=float(obj.get("attack_shift", 0.8)),
            pais_list=pais,
            view_noise=float(obj.get("view_noise", 0.0)),
            latent_dim=int(obj.get("latent_dim", 8)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise PreconditionError(f"bad synth spec: {exc}") from exc


def _partial_isometry(rng: np.random.Generator, dim: int, latent: int) -> np.ndarray:
    """Distance-preserving random map R^latent -> R^dim (up to rank limits)."""
    g = rng.standard_normal((dim, latent))
    if dim >= latent:
        q, _ = np.linalg.qr(g)
        return q
    q, _ = np.linalg.qr(g.T)
    return q.T


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _assemble(rows: list[tuple[RowMeta, dict[ViewId, np.ndarray]]]) -> FeaturePack:
    rows = sorted(rows, key=lambda item: item[0].sort_key())
    metas = [meta for meta, _ in rows]
    views: dict[ViewId, np.ndarray] = {}
    for view in rows[0][1]:
        views[view] = np.stack([vecs[view] for _, vecs in rows])
    return FeaturePack(rows=metas, views=views)


def generate(spec: SynthSpec) -> tuple[FeaturePack, FeaturePack, FeaturePack]:
    """(enroll, dev, test) packs; enroll is bona fide only, splits are video-disjoint."""
    rng = np.random.Generator(np.random.Philox(key=np.uint64(spec.seed)))
    latent = spec.latent_dim

    client_ids = [f"c{i:02d}" for i in range(spec.clients)]
    client_dirs = {cid: _unit(rng.standard_normal(latent)) for cid in client_ids}
    pais_dirs = {p.name: _unit(rng.standard_normal(latent)) for p in spec.pais_list}
    view_maps = {
        ViewId(region=r, rep=n): _partial_isometry(rng, int(d), latent)
        for r, n, d in spec.views
    }

    # spread and view_noise are calibrated so they equal the expected
    # perturbation norm relative to the unit client direction
    latent_scale = spec.spread / np.sqrt(latent)

    def draw_frame(center: np.ndarray) -> dict[ViewId, np.ndarray]:
        t = center + latent_scale * rng.standard_normal(latent)
        out: dict[ViewId, np.ndarray] = {}
        for view, q in view_maps.items():
            dim = q.shape[0]
            x = q @ t + (spec.view_noise / np.sqrt(dim)) * rng.standard_normal(dim)
            out[view] = _unit(x)
        return out

    def draw_video(rows, cid, video_id, label, pais, center) -> None:
        for f in range(spec.frames_per_video):
            meta = RowMeta(
                client_id=cid, video_id=video_id, frame_index=f, label=label, pais=pais
            )
            rows.append((meta, draw_frame(center)))

    def attack_direction(g: np.ndarray, pais_name: str) -> np.ndarray:
        # tangential component only: unit-norm features cannot see radial shifts
        u = pais_dirs[pais_name]
        tangent = u - (u @ g) * g
        norm = np.linalg.norm(tangent)
        if norm < 1e-8:
            tangent = np.zeros(latent)
            tangent[int(np.argmin(np.abs(g)))] = 1.0
            tangent -= (tangent @ g) * g
            norm = np.linalg.norm(tangent)
        return tangent / norm

    packs = []
    for split, with_attacks in (("en", False), ("de", True), ("te", True)):
        rows: list[tuple[RowMeta, dict[ViewId, np.ndarray]]] = []
        for cid in client_ids:
            g = client_dirs[cid]
            for v in range(spec.videos_per_client):
                draw_video(rows, cid, f"{split}-{cid}-b{v:03d}", LABEL_BONAFIDE, None, g)
            if with_attacks:
                for p in spec.pais_list:
                    center = g + spec.attack_shift * p.shift_multiplier * attack_direction(g, p.name)
                    for v in range(spec.videos_per_client):
                        draw_video(
                            rows,
                            cid,
                            f"{split}-{cid}-a-{p.name}-{v:03d}",
                            LABEL_ATTACK,
                            p.name,
                            center,
                        )
        packs.append(_assemble(rows))
    return packs[0], packs[1], packs[2]
