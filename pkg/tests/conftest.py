from __future__ import annotations

import numpy as np
import pytest

from ockr.featurestore import FeaturePack, FeatureRow, RowMeta, ViewId
from ockr.kernels import FusedKernelConfig, KernelParams, build_fused_gram


def unit_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    rows = rng.standard_normal((n, dim))
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def random_fused_gram(rng: np.random.Generator, n: int, n_views: int = 3, dim: int = 6):
    """Strictly-PD fused Gram from random unit rows, plus its ingredients."""
    views = [ViewId(f"R{i + 1}", "N1") for i in range(n_views)]
    matrices = {v: unit_rows(rng, n, dim) for v in views}
    params = {v: KernelParams(theta=float(rng.uniform(0.5, 3.0))) for v in views}
    config = FusedKernelConfig(views=tuple(views), params=params)
    gram = build_fused_gram(matrices, config)
    return gram, matrices, config


def make_pack(rows_spec, views=("R1_N1",), dim=4, rng=None) -> dict[ViewId, list[FeatureRow]]:
    """Per-view FeatureRow lists from (client, video, frame, label, pais) tuples."""
    rng = rng or np.random.default_rng(0)
    view_ids = [ViewId(*v.split("_", 1)) for v in views]
    out = {}
    for view in view_ids:
        out[view] = [
            FeatureRow(
                client_id=c,
                video_id=v,
                frame_index=f,
                label=label,
                pais=pais,
                vector=unit_rows(rng, 1, dim)[0],
            )
            for (c, v, f, label, pais) in rows_spec
        ]
    return out


def memory_pack(rows_spec, views=("R1_N1",), dim=4, seed=0) -> FeaturePack:
    """In-memory FeaturePack (canonical order) from row tuples."""
    rng = np.random.default_rng(seed)
    metas = sorted(
        (RowMeta(c, v, f, label, pais) for (c, v, f, label, pais) in rows_spec),
        key=lambda m: m.sort_key(),
    )
    view_ids = [ViewId(*v.split("_", 1)) for v in views]
    return FeaturePack(
        rows=list(metas),
        views={view: unit_rows(rng, len(metas), dim) for view in view_ids},
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
