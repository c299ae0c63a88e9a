"""Client-specific and client-independent one-class model training and storage.

A model keeps only the support rows whose lasso coefficients are nonzero, so
operational scoring cost scales with the coefficient cardinality rather than
with the enrolment size. Bundles are stored as a single JSON file with
float blocks hex-encoded (base-16 of the little-endian float64 bytes) so a
save/load round trip is bit-exact.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import PackFormatError, PreconditionError, ProtocolError
from .featurestore import (
    LABEL_BONAFIDE,
    FeaturePack,
    ViewId,
    by_client,
    pack_digest,
    select,
)
from .kernels import FusedKernelConfig, build_fused_gram, fit_view_bandwidths
from .regression import solve_dense, solve_lars_path

BUNDLE_MAGIC = "OCKR-BUNDLE"
BUNDLE_VERSION = 1

GLOBAL_CLIENT_ID = "__global__"

MODE_CLIENT_SPECIFIC = "client_specific"
MODE_CLIENT_INDEPENDENT = "client_independent"


@dataclass(frozen=True)
class Calibration:
    """Gaussian fit of bona fide raw frame scores."""

    mu: float
    sigma: float

    def __post_init__(self) -> None:
        if not self.sigma > 0.0:
            raise PreconditionError(f"sigma must be positive, got {self.sigma!r}")


@dataclass
class ClientModel:
    client_id: str
    config: FusedKernelConfig
    support: dict[ViewId, np.ndarray]  # (M, dim) per view, in alpha index order
    alpha_values: np.ndarray  # (M,)
    alpha_indices: np.ndarray  # (M,) positions into the training rows
    calibration: Calibration | None = None
    tau: float | None = None
    provenance: dict = field(default_factory=dict)

    @property
    def nnz(self) -> int:
        return int(self.alpha_values.shape[0])

    @property
    def views(self) -> tuple[ViewId, ...]:
        return self.config.views

    def kernel_evaluations_per_frame(self) -> int:
        """Exact kernel-evaluation count to score one frame: M times the view count."""
        return self.nnz * len(self.config.views)


@dataclass
class ModelBundle:
    models: dict[str, ClientModel] = field(default_factory=dict)
    version: int = BUNDLE_VERSION
    provenance: dict = field(default_factory=dict)

    def __getitem__(self, client_id: str) -> ClientModel:
        try:
            return self.models[client_id]
        except KeyError:
            raise PreconditionError(f"no model for client {client_id!r} in bundle") from None

    def __len__(self) -> int:
        return len(self.models)


def train_client(
    pack: FeaturePack,
    client_id: str | None,
    target_nnz: int | None,
    mode: str = MODE_CLIENT_SPECIFIC,
    views: Sequence[ViewId] | None = None,
    jitter: float = 0.0,
) -> ClientModel:
    """Fit one sparse one-class model from bona fide enrolment rows.

    In client_specific mode only the named client's rows are used; in
    client_independent mode the bona fide rows of the whole pack are pooled
    under the ``__global__`` id. Any attack-labelled row in the selected
    training set is a protocol violation and raises.

    ``target_nnz=None`` selects the non-sparse baseline: a dense solve whose
    model keeps every training row as support.
    """
    if mode == MODE_CLIENT_SPECIFIC:
        if client_id is None:
            raise PreconditionError("client_specific training requires a client id")
        train = select(pack, by_client(client_id))
        model_id = client_id
    elif mode == MODE_CLIENT_INDEPENDENT:
        train = pack
        model_id = GLOBAL_CLIENT_ID
    else:
        raise PreconditionError(f"unknown training mode {mode!r}")

    bad = [m for m in train.rows if m.label != LABEL_BONAFIDE]
    if bad:
        raise ProtocolError(
            f"training set for {model_id!r} contains {len(bad)} attack-labelled rows; "
            "one-class training uses bona fide samples only"
        )
    if len(train) < 2:
        raise PreconditionError(
            f"training set for {model_id!r} has {len(train)} rows; need at least 2"
        )

    view_ids = list(views) if views is not None else train.view_ids
    missing = [v for v in view_ids if v not in train.views]
    if missing:
        raise PreconditionError(f"pack is missing requested views {missing}")

    matrices = {v: train.views[v] for v in view_ids}
    config = fit_view_bandwidths(matrices, view_ids, jitter=jitter)
    keys = [m.key() for m in train.rows]
    gram = build_fused_gram(matrices, config, row_keys=keys)

    if target_nnz is None:
        dense = solve_dense(gram, jitter=config.jitter)
        indices = np.arange(len(train))
        values = dense.alpha
        nnz, shortfall, delta = int(len(train)), False, 0.0
        solver = "dense"
    else:
        solution = solve_lars_path(gram, target_nnz, jitter=config.jitter)
        if solution.nnz == 0:
            raise PreconditionError(
                f"lasso path for {model_id!r} returned an empty model (degenerate training set)"
            )
        if solution.shortfall:
            warnings.warn(
                f"model {model_id!r}: path ended at nnz={solution.nnz} < target {target_nnz}",
                stacklevel=2,
            )
        indices, values = solution.indices, solution.values
        nnz, shortfall, delta = solution.nnz, bool(solution.shortfall), solution.delta
        solver = "lars"

    support = {v: matrices[v][indices].copy() for v in view_ids}
    provenance = {
        "pack_digest": pack_digest(train),
        "row_keys": keys,
        "n_train": len(train),
        "target_nnz": None if target_nnz is None else int(target_nnz),
        "solver": solver,
        "nnz": nnz,
        "nnz_shortfall": shortfall,
        "delta": delta,
        "jitter": float(jitter),
        "mode": mode,
    }
    return ClientModel(
        client_id=model_id,
        config=config,
        support=support,
        alpha_values=values.copy(),
        alpha_indices=indices.copy(),
        provenance=provenance,
    )


def _f64_hex(x: float) -> str:
    return np.float64(x).astype("<f8").tobytes().hex()


def _hex_f64(s: str) -> float:
    return float(np.frombuffer(bytes.fromhex(s), dtype="<f8")[0])


def _arr_hex(a: np.ndarray) -> str:
    return np.ascontiguousarray(a, dtype="<f8").tobytes().hex()


def _hex_arr(s: str, shape: tuple[int, ...]) -> np.ndarray:
    return np.frombuffer(bytes.fromhex(s), dtype="<f8").reshape(shape).copy()


def _model_to_obj(model: ClientModel) -> dict:
    views_obj = []
    for view in model.config.views:
        support = model.support[view]
        views_obj.append(
            {
                "region": view.region,
                "rep": view.rep,
                "dim": int(support.shape[1]),
                "theta": float(model.config.theta(view)),
                "theta_hex": _f64_hex(model.config.theta(view)),
                "support_hex": _arr_hex(support),
            }
        )
    obj = {
        "client_id": model.client_id,
        "jitter": float(model.config.jitter),
        "views": views_obj,
        "alpha_indices": [int(i) for i in model.alpha_indices],
        "alpha": [float(v) for v in model.alpha_values],
        "alpha_hex": _arr_hex(model.alpha_values),
        "calibration": None,
        "tau": None,
        "tau_hex": None,
        "provenance": _jsonable(model.provenance),
    }
    if model.calibration is not None:
        obj["calibration"] = {
            "mu": model.calibration.mu,
            "sigma": model.calibration.sigma,
            "mu_hex": _f64_hex(model.calibration.mu),
            "sigma_hex": _f64_hex(model.calibration.sigma),
        }
    if model.tau is not None:
        obj["tau"] = float(model.tau)
        obj["tau_hex"] = _f64_hex(model.tau)
    return obj


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    return value


def _model_from_obj(obj: dict) -> ClientModel:
    from .kernels import KernelParams  # local import to avoid cycle noise

    views: list[ViewId] = []
    params: dict[ViewId, KernelParams] = {}
    support: dict[ViewId, np.ndarray] = {}
    m = len(obj["alpha_indices"])
    for view_obj in obj["views"]:
        view = ViewId(region=view_obj["region"], rep=view_obj["rep"])
        views.append(view)
        params[view] = KernelParams(theta=_hex_f64(view_obj["theta_hex"]))
        support[view] = _hex_arr(view_obj["support_hex"], (m, int(view_obj["dim"])))
    config = FusedKernelConfig(views=tuple(views), params=params, jitter=float(obj["jitter"]))
    calibration = None
    if obj.get("calibration") is not None:
        calibration = Calibration(
            mu=_hex_f64(obj["calibration"]["mu_hex"]),
            sigma=_hex_f64(obj["calibration"]["sigma_hex"]),
        )
    tau = _hex_f64(obj["tau_hex"]) if obj.get("tau_hex") else None
    return ClientModel(
        client_id=obj["client_id"],
        config=config,
        support=support,
        alpha_values=_hex_arr(obj["alpha_hex"], (m,)),
        alpha_indices=np.asarray(obj["alpha_indices"], dtype=np.int64),
        calibration=calibration,
        tau=tau,
        provenance=obj.get("provenance", {}),
    )


def _content_digest(models_obj: dict) -> str:
    payload = json.dumps(models_obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


def save_bundle(bundle: ModelBundle, path: str | Path) -> None:
    """Write the bundle as a .ockrmodel.json document."""
    models_obj = {cid: _model_to_obj(model) for cid, model in sorted(bundle.models.items())}
    doc = {
        "magic": BUNDLE_MAGIC,
        "version": BUNDLE_VERSION,
        "provenance": _jsonable(bundle.provenance),
        "content_sha256": _content_digest(models_obj),
        "models": models_obj,
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_bundle(path: str | Path) -> ModelBundle:
    """Load a bundle; wrong magic/version is an error, digest mismatch a warning."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise PackFormatError(f"cannot read bundle {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("magic") != BUNDLE_MAGIC:
        raise PackFormatError(f"bad magic in bundle {path}")
    if doc.get("version") != BUNDLE_VERSION:
        raise PackFormatError(
            f"unsupported bundle version {doc.get('version')!r} (expected {BUNDLE_VERSION})"
        )
    models_obj = doc.get("models", {})
    recorded = doc.get("content_sha256")
    if recorded and recorded != _content_digest(models_obj):
        warnings.warn(f"bundle {path}: content digest mismatch", stacklevel=2)
    models = {cid: _model_from_obj(obj) for cid, obj in models_obj.items()}
    for cid, model in models.items():
        if cid != model.client_id:
            raise PackFormatError(f"bundle key {cid!r} != model client_id {model.client_id!r}")
    return ModelBundle(models=models, version=doc["version"], provenance=doc.get("provenance", {}))
