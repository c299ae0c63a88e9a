"""Batch command-line pipeline: synth -> fit -> calibrate -> score -> evaluate.

Every output artifact embeds the resolved configuration and its digest for
provenance; nothing volatile (timestamps, hostnames) is written, so reruns
with identical inputs produce byte-identical outputs.

Exit codes: 0 success, 2 precondition violation, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .errors import OckrError, PreconditionError
from .featurestore import (
    LABEL_BONAFIDE,
    FeaturePack,
    ViewId,
    bonafide_only,
    iter_videos,
    read_pack,
    select,
    write_pack,
    FeatureRow,
)
from .metrics import LabeledScore, eer, evaluate
from .models import (
    GLOBAL_CLIENT_ID,
    MODE_CLIENT_INDEPENDENT,
    MODE_CLIENT_SPECIFIC,
    ClientModel,
    ModelBundle,
    load_bundle,
    save_bundle,
    train_client,
)
from .scoring import fit_calibration, frame_scores, quantile_threshold, score_video
from .synth import generate, spec_from_dict


def _provenance(command: str, config: dict) -> dict:
    digest = hashlib.sha256(
        json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()
    return {"tool": "ockr", "version": __version__, "command": command, "config": config,
            "config_sha256": digest}


def _write_json(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _parse_views(arg: str | None) -> list[ViewId] | None:
    if not arg:
        return None
    views = []
    for token in arg.split(","):
        token = token.strip()
        if "_" not in token:
            raise PreconditionError(f"bad view {token!r}: expected <region>_<rep>")
        region, rep = token.split("_", 1)
        views.append(ViewId(region=region, rep=rep))
    return views


def _pack_rows_by_view(pack: FeaturePack) -> dict[ViewId, list[FeatureRow]]:
    out: dict[ViewId, list[FeatureRow]] = {}
    for view, values in pack.views.items():
        out[view] = [
            FeatureRow(
                client_id=m.client_id,
                video_id=m.video_id,
                frame_index=m.frame_index,
                label=m.label,
                pais=m.pais,
                vector=values[i],
            )
            for i, m in enumerate(pack.rows)
        ]
    return out


def cmd_synth(args: argparse.Namespace) -> int:
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        raise PreconditionError(f"cannot read config {args.config}: {exc}") from exc
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise PreconditionError(f"bad TOML in {args.config}: {exc}") from exc
    if args.seed is not None:
        raw["seed"] = args.seed
    spec = spec_from_dict(raw)
    enroll, dev, test = generate(spec)
    out = Path(args.out)
    for name, pack in (("enroll", enroll), ("dev", dev), ("test", test)):
        write_pack(_pack_rows_by_view(pack), out / name)
    config = {"config_file": str(args.config), "out": str(args.out), "spec": _spec_obj(raw)}
    _write_json(out / "pack.provenance.json", _provenance("synth", config))
    print(f"synth: wrote enroll/dev/test packs under {out}")
    return 0


def _spec_obj(raw: dict) -> dict:
    # round-trip through JSON to normalise TOML containers for the echo
    return json.loads(json.dumps(raw, sort_keys=True))


def cmd_fit(args: argparse.Namespace) -> int:
    if (args.target_nnz is None) == (not args.dense):
        raise PreconditionError("exactly one of --target-nnz or --dense is required")
    target_nnz = None if args.dense else args.target_nnz
    pack = read_pack(args.enroll)
    views = _parse_views(args.views)
    mode = args.mode
    bundle = ModelBundle()
    if mode == MODE_CLIENT_INDEPENDENT:
        client_ids = [None]
    else:
        client_ids = sorted({m.client_id for m in pack.rows})
    for cid in client_ids:
        model = train_client(
            pack, cid, target_nnz=target_nnz, mode=mode, views=views, jitter=args.jitter
        )
        bundle.models[model.client_id] = model
        print(
            f"fit client={model.client_id} n={model.provenance['n_train']} "
            f"nnz={model.nnz} shortfall={model.provenance['nnz_shortfall']} "
            f"jitter={args.jitter}"
        )
    config = {
        "enroll": str(args.enroll),
        "out": str(args.out),
        "target_nnz": target_nnz,
        "mode": mode,
        "views": args.views,
        "jitter": args.jitter,
    }
    bundle.provenance = _provenance("fit", config)
    save_bundle(bundle, args.out)
    print(f"fit: wrote {len(bundle)} model(s) to {args.out}")
    return 0


def _client_models(bundle: ModelBundle) -> tuple[bool, dict[str, ClientModel]]:
    is_global = set(bundle.models) == {GLOBAL_CLIENT_ID}
    return is_global, bundle.models


def _model_for(bundle: ModelBundle, is_global: bool, client_id: str) -> ClientModel:
    if is_global:
        return bundle[GLOBAL_CLIENT_ID]
    return bundle[client_id]


def cmd_calibrate(args: argparse.Namespace) -> int:
    bundle = load_bundle(args.bundle)
    dev = read_pack(args.dev)
    is_global, models = _client_models(bundle)

    taus: dict[str, float] = {}
    if args.threshold_mode == "dev-eer":
        dev_records = _score_pack(bundle, is_global, dev)
        labeled = [
            LabeledScore(score=r.video_score_raw, label=r.label, pais=r.pais)
            for r in dev_records
        ]
        _, tau = eer(labeled)
        taus = {cid: tau for cid in models}

    for cid, model in sorted(models.items()):
        bona = select(dev, _calibration_filter(is_global, cid))
        if len(bona) == 0:
            raise PreconditionError(f"no dev bona fide rows for client {cid!r}")
        scores = frame_scores(model, {v: bona.views[v] for v in model.views})
        model.calibration = fit_calibration(model, {v: bona.views[v] for v in model.views})
        if args.threshold_mode == "quantile":
            model.tau = quantile_threshold(scores, args.level)
        else:
            model.tau = taus[cid]
        print(
            f"calibrate client={cid} mu={model.calibration.mu:.6g} "
            f"sigma={model.calibration.sigma:.6g} tau={model.tau:.6g}"
        )

    config = {
        "bundle": str(args.bundle),
        "dev": str(args.dev),
        "out": str(args.out),
        "threshold_mode": args.threshold_mode,
        "level": args.level,
    }
    bundle.provenance = _provenance("calibrate", config)
    save_bundle(bundle, args.out)
    print(f"calibrate: wrote updated bundle to {args.out}")
    return 0


def _calibration_filter(is_global: bool, client_id: str):
    if is_global:
        return bonafide_only()
    return lambda m: m.label == LABEL_BONAFIDE and m.client_id == client_id


def _score_pack(bundle: ModelBundle, is_global: bool, pack: FeaturePack) -> list:
    records = []
    for video in iter_videos(pack):
        model = _model_for(bundle, is_global, video.client_id)
        frames = {v: video.frames[v] for v in model.views}
        records.append(
            score_video(
                model,
                frames,
                client_id=video.client_id,
                video_id=video.video_id,
                label=video.label,
                pais=video.pais,
            )
        )
    return records


def cmd_score(args: argparse.Namespace) -> int:
    bundle = load_bundle(args.bundle)
    pack = read_pack(args.test)
    is_global, models = _client_models(bundle)
    if not is_global:
        missing = sorted({m.client_id for m in pack.rows} - set(models))
        if missing:
            raise PreconditionError(f"no model for client(s): {', '.join(missing)}")

    records = _score_pack(bundle, is_global, pack)
    out = Path(args.out)
    with out.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_obj(), separators=(",", ":")) + "\n")

    config = {"bundle": str(args.bundle), "test": str(args.test), "out": str(args.out)}
    meta = {
        "provenance": _provenance("score", config),
        "kernel_evals_per_frame": {
            cid: model.kernel_evaluations_per_frame() for cid, model in sorted(models.items())
        },
        "videos": len(records),
    }
    _write_json(Path(str(out) + ".meta.json"), meta)
    print(f"score: wrote {len(records)} video records to {out}")
    return 0


def _read_scores(path: str | Path) -> list[dict]:
    records = []
    try:
        fh = Path(path).open("r", encoding="utf-8")
    except OSError as exc:
        raise PreconditionError(f"cannot read scores file {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise PreconditionError(f"{path}:{lineno + 1}: malformed scores line") from exc
    if not records:
        raise PreconditionError(f"no score records in {path}")
    return records


def _labeled(records: list[dict], level: str) -> list[LabeledScore]:
    out = []
    for r in records:
        label, pais = r.get("label"), r.get("pais")
        if label is None:
            raise PreconditionError("score record without a label cannot be evaluated")
        if level == "video-raw":
            out.append(LabeledScore(score=float(r["raw"]), label=label, pais=pais))
        elif level == "video-prob":
            if r.get("prob") is None:
                raise PreconditionError(
                    "probabilistic evaluation requested but records carry no prob scores "
                    "(run calibrate before score)"
                )
            out.append(LabeledScore(score=float(r["prob"]), label=label, pais=pais))
        elif level == "frame":
            out.extend(LabeledScore(score=float(s), label=label, pais=pais) for s in r["frames"])
        else:
            raise PreconditionError(f"unknown evaluation level {level!r}")
    return out


def cmd_evaluate(args: argparse.Namespace) -> int:
    records = _read_scores(args.scores)
    scores = _labeled(records, args.level)
    dev_scores = None
    if args.dev_scores:
        dev_scores = _labeled(_read_scores(args.dev_scores), args.level)
    report = evaluate(scores, dev_scores)

    config = {
        "scores": str(args.scores),
        "dev_scores": str(args.dev_scores) if args.dev_scores else None,
        "report": str(args.report),
        "level": args.level,
        "csv": str(args.csv) if args.csv else None,
        "tag": args.tag,
    }
    _write_json(Path(args.report), {"provenance": _provenance("evaluate", config),
                                    "report": report.to_obj()})
    print(
        f"evaluate[{args.level}] acer={report.acer:.4f} apcer={report.apcer:.4f} "
        f"bpcer={report.bpcer:.4f} eer={report.eer:.4f} auc={report.auc:.4f}"
    )

    if args.csv:
        meta_path = Path(str(args.scores) + ".meta.json")
        evals = None
        if meta_path.exists():
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
            per_client = meta.get("kernel_evals_per_frame", {})
            if per_client:
                evals = max(per_client.values())
        row = {
            "tag": args.tag or "",
            "level": args.level,
            "threshold_source": report.threshold_source,
            "acer": report.acer,
            "apcer": report.apcer,
            "bpcer": report.bpcer,
            "eer": report.eer,
            "auc": report.auc,
            "kernel_evals_per_frame": "" if evals is None else evals,
        }
        csv_path = Path(args.csv)
        new_file = not csv_path.exists()
        with csv_path.open("a", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(row))
            if new_file:
                writer.writeheader()
            writer.writerow(row)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ockr",
        description="Sparse one-class multiple-kernel fusion regression pipeline",
    )
    parser.add_argument("--version", action="version", version=f"ockr {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate deterministic synthetic feature packs")
    p.add_argument("--config", required=True, help="TOML synth spec")
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")
    p.add_argument("--out", required=True, help="output directory (enroll/dev/test)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="train one-class models from an enrolment pack")
    p.add_argument("--enroll", required=True, help="enrolment pack directory")
    p.add_argument("--out", required=True, help="output model bundle path")
    p.add_argument("--target-nnz", type=int, default=None, help="sparsity budget per model")
    p.add_argument(
        "--dense", action="store_true",
        help="non-sparse baseline: keep every enrolment row as support",
    )
    p.add_argument(
        "--mode",
        choices=[MODE_CLIENT_SPECIFIC, MODE_CLIENT_INDEPENDENT],
        default=MODE_CLIENT_SPECIFIC,
    )
    p.add_argument("--views", default=None, help="comma-separated view filter, e.g. R1_N1,R2_N1")
    p.add_argument("--jitter", type=float, default=0.0, help="solve-time ridge jitter")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("calibrate", help="fit score calibration and decision thresholds")
    p.add_argument("--bundle", required=True)
    p.add_argument("--dev", required=True, help="development pack directory")
    p.add_argument("--out", required=True, help="updated bundle path")
    p.add_argument("--threshold-mode", choices=["quantile", "dev-eer"], default="quantile")
    p.add_argument(
        "--level", type=float, default=0.05,
        help="bona fide rejection level for quantile thresholds",
    )
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("score", help="score a test pack against a bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--test", required=True, help="test pack directory")
    p.add_argument("--out", required=True, help="output scores JSONL path")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("evaluate", help="compute PAD metrics from scored videos")
    p.add_argument("--scores", required=True, help="scores JSONL from `score`")
    p.add_argument("--dev-scores", default=None, help="dev scores JSONL for the ACER threshold")
    p.add_argument("--report", required=True, help="output report JSON path")
    p.add_argument("--level", choices=["video-raw", "video-prob", "frame"], default="video-raw")
    p.add_argument("--csv", default=None, help="append a summary row to this CSV")
    p.add_argument("--tag", default=None, help="free-form tag for the CSV row (e.g. nnz=5)")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except OckrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
