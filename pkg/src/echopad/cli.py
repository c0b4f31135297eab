"""Command-line front end for the full pipeline.

Subcommands: synth (transmit template), simulate (synthetic dataset),
process (one session to features/score), train (manifest to model),
eval (manifest to report, single or matrix protocol), det (report to
DET curve CSV). Every command is deterministic given inputs, config
and seed; outputs embed the resolved config hash.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import echosim, metrics, protocol
from .config import RunConfig, load_config
from .ensemble import ATTACK_LABEL, BONA_FIDE_LABEL, load_model, save_model, score, score_batch, train_ensemble
from .errors import EchoPadError
from .metrics import EvalReport, ScoreSet
from .pipeline import extract_grids, features_for_capture, scalogram_for_capture
from .signal import build_session_template, read_wav, write_wav


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file; flags override it")
    p.add_argument("--seed", type=int, help="master seed for all randomness")
    p.add_argument("--jobs", type=int, help="worker processes (0 = one per CPU)")


def _resolve_config(args: argparse.Namespace, extra: dict | None = None) -> RunConfig:
    overrides = dict(extra or {})
    for key in ("seed", "jobs"):
        if getattr(args, key, None) is not None:
            overrides[key] = getattr(args, key)
    return load_config(getattr(args, "config", None), overrides)


def _write_json(path: str, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def cmd_synth(args) -> int:
    cfg = _resolve_config(args, {
        "sample_rate_hz": args.rate, "carrier_hz": args.carrier,
        "pulse_duration_s": args.duration, "pulse_amplitude": args.amplitude,
    })
    template = build_session_template(cfg.pulse_spec(), cfg.schedule())
    write_wav(args.out, template)
    print(f"wrote {args.out}: {len(template)} samples at {template.sample_rate_hz} Hz")
    return 0


def cmd_simulate(args) -> int:
    cfg = _resolve_config(args, {
        "noise_db": args.noise_db, "noise_kind": args.noise_kind,
        "profile_file": args.profile_file,
    })
    if args.preset == "ased":
        counts = dict(echosim.ASED_PRESET_COUNTS)
    else:
        counts = {m: (args.count, args.count) for m in echosim.MATERIALS}
    profiles = echosim.load_profiles(cfg.profile_file or None)
    records = echosim.generate_dataset(
        counts, echosim.DEFAULT_TRAIN_SUBJECTS, echosim.DEFAULT_TEST_SUBJECTS,
        args.out_dir, cfg.seed,
        profiles=profiles, pulse_spec=cfg.pulse_spec(), schedule=cfg.schedule(),
        distance_range=(cfg.distance_min_m, cfg.distance_max_m),
        noise_db=cfg.noise_db, noise_kind=cfg.noise_kind, jobs=cfg.effective_jobs(),
    )
    _write_json(str(Path(args.out_dir) / "dataset.json"), {
        "samples": len(records), "provenance": cfg.provenance(),
    })
    print(f"wrote {len(records)} sessions under {args.out_dir}")
    return 0


def cmd_process(args) -> int:
    cfg = _resolve_config(args, {
        "background_subtraction": False if args.no_bg_subtract else None,
        "model_path": args.backend_model, "backend": "external_model" if args.backend_model else None,
    })
    pipeline_cfg = cfg.pipeline()
    capture = read_wav(args.session)
    scal = scalogram_for_capture(capture, pipeline_cfg)
    grid = features_for_capture(capture, pipeline_cfg)
    record = {
        "input": str(args.session),
        "scalogram": {
            "shape": list(scal.magnitudes.shape),
            "center_freqs_hz": [float(f) for f in scal.center_freqs_hz],
            "max_magnitude": float(scal.magnitudes.max()) if scal.magnitudes.size else 0.0,
            "energy": float(np.sum(np.square(scal.magnitudes, dtype=np.float64))),
        },
        "embedding": {"g": grid.g, "d": grid.d, "values": grid.values.tolist()},
        "provenance": cfg.provenance(),
    }
    if args.model:
        model = load_model(args.model)
        result = score(grid, model)
        record["score"] = {
            "cell_scores": result.cell_scores.tolist(),
            "fused": result.fused,
            "threshold": model.threshold,
            "decision": "bona_fide" if result.fused >= model.threshold else "attack",
        }
    out = args.out or "-"
    if out == "-":
        print(json.dumps(record, sort_keys=True))
    else:
        _write_json(out, record)
        print(f"wrote {out}")
    return 0


def _load_split(manifest_path: str, want_split: str | None):
    records = echosim.read_manifest(manifest_path)
    base = Path(manifest_path).parent
    if want_split:
        records = [r for r in records if r.split == want_split]
    return records, base


def cmd_train(args) -> int:
    cfg = _resolve_config(args, {"c_reg": args.c_reg})
    records, base = _load_split(args.manifest, args.split)
    if args.pai:
        records = [r for r in records if r.label == "bonafide" or r.pai_type == args.pai]
    bona = [r for r in records if r.label == "bonafide"]
    attacks = [r for r in records if r.label == "attack"]
    if not bona or not attacks:
        raise EchoPadError(
            f"training needs both classes: {len(bona)} bonafide, {len(attacks)} attack samples"
        )
    ordered = bona + attacks
    feats = extract_grids([base / r.path for r in ordered], cfg.pipeline(), jobs=cfg.effective_jobs())
    labels = np.array([BONA_FIDE_LABEL] * len(bona) + [ATTACK_LABEL] * len(attacks))
    model = train_ensemble(feats, labels, c_reg=cfg.c_reg, seed=cfg.seed)
    model.metadata.update({"config_hash": cfg.config_hash(),
                           "trained_on": Path(args.manifest).name,
                           "train_pai": args.pai or "all"})
    save_model(model, args.out)
    print(f"wrote {args.out}: {model.g}x{model.g} cells, d={model.d}, "
          f"threshold={model.threshold:.6g}")
    return 0


def cmd_eval(args) -> int:
    cfg = _resolve_config(args, {"c_reg": args.c_reg})
    if args.protocol == "matrix":
        records = echosim.read_manifest(args.manifest)
        base = Path(args.manifest).parent
        spec = protocol.ProtocolSpec(pipeline=cfg.pipeline(), c_reg=cfg.c_reg,
                                     seed=cfg.seed, jobs=cfg.effective_jobs())
        train_recs, test_recs = protocol.split_manifest(records, spec)
        report = protocol.run_matrix(train_recs, test_recs, spec, base_dir=base)
        protocol.write_protocol_json(report, args.out, provenance=cfg.provenance())
        if args.csv:
            protocol.write_protocol_csv(report, args.csv)
        print(f"matrix: mean intra D-EER {report.mean_intra_d_eer_pct:.2f}%, "
              f"mean inter D-EER {report.mean_inter_d_eer_pct:.2f}%")
        return 0

    if not args.model:
        raise EchoPadError("eval needs --model unless --protocol matrix is used")
    model = load_model(args.model)
    records, base = _load_split(args.manifest, args.split or "test")
    bona = [r for r in records if r.label == "bonafide"]
    attacks = {}
    for r in records:
        if r.label == "attack":
            attacks.setdefault(r.pai_type, []).append(r)
    if not bona or not attacks:
        raise EchoPadError("evaluation needs bonafide and attack samples")
    ordered = bona + [r for pai in sorted(attacks) for r in attacks[pai]]
    feats = extract_grids([base / r.path for r in ordered], cfg.pipeline(), jobs=cfg.effective_jobs())
    _, fused = score_batch(feats, model)
    bona_scores = fused[:len(bona)]
    offset = len(bona)
    attack_scores = {}
    for pai in sorted(attacks):
        attack_scores[pai] = fused[offset:offset + len(attacks[pai])]
        offset += len(attacks[pai])
    report = metrics.evaluate(ScoreSet(bona_scores=bona_scores, attack_scores=attack_scores))
    metrics.write_report_json(report, args.out, provenance=cfg.provenance())
    if args.csv:
        metrics.write_det_csv(report.det_points, args.csv)
    print(f"D-EER {report.d_eer_pct:.2f}% | BPCER@APCER5 "
          f"{report.bpcer_at_apcer_pct[5.0]:.2f}% | BPCER@APCER10 "
          f"{report.bpcer_at_apcer_pct[10.0]:.2f}%")
    return 0


def cmd_det(args) -> int:
    doc = json.loads(Path(args.report).read_text())
    if "cells" in doc:
        if not args.cell:
            raise EchoPadError("matrix reports need --cell TRAIN_PAI:TEST_PAI")
        train_pai, _, test_pai = args.cell.partition(":")
        try:
            cell_doc = doc["cells"][train_pai][test_pai]
        except KeyError:
            raise EchoPadError(f"report has no cell {args.cell!r}") from None
        report = EvalReport.from_dict(cell_doc)
    else:
        report = EvalReport.from_dict(doc)
    metrics.write_det_csv(report.det_points, args.out)
    print(f"wrote {args.out}: {len(report.det_points)} points")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="echopad",
                                     description="Acoustic echo face liveness pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write the transmit-session template WAV")
    p.add_argument("out")
    p.add_argument("--rate", type=int, dest="rate")
    p.add_argument("--carrier", type=float)
    p.add_argument("--duration", type=float)
    p.add_argument("--amplitude", type=float)
    _add_config_args(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("simulate", help="generate a synthetic dataset + manifest")
    p.add_argument("out_dir")
    p.add_argument("--preset", choices=["ased"], help="use the reference corpus shape")
    p.add_argument("--count", type=int, default=0,
                   help="per-class train and test sample count (ignored with --preset)")
    p.add_argument("--noise-db", type=float, dest="noise_db")
    p.add_argument("--noise-kind", choices=list(echosim.NOISE_KINDS), dest="noise_kind")
    p.add_argument("--profile-file", dest="profile_file")
    _add_config_args(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("process", help="run one session WAV through the pipeline")
    p.add_argument("session")
    p.add_argument("--model", help="ensemble model JSON for scoring")
    p.add_argument("--backend-model", dest="backend_model",
                   help="external embedding model file (switches backend)")
    p.add_argument("--no-bg-subtract", action="store_true")
    p.add_argument("--out", help="output JSON path (default: stdout)")
    _add_config_args(p)
    p.set_defaults(func=cmd_process)

    p = sub.add_parser("train", help="train an ensemble from a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--split", choices=["train", "test"], default="train")
    p.add_argument("--pai", help="restrict attack class to one PAI type")
    p.add_argument("--c-reg", type=float, dest="c_reg")
    _add_config_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model or run the protocol matrix")
    p.add_argument("manifest")
    p.add_argument("--model")
    p.add_argument("--protocol", choices=["matrix"])
    p.add_argument("--split", choices=["train", "test"])
    p.add_argument("--out", required=True)
    p.add_argument("--csv", help="also write CSV (DET for single eval, table for matrix)")
    p.add_argument("--c-reg", type=float, dest="c_reg")
    _add_config_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("det", help="extract a DET curve CSV from a report")
    p.add_argument("report")
    p.add_argument("--out", required=True)
    p.add_argument("--cell", help="TRAIN_PAI:TEST_PAI cell of a matrix report")
    p.set_defaults(func=cmd_det)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EchoPadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
