"""Identity-disjoint splits and the train-PAI x test-PAI evaluation matrix.

Each matrix row trains one detector on bona fide plus a single attack type;
each column evaluates it against bona fide plus one (possibly different)
attack type. Diagonal cells are the known-attack (intra) protocol,
off-diagonal cells probe generalization to unseen attacks (inter).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import metrics
from .echosim import ManifestRecord
from .ensemble import ATTACK_LABEL, BONA_FIDE_LABEL, score_batch, train_ensemble
from .errors import ProtocolError
from .metrics import EvalReport, ScoreSet
from .pipeline import PipelineConfig, extract_grids

PAI_ORDER_DEFAULT = ("display", "print_matte", "print_glossy", "silicone")


@dataclass(frozen=True)
class ProtocolSpec:
    pai_order: tuple[str, ...] = PAI_ORDER_DEFAULT
    train_subject_count: int = 25
    test_subject_count: int = 10
    silicone_train_masks: int = 2
    silicone_test_masks: int = 2
    pipeline: PipelineConfig = PipelineConfig()
    c_reg: float = 1.0
    seed: int = 0
    jobs: int | None = None

    def __post_init__(self):
        if len(self.pai_order) != len(set(self.pai_order)):
            raise ProtocolError(f"pai_order has duplicates: {self.pai_order}")


def _subject_ids(records: list[ManifestRecord]) -> set[int]:
    return {r.subject_id for r in records}


def _audit_disjoint(train: list[ManifestRecord], test: list[ManifestRecord]) -> None:
    overlap = _subject_ids(train) & _subject_ids(test)
    if overlap:
        raise ProtocolError(f"subjects appear in both splits: {sorted(overlap)}")


def split_manifest(records: list[ManifestRecord], spec: ProtocolSpec,
                   respect_split: bool = True) -> tuple[list[ManifestRecord], list[ManifestRecord]]:
    """Partition a manifest into identity-disjoint train/test record lists.

    When the manifest already carries a split assignment (as generated
    datasets do) and ``respect_split`` is set, that assignment is kept and
    audited for subject disjointness. Otherwise subjects are reassigned:
    a seed-fixed shuffle of the sorted regular subject IDs fills the train
    and test sets at the configured sizes, and silicone mask identities are
    split the same way at their own (2/2 by default) sizes.
    """
    if not records:
        raise ProtocolError("manifest is empty")
    if respect_split and all(r.split in ("train", "test") for r in records):
        train = [r for r in records if r.split == "train"]
        test = [r for r in records if r.split == "test"]
        _audit_disjoint(train, test)
        return train, test

    mask_ids = sorted({r.subject_id for r in records if r.pai_type == "silicone"})
    regular_ids = sorted({r.subject_id for r in records if r.pai_type != "silicone"})
    need = spec.train_subject_count + spec.test_subject_count
    if len(regular_ids) < need:
        raise ProtocolError(
            f"need {need} distinct subjects ({spec.train_subject_count} train + "
            f"{spec.test_subject_count} test), manifest has {len(regular_ids)}"
        )
    need_masks = spec.silicone_train_masks + spec.silicone_test_masks
    if mask_ids and len(mask_ids) < need_masks:
        raise ProtocolError(
            f"need {need_masks} silicone mask identities, manifest has {len(mask_ids)}"
        )
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed & (2**63 - 1), 0x5117]))
    shuffled = list(rng.permutation(regular_ids))
    train_ids = set(shuffled[:spec.train_subject_count])
    test_ids = set(shuffled[spec.train_subject_count:need])
    shuffled_masks = list(rng.permutation(mask_ids)) if mask_ids else []
    train_ids |= set(shuffled_masks[:spec.silicone_train_masks])
    test_ids |= set(shuffled_masks[spec.silicone_train_masks:need_masks])

    train = [r for r in records if r.subject_id in train_ids]
    test = [r for r in records if r.subject_id in test_ids]
    new_train = [replace(r, split="train") for r in train]
    new_test = [replace(r, split="test") for r in test]
    _audit_disjoint(new_train, new_test)
    return new_train, new_test


@dataclass(frozen=True)
class ProtocolReport:
    pai_order: tuple[str, ...]
    cells: tuple[tuple[EvalReport, ...], ...]  # [train_pai][test_pai]
    mean_intra_d_eer_pct: float
    mean_inter_d_eer_pct: float
    subject_audit: dict = field(default_factory=dict)

    def cell(self, train_pai: str, test_pai: str) -> EvalReport:
        return self.cells[self.pai_order.index(train_pai)][self.pai_order.index(test_pai)]

    def to_dict(self) -> dict:
        return {
            "pai_order": list(self.pai_order),
            "cells": {
                train_pai: {
                    test_pai: self.cells[k][j].to_dict()
                    for j, test_pai in enumerate(self.pai_order)
                }
                for k, train_pai in enumerate(self.pai_order)
            },
            "mean_intra_d_eer_pct": self.mean_intra_d_eer_pct,
            "mean_inter_d_eer_pct": self.mean_inter_d_eer_pct,
            "subject_audit": self.subject_audit,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ProtocolReport":
        order = tuple(doc["pai_order"])
        cells = tuple(
            tuple(EvalReport.from_dict(doc["cells"][tp][sp]) for sp in order)
            for tp in order
        )
        return cls(pai_order=order, cells=cells,
                   mean_intra_d_eer_pct=doc["mean_intra_d_eer_pct"],
                   mean_inter_d_eer_pct=doc["mean_inter_d_eer_pct"],
                   subject_audit=doc.get("subject_audit", {}))


def _row_seed(seed: int, row: int) -> int:
    return int(np.random.SeedSequence([seed & (2**63 - 1), row]).generate_state(1, np.uint64)[0])


def run_matrix(train_records: list[ManifestRecord], test_records: list[ManifestRecord],
               spec: ProtocolSpec, base_dir: str | Path = ".") -> ProtocolReport:
    """Train per-PAI detectors and fill the full evaluation matrix.

    Features are extracted once for every session; row k's detector trains
    on bona fide + PAI_k training samples with a seed derived from
    (spec.seed, k), then scores each test PAI against the bona fide tests.
    Training never sees test-split subjects (audited up front).
    """
    if not train_records or not test_records:
        raise ProtocolError("both splits must be non-empty")
    _audit_disjoint(train_records, test_records)
    base = Path(base_dir)

    for split_name, records in (("train", train_records), ("test", test_records)):
        present = {r.pai_type for r in records} | {"none" for r in records if r.label == "bonafide"}
        if not any(r.label == "bonafide" for r in records):
            raise ProtocolError(f"{split_name} split has no bonafide samples")
        for pai in spec.pai_order:
            if pai not in present:
                raise ProtocolError(f"{split_name} split has no samples for PAI {pai!r}")

    all_records = list(train_records) + list(test_records)
    feats = extract_grids([base / r.path for r in all_records], spec.pipeline, jobs=spec.jobs)
    train_feats = feats[:len(train_records)]
    test_feats = feats[len(train_records):]

    def subset(records, feats_arr, pred):
        idx = [i for i, r in enumerate(records) if pred(r)]
        return feats_arr[idx]

    bona_train = subset(train_records, train_feats, lambda r: r.label == "bonafide")
    bona_test = subset(test_records, test_feats, lambda r: r.label == "bonafide")

    rows = []
    for k, train_pai in enumerate(spec.pai_order):
        attack_train = subset(train_records, train_feats, lambda r: r.pai_type == train_pai)
        x = np.concatenate([bona_train, attack_train])
        y = np.concatenate([
            np.full(len(bona_train), BONA_FIDE_LABEL),
            np.full(len(attack_train), ATTACK_LABEL),
        ])
        model = train_ensemble(x, y, c_reg=spec.c_reg, seed=_row_seed(spec.seed, k))
        _, bona_fused = score_batch(bona_test, model)
        row = []
        for test_pai in spec.pai_order:
            attack_test = subset(test_records, test_feats, lambda r: r.pai_type == test_pai)
            _, attack_fused = score_batch(attack_test, model)
            row.append(metrics.evaluate(ScoreSet(
                bona_scores=bona_fused, attack_scores={test_pai: attack_fused},
            )))
        rows.append(tuple(row))

    n = len(spec.pai_order)
    eers = np.array([[rows[k][j].d_eer_pct for j in range(n)] for k in range(n)])
    intra = float(np.mean(np.diag(eers)))
    inter = float((eers.sum() - np.trace(eers)) / (n * n - n)) if n > 1 else float("nan")
    return ProtocolReport(
        pai_order=tuple(spec.pai_order),
        cells=tuple(rows),
        mean_intra_d_eer_pct=intra,
        mean_inter_d_eer_pct=inter,
        subject_audit={
            "train_subjects": sorted(_subject_ids(train_records)),
            "test_subjects": sorted(_subject_ids(test_records)),
            "disjoint": True,
        },
    )


def write_protocol_json(report: ProtocolReport, path: str | Path,
                        provenance: dict | None = None) -> None:
    doc = report.to_dict()
    if provenance:
        doc["provenance"] = provenance
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def write_protocol_csv(report: ProtocolReport, path: str | Path) -> None:
    """Flat table mirroring the matrix: one row per (train PAI, test PAI)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["train_pai", "test_pai", "d_eer_pct", "bpcer_at_apcer5_pct",
                         "bpcer_at_apcer10_pct"])
        for k, train_pai in enumerate(report.pai_order):
            for j, test_pai in enumerate(report.pai_order):
                cell = report.cells[k][j]
                writer.writerow([
                    train_pai, test_pai, repr(cell.d_eer_pct),
                    repr(cell.bpcer_at_apcer_pct[5.0]), repr(cell.bpcer_at_apcer_pct[10.0]),
                ])
