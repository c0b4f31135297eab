"""Per-cell linear SVM ensemble with sum-rule score fusion.

One classifier per grid cell, trained independently on that cell's feature
vector across the training set. A sample's fused score is the plain sum of
the per-cell signed margins; the decision compares it to a preset threshold
(bona fide scores high, attacks low).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from numba import njit

from . import metrics
from .embed import EmbeddingGrid
from .errors import TrainingError

BONA_FIDE_LABEL = 1
ATTACK_LABEL = -1

MODEL_FORMAT = "echopad-ensemble-v1"


class Decision(Enum):
    BONA_FIDE = "bona_fide"
    ATTACK = "attack"


@dataclass(frozen=True)
class LinearSvm:
    """Linear decision function over standardized features: w . z + b."""

    w: np.ndarray
    b: float
    mu: np.ndarray
    sigma: np.ndarray

    def decision_value(self, x: np.ndarray) -> np.ndarray | float:
        x = np.asarray(x, dtype=np.float64)
        z = (x - self.mu) / self.sigma
        return z @ self.w + self.b


@dataclass(frozen=True)
class EnsembleModel:
    g: int
    d: int
    models: tuple[LinearSvm, ...]
    threshold: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.models) != self.g * self.g:
            raise TrainingError(
                f"ensemble needs {self.g * self.g} cell models, got {len(self.models)}"
            )
        if not np.isfinite(self.threshold):
            raise TrainingError(f"threshold must be finite, got {self.threshold}")


@njit(cache=True)
def _dual_cd_kernel(X, y, c_reg, order, tol, max_epochs):  # pragma: no cover
    n, d = X.shape
    alpha = np.zeros(n)
    w = np.zeros(d)
    qii = np.empty(n)
    for i in range(n):
        s = 0.0
        for j in range(d):
            s += X[i, j] * X[i, j]
        qii[i] = s
    primal = np.empty(max_epochs)
    dual = np.empty(max_epochs)
    epochs = 0
    for _ in range(max_epochs):
        max_pg = 0.0
        for k in range(n):
            i = order[k]
            if qii[i] <= 0.0:
                continue
            g = 0.0
            for j in range(d):
                g += w[j] * X[i, j]
            g = y[i] * g - 1.0
            if alpha[i] == 0.0:
                pg = min(g, 0.0)
            elif alpha[i] == c_reg:
                pg = max(g, 0.0)
            else:
                pg = g
            if abs(pg) > max_pg:
                max_pg = abs(pg)
            if pg != 0.0:
                a_old = alpha[i]
                a_new = a_old - g / qii[i]
                if a_new < 0.0:
                    a_new = 0.0
                elif a_new > c_reg:
                    a_new = c_reg
                if a_new != a_old:
                    step = (a_new - a_old) * y[i]
                    for j in range(d):
                        w[j] += step * X[i, j]
                    alpha[i] = a_new
        w_sq = 0.0
        for j in range(d):
            w_sq += w[j] * w[j]
        hinge = 0.0
        for i in range(n):
            m = 0.0
            for j in range(d):
                m += w[j] * X[i, j]
            loss = 1.0 - y[i] * m
            if loss > 0.0:
                hinge += loss
        primal[epochs] = 0.5 * w_sq + c_reg * hinge
        dual[epochs] = alpha.sum() - 0.5 * w_sq
        epochs += 1
        if max_pg < tol:
            break
    return w, alpha, epochs, primal[:epochs], dual[:epochs]


def dual_coordinate_descent(X: np.ndarray, y: np.ndarray, c_reg: float, seed: int,
                            tol: float = 1e-4, max_epochs: int = 1000):
    """Hinge-loss dual coordinate descent on bias-augmented features.

    Visits coordinates in one seed-fixed permutation every epoch and stops
    when the largest projected gradient (dual gap proxy) drops below tol.
    Returns (w_aug, alpha, epochs, primal_per_epoch, dual_per_epoch); the
    last entry of w_aug is the bias weight.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    order = np.random.default_rng(seed).permutation(X.shape[0]).astype(np.int64)
    return _dual_cd_kernel(X, y, float(c_reg), order, float(tol), int(max_epochs))


def train_svm(features: np.ndarray, labels: np.ndarray, c_reg: float = 1.0,
              seed: int = 0, tol: float = 1e-4, max_epochs: int = 1000) -> LinearSvm:
    """Train one linear SVM on standardized features.

    Standardization uses the training set's per-dimension mean and standard
    deviation; zero-variance dimensions get sigma = 1 (and end up with zero
    weight, since the standardized column is identically zero). The bias is
    learned as an extra always-one feature, the standard formulation for
    coordinate-descent linear SVMs.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if X.ndim != 2:
        raise TrainingError(f"features must be N x d, got shape {X.shape}")
    if y.shape != (X.shape[0],):
        raise TrainingError(f"labels shape {y.shape} does not match {X.shape[0]} samples")
    if X.shape[0] < 2:
        raise TrainingError(f"need at least 2 samples, got {X.shape[0]}")
    if not np.all(np.isfinite(X)):
        raise TrainingError("features contain non-finite values")
    classes = set(np.unique(y).tolist())
    if not classes <= {BONA_FIDE_LABEL, ATTACK_LABEL}:
        raise TrainingError(f"labels must be +1/-1, got {sorted(classes)}")
    if len(classes) < 2:
        raise TrainingError("training requires both classes present")

    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sigma = np.where(sd > 0, sd, 1.0)
    z = np.hstack([(X - mu) / sigma, np.ones((X.shape[0], 1))])
    w_aug, _, _, _, _ = dual_coordinate_descent(z, y.astype(np.float64), c_reg, seed,
                                                tol=tol, max_epochs=max_epochs)
    return LinearSvm(w=w_aug[:-1].copy(), b=float(w_aug[-1]), mu=mu, sigma=sigma)


def _stack_grids(grids) -> np.ndarray:
    if isinstance(grids, np.ndarray):
        feats = grids
    else:
        arrs = [g.values if isinstance(g, EmbeddingGrid) else np.asarray(g) for g in grids]
        shapes = {a.shape for a in arrs}
        if len(shapes) > 1:
            raise TrainingError(f"grids disagree on shape: {sorted(shapes)}")
        feats = np.stack(arrs)
    if feats.ndim != 4 or feats.shape[1] != feats.shape[2]:
        raise TrainingError(f"expected N x g x g x d features, got shape {feats.shape}")
    return np.asarray(feats, dtype=np.float64)


def train_ensemble(grids, labels, c_reg: float = 1.0, seed: int = 0,
                   tol: float = 1e-4, max_epochs: int = 1000) -> EnsembleModel:
    """Train one SVM per grid cell and pick the fused-score EER threshold.

    Every cell sees the same labels and the same (c_reg, seed), so cell k
    is bit-identical to a standalone train_svm run on that cell's slice.
    """
    feats = _stack_grids(grids)
    y = np.asarray(labels)
    n, g, _, d = feats.shape
    models = []
    for i in range(g):
        for j in range(g):
            models.append(train_svm(feats[:, i, j, :], y, c_reg=c_reg, seed=seed,
                                     tol=tol, max_epochs=max_epochs))
    model = EnsembleModel(
        g=g, d=d, models=tuple(models), threshold=0.0,
        metadata={"c_reg": float(c_reg), "seed": int(seed), "tol": float(tol),
                  "max_epochs": int(max_epochs), "n_train": int(n)},
    )
    _, fused = score_batch(feats, model)
    eer = metrics.d_eer(metrics.ScoreSet(
        bona_scores=fused[y == BONA_FIDE_LABEL],
        attack_scores={"train": fused[y == ATTACK_LABEL]},
    ))
    return EnsembleModel(g=g, d=d, models=model.models, threshold=float(eer.threshold),
                         metadata=model.metadata)


@dataclass(frozen=True)
class ScoreResult:
    cell_scores: np.ndarray
    fused: float


def score(grid, model: EnsembleModel) -> ScoreResult:
    """Per-cell signed margins and their sum-rule fusion for one sample."""
    values = grid.values if isinstance(grid, EmbeddingGrid) else np.asarray(grid)
    if values.shape != (model.g, model.g, model.d):
        raise TrainingError(
            f"grid shape {values.shape} does not match model "
            f"({model.g}, {model.g}, {model.d})"
        )
    flat = values.reshape(model.g * model.g, model.d)
    cell_scores = np.array([
        float(m.decision_value(flat[k])) for k, m in enumerate(model.models)
    ])
    return ScoreResult(cell_scores=cell_scores, fused=float(cell_scores.sum()))


def score_batch(feats, model: EnsembleModel) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized scoring: (N, g*g) cell scores and (N,) fused sums."""
    feats = _stack_grids(feats)
    if feats.shape[1:] != (model.g, model.g, model.d):
        raise TrainingError(
            f"feature shape {feats.shape[1:]} does not match model "
            f"({model.g}, {model.g}, {model.d})"
        )
    flat = feats.reshape(feats.shape[0], model.g * model.g, model.d)
    cells = np.empty((feats.shape[0], model.g * model.g))
    for k, m in enumerate(model.models):
        cells[:, k] = ((flat[:, k, :] - m.mu) / m.sigma) @ m.w + m.b
    return cells, cells.sum(axis=1)


def decide(fused: float, model: EnsembleModel) -> Decision:
    """Bona fide iff the fused score reaches the threshold (ties accept)."""
    return Decision.BONA_FIDE if fused >= model.threshold else Decision.ATTACK


def save_model(model: EnsembleModel, path: str | Path) -> None:
    """Serialize to versioned JSON; identical models produce identical bytes."""
    doc = {
        "format": MODEL_FORMAT,
        "g": model.g,
        "d": model.d,
        "threshold": model.threshold,
        "label_convention": {"bona_fide": BONA_FIDE_LABEL, "attack": ATTACK_LABEL},
        "metadata": model.metadata,
        "cells": [
            {"w": m.w.tolist(), "b": m.b, "mu": m.mu.tolist(), "sigma": m.sigma.tolist()}
            for m in model.models
        ],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def load_model(path: str | Path) -> EnsembleModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != MODEL_FORMAT:
        raise TrainingError(f"{path}: unsupported model format {doc.get('format')!r}")
    models = tuple(
        LinearSvm(w=np.array(c["w"]), b=float(c["b"]),
                  mu=np.array(c["mu"]), sigma=np.array(c["sigma"]))
        for c in doc["cells"]
    )
    return EnsembleModel(g=int(doc["g"]), d=int(doc["d"]), models=models,
                         threshold=float(doc["threshold"]), metadata=doc.get("metadata", {}))
