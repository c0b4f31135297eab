"""Export a truncated EfficientNet-B0 as a TorchScript feature extractor.

The backbone is cut after its final batch-normalization layer (the 1280-
channel BN of the head convolution), yielding a 7 x 7 x 1280 feature map
for a 224 x 224 input. Preprocessing is baked into the exported graph: the
module takes a single-channel image in [0, 1], replicates it to three
channels and applies the ImageNet normalization, so callers feed raw
grayscale images. A sidecar JSON plus a frozen test-image embedding ship
next to the model file for round-trip verification.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn
from torchvision.models import efficientnet_b0

INPUT_SIZE = 224
OUTPUT_SHAPE = (7, 7, 1280)
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

SIDECAR_FORMAT = "echopad-external-model-v1"


class ExportError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExportSpec:
    weights: str = "random"   # "random", "imagenet", or a path to a state-dict file
    seed: int = 0
    out_path: str = "external_model.pt"


class TruncatedEfficientNet(nn.Module):
    """EfficientNet-B0 up to and including the last BatchNorm layer,
    with grayscale replication and ImageNet normalization in the graph."""

    def __init__(self, backbone: nn.Module):
        super().__init__()
        features = backbone.features
        head = features[-1]  # Conv2dNormActivation(320 -> 1280): conv, bn, act
        self.trunk = nn.Sequential(*features[:-1], head[0], head[1])
        self.register_buffer("mean", torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(IMAGENET_STD).view(1, 3, 1, 1))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: (N, 1, 224, 224) grayscale in [0, 1]
        x = x.repeat(1, 3, 1, 1)
        x = (x - self.mean) / self.std
        return self.trunk(x)


def load_backbone(weights: str, seed: int) -> nn.Module:
    if weights == "imagenet":
        from torchvision.models import EfficientNet_B0_Weights
        try:
            return efficientnet_b0(weights=EfficientNet_B0_Weights.IMAGENET1K_V1)
        except Exception as exc:
            raise ExportError(
                f"pretrained weights unavailable ({exc}); pass a local state-dict "
                "path or use --weights random"
            ) from exc
    if weights == "random":
        torch.manual_seed(seed)
        return efficientnet_b0(weights=None)
    path = Path(weights)
    if not path.exists():
        raise ExportError(f"weights file not found: {path}")
    model = efficientnet_b0(weights=None)
    state = torch.load(str(path), map_location="cpu", weights_only=True)
    model.load_state_dict(state)
    return model


def test_image() -> np.ndarray:
    """Deterministic diagonal-gradient probe image in [0, 1]."""
    i, j = np.meshgrid(np.arange(INPUT_SIZE), np.arange(INPUT_SIZE), indexing="ij")
    return ((i + j) / (2.0 * (INPUT_SIZE - 1))).astype(np.float32)


def _run(module: nn.Module, image: np.ndarray) -> np.ndarray:
    x = torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32))
    x = x.reshape(1, 1, INPUT_SIZE, INPUT_SIZE)
    with torch.no_grad():
        out = module(x)
    return np.transpose(out.numpy()[0], (1, 2, 0)).astype(np.float64)


def export_model(spec: ExportSpec) -> dict:
    """Build, verify, and write the interchange file plus its sidecar.

    Returns the sidecar document. The scripted module's output shape and its
    agreement with the eager module are checked before anything is written.
    """
    backbone = load_backbone(spec.weights, spec.seed)
    module = TruncatedEfficientNet(backbone).eval()
    scripted = torch.jit.script(module)

    probe = test_image()
    eager_emb = _run(module, probe)
    scripted_emb = _run(scripted, probe)
    if scripted_emb.shape != OUTPUT_SHAPE:
        raise ExportError(
            f"truncated model yields shape {scripted_emb.shape}, expected {OUTPUT_SHAPE}"
        )
    if not np.all(np.isfinite(scripted_emb)):
        raise ExportError("embedding of the test image is not finite")
    if not np.allclose(scripted_emb, eager_emb, rtol=1e-5, atol=1e-6):
        raise ExportError("scripted module disagrees with eager module")

    out_path = Path(spec.out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    scripted.save(str(out_path))

    emb_path = out_path.with_suffix(".embedding.npy")
    np.save(emb_path, scripted_emb)
    checksum = hashlib.sha256(scripted_emb.astype("<f8").tobytes()).hexdigest()
    sidecar = {
        "format": SIDECAR_FORMAT,
        "model_file": out_path.name,
        "input": {"layout": "NCHW", "shape": [1, 1, INPUT_SIZE, INPUT_SIZE],
                  "range": "[0, 1] grayscale; replication and normalization are in-graph"},
        "output_shape": list(OUTPUT_SHAPE),
        "weights": spec.weights,
        "seed": spec.seed,
        "test_image": "diagonal-gradient (i + j) / (2 * 223)",
        "embedding_file": emb_path.name,
        "embedding_sha256": checksum,
    }
    out_path.with_suffix(".json").write_text(json.dumps(sidecar, sort_keys=True, indent=1) + "\n")
    return sidecar


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="echopad-model-export",
        description="Export the truncated EfficientNet-B0 embedding backend")
    parser.add_argument("--out", default="external_model.pt")
    parser.add_argument("--weights", default="random",
                        help="'random', 'imagenet', or a path to a state-dict file")
    parser.add_argument("--seed", type=int, default=0,
                        help="initialization seed for --weights random")
    args = parser.parse_args(argv)
    try:
        sidecar = export_model(ExportSpec(weights=args.weights, seed=args.seed,
                                          out_path=args.out))
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.out} (output {sidecar['output_shape']}, "
          f"embedding sha256 {sidecar['embedding_sha256'][:16]}...)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
