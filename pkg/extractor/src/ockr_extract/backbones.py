"""Pretrained backbone registry and deterministic preprocessing.

Representation tags map to torchvision classification networks whose
penultimate-layer outputs are used as embeddings:

    N1  googlenet  1024-d (pooled features, fc removed)
    N2  resnet50   2048-d (pooled features, fc removed)
    N3  vgg16      4096-d (second fully-connected stage, final fc removed)

``weights="pretrained"`` loads the torchvision ImageNet weights (they must
be available locally or downloadable); ``weights="random"`` builds the same
architecture with a fixed-seed initialisation, which keeps dimensions and
determinism testable without any weight files.

Preprocessing is fixed: RGB, bilinear resize of the short side to 256 with
antialiasing, centre crop 224, ImageNet mean/std normalisation. No
augmentation of any kind.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from PIL import Image
from torchvision import models
from torchvision import transforms

from .errors import BackboneError, ImageError

_IMAGENET_MEAN = (0.485, 0.456, 0.406)
_IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class BackboneSpec:
    tag: str
    arch: str
    dim: int
    seed: int  # for the random-weights mode


REGISTRY = {
    "N1": BackboneSpec(tag="N1", arch="googlenet", dim=1024, seed=101),
    "N2": BackboneSpec(tag="N2", arch="resnet50", dim=2048, seed=102),
    "N3": BackboneSpec(tag="N3", arch="vgg16", dim=4096, seed=103),
}


def normalise_tag(tag: str) -> str:
    tag = tag.strip().upper()
    if tag not in REGISTRY:
        raise BackboneError(f"unknown representation {tag!r}; expected one of {sorted(REGISTRY)}")
    return tag


_PREPROCESS = transforms.Compose(
    [
        transforms.Resize(256, interpolation=transforms.InterpolationMode.BILINEAR, antialias=True),
        transforms.CenterCrop(224),
        transforms.ToTensor(),
        transforms.Normalize(mean=_IMAGENET_MEAN, std=_IMAGENET_STD),
    ]
)


def load_image(path) -> torch.Tensor:
    try:
        with Image.open(path) as img:
            return _PREPROCESS(img.convert("RGB"))
    except (OSError, ValueError) as exc:
        raise ImageError(f"cannot read image {path}: {exc}") from exc


def build_backbone(tag: str, weights: str = "pretrained") -> torch.nn.Module:
    """Construct the tagged network with its final classification layer removed."""
    spec = REGISTRY[normalise_tag(tag)]
    if weights not in ("pretrained", "random"):
        raise BackboneError(f"weights must be 'pretrained' or 'random', got {weights!r}")
    try:
        if spec.arch == "googlenet":
            if weights == "pretrained":
                model = models.googlenet(weights=models.GoogLeNet_Weights.DEFAULT)
            else:
                torch.manual_seed(spec.seed)
                model = models.googlenet(weights=None, aux_logits=True, init_weights=True)
            model.fc = torch.nn.Identity()
        elif spec.arch == "resnet50":
            if weights == "pretrained":
                model = models.resnet50(weights=models.ResNet50_Weights.DEFAULT)
            else:
                torch.manual_seed(spec.seed)
                model = models.resnet50(weights=None)
            model.fc = torch.nn.Identity()
        else:  # vgg16
            if weights == "pretrained":
                model = models.vgg16(weights=models.VGG16_Weights.DEFAULT)
            else:
                torch.manual_seed(spec.seed)
                model = models.vgg16(weights=None)
            model.classifier[-1] = torch.nn.Identity()
    except ExtractErrorBase:  # pragma: no cover - re-raise our own
        raise
    except Exception as exc:
        raise BackboneError(f"cannot load backbone {spec.arch} ({weights}): {exc}") from exc
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model


# narrow alias used above to keep our own errors flowing through
ExtractErrorBase = BackboneError


def embed_batch(model: torch.nn.Module, batch: torch.Tensor) -> np.ndarray:
    """Forward a (B, 3, 224, 224) batch; returns float32 (B, dim) embeddings."""
    with torch.no_grad():
        out = model(batch)
    return out.detach().cpu().numpy().astype(np.float32)
