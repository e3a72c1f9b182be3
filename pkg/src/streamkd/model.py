"""Classifier networks plus flat-parameter plumbing.

The training loop, the EMA teacher, and the drift metric all talk to models
through one interface: `features` (penultimate embedding), `forward`
(logits = head(features)), and a flat float vector covering every learnable
parameter and every float buffer (normalization running stats ride along so
a teacher built from the flat view is a usable inference model).
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

import torch
import torch.nn as nn


class SmallCNN(nn.Module):
    """4-block conv net: each block conv3x3 + BN + ReLU + 2x2 maxpool."""

    def __init__(self, in_channels: int, n_classes: int,
                 widths: tuple[int, ...] = (16, 32, 64, 64)):
        super().__init__()
        blocks = []
        prev = in_channels
        for w in widths:
            blocks += [
                nn.Conv2d(prev, w, kernel_size=3, padding=1, bias=False),
                nn.BatchNorm2d(w),
                nn.ReLU(inplace=True),
                nn.MaxPool2d(2, ceil_mode=True),
            ]
            prev = w
        self.backbone = nn.Sequential(*blocks, nn.AdaptiveAvgPool2d(1), nn.Flatten())
        self.feature_dim = prev
        self.head = nn.Linear(prev, n_classes)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        return self.backbone(x)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.features(x))


class MLP(nn.Module):
    def __init__(self, in_features: int, n_classes: int,
                 hidden: tuple[int, ...] = (100, 100), activation: str = "relu"):
        super().__init__()
        act = {"relu": nn.ReLU, "tanh": nn.Tanh}[activation]
        layers: list[nn.Module] = [nn.Flatten()]
        prev = in_features
        for h in hidden:
            layers += [nn.Linear(prev, h), act()]
            prev = h
        self.backbone = nn.Sequential(*layers)
        self.feature_dim = prev
        self.head = nn.Linear(prev, n_classes)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        return self.backbone(x)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.features(x))


class _ResNetWrapper(nn.Module):
    """torchvision resnet18 with a features/head split and small-image stem."""

    def __init__(self, in_channels: int, n_classes: int):
        super().__init__()
        from torchvision.models import resnet18

        net = resnet18(weights=None, num_classes=n_classes)
        # 3x3 stem, no initial maxpool: standard adaptation for <=64 px inputs
        net.conv1 = nn.Conv2d(in_channels, 64, kernel_size=3, stride=1,
                              padding=1, bias=False)
        net.maxpool = nn.Identity()
        self.head = net.fc
        net.fc = nn.Identity()
        self.backbone = net
        self.feature_dim = self.head.in_features

    def features(self, x: torch.Tensor) -> torch.Tensor:
        return self.backbone(x)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.features(x))


def build_model(arch: str, image_shape: tuple[int, int, int], n_classes: int,
                **kwargs) -> nn.Module:
    c, h, w = image_shape
    if arch == "small_cnn":
        model = SmallCNN(c, n_classes, **kwargs)
    elif arch == "mlp":
        model = MLP(c * h * w, n_classes, **kwargs)
    elif arch == "resnet18":
        model = _ResNetWrapper(c, n_classes)
    else:
        raise ValueError(f"unknown arch {arch!r}")
    model.arch_descriptor = {
        "arch": arch,
        "image_shape": list(image_shape),
        "n_classes": n_classes,
        **{k: list(v) if isinstance(v, tuple) else v for k, v in kwargs.items()},
    }
    return model


def _flat_slots(model: nn.Module):
    """Parameters first, then float buffers, both in module order."""
    for p in model.parameters():
        yield p
    for b in model.buffers():
        if b.is_floating_point():
            yield b


def flat_params(model: nn.Module) -> torch.Tensor:
    """Detached copy of all learnable values as one 1-D vector."""
    return torch.cat([t.detach().reshape(-1).clone() for t in _flat_slots(model)])


def load_flat_params(model: nn.Module, vec: torch.Tensor) -> None:
    offset = 0
    with torch.no_grad():
        for t in _flat_slots(model):
            n = t.numel()
            if offset + n > vec.numel():
                raise ValueError("flat vector too short for model layout")
            t.copy_(vec[offset:offset + n].view_as(t))
            offset += n
    if offset != vec.numel():
        raise ValueError(f"flat vector has {vec.numel()} values, model holds {offset}")


def clone_model(model: nn.Module) -> nn.Module:
    """Independent deep copy; gradients disabled on the copy."""
    twin = copy.deepcopy(model)
    for p in twin.parameters():
        p.requires_grad_(False)
    return twin


_CHECKPOINT_VERSION = 1


def save_checkpoint(model: nn.Module, path: str | Path) -> None:
    path = Path(path)
    torch.save({"version": _CHECKPOINT_VERSION, "flat": flat_params(model)}, path)
    sidecar = {"version": _CHECKPOINT_VERSION, **model.arch_descriptor}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2))


def load_checkpoint(path: str | Path) -> nn.Module:
    path = Path(path)
    desc = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    if desc.pop("version") != _CHECKPOINT_VERSION:
        raise ValueError("unsupported checkpoint version")
    arch = desc.pop("arch")
    image_shape = tuple(desc.pop("image_shape"))
    n_classes = desc.pop("n_classes")
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in desc.items()}
    model = build_model(arch, image_shape, n_classes, **kwargs)
    blob = torch.load(path, weights_only=True)
    load_flat_params(model, blob["flat"])
    return model
