"""Stochastic view generation: padded random crop, flip, color jitter, grayscale.

Two strategies: `partial` (crop + flip only) and `full` (crop + flip +
color jitter + random grayscale). Everything is driven by a caller-supplied
torch.Generator, so a fixed generator state reproduces the output exactly.
Op order is crop -> flip -> jitter -> gray; jitter applies brightness,
contrast, saturation, hue in that fixed order.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

STRATEGIES = ("full", "partial")


@dataclass(frozen=True)
class AugPolicy:
    strategy: str = "full"
    jitter_params: tuple[float, float, float, float] = (0.4, 0.4, 0.4, 0.1)
    p_jitter: float = 0.8
    p_gray: float = 0.2
    p_flip: float = 0.5
    crop_pad_frac: float = 0.125  # 4 px at 32 px

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")


def _rand(shape, gen: torch.Generator) -> torch.Tensor:
    return torch.rand(shape, generator=gen)


def _random_crop(x: torch.Tensor, pad: int, gen: torch.Generator) -> torch.Tensor:
    if pad == 0:
        return x
    b, _, h, w = x.shape
    padded = torch.nn.functional.pad(x, (pad, pad, pad, pad))
    dy = torch.randint(0, 2 * pad + 1, (b,), generator=gen)
    dx = torch.randint(0, 2 * pad + 1, (b,), generator=gen)
    out = torch.empty_like(x)
    for i in range(b):
        out[i] = padded[i, :, dy[i]:dy[i] + h, dx[i]:dx[i] + w]
    return out


def _gray(x: torch.Tensor) -> torch.Tensor:
    if x.shape[1] != 3:
        return x
    luma = (0.299 * x[:, 0] + 0.587 * x[:, 1] + 0.114 * x[:, 2]).unsqueeze(1)
    return luma.expand_as(x).contiguous()


def _rgb_to_hsv(x: torch.Tensor) -> torch.Tensor:
    r, g, b = x[:, 0], x[:, 1], x[:, 2]
    maxc, _ = x.max(dim=1)
    minc, _ = x.min(dim=1)
    v = maxc
    delta = maxc - minc
    s = torch.where(maxc > 0, delta / maxc.clamp(min=1e-12), torch.zeros_like(maxc))
    dz = delta.clamp(min=1e-12)
    h = torch.where(maxc == r, ((g - b) / dz) % 6.0,
                    torch.where(maxc == g, (b - r) / dz + 2.0, (r - g) / dz + 4.0))
    h = torch.where(delta > 0, h / 6.0, torch.zeros_like(h))
    return torch.stack([h, s, v], dim=1)


def _hsv_to_rgb(x: torch.Tensor) -> torch.Tensor:
    h, s, v = x[:, 0] % 1.0, x[:, 1], x[:, 2]
    i = torch.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1 - s)
    q = v * (1 - f * s)
    t = v * (1 - (1 - f) * s)
    i = i.long() % 6
    choices = torch.stack([
        torch.stack([v, t, p], dim=1), torch.stack([q, v, p], dim=1),
        torch.stack([p, v, t], dim=1), torch.stack([p, q, v], dim=1),
        torch.stack([t, p, v], dim=1), torch.stack([v, p, q], dim=1),
    ])  # [6, B, 3, H, W]
    idx = i.unsqueeze(0).unsqueeze(2).expand(1, -1, 3, -1, -1)
    return torch.gather(choices, 0, idx).squeeze(0)


def _jitter(x: torch.Tensor, params: tuple[float, float, float, float],
            apply: torch.Tensor, gen: torch.Generator) -> torch.Tensor:
    b = x.shape[0]
    bright, contrast, sat, hue = params
    gate = apply.float().view(b, 1, 1, 1)

    def factor(span: float) -> torch.Tensor:
        f = 1.0 + span * (2 * _rand(b, gen) - 1)
        return (1.0 + (f - 1.0) * gate.view(b)).view(b, 1, 1, 1)

    x = x * factor(bright)
    mean = x.mean(dim=(1, 2, 3), keepdim=True)
    x = mean + (x - mean) * factor(contrast)
    if x.shape[1] == 3:
        luma = _gray(x)
        x = luma + (x - luma) * factor(sat)
        shift = hue * (2 * _rand(b, gen) - 1) * gate.view(b)
        hsv = _rgb_to_hsv(x.clamp(0.0, 1.0))
        hsv[:, 0] = hsv[:, 0] + shift.view(b, 1, 1)
        x = _hsv_to_rgb(hsv)
    else:
        # single-channel input has no saturation or hue; still burn the draws
        # so the rng stream does not depend on channel count
        _rand(b, gen)
        _rand(b, gen)
    return x


def augment(images: torch.Tensor, policy: AugPolicy, gen: torch.Generator) -> torch.Tensor:
    """Produce one stochastic view of a [B, C, H, W] batch in [0, 1]."""
    if images.ndim != 4:
        raise ValueError(f"expected [B, C, H, W], got shape {tuple(images.shape)}")
    if images.numel() == 0:
        return images.clone()
    b, _, h, _ = images.shape
    x = _random_crop(images, round(h * policy.crop_pad_frac), gen)

    flip = _rand(b, gen) < policy.p_flip
    if flip.any():
        x = torch.where(flip.view(b, 1, 1, 1), x.flip(-1), x)

    if policy.strategy == "full":
        x = _jitter(x, policy.jitter_params, _rand(b, gen) < policy.p_jitter, gen)
        gray = _rand(b, gen) < policy.p_gray
        if gray.any():
            x = torch.where(gray.view(b, 1, 1, 1), _gray(x), x)

    return x.clamp(0.0, 1.0)
