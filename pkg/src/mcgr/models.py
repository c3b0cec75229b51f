"""Networks: RFA residual blocks, HR/LR generators, critics, detection head.

Generators follow the EDSR-style layout with residual-feature-aggregation
blocks: each block runs a chain of residual units, concatenates every
unit's output, and fuses back to the trunk width with a 1x1 convolution
before the block skip.  The HR generator upsamples with sub-pixel
(channel-to-space) rearrangement; the LR generator mirrors it with
stride-2 convolutions.  Critics are unnormalized convolutional scorers
(per-sample gradient penalties rule out batch-coupled normalization).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn

LEAKY_SLOPE = 0.2


@dataclass
class GeneratorConfig:
    n_rfa_blocks: int = 48
    width: int = 64
    kernel: int = 3
    scale: int = 4
    units_per_block: int = 4
    in_channels: int = 3

    def __post_init__(self):
        if min(self.n_rfa_blocks, self.width, self.kernel, self.units_per_block) < 1:
            raise ValueError("all config fields must be positive")
        if self.kernel % 2 == 0:
            raise ValueError(f"kernel must be odd, got {self.kernel}")
        if self.scale < 1 or self.scale & (self.scale - 1):
            raise ValueError(f"scale must be a power of 2, got {self.scale}")


def _init_conv(conv: nn.Conv2d, gain: float = 1.0, generator: torch.Generator | None = None):
    fan_in = conv.in_channels * conv.kernel_size[0] * conv.kernel_size[1]
    std = gain / math.sqrt(fan_in)
    with torch.no_grad():
        conv.weight.normal_(0.0, std, generator=generator)
        if conv.bias is not None:
            conv.bias.zero_()


def pixel_rearrange(x: torch.Tensor, s: int) -> torch.Tensor:
    """Channel-to-space: (B, C*s^2, H, W) -> (B, C, s*H, s*W).

    out[b, c, s*i+di, s*j+dj] = in[b, c*s^2 + di*s + dj, i, j]
    """
    b, ch, h, w = x.shape
    if ch % (s * s):
        raise ValueError(f"channels {ch} not divisible by s^2={s * s}")
    c = ch // (s * s)
    x = x.reshape(b, c, s, s, h, w)
    x = x.permute(0, 1, 4, 2, 5, 3)
    return x.reshape(b, c, h * s, w * s)


def pixel_collapse(x: torch.Tensor, s: int) -> torch.Tensor:
    """Inverse of pixel_rearrange."""
    b, c, hs, ws = x.shape
    if hs % s or ws % s:
        raise ValueError(f"spatial dims {hs}x{ws} not divisible by {s}")
    h, w = hs // s, ws // s
    x = x.reshape(b, c, h, s, w, s)
    x = x.permute(0, 1, 3, 5, 2, 4)
    return x.reshape(b, c * s * s, h, w)


class ResidualUnit(nn.Module):
    def __init__(self, width: int, kernel: int):
        super().__init__()
        pad = kernel // 2
        self.conv1 = nn.Conv2d(width, width, kernel, padding=pad)
        self.conv2 = nn.Conv2d(width, width, kernel, padding=pad)
        self.act = nn.LeakyReLU(LEAKY_SLOPE)

    def forward(self, x):
        return x + self.conv2(self.act(self.conv1(x)))


class RFABlock(nn.Module):
    """Residual units in sequence; all unit outputs fused by 1x1 conv + block skip."""

    def __init__(self, width: int, kernel: int, units: int = 4):
        super().__init__()
        self.units = nn.ModuleList(ResidualUnit(width, kernel) for _ in range(units))
        self.fuse = nn.Conv2d(width * units, width, 1)

    def forward(self, x):
        if x.shape[1] != self.fuse.out_channels:
            raise ValueError(
                f"expected {self.fuse.out_channels} channels, got {x.shape[1]}"
            )
        feats = []
        y = x
        for unit in self.units:
            y = unit(y)
            feats.append(y)
        return x + self.fuse(torch.cat(feats, dim=1))


class _Trunk(nn.Module):
    """Head conv, RFA blocks, global skip from head output to trunk output."""

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        pad = cfg.kernel // 2
        self.head = nn.Conv2d(cfg.in_channels, cfg.width, cfg.kernel, padding=pad)
        self.blocks = nn.ModuleList(
            RFABlock(cfg.width, cfg.kernel, cfg.units_per_block)
            for _ in range(cfg.n_rfa_blocks)
        )

    def forward(self, x):
        x = self.head(x)
        y = x
        for block in self.blocks:
            y = block(y)
        return x + y


class HRGenerator(nn.Module):
    """LR -> SR generator: RFA trunk plus sub-pixel upsampling stages."""

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        pad = cfg.kernel // 2
        self.trunk = _Trunk(cfg)
        n_stages = int(math.log2(cfg.scale))
        self.upsample = nn.ModuleList(
            nn.Conv2d(cfg.width, cfg.width * 4, cfg.kernel, padding=pad)
            for _ in range(n_stages)
        )
        self.act = nn.LeakyReLU(LEAKY_SLOPE)
        self.tail = nn.Conv2d(cfg.width, cfg.in_channels, cfg.kernel, padding=pad)

    def forward(self, lr: torch.Tensor) -> torch.Tensor:
        if lr.shape[1] != self.cfg.in_channels:
            raise ValueError(f"expected {self.cfg.in_channels} input channels")
        if not torch.isfinite(lr).all():
            raise ValueError("non-finite input")
        x = self.trunk(lr)
        for conv in self.upsample:
            x = self.act(pixel_rearrange(conv(x), 2))
        return self.tail(x)


class LRGenerator(nn.Module):
    """HR -> LR generator: RFA trunk with stride-2 downsampling stages."""

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        pad = cfg.kernel // 2
        self.trunk = _Trunk(cfg)
        n_stages = int(math.log2(cfg.scale))
        self.downsample = nn.ModuleList(
            nn.Conv2d(cfg.width, cfg.width, cfg.kernel, stride=2, padding=pad)
            for _ in range(n_stages)
        )
        self.act = nn.LeakyReLU(LEAKY_SLOPE)
        self.tail = nn.Conv2d(cfg.width, cfg.in_channels, cfg.kernel, padding=pad)

    def forward(self, hr: torch.Tensor) -> torch.Tensor:
        if hr.shape[-1] % self.cfg.scale or hr.shape[-2] % self.cfg.scale:
            raise ValueError(
                f"spatial dims {tuple(hr.shape[-2:])} not divisible by scale {self.cfg.scale}"
            )
        if not torch.isfinite(hr).all():
            raise ValueError("non-finite input")
        x = self.trunk(hr)
        for conv in self.downsample:
            x = self.act(conv(x))
        return self.tail(x)


class Critic(nn.Module):
    """Convolutional scorer: stride-2 stages doubling from base width,
    global average pooling, linear score.  No normalization layers."""

    def __init__(self, in_channels: int = 3, base_width: int = 32, n_stages: int = 4,
                 input_size: int | None = None):
        super().__init__()
        self.input_size = input_size
        layers = []
        c = in_channels
        w = base_width
        for _ in range(n_stages):
            layers += [nn.Conv2d(c, w, 3, stride=2, padding=1), nn.LeakyReLU(LEAKY_SLOPE)]
            c, w = w, w * 2
        self.features = nn.Sequential(*layers)
        self.score = nn.Linear(c, 1)

    def forward(self, img: torch.Tensor) -> torch.Tensor:
        if self.input_size is not None and tuple(img.shape[-2:]) != (self.input_size, self.input_size):
            raise ValueError(
                f"critic expects {self.input_size}x{self.input_size} input, "
                f"got {tuple(img.shape[-2:])}"
            )
        x = self.features(img)
        x = x.mean(dim=(2, 3))
        return self.score(x).squeeze(-1)


@dataclass
class DetectorConfig:
    n_classes: int = 5
    strides: tuple[int, ...] = (8, 16)
    anchors_per_level: int = 3
    base_width: int = 16

    @property
    def out_channels(self) -> int:
        return self.anchors_per_level * (5 + self.n_classes)


class DetectorHead(nn.Module):
    """Compact anchor-based head: a small stride-pyramid backbone with one
    raw prediction grid per stride level, channel layout
    anchors * (tx, ty, tw, th, objectness, class logits)."""

    def __init__(self, cfg: DetectorConfig, in_channels: int = 3):
        super().__init__()
        self.cfg = cfg
        w = cfg.base_width
        self.act = nn.LeakyReLU(LEAKY_SLOPE)
        self.stem = nn.Sequential(
            nn.Conv2d(in_channels, w, 3, padding=1), nn.LeakyReLU(LEAKY_SLOPE),
            nn.Conv2d(w, w * 2, 3, stride=2, padding=1), nn.LeakyReLU(LEAKY_SLOPE),
            nn.Conv2d(w * 2, w * 4, 3, stride=2, padding=1), nn.LeakyReLU(LEAKY_SLOPE),
            nn.Conv2d(w * 4, w * 4, 3, stride=2, padding=1), nn.LeakyReLU(LEAKY_SLOPE),
        )  # stride 8 features
        self.downs = nn.ModuleList()
        self.heads = nn.ModuleList([nn.Conv2d(w * 4, cfg.out_channels, 1)])
        stride = 8
        for s in cfg.strides:
            if s < 8 or s & (s - 1):
                raise ValueError(f"strides must be powers of 2 >= 8, got {s}")
        if tuple(sorted(cfg.strides)) != cfg.strides:
            raise ValueError("strides must be increasing")
        if cfg.strides[0] != 8:
            raise ValueError("first stride must be 8")
        for s in cfg.strides[1:]:
            while stride < s:
                self.downs.append(nn.Conv2d(w * 4, w * 4, 3, stride=2, padding=1))
                stride *= 2
            self.heads.append(nn.Conv2d(w * 4, cfg.out_channels, 1))

    def forward(self, img: torch.Tensor) -> list[torch.Tensor]:
        h, w = img.shape[-2:]
        for s in self.cfg.strides:
            if h % s or w % s:
                raise ValueError(f"input {h}x{w} not divisible by stride {s}")
        x = self.stem(img)
        grids = [self.heads[0](x)]
        for down, head in zip(self.downs, self.heads[1:]):
            x = self.act(down(x))
            grids.append(head(x))
        return grids


def init_parameters(module: nn.Module, seed: int = 0) -> None:
    """Fan-in-scaled normal init; RFA fusion convs at 0.1x scale for a
    near-identity start."""
    gen = torch.Generator().manual_seed(seed)
    for m in module.modules():
        if isinstance(m, nn.Conv2d):
            _init_conv(m, generator=gen)
        elif isinstance(m, nn.Linear):
            std = 1.0 / math.sqrt(m.in_features)
            with torch.no_grad():
                m.weight.normal_(0.0, std, generator=gen)
                m.bias.zero_()
    for m in module.modules():
        if isinstance(m, RFABlock):
            _init_conv(m.fuse, gain=0.1, generator=gen)
