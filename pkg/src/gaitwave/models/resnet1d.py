"""1-D ResNet families with optional efficient channel attention (ECA).

Two width/stride regimes share this implementation:
  * "custom": base width 64, every conv stride 1 (constant temporal length);
  * "jaril":  base width 128, stride-2 downsampling at each stage transition,
    stem kept at stride 1.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn

from ..errors import ConfigError

STEM_KERNEL = 7


def eca_kernel_size(channels: int, gamma: int = 2, b: int = 1) -> int:
    """Adaptive ECA kernel: odd value near log2(C)/gamma + b/gamma, floor 3."""
    t = int(abs(math.log2(channels) / gamma + b / gamma))
    k = t if t % 2 == 1 else t + 1
    return max(k, 3)


class EcaGate(nn.Module):
    """Global pool -> 1-D conv across the channel descriptor -> sigmoid gate."""

    def __init__(self, channels: int):
        super().__init__()
        k = eca_kernel_size(channels)
        self.conv = nn.Conv1d(1, 1, kernel_size=k, padding=k // 2, bias=False)

    def gate(self, x: torch.Tensor) -> torch.Tensor:
        descriptor = x.mean(dim=2, keepdim=True)  # [B, C, 1]
        scores = self.conv(descriptor.transpose(1, 2)).transpose(1, 2)
        return torch.sigmoid(scores)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x * self.gate(x)


class BasicBlock(nn.Module):
    def __init__(self, in_width: int, out_width: int, stride: int, with_eca: bool):
        super().__init__()
        self.conv1 = nn.Conv1d(in_width, out_width, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm1d(out_width)
        self.conv2 = nn.Conv1d(out_width, out_width, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm1d(out_width)
        self.eca = EcaGate(out_width) if with_eca else None
        if in_width != out_width or stride != 1:
            self.shortcut = nn.Sequential(
                nn.Conv1d(in_width, out_width, 1, stride=stride, bias=False),
                nn.BatchNorm1d(out_width),
            )
        else:
            self.shortcut = nn.Identity()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = torch.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        if self.eca is not None:
            out = self.eca(out)
        return torch.relu(out + self.shortcut(x))


class ResNet1D(nn.Module):
    """Stem conv (kernel 7, stride 1) + four residual stages + GAP classifier."""

    def __init__(self, input_channels: int, num_classes: int, base_width: int,
                 res_layers: tuple[int, int, int, int], stage_stride: int,
                 with_eca: bool):
        super().__init__()
        widths = [base_width, base_width * 2, base_width * 4, base_width * 8]
        self.stem = nn.Conv1d(input_channels, base_width, STEM_KERNEL, stride=1,
                              padding=STEM_KERNEL // 2, bias=False)
        self.stem_bn = nn.BatchNorm1d(base_width)

        stages = []
        in_width = base_width
        for stage_idx, (width, count) in enumerate(zip(widths, res_layers)):
            blocks = []
            for block_idx in range(count):
                stride = stage_stride if stage_idx > 0 and block_idx == 0 else 1
                blocks.append(BasicBlock(in_width, width, stride, with_eca))
                in_width = width
            stages.append(nn.Sequential(*blocks))
        self.stages = nn.ModuleList(stages)
        self.head = nn.Linear(widths[-1], num_classes)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] < STEM_KERNEL:
            raise ConfigError(
                f"window length {x.shape[1]} shorter than conv stem kernel {STEM_KERNEL}"
            )
        out = torch.relu(self.stem_bn(self.stem(x.transpose(1, 2))))
        for stage in self.stages:
            out = stage(out)
        return out  # [B, W, L']

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.features(x).mean(dim=2))
