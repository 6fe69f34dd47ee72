"""Temporal convolutional network with causal dilated convolutions.

Causality is enforced by explicit left padding of (kernel_size - 1) * dilation
zeros before each conv, so features at position t depend only on inputs <= t.
Convs carry weight normalization; their weights are initialized before the
parametrization wraps them (the zoo-wide init pass skips parametrized modules).
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.nn.utils.parametrizations import weight_norm


def _causal_conv(in_width: int, out_width: int, kernel_size: int, dilation: int) -> nn.Conv1d:
    conv = nn.Conv1d(in_width, out_width, kernel_size, dilation=dilation)
    bound = 1.0 / math.sqrt(in_width * kernel_size)
    nn.init.uniform_(conv.weight, -bound, bound)
    nn.init.zeros_(conv.bias)
    return weight_norm(conv)


class TemporalBlock(nn.Module):
    def __init__(self, in_width: int, out_width: int, kernel_size: int,
                 dilation: int, dropout: float):
        super().__init__()
        self.pad = (kernel_size - 1) * dilation
        self.conv1 = _causal_conv(in_width, out_width, kernel_size, dilation)
        self.conv2 = _causal_conv(out_width, out_width, kernel_size, dilation)
        self.dropout = nn.Dropout(dropout)
        self.shortcut = nn.Conv1d(in_width, out_width, 1) if in_width != out_width else None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = self.dropout(torch.relu(self.conv1(F.pad(x, (self.pad, 0)))))
        out = self.dropout(torch.relu(self.conv2(F.pad(out, (self.pad, 0)))))
        residual = x if self.shortcut is None else self.shortcut(x)
        return torch.relu(out + residual)


class Tcn(nn.Module):
    """Stacked temporal blocks (dilation 2^i) + classifier on the last timestep."""

    def __init__(self, input_channels: int, num_classes: int,
                 channel_list: tuple[int, ...], kernel_size: int, dropout: float):
        super().__init__()
        blocks = []
        in_width = input_channels
        for i, out_width in enumerate(channel_list):
            blocks.append(TemporalBlock(in_width, out_width, kernel_size, 2**i, dropout))
            in_width = out_width
        self.blocks = nn.Sequential(*blocks)
        self.head = nn.Linear(in_width, num_classes)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        return self.blocks(x.transpose(1, 2))  # [B, W, L]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.features(x)[:, :, -1])
