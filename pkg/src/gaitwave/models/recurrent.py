"""Recurrent families: plain LSTM classifier and CNN-BiLSTM attention hybrids."""

from __future__ import annotations

import torch
import torch.nn as nn

from ..errors import ConfigError


def _lstm(input_size: int, hidden: int, layers: int, bidirectional: bool,
          dropout: float) -> nn.LSTM:
    # torch warns if dropout is set on a single-layer LSTM
    return nn.LSTM(
        input_size,
        hidden,
        num_layers=layers,
        batch_first=True,
        bidirectional=bidirectional,
        dropout=dropout if layers > 1 else 0.0,
    )


class LstmHumanFi(nn.Module):
    """Stacked (Bi)LSTM; the final hidden state of each direction feeds a
    dense classifier."""

    def __init__(self, input_channels: int, num_classes: int, hidden_dim: int,
                 num_layers: int, bidirectional: bool, dropout: float):
        super().__init__()
        self.lstm = _lstm(input_channels, hidden_dim, num_layers, bidirectional, dropout)
        self.directions = 2 if bidirectional else 1
        self.head = nn.Linear(hidden_dim * self.directions, num_classes)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        _, (h_n, _) = self.lstm(x)
        # h_n: [layers * directions, B, H]; keep the last layer only
        last = h_n[-self.directions:]
        feat = torch.cat(list(last), dim=1)
        return self.head(feat)


class ChannelGate(nn.Module):
    """Squeeze-style channel attention over conv feature maps [B, F, L]."""

    def __init__(self, num_features: int):
        super().__init__()
        self.fc = nn.Linear(num_features, num_features)

    def forward(self, feats: torch.Tensor) -> torch.Tensor:
        gate = torch.sigmoid(self.fc(feats.mean(dim=2)))
        return feats * gate.unsqueeze(2)


class CnnBiLstmAttn(nn.Module):
    """Conv stem -> BiLSTM -> temporal attention pooling -> classifier.

    With ``dual=True`` a channel gate reweights the conv features before the
    recurrence (channel attention first, then temporal attention).
    """

    STEM_KERNEL = 3

    def __init__(self, input_channels: int, num_classes: int, hidden_dim: int,
                 num_layers: int, dropout: float, dual: bool):
        super().__init__()
        self.conv = nn.Conv1d(input_channels, hidden_dim, self.STEM_KERNEL, padding=1)
        self.channel_gate = ChannelGate(hidden_dim) if dual else None
        self.lstm = _lstm(hidden_dim, hidden_dim, num_layers, True, dropout)
        self.score = nn.Linear(2 * hidden_dim, 1)
        self.head = nn.Linear(2 * hidden_dim, num_classes)

    def _sequence_features(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] < self.STEM_KERNEL:
            raise ConfigError(
                f"window length {x.shape[1]} shorter than conv stem kernel {self.STEM_KERNEL}"
            )
        feats = torch.relu(self.conv(x.transpose(1, 2)))
        if self.channel_gate is not None:
            feats = self.channel_gate(feats)
        out, _ = self.lstm(feats.transpose(1, 2))
        return out  # [B, L, 2H]

    def attention_map(self, x: torch.Tensor) -> torch.Tensor:
        """Per-sample temporal weights [B, L]; softmax rows sum to 1."""
        out = self._sequence_features(x)
        return torch.softmax(self.score(out).squeeze(2), dim=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = self._sequence_features(x)
        weights = torch.softmax(self.score(out).squeeze(2), dim=1)
        context = (weights.unsqueeze(2) * out).sum(dim=1)
        return self.head(context)
