"""Declarative model configs, construction, init, counting and weight I/O."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
from torch.nn.utils import parametrize

from ..errors import ConfigError, FormatError
from .recurrent import CnnBiLstmAttn, LstmHumanFi
from .resnet1d import ResNet1D
from .tcn import Tcn

FAMILIES = (
    "lstm_humanfi",
    "cnn_bilstm_temporal_attn",
    "cnn_bilstm_dual_attn",
    "custom_resnet1d",
    "custom_eca_resnet1d",
    "opt_resnet1d_jaril",
    "opt_eca_resnet1d_jaril",
    "tcn",
)

_RECURRENT = {"lstm_humanfi", "cnn_bilstm_temporal_attn", "cnn_bilstm_dual_attn"}
_RESNET = {"custom_resnet1d", "custom_eca_resnet1d", "opt_resnet1d_jaril",
           "opt_eca_resnet1d_jaril"}

# stage-transition stride and default base width per ResNet regime
_RESNET_REGIME = {
    "custom_resnet1d": (1, 64, False),
    "custom_eca_resnet1d": (1, 64, True),
    "opt_resnet1d_jaril": (2, 128, False),
    "opt_eca_resnet1d_jaril": (2, 128, True),
}


@dataclass(frozen=True)
class ModelConfig:
    family: str
    input_channels: int
    num_classes: int
    # recurrent families
    hidden_dim: int = 64
    num_layers: int = 1
    bidirectional: bool = True
    # all families
    dropout: float = 0.0
    # ResNet families
    res_layers: tuple[int, int, int, int] = (1, 1, 1, 1)
    base_width: int | None = None  # None -> family default (64 custom / 128 jaril)
    # TCN
    channel_list: tuple[int, ...] = (64, 128)
    kernel_size: int = 2
    # bookkeeping: which augmentations trained this model (not architectural)
    mixup: bool = False
    smoothing: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown model family {self.family!r}")
        if self.input_channels < 1 or self.num_classes < 1:
            raise ConfigError("input_channels and num_classes must be >= 1")
        if self.hidden_dim < 1 or self.num_layers < 1:
            raise ConfigError("hidden_dim and num_layers must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        object.__setattr__(self, "res_layers", tuple(self.res_layers))
        object.__setattr__(self, "channel_list", tuple(self.channel_list))
        if self.family in _RESNET:
            if len(self.res_layers) != 4 or any(n < 1 for n in self.res_layers):
                raise ConfigError("res_layers must be 4 positive block counts")
            if self.base_width is not None and self.base_width < 1:
                raise ConfigError("base_width must be positive")
        if self.family == "tcn":
            if not self.channel_list or any(w < 1 for w in self.channel_list):
                raise ConfigError("channel_list must be non-empty positive widths")
            if self.kernel_size < 1:
                raise ConfigError("kernel_size must be >= 1")

    @property
    def effective_base_width(self) -> int:
        if self.base_width is not None:
            return self.base_width
        return _RESNET_REGIME[self.family][1] if self.family in _RESNET else 64

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["res_layers"] = list(self.res_layers)
        doc["channel_list"] = list(self.channel_list)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown model config fields: {sorted(unknown)}")
        doc = dict(doc)
        if "res_layers" in doc:
            doc["res_layers"] = tuple(doc["res_layers"])
        if "channel_list" in doc:
            doc["channel_list"] = tuple(doc["channel_list"])
        return cls(**doc)


def config_string(cfg: ModelConfig) -> str:
    """Compact human-readable form used in report rows."""
    if cfg.family == "tcn":
        core = f"tcn [{','.join(map(str, cfg.channel_list))}] k={cfg.kernel_size}"
    elif cfg.family in _RESNET:
        core = f"{cfg.family} [{','.join(map(str, cfg.res_layers))}] w={cfg.effective_base_width}"
    elif cfg.family == "lstm_humanfi":
        direction = "bi" if cfg.bidirectional else "uni"
        core = f"lstm_humanfi h={cfg.hidden_dim} l={cfg.num_layers} {direction}"
    else:
        core = f"{cfg.family} h={cfg.hidden_dim} l={cfg.num_layers}"
    if cfg.dropout > 0:
        core += f" DR={cfg.dropout:g}"
    if cfg.smoothing:
        core += " +smooth"
    if cfg.mixup:
        core += " +mixup"
    return core


def build_model(cfg: ModelConfig) -> nn.Module:
    """Construct and initialize one model; forward maps (B, L, C) -> (B, K)."""
    if cfg.family == "lstm_humanfi":
        model = LstmHumanFi(cfg.input_channels, cfg.num_classes, cfg.hidden_dim,
                            cfg.num_layers, cfg.bidirectional, cfg.dropout)
    elif cfg.family in ("cnn_bilstm_temporal_attn", "cnn_bilstm_dual_attn"):
        model = CnnBiLstmAttn(cfg.input_channels, cfg.num_classes, cfg.hidden_dim,
                              cfg.num_layers, cfg.dropout,
                              dual=cfg.family == "cnn_bilstm_dual_attn")
    elif cfg.family in _RESNET:
        stride, _, with_eca = _RESNET_REGIME[cfg.family]
        model = ResNet1D(cfg.input_channels, cfg.num_classes, cfg.effective_base_width,
                         cfg.res_layers, stage_stride=stride, with_eca=with_eca)
    elif cfg.family == "tcn":
        model = Tcn(cfg.input_channels, cfg.num_classes, cfg.channel_list,
                    cfg.kernel_size, cfg.dropout)
    else:  # unreachable: __post_init__ already vetoed unknown families
        raise ConfigError(f"unknown model family {cfg.family!r}")
    _initialize(model)
    return model


def _initialize(model: nn.Module) -> None:
    """Fan-in uniform conv/linear weights, orthogonal recurrent weights,
    zero biases, identity batch-norm. Parametrized (weight-normed) modules
    were initialized at construction and are left untouched."""
    for module in model.modules():
        if parametrize.is_parametrized(module):
            continue
        if isinstance(module, (nn.Conv1d, nn.Linear)):
            weight = module.weight
            fan_in = weight.shape[1] * (weight.shape[2] if weight.dim() == 3 else 1)
            bound = 1.0 / math.sqrt(fan_in)
            nn.init.uniform_(weight, -bound, bound)
            if module.bias is not None:
                nn.init.zeros_(module.bias)
        elif isinstance(module, nn.LSTM):
            hidden = module.hidden_size
            for name, param in module.named_parameters():
                if name.startswith("weight"):
                    for gate in param.view(4, hidden, -1):
                        nn.init.orthogonal_(gate)
                else:
                    nn.init.zeros_(param)
        elif isinstance(module, nn.BatchNorm1d):
            nn.init.ones_(module.weight)
            nn.init.zeros_(module.bias)


def count_params(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


# ------------------------------------------------------------------ weight I/O
#
# Archive layout mirrors the recording format: one UTF-8 JSON index line
# (name -> shape/dtype/offset into the payload), then a little-endian
# float32 payload. BatchNorm num_batches_tracked counters are not stored.

def save_weights(model: nn.Module, path: str | Path) -> None:
    entries = {}
    chunks = []
    offset = 0
    for name, tensor in model.state_dict().items():
        if name.endswith("num_batches_tracked"):
            continue
        arr = tensor.detach().cpu().numpy().astype("<f4")
        entries[name] = {"shape": list(arr.shape), "dtype": "float32", "offset": offset}
        chunks.append(arr.tobytes(order="C"))
        offset += arr.nbytes
    header = json.dumps({"version": 1, "tensors": entries}, sort_keys=True,
                        separators=(",", ":"))
    with open(path, "wb") as fh:
        fh.write(header.encode("utf-8") + b"\n")
        for chunk in chunks:
            fh.write(chunk)


def load_weights(model: nn.Module, path: str | Path) -> None:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
        tensors = header["tensors"]
        version = header["version"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError) as exc:
        raise FormatError(f"weight archive {path}: bad index line ({exc})") from exc
    if version != 1:
        raise FormatError(f"weight archive {path}: unsupported version {version}")

    state = {}
    for name, meta in tensors.items():
        shape = tuple(meta["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = meta["offset"]
        end = start + 4 * count
        if end > len(payload):
            raise FormatError(f"weight archive {path}: tensor {name!r} overruns payload")
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=start).reshape(shape)
        state[name] = torch.from_numpy(arr.copy())

    try:
        # strict=False tolerates the absent num_batches_tracked counters but
        # still raises on shape mismatches
        result = model.load_state_dict(state, strict=False)
    except RuntimeError as exc:
        raise FormatError(f"weight archive {path} does not match model: {exc}") from exc
    unexpected = list(result.unexpected_keys)
    missing = [k for k in result.missing_keys if not k.endswith("num_batches_tracked")]
    if unexpected or missing:
        raise FormatError(
            f"weight archive {path} does not match model: "
            f"missing={missing} unexpected={unexpected}"
        )
