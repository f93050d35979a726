"""Model configuration files.

One directive per line, ``#`` starts a comment::

    input 784          # or: input <c> <h> <w>
    fc 128
    alpha 5            # overrides the default shift of the layer above
    fc 128
    residual 1         # add the activation of layer 1 to this pre-activation
    fc 10
    classes 10

Layers are numbered from 1 in file order; ``residual 0`` refers to the input.
``conv <cout> <k> <stride> <pad>`` and ``maxpool <k>`` need a 3-d input.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

from . import nn


class ConfigError(ValueError):
    """Malformed model configuration."""


@dataclass
class ModelConfig:
    layers: list
    classes: int

    @property
    def input_shape(self) -> tuple:
        return tuple(self.layers[0].in_shape)

    @property
    def input_size(self) -> int:
        return math.prod(self.input_shape)


_ARITY = {"input": (1, 3), "fc": (1,), "conv": (4,), "maxpool": (1,),
          "residual": (1,), "alpha": (1,), "classes": (1,)}


def parse_model_config(text: str) -> ModelConfig:
    shape = None
    layers: list[nn.LayerSpec] = []
    classes = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        word, *args = line.split()
        where = f"line {lineno}"
        if word not in _ARITY:
            raise ConfigError(f"{where}: unknown directive {word!r}")
        if len(args) not in _ARITY[word]:
            raise ConfigError(f"{where}: {word} takes {' or '.join(map(str, _ARITY[word]))} arguments")
        try:
            nums = [int(a) for a in args]
        except ValueError:
            raise ConfigError(f"{where}: arguments must be integers") from None
        if word == "input":
            if shape is not None:
                raise ConfigError(f"{where}: input declared twice")
            if min(nums) < 1:
                raise ConfigError(f"{where}: input dimensions must be positive")
            shape = tuple(nums)
            continue
        if shape is None:
            raise ConfigError(f"{where}: {word} before input")
        if word == "classes":
            classes = nums[0]
            continue
        if word in ("alpha", "residual"):
            if not layers or not layers[-1].has_weights:
                raise ConfigError(f"{where}: {word} must follow an fc or conv layer")
            if word == "alpha":
                if nums[0] < 0:
                    raise ConfigError(f"{where}: alpha must be non-negative")
                layers[-1].alpha = nums[0]
            else:
                layers[-1].residual_from = nums[0]
            continue
        prev = tuple(layers[-1].out_shape) if layers else shape
        try:
            if word == "fc":
                layers.append(nn.fc(math.prod(prev), nums[0]))
            elif len(prev) != 3:
                raise ConfigError(f"{where}: {word} needs a (c, h, w) input, got {prev}")
            elif word == "conv":
                layers.append(nn.conv(prev, *nums))
            else:
                layers.append(nn.maxpool(prev, nums[0]))
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None
    if not layers:
        raise ConfigError("no layers declared")
    out = math.prod(layers[-1].out_shape)
    if classes is None:
        classes = out
    elif classes != out:
        raise ConfigError(f"classes {classes} != final layer size {out}")
    try:
        nn.check_layers(layers)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return ModelConfig(layers, classes)


def load_model_config(path) -> ModelConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read model config: {exc}") from None
    return parse_model_config(text)


_BLOCK = re.compile(r"^(\d+)\s*[x×]\s*\((\d+)FC\)$", re.I)


def from_arch(arch: str, input_size: int) -> ModelConfig:
    """Shorthand like ``2x(128FC)-10MSE`` for fully connected nets."""
    sizes = [input_size]
    for part in arch.replace(" ", "").split("-"):
        m = _BLOCK.match(part)
        if m:
            sizes += [int(m.group(2))] * int(m.group(1))
            continue
        m = re.match(r"^(\d+)(FC|MSE)?$", part, re.I)
        if not m:
            raise ConfigError(f"cannot parse architecture part {part!r}")
        sizes.append(int(m.group(1)))
    return ModelConfig(nn.mlp(sizes), sizes[-1])


def to_text(cfg: ModelConfig) -> str:
    lines = ["input " + " ".join(map(str, cfg.input_shape))]
    for L in cfg.layers:
        if L.kind == "fc":
            lines.append(f"fc {L.out_shape[0]}")
        elif L.kind == "conv":
            lines.append(f"conv {L.out_shape[0]} {L.kernel} {L.stride} {L.pad}")
        else:
            lines.append(f"maxpool {L.kernel}")
        if L.has_weights:
            lines.append(f"alpha {L.alpha}")
        if L.residual_from is not None:
            lines.append(f"residual {L.residual_from}")
    lines.append(f"classes {cfg.classes}")
    return "\n".join(lines) + "\n"
