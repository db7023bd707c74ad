"""Spatial dropout applied inside a frozen network at inference time.

Whole feature channels are zeroed at the declared layers and the kept
channels are rescaled by 1/(1-p_d), the standard inverted-dropout
convention, so activation magnitude is preserved in expectation.  Masks
come from the counter-based stream keyed by (seed, model, image, layer),
which makes every forward pass reproducible without global RNG state.

A rate of exactly 0 bypasses the arithmetic entirely: the hook returns
the layer output object unchanged, so the prediction is bit-identical to
an unperturbed forward pass.
"""

from __future__ import annotations

import torch
from torch import nn

from cte_adapter.errors import PlacementError
from cte_adapter.models import ModelSpec
from cte_adapter.rng import derive_key, uniforms

PLACEMENTS = ("all-layers", "bottleneck", "bottleneck+skips")


def resolve_placement(model: nn.Module, spec: ModelSpec, placement: str) -> list[str]:
    """Layer names targeted by a placement, validated against the model.

    Only names listed in the model spec are eligible; anything the model
    does not actually contain fails with the full candidate list.
    """
    if placement == "all-layers":
        wanted = list(spec.feature_layers)
    elif placement == "bottleneck":
        wanted = list(spec.bottleneck)
    elif placement == "bottleneck+skips":
        wanted = list(spec.bottleneck) + [n for n in spec.skips if n not in spec.bottleneck]
    else:
        raise PlacementError(f"unknown placement {placement!r} (one of {PLACEMENTS})")
    if not wanted:
        raise PlacementError(
            f"model {spec.id!r} declares no layers for placement {placement!r}; "
            "fill in feature_layers/bottleneck/skips in the model spec"
        )
    known = {name for name, _ in model.named_modules() if name}
    missing = [name for name in wanted if name not in known]
    if missing:
        raise PlacementError(
            f"model {spec.id!r} has no layer(s) {missing}; candidates: {sorted(known)}"
        )
    return wanted


def channel_mask(n_channels: int, p_d: float, key: int) -> torch.Tensor:
    """Float mask over channels: 0 for dropped, 1/(1-p_d) for kept."""
    draws = uniforms(key, n_channels)
    scale = 1.0 / (1.0 - p_d)
    kept = [scale if u >= p_d else 0.0 for u in draws]
    return torch.tensor(kept, dtype=torch.float64).reshape(1, n_channels, 1, 1)


class spatial_dropout:
    """Context manager hooking dropout onto the named layers.

    >>> with spatial_dropout(model, ["enc"], p_d=0.1, key=key):
    ...     logits = model(x)
    """

    def __init__(self, model: nn.Module, layer_names: list[str], p_d: float, key: int):
        if not 0.0 <= p_d < 1.0:
            raise PlacementError(f"dropout rate must be in [0, 1), got {p_d}")
        self.model = model
        self.layer_names = list(layer_names)
        self.p_d = p_d
        self.key = key
        self._handles: list = []

    def _hook(self, layer_name: str):
        def apply(module, inputs, output):
            if self.p_d == 0.0:
                return output
            if output.ndim != 4:
                raise PlacementError(
                    f"layer {layer_name!r} emits a {output.ndim}-D tensor; spatial "
                    "dropout needs (N, C, H, W) feature maps"
                )
            mask = channel_mask(output.shape[1], self.p_d, derive_key(self.key, layer_name))
            return output * mask.to(output.dtype)

        return apply

    def __enter__(self):
        modules = dict(self.model.named_modules())
        for name in self.layer_names:
            self._handles.append(modules[name].register_forward_hook(self._hook(name)))
        return self

    def __exit__(self, *exc):
        for handle in self._handles:
            handle.remove()
        self._handles.clear()
        return False
