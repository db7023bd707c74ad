"""Model specs: how the harness obtains and runs a segmentation network.

A model spec is a JSON object (or list of them) naming a factory callable
as ``"module:attribute"``.  The factory returns a ``torch.nn.Module``
mapping a ``(1, C_in, H, W)`` float tensor to per-pixel logits: one
channel for binary tasks, ``num_classes`` channels for multiclass.
Weights come from an optional state-dict file; without one the module is
initialized under a fixed torch seed so exports are reproducible.

Dropout placements are resolved strictly from the spec's layer-name
lists.  Which layer is "the bottleneck" is an architectural fact the
harness cannot infer, so unresolvable names fail loudly with the list of
candidates rather than falling back to a guess.
"""

from __future__ import annotations

import importlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import torch
from torch import nn

from cte_adapter.errors import AdapterError

TASKS = ("semantic-binary", "semantic-multiclass")


@dataclass(frozen=True)
class ModelSpec:
    id: str
    factory: str
    task: str
    num_classes: int
    params: dict = field(default_factory=dict)
    weights: str | None = None
    init_seed: int = 0
    feature_layers: tuple[str, ...] = ()
    bottleneck: tuple[str, ...] = ()
    skips: tuple[str, ...] = ()
    performance: float | None = None

    def __post_init__(self):
        if not self.id:
            raise AdapterError("model spec needs a non-empty id")
        if ":" not in self.factory:
            raise AdapterError(
                f"model {self.id!r}: factory must be 'module:attribute', got {self.factory!r}"
            )
        if self.task not in TASKS:
            raise AdapterError(f"model {self.id!r}: task must be one of {TASKS}")
        if self.task == "semantic-binary" and self.num_classes != 2:
            raise AdapterError(f"model {self.id!r}: binary task implies num_classes 2")
        if self.task == "semantic-multiclass" and self.num_classes < 3:
            raise AdapterError(f"model {self.id!r}: multiclass task needs num_classes >= 3")

    @classmethod
    def from_dict(cls, raw: dict) -> "ModelSpec":
        known = {
            "id", "factory", "task", "num_classes", "params", "weights",
            "init_seed", "feature_layers", "bottleneck", "skips", "performance",
        }
        extra = set(raw) - known
        if extra:
            raise AdapterError(f"model spec has unknown keys {sorted(extra)}")
        try:
            return cls(
                id=str(raw["id"]),
                factory=str(raw["factory"]),
                task=str(raw["task"]),
                num_classes=int(raw["num_classes"]),
                params=dict(raw.get("params", {})),
                weights=raw.get("weights"),
                init_seed=int(raw.get("init_seed", 0)),
                feature_layers=tuple(raw.get("feature_layers", ())),
                bottleneck=tuple(raw.get("bottleneck", ())),
                skips=tuple(raw.get("skips", ())),
                performance=(
                    None if raw.get("performance") is None else float(raw["performance"])
                ),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise AdapterError(f"bad model spec {raw!r}: {exc}") from exc


def load_model_specs(path: str | Path) -> list[ModelSpec]:
    """Parse a spec file holding one model object or a list of them."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise AdapterError(f"{path}: invalid JSON ({exc})") from exc
    entries = raw if isinstance(raw, list) else [raw]
    if not entries:
        raise AdapterError(f"{path}: no model specs")
    specs = [ModelSpec.from_dict(entry) for entry in entries]
    ids = [spec.id for spec in specs]
    if len(set(ids)) != len(ids):
        raise AdapterError(f"{path}: duplicate model ids")
    if len({(spec.task, spec.num_classes) for spec in specs}) > 1:
        raise AdapterError(f"{path}: all models in one export must share task and class count")
    return specs


def build_model(spec: ModelSpec, spec_dir: Path) -> nn.Module:
    """Instantiate the network and freeze it in eval mode."""
    module_name, _, attr = spec.factory.partition(":")
    try:
        factory = getattr(importlib.import_module(module_name), attr)
    except (ImportError, AttributeError) as exc:
        raise AdapterError(f"model {spec.id!r}: cannot resolve factory {spec.factory!r}: {exc}") from exc
    torch.manual_seed(spec.init_seed)
    model = factory(**spec.params)
    if not isinstance(model, nn.Module):
        raise AdapterError(f"model {spec.id!r}: factory returned {type(model).__name__}, not a Module")
    if spec.weights is not None:
        weights_path = (spec_dir / spec.weights).resolve()
        try:
            state = torch.load(weights_path, map_location="cpu", weights_only=True)
        except FileNotFoundError:
            raise
        except Exception as exc:
            raise AdapterError(f"model {spec.id!r}: cannot load weights {weights_path}: {exc}") from exc
        model.load_state_dict(state)
    model.eval()
    for param in model.parameters():
        param.requires_grad_(False)
    return model


class TinyNet(nn.Module):
    """Two-layer convolutional reference network.

    ``enc`` is the single feature layer (and therefore the bottleneck);
    ``head`` maps features to logits.
    """

    def __init__(self, in_channels: int = 1, num_classes: int = 2, hidden: int = 8):
        super().__init__()
        out_channels = 1 if num_classes == 2 else num_classes
        self.enc = nn.Conv2d(in_channels, hidden, kernel_size=3, padding=1)
        self.head = nn.Conv2d(hidden, out_channels, kernel_size=3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(torch.relu(self.enc(x)))


def tiny_net(in_channels: int = 1, num_classes: int = 2, hidden: int = 8) -> TinyNet:
    """Factory for the reference network, for use in model specs."""
    return TinyNet(in_channels=in_channels, num_classes=num_classes, hidden=hidden)
