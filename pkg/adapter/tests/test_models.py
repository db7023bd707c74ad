"""Model spec parsing and network construction."""

import json

import pytest
import torch

from cte_adapter.errors import AdapterError
from cte_adapter.models import ModelSpec, build_model, load_model_specs, tiny_net


def spec_dict(**overrides):
    base = {
        "id": "m0", "factory": "cte_adapter.models:tiny_net",
        "task": "semantic-binary", "num_classes": 2,
        "feature_layers": ["enc"], "bottleneck": ["enc"],
    }
    base.update(overrides)
    return base


def test_load_single_object_or_list(tmp_path):
    path = tmp_path / "one.json"
    path.write_text(json.dumps(spec_dict()))
    assert [s.id for s in load_model_specs(path)] == ["m0"]
    path.write_text(json.dumps([spec_dict(), spec_dict(id="m1")]))
    assert [s.id for s in load_model_specs(path)] == ["m0", "m1"]


def test_load_rejects_structural_problems(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{broken")
    with pytest.raises(AdapterError, match="invalid JSON"):
        load_model_specs(path)
    path.write_text("[]")
    with pytest.raises(AdapterError, match="no model specs"):
        load_model_specs(path)
    path.write_text(json.dumps([spec_dict(), spec_dict()]))
    with pytest.raises(AdapterError, match="duplicate model ids"):
        load_model_specs(path)
    path.write_text(json.dumps([
        spec_dict(),
        spec_dict(id="m1", task="semantic-multiclass", num_classes=3),
    ]))
    with pytest.raises(AdapterError, match="share task"):
        load_model_specs(path)


def test_spec_field_validation():
    with pytest.raises(AdapterError, match="unknown keys"):
        ModelSpec.from_dict(spec_dict(extra_knob=1))
    with pytest.raises(AdapterError, match="module:attribute"):
        ModelSpec.from_dict(spec_dict(factory="no_colon"))
    with pytest.raises(AdapterError, match="task must be one of"):
        ModelSpec.from_dict(spec_dict(task="detection"))
    with pytest.raises(AdapterError, match="implies num_classes 2"):
        ModelSpec.from_dict(spec_dict(num_classes=3))
    with pytest.raises(AdapterError, match="needs num_classes >= 3"):
        ModelSpec.from_dict(spec_dict(task="semantic-multiclass", num_classes=2))


def test_build_is_deterministic_per_seed(tmp_path):
    spec = ModelSpec.from_dict(spec_dict(init_seed=42))
    a = build_model(spec, tmp_path)
    b = build_model(spec, tmp_path)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert torch.equal(pa, pb)
        assert not pa.requires_grad
    assert not a.training


def test_build_loads_weights_relative_to_spec_dir(tmp_path):
    torch.manual_seed(7)
    reference = tiny_net(hidden=8)
    torch.save(reference.state_dict(), tmp_path / "w.pt")
    spec = ModelSpec.from_dict(spec_dict(weights="w.pt", init_seed=999))
    model = build_model(spec, tmp_path)
    for pa, pb in zip(model.parameters(), reference.parameters()):
        assert torch.equal(pa, pb)


def test_build_surfaces_factory_errors(tmp_path):
    spec = ModelSpec.from_dict(spec_dict(factory="cte_adapter.models:no_such_net"))
    with pytest.raises(AdapterError, match="cannot resolve factory"):
        build_model(spec, tmp_path)
    spec = ModelSpec.from_dict(spec_dict(factory="not_a_module_xyz:thing"))
    with pytest.raises(AdapterError, match="cannot resolve factory"):
        build_model(spec, tmp_path)


def test_tiny_net_logit_shapes():
    x = torch.rand(1, 1, 9, 11)
    assert tiny_net(num_classes=2)(x).shape == (1, 1, 9, 11)
    assert tiny_net(num_classes=4)(x).shape == (1, 4, 9, 11)
