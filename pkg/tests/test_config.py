import json

import numpy as np
import pytest

from spdlab.config import (ExperimentConfig, MeshSpec, config_from_dict, load_config,
                           model_from_dict, model_to_dict, preset_config)
from spdlab.stochastic import SCENARIOS, scenario


@pytest.mark.parametrize("name", SCENARIOS)
@pytest.mark.parametrize("d", [2, 3])
def test_model_roundtrip(name, d):
    m = scenario(name, d)
    back = model_from_dict(json.loads(json.dumps(model_to_dict(m))))
    assert back == m


@pytest.mark.parametrize("d", [2, 3])
def test_config_roundtrip(tmp_path, d):
    cfg = preset_config("ortho-ortho-dir", d, n_samples=123, seed=2 ** 63 + 5, chunk_size=17)
    path = tmp_path / "cfg.json"
    path.write_text(cfg.to_json())
    back = load_config(path)
    assert back == cfg
    assert back.to_json() == cfg.to_json()


def test_preset_model_form():
    cfg = config_from_dict({"mesh": {"preset": "unit_square", "resolution": 4},
                            "model": {"preset": "iso-ortho-scl", "dispersion": 0.2}})
    assert cfg.model == scenario("iso-ortho-scl", 2, dispersion=0.2)
    assert cfg.boundary.dirichlet == {"fixed": 0.0}


def test_matrix_reference_form():
    cfg = config_from_dict({
        "mesh": {"preset": "femur_like_2d"},
        "model": {"mode": "rotation_only",
                  "reference": {"matrix": [[0.77, 0.23], [0.23, 0.77]]},
                  "orientation": {"concentration": 10.0, "mean_angle": 0.3}}})
    np.testing.assert_allclose(cfg.model.reference.matrix, [[0.77, 0.23], [0.23, 0.77]], atol=1e-15)
    assert cfg.model.orientation.mean_angle == 0.3


@pytest.mark.parametrize("bad, where", [
    ({"model": {"preset": "iso-iso-scl"}}, "mesh"),
    ({"mesh": {"preset": "donut"}, "model": {"preset": "iso-iso-scl"}}, "mesh/preset"),
    ({"mesh": {"preset": "box_3d"}, "model": {"preset": "iso-iso-scl"}, "seed": -1}, "seed"),
    ({"mesh": {"preset": "box_3d"}, "model": {"preset": "iso-iso-scl"}, "extra": 1}, "<root>"),
    ({"mesh": {"preset": "box_3d"}, "model": {"preset": "iso-iso-scl"}, "n_samples": 1}, "n_samples"),
])
def test_schema_errors(bad, where):
    with pytest.raises(ValueError, match=where):
        config_from_dict(bad)


def test_semantic_errors():
    with pytest.raises(ValueError, match="3D"):
        config_from_dict({"mesh": {"preset": "box_3d"}, "model": {"preset": "iso-iso-scl"}})
    with pytest.raises(ValueError):
        ExperimentConfig(MeshSpec("unit_square"), scenario("iso-iso-scl"), metric_weight=0.0)


def test_invalid_json(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{\n  \"mesh\": \n")
    with pytest.raises(ValueError, match="line"):
        load_config(p)
