"""Experiment configuration: JSON documents validated against a bundled schema."""
import json
from dataclasses import dataclass, field
from importlib import resources

import jsonschema
import numpy as np

from .fem import BoundaryConditions, generate_mesh
from .stochastic import (OrientationModel, ReferenceTensor, ScalingModel, TensorModel,
                         scenario)


def load_schema():
    return json.loads(resources.files("spdlab").joinpath("schema/experiment.schema.json").read_text())


@dataclass(frozen=True)
class MeshSpec:
    preset: str = "femur_like_2d"
    resolution: int = 8
    width: float = None
    height: float = None

    def build(self):
        if self.preset == "rect_2d":
            return generate_mesh("rect_2d", self.width or 1.0, self.height or 1.0, self.resolution)
        if self.width is not None or self.height is not None:
            raise ValueError("width/height only apply to the rect_2d preset")
        return generate_mesh(self.preset, self.resolution)

    def to_dict(self):
        out = {"preset": self.preset, "resolution": self.resolution}
        if self.width is not None:
            out["width"] = self.width
        if self.height is not None:
            out["height"] = self.height
        return out


def _mesh_dimension(preset):
    return 3 if preset == "box_3d" else 2


@dataclass(frozen=True)
class ExperimentConfig:
    mesh: MeshSpec
    model: TensorModel
    dirichlet: dict = field(default_factory=lambda: {"fixed": 0.0})
    flux: dict = field(default_factory=lambda: {"flux": 0.1})
    n_samples: int = 1000
    seed: int = 0
    metric_weight: float = 1.0
    chunk_size: int = 250
    output: str = "out"

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValueError("n_samples must be at least 2")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if not self.metric_weight > 0:
            raise ValueError("metric_weight must be positive")
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be positive")
        if _mesh_dimension(self.mesh.preset) != self.model.d:
            raise ValueError(f"mesh {self.mesh.preset} is {_mesh_dimension(self.mesh.preset)}D "
                             f"but the tensor model is {self.model.d}D")

    @property
    def boundary(self):
        return BoundaryConditions(dict(self.dirichlet), dict(self.flux))

    def replace(self, **changes):
        data = {k: getattr(self, k) for k in self.__dataclass_fields__}
        data.update(changes)
        return ExperimentConfig(**data)

    def to_dict(self):
        return {
            "mesh": self.mesh.to_dict(),
            "model": model_to_dict(self.model),
            "boundary": {"dirichlet": dict(self.dirichlet), "flux": dict(self.flux)},
            "n_samples": self.n_samples,
            "seed": self.seed,
            "metric_weight": self.metric_weight,
            "chunk_size": self.chunk_size,
            "output": self.output,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def model_to_dict(model):
    ref = model.reference
    out = {
        "mode": model.mode,
        "reference": {"eigenvalues": ref.eigenvalues.tolist(), "frame": ref.frame.tolist(),
                      "symmetry": ref.symmetry.value},
    }
    if model.name:
        out["name"] = model.name
    if model.scaling is not None:
        s = model.scaling
        out["scaling"] = {"realisation_class": s.realisation_class.value,
                          "dispersion": s.dispersion, "coupling": s.coupling}
    if model.orientation is not None:
        o = model.orientation
        out["orientation"] = {"concentration": o.concentration}
        if o.d == 2:
            out["orientation"]["mean_angle"] = o.mean_angle
        else:
            out["orientation"]["mean_direction"] = list(o.mean_direction)
    return out


def model_from_dict(data):
    if "preset" in data:
        return scenario(data["preset"], d=data.get("dimension", 2),
                        dispersion=data.get("dispersion", 0.1),
                        concentration=data.get("concentration", 75.0))
    r = data["reference"]
    if "matrix" in r:
        ref = ReferenceTensor.from_matrix(np.array(r["matrix"], dtype=float), r.get("symmetry"))
    else:
        ref = ReferenceTensor(np.array(r["eigenvalues"], dtype=float),
                              np.array(r["frame"], dtype=float), r.get("symmetry"))
    scaling = orientation = None
    if "scaling" in data:
        s = data["scaling"]
        scaling = ScalingModel(ref, s["realisation_class"], s["dispersion"],
                               s.get("coupling", "independent"))
    if "orientation" in data:
        o = data["orientation"]
        if ref.d == 2:
            if "mean_direction" in o:
                raise ValueError("mean_direction is for 3D models; use mean_angle")
            orientation = OrientationModel(2, o["concentration"], mean_angle=o.get("mean_angle", 0.0))
        else:
            if "mean_direction" not in o:
                raise ValueError("3D orientation needs mean_direction")
            orientation = OrientationModel(3, o["concentration"],
                                           mean_direction=tuple(o["mean_direction"]))
    return TensorModel(data["mode"], ref, scaling=scaling, orientation=orientation,
                       name=data.get("name"))


def config_from_dict(data):
    try:
        jsonschema.validate(data, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ValueError(f"config {where}: {exc.message}") from None
    b = data.get("boundary", {})
    kwargs = {k: data[k] for k in ("n_samples", "seed", "metric_weight", "chunk_size", "output")
              if k in data}
    m = data["mesh"]
    mesh = MeshSpec(m["preset"], m.get("resolution", 8), m.get("width"), m.get("height"))
    return ExperimentConfig(
        mesh=mesh,
        model=model_from_dict(data["model"]),
        dirichlet={k: float(v) for k, v in b.get("dirichlet", {"fixed": 0.0}).items()},
        flux={k: float(v) for k, v in b.get("flux", {"flux": 0.1}).items()},
        **kwargs)


def load_config(path):
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    return config_from_dict(data)


def preset_config(name, d=2, **overrides):
    """Config for one of the named scenarios on the matching default mesh."""
    mesh = MeshSpec("femur_like_2d", 8) if d == 2 else MeshSpec("box_3d", 4)
    return ExperimentConfig(mesh=mesh, model=scenario(name, d), **overrides)
