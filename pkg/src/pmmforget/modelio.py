"""File formats: model JSON documents, observation/trajectory CSV files.

Model documents carry a top-level "kind" in {"finite_pmm", "hmm", "lmsm"},
matrices as row-major arrays of arrays, and emissions as
{"kind": "categorical", "weights": [...]} or
{"kind": "gaussian", "mean": [...], "cov": [[...]]}.

Trajectory CSV has header ``t,x,y``; observation CSV needs at least an ``x``
column.  Euclidean observations are comma-joined components inside one quoted
field, so one format serves all model classes.
"""

from __future__ import annotations

import csv
import json
from importlib import resources
from pathlib import Path

import numpy as np

from .models import (
    CategoricalEmission,
    EuclideanObs,
    FiniteObs,
    FinitePMM,
    GaussianEmission,
    HiddenMarkovModel,
    LinearSwitchingModel,
    PairwiseModel,
    PointInit,
    Trajectory,
)

__all__ = [
    "load_model",
    "loads_model",
    "model_to_dict",
    "save_model",
    "read_observations",
    "write_trajectory",
    "bundled_model_path",
    "BUNDLED_MODELS",
]

BUNDLED_MODELS = ("mod4", "fourstate", "cluster_hmm", "lmsm_ar1")


def _emission_from_dict(doc: dict):
    kind = doc.get("kind")
    if kind == "categorical":
        return CategoricalEmission(np.asarray(doc["weights"], dtype=np.float64))
    if kind == "gaussian":
        return GaussianEmission(np.asarray(doc["mean"], dtype=np.float64),
                                np.asarray(doc["cov"], dtype=np.float64))
    raise ValueError(f"unknown emission kind {kind!r}")


def _emission_to_dict(em) -> dict:
    if isinstance(em, CategoricalEmission):
        return {"kind": "categorical", "weights": [float(w) for w in em.weights]}
    if isinstance(em, GaussianEmission):
        return {
            "kind": "gaussian",
            "mean": [float(v) for v in em.mean],
            "cov": [[float(v) for v in row] for row in em.cov],
        }
    raise ValueError("custom emissions cannot be serialized")


def loads_model(text: str) -> PairwiseModel:
    doc = json.loads(text)
    kind = doc.get("kind")
    if kind == "finite_pmm":
        return FinitePMM(
            n_states=int(doc["n_states"]),
            n_obs=int(doc["n_obs"]),
            trans=np.asarray(doc["trans"], dtype=np.float64),
            init=np.asarray(doc["init"], dtype=np.float64),
        )
    if kind == "hmm":
        return HiddenMarkovModel(
            trans_P=np.asarray(doc["trans"], dtype=np.float64),
            init_Y=np.asarray(doc["init"], dtype=np.float64),
            emissions=[_emission_from_dict(e) for e in doc["emissions"]],
        )
    if kind == "lmsm":
        init_x = doc.get("init_x")
        if init_x is None:
            ix = None
        elif init_x.get("kind") == "point":
            ix = PointInit(np.asarray(init_x["value"], dtype=np.float64))
        else:
            raise ValueError(f"unknown init_x kind {init_x.get('kind')!r}")
        return LinearSwitchingModel(
            trans_P=np.asarray(doc["trans"], dtype=np.float64),
            state_matrices=[np.asarray(m, dtype=np.float64) for m in doc["state_matrices"]],
            noise=[_emission_from_dict(e) for e in doc["noise"]],
            init_Y=np.asarray(doc["init"], dtype=np.float64),
            init_x=ix,
        )
    raise ValueError(f"unknown model kind {kind!r}")


def load_model(path) -> PairwiseModel:
    return loads_model(Path(path).read_text())


def model_to_dict(model: PairwiseModel) -> dict:
    if isinstance(model, FinitePMM):
        return {
            "kind": "finite_pmm",
            "n_states": model.n_states,
            "n_obs": model.n_obs,
            "trans": [[float(v) for v in row] for row in model.trans],
            "init": [float(v) for v in model.init],
        }
    if isinstance(model, HiddenMarkovModel):
        return {
            "kind": "hmm",
            "trans": [[float(v) for v in row] for row in model.trans_P],
            "init": [float(v) for v in model.init_Y],
            "emissions": [_emission_to_dict(e) for e in model.emissions],
        }
    if isinstance(model, LinearSwitchingModel):
        if not isinstance(model.init_x, PointInit):
            raise ValueError("only point-mass first observations serialize")
        return {
            "kind": "lmsm",
            "trans": [[float(v) for v in row] for row in model.trans_P],
            "init": [float(v) for v in model.init_Y],
            "state_matrices": [[[float(v) for v in row] for row in m]
                               for m in model.state_matrices],
            "noise": [_emission_to_dict(e) for e in model.noise],
            "init_x": {"kind": "point", "value": [float(v) for v in model.init_x.value]},
        }
    raise ValueError(f"cannot serialize {type(model).__name__}")


def save_model(model: PairwiseModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2) + "\n")


def bundled_model_path(name: str) -> Path:
    if name.endswith(".json"):
        name = name[:-5]
    if name not in BUNDLED_MODELS:
        raise KeyError(f"no bundled model {name!r}; available: {BUNDLED_MODELS}")
    return Path(str(resources.files("pmmforget").joinpath("bundled", f"{name}.json")))


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _format_obs(obs_space, x) -> str:
    if isinstance(obs_space, FiniteObs):
        return str(int(x))
    return ",".join(repr(float(v)) for v in np.atleast_1d(x))


def _parse_obs(obs_space, text: str):
    if isinstance(obs_space, FiniteObs):
        return int(text)
    return np.array([float(p) for p in text.split(",")], dtype=np.float64)


def write_trajectory(path, obs_space, xs, ys=None) -> None:
    xs = np.asarray(xs)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "y"])
        for k in range(len(xs)):
            y = "" if ys is None else int(ys[k])
            writer.writerow([k + 1, _format_obs(obs_space, xs[k]), y])


def read_observations(path, obs_space) -> np.ndarray:
    """Observations from a CSV file with an ``x`` column (header required)."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "x" not in reader.fieldnames:
            raise ValueError(f"{path}: need a CSV header containing an 'x' column")
        for rec in reader:
            rows.append(_parse_obs(obs_space, rec["x"]))
    if not rows:
        raise ValueError(f"{path}: no observations")
    if isinstance(obs_space, FiniteObs):
        return np.array(rows, dtype=np.int64)
    return np.stack(rows)


def write_decoded_path(path, ys) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "y"])
        for k, y in enumerate(ys):
            writer.writerow([k + 1, int(y)])
