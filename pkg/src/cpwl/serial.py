"""Canonical JSON serialization for networks and paths.

Canonical form: sorted keys, no trailing whitespace, floats in Python's
shortest round-trip representation — writing then reading reproduces the
object exactly, and equal objects serialize to identical bytes.
"""
from __future__ import annotations

import json

import numpy as np

from .core import (Affine, AffineMap, GroupSort, Maxout, NetworkSpec,
                   Pointwise, PWLU2D, ScalarCPWL, ValidationError)
from .paths import PolygonalPath


def _affine_map_to_json(m: AffineMap) -> dict:
    return {"matrix": m.matrix.tolist(), "offset": m.offset.tolist()}


def _affine_map_from_json(obj, where: str) -> AffineMap:
    if not isinstance(obj, dict) or "matrix" not in obj or "offset" not in obj:
        raise ValidationError(f"{where}: expected an object with matrix and offset")
    return AffineMap(obj["matrix"], obj["offset"])


def network_to_json(net: NetworkSpec) -> dict:
    layers = []
    for layer in net.layers:
        if isinstance(layer, Affine):
            layers.append({"type": "affine", **_affine_map_to_json(layer.map)})
        elif isinstance(layer, Pointwise):
            layers.append({"type": "pointwise", "units": [
                {"breakpoints": list(u.breakpoints), "slopes": list(u.slopes),
                 "anchor_value": u.anchor_value} for u in layer.units]})
        elif isinstance(layer, Maxout):
            layers.append({"type": "maxout", "rank": layer.rank,
                           "weights": layer.weights.tolist(),
                           "offsets": layer.offsets.tolist()})
        elif isinstance(layer, GroupSort):
            layers.append({"type": "groupsort", "group_size": layer.group_size})
        elif isinstance(layer, PWLU2D):
            if layer.values.shape[0] == 1:
                layers.append({"type": "pwlu2d", "grid_m": layer.grid_m,
                               "values": layer.values[0].tolist(),
                               "readin": _affine_map_to_json(layer.readins[0])})
            else:
                # Multi-unit extension of the single-unit schema.
                layers.append({"type": "pwlu2d", "grid_m": layer.grid_m,
                               "units": [{"values": layer.values[k].tolist(),
                                          "readin": _affine_map_to_json(layer.readins[k])}
                                         for k in range(layer.values.shape[0])]})
        else:
            raise ValidationError(f"cannot serialize layer type {type(layer).__name__}")
    doc = {"input_dim": net.input_dim, "layers": layers}
    if net.metadata:
        doc["metadata"] = net.metadata
    return doc


def network_from_json(obj) -> NetworkSpec:
    if not isinstance(obj, dict):
        raise ValidationError("network document must be a JSON object")
    if "input_dim" not in obj or "layers" not in obj:
        raise ValidationError("network document needs input_dim and layers")
    d = obj["input_dim"]
    if not isinstance(d, int) or d < 1:
        raise ValidationError("input_dim must be a positive integer")
    if not isinstance(obj["layers"], list):
        raise ValidationError("layers must be a list")
    layers = []
    for i, spec in enumerate(obj["layers"]):
        where = f"layer {i}"
        if not isinstance(spec, dict) or "type" not in spec:
            raise ValidationError(f"{where}: expected an object with a type")
        t = spec["type"]
        try:
            if t == "affine":
                layers.append(Affine(_affine_map_from_json(spec, where)))
            elif t == "pointwise":
                units = []
                for j, u in enumerate(spec.get("units", ())):
                    units.append(ScalarCPWL(tuple(u["breakpoints"]),
                                            tuple(u["slopes"]),
                                            float(u["anchor_value"])))
                if not units:
                    raise ValidationError(f"{where}: pointwise layer needs units")
                layers.append(Pointwise(tuple(units)))
            elif t == "maxout":
                layers.append(Maxout(int(spec["rank"]),
                                     np.array(spec["weights"], dtype=float),
                                     np.array(spec["offsets"], dtype=float)))
            elif t == "groupsort":
                layers.append(GroupSort(int(spec["group_size"])))
            elif t == "pwlu2d":
                m = int(spec["grid_m"])
                if "units" in spec:
                    vals = np.array([u["values"] for u in spec["units"]], dtype=float)
                    readins = tuple(_affine_map_from_json(u["readin"],
                                                          f"{where} unit {k}")
                                    for k, u in enumerate(spec["units"]))
                else:
                    vals = np.array([spec["values"]], dtype=float)
                    readins = (_affine_map_from_json(spec["readin"], where),)
                layers.append(PWLU2D(m, vals, readins))
            else:
                raise ValidationError(f"{where}: unknown layer type {t!r}")
        except (KeyError, TypeError, IndexError) as e:
            raise ValidationError(f"{where}: malformed {t} layer ({e})") from e
    return NetworkSpec(d, tuple(layers), metadata=str(obj.get("metadata", "")))


def path_to_json(path: PolygonalPath) -> dict:
    return {"vertices": path.vertices.tolist()}


def path_from_json(obj) -> PolygonalPath:
    if not isinstance(obj, dict) or "vertices" not in obj:
        raise ValidationError("path document needs a vertices list")
    return PolygonalPath(np.array(obj["vertices"], dtype=float))


def dumps_canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def save_network(net: NetworkSpec, file_path: str) -> None:
    with open(file_path, "w") as f:
        f.write(dumps_canonical(network_to_json(net)))


def load_network(file_path: str) -> NetworkSpec:
    with open(file_path) as f:
        return network_from_json(json.load(f))


def save_path(path: PolygonalPath, file_path: str) -> None:
    with open(file_path, "w") as f:
        f.write(dumps_canonical(path_to_json(path)))


def load_path(file_path: str) -> PolygonalPath:
    with open(file_path) as f:
        return path_from_json(json.load(f))
