"""Access to the data files shipped with the package."""

from __future__ import annotations

import json
from importlib import resources

from .profiles import ClusterSpec, NetworkDescriptor

NETWORKS = ("mobilenetv2", "nasnet", "inceptionv3", "squeezenet")


def data_path(name: str):
    return resources.files("csdtrain") / "data" / name


def network(name: str) -> NetworkDescriptor:
    with data_path(f"networks/{name}.json").open(encoding="utf-8") as fh:
        return NetworkDescriptor.from_json(json.load(fh))


def cluster() -> ClusterSpec:
    with data_path("cluster.json").open(encoding="utf-8") as fh:
        return ClusterSpec.from_json(json.load(fh))


def energy_targets() -> dict:
    with data_path("energy_targets.json").open(encoding="utf-8") as fh:
        return json.load(fh)
