"""Element-wise averaging of scorer parameter files."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .scorer import ModelError, ModelParams, load_model, save_model


def average_params(models: Sequence[ModelParams], labels: Sequence[str] | None = None) -> ModelParams:
    """Arithmetic mean of every parameter across ``models``.

    Values are accumulated in float64 after sorting along the model axis, so
    the result does not depend on input order at all, and averaging copies
    of one model returns that model exactly.
    """
    if not models:
        raise ModelError("average needs at least one model")
    labels = list(labels) if labels is not None else [f"model {i}" for i in range(len(models))]
    first = models[0]
    for m, label in zip(models[1:], labels[1:]):
        if set(m.arrays) != set(first.arrays):
            diff = sorted(set(m.arrays) ^ set(first.arrays))
            raise ModelError(f"parameter {diff[0]} not present in both {labels[0]} and {label}")
        for name, arr in m.arrays.items():
            if arr.shape != first.arrays[name].shape:
                raise ModelError(f"shape mismatch for parameter {name}: {labels[0]} has "
                                 f"{first.arrays[name].shape}, {label} has {arr.shape}")
    k = len(models)
    out = {}
    for name in first.arrays:
        stacked = np.sort(np.stack([m.arrays[name] for m in models]), axis=0)
        total = np.zeros_like(stacked[0])
        for layer in stacked:
            total += layer
        out[name] = total / k
    return ModelParams(out)


def average_models(paths: Sequence[str | Path]) -> ModelParams:
    return average_params([load_model(p) for p in paths], [str(p) for p in paths])


def pairwise_average(models: Sequence[ModelParams]) -> ModelParams:
    """Sum by a balanced pairwise tree, then divide; a summation-order oracle."""

    def tree_sum(arrays):
        if len(arrays) == 1:
            return arrays[0].copy()
        mid = len(arrays) // 2
        return tree_sum(arrays[:mid]) + tree_sum(arrays[mid:])

    k = len(models)
    return ModelParams({name: tree_sum([m.arrays[name] for m in models]) / k
                        for name in models[0].arrays})


def average_files(paths: Sequence[str | Path], out: str | Path) -> ModelParams:
    params = average_models(paths)
    save_model(params, out)
    return params
