"""Trajectory scoring, distillation and selection.

Thin Python layer over the native core: scenario generation, rule-based
teachers, vocabulary clustering, student training, weight calibration and
benchmarking. Structured results come back as plain dicts and lists.
"""

from __future__ import annotations

import json
import os
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from . import _core
from ._core import HmdpError, epdms, obb_intersects, pdms

__all__ = [
    "HmdpError",
    "pdms",
    "epdms",
    "obb_intersects",
    "flatten",
    "imitation_targets",
    "generate",
    "human_poses",
    "evaluate",
    "gen",
    "vocab",
    "teach",
    "train",
    "calibrate",
    "benchmark",
]

HORIZON_STEPS = _core.HORIZON_STEPS

PathLike = Union[str, os.PathLike]


def flatten(poses) -> np.ndarray:
    """Flatten a (40, 3) array of (x, y, heading) into the 120-vector used for clustering."""
    return _core.flatten(np.asarray(poses, dtype=float))


def imitation_targets(human, centers) -> np.ndarray:
    """Soft imitation targets of a flattened human plan against k flattened centers."""
    return _core.imitation_targets(np.asarray(human, dtype=float).ravel(), np.asarray(centers, dtype=float))


def generate(count: int, seed: int, mix: str = "uniform") -> list[dict]:
    """Generate frame pairs in memory; each item has 'prev', 'curr' and 'prev_to_curr'."""
    return json.loads(_core.generate_json(count, seed, mix))


def human_poses(scenario: dict) -> np.ndarray:
    """Logged human plan of a scenario as a (40, 3) array."""
    return _core.human_poses(json.dumps(scenario))


def evaluate(scenario: dict, poses, vocab: PathLike, config: Optional[dict] = None) -> dict:
    """Teacher sub-scores of one plan in one scenario; the vocabulary sets the progress reference."""
    return _core.evaluate(
        json.dumps(scenario),
        np.asarray(poses, dtype=float),
        os.fspath(vocab),
        None if config is None else json.dumps(config),
    )


def gen(count: int, seed: int, out: PathLike, mix: str = "uniform", split: Optional[Sequence[int]] = None,
        jobs: int = 1) -> None:
    _core.gen(count, seed, os.fspath(out), mix, None if split is None else list(split), jobs)


def vocab(samples: int, k: int, iters: int, seed: int, out: PathLike, jobs: int = 1) -> None:
    _core.vocab(samples, k, iters, seed, os.fspath(out), jobs)


def teach(scenarios: PathLike, vocab: PathLike, out: PathLike, config: Optional[PathLike] = None,
          jobs: int = 1) -> None:
    _core.teach(os.fspath(scenarios), os.fspath(vocab), os.fspath(out),
                None if config is None else os.fspath(config), jobs)


def train(scenarios: PathLike, scores: PathLike, vocab: PathLike, out: PathLike, seed: int, epochs: int = 20,
          lr: float = 1e-4, batch: int = 32, d_model: int = 64, ablate: Iterable[str] = (), jobs: int = 1) -> dict:
    """Train and return the written model file as a dict."""
    _core.train(os.fspath(scenarios), os.fspath(scores), os.fspath(vocab), os.fspath(out), seed, epochs, lr,
                batch, d_model, list(ablate), jobs)
    with open(out, encoding="utf-8") as f:
        return json.load(f)


def calibrate(model: PathLike, scenarios: PathLike, out: PathLike, grid: Optional[PathLike] = None,
              jobs: int = 1) -> dict:
    return json.loads(_core.calibrate(os.fspath(model), os.fspath(scenarios), os.fspath(out),
                                      None if grid is None else os.fspath(grid), jobs))


def benchmark(model: PathLike, weights: PathLike, scenarios: PathLike, out: PathLike,
              compare: Optional[str] = None, jobs: int = 1) -> dict:
    return json.loads(_core.benchmark(os.fspath(model), os.fspath(weights), os.fspath(scenarios),
                                      os.fspath(out), compare, jobs))
