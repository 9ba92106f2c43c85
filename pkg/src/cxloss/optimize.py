"""Direct pixel-space gradient descent against one or more targets."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .cx import CxParams
from .features import PatchSpec, extract_patches, patch_grid_shape
from .grad import image_loss_and_grad
from .tensor_core import ImageGrid

__all__ = ["LOSS_KINDS", "DEFAULT_STEP", "OptimizeConfig", "TraceRecord", "OptimizeTrace", "pixel_loss_and_grad", "reconstruct"]

logger = logging.getLogger(__name__)

LOSS_KINDS = ("cx", "l1", "l2")
DEFAULT_STEP = {"cx": 0.05, "l1": 0.01, "l2": 0.5}


@dataclass(frozen=True)
class OptimizeConfig:
    loss_kind: str = "cx"
    cx_params: CxParams = field(default_factory=CxParams)
    patch: PatchSpec = field(default_factory=PatchSpec)
    iters: int = 400
    step_size: Optional[float] = None
    target_schedule: str = "cycle"
    seed: Optional[int] = 0
    log_every: int = 1

    def __post_init__(self):
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"loss_kind must be one of {LOSS_KINDS}, got {self.loss_kind!r}")
        if self.iters < 1:
            raise ValueError(f"iters must be >= 1, got {self.iters}")
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError(f"step_size must be > 0, got {self.step_size}")
        if self.target_schedule not in ("cycle", "random"):
            raise ValueError(f"target_schedule must be 'cycle' or 'random', got {self.target_schedule!r}")
        if self.log_every < 1:
            raise ValueError(f"log_every must be >= 1, got {self.log_every}")

    @property
    def step(self) -> float:
        return DEFAULT_STEP[self.loss_kind] if self.step_size is None else float(self.step_size)


class TraceRecord(NamedTuple):
    iteration: int
    target: int
    loss: float


@dataclass
class OptimizeTrace:
    records: List[TraceRecord]
    image: ImageGrid

    @property
    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.records])


def pixel_loss_and_grad(s: np.ndarray, t: np.ndarray, kind: str) -> Tuple[float, np.ndarray]:
    diff = s - t
    if kind == "l1":
        return float(np.abs(diff).sum()), np.sign(diff)
    if kind == "l2":
        norm = float(np.sqrt((diff * diff).sum()))
        if norm == 0.0:
            return 0.0, np.zeros_like(s)
        return norm, diff / norm
    raise ValueError(f"not a pixel loss: {kind!r}")


def reconstruct(source: ImageGrid, targets: Sequence[ImageGrid], config: OptimizeConfig = OptimizeConfig()):
    """Run ``config.iters`` clamped gradient steps starting from ``source``.

    Step ``k`` uses target ``k mod K`` under the cycle schedule, or a seeded
    uniform draw under the random schedule. Returns the final image and the
    trace; the logged loss is the one evaluated before each step.
    """
    if len(targets) == 0:
        raise ValueError("need at least one target")
    shape = source.shape
    for k, t in enumerate(targets):
        if t.shape != shape:
            raise ValueError(f"target {k} has shape {t.shape}, source has {shape}")
    kind = config.loss_kind
    if kind == "cx":
        patch_grid_shape(shape[0], shape[1], config.patch)
        target_feats = [extract_patches(t, config.patch) for t in targets]
    rng = np.random.default_rng(config.seed)
    step = config.step

    s = np.array(source.data, dtype=np.float64)
    records: List[TraceRecord] = []
    for it in range(config.iters):
        if config.target_schedule == "cycle":
            k = it % len(targets)
        else:
            k = int(rng.integers(len(targets)))
        if kind == "cx":
            loss, g = image_loss_and_grad(s, target_feats[k], config.cx_params, config.patch)
        else:
            loss, g = pixel_loss_and_grad(s, targets[k].data, kind)
        if not np.isfinite(loss):
            raise FloatingPointError(f"non-finite loss at iteration {it}")
        if it % config.log_every == 0 or it == config.iters - 1:
            records.append(TraceRecord(it, k, loss))
        s -= step * g
        np.clip(s, 0.0, 1.0, out=s)
    result = ImageGrid(s)
    logger.debug("reconstruct(%s): %d iterations, final logged loss %.6g", kind, config.iters, records[-1].loss)
    return result, OptimizeTrace(records, result)
