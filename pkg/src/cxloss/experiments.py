"""Desk-scale analyses: Monte-Carlo expectations of set-similarity measures
between two 1-D Gaussian samples, and denoising against misaligned clean
targets."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import uniform_filter

from . import cx as cxm
from .optimize import OptimizeConfig, OptimizeTrace, reconstruct
from .reporting import csv_text, fmt, key_values
from .tensor_core import ImageGrid, save_png

__all__ = [
    "MEASURES",
    "ExperimentGrid",
    "measure_value",
    "expectation_grid",
    "rescaled_l2_proxy",
    "psnr",
    "high_frequency_energy",
    "LossOutcome",
    "DenoiseResult",
    "toy_denoise",
]

MEASURES = ("cx", "dis", "l2")
DEFAULT_GRID = tuple(float(v) for v in range(11))
# 1-D features are compared with squared Euclidean distance; cosine distance
# collapses to {0, 2} in one dimension.
GRID_DISTANCE = "squared_euclidean"


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def measure_value(measure: str, x: np.ndarray, y: np.ndarray, h: float = 0.1) -> float:
    if measure == "cx":
        value, _ = cxm.contextual_similarity(x, y, cxm.CxParams(h=h, distance=GRID_DISTANCE))
        return value
    if measure == "dis":
        return cxm.binarized_similarity(x, y, GRID_DISTANCE)
    if measure == "l2":
        d = cxm.pairwise_distances(x, y, GRID_DISTANCE)
        return float(d.min(axis=0).mean())
    raise ValueError(f"unknown measure {measure!r}; expected one of {MEASURES}")


@dataclass
class ExperimentGrid:
    measure: str
    mu_values: List[float]
    sigma_values: List[float]
    mean: np.ndarray
    stderr: np.ndarray
    trials: np.ndarray
    n_points: int = 100
    h: float = 0.1
    seed: int = 0
    distance: str = GRID_DISTANCE

    def argmax(self) -> Tuple[float, float]:
        i, j = np.unravel_index(np.argmax(self.mean), self.mean.shape)
        return self.mu_values[i], self.sigma_values[j]

    def argmin(self) -> Tuple[float, float]:
        i, j = np.unravel_index(np.argmin(self.mean), self.mean.shape)
        return self.mu_values[i], self.sigma_values[j]

    def cell(self, mu: float, sigma: float) -> float:
        return float(self.mean[self.mu_values.index(mu), self.sigma_values.index(sigma)])

    def to_csv(self) -> str:
        rows = []
        for i, mu in enumerate(self.mu_values):
            for j, sigma in enumerate(self.sigma_values):
                rows.append((mu, sigma, self.mean[i, j], self.stderr[i, j], int(self.trials[i, j])))
        return csv_text(("mu", "sigma", "mean", "stderr", "trials"), rows)


def _cell_task(args) -> Tuple[float, float]:
    measure, mu, sigma, n_points, h, trials, seed, index = args
    rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
    vals = np.empty(trials)
    for t in range(trials):
        x = rng.normal(0.0, 1.0, size=(n_points, 1))
        y = mu + sigma * rng.normal(0.0, 1.0, size=(n_points, 1))
        vals[t] = measure_value(measure, x, y, h)
    stderr = float(vals.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    return float(vals.mean()), stderr


def expectation_grid(
    measure: str = "cx",
    n_points: int = 100,
    mu_values: Sequence[float] = DEFAULT_GRID,
    sigma_values: Sequence[float] = DEFAULT_GRID,
    h: float = 0.1,
    trials: int = 200,
    seed: int = 0,
    workers: int = 1,
) -> ExperimentGrid:
    """Monte-Carlo mean of ``measure`` between X ~ N(0, 1) and Y ~ N(mu, sigma^2).

    Each cell draws its own generator from ``(seed, cell index)``, so the
    result does not depend on ``workers``.
    """
    if measure not in MEASURES:
        raise ValueError(f"unknown measure {measure!r}; expected one of {MEASURES}")
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if n_points < 2:
        raise ValueError(f"n_points must be >= 2, got {n_points}")
    if not h > 0:
        raise ValueError(f"h must be > 0, got {h}")
    mus = sorted(float(m) for m in mu_values)
    sigmas = sorted(float(s) for s in sigma_values)
    if not mus or not sigmas:
        raise ValueError("grid axes must be nonempty")
    if sigmas[0] < 0:
        raise ValueError("sigma values must be >= 0")
    tasks = []
    for i, mu in enumerate(mus):
        for j, sigma in enumerate(sigmas):
            tasks.append((measure, mu, sigma, n_points, h, trials, seed, i * len(sigmas) + j))
    out = _map(_cell_task, tasks, workers)
    mean = np.array([o[0] for o in out]).reshape(len(mus), len(sigmas))
    stderr = np.array([o[1] for o in out]).reshape(len(mus), len(sigmas))
    return ExperimentGrid(
        measure, mus, sigmas, mean, stderr, np.full(mean.shape, trials), n_points, h, seed
    )


def rescaled_l2_proxy(grid: ExperimentGrid) -> np.ndarray:
    """Map L2 cell means affinely onto [0, 1]: best (smallest) cell -> 1,
    worst -> 0, so its decay can be compared with a similarity."""
    lo, hi = float(grid.mean.min()), float(grid.mean.max())
    if hi == lo:
        return np.ones_like(grid.mean)
    return (hi - grid.mean) / (hi - lo)


def psnr(image, reference) -> float:
    a = image.data if isinstance(image, ImageGrid) else np.asarray(image, dtype=np.float64)
    b = reference.data if isinstance(reference, ImageGrid) else np.asarray(reference, dtype=np.float64)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(1.0 / mse)


def high_frequency_energy(image) -> float:
    """Energy of the image minus its 3x3 box blur."""
    a = image.data if isinstance(image, ImageGrid) else np.asarray(image, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    detail = a - uniform_filter(a, size=(3, 3, 1), mode="reflect")
    return float((detail * detail).sum())


@dataclass
class LossOutcome:
    image: ImageGrid
    psnr: float
    hf_ratio: float
    final_loss: float
    trace: OptimizeTrace = field(repr=False)


@dataclass
class DenoiseResult:
    ground_truth: ImageGrid
    noisy: ImageGrid
    targets: List[ImageGrid]
    shifts: List[Tuple[int, int]]
    input_psnr: float
    input_hf_ratio: float
    outcomes: Dict[str, LossOutcome]
    seed: int = 0

    def summary(self) -> Dict[str, object]:
        out: Dict[str, object] = {
            "seed": self.seed,
            "targets": len(self.targets),
            "psnr_input": self.input_psnr,
            "hf_ratio_input": self.input_hf_ratio,
        }
        for name, o in self.outcomes.items():
            out[f"psnr_{name}"] = o.psnr
            out[f"hf_ratio_{name}"] = o.hf_ratio
            out[f"final_loss_{name}"] = o.final_loss
        return out

    def to_report(self) -> str:
        return key_values(self.summary())

    def save_images(self, directory) -> List[str]:
        os.makedirs(directory, exist_ok=True)
        written = []

        def put(name, img):
            path = os.path.join(directory, name)
            save_png(img, path)
            written.append(path)

        put("ground_truth.png", self.ground_truth)
        put("input.png", self.noisy)
        for k, t in enumerate(self.targets):
            put(f"target_{k}.png", t)
        for name, o in self.outcomes.items():
            put(f"result_{name}.png", o.image)
        return written


def _run_loss(args):
    noisy, targets, config = args
    return reconstruct(noisy, targets, config)


def toy_denoise(
    clean_image: ImageGrid,
    crop: int = 64,
    n_targets: int = 8,
    max_shift: int = 10,
    noise_sigma: float = 0.1,
    losses: Sequence[str] = ("cx", "l1"),
    optimize_config: Optional[OptimizeConfig] = None,
    seed: int = 0,
    workers: int = 1,
) -> DenoiseResult:
    """Denoise a noisy central crop using clean crops at random integer shifts.

    The noise-free central crop is the ground truth and never reaches the
    optimizer. ``optimize_config`` supplies iterations, patch and CX settings;
    its ``loss_kind`` is replaced per entry of ``losses``, and a ``step_size``
    of ``None`` selects each loss's default step.
    """
    if crop < 1 or n_targets < 1 or max_shift < 0 or noise_sigma < 0:
        raise ValueError("crop, n_targets must be >= 1; max_shift, noise_sigma must be >= 0")
    h, w = clean_image.height, clean_image.width
    r0, c0 = (h - crop) // 2, (w - crop) // 2
    if r0 < max_shift or c0 < max_shift or r0 + crop + max_shift > h or c0 + crop + max_shift > w:
        raise ValueError(
            f"image {h}x{w} too small for crop {crop} with shifts up to {max_shift}"
        )
    base = optimize_config or OptimizeConfig()
    rng = np.random.default_rng(seed)
    img = clean_image.data
    gt = img[r0 : r0 + crop, c0 : c0 + crop]
    noisy = ImageGrid(gt + rng.normal(0.0, noise_sigma, size=gt.shape)) if noise_sigma > 0 else ImageGrid(gt)
    targets, shifts = [], []
    for _ in range(n_targets):
        dr, dc = (int(v) for v in rng.integers(-max_shift, max_shift + 1, size=2))
        shifts.append((dr, dc))
        targets.append(ImageGrid(img[r0 + dr : r0 + dr + crop, c0 + dc : c0 + dc + crop]))

    truth = ImageGrid(gt)
    hf_truth = high_frequency_energy(truth)
    runs = _map(_run_loss, [(noisy, targets, replace(base, loss_kind=name)) for name in losses], workers)
    outcomes = {}
    for name, (result, trace) in zip(losses, runs):
        outcomes[name] = LossOutcome(
            result,
            psnr(result, truth),
            high_frequency_energy(result) / hf_truth,
            float(trace.records[-1].loss),
            trace,
        )
    return DenoiseResult(
        truth,
        noisy,
        targets,
        shifts,
        psnr(noisy, truth),
        high_frequency_energy(noisy) / hf_truth,
        outcomes,
        seed,
    )
