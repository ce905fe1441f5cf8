"""Monte Carlo raster-scan imaging.

Every pixel gets ``m`` photons. A pixel is reported present iff at least
one photon fires any detector. Outcome distributions are computed once per
distinct object model; the per-pixel work is pure sampling on a stream
keyed by (seed, pixel index), so results do not depend on scheduling.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import sampling
from .chain import Absent, ChainConfig, ObjectModel, OutcomeDistribution, simulate


@dataclass(frozen=True)
class Outcome:
    kind: str  # "detector" | "source" | "object" | "loss"
    index: int | None = None  # 1-based detector number


def outcome_labels(n_detectors: int) -> list[Outcome]:
    return [Outcome("detector", i) for i in range(1, n_detectors + 1)] + [
        Outcome("source"),
        Outcome("object"),
        Outcome("loss"),
    ]


def distribution_cdf(dist: OutcomeDistribution) -> np.ndarray:
    probs = np.clip(np.asarray(dist.as_vector(), dtype=np.float64), 0.0, None)
    return sampling.cdf_from_probs(probs)


@dataclass
class CounterStream:
    """A position in one counter-based stream; sampling advances ``counter``."""

    key: int
    counter: int = 0


def sample_photon(dist: OutcomeDistribution, stream: CounterStream) -> Outcome:
    idx = int(sampling.sample_outcomes(distribution_cdf(dist), stream.key, stream.counter, 1)[0])
    stream.counter += 1
    return outcome_labels(len(dist.p_detector))[idx]


def sample_photons(dist: OutcomeDistribution, stream: CounterStream, count: int) -> np.ndarray:
    """Outcome indices (ordered as ``outcome_labels``) for the next ``count`` photons."""
    idx = sampling.sample_outcomes(distribution_cdf(dist), stream.key, stream.counter, count)
    stream.counter += count
    return idx


@dataclass(frozen=True)
class ObjectMask:
    width: int
    height: int
    cells: tuple[tuple[ObjectModel, ...], ...]  # row-major, height rows

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("mask dimensions must be positive")
        cells = tuple(tuple(row) for row in self.cells)
        if len(cells) != self.height or any(len(row) != self.width for row in cells):
            raise ValueError(f"mask grid does not match {self.width}x{self.height}")
        object.__setattr__(self, "cells", cells)

    @classmethod
    def from_rows(cls, rows) -> ObjectMask:
        rows = [tuple(r) for r in rows]
        return cls(len(rows[0]) if rows else 0, len(rows), tuple(rows))

    def present(self) -> np.ndarray:
        return np.array([[not isinstance(c, Absent) for c in row] for row in self.cells], dtype=bool)


@dataclass(frozen=True)
class ImagingRun:
    config: ChainConfig
    photons_per_pixel: int
    seed: int = 0

    def __post_init__(self):
        if self.photons_per_pixel < 1:
            raise ValueError("photons_per_pixel must be >= 1")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass
class ImagingResult:
    detection_image: np.ndarray  # bool (h, w)
    click_counts: np.ndarray  # photons that fired any detector
    dose_map: np.ndarray  # photons absorbed by the object
    source_counts: np.ndarray
    loss_counts: np.ndarray
    detector_counts: np.ndarray  # (h, w, N) per-detector breakdown
    stats: dict = field(default_factory=dict)


class PixelError(RuntimeError):
    pass


def _threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("CFI_THREADS", "1") or 1)
    return max(1, threads)


def image_mask(mask: ObjectMask, run: ImagingRun, threads: int | None = None) -> ImagingResult:
    n = run.config.n_stages
    m = run.photons_per_pixel
    h, w = mask.height, mask.width

    dists: dict[ObjectModel, np.ndarray] = {}
    groups: dict[ObjectModel, list[int]] = {}
    for y, row in enumerate(mask.cells):
        for x, cell in enumerate(row):
            if cell not in dists:
                try:
                    dists[cell] = distribution_cdf(simulate(run.config, cell))
                except Exception as exc:
                    raise PixelError(f"pixel (x={x}, y={y}): {exc}") from exc
            groups.setdefault(cell, []).append(y * w + x)

    jobs = []
    for cell, pix in groups.items():
        pix = np.asarray(pix, dtype=np.int64)
        keys = np.array([sampling.pixel_key(run.seed, int(p)) for p in pix], dtype=np.uint64)
        for chunk in np.array_split(np.arange(len(pix)), max(1, _threads(threads))):
            if len(chunk):
                jobs.append((dists[cell], pix[chunk], keys[chunk]))

    counts = np.zeros((h * w, n + 3), dtype=np.int64)

    def run_job(job):
        cdf, pix, keys = job
        return pix, sampling.sample_counts(cdf, keys, m)

    workers = _threads(threads)
    if workers == 1:
        results = map(run_job, jobs)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_job, jobs))
    for pix, c in results:
        counts[pix] = c

    counts = counts.reshape(h, w, n + 3)
    det = counts[:, :, :n]
    clicks = det.sum(axis=2)
    detected = clicks > 0
    present = mask.present()
    stats = {
        "false_negatives": int(np.sum(present & ~detected)),
        "false_positives": int(np.sum(~present & detected)),
        "present_pixels": int(present.sum()),
        "absent_pixels": int((~present).sum()),
        "total_dose": int(counts[:, :, n + 1].sum()),
        "total_source_returns": int(counts[:, :, n].sum()),
        "total_lost": int(counts[:, :, n + 2].sum()),
        "photons_per_pixel": m,
        "seed": run.seed,
        "sampling_backend": sampling.BACKEND,
    }
    return ImagingResult(
        detection_image=detected,
        click_counts=clicks,
        dose_map=counts[:, :, n + 1].copy(),
        source_counts=counts[:, :, n].copy(),
        loss_counts=counts[:, :, n + 2].copy(),
        detector_counts=det.copy(),
        stats=stats,
    )


def letter_mask(width: int = 32, height: int = 32, obj: ObjectModel | None = None) -> ObjectMask:
    """Block-letter "F" drawn with ``obj`` (default Absorbing) on an Absent field."""
    from .chain import Absorbing

    obj = obj if obj is not None else Absorbing()
    rows = [[Absent()] * width for _ in range(height)]
    x0, x1 = width // 4, width // 4 + max(1, width // 8)
    y0, y1 = height // 8, height - height // 8
    for y in range(y0, y1):
        for x in range(x0, x1):
            rows[y][x] = obj
    bar = max(1, height // 8)
    for y in range(y0, y0 + bar):
        for x in range(x0, width - width // 6):
            rows[y][x] = obj
    mid = (y0 + y1) // 2 - bar // 2
    for y in range(mid, mid + bar):
        for x in range(x0, width - width // 3):
            rows[y][x] = obj
    return ObjectMask.from_rows(rows)
