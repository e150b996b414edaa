"""Alternating flow estimation and per-patch EM over the whole image.

Each outer iteration recomputes flow from the current estimate to the noisy
view, pairs every blurred patch with its flow-displaced noisy patch, runs EM
on all patches and averages the overlapping results into the next estimate.
The detail layer, if enabled, is applied once at the end with the last flow.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .detail_layer import DetailParams, add_detail_layer
from .image_core import EnhanceParams, atomic_write, enhance, save_image
from .ogmm import NumericalError, OgmmConfig, run_em
from .optical_flow import FlowParams, compute_dense_flow, flow_error, write_flo
from .patching import (
    Accumulator,
    CoverageError,
    PatchSpec,
    accumulate,
    corresponding_centers,
    gather,
    patch_positions,
    reassemble,
    slice_patches,
)

log = logging.getLogger(__name__)

# patches per EM batch; fixed so results never depend on the worker count
CHUNK = 2048


@dataclass
class Diagnostics:
    energy: bool = True
    intermediate_dir: str | None = None
    flow_dir: str | None = None


@dataclass
class PipelineConfig:
    outer_iterations: int = 2
    patch: PatchSpec = field(default_factory=PatchSpec)
    ogmm: OgmmConfig = field(default_factory=OgmmConfig)
    flow: FlowParams = field(default_factory=FlowParams)
    detail: DetailParams | None = field(default_factory=DetailParams)
    enhance: EnhanceParams | None = None
    diagnostics: Diagnostics = field(default_factory=Diagnostics)
    threads: int = 1

    def validate(self):
        if self.outer_iterations < 1:
            raise ValueError("outer_iterations must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.patch.stride > self.patch.s1:
            raise CoverageError(
                f"stride {self.patch.stride} > s1 {self.patch.s1} leaves pixels uncovered"
            )


@dataclass
class IterationRecord:
    t: int
    energy: float
    em_energies: list[float]
    aee: float | None = None
    aae: float | None = None
    timings: dict[str, float] = field(default_factory=dict)
    image_path: str | None = None
    flow_path: str | None = None


@dataclass
class RunReport:
    iterations: list[IterationRecord] = field(default_factory=list)
    detail_seconds: float = 0.0
    final_flow: np.ndarray | None = field(default=None, repr=False)

    @property
    def energies(self):
        return [r.energy for r in self.iterations]

    @property
    def aee(self):
        return [r.aee for r in self.iterations]

    @property
    def aae(self):
        return [r.aae for r in self.iterations]

    def to_text(self) -> str:
        """Tab-separated, one line per outer iteration after a header."""
        cols = ["t", "energy", "aee", "aae", "t_flow", "t_em", "t_reassemble", "em_energies", "image"]
        lines = ["\t".join(cols)]
        fmt = lambda v: "nan" if v is None else repr(float(v))  # noqa: E731
        for r in self.iterations:
            lines.append(
                "\t".join(
                    [
                        str(r.t),
                        fmt(r.energy),
                        fmt(r.aee),
                        fmt(r.aae),
                        f"{r.timings.get('flow', 0.0):.4f}",
                        f"{r.timings.get('em', 0.0):.4f}",
                        f"{r.timings.get('reassemble', 0.0):.4f}",
                        ",".join(repr(float(e)) for e in r.em_energies),
                        r.image_path or "-",
                    ]
                )
            )
        lines.append(f"# detail_seconds\t{self.detail_seconds:.4f}")
        return "\n".join(lines) + "\n"

    def write(self, path):
        text = self.to_text()

        def _w(tmp):
            Path(tmp).write_text(text)

        atomic_write(path, _w)


def parse_report(text: str) -> list[dict]:
    """Read back :meth:`RunReport.to_text` output as a list of dicts."""
    rows = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    header = rows[0].split("\t")
    out = []
    for ln in rows[1:]:
        rec = dict(zip(header, ln.split("\t")))
        rec["t"] = int(rec["t"])
        for k in ("energy", "aee", "aae", "t_flow", "t_em", "t_reassemble"):
            rec[k] = float(rec[k])
        rec["em_energies"] = [float(v) for v in rec["em_energies"].split(",") if v]
        out.append(rec)
    return out


def _em_chunk(X, Y, cfg, shape):
    res = run_em(X, Y, cfg, shape)
    return res.centroids, res.energies


def em_all_patches(image, noisy, flow, patch: PatchSpec, cfg: OgmmConfig, threads: int = 1):
    """EM on every patch of ``image``; returns ``(centers, X_new, energies)``.

    ``energies`` has shape ``(P, em_iterations + 1)``.
    """
    centers = slice_patches(image.shape, patch)
    noisy_centers = corresponding_centers(centers, flow, noisy.shape, patch.s2)
    X = gather(image, centers, patch.s1)
    Y = gather(noisy, noisy_centers, patch.s2)
    shape = (patch.s1, patch.s1)
    bounds = range(0, len(centers), CHUNK)
    jobs = [(X[i : i + CHUNK], Y[i : i + CHUNK]) for i in bounds]
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda j: _em_chunk(j[0], j[1], cfg, shape), jobs))
    else:
        results = [_em_chunk(x, y, cfg, shape) for x, y in jobs]
    X_new = np.concatenate([r[0] for r in results])
    energies = np.concatenate([r[1] for r in results])
    return centers, X_new, energies


def reassemble_patches(shape, centers, X, s1) -> np.ndarray:
    acc = Accumulator.zeros(shape)
    accumulate(acc, patch_positions(centers, s1), X)
    return reassemble(acc)


def deblur(blurred, noisy, cfg: PipelineConfig | None = None, gt_flow=None):
    """Deblur ``blurred`` guided by the ``noisy`` second view.

    Returns ``(image, report)``. ``gt_flow`` (blurred-view grid) adds flow
    errors against ground truth to the report.
    """
    cfg = cfg or PipelineConfig()
    cfg.validate()
    blurred = np.asarray(blurred, dtype=np.float64)
    noisy = np.asarray(noisy, dtype=np.float64)
    if cfg.enhance is not None:
        noisy = enhance(noisy, cfg.enhance)
    if blurred.shape != noisy.shape:
        raise ValueError(f"image shapes differ: {blurred.shape} vs {noisy.shape}")
    diag = cfg.diagnostics
    for d in (diag.intermediate_dir, diag.flow_dir):
        if d:
            Path(d).mkdir(parents=True, exist_ok=True)

    report = RunReport()
    current = blurred
    flow = None
    for t in range(1, cfg.outer_iterations + 1):
        rec = IterationRecord(t=t, energy=0.0, em_energies=[])
        tic = time.perf_counter()
        flow = compute_dense_flow(current, noisy, cfg.flow)
        rec.timings["flow"] = time.perf_counter() - tic
        if gt_flow is not None:
            rec.aee, rec.aae = flow_error(flow, gt_flow)

        tic = time.perf_counter()
        centers, X_new, energies = em_all_patches(
            current, noisy, flow, cfg.patch, cfg.ogmm, cfg.threads
        )
        rec.timings["em"] = time.perf_counter() - tic
        if not np.all(np.isfinite(X_new)):
            raise NumericalError("non-finite patch estimates")
        rec.em_energies = [float(e) for e in energies.sum(axis=0)]
        rec.energy = rec.em_energies[-1]

        tic = time.perf_counter()
        current = reassemble_patches(current.shape, centers, X_new, cfg.patch.s1)
        rec.timings["reassemble"] = time.perf_counter() - tic

        if diag.intermediate_dir:
            rec.image_path = str(Path(diag.intermediate_dir) / f"iter_{t:02d}.png")
            save_image(current, rec.image_path)
        if diag.flow_dir:
            rec.flow_path = str(Path(diag.flow_dir) / f"flow_{t:02d}.flo")
            write_flo(flow, rec.flow_path)
        log.debug("iteration %d: energy %.4f aee %s", t, rec.energy, rec.aee)
        report.iterations.append(rec)

    if cfg.detail is not None:
        tic = time.perf_counter()
        current = add_detail_layer(current, noisy, flow, cfg.detail)
        report.detail_seconds = time.perf_counter() - tic
    report.final_flow = flow
    return current, report
