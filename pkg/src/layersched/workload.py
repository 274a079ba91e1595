"""Task trace generation and trace file IO.

Random traces draw an image (optionally weighted) and uniform CPU/memory
requests per task; everything flows from the seed, so the same spec always
yields the same trace. Trace files are JSON lines, one task per line.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from itertools import islice
from pathlib import Path
from typing import Iterator

from .errors import TraceCorrupt, UnknownImage
from .model import ImageRef, LayerCatalog, TaskRequest

MB = 1024 * 1024

TRACE_FIELDS = ("task_id", "image_name", "image_tag", "cpu_millicores", "mem_bytes")


@dataclass
class WorkloadSpec:
    """Parameters for a random trace, or a pointer to a fixed one."""

    kind: str = "random"  # random | trace_file
    count: int = 20
    image_weights: dict[str, float] | None = None  # "name:tag" -> probability
    cpu_range: tuple[int, int] = (100, 1000)  # millicores, inclusive
    mem_range: tuple[int, int] = (64 * MB, 1024 * MB)  # bytes, inclusive
    seed: int = 0
    trace_path: str | None = None

    def __post_init__(self):
        if self.kind not in ("random", "trace_file"):
            raise ValueError(f"unknown workload kind {self.kind!r}")
        if self.kind == "trace_file" and not self.trace_path:
            raise ValueError("trace_file workload needs trace_path")
        if self.count < 0:
            raise ValueError("count must be >= 0")
        for name, (lo, hi) in (("cpu_range", self.cpu_range), ("mem_range", self.mem_range)):
            if lo > hi or lo < 0:
                raise ValueError(f"{name} must satisfy 0 <= min <= max")
        if self.image_weights is not None:
            total = sum(self.image_weights.values())
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"image weights sum to {total}, expected 1")


def _image_population(
    spec: WorkloadSpec, catalog: LayerCatalog
) -> tuple[list[ImageRef], list[float]]:
    if spec.image_weights is not None:
        images, weights = [], []
        for key in sorted(spec.image_weights):
            ref = ImageRef.parse(key)
            if ref not in catalog.images:
                raise UnknownImage(f"weighted image not in catalog: {key}")
            images.append(ref)
            weights.append(spec.image_weights[key])
        return images, weights
    images = sorted(catalog.images, key=lambda ref: ref.key)
    if not images:
        raise UnknownImage("catalog holds no images to draw from")
    return images, [1.0] * len(images)


def stream(spec: WorkloadSpec, catalog: LayerCatalog) -> Iterator[TaskRequest]:
    """Unbounded seeded task stream; ``generate`` is a finite prefix of it.

    Per task the draw order is image, then CPU, then memory; that order is
    part of the determinism contract.
    """
    images, weights = _image_population(spec, catalog)
    rng = random.Random(spec.seed)
    counter = 0
    while True:
        counter += 1
        image = rng.choices(images, weights=weights)[0]
        cpu = rng.randint(*spec.cpu_range)
        mem = rng.randint(*spec.mem_range)
        yield TaskRequest(
            task_id=f"task-{counter:04d}",
            image=image,
            cpu_request=cpu,
            mem_request=mem,
        )


def generate(spec: WorkloadSpec, catalog: LayerCatalog) -> list[TaskRequest]:
    """Produce the trace for ``spec``: ``count`` seeded tasks, or the file."""
    if spec.kind == "trace_file":
        return load_trace(spec.trace_path)
    return list(islice(stream(spec, catalog), spec.count))


def save_trace(tasks: list[TaskRequest], path: str | Path) -> None:
    lines = []
    for task in tasks:
        lines.append(json.dumps({
            "task_id": task.task_id,
            "image_name": task.image.name,
            "image_tag": task.image.tag,
            "cpu_millicores": task.cpu_request,
            "mem_bytes": task.mem_request,
        }, sort_keys=True))
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def load_trace(path: str | Path) -> list[TaskRequest]:
    tasks = []
    text = Path(path).read_text(encoding="utf-8")
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            tasks.append(TaskRequest(
                task_id=str(record["task_id"]),
                image=ImageRef(str(record["image_name"]), str(record["image_tag"])),
                cpu_request=int(record["cpu_millicores"]),
                mem_request=int(record["mem_bytes"]),
            ))
        except (ValueError, KeyError, TypeError) as exc:
            raise TraceCorrupt(number, f"line {number}: {exc}") from exc
    return tasks
