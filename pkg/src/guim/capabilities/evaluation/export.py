"""
Embedding export, results files and improvement tables.

Embedding lines are ``id<TAB>v1,v2,...`` with 9 significant digits, so two
runs with equal vectors produce byte-identical files.
"""

from __future__ import annotations

import json
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import ArrayLike

from guim.core.logging import get_logger
from guim.core.models import EvalRecord

logger = get_logger(__name__)

BASELINE_VARIANT = "guim"


def format_vector(values: ArrayLike) -> str:
    """Comma-separated reals in ``%.9g``."""
    return ",".join(f"{float(v):.9g}" for v in np.asarray(values, dtype=np.float64).ravel())


def export_embeddings(path: Path, ids: Sequence[int], vectors: ArrayLike) -> int:
    """
    Write one line per entity; multi-vector users are flattened in vector order.

    Returns:
        Number of lines written
    """
    rows = np.asarray(vectors, dtype=np.float64)
    rows = rows.reshape(rows.shape[0], -1) if rows.size else rows.reshape(len(ids), 0)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for entity, row in zip(ids, rows, strict=True):
            f.write(f"{int(entity)}\t{format_vector(row)}\n")
    logger.info("embeddings exported", path=str(path), lines=len(ids))
    return len(ids)


def read_embeddings(path: Path) -> tuple[list[int], np.ndarray]:
    """Read an export back as (ids, [n, width] vectors)."""
    ids: list[int] = []
    rows: list[list[float]] = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            entity, _, values = line.rstrip("\n").partition("\t")
            ids.append(int(entity))
            rows.append([float(v) for v in values.split(",")] if values else [])
    return ids, np.asarray(rows, dtype=np.float64)


def write_results(path: Path, records: Iterable[EvalRecord]) -> None:
    """Write evaluation records as a sorted-key JSON document."""
    payload = {"results": [record.to_dict() for record in records]}
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("results written", path=str(path), records=len(payload["results"]))


def read_results(path: Path) -> list[EvalRecord]:
    data = json.loads(path.read_text(encoding="utf-8"))
    return [EvalRecord(**entry) for entry in data.get("results", [])]


def relative_improvement(records: Sequence[EvalRecord]) -> list[dict[str, Any]]:
    """
    Improvement (%) of every record over its single-vector GUIM baseline.

    The baseline of a record is the GUIM record with one vector sharing its
    protocol, M and seed; records without one get ``None``.
    """
    baselines = {
        (r.protocol, r.m, r.seed): r.mean
        for r in records
        if r.variant == BASELINE_VARIANT and r.num_vectors == 1
    }
    rows = []
    for r in records:
        base = baselines.get((r.protocol, r.m, r.seed))
        improvement = None if not base else (r.mean / base - 1.0) * 100.0
        rows.append(
            {
                "protocol": r.protocol,
                "m": r.m,
                "variant": r.variant,
                "num_vectors": r.num_vectors,
                "seed": r.seed,
                "mean": r.mean,
                "improvement": improvement,
            }
        )
    return rows
