"""
Versioned binary checkpoints.

Layout (all integers little-endian):
    4 bytes   magic b"GUIM"
    2 bytes   format version (uint16)
    4 bytes   header length H (uint32)
    H bytes   UTF-8 JSON header, keys sorted
    ...       raw little-endian arrays, back to back, in the header's order

The header carries the model and train configs, step, epoch, early-stop
state, the sampling generator state and an array table of
``{name, dtype, shape, offset, nbytes}`` with offsets relative to the end of
the header.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import torch

from guim.capabilities.networks.embedder import ItemVocab, vocab_item_array
from guim.capabilities.networks.model import GUIMModel, build_model
from guim.core.config import ModelConfig, TrainConfig
from guim.core.exceptions import CheckpointError, CheckpointVersionError
from guim.core.logging import get_logger
from guim.core.models import Precision

logger = get_logger(__name__)

MAGIC = b"GUIM"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<4sHI")

PARAM_PREFIX = "param/"
EXP_AVG_PREFIX = "adam/exp_avg/"
EXP_AVG_SQ_PREFIX = "adam/exp_avg_sq/"
VOCAB_ARRAY = "vocab/item_ids"


@dataclass
class Checkpoint:
    """Everything needed to resume training bit-exactly."""

    model_config: dict[str, Any]
    train_config: dict[str, Any]
    step: int = 0
    epoch: int = 0
    early_stop: dict[str, Any] = field(default_factory=dict)
    rng_state: dict[str, Any] | None = None
    adam_step: int | None = None
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def params(self) -> dict[str, np.ndarray]:
        return _strip(self.arrays, PARAM_PREFIX)

    def vocab(self) -> ItemVocab:
        ids = self.arrays.get(VOCAB_ARRAY, np.zeros(0, dtype=np.int64))
        return ItemVocab(tuple(int(i) for i in ids), int(self.model_config["top_x"]))


def _strip(arrays: dict[str, np.ndarray], prefix: str) -> dict[str, np.ndarray]:
    return {k[len(prefix) :]: v for k, v in arrays.items() if k.startswith(prefix)}


def _little_endian(array: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(array, dtype=array.dtype.newbyteorder("<"))


def collect_arrays(
    model: GUIMModel,
    optimizer: torch.optim.Optimizer | None,
    vocab: ItemVocab,
) -> tuple[dict[str, np.ndarray], int | None]:
    """Parameters, Adam moments and vocabulary as named numpy arrays."""
    arrays: dict[str, np.ndarray] = {}
    for name, tensor in model.state_dict().items():
        arrays[PARAM_PREFIX + name] = tensor.detach().cpu().numpy().copy()

    adam_step: int | None = None
    if optimizer is not None:
        for name, param in model.named_parameters():
            state = optimizer.state.get(param)
            if not state:
                continue
            arrays[EXP_AVG_PREFIX + name] = state["exp_avg"].detach().cpu().numpy().copy()
            arrays[EXP_AVG_SQ_PREFIX + name] = state["exp_avg_sq"].detach().cpu().numpy().copy()
            adam_step = int(state["step"])
    arrays[VOCAB_ARRAY] = vocab_item_array(vocab)
    return arrays, adam_step


def save_checkpoint(path: Path, checkpoint: Checkpoint) -> None:
    """Write a checkpoint; arrays are stored in insertion order."""
    table: list[dict[str, Any]] = []
    payload: list[bytes] = []
    offset = 0
    for name, array in checkpoint.arrays.items():
        data = _little_endian(array)
        raw = data.tobytes()
        table.append(
            {
                "name": name,
                "dtype": data.dtype.str,
                "shape": list(data.shape),
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        payload.append(raw)
        offset += len(raw)

    header = {
        "model_config": checkpoint.model_config,
        "train_config": checkpoint.train_config,
        "step": checkpoint.step,
        "epoch": checkpoint.epoch,
        "early_stop": checkpoint.early_stop,
        "rng_state": checkpoint.rng_state,
        "adam_step": checkpoint.adam_step,
        "arrays": table,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")

    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(_PREFIX.pack(MAGIC, FORMAT_VERSION, len(header_bytes)))
        f.write(header_bytes)
        for raw in payload:
            f.write(raw)
    logger.info("checkpoint saved", path=str(path), step=checkpoint.step, arrays=len(table))


def load_checkpoint(path: Path) -> Checkpoint:
    """
    Read a checkpoint written by save_checkpoint.

    Raises:
        CheckpointError: Missing file, bad magic bytes or truncated data
        CheckpointVersionError: Unsupported version or unreadable header
    """
    if not path.exists():
        raise CheckpointError(str(path), "Checkpoint not found")
    blob = path.read_bytes()
    if len(blob) < _PREFIX.size:
        raise CheckpointError(str(path), "Checkpoint truncated before header")
    magic, version, header_len = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError(str(path), f"Bad magic bytes {magic!r}")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(str(path), str(version), str(FORMAT_VERSION))

    start = _PREFIX.size
    try:
        header = json.loads(blob[start : start + header_len].decode("utf-8"))
        table = header["arrays"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as e:
        raise CheckpointVersionError(str(path), "unreadable header", str(FORMAT_VERSION)) from e

    base = start + header_len
    arrays: dict[str, np.ndarray] = {}
    for entry in table:
        begin = base + entry["offset"]
        end = begin + entry["nbytes"]
        if end > len(blob):
            raise CheckpointError(
                str(path), f"Checkpoint truncated inside array {entry['name']}"
            )
        data = np.frombuffer(blob[begin:end], dtype=np.dtype(entry["dtype"]))
        arrays[entry["name"]] = data.reshape(entry["shape"]).copy()

    return Checkpoint(
        model_config=header["model_config"],
        train_config=header["train_config"],
        step=int(header["step"]),
        epoch=int(header["epoch"]),
        early_stop=header.get("early_stop") or {},
        rng_state=header.get("rng_state"),
        adam_step=header.get("adam_step"),
        arrays=arrays,
    )


def restore_model(checkpoint: Checkpoint) -> GUIMModel:
    """Rebuild the model and load its parameters bit-exactly."""
    config = ModelConfig.model_validate(checkpoint.model_config)
    precision = TrainConfig.model_validate(checkpoint.train_config).precision
    model = build_model(config, precision=Precision(precision))
    state = {name: torch.from_numpy(array) for name, array in checkpoint.params().items()}
    missing, unexpected = model.load_state_dict(state, strict=False)
    if missing or unexpected:
        raise CheckpointError(
            "<memory>",
            "Checkpoint parameters do not match the model",
            details={"missing": list(missing), "unexpected": list(unexpected)},
        )
    return model


def restore_optimizer(
    optimizer: torch.optim.Optimizer,
    model: GUIMModel,
    checkpoint: Checkpoint,
) -> None:
    """
    Load Adam moments and step count saved with the parameters.

    Parameters saved without moments (never updated) are left to Adam's lazy
    initialisation.

    Raises:
        CheckpointError: If only one of a parameter's two moments is stored
    """
    exp_avg = _strip(checkpoint.arrays, EXP_AVG_PREFIX)
    exp_avg_sq = _strip(checkpoint.arrays, EXP_AVG_SQ_PREFIX)
    if not exp_avg or checkpoint.adam_step is None:
        return
    for name, param in model.named_parameters():
        first, second = exp_avg.get(name), exp_avg_sq.get(name)
        if first is None and second is None:
            continue
        if first is None or second is None:
            raise CheckpointError(
                "<memory>",
                f"Incomplete Adam moments for parameter {name}",
                details={"parameter": name},
            )
        optimizer.state[param] = {
            "step": torch.tensor(float(checkpoint.adam_step), dtype=torch.float32),
            "exp_avg": torch.from_numpy(first).to(param.dtype),
            "exp_avg_sq": torch.from_numpy(second).to(param.dtype),
        }
