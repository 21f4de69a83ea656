"""Binary checkpoints: magic `A3DF`, version, config block, f32 arrays.

Layout (little endian):

    4 bytes  magic "A3DF"
    u32      format version
    u32      config block length
    ...      config block: JSON (grid/mlp configs, n_objects, density_bias,
             prompts, training iteration)
    ...      parameter arrays as f32, in the canonical traversal order of
             FieldParams.flatten (grid table row-major, then each layer's
             weight matrix and bias)

Parameters are always stored in 32 bits; loading restores float32 params.
Writes go to a temp file in the target directory and rename into place, so
an interrupted save never leaves a loadable-but-wrong file.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .field import FieldParams, HashGridConfig, MlpConfig

MAGIC = b"A3DF"
VERSION = 1
_U32 = struct.Struct("<I")


class CheckpointError(RuntimeError):
    pass


class IntegrityError(CheckpointError):
    pass


class UnsupportedVersionError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    params: FieldParams
    prompts: tuple
    iteration: int = 0


def _config_block(ckpt: Checkpoint) -> bytes:
    grid = ckpt.params.grid_config
    mlp = ckpt.params.mlp_config
    doc = {
        "grid": {
            "levels": grid.levels,
            "base_resolution": grid.base_resolution,
            "per_level_scale": grid.per_level_scale,
            "features_per_level": grid.features_per_level,
            "table_size_log2": grid.table_size_log2,
            "bounds": [list(grid.bounds[0]), list(grid.bounds[1])],
        },
        "mlp": {
            "hidden_layers": mlp.hidden_layers,
            "width": mlp.width,
            "activation": mlp.activation,
        },
        "n_objects": ckpt.params.n_objects,
        "density_bias": ckpt.params.density_bias,
        "prompts": list(ckpt.prompts),
        "iteration": int(ckpt.iteration),
    }
    return json.dumps(doc, sort_keys=True).encode("utf-8")


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    config = _config_block(ckpt)
    flat = ckpt.params.flatten().astype("<f4")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(_U32.pack(VERSION))
            fh.write(_U32.pack(len(config)))
            fh.write(config)
            fh.write(flat.tobytes())
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise IntegrityError(f"{path}: not a field checkpoint (bad magic)")
    (version,) = _U32.unpack_from(raw, 4)
    if version != VERSION:
        raise UnsupportedVersionError(
            f"{path}: unsupported checkpoint version {version} (this build reads {VERSION})"
        )
    (config_len,) = _U32.unpack_from(raw, 8)
    if len(raw) < 12 + config_len:
        raise IntegrityError(f"{path}: truncated config block")
    try:
        doc = json.loads(raw[12 : 12 + config_len].decode("utf-8"))
        grid = HashGridConfig(
            levels=doc["grid"]["levels"],
            base_resolution=doc["grid"]["base_resolution"],
            per_level_scale=doc["grid"]["per_level_scale"],
            features_per_level=doc["grid"]["features_per_level"],
            table_size_log2=doc["grid"]["table_size_log2"],
            bounds=(tuple(doc["grid"]["bounds"][0]), tuple(doc["grid"]["bounds"][1])),
        )
        mlp = MlpConfig(
            hidden_layers=doc["mlp"]["hidden_layers"],
            width=doc["mlp"]["width"],
            activation=doc["mlp"].get("activation", "relu"),
        )
        n_objects = int(doc["n_objects"])
        density_bias = float(doc["density_bias"])
        prompts = tuple(doc["prompts"])
        iteration = int(doc["iteration"])
    except (KeyError, ValueError, TypeError) as exc:
        raise IntegrityError(f"{path}: malformed config block: {exc}")

    layout = grid.build_layout()
    template = FieldParams(
        grid_config=grid,
        mlp_config=mlp,
        n_objects=n_objects,
        tables=np.zeros((layout.total_rows, layout.features_per_level), dtype=np.float32),
        weights=[
            np.zeros((fan_in, fan_out), dtype=np.float32)
            for fan_in, fan_out in mlp.layer_dims(grid.output_dim + n_objects)
        ],
        biases=[
            np.zeros(fan_out, dtype=np.float32)
            for _, fan_out in mlp.layer_dims(grid.output_dim + n_objects)
        ],
        density_bias=density_bias,
        layout=layout,
    )
    expected = template.param_count() * 4
    payload = raw[12 + config_len :]
    if len(payload) != expected:
        raise IntegrityError(
            f"{path}: parameter payload is {len(payload)} bytes, configs require {expected}"
        )
    flat = np.frombuffer(payload, dtype="<f4")
    params = template.unflatten(flat)
    return Checkpoint(params=params, prompts=prompts, iteration=iteration)
