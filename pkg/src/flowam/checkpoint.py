"""Checkpoint file format.

Layout: one JSON header line (format_version, architecture, seed, iteration,
parameter count) terminated by a newline, followed by the flat parameter
array as little-endian float64 in layer order.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteError, ParseError
from .nnet import NetConfig, VelocityField

FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    vf: VelocityField
    seed: int
    iteration: int


def save(ckpt: Checkpoint, path: str) -> None:
    header = {
        "format_version": FORMAT_VERSION,
        "arch": ckpt.vf.cfg.to_dict(),
        "seed": int(ckpt.seed),
        "iteration": int(ckpt.iteration),
        "n_params": int(ckpt.vf.n_params),
    }
    params = ckpt.vf.params_flat().astype("<f8")
    # atomic: write to a temp file in the same directory, then rename
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(json.dumps(header, sort_keys=True).encode("utf-8"))
            f.write(b"\n")
            f.write(params.tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load(path: str) -> Checkpoint:
    with open(path, "rb") as f:
        header_line = f.readline()
        blob = f.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ParseError(f"bad checkpoint header in {path}: {e}") from e
    if header.get("format_version") != FORMAT_VERSION:
        raise ParseError(
            f"unsupported checkpoint format_version {header.get('format_version')}"
        )
    cfg = NetConfig.from_dict(header["arch"])
    params = np.frombuffer(blob, dtype="<f8").astype(np.float64)
    if params.size != header["n_params"]:
        raise ParseError(
            f"checkpoint {path}: expected {header['n_params']} params, "
            f"found {params.size}"
        )
    if not np.all(np.isfinite(params)):
        raise NonFiniteError(f"checkpoint {path} contains non-finite parameters")
    vf = VelocityField.init(cfg, seed=0)
    vf.set_params_flat(params)
    return Checkpoint(vf=vf, seed=int(header["seed"]), iteration=int(header["iteration"]))
