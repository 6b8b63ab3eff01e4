"""Versioned binary model checkpoints and JSON-lines training history.

Checkpoint layout (little endian):

    magic   4 bytes  b"TFGW"
    version uint32   currently 1
    meta    uint32 length + UTF-8 JSON (shapes-independent model metadata)
    count   uint32   number of parameter blocks
    blocks  per block, in the model's declared parameter order:
            uint32 name length + UTF-8 name
            uint32 ndim, then ndim * uint64 shape
            raw float64 array data (C order)
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .graphs import StructureKind
from .layer import Template
from .nn import GinParams, MlpParams
from .trainer import TfgwModel

MAGIC = b"TFGW"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _write_block(f, name: str, arr: np.ndarray) -> None:
    data = np.ascontiguousarray(arr, dtype=np.float64)
    raw = name.encode("utf-8")
    f.write(struct.pack("<I", len(raw)))
    f.write(raw)
    f.write(struct.pack("<I", data.ndim))
    for s in data.shape:
        f.write(struct.pack("<Q", s))
    f.write(data.tobytes())


def _read_block(f):
    (nlen,) = struct.unpack("<I", f.read(4))
    name = f.read(nlen).decode("utf-8")
    (ndim,) = struct.unpack("<I", f.read(4))
    shape = tuple(struct.unpack("<Q", f.read(8))[0] for _ in range(ndim))
    count = int(np.prod(shape)) if shape else 1
    arr = np.frombuffer(f.read(8 * count), dtype="<f8").reshape(shape).copy()
    return name, arr


def save_model(path: str, model: TfgwModel) -> None:
    meta = {
        "alpha": model.alpha,
        "structure_kind": model.structure_kind.value,
        "input_dim": model.input_dim,
        "class_count": model.class_count,
        "template_count": model.template_count,
        "template_sizes": [t.structure.shape[0] for t in model.templates],
        "template_feature_dim": model.templates[0].features.shape[1],
        "adjacency_domain": model.templates[0].adjacency_domain,
        "gin_layers": model.gin.layer_count if model.gin else 0,
        "gin_hidden": model.gin.hidden_dim if model.gin else 0,
        "head_dims": [w.shape for w in model.head.weights],
        "dropout": model.head.dropout,
    }
    arrays = model.state_arrays()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        raw = json.dumps(meta, sort_keys=True).encode("utf-8")
        f.write(struct.pack("<I", len(raw)))
        f.write(raw)
        f.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            _write_block(f, name, arr)


def load_model(path: str) -> TfgwModel:
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise CheckpointError("not a model checkpoint (bad magic)")
        try:
            (version,) = struct.unpack("<I", f.read(4))
            if version != VERSION:
                raise CheckpointError(f"unsupported checkpoint version {version}")
            (mlen,) = struct.unpack("<I", f.read(4))
            meta = json.loads(f.read(mlen).decode("utf-8"))
            (count,) = struct.unpack("<I", f.read(4))
            arrays = dict(_read_block(f) for _ in range(count))
        except (struct.error, ValueError, KeyError, UnicodeDecodeError) as exc:
            raise CheckpointError(f"corrupt checkpoint: {exc}")

    gin = None
    L = meta["gin_layers"]
    if L > 0:
        gin = GinParams([], [], [], [], [], [], [], [], [], [], [], [], [])
        for ell in range(L):
            for attr, key in (("weights1", "weights1"), ("biases1", "biases1"),
                              ("gamma1", "gamma1"), ("beta1", "beta1"),
                              ("run_mean1", "run_mean1"), ("run_var1", "run_var1"),
                              ("weights2", "weights2"), ("biases2", "biases2"),
                              ("gamma2", "gamma2"), ("beta2", "beta2"),
                              ("run_mean2", "run_mean2"), ("run_var2", "run_var2")):
                getattr(gin, attr).append(arrays[f"gin.{ell}.{key}"])
            gin.eps.append(0.0)
    templates = []
    for k in range(meta["template_count"]):
        templates.append(Template(arrays[f"template.{k}.structure"],
                                  arrays[f"template.{k}.features"],
                                  arrays[f"template.{k}.weights"],
                                  adjacency_domain=meta["adjacency_domain"]))
    weights, biases = [], []
    for layer in range(len(meta["head_dims"])):
        weights.append(arrays[f"head.{layer}.weight"])
        biases.append(arrays[f"head.{layer}.bias"])
    head = MlpParams(weights, biases, dropout=meta["dropout"])
    return TfgwModel(gin=gin, templates=templates, alpha=meta["alpha"], head=head,
                     structure_kind=StructureKind(meta["structure_kind"]),
                     input_dim=meta["input_dim"], class_count=meta["class_count"])


def write_history(path: str, records: list[dict]) -> None:
    with open(path, "w") as f:
        for rec in records:
            f.write(json.dumps({"epoch": rec["epoch"], "fold": rec["fold"],
                                "train_loss": rec["train_loss"],
                                "val_acc": rec["val_acc"],
                                "alpha": rec["alpha"]}) + "\n")
