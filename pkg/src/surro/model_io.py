"""Single-file model format.

Layout: one ASCII line ``surro-model <version> <manifest_bytes>``, then a JSON
manifest of that many bytes, then a flat little-endian float32 blob. The
manifest holds the configs, scaler, design space, seeds, target
standardization and a table of named tensors (shape, byte offset, role).
Weights are float32-representable after training, so loading reproduces
predictions exactly. BN running stats and Adam moments ride along for resume.
"""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .config import EncoderConfig, HeadConfig
from .encoders import ConvAutoencoder, Head, SurrogateModel, build_encoder
from .engine import Module
from .errors import InvalidConfig, MalformedModel
from .sampling import DesignParameter, DesignSpace
from .weather import MinMaxScaler

MAGIC = "surro-model"
FORMAT_VERSION = 1


def _tensor_table(module: Module):
    """(name, role, array) for every saved tensor, in a fixed order."""
    out = []
    for name, p in module.named_parameters():
        out.append((name, "param", p.data))
    for name, buf in module.named_buffers():
        out.append((name, "buffer", buf))
    for name, p in module.named_parameters():
        out.append((name, "adam_m", p.adam_m))
        out.append((name, "adam_v", p.adam_v))
    return out


def _scaler_dict(s: MinMaxScaler) -> dict:
    return {"min": [float(v) for v in s.min], "max": [float(v) for v in s.max],
            "fitted_on": s.fitted_on}


def _space_list(space: DesignSpace) -> list:
    return [[p.name, p.lo, p.hi] for p in space.params]


def write_atomic(path: Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _encode(kind: str, module: Module, meta: dict) -> bytes:
    table, chunks, offset = [], [], 0
    for name, role, arr in _tensor_table(module):
        raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        table.append({"name": name, "role": role, "shape": list(arr.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    steps = {name: p.step_count for name, p in module.named_parameters()}
    manifest = dict(meta, format_version=FORMAT_VERSION, kind=kind, tensors=table,
                    blob_bytes=offset, step_counts=steps)
    body = json.dumps(manifest, sort_keys=True).encode()
    return f"{MAGIC} {FORMAT_VERSION} {len(body)}\n".encode() + body + b"".join(chunks)


def save_model(model: SurrogateModel, path: Path) -> None:
    meta = {"encoder_cfg": asdict(model.encoder_cfg), "head_cfg": asdict(model.head_cfg),
            "scaler": _scaler_dict(model.scaler), "space": _space_list(model.space),
            "seed": model.seed, "target_mean": model.target_mean,
            "target_std": model.target_std, "trained": model.trained}
    write_atomic(path, _encode("surrogate", model, meta))


def save_autoencoder(ae: ConvAutoencoder, scaler: MinMaxScaler, cfg: EncoderConfig, seed: int,
                     path: Path) -> None:
    meta = {"encoder_cfg": asdict(cfg), "scaler": _scaler_dict(scaler), "seed": seed}
    write_atomic(path, _encode("autoencoder", ae, meta))


def _decode(path: Path):
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise MalformedModel(f"cannot read model file {path}: {exc}") from None
    nl = raw.find(b"\n")
    parts = raw[:nl].decode("ascii", errors="replace").split() if nl > 0 else []
    if len(parts) != 3 or parts[0] != MAGIC:
        raise MalformedModel(f"{path}: not a model file")
    if parts[1] != str(FORMAT_VERSION):
        raise MalformedModel(f"{path}: unsupported format version {parts[1]}")
    try:
        n = int(parts[2])
        body = raw[nl + 1:nl + 1 + n]
        if len(body) != n:
            raise ValueError("truncated manifest")
        manifest = json.loads(body)
    except ValueError as exc:
        raise MalformedModel(f"{path}: bad manifest ({exc})") from None
    blob = raw[nl + 1 + n:]
    if len(blob) != manifest.get("blob_bytes", -1):
        raise MalformedModel(f"{path}: weight blob is {len(blob)} bytes, manifest says "
                             f"{manifest.get('blob_bytes')}")
    try:
        enc_cfg = EncoderConfig(**manifest["encoder_cfg"])
    except (InvalidConfig, TypeError, KeyError) as exc:
        raise MalformedModel(f"{path}: bad encoder config ({exc})") from None
    return manifest, blob, enc_cfg


def _restore(module: Module, manifest: dict, blob: bytes, path) -> None:
    expected = [(name, role, arr.shape) for name, role, arr in _tensor_table(module)]
    table = manifest["tensors"]
    if [(t["name"], t["role"], tuple(t["shape"])) for t in table] != expected:
        raise MalformedModel(f"{path}: tensor table does not match the configured architecture")
    params = dict(module.named_parameters())
    owners = {}
    for m_name, m in _named_modules(module):
        for b in m.buffer_names:
            owners[f"{m_name}{b}"] = (m, b)
    for t in table:
        count = int(np.prod(t["shape"], dtype=np.int64))
        start, stop = t["offset"], t["offset"] + 4 * count
        if stop > len(blob):
            raise MalformedModel(f"{path}: tensor {t['name']} runs past the blob")
        arr = np.frombuffer(blob[start:stop], dtype="<f4").astype(np.float64).reshape(t["shape"])
        if t["role"] == "param":
            params[t["name"]].data = arr
        elif t["role"] == "adam_m":
            params[t["name"]].adam_m = arr
        elif t["role"] == "adam_v":
            params[t["name"]].adam_v = arr
        else:
            m, b = owners[t["name"]]
            getattr(m, b)[...] = arr
    for name, n in manifest.get("step_counts", {}).items():
        params[name].step_count = int(n)


def _named_modules(module: Module, prefix: str = ""):
    yield prefix, module
    for name, child in module._children():
        yield from _named_modules(child, f"{prefix}{name}.")


def _scaler(d) -> MinMaxScaler:
    return MinMaxScaler(np.array(d["min"]), np.array(d["max"]), d["fitted_on"])


def load_model(path: Path) -> SurrogateModel:
    manifest, blob, enc_cfg = _decode(path)
    if manifest.get("kind") != "surrogate":
        raise MalformedModel(f"{path}: expected a surrogate model, found {manifest.get('kind')!r}")
    try:
        head_cfg = HeadConfig(**manifest["head_cfg"])
        scaler = _scaler(manifest["scaler"])
        space = DesignSpace(tuple(DesignParameter(n, float(lo), float(hi))
                                  for n, lo, hi in manifest["space"]))
        encoder = build_encoder(enc_cfg, scaler.n_features)
        head = Head(head_cfg, encoder.embed_dim + space.dim)
        model = SurrogateModel(encoder, head, scaler, space, enc_cfg, head_cfg,
                               int(manifest["seed"]), manifest["target_mean"],
                               manifest["target_std"])
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, MalformedModel):
            raise
        raise MalformedModel(f"{path}: bad manifest ({exc})") from None
    _restore(model, manifest, blob, path)
    model.trained = bool(manifest.get("trained", False))
    model.eval()
    return model


def load_autoencoder(path: Path):
    """Returns (autoencoder, scaler, encoder config, seed)."""
    manifest, blob, enc_cfg = _decode(path)
    if manifest.get("kind") != "autoencoder" or enc_cfg.kind != "autoencoder":
        raise MalformedModel(f"{path}: not an autoencoder file")
    scaler = _scaler(manifest["scaler"])
    ae = ConvAutoencoder(enc_cfg, scaler.n_features)
    _restore(ae, manifest, blob, path)
    ae.eval()
    return ae, scaler, enc_cfg, int(manifest["seed"])
