"""Checkpoint files: a key=value text manifest plus a little-endian float32 blob.

``<path>`` holds the magic string, a version byte, then every parameter and
every BN running statistic in registry order (optionally followed by the SGD
velocities). ``<path>.manifest`` holds the configuration needed to rebuild
the network and resume or evaluate the run.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from eluresnet.model import Network, NetworkConfig, build_network
from eluresnet.tensor import Rng

MAGIC = b"ELURESNET"
VERSION = 1
_LE_F32 = np.dtype("<f4")


def manifest_path(path) -> Path:
    return Path(f"{path}.manifest")


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple, np.ndarray)):
        return ",".join(_format(v) for v in value)
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_manifest(path, fields: dict) -> None:
    lines = [f"{k}={_format(v)}" for k, v in fields.items()]
    manifest_path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path) -> dict[str, str]:
    out = {}
    for line in manifest_path(path).read_text().splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            out[key] = value
    return out


def network_fields(cfg: NetworkConfig) -> dict:
    return {"n": cfg.n, "classes": cfg.classes, "variant": cfg.variant.value,
            "alpha": cfg.alpha, "head_elu": cfg.head_elu, "widths": cfg.widths,
            "in_channels": cfg.in_channels}


def config_from_manifest(m: dict[str, str]) -> NetworkConfig:
    return NetworkConfig(n=int(m["n"]), classes=int(m["classes"]), variant=m["variant"],
                         alpha=float(m["alpha"]), head_elu=m["head_elu"] == "true",
                         widths=tuple(int(w) for w in m["widths"].split(",")),
                         in_channels=int(m.get("in_channels", 3)))


def save_checkpoint(path, net: Network, fields: dict, velocity: dict | None = None) -> None:
    """Write blob and manifest. ``fields`` are extra manifest entries (seed, epoch, ...)."""
    arrays = [a for _, a in net.parameters()] + [a for _, a in net.buffers()]
    if velocity is not None:
        arrays += [velocity[name] for name, _ in net.parameters()]
    blob = b"".join(np.asarray(a, dtype=_LE_F32).tobytes() for a in arrays)
    Path(path).write_bytes(MAGIC + bytes([VERSION]) + blob)
    manifest = {"format_version": VERSION, **network_fields(net.config), **fields,
                "has_velocity": velocity is not None}
    write_manifest(path, manifest)


def load_checkpoint(path):
    """Returns ``(network, manifest, velocity_or_None)``."""
    m = read_manifest(path)
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    version = raw[len(MAGIC)]
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    data = np.frombuffer(raw, dtype=_LE_F32, offset=len(MAGIC) + 1)
    net = build_network(config_from_manifest(m), Rng(0))
    params, buffers = net.parameters(), net.buffers()
    has_velocity = m.get("has_velocity") == "true"
    expected = sum(a.size for _, a in params) * (2 if has_velocity else 1)
    expected += sum(a.size for _, a in buffers)
    if data.size != expected:
        raise ValueError(f"{path}: {data.size} values, expected {expected}")
    pos = 0

    def take(shape):
        nonlocal pos
        size = int(np.prod(shape))
        chunk = data[pos:pos + size].astype(np.float32).reshape(shape)
        pos += size
        return chunk

    for _, a in params:
        a[...] = take(a.shape)
    net.set_buffers({name: take(a.shape) for name, a in buffers})
    velocity = {name: take(a.shape) for name, a in params} if has_velocity else None
    return net, m, velocity
