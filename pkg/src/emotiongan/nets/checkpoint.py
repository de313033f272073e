"""Self-describing checkpoint archives."""
from __future__ import annotations

import os
from pathlib import Path
from typing import Dict, Optional

import torch

from ..errors import CheckpointError
from .spec import NetSpec

FORMAT_VERSION = 1


def save_checkpoint(path, *, netspec: NetSpec, models: Dict[str, torch.nn.Module],
                    optimizers: Dict[str, torch.optim.Optimizer], epoch: int, config_hash: str,
                    extra: Optional[dict] = None) -> Path:
    """Write models, optimizer state, epoch counter, NetSpec and config hash atomically."""
    payload = {
        "format_version": FORMAT_VERSION,
        "netspec": netspec.to_dict(),
        "config_hash": config_hash,
        "epoch": int(epoch),
        "models": {k: m.state_dict() for k, m in models.items()},
        "optimizers": {k: o.state_dict() for k, o in optimizers.items()},
        "extra": extra or {},
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    torch.save(payload, tmp)
    os.replace(tmp, path)
    return path


def load_checkpoint(path, expected_hash: Optional[str] = None,
                    expected_spec: Optional[NetSpec] = None) -> dict:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path} is not a checkpoint of format {FORMAT_VERSION}")
    if expected_hash is not None and payload["config_hash"] != expected_hash:
        raise CheckpointError(
            f"{path}: config hash {payload['config_hash']} does not match expected {expected_hash}")
    spec = NetSpec.from_dict(payload["netspec"])
    if expected_spec is not None and spec != expected_spec:
        raise CheckpointError(f"{path}: NetSpec differs from the configured architecture")
    payload["netspec"] = spec
    return payload
