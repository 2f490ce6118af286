import logging
import pickle
from pathlib import Path
from typing import Any

import torch

from flowline_maintenance.errors import CheckpointError
from flowline_maintenance.neural_core.q_network import QNetwork

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "flowline-qnetwork"
CHECKPOINT_VERSION = 1


def save_checkpoint(path: str | Path, net: QNetwork, metadata: dict[str, Any] | None = None) -> Path:
    """Write the network (layout in docs/checkpoint_format.md) and return the path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "layer_sizes": list(net.layer_sizes),
        "state_dict": {k: v.detach().clone().contiguous() for k, v in net.state_dict().items()},
        "metadata": metadata or {},
    }
    torch.save(payload, path)
    logger.info("[Checkpoint] saved to %s", path)
    return path


def load_checkpoint(path: str | Path) -> tuple[QNetwork, dict[str, Any]]:
    """
    Read a checkpoint written by save_checkpoint.

    Raises:
        CheckpointError: missing file, foreign layout or unknown version.
    """
    path = Path(path)
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except (OSError, RuntimeError, EOFError, ValueError, pickle.UnpicklingError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc

    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a {CHECKPOINT_FORMAT} checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {payload.get('version')} in {path}")

    net = QNetwork(payload["layer_sizes"])
    try:
        net.load_state_dict(payload["state_dict"])
    except RuntimeError as exc:
        raise CheckpointError(f"checkpoint {path} does not match its layer sizes: {exc}") from exc
    return net, payload.get("metadata", {})
