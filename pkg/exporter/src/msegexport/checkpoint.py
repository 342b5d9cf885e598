"""Reading PyTorch checkpoints into plain float32 numpy arrays."""

from __future__ import annotations

import numpy as np
import torch

from .errors import ExportError

# Wrappers some training scripts nest the actual state dict under.
_NEST_KEYS = ("state_dict", "model", "model_state_dict", "net")


def _looks_like_state_dict(obj):
    return (
        isinstance(obj, dict)
        and len(obj) > 0
        and all(isinstance(v, torch.Tensor) for v in obj.values())
    )


def load_checkpoint(path):
    """Load a checkpoint file and return {tensor_name: float32 ndarray}.

    Accepts either a bare state dict or a dict that nests one under a
    conventional key. Tensor order is preserved as stored.
    """
    try:
        obj = torch.load(path, map_location="cpu", weights_only=True)
    except FileNotFoundError:
        raise
    except Exception as e:
        raise ExportError(f"cannot load checkpoint {path}: {e}") from e

    state = None
    if _looks_like_state_dict(obj):
        state = obj
    elif isinstance(obj, dict):
        for key in _NEST_KEYS:
            if key in obj and _looks_like_state_dict(obj[key]):
                state = obj[key]
                break
    if state is None:
        raise ExportError(
            f"checkpoint {path} holds no state dict (tried top level and {_NEST_KEYS})"
        )

    out = {}
    for name, t in state.items():
        a = t.detach().cpu().numpy()
        if not np.issubdtype(a.dtype, np.floating) and not np.issubdtype(a.dtype, np.integer):
            raise ExportError(f"tensor {name!r} has unsupported dtype {a.dtype}")
        out[name] = np.ascontiguousarray(a, dtype=np.float32)
    return out
