from dataclasses import asdict
import hashlib
from pathlib import Path
from typing import Union

import torch
from torch import nn

from src.models.critic import Critic, CriticConfig
from src.models.separator import Separator, SeparatorConfig
from src.utils.json import read_json_file, write_json_file

MODEL_KINDS = {"separator": (Separator, SeparatorConfig), "critic": (Critic, CriticConfig)}


def state_digest(model: nn.Module) -> str:
    """SHA-256 over every parameter and buffer, in state-dict order."""
    digest = hashlib.sha256()
    for name, tensor in model.state_dict().items():
        digest.update(name.encode())
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


def _kind_of(model: nn.Module) -> str:
    for kind, (cls, _) in MODEL_KINDS.items():
        if isinstance(model, cls):
            return kind
    raise ValueError(f"Cannot checkpoint a {type(model).__name__}")


def save_model(model: Union[Separator, Critic], directory: Path, name: str) -> Path:
    """
    Stores `<name>.pt` (state dict) and `<name>.json` (architecture) in `directory`.

    Loading both back gives a model with bit-identical parameters and outputs.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    dtype = next(model.parameters()).dtype
    write_json_file(
        {"kind": _kind_of(model), "dtype": str(dtype).replace("torch.", ""), "config": asdict(model.config)},
        directory / f"{name}.json",
    )
    weights = directory / f"{name}.pt"
    torch.save(model.state_dict(), weights)
    return weights


def load_model(directory: Path, name: str) -> Union[Separator, Critic]:
    """
    Rebuilds a model saved by `save_model`.

    Raises:
        FileNotFoundError: If either file is missing.
        ValueError: If the stored weights do not fit the stored architecture.
    """
    directory = Path(directory)
    weights = directory / f"{name}.pt"
    if not weights.exists():
        raise FileNotFoundError(f"Checkpoint weights not found: {weights}")
    meta = read_json_file(directory / f"{name}.json")

    cls, config_cls = MODEL_KINDS[meta["kind"]]
    model = cls(config_cls(**meta["config"])).to(getattr(torch, meta["dtype"]))
    state = torch.load(weights, map_location="cpu", weights_only=True)
    try:
        model.load_state_dict(state)
    except RuntimeError as e:
        raise ValueError(f"Checkpoint {weights} does not match its architecture") from e
    model.eval()
    return model
