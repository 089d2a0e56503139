"""Encoder checkpoints: parameters, normalization state, Adam moments and a config hash in one ``.npz``."""
from __future__ import annotations

import json

import numpy as np

from .encoder import EncoderParams, HiddenLayer, TrainerState
from .errors import ReportError


def save_checkpoint(path, enc: EncoderParams, state: TrainerState, config_hash: str = "") -> None:
    meta = {
        "d_in": enc.d_in,
        "d_Z": enc.d_Z,
        "seed": enc.seed,
        "alpha": enc.alpha,
        "momentum": enc.momentum,
        "version": enc.version,
        "residual": [layer.residual for layer in enc.hidden],
        "config_hash": config_hash,
        "trainer": {
            "learning_rate": state.learning_rate,
            "batch_size": state.batch_size,
            "beta1": state.beta1,
            "beta2": state.beta2,
            "adam_eps": state.adam_eps,
            "step": state.step,
            "moments": sorted(state.m),
        },
    }
    arrays = {f"param/{k}": v for k, v in enc.to_arrays().items()}
    arrays.update({f"adam_m/{k}": v for k, v in state.m.items()})
    arrays.update({f"adam_v/{k}": v for k, v in state.v.items()})
    try:
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=np.array(json.dumps(meta)), **arrays)
    except OSError as exc:
        raise ReportError(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path):
    """Returns ``(enc, state, config_hash)``."""
    try:
        data = np.load(path, allow_pickle=False)
    except OSError as exc:
        raise ReportError(f"cannot read checkpoint {path}: {exc}") from exc
    with data:
        meta = json.loads(str(data["__meta__"]))
        p = {k[len("param/"):]: data[k] for k in data.files if k.startswith("param/")}
        hidden = [
            HiddenLayer(
                p[f"h{i}.W"].copy(),
                p[f"h{i}.gamma"].copy(),
                p[f"h{i}.beta"].copy(),
                p[f"h{i}.running_mean"].copy(),
                p[f"h{i}.running_var"].copy(),
                bool(res),
            )
            for i, res in enumerate(meta["residual"])
        ]
        enc = EncoderParams(
            hidden,
            p["out.W"].copy(),
            p["out.b"].copy(),
            int(meta["d_in"]),
            int(meta["d_Z"]),
            int(meta["seed"]),
            float(meta["alpha"]),
            float(meta["momentum"]),
            int(meta["version"]),
        )
        tr = meta["trainer"]
        state = TrainerState(
            tr["learning_rate"], tr["batch_size"], tr["beta1"], tr["beta2"], tr["adam_eps"], tr["step"]
        )
        for name in tr["moments"]:
            state.m[name] = data[f"adam_m/{name}"].copy()
            state.v[name] = data[f"adam_v/{name}"].copy()
    return enc, state, meta["config_hash"]
