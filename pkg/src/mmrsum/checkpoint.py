"""Single-file model container: one .npz holding a JSON meta record plus the
abstractor tensors and/or the importance regressor, in separate sections."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from mmrsum.errors import DataError
from mmrsum.neural import AbstractorParams, LstmWeights, Vocabulary
from mmrsum.salience import ImportanceModel

FORMAT_VERSION = 1


@dataclass(frozen=True)
class Bundle:
    abstractor: AbstractorParams | None
    importance: ImportanceModel | None


def save_bundle(
    path: str | Path,
    abstractor: AbstractorParams | None = None,
    importance: ImportanceModel | None = None,
) -> None:
    if abstractor is None and importance is None:
        raise DataError("nothing to save")
    meta: dict = {"version": FORMAT_VERSION}
    arrays: dict[str, np.ndarray] = {}
    if abstractor is not None:
        meta["abstractor"] = {
            "embed_dim": abstractor.embed_dim,
            "hidden_dim": abstractor.hidden_dim,
            "vocab": list(abstractor.vocab.words),
        }
        for name, tensor in abstractor.tensors().items():
            arrays[f"abstractor/{name}"] = tensor.detach().numpy()
    if importance is not None:
        meta["importance"] = {
            "train_loss": importance.train_loss,
            "holdout_mae": importance.holdout_mae,
            "epochs": importance.epochs,
            "seed": importance.seed,
            "loss": importance.loss,
            "bias": importance.bias,
        }
        arrays["importance/weights"] = importance.weights
        arrays["importance/feature_mean"] = importance.feature_mean
        arrays["importance/feature_std"] = importance.feature_std
    arrays["meta"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8
    )
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_bundle(path: str | Path) -> Bundle:
    p = Path(path)
    if not p.exists():
        raise DataError(f"no such checkpoint: {p}")
    try:
        with np.load(p, allow_pickle=False) as data:
            arrays = {k: data[k] for k in data.files}
    except (OSError, ValueError) as exc:
        raise DataError(f"unreadable checkpoint {p}: {exc}") from exc
    if "meta" not in arrays:
        raise DataError(f"checkpoint {p} has no meta record")
    meta = json.loads(bytes(arrays["meta"]).decode("utf-8"))
    if meta.get("version") != FORMAT_VERSION:
        raise DataError(
            f"checkpoint {p} has version {meta.get('version')!r}, expected {FORMAT_VERSION}"
        )

    abstractor = None
    if "abstractor" in meta:
        m = meta["abstractor"]
        vocab = Vocabulary(words=tuple(m["vocab"]))

        def t(name: str) -> torch.Tensor:
            key = f"abstractor/{name}"
            if key not in arrays:
                raise DataError(f"checkpoint {p} is missing tensor {name}")
            return torch.tensor(arrays[key], dtype=torch.float64)

        abstractor = AbstractorParams(
            vocab=vocab,
            embed_dim=int(m["embed_dim"]),
            hidden_dim=int(m["hidden_dim"]),
            embedding=t("embedding"),
            enc_fwd=LstmWeights(t("enc_fwd.W_x"), t("enc_fwd.W_h"), t("enc_fwd.b")),
            enc_bwd=LstmWeights(t("enc_bwd.W_x"), t("enc_bwd.W_h"), t("enc_bwd.b")),
            dec=LstmWeights(t("dec.W_x"), t("dec.W_h"), t("dec.b")),
            attn_v=t("attn_v"),
            attn_W=t("attn_W"),
            attn_b=t("attn_b"),
            out_W1=t("out_W1"),
            out_b1=t("out_b1"),
            out_W2=t("out_W2"),
            out_b2=t("out_b2"),
            switch_w=t("switch_w"),
            switch_b=t("switch_b"),
        )

    importance = None
    if "importance" in meta:
        m = meta["importance"]
        importance = ImportanceModel(
            weights=arrays["importance/weights"],
            bias=float(m["bias"]),
            feature_mean=arrays["importance/feature_mean"],
            feature_std=arrays["importance/feature_std"],
            train_loss=float(m["train_loss"]),
            holdout_mae=float(m["holdout_mae"]),
            epochs=int(m["epochs"]),
            seed=int(m["seed"]),
            loss=str(m["loss"]),
        )

    return Bundle(abstractor=abstractor, importance=importance)
