"""Shared fixtures: a tiny random-weight vision-language checkpoint saved
locally (no downloads), plus a small image/text manifest to extract."""

import json

import numpy as np
import pytest


@pytest.fixture(scope="session")
def checkpoint(tmp_path_factory):
    import torch
    from transformers import (
        CLIPConfig,
        CLIPImageProcessor,
        CLIPModel,
        CLIPProcessor,
        CLIPTokenizer,
    )

    path = tmp_path_factory.mktemp("tiny_clip")
    chars = list("abcdefghijklmnopqrstuvwxyz0123456789.,-")
    vocab = {"<|startoftext|>": 0, "<|endoftext|>": 1}
    for c in chars:
        vocab[c] = len(vocab)
        vocab[c + "</w>"] = len(vocab)
    (path / "vocab.json").write_text(json.dumps(vocab))
    (path / "merges.txt").write_text("#version: 0.2\n")
    tokenizer = CLIPTokenizer(str(path / "vocab.json"), str(path / "merges.txt"),
                              model_max_length=32)
    config = CLIPConfig(
        projection_dim=512,
        text_config={
            "hidden_size": 32, "intermediate_size": 37, "num_attention_heads": 4,
            "num_hidden_layers": 2, "max_position_embeddings": 32,
            "vocab_size": len(vocab), "bos_token_id": 0, "eos_token_id": 1,
        },
        vision_config={
            "hidden_size": 32, "intermediate_size": 37, "num_attention_heads": 4,
            "num_hidden_layers": 2, "image_size": 30, "patch_size": 15,
        },
    )
    torch.manual_seed(1234)
    model = CLIPModel(config).eval()
    processor = CLIPProcessor(
        image_processor=CLIPImageProcessor(size={"shortest_edge": 30},
                                           crop_size={"height": 30, "width": 30}),
        tokenizer=tokenizer,
    )
    model.save_pretrained(path)
    processor.save_pretrained(path)
    return path


@pytest.fixture(scope="session")
def workspace(tmp_path_factory):
    """Manifest directory with generated images and texts for two villages."""
    from PIL import Image

    base = tmp_path_factory.mktemp("villages")
    (base / "imgs").mkdir()
    rng = np.random.default_rng(0)
    for name in ("v1_texture", "v1_satellite", "v2_texture", "v2_satellite", "v2_topo"):
        arr = rng.uniform(0, 255, size=(40, 40, 3)).astype("uint8")
        Image.fromarray(arr).save(base / "imgs" / f"{name}.png")

    long_text = "settlement " * 120  # far beyond the 32-token test limit
    manifest = {
        "schema_version": 1,
        "villages": [
            {
                "village_id": "v1",
                "images": {
                    "texture": "imgs/v1_texture.png",
                    "satellite": "imgs/v1_satellite.png",
                    "topographic": None,
                },
                "text": "an old village by the river",
                "humanity_texts": {"folklore": "a short legend", "clan": None},
                "blob": "v1.emb",
            },
            {
                "village_id": "v2",
                "images": {
                    "texture": "imgs/v2_texture.png",
                    "satellite": "imgs/v2_satellite.png",
                    "topographic": "imgs/v2_topo.png",
                },
                "text": long_text,
                "blob": "v2.emb",
            },
        ],
    }
    (base / "manifest.json").write_text(json.dumps(manifest))
    return base
