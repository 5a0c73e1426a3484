"""Batch extraction: village images and pre-summarized texts to embedding
blobs, using a frozen vision-language checkpoint loaded from a local path.

No summarization happens here; texts must arrive already condensed. Anything
longer than the text encoder's position limit is truncated, never dropped,
and every truncation is logged per item.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .blobs import write_blob

log = logging.getLogger("clip_extract")

IMAGE_ROLES = ("texture", "satellite", "topographic")
SCHEMA_VERSION = 1


class ManifestError(ValueError):
    """Extraction manifest is malformed."""


@dataclass
class VillageEntry:
    village_id: str
    images: dict[str, str | None]   # role -> path or None
    text: str | None
    humanity_texts: dict[str, str]
    blob: str


@dataclass
class ExtractionManifest:
    base_dir: Path
    villages: list[VillageEntry] = field(default_factory=list)


def load_manifest(path: str | Path) -> ExtractionManifest:
    path = Path(path)
    doc = json.loads(path.read_text())
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ManifestError(f"{path}: schema_version must be {SCHEMA_VERSION}")
    manifest = ExtractionManifest(base_dir=path.parent)
    seen: set[str] = set()
    for i, row in enumerate(doc.get("villages", [])):
        where = f"villages[{i}]"
        vid = row.get("village_id")
        if not vid:
            raise ManifestError(f"{where}: missing village_id")
        if vid in seen:
            raise ManifestError(f"{where}: duplicate village_id {vid!r}")
        seen.add(vid)
        images = row.get("images")
        if not isinstance(images, dict) or set(images) != set(IMAGE_ROLES):
            raise ManifestError(
                f"{where}.images: all three roles {IMAGE_ROLES} must be present "
                "(use null for a missing image)"
            )
        if "blob" not in row:
            raise ManifestError(f"{where}: missing output blob path")
        manifest.villages.append(
            VillageEntry(
                village_id=str(vid),
                images={r: (str(p) if p is not None else None) for r, p in images.items()},
                text=row.get("text"),
                humanity_texts={
                    str(k): str(v)
                    for k, v in (row.get("humanity_texts") or {}).items()
                    if v is not None
                },
                blob=str(row["blob"]),
            )
        )
    return manifest


class FrozenEncoder:
    """Wraps a local CLIP-style checkpoint for inference-only use."""

    def __init__(self, checkpoint: str | Path):
        import torch
        from transformers import CLIPModel, CLIPProcessor

        self._torch = torch
        self.model = CLIPModel.from_pretrained(str(checkpoint)).eval()
        self.processor = CLIPProcessor.from_pretrained(str(checkpoint))
        for p in self.model.parameters():
            p.requires_grad_(False)
        self.dim = int(self.model.config.projection_dim)
        self.token_limit = int(self.model.config.text_config.max_position_embeddings)

    def embed_images(self, images) -> np.ndarray:
        batch = self.processor(images=images, return_tensors="pt")
        with self._torch.no_grad():
            out = self.model.vision_model(pixel_values=batch["pixel_values"])
            embeds = self.model.visual_projection(out.pooler_output)
        return embeds.numpy().astype(np.float32)

    def embed_texts(self, texts) -> tuple[np.ndarray, list[bool]]:
        """Embeddings plus a per-item flag: was the text truncated?"""
        tok = self.processor.tokenizer
        untruncated = tok(list(texts))["input_ids"]
        truncated = [len(ids) > self.token_limit for ids in untruncated]
        enc = tok(
            list(texts), return_tensors="pt", padding=True,
            truncation=True, max_length=self.token_limit,
        )
        with self._torch.no_grad():
            out = self.model.text_model(
                input_ids=enc["input_ids"], attention_mask=enc["attention_mask"]
            )
            embeds = self.model.text_projection(out.pooler_output)
        return embeds.numpy().astype(np.float32), truncated


def extract(
    manifest: ExtractionManifest | str | Path,
    checkpoint: str | Path,
    out_dir: str | Path,
) -> dict[str, Any]:
    """Embed every village in manifest order; returns the index document.

    The index maps village/source to the vector's offset inside the blob.
    Per-item failures (undecodable images) are recorded under `errors` and
    leave that village without a blob; the caller decides the exit status.
    """
    from PIL import Image

    if not isinstance(manifest, ExtractionManifest):
        manifest = load_manifest(manifest)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    encoder = FrozenEncoder(checkpoint)

    index: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "checkpoint": str(checkpoint),
        "dim": encoder.dim,
        "villages": {},
        "errors": [],
    }
    for entry in manifest.villages:
        try:
            vectors: list[np.ndarray] = []
            sources: dict[str, int] = {}
            truncated_sources: list[str] = []

            roles, images = [], []
            for role in IMAGE_ROLES:
                rel = entry.images[role]
                if rel is None:
                    continue
                path = manifest.base_dir / rel
                with Image.open(path) as img:
                    images.append(img.convert("RGB"))
                roles.append(role)
            if images:
                for role, vec in zip(roles, encoder.embed_images(images)):
                    sources[f"img_{role}"] = len(vectors)
                    vectors.append(vec)

            text_ids, texts = [], []
            if entry.text is not None:
                text_ids.append("text_intro")
                texts.append(entry.text)
            for name, value in entry.humanity_texts.items():
                text_ids.append(f"hum_{name}")
                texts.append(value)
            if texts:
                embeds, flags = encoder.embed_texts(texts)
                for sid, vec, was_truncated in zip(text_ids, embeds, flags):
                    sources[sid] = len(vectors)
                    vectors.append(vec)
                    if was_truncated:
                        truncated_sources.append(sid)
                        log.warning(
                            "%s/%s: text exceeded the %d-token limit and was truncated",
                            entry.village_id, sid, encoder.token_limit,
                        )

            blob_path = out / entry.blob
            blob_path.parent.mkdir(parents=True, exist_ok=True)
            write_blob(vectors, blob_path)
            index["villages"][entry.village_id] = {
                "blob": entry.blob,
                "sources": sources,
                "truncated": truncated_sources,
            }
        except (OSError, ValueError) as exc:
            log.error("%s: %s", entry.village_id, exc)
            index["errors"].append({"village_id": entry.village_id, "error": str(exc)})

    (out / "index.json").write_text(json.dumps(index, indent=1, sort_keys=True))
    return index
