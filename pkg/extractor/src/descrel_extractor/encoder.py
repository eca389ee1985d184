"""Frozen image-text encoder behind a plain-numpy interface.

Wraps a CLIP checkpoint (loaded with `transformers`) and exposes exactly the
three things the downstream engine consumes:

- per-region token features: every token of the final vision block, mapped
  through the post-layernorm and the visual projection so the CLS row and
  the patch rows live in the same joint embedding space. The CLS row equals
  the library's own pooled image feature; the patch rows apply the identical
  per-token mapping to the remaining tokens.
- text embeddings from the text tower's projection, L2-normalized by
  default.
- the geometry of the model: patch count per region and joint embedding
  width, both read off the checkpoint config.

Everything runs under inference mode in float32. With `deterministic=True`
(the default) torch is pinned to one thread so repeated runs over the same
inputs produce bit-identical floats.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from transformers import CLIPModel, CLIPProcessor
from transformers.utils import logging as hf_logging

from .errors import ExtractionError

SUBJECT_PROMPT = "a photo of subject"
OBJECT_PROMPT = "a photo of object"


def _batches(items, size: int):
    for start in range(0, len(items), size):
        yield items[start:start + size]


@dataclass
class ClipEncoder:
    """A loaded CLIP checkpoint plus its preprocessing pipeline."""
    model: CLIPModel
    processor: CLIPProcessor
    model_id: str
    device: str = "cpu"
    patch_count: int = field(init=False)
    embedding_dim: int = field(init=False)

    def __post_init__(self):
        vision = self.model.config.vision_config
        side = vision.image_size // vision.patch_size
        self.patch_count = side * side
        self.embedding_dim = int(self.model.config.projection_dim)

    @classmethod
    def from_checkpoint(cls, model_id: str | Path, device: str = "cpu",
                        deterministic: bool = True) -> "ClipEncoder":
        if deterministic:
            torch.set_num_threads(1)
        hf_logging.disable_progress_bar()
        try:
            model = CLIPModel.from_pretrained(model_id)
            processor = CLIPProcessor.from_pretrained(model_id)
        except (OSError, ValueError, EnvironmentError) as exc:
            raise ExtractionError(
                f"cannot load checkpoint {model_id}: {exc}") from exc
        model = model.to(device).eval()
        for p in model.parameters():
            p.requires_grad_(False)
        return cls(model=model, processor=processor, model_id=str(model_id),
                   device=device)

    def encode_regions(self, images, batch_size: int = 16
                       ) -> tuple[np.ndarray, np.ndarray]:
        """Encode region crops to (cls (B, D), patches (B, M, D)) float32."""
        cls_rows, patch_rows = [], []
        with torch.inference_mode():
            for chunk in _batches(list(images), batch_size):
                pixels = self.processor(
                    images=chunk, return_tensors="pt")["pixel_values"]
                out = self.model.vision_model(
                    pixel_values=pixels.to(self.device))
                tokens = self.model.vision_model.post_layernorm(
                    out.last_hidden_state)
                projected = self.model.visual_projection(tokens)
                cls_rows.append(projected[:, 0].cpu().numpy())
                patch_rows.append(projected[:, 1:].cpu().numpy())
        cls = np.concatenate(cls_rows).astype(np.float32, copy=False)
        patches = np.concatenate(patch_rows).astype(np.float32, copy=False)
        if patches.shape[1] != self.patch_count:
            raise ExtractionError(
                f"model emitted {patches.shape[1]} patch tokens, expected "
                f"{self.patch_count} from its config")
        return cls, patches

    def encode_texts(self, texts, batch_size: int = 64,
                     normalize: bool = True) -> np.ndarray:
        """Encode texts to (B, D) float32, unit rows unless normalize=False."""
        rows = []
        with torch.inference_mode():
            for chunk in _batches(list(texts), batch_size):
                enc = self.processor(text=chunk, padding=True,
                                     return_tensors="pt")
                out = self.model.text_model(
                    input_ids=enc["input_ids"].to(self.device),
                    attention_mask=enc["attention_mask"].to(self.device))
                emb = self.model.text_projection(out.pooler_output)
                if normalize:
                    emb = emb / emb.norm(dim=-1, keepdim=True)
                rows.append(emb.cpu().numpy())
        return np.concatenate(rows).astype(np.float32, copy=False)
