"""Model construction and dense-feature extraction per backbone.

Every backend supports two weight sources: "random:<seed>" builds the real
architecture at a small deterministic configuration (no downloads; suitable
for hermetic pipelines and tests), while any other string is treated as a
local checkpoint directory or hub id for pretrained extraction.  Extraction
semantics are identical in both modes.
"""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import ExtractorConfig


class ModelLoadError(RuntimeError):
    """A backbone or its weights could not be constructed/loaded."""


# ImageNet statistics (DINOv2 preprocessing) and CLIP's own statistics.
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
CLIP_MEAN = (0.48145466, 0.4578275, 0.40821073)
CLIP_STD = (0.26862954, 0.26130258, 0.27577711)


def image_to_tensor(image, size: int, mean, std) -> torch.Tensor:
    """Resize to (size, size), scale to [0, 1], normalize channel-wise."""
    from PIL import Image

    resized = image.resize((size, size), Image.BILINEAR)
    arr = np.asarray(resized, dtype=np.float32) / 255.0
    arr = (arr - np.asarray(mean, np.float32)) / np.asarray(std, np.float32)
    return torch.from_numpy(arr).permute(2, 0, 1).unsqueeze(0)


def _patch_grid(tokens: torch.Tensor, grid: int) -> np.ndarray:
    """(1, N, C) patch tokens -> (grid, grid, C) float32 array."""
    feats = tokens.reshape(grid, grid, -1)
    return feats.detach().cpu().numpy().astype(np.float32)


# -- DINOv2 --------------------------------------------------------------------

class Dinov2Backend:
    default_input = 518
    patch_size = 14

    def __init__(self, config: ExtractorConfig):
        from transformers import Dinov2Config, Dinov2Model

        seed = config.random_seed()
        try:
            if seed is None:
                self.model = Dinov2Model.from_pretrained(config.weights)
            else:
                torch.manual_seed(seed)
                self.default_input = 112
                self.model = Dinov2Model(
                    Dinov2Config(
                        hidden_size=64,
                        num_hidden_layers=4,
                        num_attention_heads=4,
                        intermediate_size=128,
                        image_size=self.default_input,
                        patch_size=self.patch_size,
                    )
                )
        except ModelLoadError:
            raise
        except Exception as exc:
            raise ModelLoadError(f"cannot load dinov2 weights {config.weights!r}: {exc}") from exc
        self.model.eval()
        self.num_layers = self.model.config.num_hidden_layers
        self.patch_size = self.model.config.patch_size

    def default_layer(self) -> int:
        # penultimate block: the usual dense-feature tap for DINO-family ViTs
        return self.num_layers - 1

    def extract(self, image, config: ExtractorConfig) -> tuple[np.ndarray, dict]:
        size = config.input_size or self.default_input
        size = (size // self.patch_size) * self.patch_size
        grid = size // self.patch_size
        layer = min(config.layer if config.layer is not None else self.default_layer(),
                    self.num_layers)
        x = image_to_tensor(image, size, IMAGENET_MEAN, IMAGENET_STD)
        with torch.no_grad():
            out = self.model(x, output_hidden_states=True)
        tokens = out.hidden_states[layer][:, 1:, :]  # drop the class token
        return _patch_grid(tokens, grid), {"layer": layer, "input_size": size}


# -- CLIP ------------------------------------------------------------------------

class ByteTokenizer:
    """Minimal deterministic tokenizer for randomly-initialized text towers."""

    pad_id, bos_id, eos_id = 0, 1, 2
    vocab_size = 259  # 3 specials + 256 byte values
    max_len = 77

    def __call__(self, text: str) -> dict:
        body = [3 + b for b in text.encode("utf-8")][: self.max_len - 2]
        ids = [self.bos_id, *body, self.eos_id]
        mask = [1] * len(ids)
        pad = self.max_len - len(ids)
        return {
            "input_ids": torch.tensor([ids + [self.pad_id] * pad]),
            "attention_mask": torch.tensor([mask + [0] * pad]),
        }


class ClipBackend:
    default_input = 224

    def __init__(self, config: ExtractorConfig):
        from transformers import CLIPConfig, CLIPModel, CLIPTextConfig, CLIPVisionConfig

        seed = config.random_seed()
        try:
            if seed is None:
                from transformers import AutoTokenizer

                self.model = CLIPModel.from_pretrained(config.weights)
                self.tokenizer = AutoTokenizer.from_pretrained(config.weights)
            else:
                torch.manual_seed(seed)
                self.default_input = 96
                text_cfg = CLIPTextConfig(
                    vocab_size=ByteTokenizer.vocab_size,
                    hidden_size=32,
                    num_hidden_layers=2,
                    num_attention_heads=2,
                    intermediate_size=64,
                    max_position_embeddings=ByteTokenizer.max_len,
                    bos_token_id=ByteTokenizer.bos_id,
                    eos_token_id=ByteTokenizer.eos_id,
                    pad_token_id=ByteTokenizer.pad_id,
                )
                vision_cfg = CLIPVisionConfig(
                    hidden_size=64,
                    num_hidden_layers=4,
                    num_attention_heads=4,
                    intermediate_size=128,
                    image_size=self.default_input,
                    patch_size=16,
                )
                self.model = CLIPModel(
                    CLIPConfig(
                        text_config=text_cfg.to_dict(),
                        vision_config=vision_cfg.to_dict(),
                        projection_dim=32,
                    )
                )
                self.tokenizer = ByteTokenizer()
        except ModelLoadError:
            raise
        except Exception as exc:
            raise ModelLoadError(f"cannot load clip weights {config.weights!r}: {exc}") from exc
        self.model.eval()
        vis = self.model.config.vision_config
        self.num_layers = vis.num_hidden_layers
        self.patch_size = vis.patch_size

    def default_layer(self) -> int:
        return self.num_layers - 1

    def extract(self, image, config: ExtractorConfig) -> tuple[np.ndarray, dict]:
        size = config.input_size or self.default_input
        size = (size // self.patch_size) * self.patch_size
        grid = size // self.patch_size
        layer = min(config.layer if config.layer is not None else self.default_layer(),
                    self.num_layers)
        x = image_to_tensor(image, size, CLIP_MEAN, CLIP_STD)
        with torch.no_grad():
            out = self.model.vision_model(x, output_hidden_states=True)
        tokens = out.hidden_states[layer][:, 1:, :]
        return _patch_grid(tokens, grid), {"layer": layer, "input_size": size}

    @staticmethod
    def _projected(features) -> torch.Tensor:
        # transformers >= 5 returns an output object whose pooler_output is
        # the projected embedding; earlier versions return the tensor itself
        if isinstance(features, torch.Tensor):
            return features
        return features.pooler_output

    def embed_image(self, image, config: ExtractorConfig) -> np.ndarray:
        size = self.default_input
        x = image_to_tensor(image, size, CLIP_MEAN, CLIP_STD)
        with torch.no_grad():
            feats = self._projected(self.model.get_image_features(pixel_values=x))
        return feats[0].cpu().numpy().astype(np.float32)

    def embed_text(self, text: str, config: ExtractorConfig) -> np.ndarray:
        if isinstance(self.tokenizer, ByteTokenizer):
            batch = self.tokenizer(text)
        else:
            batch = self.tokenizer(
                [text], padding="max_length", truncation=True, return_tensors="pt"
            )
        with torch.no_grad():
            feats = self._projected(
                self.model.get_text_features(
                    input_ids=batch["input_ids"], attention_mask=batch["attention_mask"]
                )
            )
        return feats[0].cpu().numpy().astype(np.float32)


# -- denoising U-Net (diffusion features) -----------------------------------------

class _ResBlock(nn.Module):
    def __init__(self, channels: int, time_dim: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(8, channels)
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.emb = nn.Linear(time_dim, channels)
        self.norm2 = nn.GroupNorm(8, channels)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x, t_emb):
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.emb(t_emb)[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return x + h


class MiniDiffusionNet(nn.Module):
    """Compact latent-space denoising U-Net exposing decoder activations.

    Stands in for a full latent-diffusion stack when the diffusers package
    (or its weights) is unavailable: a stride-4 latent encoder, a two-level
    U-Net with sinusoidal timestep conditioning, and taps on the up path.
    """

    def __init__(self, width: int = 32, time_dim: int = 64):
        super().__init__()
        self.time_dim = time_dim
        self.latent = nn.Sequential(
            nn.Conv2d(3, width, 3, stride=2, padding=1),
            nn.SiLU(),
            nn.Conv2d(width, 4, 3, stride=2, padding=1),
        )
        self.time_mlp = nn.Sequential(
            nn.Linear(time_dim, time_dim), nn.SiLU(), nn.Linear(time_dim, time_dim)
        )
        self.stem = nn.Conv2d(4, width, 3, padding=1)
        self.down1 = nn.Conv2d(width, width * 2, 3, stride=2, padding=1)
        self.res_d1 = _ResBlock(width * 2, time_dim)
        self.down2 = nn.Conv2d(width * 2, width * 4, 3, stride=2, padding=1)
        self.res_mid = _ResBlock(width * 4, time_dim)
        self.up1 = nn.ConvTranspose2d(width * 4, width * 2, 4, stride=2, padding=1)
        self.res_u1 = _ResBlock(width * 2, time_dim)
        self.up2 = nn.ConvTranspose2d(width * 2, width, 4, stride=2, padding=1)
        self.res_u2 = _ResBlock(width, time_dim)

    def _timestep_embedding(self, t: torch.Tensor) -> torch.Tensor:
        half = self.time_dim // 2
        freqs = torch.exp(
            -math.log(10_000.0) * torch.arange(half, dtype=torch.float32) / half
        )
        args = t.float()[:, None] * freqs[None, :]
        return torch.cat([torch.sin(args), torch.cos(args)], dim=1)

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        return self.latent(x)

    def forward(self, z: torch.Tensor, t: torch.Tensor) -> dict[str, torch.Tensor]:
        t_emb = self.time_mlp(self._timestep_embedding(t))
        h0 = self.stem(z)
        h1 = self.res_d1(self.down1(h0), t_emb)
        h2 = self.res_mid(self.down2(h1), t_emb)
        u1 = self.res_u1(self.up1(h2) + h1, t_emb)
        u2 = self.res_u2(self.up2(u1) + h0, t_emb)
        return {"up1": u1, "up2": u2}


# DDPM linear schedule (1000 steps): alpha_bar for the noising q(x_t | x_0)
_BETAS = np.linspace(1e-4, 0.02, 1000, dtype=np.float64)
_ALPHA_BARS = np.cumprod(1.0 - _BETAS)


class SdDiftBackend:
    default_input = 96

    def __init__(self, config: ExtractorConfig):
        seed = config.random_seed()
        if seed is None:
            try:
                import diffusers  # noqa: F401  - optional pretrained path
            except ImportError as exc:
                raise ModelLoadError(
                    "pretrained sd-dift extraction needs the diffusers package; "
                    "use weights 'random:<seed>' for the built-in architecture"
                ) from exc
            raise ModelLoadError(
                "pretrained sd-dift weights are not wired up in this build; "
                "use weights 'random:<seed>'"
            )
        torch.manual_seed(seed)
        self.model = MiniDiffusionNet()
        self.model.eval()

    def default_layer(self) -> int:
        return 1  # the first up block, the usual diffusion-feature tap

    def extract(self, image, config: ExtractorConfig) -> tuple[np.ndarray, dict]:
        size = config.input_size or self.default_input
        size = (size // 16) * 16  # two stride-2 stages each in encoder and U-Net
        x = image_to_tensor(image, size, (0.5, 0.5, 0.5), (0.5, 0.5, 0.5))
        t = min(config.time_step, len(_ALPHA_BARS) - 1)
        alpha_bar = float(_ALPHA_BARS[t])
        with torch.no_grad():
            z0 = self.model.encode(x)
            gen = torch.Generator().manual_seed(config.noise_seed)
            noise = torch.randn(z0.shape, generator=gen)
            zt = math.sqrt(alpha_bar) * z0 + math.sqrt(1.0 - alpha_bar) * noise
            taps = self.model(zt, torch.tensor([t]))
        layer = config.layer if config.layer is not None else self.default_layer()
        tap = "up1" if layer <= 1 else "up2"
        feats = taps[tap][0].permute(1, 2, 0).cpu().numpy().astype(np.float32)
        return feats, {"layer": layer, "tap": tap, "input_size": size,
                       "time_step": t, "noise_seed": config.noise_seed}


def build_backend(config: ExtractorConfig):
    if config.model == "dinov2":
        return Dinov2Backend(config)
    if config.model == "clip":
        return ClipBackend(config)
    if config.model == "sd-dift":
        return SdDiftBackend(config)
    raise ValueError(f"no single backend for {config.model!r}")
