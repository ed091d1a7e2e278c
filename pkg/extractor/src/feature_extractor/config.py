"""Extractor configuration."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

MODELS = ("dinov2", "clip", "sd-dift", "sd-dinov2")


@dataclass
class ExtractorConfig:
    """What to run and how.

    weights accepts "random:<seed>" (deterministically initialized
    architecture, no downloads; for hermetic runs and tests) or a local
    checkpoint directory / hub id for pretrained extraction.
    """

    model: str = "dinov2"
    weights: str = "random:0"
    layer: int | None = None  # transformer block to read; None = model default
    time_step: int = 261  # diffusion noising step (sd-dift)
    noise_seed: int = 0  # diffusion noise rng seed (sd-dift)
    input_size: int | None = None  # model input resolution; None = backbone default
    resolution: str = "native"  # output grid: "native" or "<rows>x<cols>"
    prompt: str = ""  # sd-dift conditioning text (pretrained mode only)

    def __post_init__(self) -> None:
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.time_step < 0:
            raise ValueError("time_step must be >= 0")
        self.output_grid()  # validates resolution syntax

    def random_seed(self) -> int | None:
        """Init seed when weights are random:<seed>, else None (pretrained)."""
        if self.weights.startswith("random:"):
            return int(self.weights.split(":", 1)[1])
        return None

    def output_grid(self) -> tuple[int, int] | None:
        if self.resolution == "native":
            return None
        try:
            rows, cols = self.resolution.lower().split("x")
            return int(rows), int(cols)
        except ValueError:
            raise ValueError(
                f"resolution must be 'native' or '<rows>x<cols>', got {self.resolution!r}"
            ) from None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExtractorConfig":
        doc = json.loads(text)
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)
