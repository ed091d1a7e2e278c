"""CLI: `extract features|embed` — run a backbone, write .dfm/.emb files."""

from __future__ import annotations

import argparse
import json
import sys

from .backends import ModelLoadError
from .config import ExtractorConfig
from .extract import extract_embeddings, extract_feature_map


def _config_from_args(args) -> ExtractorConfig:
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            config = ExtractorConfig.from_json(fh.read())
    else:
        config = ExtractorConfig()
    for name, attr in (
        ("model", "model"),
        ("weights", "weights"),
        ("layer", "layer"),
        ("time_step", "time_step"),
        ("noise_seed", "noise_seed"),
        ("input_size", "input_size"),
        ("resolution", "resolution"),
        ("prompt", "prompt"),
    ):
        value = getattr(args, attr, None)
        if value is not None:
            setattr(config, name, value)
    return ExtractorConfig(**vars(config))  # re-validate


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", required=True)
    p.add_argument("--model", choices=["dinov2", "clip", "sd-dift", "sd-dinov2"])
    p.add_argument("--weights", help="'random:<seed>' or a checkpoint path / hub id")
    p.add_argument("--config", help="ExtractorConfig JSON path")
    p.add_argument("--layer", type=int)
    p.add_argument("--time-step", dest="time_step", type=int)
    p.add_argument("--noise-seed", dest="noise_seed", type=int)
    p.add_argument("--input-size", dest="input_size", type=int)
    p.add_argument("--resolution")
    p.add_argument("--prompt")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="extract", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("features", help="write a dense feature map (.dfm)")
    p.add_argument("--image", required=True)
    _add_common(p)

    p = sub.add_parser("embed", help="write a CLIP embedding (.emb)")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--image")
    src.add_argument("--text")
    _add_common(p)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _config_from_args(args)
        if args.command == "features":
            meta = extract_feature_map(args.image, config, args.out)
        else:
            if args.text is not None:
                meta = extract_embeddings(args.text, "text", config, args.out)
            else:
                meta = extract_embeddings(args.image, "image", config, args.out)
    except (ModelLoadError, OSError, ValueError) as exc:
        sys.stderr.write(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n"
        )
        return 2
    sys.stdout.write(json.dumps(meta, indent=2) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
