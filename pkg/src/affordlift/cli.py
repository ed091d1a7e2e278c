"""Command-line surface for the full pipeline.

Subcommands: ingest, retrieve, transfer, lift, infer, visualize, synth,
config.  Machine outputs are JSON on stdout or named files; errors are
JSON on stderr.  Exit codes: 0 ok, 2 validation, 3 retrieval, 4 transfer,
5 lifting, 64 usage.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .errors import DimensionMismatch, PipelineError
from .features import DenseFeatureMap, Embedding, PixelMask, normalize_features
from .formats import (
    load_depth,
    load_embedding,
    load_feature_map,
    load_mask,
    save_depth,
    save_feature_map,
    save_mask,
)
from .geometry import CameraIntrinsics, DepthImage
from .lifting import Affordance3D, GraspCandidate, lift_affordance, select_grasp
from .memory import (
    AffordanceMemory,
    append_entry,
    ingest_custom,
    ingest_hoi,
    ingest_robotic,
    load_memory,
    save_memory,
)
from .retrieval import RetrievalQuery, load_entry_features, retrieve
from .synth import Affine2D, FaceSpec, make_box_scene, make_coordinate_features, make_plane_scene
from .transfer import Affordance2D, transfer_affordance
from .visualize import read_image, render_overlay, write_png

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RETRIEVAL = 3
EXIT_TRANSFER = 4
EXIT_LIFTING = 5
EXIT_USAGE = 64


class _Usage(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that signals usage problems instead of exiting with code 2."""

    def error(self, message):  # noqa: A003 - argparse API
        raise _Usage(f"{self.prog}: {message}\n{self.format_usage()}")


def _dump_json(doc) -> str:
    return json.dumps(doc, indent=2) + "\n"


def _write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _emit(doc, out_path: str | None) -> None:
    text = _dump_json(doc)
    if out_path:
        _write_text(out_path, text)
    else:
        sys.stdout.write(text)


def _error_json(exc: Exception) -> str:
    return _dump_json(
        {
            "error": type(exc).__name__,
            "message": str(exc),
            "stage": getattr(exc, "stage", None),
        }
    )


def _parse_pair(text: str, flag: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise _Usage(f"{flag} expects 'u,v', got {text!r}")
    return float(parts[0]), float(parts[1])


def load_intrinsics(path: str) -> CameraIntrinsics:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return CameraIntrinsics(
        fx=float(doc["fx"]),
        fy=float(doc["fy"]),
        cx=float(doc["cx"]),
        cy=float(doc["cy"]),
        width=int(doc["width"]),
        height=int(doc["height"]),
    )


def save_intrinsics(intrinsics: CameraIntrinsics, path: str) -> None:
    _write_text(
        path,
        _dump_json(
            {
                "fx": intrinsics.fx,
                "fy": intrinsics.fy,
                "cx": intrinsics.cx,
                "cy": intrinsics.cy,
                "width": intrinsics.width,
                "height": intrinsics.height,
            }
        ),
    )


@dataclass
class SceneBundle:
    """Validated target-domain observation loaded from disk."""

    depth: DepthImage
    intrinsics: CameraIntrinsics
    feature_map: DenseFeatureMap  # normalized
    image_embedding: Embedding
    mask: PixelMask | None
    image_path: str | None


def load_scene_bundle(args) -> SceneBundle:
    intrinsics = load_intrinsics(args.intrinsics)
    depth = load_depth(args.depth)
    if (depth.width, depth.height) != (intrinsics.width, intrinsics.height):
        raise DimensionMismatch(
            f"depth {depth.width}x{depth.height} disagrees with intrinsics "
            f"{intrinsics.width}x{intrinsics.height}"
        )
    fmap = load_feature_map(args.feature_map)
    if (fmap.image_width, fmap.image_height) != (intrinsics.width, intrinsics.height):
        raise DimensionMismatch(
            f"feature map's image {fmap.image_width}x{fmap.image_height} disagrees "
            f"with intrinsics {intrinsics.width}x{intrinsics.height}"
        )
    if not fmap.normalized:
        fmap = normalize_features(fmap)
    image_embedding = load_embedding(args.image_emb)
    if image_embedding.kind != "image":
        raise DimensionMismatch("--image-emb must contain an image embedding")
    mask = None
    if getattr(args, "target_mask", None):
        mask = load_mask(args.target_mask)
        if (mask.width, mask.height) != (intrinsics.width, intrinsics.height):
            raise DimensionMismatch(
                f"mask {mask.width}x{mask.height} disagrees with intrinsics "
                f"{intrinsics.width}x{intrinsics.height}"
            )
    return SceneBundle(
        depth=depth,
        intrinsics=intrinsics,
        feature_map=fmap,
        image_embedding=image_embedding,
        mask=mask,
        image_path=getattr(args, "image", None),
    )


def _build_query(args, scene_fmap, scene_mask, image_embedding) -> RetrievalQuery:
    instruction = load_embedding(args.instruction_emb)
    object_name = load_embedding(args.object_emb)
    for flag, emb in (("--instruction-emb", instruction), ("--object-emb", object_name)):
        if emb.kind != "text":
            raise DimensionMismatch(f"{flag} must contain a text embedding")
    return RetrievalQuery(
        instruction_task_embedding=instruction,
        object_name_embedding=object_name,
        target_image_embedding=image_embedding,
        target_feature_map=scene_fmap,
        target_mask=scene_mask,
        fallback_tasks=tuple(args.fallback_task or ()),
    )


def _manifest_path(memory_dir: str) -> str:
    return os.path.join(memory_dir, "memory.json")


def _load_memory_dir(memory_dir: str) -> AffordanceMemory:
    return load_memory(_manifest_path(memory_dir))


# -- subcommand handlers ----------------------------------------------------

def cmd_config(args) -> int:
    if args.action == "init":
        _emit(json.loads(PipelineConfig().to_json()), args.out)
    return EXIT_OK


def cmd_ingest(args) -> int:
    manifest = _manifest_path(args.memory)
    os.makedirs(args.memory, exist_ok=True)
    if os.path.exists(manifest):
        memory = load_memory(manifest)
    else:
        memory = AffordanceMemory(entries=[])

    common = dict(
        entry_id=args.id,
        task_embedding=load_embedding(args.task_emb),
        image_embedding=load_embedding(args.image_emb),
        task_embedding_path=args.task_emb,
        image_embedding_path=args.image_emb,
        feature_map_path=args.feature_map,
        mask_path=args.mask,
    )
    from .formats import peek_feature_map_header

    _, _, _, img_h, img_w = peek_feature_map_header(args.feature_map)

    if args.kind == "custom":
        entry = ingest_custom(
            image_size=(img_w, img_h),
            start=_parse_pair(args.start, "--start"),
            end=_parse_pair(args.end, "--end"),
            n_points=args.n_points,
            image_path=args.image,
            task=args.task,
            object_name=args.object,
            **common,
        )
    elif args.kind == "robotic":
        with open(args.trajectory, "r", encoding="utf-8") as fh:
            traj = json.load(fh)
        entry = ingest_robotic(
            ee_positions=np.asarray(traj["positions"], dtype=np.float64),
            gripper_closed=np.asarray(traj["gripper_closed"], dtype=bool),
            intrinsics=CameraIntrinsics(
                fx=float(traj["intrinsics"]["fx"]),
                fy=float(traj["intrinsics"]["fy"]),
                cx=float(traj["intrinsics"]["cx"]),
                cy=float(traj["intrinsics"]["cy"]),
                width=int(traj["intrinsics"]["width"]),
                height=int(traj["intrinsics"]["height"]),
            ),
            extrinsics=np.asarray(traj["extrinsics"], dtype=np.float64),
            image_path=args.image,
            task=args.task,
            object_name=args.object,
            **common,
        )
    else:  # hoi
        with open(args.keypoints, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        frames = [np.asarray(f, dtype=np.float64) for f in doc["frames"]]
        entry = ingest_hoi(
            frames=frames,
            object_mask=load_mask(args.object_mask),
            image_path=args.image,
            task=args.task,
            object_name=args.object,
            **common,
        )

    memory = append_entry(memory, entry)
    save_memory(memory, manifest)  # atomic: temp file + rename
    sys.stdout.write(_dump_json({"added": entry.id, "entries": len(memory)}))
    return EXIT_OK


def cmd_retrieve(args) -> int:
    config = PipelineConfig.load(args.config)
    memory = _load_memory_dir(args.memory)
    fmap = load_feature_map(args.feature_map)
    if not fmap.normalized:
        fmap = normalize_features(fmap)
    mask = load_mask(args.target_mask) if args.target_mask else None
    image_embedding = load_embedding(args.image_emb)
    query = _build_query(args, fmap, mask, image_embedding)
    result = retrieve(
        query,
        memory,
        top_k_tasks=config.task_top_k,
        semantic_threshold=config.semantic_threshold,
        task_warn_distance=config.task_warn_distance,
    )
    _emit(result.to_report(), args.out)
    return EXIT_OK


def cmd_transfer(args) -> int:
    config = PipelineConfig.load(args.config)
    memory = _load_memory_dir(args.memory)
    try:
        entry = memory.get(args.entry_id)
    except KeyError:
        raise PipelineError(f"memory has no entry {args.entry_id!r}") from None
    source_map, _ = load_entry_features(entry)
    target_map = load_feature_map(args.feature_map)
    if not target_map.normalized:
        target_map = normalize_features(target_map)
    mask = load_mask(args.target_mask) if args.target_mask else None
    a2d = transfer_affordance(
        entry, source_map, target_map, mask, params=config.transfer_params()
    )
    _emit(a2d.to_json_dict(), args.out)
    return EXIT_OK


def _load_grasps(path: str) -> list[GraspCandidate]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return [
        GraspCandidate(
            position=np.asarray(g["position"], dtype=np.float64),
            quaternion=np.asarray(g["quaternion"], dtype=np.float64),
            score=float(g.get("score", 0.0)),
        )
        for g in doc
    ]


def _grasp_json(grasp: GraspCandidate) -> dict:
    return {
        "position": [float(x) for x in grasp.position],
        "quaternion": [float(x) for x in grasp.quaternion],
        "score": grasp.score,
    }


def cmd_lift(args) -> int:
    config = PipelineConfig.load(args.config)
    with open(args.affordance, "r", encoding="utf-8") as fh:
        a2d = Affordance2D.from_json_dict(json.load(fh))
    depth = load_depth(args.depth)
    intrinsics = load_intrinsics(args.intrinsics)
    a3d = lift_affordance(
        a2d, depth, intrinsics, params=config.lift_params(), seed=config.kmeans_seed
    )
    if args.grasps:
        grasp = select_grasp(_load_grasps(args.grasps), a3d.contact)
        _emit({"affordance": a3d.to_json_dict(), "grasp": _grasp_json(grasp)}, args.out)
    else:
        _emit(a3d.to_json_dict(), args.out)
    return EXIT_OK


def cmd_visualize(args) -> int:
    image = read_image(args.image)
    with open(args.affordance, "r", encoding="utf-8") as fh:
        a2d = Affordance2D.from_json_dict(json.load(fh))
    overlay = render_overlay(image, a2d, arrow_length=args.arrow_length)
    write_png(args.out, overlay)
    return EXIT_OK


def cmd_infer(args) -> int:
    config = PipelineConfig.load(args.config)
    scene = load_scene_bundle(args)
    memory = _load_memory_dir(args.memory)
    query = _build_query(args, scene.feature_map, scene.mask, scene.image_embedding)
    os.makedirs(args.out_dir, exist_ok=True)

    try:
        result = retrieve(
            query,
            memory,
            top_k_tasks=config.task_top_k,
            semantic_threshold=config.semantic_threshold,
            task_warn_distance=config.task_warn_distance,
        )
    except PipelineError as exc:
        sys.stderr.write(_error_json(exc))
        return EXIT_RETRIEVAL
    _write_text(os.path.join(args.out_dir, "report.json"), _dump_json(result.to_report()))

    try:
        entry = memory.get(result.entry_id)
        source_map, _ = load_entry_features(entry)
        a2d = transfer_affordance(
            entry, source_map, scene.feature_map, scene.mask,
            params=config.transfer_params(),
        )
    except PipelineError as exc:
        sys.stderr.write(_error_json(exc))
        return EXIT_TRANSFER
    _write_text(
        os.path.join(args.out_dir, "affordance_2d.json"), _dump_json(a2d.to_json_dict())
    )

    try:
        a3d = lift_affordance(
            a2d, scene.depth, scene.intrinsics,
            params=config.lift_params(), seed=config.kmeans_seed,
        )
        grasp = None
        if args.grasps:
            grasp = select_grasp(_load_grasps(args.grasps), a3d.contact)
    except PipelineError as exc:
        sys.stderr.write(_error_json(exc))
        return EXIT_LIFTING
    _write_text(
        os.path.join(args.out_dir, "affordance_3d.json"), _dump_json(a3d.to_json_dict())
    )
    if grasp is not None:
        _write_text(os.path.join(args.out_dir, "grasp.json"), _dump_json(_grasp_json(grasp)))

    if scene.image_path:
        overlay = render_overlay(read_image(scene.image_path), a2d)
        write_png(os.path.join(args.out_dir, "overlay.png"), overlay)

    sys.stdout.write(_dump_json({"out_dir": args.out_dir, "entry_id": result.entry_id}))
    return EXIT_OK


def _parse_vec3(text: str, flag: str) -> np.ndarray:
    parts = text.split(",")
    if len(parts) != 3:
        raise _Usage(f"{flag} expects 'x,y,z', got {text!r}")
    return np.asarray([float(p) for p in parts], dtype=np.float64)


def cmd_synth(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    if args.what == "plane":
        intrinsics = load_intrinsics(args.intrinsics)
        scene = make_plane_scene(
            normal=_parse_vec3(args.normal, "--normal"),
            distance=args.distance,
            intrinsics=intrinsics,
            noise=args.noise,
            seed=args.seed,
        )
    elif args.what == "box":
        intrinsics = load_intrinsics(args.intrinsics)
        with open(args.spec, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        faces = [
            FaceSpec(
                name=f["name"],
                normal=np.asarray(f["normal"], dtype=np.float64),
                distance=float(f["distance"]),
                rect=tuple(int(x) for x in f["rect"]),
            )
            for f in doc["faces"]
        ]
        scene = make_box_scene(
            faces,
            intrinsics,
            noise=float(doc.get("noise", args.noise)),
            seed=int(doc.get("seed", args.seed)),
            handle_face=doc.get("handle_face"),
        )
    else:  # features
        source, target = make_coordinate_features(
            grid_h=args.grid_h,
            grid_w=args.grid_w,
            channels=args.channels,
            warp=Affine2D(np.asarray([float(x) for x in args.warp.split(",")]).reshape(2, 3)),
            seed=args.seed,
        )
        save_feature_map(source, os.path.join(args.out_dir, "source.dfm"))
        save_feature_map(target, os.path.join(args.out_dir, "target.dfm"))
        sys.stdout.write(_dump_json({"out_dir": args.out_dir}))
        return EXIT_OK

    save_depth(scene.depth, os.path.join(args.out_dir, "depth.dpt"))
    save_intrinsics(scene.intrinsics, os.path.join(args.out_dir, "intrinsics.json"))
    normals = DenseFeatureMap(
        data=scene.analytic_normals.astype(np.float32),
        image_height=scene.depth.height,
        image_width=scene.depth.width,
    )
    save_feature_map(normals, os.path.join(args.out_dir, "normals.dfm"))
    for name, mask in scene.face_masks.items():
        save_mask(mask, os.path.join(args.out_dir, f"{name}.msk"))
    gt = {k: np.asarray(v).tolist() for k, v in scene.ground_truth.items()}
    _write_text(os.path.join(args.out_dir, "ground_truth.json"), _dump_json(gt))
    sys.stdout.write(_dump_json({"out_dir": args.out_dir}))
    return EXIT_OK


# -- parser wiring -------------------------------------------------------------

def _add_query_flags(p: _Parser) -> None:
    p.add_argument("--instruction-emb", required=True)
    p.add_argument("--object-emb", required=True)
    p.add_argument("--fallback-task", action="append")


def _add_target_flags(p: _Parser) -> None:
    p.add_argument("--feature-map", required=True)
    p.add_argument("--target-mask")
    p.add_argument("--image-emb", required=True)


def build_parser() -> _Parser:
    parser = _Parser(prog="affordlift", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("config", help="emit configuration defaults")
    p.add_argument("action", choices=["init"])
    p.add_argument("--out")
    p.set_defaults(func=cmd_config)

    p = sub.add_parser("ingest", help="add a demonstration to the memory")
    p.add_argument("kind", choices=["robotic", "hoi", "custom"])
    p.add_argument("--memory", required=True)
    p.add_argument("--id", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--task", required=True)
    p.add_argument("--object", required=True)
    p.add_argument("--task-emb", required=True)
    p.add_argument("--image-emb", required=True)
    p.add_argument("--feature-map", required=True)
    p.add_argument("--mask")
    p.add_argument("--start", help="custom: 'u,v'")
    p.add_argument("--end", help="custom: 'u,v'")
    p.add_argument("--n-points", type=int, default=8, help="custom: waypoint count")
    p.add_argument("--trajectory", help="robotic: trajectory JSON path")
    p.add_argument("--keypoints", help="hoi: per-frame keypoints JSON path")
    p.add_argument("--object-mask", help="hoi: object mask .msk path")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("retrieve", help="run hierarchical retrieval, print report")
    p.add_argument("--memory", required=True)
    _add_target_flags(p)
    _add_query_flags(p)
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("transfer", help="transfer one entry's waypoints to a target")
    p.add_argument("--memory", required=True)
    p.add_argument("--entry-id", required=True)
    _add_target_flags(p)
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("lift", help="lift a 2D affordance to 3D")
    p.add_argument("--affordance", required=True, help="Affordance2D JSON path")
    p.add_argument("--depth", required=True)
    p.add_argument("--intrinsics", required=True)
    p.add_argument("--grasps", help="grasp candidates JSON path")
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_lift)

    p = sub.add_parser("infer", help="full pipeline: retrieve, transfer, lift")
    p.add_argument("--memory", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--depth", required=True)
    p.add_argument("--intrinsics", required=True)
    _add_target_flags(p)
    _add_query_flags(p)
    p.add_argument("--grasps")
    p.add_argument("--config")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("visualize", help="render a 2D affordance overlay PNG")
    p.add_argument("--image", required=True)
    p.add_argument("--affordance", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--arrow-length", type=float, default=40.0)
    p.set_defaults(func=cmd_visualize)

    p = sub.add_parser("synth", help="generate synthetic fixtures on disk")
    p.add_argument("what", choices=["plane", "box", "features"])
    p.add_argument("--out-dir", required=True)
    p.add_argument("--intrinsics", help="plane/box: intrinsics JSON path")
    p.add_argument("--normal", help="plane: 'x,y,z'")
    p.add_argument("--distance", type=float, help="plane: meters")
    p.add_argument("--spec", help="box: faces JSON path")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid-h", type=int, default=32, help="features: grid height")
    p.add_argument("--grid-w", type=int, default=32, help="features: grid width")
    p.add_argument("--channels", type=int, default=8, help="features: channels")
    p.add_argument(
        "--warp",
        default="1,0,0,0,1,0",
        help="features: affine 'a,b,tx,c,d,ty' (row-major 2x3)",
    )
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _Usage as exc:
        sys.stderr.write(str(exc) + "\n")
        return EXIT_USAGE
    try:
        return args.func(args)
    except PipelineError as exc:
        sys.stderr.write(_error_json(exc))
        return EXIT_VALIDATION
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        sys.stderr.write(_error_json(exc))
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
