#!/usr/bin/env python3
"""Run the full pipeline on the demo workspace and check it against ground truth.

Usage:
    python3 scripts/make_demo_fixtures.py
    python3 scripts/run_demo.py [--root demo]
"""

import argparse
import json
import os

import numpy as np

from affordlift.cli import main as cli_main


def run(root: str) -> int:
    scene = os.path.join(root, "scene")
    out_dir = os.path.join(root, "out")
    rc = cli_main(
        [
            "infer",
            "--memory", os.path.join(root, "memory"),
            "--image", os.path.join(scene, "target.png"),
            "--depth", os.path.join(scene, "depth.dpt"),
            "--intrinsics", os.path.join(scene, "intrinsics.json"),
            "--feature-map", os.path.join(scene, "target.dfm"),
            "--target-mask", os.path.join(scene, "front.msk"),
            "--image-emb", os.path.join(scene, "target_image.emb"),
            "--instruction-emb", os.path.join(scene, "instruction.emb"),
            "--object-emb", os.path.join(scene, "object.emb"),
            "--out-dir", out_dir,
        ]
    )
    if rc != 0:
        print(f"pipeline failed with exit code {rc}")
        return rc

    gt = json.load(open(os.path.join(root, "ground_truth.json")))
    report = json.load(open(os.path.join(out_dir, "report.json")))
    a2d = json.load(open(os.path.join(out_dir, "affordance_2d.json")))
    a3d = json.load(open(os.path.join(out_dir, "affordance_3d.json")))

    contact_err_px = float(np.linalg.norm(np.asarray(a2d["contact"]) - gt["handle_pixel"]))
    contact_err_mm = 1e3 * float(
        np.linalg.norm(np.asarray(a3d["contact"]) - gt["handle_point"])
    )
    direction_deg = float(
        np.degrees(
            np.arccos(np.clip(np.dot(a3d["direction"], gt["outward_normal"]), -1, 1))
        )
    )
    print(f"retrieved entry   : {report['result']['entry_id']} (expected {gt['expected_entry']})")
    print(f"stage trace       : {report['stage_trace']}")
    print(f"2D contact error  : {contact_err_px:.3f} px")
    print(f"3D contact error  : {contact_err_mm:.3f} mm")
    print(f"direction error   : {direction_deg:.3f} deg")
    print(f"outputs           : {out_dir}/ (report.json, affordance_2d.json, "
          f"affordance_3d.json, overlay.png)")
    ok = (
        report["result"]["entry_id"] == gt["expected_entry"]
        and contact_err_px <= 1.0
        and contact_err_mm <= 5.0
        and direction_deg <= 5.0
    )
    print("demo check        :", "OK" if ok else "MISMATCH")
    return 0 if ok else 1


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--root", default="demo")
    args = parser.parse_args()
    raise SystemExit(run(args.root))
