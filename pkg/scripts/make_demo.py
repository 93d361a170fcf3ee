#!/usr/bin/env python3
"""Write a self-contained demo input set (scene, target, regions, config).

Usage: python scripts/make_demo.py DEMO_DIR
Then:  patchfield attack --config DEMO_DIR/config.json --out DEMO_DIR/out
"""

import json
import os
import sys

from patchfield.core import save_image
from patchfield.synth import make_desk_scene, make_desk_target


def main(out_dir: str, seed: int = 0, size: int = 64) -> None:
    os.makedirs(out_dir, exist_ok=True)
    scene = make_desk_scene(seed, size, size)
    target = make_desk_target(seed, size, size)
    save_image(os.path.join(out_dir, "scene.png"), scene)
    save_image(os.path.join(out_dir, "target.png"), target)

    s = size // 2
    regions = {
        "image_id": f"demo-{seed}",
        "width": size,
        "height": size,
        "selected": 1,
        "regions": [
            {"id": 1, "bbox": [size // 4, size // 4, s, s], "label": "wall", "score": 0.9},
            {"id": 2, "bbox": [0, 0, size // 4, size // 4], "label": "sky", "score": 0.1},
        ],
    }
    with open(os.path.join(out_dir, "regions.json"), "w") as f:
        json.dump(regions, f, indent=2)

    config = {
        "scene": "scene.png",
        "target": "target.png",
        "regions": "regions.json",
        "region_policy": "explicit",
        "attack": {
            "iterations": 300,
            "area_threshold": 400,
            "seed": seed,
        },
        "encoders": [
            {"kind": "toy-linear", "seed": 0, "grid": [8, 8], "dim": 32, "global_dim": 32},
            {"kind": "toy-linear", "seed": 1, "grid": [8, 8], "dim": 32, "global_dim": 32},
            {"kind": "toy-conv", "seed": 2, "grid": [8, 8], "dim": 32, "global_dim": 32},
        ],
    }
    with open(os.path.join(out_dir, "config.json"), "w") as f:
        json.dump(config, f, indent=2)
    print(f"demo inputs written to {out_dir}")


if __name__ == "__main__":
    if len(sys.argv) != 2:
        sys.exit(__doc__)
    main(sys.argv[1])
