"""Command-line front door: attack runs, ablations, transfer metrics.

    patchfield attack --config cfg.json [--seed N] [--mode digital|physical] [--out DIR]
    patchfield ablate --config cfg.json --variant no-svd|no-mask-update|no-patch-crop ...
    patchfield eval-transfer --result DIR --heldout SPEC

The config is a single JSON document (flags override its fields). A
successful run writes out/{adv.png, patch.png, mask.png, field.png,
trace.csv, report.json}; report.json validates against the committed schema.
Exit codes: 0 success, 2 config error, 3 input error, 4 runtime abort.
"""

from __future__ import annotations

import argparse
import csv
import importlib.resources
import json
import os
import sys
from dataclasses import asdict

import jsonschema

from . import core, engine
from .bridge import BridgeError
from .core import AttackConfig
from .encoders import EncoderSpec, connect_bridge_encoder, make_toy_encoder
from .eot import EotConfig
from .field import MorphologyConfig
from .ops.kernels import backend_name
from .regions import RegionError, load_regions

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_RUNTIME = 4

ARTIFACTS = {
    "adv": "adv.png",
    "patch": "patch.png",
    "mask": "mask.png",
    "field": "field.png",
    "trace": "trace.csv",
}


class ConfigError(ValueError):
    pass


class InputError(ValueError):
    pass


def load_config(path) -> dict:
    try:
        with open(path) as f:
            doc = json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path}: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    for key in ("scene", "target", "regions"):
        if key not in doc:
            raise ConfigError(f"config missing required key {key!r}")
    base = os.path.dirname(os.path.abspath(path))
    for key in ("scene", "target", "regions", "palette"):
        if doc.get(key) and not os.path.isabs(doc[key]):
            doc[key] = os.path.join(base, doc[key])
    return doc


def _build_attack_config(doc: dict, overrides: dict) -> AttackConfig:
    fields = dict(doc.get("attack", {}))
    for key in ("seed", "mode"):
        if overrides.get(key) is not None:
            fields[key] = overrides[key]
    for key in ("crop_area", "aspect_range"):
        if key in fields:
            fields[key] = tuple(fields[key])
    try:
        return AttackConfig(**fields)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad attack config: {e}") from e


def _build_encoder(spec_doc: dict, height: int, width: int):
    kind = spec_doc.get("kind", "toy-linear")
    if kind == "bridged":
        endpoint = spec_doc.get("endpoint")
        if not endpoint:
            raise ConfigError("bridged encoder requires an 'endpoint'")
        return connect_bridge_encoder(endpoint)
    try:
        grid = spec_doc.get("grid", [8, 8])
        spec = EncoderSpec(
            height=height, width=width,
            grid_rows=int(grid[0]), grid_cols=int(grid[1]),
            dim=int(spec_doc.get("dim", 32)),
            global_dim=int(spec_doc.get("global_dim", 32)),
            kind=kind, seed=int(spec_doc.get("seed", 0)),
        )
    except (TypeError, ValueError, IndexError) as e:
        raise InputError(f"encoder spec {spec_doc}: {e}") from e
    return make_toy_encoder(spec)


def _load_inputs(doc: dict):
    for key in ("scene", "target", "regions"):
        if not os.path.isfile(doc[key]):
            raise InputError(f"{key} file not found: {doc[key]}")
    try:
        scene = core.load_image(doc["scene"])
        target = core.load_image(doc["target"])
    except (OSError, ValueError) as e:
        raise InputError(f"cannot read image: {e}") from e
    if scene.shape != target.shape:
        raise InputError(
            f"scene {scene.shape[:2]} and target {target.shape[:2]} dims differ"
        )
    try:
        region_set = load_regions(doc["regions"])
    except RegionError as e:
        raise InputError(str(e)) from e
    if (region_set.height, region_set.width) != scene.shape[:2]:
        raise InputError(
            f"region file declares {region_set.width}x{region_set.height}, "
            f"scene is {scene.shape[1]}x{scene.shape[0]}"
        )
    palette = None
    if doc.get("palette"):
        if not os.path.isfile(doc["palette"]):
            raise InputError(f"palette file not found: {doc['palette']}")
        try:
            palette = engine.load_palette(doc["palette"])
        except ValueError as e:
            raise InputError(f"palette file: {e}") from e
    return scene, target, region_set, palette


def _write_trace(path, trace) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["iter", "loss_total", "loss_global", "loss_local",
                         "mask_area", "tau"])
        for row in trace:
            writer.writerow([row.iteration, repr(row.loss_total), repr(row.loss_global),
                             repr(row.loss_local), row.mask_area, repr(row.tau)])


def validate_report(report: dict) -> None:
    schema = json.loads(
        importlib.resources.files("patchfield").joinpath("report_schema.json").read_text()
    )
    jsonschema.validate(report, schema)


def run_experiment(doc: dict, overrides: dict, variant: str = "full") -> int:
    cfg = _build_attack_config(doc, overrides)
    morphology = MorphologyConfig(**doc.get("morphology", {}))
    eot_config = EotConfig(**doc.get("eot", {})) if doc.get("eot") is not None else None
    out_dir = overrides.get("out") or doc.get("out") or "out"

    scene, target, region_set, palette = _load_inputs(doc)
    height, width = scene.shape[:2]
    encoder_docs = doc.get("encoders") or [
        {"kind": "toy-linear", "seed": 0},
        {"kind": "toy-linear", "seed": 1},
        {"kind": "toy-conv", "seed": 2},
    ]
    try:
        ensemble = [_build_encoder(d, height, width) for d in encoder_docs]
    except BridgeError as e:
        raise InputError(f"bridged encoder unavailable: {e}") from e

    region_scorer = None
    if doc.get("region_policy") == "external" and doc.get("bridge"):
        from .bridge import score_regions

        region_scorer = lambda rs: score_regions(doc["bridge"], scene, rs)

    try:
        result = engine.run_attack(
            scene, target, region_set, ensemble, cfg,
            morphology=morphology, eot_config=eot_config, palette=palette,
            variant=variant,
            region_policy=doc.get("region_policy", "explicit"),
            region_scorer=region_scorer,
        )
    except engine.AttackAborted as e:
        os.makedirs(out_dir, exist_ok=True)
        _write_trace(os.path.join(out_dir, ARTIFACTS["trace"]), e.partial.trace)
        with open(os.path.join(out_dir, "abort.json"), "w") as f:
            json.dump({"stop_reason": e.partial.stop_reason}, f, indent=2, sort_keys=True)
        print(f"aborted: {e}", file=sys.stderr)
        return EXIT_RUNTIME

    os.makedirs(out_dir, exist_ok=True)
    core.save_image(os.path.join(out_dir, ARTIFACTS["adv"]), result.adv)
    core.save_image(os.path.join(out_dir, ARTIFACTS["patch"]),
                    result.delta * result.mask[:, :, None])
    core.save_gray(os.path.join(out_dir, ARTIFACTS["mask"]), result.mask)
    core.save_gray(os.path.join(out_dir, ARTIFACTS["field"]), result.field.data)
    _write_trace(os.path.join(out_dir, ARTIFACTS["trace"]), result.trace)

    first = result.trace[0] if result.trace else None
    last = result.trace[-1] if result.trace else None
    report = {
        "config": _echo_config(doc, cfg),
        "seed": cfg.seed,
        "variant": variant,
        "local_loss_mode": "raw" if variant == "no-svd" else "svd",
        "stop_reason": result.stop_reason,
        "backend": backend_name(),
        "summary": {
            "initial_loss_total": first.loss_total if first else 0.0,
            "final_loss_total": last.loss_total if last else 0.0,
            "final_loss_global": last.loss_global if last else 0.0,
            "final_loss_local": last.loss_local if last else 0.0,
            "mask_area": int(core.mask_area(result.mask)),
            "tau_final": result.field.threshold,
            "iterations_to_freeze": result.freeze_iteration,
            "full_frame_loss": engine.evaluate_combined_loss(
                result.adv, target, ensemble, cfg.svd_rank, cfg.local_weight
            ),
            "per_encoder": engine.alignment_report(
                scene, result.adv, target, ensemble, cfg.svd_rank
            ),
        },
        "files": dict(ARTIFACTS),
    }
    validate_report(report)
    with open(os.path.join(out_dir, "report.json"), "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
    print(f"wrote {out_dir}: final loss {report['summary']['final_loss_total']:.6f}, "
          f"mask area {report['summary']['mask_area']}")
    return EXIT_OK


def _echo_config(doc: dict, cfg: AttackConfig) -> dict:
    echo = {k: v for k, v in doc.items() if k != "attack"}
    echo["attack"] = asdict(cfg)
    echo["attack"]["crop_area"] = list(cfg.crop_area)
    echo["attack"]["aspect_range"] = list(cfg.aspect_range)
    return echo


def _parse_heldout(spec: str) -> list[dict]:
    if os.path.isfile(spec):
        with open(spec) as f:
            doc = json.load(f)
    else:
        try:
            doc = json.loads(spec)
        except json.JSONDecodeError as e:
            raise ConfigError(f"--heldout is neither a file nor JSON: {e}") from e
    if isinstance(doc, dict):
        doc = [doc]
    if not isinstance(doc, list) or not doc:
        raise ConfigError("--heldout must be an encoder spec or list of specs")
    return doc


def eval_transfer(result_dir: str, heldout_spec: str) -> int:
    report_path = os.path.join(result_dir, "report.json")
    if not os.path.isfile(report_path):
        raise InputError(f"no report.json in {result_dir}")
    with open(report_path) as f:
        report = json.load(f)
    doc = report["config"]
    scene = core.load_image(doc["scene"])
    target = core.load_image(doc["target"])
    adv = core.load_image(os.path.join(result_dir, report["files"]["adv"]))
    height, width = scene.shape[:2]

    heldout_docs = _parse_heldout(heldout_spec)
    attack_ids = {(d.get("kind", "toy-linear"), d.get("seed", 0))
                  for d in doc.get("encoders", [])}
    for d in heldout_docs:
        if (d.get("kind", "toy-linear"), d.get("seed", 0)) in attack_ids:
            raise ConfigError(
                f"held-out encoder {d} duplicates an attack-ensemble encoder"
            )
    heldout = [_build_encoder(d, height, width) for d in heldout_docs]
    rows = engine.transfer_delta_cos(scene, adv, target, heldout)
    out = {"heldout": heldout_docs, "metrics": rows}
    with open(os.path.join(result_dir, "transfer.json"), "w") as f:
        json.dump(out, f, indent=2, sort_keys=True)
    print(json.dumps(out["metrics"], indent=2))
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="patchfield")
    sub = parser.add_subparsers(dest="command", required=True)

    p_attack = sub.add_parser("attack", help="run the full attack")
    p_attack.add_argument("--config", required=True)
    p_attack.add_argument("--seed", type=int, default=None)
    p_attack.add_argument("--mode", choices=["digital", "physical"], default=None)
    p_attack.add_argument("--out", default=None)

    p_ablate = sub.add_parser("ablate", help="run an ablation variant")
    p_ablate.add_argument("--config", required=True)
    p_ablate.add_argument("--variant", required=True,
                          choices=["no-svd", "no-mask-update", "no-patch-crop"])
    p_ablate.add_argument("--seed", type=int, default=None)
    p_ablate.add_argument("--mode", choices=["digital", "physical"], default=None)
    p_ablate.add_argument("--out", default=None)

    p_eval = sub.add_parser("eval-transfer", help="held-out transfer proxy metrics")
    p_eval.add_argument("--result", required=True)
    p_eval.add_argument("--heldout", required=True)

    args = parser.parse_args(argv)
    try:
        if args.command == "eval-transfer":
            return eval_transfer(args.result, args.heldout)
        doc = load_config(args.config)
        overrides = {"seed": args.seed, "mode": args.mode, "out": args.out}
        variant = args.variant if args.command == "ablate" else "full"
        return run_experiment(doc, overrides, variant)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except InputError as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
