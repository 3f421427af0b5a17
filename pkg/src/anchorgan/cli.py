"""Command-line entry point.

Every subcommand is a thin shell over the library API and is reproducible
from (config file, seed). Exit codes: 0 success, 1 usage or configuration
error, 2 invariant-suite failure, 3 numeric abort during training.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import torch

from . import checks, evaluation, panorama as pano
from .config import load_config
from .curation import (
    CurationConfig,
    curate_dataset,
    dataset_to_tensor,
    load_image_dir,
    save_image_dir,
    synth_dataset,
    SYNTH_KINDS,
)
from .errors import ConfigError, DomainError, NumericAbort
from .generator import Generator, GeneratorConfig
from .io import load_generator, save_png
from .latents import load_anchors
from .training import train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INVARIANT = 2
EXIT_NUMERIC = 3


def _error_record(kind: str, message: str) -> None:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)


def cmd_synth(args) -> int:
    rng = np.random.default_rng(args.seed)
    images = synth_dataset(args.kind, args.n, rng, size=args.size)
    save_image_dir(args.out, images, meta={"kind": args.kind, "seed": args.seed})
    print(f"wrote {args.n} {args.kind} images to {args.out}")
    return EXIT_OK


def cmd_curate(args) -> int:
    images = load_image_dir(args.data)
    config = CurationConfig(threshold=args.threshold, seed=args.seed)
    result = curate_dataset(list(images), config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "retained_ids.json").write_text(json.dumps(result.retained.tolist()))
    with open(out / "confidences.csv", "w") as f:
        f.write("image_index,confidence\n")
        for i, c in enumerate(result.confidences):
            f.write(f"{i},{c:.6f}\n")
    print(
        f"retained {len(result.retained)}/{len(images)} images at threshold {args.threshold} "
        f"(holdout accuracy {result.holdout_accuracy:.3f})"
    )
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    data_dir = args.data or cfg.data_dir
    images = load_image_dir(data_dir)
    data = dataset_to_tensor(images)
    run_dir = Path(args.run_dir or cfg.run_dir)
    state = train(data, cfg.generator, cfg.train, run_dir=run_dir)
    print(f"trained to {state.kimg:.1f} kimg; checkpoints in {run_dir}")
    return EXIT_OK


def _triple_from_args(args, generator):
    if args.anchors:
        seq = load_anchors(args.anchors)
        i = args.triple_index
        return seq.triple_at(i)
    rng = torch.Generator().manual_seed(args.seed)
    from .latents import sample_anchor_triple

    return sample_anchor_triple(generator.mapping, args.d, rng)


def cmd_generate(args) -> int:
    generator, _ = load_generator(args.checkpoint)
    triple = _triple_from_args(args, generator)
    frame = generator.generate_frame(triple, args.delta, run_seed=args.seed)
    save_png(args.out, frame)
    print(f"wrote frame to {args.out}")
    return EXIT_OK


def cmd_panorama(args) -> int:
    generator, _ = load_generator(args.checkpoint)
    if args.no_coords and generator.cfg.use_coords:
        raise ConfigError(
            "--no-coords selects the coordinate-free ablation, which changes the "
            "architecture; the checkpoint must have been trained with use_coords=false"
        )
    d = args.ablation_d if args.ablation_d is not None else args.d
    state = pano.new_state(generator.mapping, d=d, seed=args.seed)
    # Materialize every anchor the run will need so the state file is
    # self-contained for later resampling.
    needed = args.frames + 2 * max(1, int(round(1.0 / d))) + 3
    state.anchors.extend_with(generator.mapping, state.rng, max(0, needed - len(state.anchors)))
    if args.save_state:
        pano.save_state(args.save_state, state)
    out = Path(args.out)
    if args.frames <= args.max_single_png:
        wide, _ = pano.generate_panorama(state, generator, args.frames)
        save_png(out, wide)
        print(f"wrote {args.frames}-frame panorama to {out}")
    else:
        out.mkdir(parents=True, exist_ok=True)
        names = []
        for j, (frame, _) in enumerate(pano.iter_frames(state, generator, args.frames)):
            name = f"frame_{j:06d}.png"
            save_png(out / name, frame)
            names.append(name)
        (out / "panorama.json").write_text(
            json.dumps({"frames": names, "d": d, "seed": args.seed})
        )
        print(f"wrote {args.frames} tiled frames to {out}")
    return EXIT_OK


def cmd_resample(args) -> int:
    generator, _ = load_generator(args.checkpoint)
    state = pano.load_state(args.state)
    indices = [int(tok) for tok in args.anchors.split(",") if tok != ""]
    rng = torch.Generator().manual_seed(args.seed)
    state = pano.resample_region(state, indices, generator.mapping, rng)
    if args.save_state:
        pano.save_state(args.save_state, state)
    wide, _ = pano.generate_panorama(state, generator, args.frames)
    save_png(args.out, wide)
    print(f"resampled anchors {indices}; wrote {args.frames}-frame panorama to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    generator, _ = load_generator(args.checkpoint)
    images = load_image_dir(args.data)
    data = dataset_to_tensor(images)
    extractor = evaluation.RandomConvExtractor(seed=args.extractor_seed)
    real_features = evaluation.compute_features(data, extractor)

    rng = torch.Generator().manual_seed(args.seed)
    from .coords import offset_candidates
    from .latents import sample_anchor_triple

    candidates = offset_candidates(args.d, 1.0, generator.cfg.grid)
    fakes = []
    for _ in range(args.n_samples):
        triple = sample_anchor_triple(generator.mapping, args.d, rng)
        delta = candidates[int(torch.randint(len(candidates), (), generator=rng))]
        fakes.append(generator.generate_frame(triple, delta, run_seed=args.seed))
    fake_features = evaluation.compute_features(torch.stack(fakes), extractor)
    frame_fid = evaluation.fid(real_features, fake_features, extractor.identifier)

    state = pano.new_state(generator.mapping, d=args.d, seed=args.seed + 1)
    frames = (f for f, _ in pano.iter_frames(state, generator, args.n_frames))
    inf_fid = evaluation.infinity_fid(frames, extractor, real_features, n_frames=args.n_frames)

    state = pano.new_state(generator.mapping, d=args.d, seed=args.seed + 2)
    wide, _ = pano.generate_panorama(state, generator, 32)
    seam = evaluation.seam_score(wide, generator.cfg.output_resolution)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.csv", "w") as f:
        f.write("metric,value,n_real,n_fake,extractor\n")
        f.write(
            f"fid,{frame_fid.score:.6f},{frame_fid.n_real},{frame_fid.n_fake},{extractor.identifier}\n"
        )
        f.write(
            f"infinity_fid,{inf_fid.score:.6f},{inf_fid.n_real},{inf_fid.n_fake},{extractor.identifier}\n"
        )
        f.write(f"seam_score,{seam:.6f},,,\n")
    print(f"FID           {frame_fid.score:10.4f}  (n={frame_fid.n_fake})")
    print(f"infinity-FID  {inf_fid.score:10.4f}  (n={inf_fid.n_fake})")
    print(f"seam score    {seam:10.4f}")
    return EXIT_OK


def cmd_check(args) -> int:
    if args.checkpoint:
        generator, _ = load_generator(args.checkpoint)
    else:
        generator = Generator(GeneratorConfig(), seed=args.seed)
    ok, _ = checks.run_invariant_suite(generator, trials=args.trials)
    return EXIT_OK if ok else EXIT_INVARIANT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anchorgan")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a procedural fixture dataset")
    p.add_argument("--kind", choices=SYNTH_KINDS, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=64)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("curate", help="filter a dataset by half-classifier confidence")
    p.add_argument("--data", required=True)
    p.add_argument("--threshold", type=float, default=0.7)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("train", help="adversarial training from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--data", default=None)
    p.add_argument("--run-dir", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="render one frame")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--anchors", default=None, help="anchor file written by save_anchors")
    p.add_argument("--triple-index", type=int, default=0)
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--d", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("panorama", help="stream an n-frame panorama")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d", type=float, default=1.0)
    p.add_argument("--ablation-d", type=float, choices=[1.0, 2.0, 4.0, 8.0], default=None)
    p.add_argument("--no-coords", action="store_true")
    p.add_argument("--save-state", default=None)
    p.add_argument("--max-single-png", type=int, default=64)
    p.set_defaults(func=cmd_panorama)

    p = sub.add_parser("resample", help="replace anchors in a saved panorama state")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--state", required=True)
    p.add_argument("--anchors", required=True, help="comma-separated anchor indices")
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--save-state", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_resample)

    p = sub.add_parser("eval", help="FID, infinity-FID and seam diagnostics")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--d", type=float, default=1.0)
    p.add_argument("--n-samples", type=int, default=256)
    p.add_argument("--n-frames", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--extractor-seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("check", help="run the structural invariant suite")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=50)
    p.set_defaults(func=cmd_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_USAGE if err.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, DomainError, FileNotFoundError) as err:
        _error_record(type(err).__name__, str(err))
        return EXIT_USAGE
    except NumericAbort as err:
        record = {"error": "NumericAbort", "message": str(err)}
        if err.snapshot_path is not None:
            record["snapshot"] = str(err.snapshot_path)
        print(json.dumps(record), file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
