"""``neurohand`` command-line entry point.

Exit codes: 0 success, 2 usage or invalid argument, 3 parse error,
4 numerical failure, 5 I/O error.
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from neurohand import attention, fingertips, grasp, hand, psom
from neurohand.config import load_config
from neurohand.errors import InvalidArgument, NeurohandError
from neurohand.imaging import normalize, read_pgm, write_ppm

EXIT_IO = 5

# module named in error messages
_MODULE = {
    "gen-data": "hand",
    "train": "fingertips",
    "eval": "fingertips",
    "fit-psom": "psom",
    "reconstruct": "psom",
    "run-attention": "attention",
    "run-grasp": "grasp",
    "dump-config": "config",
}


def _add_config(p):
    p.add_argument("--config", type=Path, help="INI file with overrides of the defaults")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one config value (wins over --config)")


def build_parser():
    parser = argparse.ArgumentParser(prog="neurohand", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("gen-data", help="render a labelled synthetic hand dataset")
    p.add_argument("--n", type=int, help="number of images (default from config)")
    p.add_argument("--seed", type=int, help="RNG seed (default from config)")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    _add_config(p)

    p = sub.add_parser("train", help="train the two-level fingertip detector")
    p.add_argument("--data", type=Path, required=True, help="dataset directory or manifest.json")
    p.add_argument("--out", type=Path, required=True, help="model file to write")
    p.add_argument("--seed", type=int, help="training seed (default from config)")
    _add_config(p)

    p = sub.add_parser("eval", help="per-finger error table of a trained detector")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--overlays", type=Path, help="directory for PPM overlays of fused candidates")

    p = sub.add_parser("fit-psom", help="fit the five per-finger posture manifolds")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--data", type=Path, help="take hand geometry and camera from this dataset")

    p = sub.add_parser("reconstruct", help="detect fingertips in an image and invert the manifolds")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--psom", type=Path, required=True)
    p.add_argument("--image", type=Path, required=True, help="PGM image")
    p.add_argument("--no-refine", action="store_true", help="report the raw manifold estimate")
    _add_config(p)

    p = sub.add_parser("run-attention", help="replay an attention scenario")
    p.add_argument("--scenario", type=Path, required=True)
    p.add_argument("--out", type=Path, help="fixation CSV (default: stdout)")
    p.add_argument("--snapshots", type=Path, help="directory for per-step PPM attention maps")
    p.add_argument("--steps", type=int, help="override the scenario's step count")
    _add_config(p)

    p = sub.add_parser("run-grasp", help="simulate the grasp controller")
    p.add_argument("--out", type=Path, help="trace CSV (default: stdout)")
    _add_config(p)

    p = sub.add_parser("dump-config", help="print the fully resolved configuration")
    _add_config(p)
    return parser


def _write_text(path, text):
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text)


def cmd_gen_data(args):
    cfg = load_config(args.config, args.set)
    n = cfg.get("data", "n") if args.n is None else args.n
    seed = cfg.seed if args.seed is None else args.seed
    if n < 1:
        raise InvalidArgument(f"--n must be >= 1, got {n}")
    size = (cfg.get("data", "width"), cfg.get("data", "height"))
    blur = cfg.get("data", "blur")
    records = hand.generate_dataset(n, seed=seed, size=size, blur=blur)
    hand.write_dataset(args.out, records, seed, size, blur)
    print(f"wrote {n} images to {args.out}")


def cmd_train(args):
    cfg = load_config(args.config, args.set)
    records, manifest = hand.load_dataset(args.data)
    hcfg = cfg.hierarchy(tuple(manifest["size"]))
    if args.seed is not None:
        hcfg = replace(hcfg, global_train=replace(hcfg.global_train, seed=args.seed),
                       local_train=replace(hcfg.local_train, seed=args.seed))
    model = fingertips.train_hierarchy(records, hcfg)
    args.out.write_bytes(model.to_bytes())
    print(f"trained on {len(records)} images; model {model.digest()[:16]} -> {args.out}")


def cmd_eval(args):
    model = fingertips.HierarchyModel.from_bytes(args.model.read_bytes())
    records, _ = hand.load_dataset(args.data)
    dets = [fingertips.detect(model, r.image) for r in records]
    coarse, refined = fingertips.tip_errors(dets, records)
    print(fingertips.error_table(coarse, refined, hand.FINGER_NAMES))
    print(f"images improved by refinement: {(refined.mean(axis=1) < coarse.mean(axis=1)).mean():.1%}")
    if args.overlays is not None:
        args.overlays.mkdir(parents=True, exist_ok=True)
        for i, (d, r) in enumerate(zip(dets, records)):
            fused = [fingertips.fuse_streams(r.image, reg, tip) for reg, tip in zip(d.regions, d.refined.xy)]
            write_ppm(args.overlays / f"{i:05d}.ppm", fingertips.overlay(r.image, fused, r.tips))


def cmd_fit_psom(args):
    if args.data is not None:
        _, manifest = hand.load_dataset(args.data)
        manifolds = psom.fit_all(*hand.manifest_models(manifest))
    else:
        manifolds = psom.fit_all()
    args.out.write_bytes(psom.dump_manifolds(manifolds))
    print(f"wrote {len(manifolds)} manifolds to {args.out}")


def cmd_reconstruct(args):
    cfg = load_config(args.config, args.set)
    model = fingertips.HierarchyModel.from_bytes(args.model.read_bytes())
    manifolds = psom.load_manifolds(args.psom.read_bytes())
    img = read_pgm(args.image)
    det = fingertips.detect(model, img)
    refine = cfg.get("psom", "refine") and not args.no_refine
    res = psom.reconstruct_posture(manifolds, det.refined, refine, cfg.inverse())
    print(f"{'finger':<8} {'x':>8} {'y':>8} {'phi':>9} {'theta':>9} {'depth':>9}")
    params = res.parameters.reshape(-1, 2)
    for f, name in enumerate(hand.FINGER_NAMES):
        x, y = det.refined.xy[f]
        flag = "  (not reconstructed)" if res.flagged[f] else ""
        print(f"{name:<8} {x:8.3f} {y:8.3f} {params[f, 0]:9.5f} {params[f, 1]:9.5f} {res.depths[f]:9.4f}{flag}")
    print("pose: " + " ".join(f"{v:.6f}" for v in res.parameters))
    print("depth: " + " ".join(f"{v:.6f}" for v in res.depths))


def cmd_run_attention(args):
    cfg = load_config(args.config, args.set)
    scenario = attention.load_scenario(args.scenario)
    ep = attention.run_episode(scenario, cfg.attention(), args.steps, keep_maps=args.snapshots is not None)
    _write_text(args.out, attention.trace_csv(ep.fixations))
    if args.snapshots is not None:
        args.snapshots.mkdir(parents=True, exist_ok=True)
        for step, att in enumerate(ep.snapshots):
            write_ppm(args.snapshots / f"attention_{step:04d}.ppm", normalize(att))
    if args.out is not None:
        n = sum(f is not None for f in ep.fixations)
        print(f"{n} fixations over {len(ep.fixations)} steps -> {args.out}")


def cmd_run_grasp(args):
    cfg = load_config(args.config, args.set)
    trace = grasp.simulate(cfg.grasp())
    grasp.validate_trace(trace.states)
    _write_text(args.out, trace.to_csv())
    if args.out is not None:
        final = trace.states[-1] if trace.states else "Rest"
        forces = " ".join(f"{v:.4f}" for v in trace.force[-1]) if len(trace.times) else ""
        print(f"states: {' -> '.join(trace.visited())}; final {final}; tip forces {forces}")


def cmd_dump_config(args):
    sys.stdout.write(load_config(args.config, args.set).dump())


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "fit-psom": cmd_fit_psom,
    "reconstruct": cmd_reconstruct,
    "run-attention": cmd_run_attention,
    "run-grasp": cmd_run_grasp,
    "dump-config": cmd_dump_config,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    prefix = f"neurohand: {_MODULE[args.command]}"
    try:
        COMMANDS[args.command](args)
    except NeurohandError as exc:
        print(f"{prefix}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        where = f" ({exc.filename})" if exc.filename else ""
        print(f"{prefix}: I/O error{where}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
