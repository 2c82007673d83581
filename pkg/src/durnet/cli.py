"""Command-line front end.

Subcommands: train, infer, metrics, analyze-paths, param-count, gradcheck,
synth-noise, dump-activations. Exit codes: 0 success, 1 runtime failure,
2 usage or configuration failure. No subcommand writes a file before its
flags are fully validated.

A network config file (key = value lines, same format written into
checkpoints) can seed the train/param-count flags via --config; explicit
flags win over file values.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import tensor as T
from .checkpoint import load_checkpoint, network_from_checkpoint
from .data import (add_gaussian_noise, from_tensor, load_image, load_manifest,
                   save_image, to_tensor)
from .errors import ConfigError, ContractError, DimensionError, DurnetError, FormatError
from .gradsuite import run_gradient_suite
from .metrics import psnr, ssim
from .networks import (ARCHS, build_network, clamp01, count_parameters,
                       dump_activation_maps, net_forward, parse_config)
from .training import TrainConfig, evaluate, train, write_history_csv
from .unravel import MAX_BLOCKS, STYLES, expand, pairing_report, verify_pairing

TASKS = {
    # task: (default arch, loss, sigma, batch, crop, recipe notes)
    "noise": ("durn_p", "l2_only", 30.0, 100, 64),
    "real_noise": ("durn_p", "main", None, 30, 128),
    "blur": ("durn_u", "main", None, 10, 256),
    "haze": ("durn_us", "main", None, 20, 256),
    "raindrop": ("durn_s_p", "main", None, 24, 256),
    "rain_streak": ("durn_s", "main", None, 40, 64),
}


def _spec_options(args, config_path) -> dict:
    """Merge network options: config file values < explicit flags."""
    options: dict = {}
    if config_path:
        try:
            text = Path(config_path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config file {config_path}: {exc}") from exc
        options.update(parse_config(text))
    overrides = {
        "arch": args.arch,
        "in_channels": getattr(args, "channels", None),
        "base_channels": getattr(args, "base_channels", None),
        "n_blocks": getattr(args, "blocks", None),
        "connection_style": getattr(args, "style", None),
        "carrier_init": getattr(args, "carrier_init", None),
    }
    if getattr(args, "no_norm", False):
        overrides["norms"] = False
    for key, value in overrides.items():
        if value is not None:
            options[key] = value
    return options


def _resolve_arch_options(args, task_row) -> dict:
    options = _spec_options(args, getattr(args, "config", None))
    options.setdefault("arch", task_row[0] if task_row else None)
    if options["arch"] is None:
        raise ConfigError("no architecture given (use --arch, --task or --config)")
    if options["arch"] not in ARCHS:
        raise ConfigError(f"unknown arch {options['arch']!r} (choose from {', '.join(ARCHS)})")
    if task_row and args.task == "real_noise":
        options.setdefault("in_channels", 3)
        options.setdefault("norms", False)
    return options


# -- train ----------------------------------------------------------------

def cmd_train(args) -> int:
    task_row = TASKS[args.task] if args.task else None
    options = _resolve_arch_options(args, task_row)

    loss = args.loss or (task_row[1] if task_row else "main")
    sigma = args.sigma if args.sigma is not None else (task_row[2] if task_row else None)
    batch = args.batch if args.batch is not None else (task_row[3] if task_row else 1)
    crop = args.crop if args.crop is not None else (task_row[4] if task_row else 48)

    phases = None
    if args.l1_steps is None and args.task == "raindrop" and args.steps >= 41:
        # desk-scale mirror of the two-phase schedule (40:1 main to l1)
        args.l1_steps = args.steps // 41
    if args.l1_steps:
        if args.l1_steps >= args.steps:
            raise ConfigError("--l1-steps must be smaller than --steps")
        phases = ((loss, args.steps - args.l1_steps), ("l1_only", args.l1_steps))

    out_dir = Path(args.out_dir)
    manifest = load_manifest(args.manifest)
    cfg = TrainConfig(steps=args.steps, batch_size=batch, crop=crop, lr=args.lr,
                      seed=args.seed, loss=loss, phases=phases, sigma=sigma,
                      checkpoint_interval=args.checkpoint_interval,
                      checkpoint_dir=out_dir)
    arch = options.pop("arch")
    net = build_network(arch, seed=args.seed, **options)

    out_dir.mkdir(parents=True, exist_ok=True)
    history, ck = train(net, manifest, cfg)
    write_history_csv(history, out_dir / "history.csv")
    from .report import render_loss_curve
    render_loss_curve(history, out_dir / "loss_curve.png")

    final_loss = history[-1][1] if history else math.nan
    rows = evaluate(net, manifest, sigma=sigma, seed=args.seed, limit=1)
    line = (f"final_loss={final_loss:.6g} psnr={rows[0]['psnr']:.2f} "
            f"input_psnr={rows[0]['input_psnr']:.2f}")
    if args.json_lines:
        print(json.dumps({"final_loss": final_loss, "psnr": rows[0]["psnr"],
                          "input_psnr": rows[0]["input_psnr"],
                          "checkpoint": str(out_dir / "checkpoint.durn")}))
    else:
        print(line)
        print(f"wrote {out_dir / 'checkpoint.durn'}, history.csv, loss_curve.png")
    return 0


# -- infer ----------------------------------------------------------------

def _image_list(path: Path) -> list[Path]:
    if path.is_dir():
        files = sorted(p for p in path.iterdir()
                       if p.suffix.lower() in (".png", ".ppm", ".pgm"))
        if not files:
            raise ConfigError(f"no images found in {path}")
        return files
    if not path.is_file():
        raise ConfigError(f"input {path} does not exist")
    return [path]


def cmd_infer(args) -> int:
    ck_path = Path(args.checkpoint)
    if not ck_path.is_file():
        raise ConfigError(f"checkpoint {ck_path} does not exist")
    inputs = _image_list(Path(args.input))
    references = _image_list(Path(args.reference)) if args.reference else None
    if references is not None and len(references) != len(inputs):
        raise ConfigError(f"{len(inputs)} inputs but {len(references)} references")
    out_dir = Path(args.out_dir)

    net = network_from_checkpoint(load_checkpoint(ck_path))
    out_dir.mkdir(parents=True, exist_ok=True)
    mode = args.mode
    for idx, path in enumerate(inputs):
        x = to_tensor(load_image(path))
        if x.shape[0] != net.spec.in_channels:
            raise DimensionError(f"{path.name}: {x.shape[0]} channels, "
                                 f"checkpoint expects {net.spec.in_channels}")
        with T.no_grad():
            out = net_forward(net, x[None], mode=mode)
        restored = clamp01(out)[0]
        target = out_dir / path.name
        save_image(from_tensor(restored), target)
        if references is not None:
            gt = to_tensor(load_image(references[idx]))
            p = psnr(restored, gt)
            s = ssim(restored[None], gt[None]).item()
            if args.json_lines:
                print(json.dumps({"image": path.name,
                                  "psnr": None if math.isinf(p) else p, "ssim": s}))
            else:
                p_text = "inf" if math.isinf(p) else f"{p:.2f}"
                print(f"{path.name}: PSNR={p_text} dB SSIM={s:.4f}")
        elif not args.json_lines:
            print(f"wrote {target}")
    return 0


# -- metrics ----------------------------------------------------------------

def cmd_metrics(args) -> int:
    a = to_tensor(load_image(args.image_a))
    b = to_tensor(load_image(args.image_b))
    if a.shape != b.shape:
        raise DimensionError(f"image shapes differ: {a.shape} vs {b.shape}")
    p = psnr(a, b)
    s = ssim(a[None], b[None]).item()
    p_text = "inf" if math.isinf(p) else f"{p:.4f}"
    if args.json_lines:
        print(json.dumps({"psnr": None if math.isinf(p) else p, "ssim": s}))
    else:
        print(f"PSNR={p_text} dB SSIM={s:.4f}")
    return 0


# -- analyze-paths -----------------------------------------------------------

def cmd_analyze_paths(args) -> int:
    if args.style not in STYLES:
        raise ConfigError(f"unknown style {args.style!r}")
    if not 1 <= args.blocks <= MAX_BLOCKS:
        raise ConfigError(f"--blocks must lie in 1..{MAX_BLOCKS}")
    emit_path = Path(args.emit) if args.emit else None

    terms = expand(args.style, args.blocks)
    report = pairing_report(terms, style=args.style, n_blocks=args.blocks)
    result = verify_pairing(args.style, args.blocks)

    if emit_path is not None:
        with open(emit_path, "w", encoding="utf-8") as fh:
            for t in terms:
                fh.write(json.dumps({"ops": [f"{k}{i}" for k, i in t.ops],
                                     "pairs": [list(p) for p in t.direct_pairs]}) + "\n")

    if args.json_lines:
        print(json.dumps({
            "style": args.style, "blocks": args.blocks, "terms": report.n_terms,
            "pairs": sorted(map(list, report.pair_set)),
            "unpaired_f": report.unpaired_f, "unpaired_g": report.unpaired_g,
            "law": result.law, "law_holds": result.passed,
        }))
    else:
        print(f"style ({args.style}), {args.blocks} block(s)")
        print(f"  paths          {report.n_terms}")
        pairs = ", ".join(f"(f{i},g{j})" for i, j in sorted(report.pair_set)) or "none"
        print(f"  pairs          {pairs}")
        print(f"  unpaired f/g   {report.unpaired_f}/{report.unpaired_g}")
        if result.law is not None:
            print(f"  law            {result.law}: "
                  f"{'holds' if result.passed else 'VIOLATED'}")
        if args.verbose_terms:
            for t in terms:
                print(f"    {t.label()}")
    if args.check and result.passed is False:
        return 1
    return 0


# -- param-count -------------------------------------------------------------

def cmd_param_count(args) -> int:
    options = _resolve_arch_options(args, None)
    arch = options.pop("arch")
    net = build_network(arch, seed=0, **options)
    total = count_parameters(net.store)
    if args.json_lines:
        print(json.dumps({"arch": arch, "parameters": total}))
    else:
        print(f"{arch}: {total} parameters")
    return 0


# -- gradcheck ----------------------------------------------------------------

def cmd_gradcheck(args) -> int:
    results = run_gradient_suite(only=args.only)
    if not results:
        raise ConfigError(f"no gradient checks match {args.only!r}")
    failures = 0
    for r in results:
        if args.json_lines:
            print(json.dumps({"check": r.name, "error": r.error,
                              "tolerance": r.tolerance, "passed": r.passed}))
        else:
            status = "PASS" if r.passed else "FAIL"
            print(f"{status} {r.name:24s} rel_err={r.error:.3e} tol={r.tolerance:.0e}")
        failures += 0 if r.passed else 1
    if not args.json_lines:
        print(f"{len(results) - failures}/{len(results)} checks passed")
    return 1 if failures else 0


# -- synth-noise ---------------------------------------------------------------

def cmd_synth_noise(args) -> int:
    if args.sigma < 0:
        raise ConfigError("--sigma must be nonnegative")
    inputs = _image_list(Path(args.input))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_lines = []
    for idx, path in enumerate(inputs):
        clean = to_tensor(load_image(path))
        noisy = add_gaussian_noise(clean, args.sigma, seed=[args.seed, idx],
                                   clamp=args.clamp)
        name = f"{path.stem}_sigma{int(args.sigma)}.png"
        save_image(from_tensor(noisy), out_dir / name)
        manifest_lines.append(f"{name}\t{path.resolve()}")
        if not args.json_lines:
            print(f"wrote {out_dir / name}")
    manifest_path = out_dir / "pairs.tsv"
    manifest_path.write_text("\n".join(manifest_lines) + "\n", encoding="utf-8")
    if args.json_lines:
        print(json.dumps({"images": len(inputs), "manifest": str(manifest_path)}))
    else:
        print(f"wrote {manifest_path}")
    return 0


# -- dump-activations ------------------------------------------------------------

def cmd_dump_activations(args) -> int:
    if bool(args.checkpoint) == bool(args.arch):
        raise ConfigError("give exactly one of --checkpoint or --arch")
    taps = []
    for token in args.taps.split(","):
        token = token.strip()
        if token:
            try:
                taps.append(int(token))
            except ValueError:
                raise ConfigError(f"bad tap index {token!r}") from None
    if not taps:
        raise ConfigError("no tap indices given")
    input_path = Path(args.input)
    if not input_path.is_file():
        raise ConfigError(f"input {input_path} does not exist")
    out_dir = Path(args.out_dir)

    if args.checkpoint:
        net = network_from_checkpoint(load_checkpoint(Path(args.checkpoint)))
    else:
        options = _resolve_arch_options(args, None)
        arch = options.pop("arch")
        net = build_network(arch, seed=args.seed, **options)

    x = to_tensor(load_image(input_path))
    maps = dump_activation_maps(net, x[None], taps, mode=args.mode)

    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for tap, plane in zip(taps, maps):
        name = f"tap_{tap:02d}.png"
        save_image(from_tensor(plane[None].astype(np.float32)), out_dir / name)
        rows.append({"tap": tap, "height": plane.shape[0], "width": plane.shape[1],
                     "file": name})
    from .report import render_activation_grid
    render_activation_grid(maps, taps, out_dir / "activations.png")
    with open(out_dir / "taps.csv", "w", encoding="utf-8") as fh:
        fh.write("tap,height,width,file\n")
        for row in rows:
            fh.write(f"{row['tap']},{row['height']},{row['width']},{row['file']}\n")
    if args.json_lines:
        for row in rows:
            print(json.dumps(row))
    else:
        print(f"wrote {len(rows)} map(s), activations.png and taps.csv to {out_dir}")
    return 0


# -- parser ----------------------------------------------------------------------

def _add_arch_flags(p, include_style=True):
    p.add_argument("--arch", choices=ARCHS, help="network architecture")
    p.add_argument("--channels", type=int, choices=(1, 3), dest="channels",
                   help="input channels (grayscale or RGB)")
    p.add_argument("--base-channels", type=int, help="feature channels per layer")
    p.add_argument("--blocks", type=int, help="number of dual residual blocks")
    p.add_argument("--no-norm", action="store_true", help="drop all normalization layers")
    p.add_argument("--carrier-init", choices=("stem", "zeros"),
                   help="second-stream initialization")
    p.add_argument("--config", help="network config file (key = value lines)")
    if include_style:
        p.add_argument("--style", choices=("b", "c", "d"),
                       help="residual connection style (default d)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="durnet",
        description="Dual-residual image restoration networks and analysis tools.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a network on a manifest of image pairs")
    _add_arch_flags(p)
    p.add_argument("--task", choices=sorted(TASKS),
                   help="task preset (sets arch/loss/batch/crop defaults)")
    p.add_argument("--manifest", required=True, help="TSV manifest of degraded/clean pairs")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--batch", type=int, help="batch size (task default otherwise)")
    p.add_argument("--crop", type=int, help="training crop size (task default otherwise)")
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma", type=float, help="synthesize Gaussian noise of this level")
    p.add_argument("--loss", choices=("main", "l1_only", "l2_only"))
    p.add_argument("--l1-steps", type=int,
                   help="tail steps trained with l1 alone (raindrop schedule)")
    p.add_argument("--checkpoint-interval", type=int)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--json-lines", action="store_true")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("infer", help="restore images with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="image file or directory")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--reference", help="ground-truth image file or directory")
    p.add_argument("--mode", choices=("eval", "train"), default="eval",
                   help="normalization statistics mode")
    p.add_argument("--json-lines", action="store_true")
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("metrics", help="PSNR/SSIM between two images")
    p.add_argument("image_a")
    p.add_argument("image_b")
    p.add_argument("--json-lines", action="store_true")
    p.set_defaults(fn=cmd_metrics)

    p = sub.add_parser("analyze-paths", help="expand a connection style into its paths")
    p.add_argument("--style", required=True, help="connection style: a, b, c or d")
    p.add_argument("--blocks", type=int, required=True)
    p.add_argument("--check", action="store_true",
                   help="exit nonzero if the style's pairing law fails")
    p.add_argument("--emit", help="write one JSON record per path term")
    p.add_argument("--verbose-terms", action="store_true", help="print every term")
    p.add_argument("--json-lines", action="store_true")
    p.set_defaults(fn=cmd_analyze_paths)

    p = sub.add_parser("param-count", help="count trainable parameters")
    _add_arch_flags(p)
    p.add_argument("--json-lines", action="store_true")
    p.set_defaults(fn=cmd_param_count)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--all", action="store_true", help="run every check")
    group.add_argument("--only", help="run checks whose name contains this substring")
    p.add_argument("--json-lines", action="store_true")
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("synth-noise", help="write noisy copies plus a pair manifest")
    p.add_argument("--input", required=True, help="clean image file or directory")
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--clamp", action="store_true", help="clamp noisy output to [0, 1]")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--json-lines", action="store_true")
    p.set_defaults(fn=cmd_synth_noise)

    p = sub.add_parser("dump-activations", help="internal activation maps as images")
    _add_arch_flags(p, include_style=False)
    p.add_argument("--checkpoint", help="trained checkpoint (alternative to --arch)")
    p.add_argument("--input", required=True)
    p.add_argument("--taps", required=True, help="comma-separated block indices (0 = input)")
    p.add_argument("--mode", choices=("train", "eval"), default="train")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--json-lines", action="store_true")
    p.set_defaults(fn=cmd_dump_activations)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except (ConfigError, FormatError, DimensionError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DurnetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
