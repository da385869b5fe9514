"""Command-line interface: synth, demoire, eval, fit-grid, spectrum, reproduce.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import __version__
from .align import PyramidTooDeep
from .bilateral import GridFileError
from .dct import ALL_MODES, BLOCK_SIZES, Mode, spectral_positions
from .filters import median_spectrum
from .image import ImageError, load_image, save_image, to_luma
from .pipeline import (
    ConfigError,
    PipelineConfig,
    calibration_pair,
    evaluate,
    fit_from_pair,
    load_clip,
    process_clip,
    report_to_text,
)
from .synth import params_from_text

log = logging.getLogger("demoire")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _mode_arg(text: str) -> list[Mode]:
    if text.strip().lower() == "all":
        return list(ALL_MODES)
    try:
        return [Mode.parse(text)]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pipeline configuration (flags override --config)")
    g.add_argument("--config", help="key=value pipeline config file")
    g.add_argument("--block-size", type=int, choices=BLOCK_SIZES)
    g.add_argument("--bank", help="load the filter bank from this JSON file instead of estimating it")
    g.add_argument("--bank-source", choices=("auto", "identity", "file"))
    g.add_argument("--temperature", type=float)
    g.add_argument("--top-k", type=int)
    g.add_argument("--notch-width", type=float)
    g.add_argument("--notch-depth", type=float)
    g.add_argument("--no-directional", action="store_true", help="use modes V and H only")
    g.add_argument("--no-align", action="store_true", help="skip alignment (identity fields)")
    g.add_argument("--levels", type=int)
    g.add_argument("--tile-size", type=int)
    g.add_argument("--search-radius", type=float)
    g.add_argument("--no-tdr", action="store_true", help="skip tone and detail refinement")
    g.add_argument("--grid", help="load the bilateral grid from this BGRD file")
    g.add_argument("--grid-source", choices=("fit", "load", "identity"))
    g.add_argument("--interpolation", choices=("nearest", "trilinear"))
    g.add_argument("--ridge", type=float)
    g.add_argument("--identity", action="store_true",
                   help="all-identity config: identity bank, no alignment, identity grid")


def config_from_args(args) -> PipelineConfig:
    base = PipelineConfig.identity() if args.identity else PipelineConfig()
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc.strerror}") from None
        cfg = PipelineConfig.from_text(text, base)
    else:
        cfg = base
    overrides = {
        "block_size": args.block_size,
        "temperature": args.temperature,
        "top_k": args.top_k,
        "notch_width": args.notch_width,
        "notch_depth": args.notch_depth,
        "levels": args.levels,
        "tile_size": args.tile_size,
        "search_radius": args.search_radius,
        "interpolation": args.interpolation,
        "ridge": args.ridge,
        "bank": args.bank_source,
        "grid": args.grid_source,
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    if args.bank:
        if args.bank_source not in (None, "file"):
            raise UsageError("--bank conflicts with --bank-source " + args.bank_source)
        cfg.bank, cfg.bank_path = "file", args.bank
    if args.grid:
        if args.grid_source not in (None, "load"):
            raise UsageError("--grid conflicts with --grid-source " + args.grid_source)
        cfg.grid, cfg.grid_path = "load", args.grid
    if args.no_directional:
        cfg.directional = False
    if args.no_align:
        cfg.align = False
    if args.no_tdr:
        cfg.tdr = False
    return cfg.validate()


# --- commands -----------------------------------------------------------------

def cmd_synth(args) -> int:
    from .dataset import write_dataset

    if args.count < 0:
        raise UsageError("--count must be >= 0")
    dirs = write_dataset(args.out, args.count, args.seed, args.size)
    print(f"wrote {len(dirs)} clips to {args.out}")
    return EXIT_OK


def _fit_pair(args, cfg: PipelineConfig):
    if not (cfg.tdr and cfg.grid == "fit"):
        return None
    if args.fit_source or args.fit_target:
        if not (args.fit_source and args.fit_target):
            raise UsageError("--fit-source and --fit-target go together")
        return load_image(args.fit_source), load_image(args.fit_target)
    calib = args.calib
    if calib is None:
        guess = Path(args.frames[1]).parent / "params.txt"
        if guess.is_file():
            calib = guess
    if calib is None:
        raise UsageError(
            "grid=fit needs a paired example: pass --fit-source/--fit-target, --calib params.txt, "
            "--grid FILE or --grid-source identity"
        )
    params = params_from_text(Path(calib).read_text(encoding="utf-8"))
    return calibration_pair(params)


def cmd_demoire(args) -> int:
    cfg = config_from_args(args)
    clip = load_clip(args.frames)
    result = process_clip(clip, cfg, _fit_pair(args, cfg))
    save_image(result.output, args.out)
    if args.dump_align:
        with open(args.dump_align, "w", encoding="utf-8") as fh:
            for name, fld in (("prev", result.fields[0]), ("next", result.fields[2])):
                fh.write(f"# {name} -> ref\n")
                fh.write(fld.dump())
    log.info("wrote %s", args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = config_from_args(args)
    text = report_to_text(evaluate(args.dataset, cfg))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_fit_grid(args) -> int:
    if args.ridge < 0:
        raise UsageError("--ridge must be >= 0")
    grid = fit_from_pair(load_image(args.source), load_image(args.target), args.ridge)
    grid.save(args.out)
    return EXIT_OK


def cmd_spectrum(args) -> int:
    frame = load_image(args.frame)
    luma = to_luma(frame)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["mode", "group", "pos", "median_abs"])
    for mode in args.mode:
        med = median_spectrum([luma], mode, args.block_size)
        for (j, p), v in zip(spectral_positions(mode, args.block_size), med):
            writer.writerow([int(mode), j, p, f"{v:.9g}"])
    return EXIT_OK


def cmd_reproduce(args) -> int:
    from .benchmark import load_manifest, reproduce

    path = Path(args.manifest)
    if not path.is_file():
        raise UsageError(f"manifest not found: {path}")
    result = reproduce(load_manifest(path), work_dir=args.work_dir)
    sys.stdout.write(result.table())
    return EXIT_OK if result.passed else EXIT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="demoire", description="Direction-aware video demoiréing toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic moiré benchmark")
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=256)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("demoire", help="demoiré the reference frame of a three-frame clip")
    p.add_argument("frames", nargs=3, metavar="FRAME", help="previous, reference and next frame")
    p.add_argument("--out", required=True)
    p.add_argument("--dump-align", help="write the per-tile alignment fields here")
    p.add_argument("--fit-source", help="paired example used to fit the grid (input side)")
    p.add_argument("--fit-target", help="paired example used to fit the grid (target side)")
    p.add_argument("--calib", help="params.txt whose tone distortion defines the fitting pair")
    _add_config_flags(p)
    p.set_defaults(func=cmd_demoire)

    p = sub.add_parser("eval", help="evaluate the pipeline on a synth dataset")
    p.add_argument("dataset")
    p.add_argument("--out", help="report path (default: stdout)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("fit-grid", help="fit a bilateral grid from a paired example")
    p.add_argument("source")
    p.add_argument("target")
    p.add_argument("--out", required=True)
    p.add_argument("--ridge", type=float, default=1e-3)
    p.set_defaults(func=cmd_fit_grid)

    p = sub.add_parser("spectrum", help="median |coefficient| per spectral position, as CSV")
    p.add_argument("frame")
    p.add_argument("--mode", type=_mode_arg, default=list(ALL_MODES),
                   help="mode tag or name (V, H, DDL, DDR, VR, HD, VL, HU) or 'all'")
    p.add_argument("--block-size", type=int, choices=BLOCK_SIZES, default=8)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("reproduce", help="regenerate the benchmark and check the manifest bounds")
    p.add_argument("manifest", nargs="?", default="benchmark/manifest.txt")
    p.add_argument("--work-dir", help="keep the generated dataset and reports here")
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"demoire {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ImageError, GridFileError, PyramidTooDeep, OSError, ValueError) as exc:
        print(f"demoire {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
