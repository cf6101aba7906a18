"""Command-line entry point.

Exit codes: 0 success, 2 usage or malformed config, 3 some cases failed,
4 every case failed.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import report
from .analysis import binarize, compute_smi, compute_smv, ensemble_mean
from .curation import (
    SplitConfig,
    build_cohort,
    classify_body_location,
    classify_sequence,
    construct_test_splits,
    dump_cohort_csv,
    load_cohort,
)
from .errors import InvalidConfig, MuscleSegError
from .metrics import subgroup_summary
from .phantom import PROFILES, PhantomConfig, generate_phantom, simulate_probability_map
from .pipeline import (
    DEFAULT_SUBGROUP_KEYS,
    RunConfig,
    RunFailed,
    load_run_config,
    read_volume_file,
    run_evaluate,
    write_volume_file,
)
from .preprocess import MODEL_SIZE, axis_index, to_model_space, stack_slices
from .rng import derive_seed
from .volume import ScalarVolume, VolumeGeometry, as_mask, as_probability

log = logging.getLogger("muscleseg")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CASE_FAILED = 3
EXIT_ALL_FAILED = 4


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting so run_command can map codes."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise InvalidConfig(f"{self.prog}: error: {message}")


def _emit(payload, out: str | None) -> None:
    text = report.dumps_json(payload)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _abs(path):
    return None if path is None else str(Path(path).resolve())


# --- subcommands -------------------------------------------------------------

def cmd_classify(args) -> int:
    if args.series_description is None and args.protocol_description is None:
        raise InvalidConfig("classify needs --series-description and/or --protocol-description")
    payload = {}
    if args.series_description is not None and args.protocol_description is not None:
        payload = {"sequence": classify_sequence(args.series_description).to_dict(),
                   "location": classify_body_location(args.protocol_description).to_dict()}
    elif args.series_description is not None:
        payload = classify_sequence(args.series_description).to_dict()
    else:
        payload = classify_body_location(args.protocol_description).to_dict()
    _emit(payload, None)
    return EXIT_OK


def _read_cohort(path):
    if not Path(path).is_file():
        raise InvalidConfig(f"cohort file not found: {path}")
    return load_cohort(path)


def cmd_cohort(args) -> int:
    table = build_cohort(_read_cohort(args.input), jobs=args.jobs)
    _emit(table.to_dict(), args.out)
    return EXIT_OK


def cmd_split(args) -> int:
    table = build_cohort(_read_cohort(args.input))
    cfg = {}
    if args.overrides:
        try:
            cfg = json.loads(Path(args.overrides).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidConfig(f"cannot read overrides {args.overrides}: {exc}") from None
    if args.per_location is not None:
        cfg["per_location"] = None if args.per_location <= 0 else args.per_location
    plan = construct_test_splits(table, SplitConfig.from_dict(cfg))
    _emit(plan.to_dict(), args.out)
    return EXIT_OK


def cmd_preprocess(args) -> int:
    vol = read_volume_file(args.input)
    ax = axis_index(args.axis)
    slices = to_model_space(vol, ax, Path(args.input).name, size=args.size, jobs=args.jobs)
    # model-space slices are stacked along the third axis, one slice per position
    data = stack_slices(slices, "third")
    geometry = VolumeGeometry(data.shape, (1.0, 1.0, 1.0))
    write_volume_file(args.out, ScalarVolume(geometry, data), 16)
    _emit({"input": str(args.input), "slices": len(slices), "size": args.size, "axis": ax}, None)
    return EXIT_OK


def cmd_ensemble(args) -> int:
    maps = [as_probability(read_volume_file(p)) for p in args.inputs]
    ens = ensemble_mean(maps)
    write_volume_file(args.out, ens, 16)
    if args.mask_out:
        write_volume_file(args.mask_out, binarize(ens, args.threshold), 2)
    return EXIT_OK


def cmd_quantify(args) -> int:
    vol = read_volume_file(args.mask)
    mask = as_mask(vol) if args.threshold is None else binarize(as_probability(vol), args.threshold)
    smv = compute_smv(mask)
    payload = {"smv_ml": smv, "smi": None, "smi_units": "mL/m2" if args.height_squared else "mL/m"}
    if args.height is not None:
        payload["smi"] = compute_smi(smv, args.height, args.height_squared)
    _emit(payload, args.out)
    return EXIT_OK


def cmd_report(args) -> int:
    records = report.read_records_csv(Path(args.cases).read_text(encoding="utf-8"))
    payload = {k: subgroup_summary(records, k) for k in args.keys}
    _emit(payload, args.out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    overrides = {
        "cohort": _abs(args.cohort), "mask": args.mask, "volume": args.volume,
        "output_dir": _abs(args.output_dir), "threshold": args.threshold, "seed": args.seed,
        "jobs": args.jobs, "split_plan": _abs(args.split_plan), "split": args.split,
        "subgroup_keys": args.subgroup_keys, "ensemble": args.ensemble,
        "per_slice": True if args.per_slice else None,
    }
    if args.map:
        maps = {}
        for item in args.map:
            name, sep, template = item.partition("=")
            if not sep:
                raise InvalidConfig(f"--map expects NAME=TEMPLATE, got {item!r}")
            maps[name] = template
        overrides["maps"] = maps
    if args.config:
        cfg = load_run_config(args.config, overrides)
    else:
        cfg = RunConfig.from_dict({}, base_dir=".", overrides=overrides)
    written = run_evaluate(cfg)
    for name in sorted(written):
        print(written[name])
    return EXIT_OK


def cmd_phantom_generate(args) -> int:
    out = Path(args.out)
    rows = []
    n_maps = args.maps
    for i in range(args.n_cases):
        seed = args.seed + i
        cfg = PhantomConfig(dims=tuple(args.dims), spacing=tuple(args.spacing),
                            n_muscle_lobes=args.lobes, noise_sigma=args.noise,
                            contrast_profile=args.profile, seed=seed, location=args.location)
        vol, mask, meta = generate_phantom(cfg)
        cid = meta.series_id
        write_volume_file(out / "images" / f"{cid}.nii", vol, 16)
        write_volume_file(out / "masks" / f"{cid}.nii", mask, 2)
        for k in range(n_maps):
            pmap = simulate_probability_map(mask, args.blur, args.map_sigma, derive_seed(seed, k + 1))
            write_volume_file(out / "maps" / f"{cid}_model{k + 1}.nii", pmap, 16)
        rows.append(meta)
    (out / "cohort.csv").write_text(dump_cohort_csv(rows), encoding="utf-8")
    config = {
        "cohort": "cohort.csv",
        "mask": "masks/{case_id}.nii",
        "volume": "images/{case_id}.nii",
        "output_dir": "report",
        "threshold": 0.5,
        "seed": args.seed,
    }
    if n_maps:
        config["maps"] = {f"model{k + 1}": f"maps/{{case_id}}_model{k + 1}.nii" for k in range(n_maps)}
        if n_maps >= 2:
            config["ensemble"] = sorted(config["maps"])
    (out / "config.json").write_text(report.dumps_json(config), encoding="utf-8")
    return EXIT_OK


# --- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="muscleseg", description="Muscle segmentation evaluation toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("classify", help="classify a series and/or protocol description")
    p.add_argument("--series-description")
    p.add_argument("--protocol-description")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("cohort", help="classify a cohort file and print the frequency table")
    p.add_argument("--input", required=True, help="cohort CSV or JSON")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_cohort)

    p = sub.add_parser("split", help="construct Test-A / Test-B selections")
    p.add_argument("--input", required=True)
    p.add_argument("--overrides", help="JSON with per_location, test_a_add, test_b_add, remove")
    p.add_argument("--per-location", type=int, help="Test-A series per location (0 = all)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("preprocess", help="convert a volume to model-space slices")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--axis", default="third", choices=["first", "second", "third"])
    p.add_argument("--size", type=int, default=MODEL_SIZE)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("evaluate", help="run the evaluation pipeline")
    p.add_argument("--config")
    p.add_argument("--cohort")
    p.add_argument("--mask", help="mask path template containing {case_id}")
    p.add_argument("--volume", help="volume path template containing {case_id}")
    p.add_argument("--map", action="append", help="NAME=TEMPLATE probability map (repeatable)")
    p.add_argument("--ensemble", nargs="+", help="map names to average")
    p.add_argument("--threshold", type=float)
    p.add_argument("--subgroup-keys", nargs="+")
    p.add_argument("--output-dir")
    p.add_argument("--split-plan")
    p.add_argument("--split", choices=["all", "test_a", "test_b"])
    p.add_argument("--per-slice", action="store_true")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ensemble", help="average probability maps")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mask-out")
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("quantify", help="skeletal muscle volume and index of a mask")
    p.add_argument("--mask", required=True)
    p.add_argument("--height", type=float, help="patient height in meters")
    p.add_argument("--height-squared", action="store_true", help="divide by height^2 instead")
    p.add_argument("--threshold", type=float, help="binarize a probability map first")
    p.add_argument("--out")
    p.set_defaults(func=cmd_quantify)

    p = sub.add_parser("phantom", help="synthetic phantom cohorts")
    psub = p.add_subparsers(dest="phantom_command", parser_class=_Parser)
    g = psub.add_parser("generate", help="write phantom volumes, masks, maps and a cohort")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--n-cases", type=int, default=1)
    g.add_argument("--dims", type=int, nargs=3, default=[64, 64, 64])
    g.add_argument("--spacing", type=float, nargs=3, default=[1.0, 1.0, 1.0])
    g.add_argument("--lobes", type=int, default=4)
    g.add_argument("--noise", type=float, default=0.0)
    g.add_argument("--profile", choices=PROFILES, default="t1-like")
    g.add_argument("--location")
    g.add_argument("--maps", type=int, default=2, help="simulated model maps per case")
    g.add_argument("--blur", type=int, default=1)
    g.add_argument("--map-sigma", type=float, default=0.15)
    g.set_defaults(func=cmd_phantom_generate)
    p.set_defaults(func=None, subparser=p)

    p = sub.add_parser("report", help="subgroup summary from a cases CSV")
    p.add_argument("--cases", required=True)
    p.add_argument("--keys", nargs="+", default=list(DEFAULT_SUBGROUP_KEYS))
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def run_command(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except InvalidConfig as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    func = getattr(args, "func", None)
    if func is None:
        (getattr(args, "subparser", None) or parser).print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return func(args)
    except RunFailed as exc:
        for err in exc.failures:
            print(f"error: {err}", file=sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except InvalidConfig as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_USAGE
    except (MuscleSegError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
