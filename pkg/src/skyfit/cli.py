"""Command-line entry point.

Subcommands cover sky rendering, panorama fitting, crop extraction,
dataset building, Lambertian relighting, image metrics, sun-error
statistics and synthetic data generation.  Angles are degrees at the
CLI boundary; HDR images travel as PFM, LDR as PNG.  A key=value
config file supplies defaults that explicit flags override, and every
run logs the fully resolved configuration.

Exit codes: 0 success, 1 input or usage error, 2 numerical failure
(a fit that did not converge under --strict).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from PIL import Image

from . import dataset, evaluation, fitting, geometry, pfm, sky_model

log = logging.getLogger("skyfit")


class _Parser(argparse.ArgumentParser):
    # usage errors exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


class InputError(Exception):
    pass


class NumericalError(Exception):
    pass


def _load_image(path):
    """PFM or LDR image file as a float (H, W, 3) array."""
    p = Path(path)
    if not p.exists():
        raise InputError(f"no such file: {p}")
    if p.suffix.lower() == ".pfm":
        data = pfm.read_pfm(p)
    else:
        data = np.asarray(Image.open(p).convert("RGB"), dtype=float) / 255.0
    if data.ndim == 2:
        data = np.repeat(data[:, :, None], 3, axis=2)
    return data


def _load_mask(path):
    p = Path(path)
    if not p.exists():
        raise InputError(f"no such file: {p}")
    return np.asarray(Image.open(p).convert("L")) > 127


def _save_image(path, pixels):
    p = Path(path)
    if p.suffix.lower() == ".pfm":
        pfm.write_pfm(p, np.asarray(pixels, dtype=np.float32))
    else:
        arr = np.clip(np.asarray(pixels) * 255.0, 0.0, 255.0)
        Image.fromarray(np.round(arr).astype(np.uint8), mode="RGB").save(p)


def _parse_size(text):
    try:
        w, h = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise InputError(f"bad size {text!r}, expected WIDTHxHEIGHT")
    return w, h


def _parse_floats(text, n, what):
    parts = text.split(",")
    if len(parts) != n:
        raise InputError(f"{what} needs {n} comma-separated values")
    return tuple(float(x) for x in parts)


def _emit(args, result):
    if args.json:
        print(json.dumps(result))
    else:
        for k, v in result.items():
            print(f"{k}: {v}")


def _cmd_render(args):
    w, h = _parse_size(args.size)
    params = sky_model.SkyParams(
        sun_dir=sky_model.sun_dir_from_angles(args.sun_elev, args.sun_az),
        turbidity=args.turbidity,
        exposure=args.exposure,
    )
    env = sky_model.render_envmap(params, w, h, supersample=args.supersample,
                                  sun=not args.no_sun)
    env.save_pfm(args.out)
    _emit(args, {"out": str(args.out), "width": w, "height": h})
    return 0


def _cmd_fit(args):
    pixels = _load_image(args.pano)
    mask = _load_mask(args.mask) if args.mask else None
    pano = geometry.Panorama(pixels, mask)
    result = fitting.fit_sky_params(pano)
    if args.out:
        result.save_json(args.out)
    if args.strict and not result.converged:
        raise NumericalError("fit did not converge")
    _emit(args, result.to_json_dict())
    return 0


def _cmd_extract(args):
    pano = geometry.Panorama(_load_image(args.pano))
    cam = geometry.CameraParams(
        elevation=args.elev, azimuth=args.az, vfov=args.vfov,
        out_width=args.width, out_height=args.height,
    )
    crop = geometry.extract_crop(pano, cam)
    _save_image(args.out, crop)
    _emit(args, {"out": str(args.out), **cam.to_json_dict()})
    return 0


def _collect_panoramas(input_path):
    p = Path(input_path)
    if p.is_dir():
        files = sorted(x for x in p.iterdir()
                       if x.suffix.lower() in (".pfm", ".png", ".jpg", ".jpeg")
                       and ".mask" not in x.name)
    elif p.exists():
        files = [Path(line.strip()) for line in p.read_text().splitlines()
                 if line.strip()]
    else:
        raise InputError(f"no such input: {p}")
    out = []
    for f in files:
        pid = f.stem
        try:
            pixels = _load_image(f)
            mask_file = f.with_suffix(f".mask.png")
            mask = _load_mask(mask_file) if mask_file.exists() else None
            out.append((pid, geometry.Panorama(pixels, mask)))
        except (InputError, ValueError, OSError) as exc:
            log.warning("skipping %s: %s", f, exc)
            out.append((pid, None))
    if not out:
        raise InputError("no panoramas found")
    return out


def _cmd_dataset_build(args):
    panos = _collect_panoramas(args.input)
    fracs = _parse_floats(args.splits, 3, "--splits")

    def fit_one(item):
        pid, pano = item
        if pano is None:
            return (pid, None, None)
        return (pid, pano, fitting.fit_sky_params(pano))

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            triples = list(pool.map(fit_one, panos))
    else:
        triples = [fit_one(item) for item in panos]

    records = dataset.build_dataset(
        triples, args.out, seed=args.seed, crops_per_pano=args.crops,
        split_fracs=fracs)
    n_bad = sum(1 for _, p, f in triples if p is not None and not f.converged)
    if args.strict and n_bad:
        raise NumericalError(f"{n_bad} panorama fits did not converge")
    _emit(args, {"out": str(args.out), "records": len(records),
                 "excluded": n_bad})
    return 0


def _cmd_relight(args):
    env = sky_model.EnvMap.load_pfm(args.env)
    mesh = evaluation.load_obj(args.obj) if args.obj else None
    setup = evaluation.RenderSetup(
        albedo=_parse_floats(args.albedo, 3, "--albedo"),
        view_dir=_parse_floats(args.view, 3, "--view"),
        size=args.size, mesh=mesh,
    )
    img, mask = evaluation.render_lambertian(env, setup)
    _save_image(args.out, img)
    if args.mask_out:
        Image.fromarray((mask * 255).astype(np.uint8), mode="L").save(args.mask_out)
    _emit(args, {"out": str(args.out), "foreground_pixels": int(mask.sum())})
    return 0


def _cmd_metrics(args):
    a = _load_image(args.a)
    b = _load_image(args.b)
    mask = _load_mask(args.mask) if args.mask else None
    report = evaluation.metric_report(a, b, mask)
    if args.out:
        with open(args.out, "w") as f:
            json.dump(report.to_json_dict(), f, indent=2)
            f.write("\n")
    _emit(args, report.to_json_dict())
    return 0


def _cmd_stats(args):
    p = Path(args.pairs)
    if not p.exists():
        raise InputError(f"no such file: {p}")
    data = json.loads(p.read_text())
    try:
        pred = np.asarray(data["pred"], dtype=float)
        true = np.asarray(data["true"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"bad pairs file: {exc}")
    stats = evaluation.sun_error_stats(pred, true)
    evaluation.write_stats_csv(stats, args.out_csv)
    figures = []
    if args.figs:
        figures = [str(f) for f in evaluation.write_stats_figures(stats, args.figs)]
    _emit(args, {"out_csv": str(args.out_csv), "figures": figures,
                 "median_deg": stats["median"]})
    return 0


def _cmd_synth(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(args.count):
        seed = args.seed + i
        pano, params = dataset.synthesize_training_pano(
            seed, width=args.width, quantize=args.quantize)
        name = f"synth_{seed:06d}"
        _save_image(out / f"{name}.png", pano.pixels)
        Image.fromarray((pano.sky_mask * 255).astype(np.uint8),
                        mode="L").save(out / f"{name}.mask.png")
        with open(out / f"{name}.json", "w") as f:
            json.dump(params.to_json_dict(), f, indent=2)
            f.write("\n")
        entries.append(name)
    _emit(args, {"out": str(out), "panoramas": entries})
    return 0


def _build_parser():
    parser = _Parser(prog="skyfit", description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--log-level", default="INFO")
    parser.add_argument("--config", default=None,
                        help="key=value file; explicit flags override it")
    parser.add_argument("--json", action="store_true",
                        help="machine-parsable JSON on stdout")
    parser.add_argument("--strict", action="store_true",
                        help="non-converged fits become exit code 2")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render a sky environment map")
    p.add_argument("--turbidity", type=float, required=True)
    p.add_argument("--sun-elev", type=float, required=True)
    p.add_argument("--sun-az", type=float, required=True)
    p.add_argument("--exposure", type=float, default=1.0)
    p.add_argument("--size", default="512x256")
    p.add_argument("--supersample", action="store_true")
    p.add_argument("--no-sun", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("fit", help="fit sky parameters to a panorama")
    p.add_argument("--pano", required=True)
    p.add_argument("--mask", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("extract", help="extract a pinhole crop")
    p.add_argument("--pano", required=True)
    p.add_argument("--elev", type=float, default=0.0)
    p.add_argument("--az", type=float, default=0.0)
    p.add_argument("--vfov", type=float, default=50.0)
    p.add_argument("--width", type=int, default=320)
    p.add_argument("--height", type=int, default=240)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("dataset", help="dataset operations")
    dsub = p.add_subparsers(dest="dataset_command", required=True)
    b = dsub.add_parser("build", help="build crops and manifest")
    b.add_argument("--input", required=True,
                   help="panorama directory or list file")
    b.add_argument("--out", required=True)
    b.add_argument("--crops", type=int, default=7)
    b.add_argument("--splits", default="0.962,0.006,0.032")
    b.set_defaults(func=_cmd_dataset_build)

    p = sub.add_parser("relight", help="Lambertian render under an env map")
    p.add_argument("--env", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mask-out", default=None)
    p.add_argument("--albedo", default="0.8,0.8,0.8")
    p.add_argument("--view", default="0,0,-1")
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--obj", default=None)
    p.set_defaults(func=_cmd_relight)

    p = sub.add_parser("metrics", help="relighting error metrics")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--mask", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("stats", help="sun-error statistics (CSV + figures)")
    p.add_argument("--pairs", required=True,
                   help='JSON file {"pred": [[x,y,z],...], "true": [...]}')
    p.add_argument("--out-csv", required=True)
    p.add_argument("--figs", default=None,
                   help="directory for rendered figure PNGs")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("synth", help="generate synthetic panoramas")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--quantize", action="store_true")
    p.set_defaults(func=_cmd_synth)

    return parser


def _read_config_file(path):
    p = Path(path)
    if not p.exists():
        raise InputError(f"no such config file: {p}")
    out = {}
    for raw in p.read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"bad config line: {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value.strip("\"'")
    return out


def _apply_config(args, config, argv):
    """Config values fill in options not given explicitly on the CLI."""
    explicit = set()
    for tok in argv:
        if tok.startswith("--"):
            explicit.add(tok[2:].split("=", 1)[0].replace("-", "_"))
    for key, value in config.items():
        if key in explicit or not hasattr(args, key):
            continue
        current = getattr(args, key)
        if isinstance(current, bool):
            value = value.lower() in ("1", "true", "yes", "on")
        elif isinstance(current, int):
            value = int(value)
        elif isinstance(current, float):
            value = float(value)
        setattr(args, key, value)
    return args


def run(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.config:
            args = _apply_config(args, _read_config_file(args.config), argv)
        logging.basicConfig(level=getattr(logging, args.log_level.upper(), 20),
                            format="%(levelname)s %(name)s: %(message)s")
        resolved = {k: v for k, v in vars(args).items() if k != "func"}
        log.info("resolved config: %s", json.dumps(resolved, default=str))
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except InputError as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        log.error("%s", exc)
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    raise SystemExit(run())


if __name__ == "__main__":
    main()
