"""``dicm``: encode, decode, rate report, comparison demo, corpus and self-test.

Exit codes: 0 success, 2 usage error, 3 data or format error, 4 internal
invariant failure.
"""

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .codec import compare, decode_stream, encode_result
from .coder import Bitstream
from .errors import DeltaICMError, OptimizationError
from .optimizer import OptimConfig, baseline_gaussian, optimize
from .pgm import read_mask, read_pgm, write_pgm
from .rate import masked_mse
from .selftest import run_all
from .report import bitrate_histogram, upsample_blocks, weight_map_grid
from .synthetic import synthetic_corpus
from .toy_codec import TransformSpec

log = logging.getLogger("deltaicm")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4

DEMO_COLUMNS = [
    "name", "width", "height", "masked_out",
    "bits_mixture", "bits_gaussian", "bpp_mixture", "bpp_gaussian", "savings",
    "mse_in_mask_mixture", "mse_in_mask_gaussian", "delta_fraction",
]

DEMO_HELP = """\
CSV columns (one row per image, input order):
  name                  image stem
  width, height         pixels
  masked_out            fraction of pixels with m = 0
  bits_mixture          payload + selection-flag bits, Gaussian + delta arm
  bits_gaussian         payload bits, Gaussian-only arm
  bpp_mixture/gaussian  the above divided by width * height
  savings               1 - bits_mixture / bits_gaussian
  mse_in_mask_*         masked MSE of the decoded image, divisor = all pixels
  delta_fraction        share of elements coded with the delta

With --gaussian-only the mixture columns are left empty. Images are
CORPUS/*.pgm; a mask CORPUS/<name>.mask.pgm is used when present, otherwise
the whole image counts. Without CORPUS a seeded synthetic corpus is used.
DICM_THREADS caps the number of worker processes.
"""


class _UsageError(Exception):
    pass


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return "%.9g" % v
    return str(v)


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _add_model_flags(p):
    p.add_argument("--lambda", dest="lam", type=float, default=1.0,
                   help="rate-distortion trade-off (default 1)")
    p.add_argument("--steps", type=int, default=500, help="descent steps (default 500)")
    p.add_argument("--step-size", type=float, default=0.05, help="step size (default 0.05)")
    p.add_argument("--seed", type=int, default=0, help="seed (default 0)")
    p.add_argument("--noise", action="store_true",
                   help="dither the rate term with seeded uniform noise")
    p.add_argument("--q", type=float, default=1.0 / 32.0,
                   help="quantization step of the block transform (default 1/32)")
    p.add_argument("--precision", type=int, default=16,
                   help="PMF table precision in bits, 8..24 (default 16)")
    p.add_argument("--support", type=int, nargs=2, default=(-255, 255), metavar=("LO", "HI"),
                   help="latent support (default -255 255)")
    p.add_argument("--gaussian-only", action="store_true",
                   help="Gaussian-only baseline (weights frozen at 1)")
    p.add_argument("--soft", action="store_true",
                   help="code the soft mixture PMF instead of hardened flags")


def _config(args):
    try:
        cfg = OptimConfig(lam=args.lam, steps=args.steps, step_size=args.step_size,
                          seed=args.seed, noise=args.noise)
        spec = TransformSpec(q=args.q)
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc
    lo, hi = args.support
    if lo > hi:
        raise _UsageError("--support LO must not exceed HI")
    if not 8 <= args.precision <= 24:
        raise _UsageError("--precision must lie in 8..24")
    return cfg, spec


def _config_echo(args, cfg, spec):
    return {
        "lambda": cfg.lam, "steps": cfg.steps, "step_size": cfg.step_size,
        "sigma_delta": cfg.sigma_delta, "w_init": cfg.w_init, "noise": cfg.noise,
        "q": spec.q, "precision": args.precision, "support": list(args.support),
        "gaussian_only": args.gaussian_only, "soft": args.soft,
    }


def _write_manifest(path, command, args, cfg, spec, inputs, outputs, seconds):
    manifest = {
        "command": command,
        "config": _config_echo(args, cfg, spec),
        "seed": cfg.seed,
        "inputs": {str(k): _sha256(k) for k in inputs},
        # outputs are keyed relative to the manifest so runs in other directories compare equal
        "outputs": {Path(os.path.relpath(k, Path(path).parent)).as_posix(): _sha256(k)
                    for k in outputs},
        "timing": {"seconds": round(seconds, 3)},
    }
    Path(path).write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def _load_pair(image_path, mask_path=None):
    x = read_pgm(image_path)
    if mask_path is None:
        return x, np.ones(x.shape, dtype=np.uint8)
    m = read_mask(mask_path)
    if m.shape != x.shape:
        raise DeltaICMError(f"mask {m.shape} does not match image {x.shape}")
    return x, m


# --- commands -----------------------------------------------------------------


def cmd_encode(args):
    cfg, spec = _config(args)
    start = time.perf_counter()
    x, m = _load_pair(args.image, args.mask)
    fit = baseline_gaussian if args.gaussian_only else optimize
    result = fit(x, m, spec, cfg)
    coded = encode_result(result, tuple(args.support), args.precision, soft=args.soft)
    out = Path(args.out) if args.out else Path(args.image).with_suffix(".dicm")
    data = coded.stream.to_bytes()
    out.write_bytes(data)
    inputs = [args.image] + ([args.mask] if args.mask else [])
    manifest = Path(str(out) + ".json")
    _write_manifest(manifest, "encode", args, cfg, spec, inputs, [out],
                    time.perf_counter() - start)
    pixels = x.size
    print(f"{out}: {coded.bits} bits (payload {coded.payload_bits}, side {coded.side_bits}), "
          f"{coded.bits / pixels:.4f} bpp, file {8 * len(data)} bits")
    return EXIT_OK


def cmd_decode(args):
    stream = Bitstream.from_bytes(Path(args.stream).read_bytes())
    decoded = decode_stream(stream)
    out = Path(args.out) if args.out else Path(args.stream).with_suffix(".decoded.pgm")
    write_pgm(out, decoded.image)
    print(f"{out}: {decoded.image.shape[1]}x{decoded.image.shape[0]}")
    return EXIT_OK


def cmd_rate(args):
    raw = Path(args.stream).read_bytes()
    stream = Bitstream.from_bytes(raw)
    decoded = decode_stream(stream)
    pixels = decoded.image.size
    bits = decoded.element_bits()
    per_channel = bits.reshape(bits.shape[0], -1)
    rows = [[str(c), per_channel.shape[1], float(per_channel[c].sum())]
            for c in range(per_channel.shape[0])]
    n = bits.size
    rows += [
        ["payload", n, stream.payload_bit_length],
        ["side", n, decoded.side_bits],
        ["params", "", 8 * len(stream.params) - decoded.side_bits],
        ["header", "", stream.header_bits],
        ["total", n, stream.payload_bit_length + decoded.side_bits],
        ["file", "", 8 * len(raw)],
    ]
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["scope", "elements", "bits", "bpp"])
    for scope, elems, b in rows:
        writer.writerow([scope, elems, _fmt(b), _fmt(b / pixels if pixels else 0.0)])
    text = buf.getvalue()
    if args.out:
        Path(args.out).write_text(text, newline="")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _demo_job(job):
    name, x, m, spec, cfg, support, precision, soft, gaussian_only = job
    pixels = x.size
    row = {"name": name, "width": x.shape[1], "height": x.shape[0],
           "masked_out": float(1.0 - np.mean(m > 0))}
    if gaussian_only:
        result = baseline_gaussian(x, m, spec, cfg)
        coded = encode_result(result, support, precision)
        mse = masked_mse(x, decode_stream(coded.stream).image, m)
        row.update(bits_gaussian=coded.bits, bpp_gaussian=coded.bits / pixels,
                   mse_in_mask_gaussian=mse)
        return row, result.weight_map
    c = compare(x, m, spec, cfg, support, precision, soft=soft)
    row.update(c.as_row())
    row.update(bpp_mixture=c.bits_mixture / pixels, bpp_gaussian=c.bits_gaussian / pixels,
               savings=c.savings, delta_fraction=c.mixture.delta_fraction)
    return row, c.mixture.weight_map


def _workers(n_jobs):
    cap = os.cpu_count() or 1
    raw = os.environ.get("DICM_THREADS")
    if raw:
        try:
            cap = min(cap, int(raw))
        except ValueError as exc:
            raise _UsageError("DICM_THREADS must be an integer") from exc
        if cap < 1:
            raise _UsageError("DICM_THREADS must be at least 1")
    return max(1, min(cap, n_jobs))


def _load_corpus(args):
    if args.corpus is None:
        return synthetic_corpus(args.count, seed=args.seed)
    root = Path(args.corpus)
    if not root.is_dir():
        raise DeltaICMError(f"corpus directory {root} not found")
    items = []
    for path in sorted(root.glob("*.pgm")):
        if path.name.endswith(".mask.pgm"):
            continue
        mask = path.with_name(path.stem + ".mask.pgm")
        x, m = _load_pair(path, mask if mask.exists() else None)
        items.append((path.stem, x, m))
    if not items:
        raise DeltaICMError(f"no .pgm images in {root}")
    return items


def cmd_demo(args):
    cfg, spec = _config(args)
    start = time.perf_counter()
    items = _load_corpus(args)
    out = Path(args.out)
    (out / "weights").mkdir(parents=True, exist_ok=True)
    jobs = [(name, x, m, spec, cfg, tuple(args.support), args.precision, args.soft,
             args.gaussian_only) for name, x, m in items]
    workers = _workers(len(jobs))
    if workers == 1:
        results = [_demo_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_demo_job, jobs))

    csv_path = out / "demo.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DEMO_COLUMNS)
        for row, _ in results:
            writer.writerow([_fmt(row.get(col)) for col in DEMO_COLUMNS])

    outputs = [csv_path]
    panels = []
    for (name, x, m), (_, wmap) in zip(items, results):
        pix = upsample_blocks(wmap, x.shape, spec.block)
        path = out / "weights" / f"{name}.pgm"
        write_pgm(path, pix)
        outputs.append(path)
        panels.append((name, x, m, pix))

    hist = out / "bitrate_hist.png"
    grid = out / "weight_maps.png"
    bpp_m = [r["bpp_mixture"] for r, _ in results if "bpp_mixture" in r]
    bpp_g = [r["bpp_gaussian"] for r, _ in results]
    bitrate_histogram(bpp_m, bpp_g, hist)
    weight_map_grid(panels[:8], grid)
    outputs += [hist, grid]
    _write_manifest(out / "manifest.json", "demo", args, cfg, spec,
                    [] if args.corpus is None else [p for p in sorted(Path(args.corpus).glob("*.pgm"))],
                    outputs, time.perf_counter() - start)

    mean_g = float(np.mean(bpp_g)) if bpp_g else 0.0
    line = f"{len(results)} images, mean bpp Gaussian {mean_g:.4f}"
    if bpp_m:
        line += f", mixture {float(np.mean(bpp_m)):.4f}"
    print(f"{csv_path}: {line}")
    return EXIT_OK


def cmd_corpus(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, x, m in synthetic_corpus(args.count, seed=args.seed):
        write_pgm(out / f"{name}.pgm", x)
        write_pgm(out / f"{name}.mask.pgm", m.astype(np.uint8) * 255)
    print(f"{out}: {args.count} images with masks")
    return EXIT_OK


def cmd_selftest(args):
    failures = 0
    for name, ok, detail in run_all():
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failures += not ok
    return EXIT_OK if failures == 0 else EXIT_INTERNAL


# --- entry point ----------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="dicm", description=(
        "Gaussian + delta entropy modelling for region-masked image coding."))
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="fit the entropy model and write a .dicm stream")
    p.add_argument("image", help="P5 PGM image")
    p.add_argument("--mask", help="P5 PGM mask (>= 128 is in); default: whole image")
    p.add_argument("--out", help="output stream (default IMAGE.dicm)")
    _add_model_flags(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a .dicm stream to PGM")
    p.add_argument("stream")
    p.add_argument("--out", help="output image (default STREAM.decoded.pgm)")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("rate", help="CSV bit report of a .dicm stream")
    p.add_argument("stream")
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("demo", help="mixture vs Gaussian-only comparison over a corpus",
                       epilog=DEMO_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("corpus", nargs="?", help="directory of PGM images (default: synthetic)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, default=20, help="synthetic corpus size (default 20)")
    _add_model_flags(p)
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("corpus", help="write the seeded synthetic corpus as PGM files")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_corpus)

    p = sub.add_parser("selftest", help="run the quick invariant checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"dicm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OptimizationError, AssertionError) as exc:
        log.error("internal failure: %s", exc)
        return EXIT_INTERNAL
    except (DeltaICMError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
