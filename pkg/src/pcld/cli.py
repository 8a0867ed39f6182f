"""Command-line front end: compress, decompress, eval, fit and penalty.

Exit status is 0 on success, 1 for input errors (bad flags, unreadable or
corrupt files) and 2 for anything unexpected.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .container import CODERS, PREDICTORS, SCANS, WIDTHS, CodecConfig, decompress, encode_image
from .entropy import PIXEL, discretize_laplace, golomb_bits_2q, golomb_penalty_curve, optimal_m, zigzag_probs
from .errors import PcldError
from .linalg import normal_solve
from .pixio import Image, load_pgm, save_pgm
from .predict import AVG, MED, PredictorKind, PredictorParams, image_samples, predict_array
from .width import KAPPA_GRID

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2

EVAL_HELP = """\
CSV columns, in order:
  image            file name (the final aggregate row uses ALL)
  predictor        med, avg or ls
  scan             raster or haar
  mae              mean |x - mu| of the predictor, 0..255 scale
  bpp_<w>_<c>      bits/pixel for width model <w> and coder <c>, one column
                   per selected pair, widths outer and coders inner
  header_<w>       header bits for width model <w>
  seconds          wall time spent on the row

bits/pixel counts the measured payload of the encoded file plus its header.
--ideal swaps the payload for the model cross-entropy, --no-header drops the
header term. The aggregate row is pixel-weighted over all successful images.
"""


class _Parser(argparse.ArgumentParser):
    """Usage errors are input errors, so they share exit status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _csv_list(allowed):
    def parse(text):
        items = [t.strip() for t in text.split(",") if t.strip()]
        bad = [t for t in items if t not in allowed]
        if bad or not items:
            raise argparse.ArgumentTypeError(f"choose from {','.join(allowed)}")
        return items

    return parse


def _kappa(text):
    k = float(text)
    if k not in KAPPA_GRID:
        raise argparse.ArgumentTypeError(f"kappa must be one of {KAPPA_GRID}")
    return k


def _add_model_flags(p):
    p.add_argument("--scan", choices=SCANS, default="raster")
    p.add_argument("--cycles", type=int, default=None, help="Haar levels (haar scan only)")
    p.add_argument("--kappa", type=_kappa, default=1.0, help="exponential power shape, one of 0.5,1,1.5,2")
    p.add_argument("--adaptive", action="store_true", help="track b online instead of storing a width model")
    p.add_argument("--share-cycles", action="store_true", help="one detail model per scan type for all cycles")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pcld", description="Lossless grayscale codec with parametric Laplace residue models.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("compress", help="encode a PGM file")
    c.add_argument("--input", required=True)
    c.add_argument("--output", required=True)
    c.add_argument("--predictor", choices=PREDICTORS, default="ls")
    c.add_argument("--width", choices=WIDTHS, default="lin4")
    c.add_argument("--coder", choices=CODERS, default="accurate")
    _add_model_flags(c)

    d = sub.add_parser("decompress", help="restore a PGM file")
    d.add_argument("--input", required=True)
    d.add_argument("--output", required=True)

    e = sub.add_parser(
        "eval", help="bits/pixel table for a directory of PGM files",
        epilog=EVAL_HELP, formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    e.add_argument("directory")
    e.add_argument("--predictors", type=_csv_list(PREDICTORS), default=["ls"])
    e.add_argument("--widths", type=_csv_list(WIDTHS), default=list(WIDTHS))
    e.add_argument("--coders", type=_csv_list(CODERS), default=list(CODERS))
    e.add_argument("--ideal", action="store_true", help="report model cross-entropy instead of file size")
    e.add_argument("--no-header", action="store_true", help="leave header bits out of bits/pixel")
    e.add_argument("--jobs", type=int, default=1, help="worker processes")
    _add_model_flags(e)

    f = sub.add_parser("fit", help="one least-squares predictor fitted over all images of a directory")
    f.add_argument("directory")

    p = sub.add_parser("penalty", help="cost of power-of-2 Golomb codes against the entropy")
    p.add_argument("--b-min", type=float, default=2.0)
    p.add_argument("--b-max", type=float, default=64.0)
    p.add_argument("--steps", type=int, default=15, help="geometric grid points between b-min and b-max")
    return parser


def _config(args, width="lin4", coder="accurate", predictor="ls") -> CodecConfig:
    return CodecConfig(
        predictor=getattr(args, "predictor", predictor),
        width=getattr(args, "width", width),
        coder=getattr(args, "coder", coder),
        scan=args.scan,
        cycles=args.cycles,
        kappa=args.kappa,
        adaptive=args.adaptive,
        share_cycles=args.share_cycles,
    ).validate()


def cmd_compress(args) -> int:
    config = _config(args)
    img = load_pgm(args.input)
    result = encode_image(img, config)
    Path(args.output).write_bytes(result.data)
    print(
        f"{args.input}: {img.width}x{img.height} -> {len(result.data)} bytes, "
        f"{result.bits_per_pixel(img.width * img.height):.4f} bits/pixel",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_decompress(args) -> int:
    img = decompress(Path(args.input).read_bytes())
    save_pgm(img, args.output)
    return EXIT_OK


def _predictor_for(name: str, img: Image) -> PredictorParams:
    if name == "med":
        return MED
    if name == "avg":
        return AVG
    P, x = image_samples(img)
    return PredictorParams(PredictorKind.LINEAR, tuple(normal_solve(P, x, strict=False).tolist()))


def _eval_one(path: Path, args) -> list[dict]:
    img = load_pgm(path)
    n = img.width * img.height
    rows = []
    for pred in args.predictors:
        t0 = time.perf_counter()
        P, x = image_samples(img)
        mae = float(np.mean(np.abs(x - predict_array(_predictor_for(pred, img), P)))) * 255.0
        row = {"image": path.name, "predictor": pred, "scan": args.scan, "mae": mae, "pixels": n}
        for w in args.widths:
            for c in args.coders:
                # adaptive mode only drives the single-b model, other widths stay static
                cfg = CodecConfig(
                    predictor=pred, width=w, coder=c, scan=args.scan, cycles=args.cycles,
                    kappa=args.kappa, adaptive=args.adaptive and w == "single", share_cycles=args.share_cycles,
                ).validate()
                res = encode_image(img, cfg)
                bits = res.ideal_bits if args.ideal else res.payload_bits
                row[f"bits_{w}_{c}"] = bits + (0 if args.no_header else res.header_bits)
                row[f"header_{w}"] = res.header_bits
        row["seconds"] = time.perf_counter() - t0
        rows.append(row)
    return rows


def _safe_eval(path: Path, args):
    try:
        return _eval_one(path, args), None
    except (PcldError, OSError, ValueError) as exc:
        return None, f"{path.name}: {exc}"


def cmd_eval(args) -> int:
    # usage check before any work, so a bad combination never prints a table
    for w in args.widths:
        _config(args, width=w)
    root = Path(args.directory)
    if not root.is_dir():
        print(f"pcld eval: not a directory: {root}", file=sys.stderr)
        return EXIT_INPUT
    files = sorted(p for p in root.iterdir() if p.is_file() and p.suffix.lower() in (".pgm", ".pnm"))
    pairs = [(w, c) for w in args.widths for c in args.coders]
    columns = (
        ["image", "predictor", "scan", "mae"]
        + [f"bpp_{w}_{c}" for w, c in pairs]
        + [f"header_{w}" for w in args.widths]
        + ["seconds"]
    )
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(columns)
    if args.jobs > 1 and len(files) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_safe_eval, files, [args] * len(files)))
    else:
        results = [_safe_eval(p, args) for p in files]

    totals: dict[str, dict] = {}
    for rows, warning in results:
        if warning:
            print(f"warning: skipped {warning}", file=sys.stderr)
            continue
        for row in rows:
            n = row["pixels"]
            out.writerow(
                [row["image"], row["predictor"], row["scan"], f"{row['mae']:.4f}"]
                + [f"{row[f'bits_{w}_{c}'] / n:.4f}" for w, c in pairs]
                + [row[f"header_{w}"] for w in args.widths]
                + [f"{row['seconds']:.3f}"]
            )
            agg = totals.setdefault(row["predictor"], {"pixels": 0, "mae": 0.0, "seconds": 0.0})
            agg["pixels"] += n
            agg["mae"] += row["mae"] * n
            agg["seconds"] += row["seconds"]
            for key in [f"bits_{w}_{c}" for w, c in pairs] + [f"header_{w}" for w in args.widths]:
                agg[key] = agg.get(key, 0) + row[key]

    for pred in args.predictors:
        agg = totals.get(pred)
        if agg is None:
            continue
        n = agg["pixels"]
        out.writerow(
            ["ALL", pred, args.scan, f"{agg['mae'] / n:.4f}"]
            + [f"{agg[f'bits_{w}_{c}'] / n:.4f}" for w, c in pairs]
            + [agg[f"header_{w}"] for w in args.widths]
            + [f"{agg['seconds']:.3f}"]
        )
    if not totals:
        print("pcld eval: no image could be evaluated", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


def cmd_fit(args) -> int:
    root = Path(args.directory)
    if not root.is_dir():
        print(f"pcld fit: not a directory: {root}", file=sys.stderr)
        return EXIT_INPUT
    designs, targets = [], []
    for path in sorted(p for p in root.iterdir() if p.suffix.lower() in (".pgm", ".pnm")):
        try:
            P, x = image_samples(load_pgm(path))
        except (PcldError, OSError) as exc:
            print(f"warning: skipped {path.name}: {exc}", file=sys.stderr)
            continue
        designs.append(P)
        targets.append(x)
    if not designs:
        print("pcld fit: no image could be read", file=sys.stderr)
        return EXIT_INPUT
    P, x = np.concatenate(designs), np.concatenate(targets)
    alpha = normal_solve(P, x)
    mae = float(np.mean(np.abs(x - P @ alpha))) * 255.0
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["images", "alpha_A", "alpha_B", "alpha_C", "alpha_D", "mae"])
    out.writerow([len(designs)] + [f"{a:.6f}" for a in alpha] + [f"{mae:.4f}"])
    return EXIT_OK


def penalty_rows(b_min: float, b_max: float, steps: int) -> list[tuple]:
    """``(b, m, golomb, entropy, penalty, golomb_2q)`` on a geometric grid of scales.

    ``golomb_2q`` uses the ``2q + 1 + m`` codeword accounting at the same ``m``
    for comparison with the rows above it.
    """
    grid = np.geomspace(b_min, b_max, steps) if steps > 1 else np.array([b_min])
    rows = []
    for b, golomb, entropy in golomb_penalty_curve(grid.tolist()):
        m = optimal_m(b)
        pu = zigzag_probs(discretize_laplace(b, PIXEL.size))
        alt = float(sum(pu[u] * golomb_bits_2q(u, m) for u in range(len(pu))))
        rows.append((b, m, golomb, entropy, golomb / entropy - 1.0, alt))
    return rows


def cmd_penalty(args) -> int:
    if not (0 < args.b_min <= args.b_max) or args.steps < 1 or not math.isfinite(args.b_max):
        print("pcld penalty: need 0 < b-min <= b-max and steps >= 1", file=sys.stderr)
        return EXIT_INPUT
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["b", "m", "golomb_bits", "entropy_bits", "relative_penalty", "golomb_bits_2q"])
    for b, m, g, h, pen, alt in penalty_rows(args.b_min, args.b_max, args.steps):
        out.writerow([f"{b:.4f}", m, f"{g:.6f}", f"{h:.6f}", f"{pen:.6f}", f"{alt:.6f}"])
    return EXIT_OK


COMMANDS = {
    "compress": cmd_compress,
    "decompress": cmd_decompress,
    "eval": cmd_eval,
    "fit": cmd_fit,
    "penalty": cmd_penalty,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (PcldError, OSError) as exc:
        print(f"pcld {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # pragma: no cover - last-resort guard
        print(f"pcld {args.command}: internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
