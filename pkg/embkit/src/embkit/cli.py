"""Command line front end: extract embeddings, render plots."""
import argparse
import sys
import traceback

from . import __version__, extract, render
from .encoders import parse_model_spec
from .errors import EmbkitError


def _parse_layer_args(values) -> list[int]:
    """Accept plain integers and inclusive ranges written as ``a..b``."""
    layers: list[int] = []
    for value in values:
        if ".." in value:
            lo_s, hi_s = value.split("..", 1)
            lo, hi = int(lo_s), int(hi_s)
            if hi < lo:
                raise EmbkitError(f"bad layer range {value!r}")
            layers.extend(range(lo, hi + 1))
        else:
            layers.append(int(value))
    seen = set()
    unique = [l for l in layers if not (l in seen or seen.add(l))]
    return unique


def cmd_extract(args) -> int:
    try:
        layers = _parse_layer_args(args.layers)
    except ValueError as exc:
        raise EmbkitError(f"bad --layers value: {exc}") from None
    encoder = parse_model_spec(args.model)
    written = extract.extract_corpus(
        encoder,
        args.text,
        args.ids,
        layers,
        args.out,
        include_special=args.include_special,
        batch_size=args.batch_size,
        language=args.language,
    )
    for layer in sorted(written):
        print(f"layer {layer} -> {written[layer]}")
    return 0


def cmd_render(args) -> int:
    if args.kind == "pca":
        render.render_scatter(args.infile, args.out)
    else:
        render.render_heatmap(args.infile, args.out)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embkit",
        description="extract encoder embeddings and render clustering plots",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="pool per-token states into sentence vectors")
    p.add_argument("--model", required=True,
                   help="transformers model name, or hash[:dim] for the offline encoder")
    p.add_argument("--layers", nargs="+", required=True,
                   help="layer indices; 0 is the embedding layer; a..b spans a range")
    p.add_argument("--ids", required=True, help="corpus ids TSV aligned with --text")
    p.add_argument("--text", required=True, help="one sentence per line")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--include-special", action="store_true",
                   help="keep sentence boundary tokens in the mean")
    p.add_argument("--batch-size", type=int, default=32, dest="batch_size")
    p.add_argument("--language", default="")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("render", help="plot a projection or confusion TSV")
    p.add_argument("--kind", choices=("pca", "confusion"), required=True)
    p.add_argument("infile")
    p.add_argument("out")
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (EmbkitError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
