"""Convert the SumMe / TVSum HDF5 benchmark files into the framegraph dataset
format (see FORMAT.md).

Only the interface exists so far: argument parsing, the expected input
layout and the output contract. The conversion itself is not implemented;
the Rust crate's test suite runs entirely on synthetic data.

Usage:
    python converter/convert.py convert --input eccv16_dataset_tvsum_google_pool5.h5 \
        --output data/tvsum --dataset tvsum
"""

import argparse
import sys
from pathlib import Path

# Per-video HDF5 group keys the converter reads.
REQUIRED_KEYS = (
    "features",
    "gtscore",
    "change_points",
    "n_frames",
    "picks",
    "user_summary",
    "n_frame_per_seg",
)

EXPECTED_VIDEOS = {"tvsum": 50, "summe": 25}


class ConversionError(Exception):
    """A source file is missing a key or does not match the expected layout."""


def convert(h5_path: Path, out_dir: Path, dataset: str) -> Path:
    """Write `<out_dir>/<dataset>.json` and `<dataset>.bin`; return the manifest path.

    Contract: every array is copied elementwise without change (features as
    f32, indices as u32/u64, user summaries as u8); change points become
    inclusive [start, end] ranges covering [0, n_frames), and any adjustment
    is logged per video; the result loads with `read_dataset` and holds
    EXPECTED_VIDEOS[dataset] records. A missing key raises ConversionError
    naming the video and key.
    """
    raise NotImplementedError("HDF5 conversion is not implemented yet")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="convert", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    conv = sub.add_parser("convert", help="convert one benchmark HDF5 file")
    conv.add_argument("--input", required=True, type=Path)
    conv.add_argument("--output", required=True, type=Path)
    conv.add_argument("--dataset", required=True, choices=sorted(EXPECTED_VIDEOS))
    args = parser.parse_args(argv)
    try:
        manifest = convert(args.input, args.output, args.dataset)
    except (ConversionError, NotImplementedError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(manifest)
    return 0


if __name__ == "__main__":
    sys.exit(main())
