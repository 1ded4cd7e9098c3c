#!/usr/bin/env python3
"""Download the UCI connect-4 data and convert it to a numeric CSV for `blb`.

The archive is verified against the SHA-256 recorded in connect4.sha256 next to
this script. When that file is missing the script stops and prints the digest
of what it downloaded; rerun with --record to accept and pin it.

Encoding (an assumption, not part of the original data description): the 42
board cells become ordinal features b=0, x=1, o=2, in file order; the label is
1 for "win" and 0 for "loss" or "draw". Output columns are c1..c42,y.
"""

import argparse
import hashlib
import io
import pathlib
import sys
import urllib.request
import zipfile

import unlzw3  # pip install unlzw3

URL = "https://archive.ics.uci.edu/static/public/26/connect+4.zip"
MEMBER = "connect-4.data.Z"
CELLS = {"b": 0, "x": 1, "o": 2}
HERE = pathlib.Path(__file__).resolve().parent
PIN = HERE / "connect4.sha256"


def convert(text: str) -> str:
    lines = ["," .join([f"c{i}" for i in range(1, 43)] + ["y"])]
    for number, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        fields = line.strip().split(",")
        if len(fields) != 43:
            raise ValueError(f"line {number}: expected 43 fields, found {len(fields)}")
        cells = [str(CELLS[f]) for f in fields[:42]]
        label = "1" if fields[42] == "win" else "0"
        lines.append(",".join(cells + [label]))
    return "\n".join(lines) + "\n"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="connect4.csv")
    parser.add_argument("--archive", help="use a local copy of the zip instead of downloading")
    parser.add_argument("--record", action="store_true", help="pin the digest of this download")
    args = parser.parse_args()

    if args.archive:
        blob = pathlib.Path(args.archive).read_bytes()
    else:
        with urllib.request.urlopen(URL) as response:
            blob = response.read()
    digest = hashlib.sha256(blob).hexdigest()

    if PIN.exists():
        pinned = PIN.read_text().split()[0]
        if digest != pinned:
            print(f"checksum mismatch: got {digest}, pinned {pinned}", file=sys.stderr)
            return 1
    elif args.record:
        PIN.write_text(f"{digest}  connect+4.zip\n")
        print(f"pinned {digest} in {PIN}", file=sys.stderr)
    else:
        print(f"no pinned checksum; downloaded archive has sha256 {digest}", file=sys.stderr)
        print("verify it against a trusted source, then rerun with --record", file=sys.stderr)
        return 1

    with zipfile.ZipFile(io.BytesIO(blob)) as archive:
        names = archive.namelist()
        if MEMBER.removesuffix(".Z") in names:
            raw = archive.read(MEMBER.removesuffix(".Z"))
        else:
            raw = unlzw3.unlzw(archive.read(MEMBER))
    csv = convert(raw.decode("ascii"))
    pathlib.Path(args.out).write_text(csv)
    rows = csv.count("\n") - 1
    print(f"wrote {rows} rows to {args.out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
