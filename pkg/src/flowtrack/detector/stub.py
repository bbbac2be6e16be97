"""Minimal external detector speaking the stdin/stdout protocol.

Run as ``python -m flowtrack.detector.stub [--delay-ms N] [--record LINE ...]``.
Each request is answered with the fixed record list after an optional delay.
"""

from __future__ import annotations

import argparse
import sys
import time


def serve(stdin, stdout, records: list[str], delay: float) -> int:
    while True:
        header = stdin.readline()
        if not header:
            return 0
        parts = header.split()
        if len(parts) != 4 or parts[0] != b"DETECT":
            stdout.write(b"ERR bad request\n")
            stdout.flush()
            return 1
        w, h = int(parts[2]), int(parts[3])
        need = w * h * 3
        got = 0
        while got < need:
            chunk = stdin.read(need - got)
            if not chunk:
                return 1
            got += len(chunk)
        if delay > 0:
            time.sleep(delay)
        body = "".join(r + "\n" for r in records)
        stdout.write(f"OK {len(records)}\n{body}".encode("ascii"))
        stdout.flush()


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--delay-ms", type=float, default=0.0, help="sleep per request")
    ap.add_argument("--record", action="append", default=[],
                    help="response record 'class x y w h conf rle' (repeatable)")
    args = ap.parse_args(argv)
    return serve(sys.stdin.buffer, sys.stdout.buffer, args.record, args.delay_ms / 1000.0)


if __name__ == "__main__":
    sys.exit(main())
