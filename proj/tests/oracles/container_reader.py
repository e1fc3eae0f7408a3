#!/usr/bin/env python3
"""Independent reader for .mfrg containers.

Usage: container_reader.py FIXTURE_DIR

Re-parses every fixture container byte by byte and checks it against the
interchange directory it was built from: layout, padding, checksum and
tensor bytes.
"""

import hashlib
import json
import struct
import sys
from math import prod
from pathlib import Path

MAGIC = b"MFRG0001"
ALIGN = 64
DTYPE_SIZE = {"F32": 4, "F16": 2}


def align_up(n: int) -> int:
    return (n + ALIGN - 1) // ALIGN * ALIGN


def check(cond: bool, what: str) -> None:
    if not cond:
        raise AssertionError(what)


def read_container(path: Path) -> tuple[dict, bytes]:
    data = path.read_bytes()
    check(data[:8] == MAGIC, f"{path.name}: magic")
    (header_len,) = struct.unpack("<I", data[8:12])
    raw = data[12 : 12 + header_len]
    header = json.loads(raw)
    canonical = json.dumps(header, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode()
    check(raw == canonical, f"{path.name}: header is not canonical JSON")
    start = align_up(12 + header_len)
    check(set(data[12 + header_len : start]) <= {0}, f"{path.name}: header padding not zero")
    size = header["payload_size"]
    check(len(data) == start + size, f"{path.name}: file length {len(data)} != {start + size}")
    payload = data[start:]
    digest = hashlib.sha256(payload).hexdigest()
    check(digest == header["manifest"]["checksum"], f"{path.name}: checksum")
    return header, payload


def check_layout(name: str, header: dict, payload: bytes) -> None:
    cursor = 0
    for t in header["tensors"]:
        check(t["offset"] % ALIGN == 0, f"{name}/{t['name']}: unaligned")
        check(t["offset"] == cursor, f"{name}/{t['name']}: offset {t['offset']} != {cursor}")
        want = prod(t["shape"]) * DTYPE_SIZE[t["dtype"]]
        check(t["nbytes"] == want, f"{name}/{t['name']}: nbytes")
        end = t["offset"] + t["nbytes"]
        cursor = align_up(end)
        check(set(payload[end:cursor]) <= {0}, f"{name}/{t['name']}: padding not zero")
    check(cursor == len(payload), f"{name}: payload size {len(payload)} != {cursor}")


def check_against_interchange(name: str, header: dict, payload: bytes, src: Path) -> None:
    manifest = json.loads((src / "manifest.json").read_text())
    stored = dict(header["manifest"])
    stored.pop("checksum")
    manifest.pop("checksum", None)
    check(stored == manifest, f"{name}: manifest differs from interchange")
    index = json.loads((src / "tensors.json").read_text())
    check([t["name"] for t in index] == [t["name"] for t in header["tensors"]], f"{name}: tensor order")
    for entry, t in zip(index, header["tensors"]):
        check(entry["dtype"] == t["dtype"] and entry["shape"] == t["shape"], f"{name}/{t['name']}: spec")
        blob = (src / f"{t['name']}.bin").read_bytes()
        check(blob == payload[t["offset"] : t["offset"] + t["nbytes"]], f"{name}/{t['name']}: bytes")


def main() -> int:
    fixture_dir = Path(sys.argv[1])
    models = sorted(fixture_dir.glob("*.mfrg"))
    check(len(models) == 3, f"expected 3 fixture models, found {len(models)}")
    for path in models:
        header, payload = read_container(path)
        check_layout(path.name, header, payload)
        check_against_interchange(path.name, header, payload, fixture_dir / (path.stem + ".interchange"))
        print(f"ok {path.name}: {len(header['tensors'])} tensors, {len(payload)} payload bytes")
    return 0


if __name__ == "__main__":
    sys.exit(main())
