"""Regenerates the archive fixtures used by the data-io tests.

    python3 tests/data/make_fixtures.py

Writes a deflate-compressed dSprites-style archive (numpy's own writer) and the same
arrays in a hand-assembled ZIP64 container with stored members.
"""
import io
import struct
import zlib
from pathlib import Path

import numpy as np

HERE = Path(__file__).resolve().parent
CARD = [1, 3, 6, 40, 32, 32]


def arrays():
    rng = np.random.default_rng(7)
    n = 6
    imgs = (rng.random((n, 64, 64)) < 0.2).astype(np.uint8)
    classes = np.stack([rng.integers(0, c, n) for c in CARD], axis=1).astype("<i8")
    values = rng.random((n, 6))
    return {"imgs": imgs, "latents_classes": classes, "latents_values": values}


def npy_bytes(a):
    buf = io.BytesIO()
    np.lib.format.write_array(buf, a, version=(1, 0))
    return buf.getvalue()


def zip64(members):
    """Stored members whose central records carry every size and offset in a 0x0001 extra field."""
    out = bytearray()
    central = bytearray()
    for name, data in members.items():
        fname = name.encode()
        crc = zlib.crc32(data)
        offset = len(out)
        local_extra = struct.pack("<HHQQ", 0x0001, 16, len(data), len(data))
        out += struct.pack("<IHHHHHIIIHH", 0x04034B50, 45, 0, 0, 0, 0x21, crc, 0xFFFFFFFF, 0xFFFFFFFF,
                           len(fname), len(local_extra))
        out += fname + local_extra + data
        extra = struct.pack("<HHQQQ", 0x0001, 24, len(data), len(data), offset)
        central += struct.pack("<IHHHHHHIIIHHHHHII", 0x02014B50, 45, 45, 0, 0, 0, 0x21, crc, 0xFFFFFFFF,
                               0xFFFFFFFF, len(fname), len(extra), 0, 0, 0, 0, 0xFFFFFFFF)
        central += fname + extra
    cd_offset = len(out)
    out += central
    eocd64_offset = len(out)
    count = len(members)
    out += struct.pack("<IQHHIIQQQQ", 0x06064B50, 44, 45, 45, 0, 0, count, count, len(central), cd_offset)
    out += struct.pack("<IIQI", 0x07064B50, 0, eocd64_offset, 1)
    out += struct.pack("<IHHHHIIH", 0x06054B50, 0xFFFF, 0xFFFF, 0xFFFF, 0xFFFF, 0xFFFFFFFF, 0xFFFFFFFF, 0)
    return bytes(out)


def main():
    a = arrays()
    np.savez_compressed(HERE / "sprites_deflate.npz", **a)
    (HERE / "sprites_zip64.npz").write_bytes(zip64({k + ".npy": npy_bytes(v) for k, v in a.items()}))
    np.savez_compressed(HERE / "sprites_no_classes.npz", imgs=a["imgs"], latents_values=a["latents_values"])
    # expected contents for the C++ side: per-row pixel sums and the factor rows
    with open(HERE / "sprites_expected.txt", "w") as f:
        for i in range(a["imgs"].shape[0]):
            f.write(" ".join(str(int(v)) for v in [a["imgs"][i].sum(), *a["latents_classes"][i, 1:]]) + "\n")


if __name__ == "__main__":
    main()
