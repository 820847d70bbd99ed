#!/usr/bin/env python3
"""Regenerates golden_manifest.csv and its images.

Poses are written down by hand below; the derived columns (2D landmarks,
on-screen pixels) are computed here with numpy, independently of the C++ code.
"""
import struct
import zlib
from pathlib import Path

import numpy as np

HERE = Path(__file__).resolve().parent
SIZE = 64
FOCAL = 0.4 * SIZE * 600.0 / 62.0
CENTER = 0.5 * (SIZE - 1)

# Head-frame layout: four eye corners then two mouth corners, centroid at 0.
LOCAL = np.array([[-45, -10, 0], [-15, -10, 0], [15, -10, 0], [45, -10, 0],
                  [-25, 20, 0], [25, 20, 0]], dtype=float)

SCREEN_ORIGIN = np.array([-268.8, 10.0, 0.0])
PITCH = 0.28


def ry(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def rx(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def rz(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def png(path, img):
    raw = b"".join(b"\x00" + bytes(row) for row in img)

    def chunk(tag, data):
        body = tag + data
        return struct.pack(">I", len(data)) + body + struct.pack(">I", zlib.crc32(body) & 0xFFFFFFFF)

    ihdr = struct.pack(">IIBBBBB", img.shape[1], img.shape[0], 8, 0, 0, 0, 0)
    path.write_bytes(b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", ihdr) +
                     chunk(b"IDAT", zlib.compress(raw, 9)) + chunk(b"IEND", b""))


def image(seed):
    y, x = np.mgrid[0:SIZE, 0:SIZE]
    v = 40 + 2 * x + 30 * (((x - 32) ** 2 + (y - 28 - seed) ** 2) < 100)
    return np.clip(v, 0, 255).astype(np.uint8)


ROWS = [
    # person, rotation, reference point, gaze target, has screen
    (1, np.eye(3), np.array([0.0, 0.0, 600.0]), np.array([-100.0, 50.0, 0.0]), True),
    (1, ry(np.deg2rad(10.0)), np.array([100.0, 0.0, 600.0]), np.array([50.0, 20.0, 0.0]), True),
    (2, ry(-0.2) @ rx(-0.15) @ rz(0.05), np.array([-40.0, 30.0, 550.0]),
     np.array([10.0, -20.0, 0.0]), False),
]


def fmt(v):
    return repr(float(v))


def main():
    cols = ["person_id", "image", "fx", "fy", "cx", "cy"]
    cols += [f"lm{i}_{a}" for i in range(6) for a in "xy"]
    cols += [f"lm3d{i}_{a}" for i in range(6) for a in "xyz"]
    cols += [f"r{i}{j}" for i in range(3) for j in range(3)]
    cols += ["tx", "ty", "tz", "gaze_x", "gaze_y", "gaze_z"]
    cols += [f"screen_r{i}{j}" for i in range(3) for j in range(3)]
    cols += ["screen_tx", "screen_ty", "screen_tz", "pitch_x", "pitch_y", "res_w", "res_h",
             "screen_px_x", "screen_px_y"]
    lines = [",".join(cols)]
    for n, (pid, rot, ref, target, screen) in enumerate(ROWS):
        name = f"img{n}.png"
        png(HERE / name, image(n))
        lm3d = ref + LOCAL @ rot.T
        lm2d = [(FOCAL * p[0] / p[2] + CENTER, FOCAL * p[1] / p[2] + CENTER) for p in lm3d]
        row = [str(pid), name, fmt(FOCAL), fmt(FOCAL), fmt(CENTER), fmt(CENTER)]
        row += [fmt(c) for p in lm2d for c in p]
        row += [fmt(c) for p in lm3d for c in p]
        row += [fmt(c) for c in rot.ravel()]
        row += [fmt(c) for c in ref] + [fmt(c) for c in target]
        if screen:
            px = (target[:2] - SCREEN_ORIGIN[:2]) / PITCH
            row += [fmt(c) for c in np.eye(3).ravel()]
            row += [fmt(c) for c in SCREEN_ORIGIN] + [fmt(PITCH), fmt(PITCH), "1920", "1080"]
            row += [fmt(px[0]), fmt(px[1])]
        else:
            row += [""] * 18
        lines.append(",".join(row))
    (HERE / "golden_manifest.csv").write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
