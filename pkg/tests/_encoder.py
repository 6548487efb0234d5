"""Minimal baseline grayscale JPEG writer used only as an independent test path."""

import struct

import numpy as np

from gfrkit.jpeg import ZIGZAG

DC_BITS = [0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0]
DC_VALS = list(range(12))
AC_BITS = [0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 0x7D]
AC_VALS = bytes.fromhex(
    "01020300041105122131410613516107227114328191a1082342b1c11552d1f0"
    "2433627282090a161718191a25262728292a3435363738393a434445464748494a"
    "535455565758595a636465666768696a737475767778797a838485868788898a"
    "92939495969798999aa2a3a4a5a6a7a8a9aab2b3b4b5b6b7b8b9bac2c3c4c5c6"
    "c7c8c9cad2d3d4d5d6d7d8d9dae1e2e3e4e5e6e7e8e9eaf1f2f3f4f5f6f7f8f9fa")


def _codes(bits, vals):
    table, code, k = {}, 0, 0
    for length in range(1, 17):
        for _ in range(bits[length - 1]):
            table[vals[k]] = (code, length)
            code += 1
            k += 1
        code <<= 1
    return table


class _Bits:
    def __init__(self):
        self.out = bytearray()
        self.acc = 0
        self.n = 0

    def put(self, value, length):
        for i in range(length - 1, -1, -1):
            self.acc = (self.acc << 1) | ((value >> i) & 1)
            self.n += 1
            if self.n == 8:
                self.out.append(self.acc)
                if self.acc == 0xFF:
                    self.out.append(0)
                self.acc = self.n = 0

    def flush(self):
        if self.n:
            self.put((1 << (8 - self.n)) - 1, 8 - self.n)


def _magnitude(v):
    s = int(abs(v)).bit_length()
    bits = v if v >= 0 else v + (1 << s) - 1
    return s, bits


def _segment(marker, payload):
    return struct.pack(">BBH", 0xFF, marker, len(payload) + 2) + payload


def encode(jpeg, restart_interval=0, qtable_16bit=False):
    dc, ac = _codes(DC_BITS, DC_VALS), _codes(AC_BITS, list(AC_VALS))
    q = jpeg.qtable.entries
    out = bytearray(b"\xff\xd8")
    if qtable_16bit:
        out += _segment(0xDB, bytes([0x10]) + struct.pack(">64H", *q))
    else:
        out += _segment(0xDB, bytes([0]) + bytes(q))
    out += _segment(0xC0, struct.pack(">BHHB", 8, jpeg.height, jpeg.width, 1) + bytes([1, 0x11, 0]))
    out += _segment(0xC4, bytes([0x00] + DC_BITS + DC_VALS))
    out += _segment(0xC4, bytes([0x10] + AC_BITS) + AC_VALS)
    if restart_interval:
        out += _segment(0xDD, struct.pack(">H", restart_interval))
    out += _segment(0xDA, bytes([1, 1, 0x00, 0, 63, 0]))
    blocks = jpeg.coeffs.reshape(-1, 64)
    bits = _Bits()
    pred = 0
    for i, blk in enumerate(blocks):
        if restart_interval and i and i % restart_interval == 0:
            bits.flush()
            out += bits.out + bytes([0xFF, 0xD0 + (i // restart_interval - 1) % 8])
            bits = _Bits()
            pred = 0
        zz = [int(v) for v in np.asarray(blk)[ZIGZAG]]
        s, m = _magnitude(zz[0] - pred)
        pred = zz[0]
        bits.put(*dc[s])
        bits.put(m, s)
        run = 0
        for v in zz[1:]:
            if v == 0:
                run += 1
                continue
            while run > 15:
                bits.put(*ac[0xF0])
                run -= 16
            s, m = _magnitude(v)
            bits.put(*ac[(run << 4) | s])
            bits.put(m, s)
            run = 0
        if run:
            bits.put(*ac[0x00])
    bits.flush()
    out += bits.out + b"\xff\xd9"
    return bytes(out)
