"""Baseline grayscale JPEG parsing and unrounded decompression.

Only what steganalysis needs: the quantized DCT coefficients exactly as they
were entropy coded, the luminance quantization table, and a real-valued
decompressed plane that is never rounded or clamped.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import (
    FormatError,
    HuffmanDecodeError,
    InvalidMarker,
    MultiComponentUnsupported,
    ProgressiveUnsupported,
    TruncatedStream,
)

# ZIGZAG[k] is the natural (row-major) index of the k-th zig-zag coefficient.
ZIGZAG = np.array([
    0, 1, 8, 16, 9, 2, 3, 10,
    17, 24, 32, 25, 18, 11, 4, 5,
    12, 19, 26, 33, 40, 48, 41, 34,
    27, 20, 13, 6, 7, 14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36,
    29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46,
    53, 60, 61, 54, 47, 55, 62, 63,
])

# Annex K luminance table, natural order.
STD_LUMINANCE_QTABLE = np.array([
    16, 11, 10, 16, 24, 40, 51, 61,
    12, 12, 14, 19, 26, 58, 60, 55,
    14, 13, 16, 24, 40, 57, 69, 56,
    14, 17, 22, 29, 51, 87, 80, 62,
    18, 22, 37, 56, 68, 109, 103, 77,
    24, 35, 55, 64, 81, 104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
])

_SOF_PROGRESSIVE = {0xC2, 0xC6, 0xCA, 0xCE}
_SOF_SEQUENTIAL = {0xC0, 0xC1}
_SOF_OTHER = {0xC3, 0xC5, 0xC7, 0xC9, 0xCB, 0xCD, 0xCF}
_RST = range(0xD0, 0xD8)


@dataclass(frozen=True)
class QuantTable:
    """64 quantization steps stored in zig-zag order."""

    entries: tuple
    precision: int = 8

    def __post_init__(self):
        if len(self.entries) != 64:
            raise ValueError("a quantization table has exactly 64 entries")
        if min(self.entries) < 1:
            raise ValueError("quantization steps must be >= 1")
        if self.precision not in (8, 16):
            raise ValueError("precision must be 8 or 16 bits")

    @classmethod
    def from_natural(cls, table, precision=None):
        flat = np.asarray(table, dtype=np.int64).reshape(64)
        if precision is None:
            precision = 8 if flat.max() < 256 else 16
        return cls(tuple(int(v) for v in flat[ZIGZAG]), precision)

    @property
    def natural(self) -> np.ndarray:
        """The table as an 8x8 matrix indexed by DCT mode (k, l)."""
        out = np.empty(64, dtype=np.float64)
        out[ZIGZAG] = self.entries
        return out.reshape(8, 8)

    def is_symmetric(self) -> bool:
        q = self.natural
        return bool(np.array_equal(q, q.T))


def standard_qtable(quality: int) -> QuantTable:
    """IJG-scaled luminance table for a quality factor in 1..100."""
    if not 1 <= quality <= 100:
        raise ValueError("quality must be in 1..100")
    scale = 5000 // quality if quality < 50 else 200 - 2 * quality
    q = (STD_LUMINANCE_QTABLE * scale + 50) // 100
    return QuantTable.from_natural(np.clip(q, 1, 255), precision=8)


def estimate_quality(qtable: QuantTable):
    """Quality factor whose IJG table equals ``qtable`` exactly, else None."""
    entries = qtable.entries
    for quality in range(1, 101):
        if standard_qtable(quality).entries == entries:
            return quality
    return None


@dataclass(frozen=True)
class QuantizedJpeg:
    width: int
    height: int
    coeffs: np.ndarray  # (blocks_h, blocks_w, 8, 8) int32, natural order
    qtable: QuantTable
    quality_hint: int | None = None

    def __post_init__(self):
        c = self.coeffs
        if c.ndim != 4 or c.shape[2:] != (8, 8):
            raise ValueError("coeffs must have shape (blocks_h, blocks_w, 8, 8)")
        if c.shape[0] != math.ceil(self.height / 8) or c.shape[1] != math.ceil(self.width / 8):
            raise ValueError("block grid does not match the image geometry")

    @property
    def blocks_h(self) -> int:
        return self.coeffs.shape[0]

    @property
    def blocks_w(self) -> int:
        return self.coeffs.shape[1]

    def with_coeffs(self, coeffs) -> "QuantizedJpeg":
        return QuantizedJpeg(self.width, self.height, np.asarray(coeffs, dtype=np.int32),
                             self.qtable, self.quality_hint)


@dataclass(frozen=True)
class SpatialImage:
    data: np.ndarray = field(repr=False)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]


# ---------------------------------------------------------------------------
# transforms

@lru_cache(maxsize=None)
def dct_matrix() -> np.ndarray:
    """C[i, x] = (w_i / 2) cos(pi i (2x+1) / 16); orthonormal, so idct is C.T @ D @ C."""
    c = np.empty((8, 8))
    for i in range(8):
        w = 1 / math.sqrt(2) if i == 0 else 1.0
        for x in range(8):
            c[i, x] = w / 2 * math.cos(math.pi * i * (2 * x + 1) / 16)
    c.setflags(write=False)
    return c


def idct_block(block) -> np.ndarray:
    c = dct_matrix()
    return c.T @ np.asarray(block, dtype=np.float64) @ c


def dct_block(block) -> np.ndarray:
    c = dct_matrix()
    return c @ np.asarray(block, dtype=np.float64) @ c.T


def dequantize(jpeg: QuantizedJpeg) -> np.ndarray:
    return jpeg.coeffs.astype(np.float64) * jpeg.qtable.natural


def decompress_unrounded(jpeg: QuantizedJpeg) -> SpatialImage:
    """Dequantize, inverse transform and level shift every block; no rounding, no clamping."""
    c = dct_matrix()
    blocks = np.einsum("ix,hwij,jy->hwxy", c, dequantize(jpeg), c, optimize=True)
    plane = blocks.transpose(0, 2, 1, 3).reshape(jpeg.blocks_h * 8, jpeg.blocks_w * 8)
    return SpatialImage(plane + 128.0)


def blocks_to_plane(blocks: np.ndarray) -> np.ndarray:
    bh, bw = blocks.shape[:2]
    return blocks.transpose(0, 2, 1, 3).reshape(bh * 8, bw * 8)


def plane_to_blocks(plane: np.ndarray) -> np.ndarray:
    rows, cols = plane.shape
    return plane.reshape(rows // 8, 8, cols // 8, 8).transpose(0, 2, 1, 3)


# ---------------------------------------------------------------------------
# parser

class _Huffman:
    """Canonical Huffman table decoded through a 16-bit peek lookup."""

    __slots__ = ("lookup",)

    def __init__(self, counts, symbols, offset):
        lookup = [None] * 65536
        code = 0
        k = 0
        for length in range(1, 17):
            for _ in range(counts[length - 1]):
                if code >= (1 << length):
                    raise HuffmanDecodeError("over-subscribed Huffman table", offset)
                start = code << (16 - length)
                span = 1 << (16 - length)
                lookup[start:start + span] = [(symbols[k], length)] * span
                code += 1
                k += 1
            code <<= 1
        self.lookup = lookup


def _read_entropy_segment(data: bytes, start: int):
    """Split the scan at RST markers; returns (intervals, end_offset).

    Each interval is (unstuffed bytes, per-byte file offsets). ``end_offset``
    points at the marker that terminated the scan (or len(data) if none).
    """
    intervals = []
    buf = bytearray()
    offs = []
    i = start
    n = len(data)
    while i < n:
        b = data[i]
        if b != 0xFF:
            buf.append(b)
            offs.append(i)
            i += 1
            continue
        if i + 1 >= n:
            break
        nxt = data[i + 1]
        if nxt == 0x00:
            buf.append(0xFF)
            offs.append(i)
            i += 2
        elif nxt == 0xFF:
            i += 1  # fill byte
        elif nxt in _RST:
            intervals.append((bytes(buf), offs))
            buf, offs = bytearray(), []
            i += 2
        else:
            intervals.append((bytes(buf), offs))
            return intervals, i
    intervals.append((bytes(buf), offs))
    return intervals, n


def parse_jpeg(data: bytes) -> QuantizedJpeg:
    """Parse a baseline sequential grayscale JPEG to its quantized coefficients."""
    data = bytes(data)
    n = len(data)
    if n < 2 or data[0] != 0xFF or data[1] != 0xD8:
        raise InvalidMarker("missing SOI marker", 0)
    qtables = {}
    dc_tables, ac_tables = {}, {}
    frame = None
    restart_interval = 0
    coeffs = None
    pos = 2
    scanned = False

    while True:
        # find next marker
        while pos < n and data[pos] != 0xFF:
            if scanned:
                pos += 1
                continue
            raise InvalidMarker(f"expected marker, found 0x{data[pos]:02X}", pos)
        while pos < n and data[pos] == 0xFF:
            pos += 1
        if pos >= n:
            raise TruncatedStream("stream ends before EOI", n)
        marker = data[pos]
        marker_pos = pos - 1
        pos += 1
        if marker == 0xD9:  # EOI
            break
        if marker in _RST or marker == 0x01:
            continue
        if marker == 0xD8:
            raise InvalidMarker("unexpected SOI", marker_pos)
        if pos + 2 > n:
            raise TruncatedStream("segment length missing", pos)
        length = struct.unpack(">H", data[pos:pos + 2])[0]
        if length < 2:
            raise InvalidMarker("bad segment length", pos)
        seg_end = pos + length
        if seg_end > n:
            raise TruncatedStream("segment runs past end of stream", n)
        seg = data[pos + 2:seg_end]

        if marker == 0xDB:
            _parse_dqt(seg, pos + 2, qtables)
        elif marker == 0xC4:
            _parse_dht(seg, pos + 2, dc_tables, ac_tables)
        elif marker in _SOF_PROGRESSIVE:
            raise ProgressiveUnsupported("progressive JPEG is not supported", marker_pos)
        elif marker in _SOF_OTHER:
            raise InvalidMarker(f"unsupported frame type SOF{marker - 0xC0}", marker_pos)
        elif marker in _SOF_SEQUENTIAL:
            frame = _parse_sof(seg, pos + 2, marker_pos)
        elif marker == 0xDD:
            if len(seg) < 2:
                raise InvalidMarker("bad DRI segment", pos)
            restart_interval = struct.unpack(">H", seg[:2])[0]
        elif marker == 0xDA:
            if frame is None:
                raise InvalidMarker("SOS before SOF", marker_pos)
            if scanned:
                raise InvalidMarker("multiple scans are not supported", marker_pos)
            ns = seg[0] if seg else 0
            if ns != 1 or len(seg) < 6:
                raise MultiComponentUnsupported("scan must contain exactly one component", marker_pos)
            comp_id, tables = seg[1], seg[2]
            if comp_id != frame["comp_id"]:
                raise InvalidMarker("scan references unknown component", pos + 3)
            td, ta = tables >> 4, tables & 15
            if td not in dc_tables or ta not in ac_tables:
                raise InvalidMarker("scan references undefined Huffman table", pos + 4)
            ss, se, ahal = seg[3], seg[4], seg[5]
            if ss != 0 or se != 63 or ahal != 0:
                raise ProgressiveUnsupported("spectral selection / successive approximation", pos + 5)
            intervals, end = _read_entropy_segment(data, seg_end)
            coeffs = _decode_scan(intervals, end, frame, dc_tables[td], ac_tables[ta],
                                  restart_interval)
            scanned = True
            pos = end
            continue
        # APPn, COM, DNL and anything else with a length: skip
        pos = seg_end

    if frame is None or coeffs is None:
        raise TruncatedStream("no frame or scan before EOI", n)
    tq = frame["tq"]
    if tq not in qtables:
        raise InvalidMarker("frame references undefined quantization table", frame["offset"])
    qt = qtables[tq]
    return QuantizedJpeg(frame["width"], frame["height"], coeffs, qt, estimate_quality(qt))


def _parse_dqt(seg, base, qtables):
    i = 0
    while i < len(seg):
        pq, tq = seg[i] >> 4, seg[i] & 15
        i += 1
        size = 128 if pq else 64
        if i + size > len(seg):
            raise TruncatedStream("DQT segment too short", base + i)
        if pq:
            vals = struct.unpack(">64H", seg[i:i + 128])
        else:
            vals = tuple(seg[i:i + 64])
        if min(vals) < 1:
            raise InvalidMarker("zero quantization step", base + i)
        qtables[tq] = QuantTable(tuple(vals), 16 if pq else 8)
        i += size


def _parse_dht(seg, base, dc_tables, ac_tables):
    i = 0
    while i < len(seg):
        tc, th = seg[i] >> 4, seg[i] & 15
        if i + 17 > len(seg):
            raise TruncatedStream("DHT segment too short", base + i)
        counts = list(seg[i + 1:i + 17])
        total = sum(counts)
        j = i + 17
        if j + total > len(seg):
            raise TruncatedStream("DHT segment too short", base + j)
        symbols = list(seg[j:j + total])
        table = _Huffman(counts, symbols, base + i)
        (ac_tables if tc else dc_tables)[th] = table
        i = j + total


def _parse_sof(seg, base, marker_pos):
    if len(seg) < 6:
        raise TruncatedStream("SOF segment too short", base)
    precision, height, width, nf = struct.unpack(">BHHB", seg[:6])
    if precision != 8:
        raise InvalidMarker(f"{precision}-bit samples are not supported", base)
    if nf != 1:
        raise MultiComponentUnsupported(f"{nf} components; only grayscale is supported", marker_pos)
    if height == 0 or width == 0:
        raise InvalidMarker("zero image dimension (DNL not supported)", base + 1)
    if len(seg) < 9:
        raise TruncatedStream("SOF segment too short", base)
    return {"width": width, "height": height, "comp_id": seg[6], "tq": seg[8],
            "offset": base + 8}


def _decode_scan(intervals, end_offset, frame, dc, ac, restart_interval):
    bw = math.ceil(frame["width"] / 8)
    bh = math.ceil(frame["height"] / 8)
    total = bw * bh
    out = np.zeros((total, 64), dtype=np.int32)
    per_interval = restart_interval or total
    zz = ZIGZAG.tolist()
    dc_lookup, ac_lookup = dc.lookup, ac.lookup
    block = 0
    for data, offs in intervals:
        if block >= total:
            break
        # Bit accumulator: ``acc`` holds ``nb`` valid bits; past the end of the
        # interval it is padded with ones and ``over`` counts padding bits.
        size = len(data)
        i = 0
        acc = 0
        nb = 0
        over = 0

        def where():
            j = (8 * i + over - nb) // 8  # byte holding the next unread bit
            return offs[j] if 0 <= j < len(offs) else end_offset

        pred = 0
        for _ in range(min(per_interval, total - block)):
            row = [0] * 64
            k = 0
            table = dc_lookup
            while k < 64:
                while nb < 32:
                    if i < size:
                        acc = (acc << 8) | data[i]
                        i += 1
                    else:
                        acc = (acc << 8) | 0xFF
                        over += 8
                    nb += 8
                entry = table[(acc >> (nb - 16)) & 0xFFFF]
                if entry is None:
                    if over > 16:
                        raise TruncatedStream("entropy-coded segment ends mid-block", end_offset)
                    raise HuffmanDecodeError("invalid Huffman code", where())
                sym, length = entry
                nb -= length
                if k == 0:
                    s = sym
                    if s > 11:
                        raise HuffmanDecodeError("DC category out of range", where())
                    if s:
                        v = (acc >> (nb - s)) & ((1 << s) - 1)
                        nb -= s
                        if v < (1 << (s - 1)):
                            v -= (1 << s) - 1
                        pred += v
                    row[0] = pred
                    k = 1
                    table = ac_lookup
                    continue
                r, s = sym >> 4, sym & 15
                if s == 0:
                    if r == 15:
                        k += 16
                        if k > 64:
                            raise HuffmanDecodeError("ZRL run past end of block", where())
                        continue
                    break
                k += r
                if k > 63:
                    raise HuffmanDecodeError("AC run past end of block", where())
                v = (acc >> (nb - s)) & ((1 << s) - 1)
                nb -= s
                if v < (1 << (s - 1)):
                    v -= (1 << s) - 1
                row[zz[k]] = v
                k += 1
            if over > nb:
                raise TruncatedStream("entropy-coded segment ends mid-block", end_offset)
            acc &= (1 << nb) - 1
            out[block] = row
            block += 1
    if block < total:
        raise TruncatedStream(f"scan ended after {block} of {total} blocks", end_offset)
    return out.reshape(bh, bw, 8, 8)


# ---------------------------------------------------------------------------
# coefficient dump: "GFRC", u32 blocks_w, u32 blocks_h, u32 flags, int16 LE
# coefficients (blocks in raster order, 64 per block in natural order);
# flags bit 0 set => trailer of 64 u16 quantization steps (natural order),
# u32 width, u32 height.

_DUMP_HEADER = struct.Struct("<4sIII")
_FLAG_QTABLE = 1


def dump_coefficients(jpeg: QuantizedJpeg) -> bytes:
    c = jpeg.coeffs
    if c.size and (c.max() > 32767 or c.min() < -32768):
        raise ValueError("coefficient out of int16 range")
    head = _DUMP_HEADER.pack(b"GFRC", jpeg.blocks_w, jpeg.blocks_h, _FLAG_QTABLE)
    body = c.astype("<i2").tobytes()
    q = jpeg.qtable.natural.astype("<u2").tobytes()
    tail = struct.pack("<II", jpeg.width, jpeg.height)
    return head + body + q + tail


def load_coefficients(blob: bytes) -> QuantizedJpeg:
    if len(blob) < _DUMP_HEADER.size:
        raise FormatError("coefficient dump too short")
    magic, bw, bh, flags = _DUMP_HEADER.unpack_from(blob)
    if magic != b"GFRC":
        raise FormatError("not a GFRC coefficient dump")
    count = bw * bh * 64
    start = _DUMP_HEADER.size
    stop = start + 2 * count
    if len(blob) < stop:
        raise FormatError("coefficient dump truncated")
    coeffs = np.frombuffer(blob, dtype="<i2", count=count, offset=start)
    coeffs = coeffs.astype(np.int32).reshape(bh, bw, 8, 8)
    if not flags & _FLAG_QTABLE:
        raise FormatError("dump carries no quantization table")
    if len(blob) < stop + 128 + 8:
        raise FormatError("quantization trailer truncated")
    q = np.frombuffer(blob, dtype="<u2", count=64, offset=stop)
    width, height = struct.unpack_from("<II", blob, stop + 128)
    qt = QuantTable.from_natural(q)
    return QuantizedJpeg(width, height, coeffs, qt, estimate_quality(qt))
