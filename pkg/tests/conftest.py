import io
import os
import sys

import numpy as np
import pytest
from PIL import Image

sys.path.insert(0, os.path.dirname(__file__))

from gfrkit.jpeg import parse_jpeg  # noqa: E402


def textured(shape, seed, strength=1.0):
    """Smooth gradient plus oriented texture plus noise, like a natural-ish photo."""
    rng = np.random.default_rng(seed)
    rows, cols = shape
    y, x = np.mgrid[0:rows, 0:cols]
    base = 128 + 40 * np.sin(x / rng.uniform(20, 60) + rng.uniform(0, 6)) \
        * np.cos(y / rng.uniform(20, 60) + rng.uniform(0, 6))
    walk = np.cumsum(rng.normal(0, 1.5, shape), axis=int(rng.integers(2)))
    walk -= walk.mean()
    noise = rng.normal(0, 6 * strength, shape)
    return np.clip(base + 0.3 * walk + noise, 0, 255).astype(np.uint8)


def jpeg_bytes(pixels, quality=75, **kw):
    buf = io.BytesIO()
    Image.fromarray(pixels).save(buf, "JPEG", quality=quality, **kw)
    return buf.getvalue()


@pytest.fixture
def small_jpeg():
    return parse_jpeg(jpeg_bytes(textured((40, 48), 3)))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
        terminalreporter.write_line(line)
