import numpy as np
import pytest


def write_pgm(path, image, maxval=255):
    """Write a uint8 grayscale array as binary PGM (P5)."""
    arr = np.asarray(image)
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n{maxval}\n".encode()
    path.write_bytes(header + arr.astype(np.uint8).tobytes())


def write_annotation(path, points, regions):
    lines = [f"{x} {y} {r}" for (x, y), r in zip(points, regions)]
    path.write_text("\n".join(lines) + "\n")


@pytest.fixture
def rng():
    return np.random.default_rng(0)
