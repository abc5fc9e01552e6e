import numpy as np
import pytest

from pgclab.codegen import BINARY01, BYTE0_255, UNIT_INTERVAL, ModuleMatrix, PixelImage
from pgclab.errors import FormatError
from pgclab.imgio import (
    read_matrix_text,
    read_pbm,
    read_pgm,
    write_matrix_text,
    write_pbm,
    write_pgm,
)


def test_pgm_byte_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    img = PixelImage(rng.integers(0, 256, (17, 23), dtype=np.uint8), BYTE0_255)
    p = tmp_path / "a.pgm"
    write_pgm(img, p)
    back = read_pgm(p)
    assert back.domain == BYTE0_255
    np.testing.assert_array_equal(back.pixels, img.pixels)


def test_pgm_scales_binary_and_unit(tmp_path):
    b = PixelImage(np.array([[0, 1]], np.uint8), BINARY01)
    p = tmp_path / "b.pgm"
    write_pgm(b, p)
    np.testing.assert_array_equal(read_pgm(p).pixels, [[0, 255]])

    u = PixelImage(np.array([[0.0, 0.5, 1.0]], np.float32), UNIT_INTERVAL)
    q = tmp_path / "u.pgm"
    write_pgm(u, q)
    # 0.5 * 255 = 127.5 rounds to even
    np.testing.assert_array_equal(read_pgm(q).pixels, [[0, 128, 255]])


def test_pgm_header_comments_and_whitespace(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5 # trailing note\n# full comment line\n 2\t1 \n255\n" + bytes([7, 9]))
    np.testing.assert_array_equal(read_pgm(p).pixels, [[7, 9]])


def test_pgm_errors(tmp_path):
    p = tmp_path / "bad.pgm"
    p.write_bytes(b"P6\n1 1\n255\n\x00")
    with pytest.raises(FormatError):
        read_pgm(p)
    p.write_bytes(b"P5\n1 1\n65535\n\x00\x00")
    with pytest.raises(FormatError):
        read_pgm(p)
    p.write_bytes(b"P5\n2 2\n255\n\x00\x01")  # short payload
    with pytest.raises(FormatError):
        read_pgm(p)


@pytest.mark.parametrize("width", [1, 7, 8, 9, 16, 17])
def test_pbm_roundtrip_any_width(tmp_path, width):
    rng = np.random.default_rng(width)
    m = ModuleMatrix(rng.integers(0, 2, (5, width), dtype=np.uint8))
    p = tmp_path / "m.pbm"
    write_pbm(m, p)
    np.testing.assert_array_equal(read_pbm(p).bits, m.bits)


def test_pbm_errors(tmp_path):
    p = tmp_path / "bad.pbm"
    p.write_bytes(b"P1\n1 1\n0")
    with pytest.raises(FormatError):
        read_pbm(p)
    p.write_bytes(b"P4\n9 2\n\x00")  # needs 2 rows of 2 bytes
    with pytest.raises(FormatError):
        read_pbm(p)


def test_matrix_text_roundtrip(tmp_path):
    m = ModuleMatrix(np.array([[1, 0, 1], [0, 0, 1]], np.uint8))
    p = tmp_path / "m.txt"
    write_matrix_text(m, p)
    np.testing.assert_array_equal(read_matrix_text(p).bits, m.bits)


def test_matrix_text_rejects_garbage(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("1 0\n0 x\n")
    with pytest.raises(FormatError):
        read_matrix_text(p)
