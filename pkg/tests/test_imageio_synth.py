"""Image file IO and the synthetic texture generator."""

import numpy as np
import pytest

from wavescene.errors import DataError
from wavescene.imageio import read_image, write_image
from wavescene.synth import CLASS_NAMES, generate_dataset, make_image
from wavescene.wavelet import Image, decompose


def random_image(rng, bands, h, w, depth=8):
    dtype = np.uint8 if depth == 8 else np.uint16
    hi = 256 if depth == 8 else 65536
    return Image(data=rng.integers(0, hi, size=(bands, h, w)).astype(dtype))


@pytest.mark.parametrize(
    "ext,bands,depth",
    [
        (".pgm", 1, 8),
        (".pgm", 1, 16),
        (".ppm", 3, 8),
        (".ppm", 3, 16),
        (".png", 1, 8),
        (".png", 3, 8),
        (".png", 1, 16),
    ],
)
def test_round_trip(tmp_path, ext, bands, depth):
    rng = np.random.default_rng(7)
    img = random_image(rng, bands, 21, 34, depth)
    path = tmp_path / f"img{ext}"
    write_image(img, path)
    assert read_image(path) == img


def test_pnm_header_comments(tmp_path):
    raster = bytes(range(6))
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P5 # magic\n# a comment line\n3 # width\n 2\n255\n" + raster)
    img = read_image(path)
    assert (img.height, img.width) == (2, 3)
    assert img.data.tobytes() == raster


def test_pnm_16bit_is_big_endian(tmp_path):
    path = tmp_path / "b.pgm"
    path.write_bytes(b"P5\n2 1\n65535\n" + bytes([0x01, 0x02, 0x00, 0xFF]))
    img = read_image(path)
    assert img.data.dtype == np.uint16
    assert img.data.ravel().tolist() == [0x0102, 0x00FF]


def test_pnm_errors(tmp_path):
    short = tmp_path / "short.ppm"
    short.write_bytes(b"P6\n4 4\n255\n" + b"\x00" * 10)
    with pytest.raises(DataError):
        read_image(short)
    bad = tmp_path / "bad.pgm"
    bad.write_bytes(b"P9\n1 1\n255\n\x00")
    with pytest.raises(DataError):
        read_image(bad)
    with pytest.raises(DataError):
        read_image(tmp_path / "missing.png")


def test_write_errors(tmp_path):
    rng = np.random.default_rng(0)
    with pytest.raises(DataError):
        write_image(random_image(rng, 2, 4, 4), tmp_path / "two.ppm")
    with pytest.raises(DataError):
        write_image(random_image(rng, 3, 4, 4, 16), tmp_path / "deep.png")
    with pytest.raises(DataError):
        write_image(random_image(rng, 1, 4, 4), tmp_path / "img.tiff")


def test_png_rgba_collapses_to_rgb(tmp_path):
    from PIL import Image as PILImage

    arr = np.zeros((5, 4, 4), dtype=np.uint8)
    arr[..., :3] = 77
    arr[..., 3] = 255
    path = tmp_path / "a.png"
    PILImage.fromarray(arr, mode="RGBA").save(path)
    img = read_image(path)
    assert img.bands == 3
    assert np.all(img.data == 77)


def test_make_image_shape_and_determinism():
    for name in CLASS_NAMES:
        img = make_image(name, np.random.default_rng(3), size=32)
        assert img.shape == (3, 32, 32)
        assert img.dtype == np.uint8
    a = make_image("rings", np.random.default_rng(11))
    b = make_image("rings", np.random.default_rng(11))
    assert np.array_equal(a, b)
    c = make_image("rings", np.random.default_rng(12))
    assert not np.array_equal(a, c)


def test_make_image_unknown_class():
    with pytest.raises(DataError):
        make_image("plaid", np.random.default_rng(0))


def test_generate_dataset_layout(tmp_path):
    manifest = generate_dataset(tmp_path, classes=3, per_class=4, size=32, seed=5)
    assert len(manifest) == 12
    names = sorted({c for _, c in manifest})
    assert names == sorted(CLASS_NAMES[:3])
    for path, _ in manifest:
        img = read_image(path)
        assert (img.bands, img.height, img.width) == (3, 32, 32)


def test_generate_dataset_deterministic(tmp_path):
    m1 = generate_dataset(tmp_path / "a", classes=2, per_class=3, size=16, seed=9)
    m2 = generate_dataset(tmp_path / "b", classes=2, per_class=3, size=16, seed=9)
    for (p1, _), (p2, _) in zip(m1, m2):
        assert read_image(p1) == read_image(p2)


def test_generate_dataset_bad_args(tmp_path):
    with pytest.raises(DataError):
        generate_dataset(tmp_path, classes=1)
    with pytest.raises(DataError):
        generate_dataset(tmp_path, classes=20)
    with pytest.raises(DataError):
        generate_dataset(tmp_path, per_class=0)


def test_classes_separable_at_coarse_level():
    """Coarse-level mean sub-band energy distinguishes the stripe classes.

    Horizontal stripes concentrate energy in LH (vertical detail) while
    vertical stripes concentrate it in HL, even two levels down, which is
    what makes coarse-prefix classification plausible at all.
    """
    rng = np.random.default_rng(42)
    lh_h, hl_h, lh_v, hl_v = [], [], [], []
    for _ in range(10):
        for name, lh_acc, hl_acc in (("hstripes", lh_h, hl_h), ("vstripes", lh_v, hl_v)):
            img = Image(data=make_image(name, rng, size=64))
            pyr = decompose(img, levels=2)
            lh, hl, _ = pyr.bands[0].details[2]
            lh_acc.append(np.mean(lh.astype(np.float64) ** 2))
            hl_acc.append(np.mean(hl.astype(np.float64) ** 2))
    assert np.mean(lh_h) > 4.0 * np.mean(hl_h)
    assert np.mean(hl_v) > 4.0 * np.mean(lh_v)
