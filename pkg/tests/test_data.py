import numpy as np
import pytest

from cxai.data import SynthSpec, load_dataset, save_dataset, synthesize_dataset
from cxai.errors import (
    DataError,
    EmptyDatasetError,
    InconsistentShapeError,
    MalformedHeaderError,
    TooSmallError,
    TruncatedDataError,
    UnsupportedFormatError,
)
from cxai.netpbm import encode_netpbm, parse_netpbm, read_netpbm, to_grayscale

P5_2X2 = b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64])


class TestParse:
    def test_p5_hand_decode(self):
        img = parse_netpbm(P5_2X2)
        assert img.shape == (1, 2, 2)
        np.testing.assert_array_equal(img, [[[0.0, 1.0], [128 / 255, 64 / 255]]])
        assert img[0, 1, 0] == pytest.approx(0.50196, abs=1e-5)
        assert img[0, 1, 1] == pytest.approx(0.25098, abs=1e-5)

    def test_p6_channel_first(self):
        data = b"P6 1 2 255\n" + bytes([255, 0, 0, 0, 0, 255])
        img = parse_netpbm(data)
        assert img.shape == (3, 2, 1)
        np.testing.assert_array_equal(img[:, 0, 0], [1.0, 0.0, 0.0])
        np.testing.assert_array_equal(img[:, 1, 0], [0.0, 0.0, 1.0])

    def test_header_comments(self):
        img = parse_netpbm(b"P5\n# made by hand\n2 # width\n1\n255\n" + bytes([10, 20]))
        np.testing.assert_array_equal(img, [[[10 / 255, 20 / 255]]])

    def test_smaller_maxval(self):
        img = parse_netpbm(b"P5 2 1 15\n" + bytes([15, 5]))
        np.testing.assert_array_equal(img, [[[1.0, 1 / 3]]])

    @pytest.mark.parametrize("magic", [b"P4", b"P2", b"P3", b"P1", b"BM"])
    def test_unsupported_magic(self, magic):
        with pytest.raises(UnsupportedFormatError) as info:
            parse_netpbm(magic + b"\n2 2\n255\n" + bytes(4))
        assert info.value.offset == 0

    def test_sixteen_bit_unsupported(self):
        with pytest.raises(UnsupportedFormatError):
            parse_netpbm(b"P5\n1 1\n65535\n\x00\x00")

    @pytest.mark.parametrize(
        "data,offset",
        [
            (b"P", 0),
            (b"P5x 2 2 255\n", 2),
            (b"P5\n2 x 255\n" + bytes(4), 5),
            (b"P5\n0 2 255\n", 3),
            (b"P5\n2 2", 6),
        ],
    )
    def test_malformed_header(self, data, offset):
        with pytest.raises(MalformedHeaderError) as info:
            parse_netpbm(data)
        assert info.value.offset == offset

    def test_truncated_pixels(self):
        with pytest.raises(TruncatedDataError) as info:
            parse_netpbm(P5_2X2[:-1])
        assert info.value.offset == len(P5_2X2) - 1

    def test_sample_above_maxval(self):
        with pytest.raises(MalformedHeaderError) as info:
            parse_netpbm(b"P5 2 1 100\n" + bytes([50, 101]))
        assert info.value.offset == 12

    def test_encode_round_trip(self, rng):
        img = np.round(rng.random((3, 4, 5)) * 255) / 255
        np.testing.assert_array_equal(parse_netpbm(encode_netpbm(img)), img)
        gray = img[:1]
        assert encode_netpbm(gray).startswith(b"P5")

    def test_luma(self):
        rgb = np.array([1.0, 0.5, 0.2]).reshape(3, 1, 1)
        assert to_grayscale(rgb)[0, 0, 0] == pytest.approx(0.299 + 0.587 * 0.5 + 0.114 * 0.2, abs=1e-15)


def write(path, data):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)


class TestLoadDataset:
    def test_layout_and_ids(self, tmp_path):
        write(tmp_path / "teapot" / "b.pgm", P5_2X2)
        write(tmp_path / "teapot" / "a.pgm", P5_2X2)
        write(tmp_path / "vase" / "z.ppm", b"P6 2 2 255\n" + bytes(12))
        write(tmp_path / "vase" / "notes.txt", b"ignored")
        d = load_dataset(tmp_path, class_names=("vase", "teapot"))
        assert d.ids == ["teapot/a", "teapot/b", "vase/z"]
        assert list(d.labels) == [1, 1, 0]
        assert d.images.shape == (3, 1, 2, 2)
        assert d.class_names == ("vase", "teapot")

    def test_default_class_order(self, tmp_path):
        write(tmp_path / "b" / "x.pgm", P5_2X2)
        write(tmp_path / "a" / "y.pgm", P5_2X2)
        assert load_dataset(tmp_path).class_names == ("a", "b")

    def test_empty_directory(self, tmp_path):
        (tmp_path / "vase").mkdir()
        (tmp_path / "teapot").mkdir()
        with pytest.raises(EmptyDatasetError):
            load_dataset(tmp_path)

    def test_missing_root(self, tmp_path):
        with pytest.raises(DataError):
            load_dataset(tmp_path / "nope")

    def test_inconsistent_shapes(self, tmp_path):
        write(tmp_path / "a" / "x.pgm", P5_2X2)
        write(tmp_path / "b" / "y.pgm", b"P5 3 1 255\n" + bytes(3))
        with pytest.raises(InconsistentShapeError):
            load_dataset(tmp_path)

    def test_parse_error_names_file(self, tmp_path):
        write(tmp_path / "a" / "x.pgm", P5_2X2)
        write(tmp_path / "b" / "bad.pgm", b"P4\n1 1\n\x00")
        with pytest.raises(UnsupportedFormatError, match="bad.pgm"):
            load_dataset(tmp_path)

    def test_save_round_trip(self, tmp_path):
        d = synthesize_dataset(SynthSpec(3, 16, seed=2))
        save_dataset(d, tmp_path)
        back = load_dataset(tmp_path, class_names=d.class_names)
        assert len(back) == len(d)
        quantized = np.round(d.images * 255) / 255
        np.testing.assert_array_equal(back.images, quantized)
        assert read_netpbm(tmp_path / "teapot" / "teapot_0000.pgm").shape == (1, 16, 16)


class TestSynthesize:
    def test_deterministic(self):
        a = synthesize_dataset(SynthSpec(5, 24, seed=1))
        b = synthesize_dataset(SynthSpec(5, 24, seed=1))
        assert a.images.tobytes() == b.images.tobytes()
        assert a.ids == b.ids

    def test_seed_and_split_matter(self):
        a = synthesize_dataset(SynthSpec(3, 16, seed=1))
        assert a.images.tobytes() != synthesize_dataset(SynthSpec(3, 16, seed=2)).images.tobytes()
        assert a.images.tobytes() != synthesize_dataset(SynthSpec(3, 16, seed=1, split="test")).images.tobytes()

    def test_balanced_and_in_range(self):
        d = synthesize_dataset(SynthSpec(7, 32, seed=0))
        assert np.bincount(d.labels).tolist() == [7, 7]
        assert d.images.shape == (14, 1, 32, 32)
        assert d.images.min() >= 0 and d.images.max() <= 1
        assert d.class_names == ("vase", "teapot")

    def test_zero_count(self):
        with pytest.raises(EmptyDatasetError):
            synthesize_dataset(SynthSpec(0))

    def test_too_small(self):
        with pytest.raises(TooSmallError):
            synthesize_dataset(SynthSpec(2, image_size=15))

    def test_classes_differ_in_layout(self):
        # teapots extend sideways (handle and spout); vases are tall and narrow
        d = synthesize_dataset(SynthSpec(40, 32, seed=3))
        widths = {0: [], 1: []}
        for img, y in zip(d.images, d.labels):
            cols = np.flatnonzero((img[0] > 0.3).any(axis=0))
            widths[int(y)].append(cols.max() - cols.min())
        assert np.mean(widths[1]) > np.mean(widths[0])
