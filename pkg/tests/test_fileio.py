"""File formats: round trips, rejection of malformed inputs."""

import struct

import numpy as np
import pytest

from midflow.errors import CheckpointError, ConfigError, DataError
from midflow.fileio import (
    check_keys,
    load_json_config,
    read_checkpoint,
    read_flo,
    read_image,
    write_checkpoint,
    write_flo,
    write_image,
)


class TestImages:
    def test_round_trip_within_quantization(self, tmp_path):
        rng = np.random.default_rng(0)
        frame = rng.random((3, 13, 17)).astype(np.float32)
        path = tmp_path / "f.png"
        write_image(frame, path)
        back = read_image(path)
        assert back.shape == frame.shape
        assert np.abs(back - frame).max() <= 1 / 255

    def test_quantized_values_round_trip_exactly(self, tmp_path):
        frame = (np.arange(3 * 4 * 4).reshape(3, 4, 4) % 256) / 255.0
        write_image(frame, tmp_path / "q.png")
        assert np.array_equal(read_image(tmp_path / "q.png"), frame.astype(np.float32))

    def test_grayscale_promoted(self, tmp_path):
        from PIL import Image

        Image.fromarray(np.full((5, 6), 128, np.uint8), "L").save(tmp_path / "g.png")
        frame = read_image(tmp_path / "g.png")
        assert frame.shape == (3, 5, 6)
        assert np.array_equal(frame[0], frame[1]) and np.array_equal(frame[1], frame[2])

    def test_unsupported_mode_rejected(self, tmp_path):
        from PIL import Image

        Image.new("RGBA", (4, 4)).save(tmp_path / "a.png")
        with pytest.raises(DataError, match="mode"):
            read_image(tmp_path / "a.png")

    def test_truncated_file_no_partial_frame(self, tmp_path):
        write_image(np.random.default_rng(1).random((3, 16, 16)), tmp_path / "t.png")
        raw = (tmp_path / "t.png").read_bytes()
        (tmp_path / "t.png").write_bytes(raw[: len(raw) // 2])
        with pytest.raises(DataError):
            read_image(tmp_path / "t.png")

    def test_bad_shape_rejected(self, tmp_path):
        with pytest.raises(DataError):
            write_image(np.zeros((1, 4, 4)), tmp_path / "x.png")


class TestFlo:
    def test_round_trip_bit_exact_many(self, tmp_path):
        rng = np.random.default_rng(2)
        for i in range(25):
            h, w = int(rng.integers(1, 20)), int(rng.integers(1, 20))
            flow = (rng.standard_normal((2, h, w)) * 40).astype(np.float32)
            path = tmp_path / f"{i}.flo"
            write_flo(flow, path)
            back = read_flo(path)
            assert back.dtype == np.float32
            assert np.array_equal(back, flow)

    def test_header_layout_3x2(self, tmp_path):
        flow = np.arange(12, dtype=np.float32).reshape(2, 2, 3)
        path = tmp_path / "h.flo"
        write_flo(flow, path)
        raw = path.read_bytes()
        assert len(raw) == 4 + 4 + 4 + 48
        tag, w, h = struct.unpack("<fii", raw[:12])
        assert (tag, w, h) == (202021.25, 3, 2)
        # row-major interleaved (u, v) pairs
        u0, v0 = struct.unpack("<ff", raw[12:20])
        assert (u0, v0) == (flow[0, 0, 0], flow[1, 0, 0])

    def test_big_endian_tag_rejected(self, tmp_path):
        body = struct.pack(">f", 202021.25) + struct.pack("<ii", 1, 1) + b"\0" * 8
        (tmp_path / "be.flo").write_bytes(body)
        with pytest.raises(DataError, match="tag"):
            read_flo(tmp_path / "be.flo")

    def test_size_mismatch_rejected(self, tmp_path):
        body = struct.pack("<fii", 202021.25, 4, 4) + b"\0" * 10
        (tmp_path / "c.flo").write_bytes(body)
        with pytest.raises(DataError, match="corrupt"):
            read_flo(tmp_path / "c.flo")

    def test_wrong_shape_write_rejected(self, tmp_path):
        with pytest.raises(DataError):
            write_flo(np.zeros((3, 4, 4)), tmp_path / "w.flo")


class TestCheckpointContainer:
    def test_round_trip_random_payloads(self, tmp_path):
        rng = np.random.default_rng(3)
        for i in range(8):
            arrays = {
                f"arr{j}": rng.standard_normal(tuple(rng.integers(1, 6, size=2))).astype(
                    rng.choice([np.float32, np.float64])
                )
                for j in range(int(rng.integers(1, 6)))
            }
            path = tmp_path / f"{i}.zip"
            write_checkpoint(path, arrays, {"kind": "test", "step": i})
            back, manifest, opt = read_checkpoint(path)
            assert manifest["step"] == i
            assert set(back) == set(arrays)
            for k in arrays:
                assert back[k].dtype == arrays[k].dtype
                assert np.array_equal(back[k], arrays[k])

    def test_double_round_trip_byte_identical(self, tmp_path):
        rng = np.random.default_rng(4)
        arrays = {"a.w": rng.standard_normal((3, 3)).astype(np.float32)}
        opt = {"m": {"a.w": np.zeros((3, 3), np.float32)}, "scalars": {"t": 2}}
        p1, p2 = tmp_path / "1.zip", tmp_path / "2.zip"
        write_checkpoint(p1, arrays, {"kind": "test"}, opt)
        back, manifest, opt_back = read_checkpoint(p1)
        manifest.pop("format_version")
        write_checkpoint(p2, back, manifest, opt_back)
        assert p1.read_bytes() == p2.read_bytes()

    def test_version_mismatch_refused(self, tmp_path):
        import json
        import zipfile

        path = tmp_path / "v.zip"
        with zipfile.ZipFile(path, "w") as zf:
            zf.writestr("manifest.json", json.dumps({"format_version": 999}))
        with pytest.raises(CheckpointError, match="version"):
            read_checkpoint(path)

    def test_not_a_zip_refused(self, tmp_path):
        (tmp_path / "junk.zip").write_bytes(b"junk")
        with pytest.raises(CheckpointError):
            read_checkpoint(tmp_path / "junk.zip")

    def test_missing_file_refused(self, tmp_path):
        with pytest.raises(CheckpointError):
            read_checkpoint(tmp_path / "absent.zip")


class TestConfigFile:
    def test_load_and_unknown_key(self, tmp_path):
        (tmp_path / "c.json").write_text('{"model": {"depth": 3}}')
        cfg = load_json_config(tmp_path / "c.json")
        assert cfg == {"model": {"depth": 3}}
        with pytest.raises(ConfigError, match="typo_key"):
            check_keys({"typo_key": 1}, {"depth"}, "model section")

    def test_invalid_json_rejected(self, tmp_path):
        (tmp_path / "bad.json").write_text("{nope")
        with pytest.raises(ConfigError):
            load_json_config(tmp_path / "bad.json")

    def test_non_object_root_rejected(self, tmp_path):
        (tmp_path / "list.json").write_text("[1, 2]")
        with pytest.raises(ConfigError):
            load_json_config(tmp_path / "list.json")
