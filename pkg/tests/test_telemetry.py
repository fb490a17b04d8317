import io
import struct
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bsblcs.errors import (
    BadMagic,
    BadVersion,
    DataError,
    FieldOverflow,
    NonNumericCell,
    RaggedRows,
    TruncatedPayload,
)
from bsblcs.telemetry import (
    HEADER_SIZE,
    CompressedPacket,
    EpochedDataset,
    decode_packet,
    encode_packet,
    ingest_csv,
    iter_packets,
    load_dataset,
    read_stream,
    write_stream,
)


def random_packet(rng, M=None):
    M = int(rng.integers(1, 300)) if M is None else M
    raw = rng.integers(0, 2**32, size=M, dtype=np.uint64).astype(np.uint32)
    return CompressedPacket(
        N=int(rng.integers(1, 2**16)), M=M, s=int(rng.integers(0, 256)),
        matrix_seed=int(rng.integers(0, 2**63)) * 2 + int(rng.integers(0, 2)),
        dict_code=int(rng.integers(0, 3)), payload=raw.view("<f4"),
        wavelet_taps=int(rng.integers(0, 256)), wavelet_levels=int(rng.integers(0, 256)),
        channel=int(rng.integers(0, 2**16)), epoch_index=int(rng.integers(0, 2**32)),
        sample_rate_mHz=int(rng.integers(0, 2**32)),
    )


def hand_encode(p):
    """Field-by-field little-endian layout, independent of the library's struct."""
    out = bytearray(b"BCS1")
    out += bytes([1])
    out += p.N.to_bytes(2, "little") + p.M.to_bytes(2, "little") + bytes([p.s])
    out += p.matrix_seed.to_bytes(8, "little")
    out += bytes([p.dict_code, p.wavelet_taps, p.wavelet_levels])
    out += p.channel.to_bytes(2, "little") + p.epoch_index.to_bytes(4, "little")
    out += p.sample_rate_mHz.to_bytes(4, "little")
    for v in p.payload:
        out += struct.pack("<f", float(v)) if np.isfinite(v) else v.astype("<f4").tobytes()
    return bytes(out)


class TestPacket:
    def test_length_for_m192(self):
        p = CompressedPacket(384, 192, 15, 1, 1, np.zeros(192))
        assert len(encode_packet(p)) == 799 == p.nbytes
        assert HEADER_SIZE == 31

    def test_layout_matches_hand_encoding(self, rng):
        for _ in range(50):
            p = random_packet(rng)
            assert encode_packet(p) == hand_encode(p)

    def test_roundtrip_bit_exact(self, rng):
        for _ in range(200):
            p = random_packet(rng)
            raw = encode_packet(p)
            q = decode_packet(raw)
            assert q == p and encode_packet(q) == raw

    def test_nan_payload_bits_survive(self):
        bits = np.array([0x7FC00001, 0xFF800000, 0x00000001, 0x80000000], dtype=np.uint32)
        p = CompressedPacket(4, 4, 1, 0, 0, bits.view("<f4"))
        q = decode_packet(encode_packet(p))
        np.testing.assert_array_equal(q.payload.view(np.uint32), bits)

    def test_bad_magic(self, rng):
        raw = bytearray(encode_packet(random_packet(rng)))
        raw[0:1] = b"X"
        with pytest.raises(BadMagic):
            decode_packet(bytes(raw))

    def test_bad_version(self, rng):
        raw = bytearray(encode_packet(random_packet(rng)))
        raw[4] = 2
        with pytest.raises(BadVersion):
            decode_packet(bytes(raw))

    @pytest.mark.parametrize("cut", [1, 4, 769])
    def test_truncated(self, rng, cut):
        raw = encode_packet(random_packet(rng, M=192))
        with pytest.raises(TruncatedPayload):
            decode_packet(raw[:-cut])
        with pytest.raises(TruncatedPayload):
            decode_packet(raw[:20])

    def test_trailing_bytes_rejected(self, rng):
        with pytest.raises(TruncatedPayload):
            decode_packet(encode_packet(random_packet(rng, M=3)) + b"\0")

    @pytest.mark.parametrize("field,value", [("N", 2**16), ("s", 256), ("channel", -1), ("matrix_seed", 2**64)])
    def test_overflow(self, field, value):
        p = CompressedPacket(8, 2, 1, 0, 0, np.zeros(2))
        setattr(p, field, value)
        with pytest.raises(FieldOverflow):
            encode_packet(p)

    def test_payload_length_must_match(self):
        with pytest.raises(FieldOverflow):
            encode_packet(CompressedPacket(8, 3, 1, 0, 0, np.zeros(2)))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**64 - 1), st.lists(st.floats(width=32, allow_nan=False), min_size=1, max_size=40))
def test_roundtrip_property(seed, values):
    p = CompressedPacket(400, len(values), 15, seed, 1, np.array(values, dtype="<f4"), channel=3, epoch_index=9)
    assert decode_packet(encode_packet(p)) == p


class TestStream:
    def test_write_and_iterate(self, rng, tmp_path):
        packets = [random_packet(rng) for _ in range(30)]
        buf = io.BytesIO()
        count, nbytes = write_stream(buf, packets)
        assert count == 30 and nbytes == sum(p.nbytes for p in packets) == len(buf.getvalue())
        path = tmp_path / "s.bin"
        path.write_bytes(buf.getvalue())
        assert read_stream(path) == packets

    def test_error_names_packet_index(self, rng):
        raws = [encode_packet(random_packet(rng, M=4)) for _ in range(3)]
        bad = bytearray(raws[2])
        bad[0] = ord("Z")
        with pytest.raises(BadMagic, match="packet 2"):
            list(iter_packets(raws[0] + raws[1] + bytes(bad)))
        with pytest.raises(TruncatedPayload, match="packet 1"):
            list(iter_packets(raws[0] + raws[1][:-2]))

    def test_empty_stream(self):
        assert list(iter_packets(b"")) == []


class TestIngest:
    def write(self, tmp_path, rows, name="d.csv"):
        path = tmp_path / name
        path.write_text("\n".join(",".join(str(v) for v in r) for r in rows) + "\n")
        return path

    def test_exact_epochs(self, tmp_path):
        ds = ingest_csv(self.write(tmp_path, [list(range(10))]), 5)
        assert ds.samples.shape == (1, 2, 5)
        np.testing.assert_array_equal(ds.samples.reshape(-1), np.arange(10))

    def test_truncation_warns(self, tmp_path):
        with pytest.warns(UserWarning, match="dropping 2"):
            ds = ingest_csv(self.write(tmp_path, [list(range(10))]), 4)
        assert ds.samples.shape == (1, 2, 4)
        np.testing.assert_array_equal(ds.samples.reshape(-1), np.arange(8))

    def test_32_channel_recording(self, tmp_path, rng):
        data = rng.standard_normal((32, 30720)).astype(np.float32)
        path = tmp_path / "big.csv"
        np.savetxt(path, data, delimiter=",", fmt="%.9g")
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            ds = ingest_csv(path, 384)
        assert (ds.channels, ds.epochs_per_channel, ds.epoch_length) == (32, 80, 384)
        np.testing.assert_array_equal(ds.samples[5].reshape(-1), data[5])

    def test_columns_flag(self, tmp_path):
        rows = [[i, 10 * i] for i in range(6)]
        ds = ingest_csv(self.write(tmp_path, rows), 3, channels_as="cols")
        assert ds.samples.shape == (2, 2, 3)
        np.testing.assert_array_equal(ds.samples[1].reshape(-1), [0, 10, 20, 30, 40, 50])

    def test_ragged(self, tmp_path):
        with pytest.raises(RaggedRows):
            ingest_csv(self.write(tmp_path, [[1, 2, 3], [4, 5]]), 1)

    def test_non_numeric(self, tmp_path):
        with pytest.raises(NonNumericCell, match="row 2, column 3"):
            ingest_csv(self.write(tmp_path, [[1, 2, 3], [4, 5, "x"]]), 1)

    def test_labels_sidecar(self, tmp_path):
        data = self.write(tmp_path, [list(range(12))])
        labels = tmp_path / "labels.csv"
        labels.write_text("epoch_index,label\n0,left\n2,right\n1,left\n")
        ds = ingest_csv(data, 4, labels_path=labels)
        assert ds.labels == ["left", "left", "right"]
        labels.write_text("0,left\n")
        with pytest.raises(DataError):
            ingest_csv(data, 4, labels_path=labels)


class TestDataset:
    def test_npz_roundtrip(self, tmp_path, rng):
        ds = EpochedDataset(rng.standard_normal((2, 3, 16)), ["a", "b", "a"], 256.0)
        ds.save(tmp_path / "d.npz")
        back = load_dataset(tmp_path / "d.npz")
        np.testing.assert_array_equal(back.samples, ds.samples)
        assert back.labels == ds.labels and back.sample_rate == 256.0
        assert back.samples.size == 2 * 3 * 16

    def test_shape_checks(self):
        with pytest.raises(DataError):
            EpochedDataset(np.zeros((3, 4)))
        with pytest.raises(DataError):
            EpochedDataset(np.zeros((1, 2, 4)), labels=["a"])

    def test_unknown_suffix(self, tmp_path):
        with pytest.raises(DataError):
            load_dataset(tmp_path / "x.edf", 4)

    def test_eeglab_inline(self, tmp_path, rng):
        from scipy.io import savemat
        data = rng.standard_normal((3, 40))
        savemat(tmp_path / "r.set", {"EEG": {"nbchan": 3, "pnts": 40, "trials": 1, "srate": 128.0, "data": data}})
        ds = load_dataset(tmp_path / "r.set", 10)
        assert ds.samples.shape == (3, 4, 10) and ds.sample_rate == 128.0
        np.testing.assert_allclose(ds.samples[2].reshape(-1), data[2], rtol=1e-6)

    def test_eeglab_fdt_epoched(self, tmp_path, rng):
        from scipy.io import savemat
        data = rng.standard_normal((2, 8, 5)).astype("<f4")  # channels, points, trials
        data.reshape(-1, order="F").tofile(tmp_path / "r.fdt")
        savemat(tmp_path / "r.set", {"EEG": {"nbchan": 2, "pnts": 8, "trials": 5, "srate": 100.0, "data": "r.fdt"}})
        ds = load_dataset(tmp_path / "r.set", 8)
        assert ds.samples.shape == (2, 5, 8)
        np.testing.assert_array_equal(ds.samples[1, 3], data[1, :, 3])
