import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swirpad.data import (
    CHANNEL_FILES,
    MANIFEST_HEADER,
    ROI_SHAPE,
    ManifestEntry,
    SwirSample,
    decode_pgm,
    encode_pgm,
    extract_roi,
    load_manifest,
    load_sample,
    write_manifest,
    write_pgm,
    write_sample,
)
from swirpad.errors import BadImage, BadSchema, DuplicateId, MissingFile, OutOfBounds, UnknownId


def make_sample(sample_id="s0", label="bona_fide", species=None, split="train", seed=0):
    rng = np.random.default_rng(seed)
    ch = rng.integers(0, 65536, size=(4, 64, 64), dtype=np.uint16)
    return SwirSample(sample_id, ch, label, species, split)


def write_corpus(root, samples):
    entries = []
    for s in samples:
        write_sample(root / s.sample_id, s)
        entries.append(ManifestEntry(s.sample_id, s.sample_id, s.label, s.pai_species, s.split))
    write_manifest(root / "manifest.csv", entries)
    return root / "manifest.csv"


class TestPgm:
    def test_roundtrip_16bit(self):
        img = np.arange(64 * 64, dtype=np.uint16).reshape(64, 64) * 13
        assert np.array_equal(decode_pgm(encode_pgm(img)), img)

    def test_big_endian_samples(self):
        data = encode_pgm(np.array([[0x0102]], dtype=np.uint16))
        assert data.endswith(b"\x01\x02")
        assert data.startswith(b"P5\n1 1\n65535\n")

    def test_header_comments_and_whitespace(self):
        raw = b"P5\n# made by hand\n2  1\n# depth\n65535\n" + b"\x00\x01\xff\xff"
        assert decode_pgm(raw).tolist() == [[1, 65535]]

    def test_eight_bit_decodes_as_uint8(self):
        raw = b"P5 2 1 255\n" + bytes([3, 250])
        img = decode_pgm(raw)
        assert img.dtype == np.uint8 and img.tolist() == [[3, 250]]

    @pytest.mark.parametrize("raw", [b"P2\n1 1\n255\n0", b"P5\n2 2\n65535\n\x00", b"P5\n"])
    def test_malformed(self, raw):
        with pytest.raises(BadImage):
            decode_pgm(raw)


class TestManifest:
    def test_table_iii_counts(self, tmp_path):
        rows = []
        for split, n in (("train", 130), ("validation", 90), ("test", 5)):
            for k in range(n):
                rows.append(ManifestEntry(f"{split}_bf_{k}", f"d/{split}_bf_{k}", "bona_fide", None, split))
                rows.append(ManifestEntry(f"{split}_pa_{k}", f"d/{split}_pa_{k}", "attack", "latex", split))
        text_path = tmp_path / "manifest.csv"
        write_manifest(text_path, rows)
        from swirpad.data import parse_manifest

        m = parse_manifest(text_path.read_text(), tmp_path, check_files=False)
        counts = m.counts()
        assert counts["train"]["total"] == 260
        assert counts["validation"]["total"] == 180
        assert counts["train"]["bona_fide"] == counts["train"]["attack"] == 130
        assert counts["test"]["total"] == 10

    def test_empty_manifest(self, tmp_path):
        p = tmp_path / "manifest.csv"
        p.write_text(",".join(MANIFEST_HEADER) + "\n")
        m = load_manifest(p)
        assert len(m) == 0
        assert all(c["total"] == 0 for c in m.counts().values())

    def test_attack_without_species(self, tmp_path):
        p = tmp_path / "manifest.csv"
        p.write_text(",".join(MANIFEST_HEADER) + "\nx,x,attack,,train\n")
        with pytest.raises(BadSchema):
            load_manifest(p)

    @pytest.mark.parametrize("row", ["x,x,live,,train", "x,x,bona_fide,,dev", "x,x,bona_fide,latex,train", "x,x"])
    def test_bad_rows(self, tmp_path, row):
        p = tmp_path / "manifest.csv"
        p.write_text(",".join(MANIFEST_HEADER) + "\n" + row + "\n")
        with pytest.raises(BadSchema):
            load_manifest(p)

    def test_wrong_header(self, tmp_path):
        p = tmp_path / "manifest.csv"
        p.write_text("id,path,label,species,split\n")
        with pytest.raises(BadSchema):
            load_manifest(p)

    def test_duplicate_id(self, tmp_path):
        s = make_sample("a")
        write_sample(tmp_path / "a", s)
        p = tmp_path / "manifest.csv"
        p.write_text(",".join(MANIFEST_HEADER) + "\na,a,bona_fide,,train\na,a,bona_fide,,test\n")
        with pytest.raises(DuplicateId):
            load_manifest(p)

    def test_missing_channel_file(self, tmp_path):
        path = write_corpus(tmp_path, [make_sample("a")])
        (tmp_path / "a" / CHANNEL_FILES[2]).unlink()
        with pytest.raises(MissingFile):
            load_manifest(path)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(MissingFile):
            load_manifest(tmp_path / "nope.csv")

    def test_counts_stable_across_reloads(self, tmp_path):
        path = write_corpus(tmp_path, [make_sample("a"), make_sample("b", "attack", "latex", "test", 1)])
        assert load_manifest(path).counts() == load_manifest(path).counts()
        assert load_manifest(tmp_path).counts()["test"]["attack"] == 1


class TestSamples:
    def test_roundtrip(self, tmp_path):
        samples = [make_sample("a"), make_sample("b", "attack", "latex", "validation", 1)]
        man = load_manifest(write_corpus(tmp_path, samples))
        for s in samples:
            back = load_sample(man, s.sample_id)
            assert np.array_equal(back.channels, s.channels)
            assert (back.sample_id, back.label, back.pai_species, back.split) == (
                s.sample_id, s.label, s.pai_species, s.split)

    def test_small_channel_rejected(self, tmp_path):
        man_path = write_corpus(tmp_path, [make_sample("a")])
        write_pgm(tmp_path / "a" / CHANNEL_FILES[0], np.zeros((32, 32), dtype=np.uint16))
        with pytest.raises(BadImage):
            load_sample(load_manifest(man_path), "a")

    def test_eight_bit_channel_rejected(self, tmp_path):
        man_path = write_corpus(tmp_path, [make_sample("a")])
        (tmp_path / "a" / CHANNEL_FILES[1]).write_bytes(b"P5\n64 64\n255\n" + bytes(64 * 64))
        with pytest.raises(BadImage):
            load_sample(load_manifest(man_path), "a")

    def test_unknown_id(self, tmp_path):
        man = load_manifest(write_corpus(tmp_path, [make_sample("a")]))
        with pytest.raises(UnknownId):
            load_sample(man, "zzz")

    def test_sample_is_immutable(self):
        s = make_sample()
        with pytest.raises(ValueError):
            s.channels[0, 0, 0] = 1

    def test_invariants_enforced(self):
        with pytest.raises(BadImage):
            SwirSample("x", np.zeros((3, 64, 64), np.uint16), "bona_fide")
        with pytest.raises(BadSchema):
            SwirSample("x", np.zeros((4, 64, 64), np.uint16), "attack", None)


class TestRoi:
    def test_default_origin(self):
        s = make_sample()
        roi = extract_roi(s, (23, 3))
        assert roi.channels.shape == (4, *ROI_SHAPE)
        assert roi.channels[:, 0, 0].tolist() == s.channels[:, 23, 3].tolist()
        assert roi.n_pixels == 18 * 58 == 1044

    @pytest.mark.parametrize("origin", [(50, 10), (0, 7), (-1, 0), (47, 6)])
    def test_out_of_bounds(self, origin):
        with pytest.raises(OutOfBounds):
            extract_roi(make_sample(), origin)

    @settings(max_examples=60, deadline=None)
    @given(row=st.integers(0, 64 - 18), col=st.integers(0, 64 - 58), seed=st.integers(0, 2**16))
    def test_pure_projection(self, row, col, seed):
        s = make_sample(seed=seed)
        roi = extract_roi(s, (row, col))
        assert np.array_equal(roi.channels, s.channels[:, row:row + 18, col:col + 58])
        assert roi.origin == (row, col)
