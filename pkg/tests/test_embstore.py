"""Binary embedding format: layout, round trips, streaming, validation."""
import json
import struct

import numpy as np
import pytest

from domainkit import embstore
from domainkit.embstore import (
    BadMagicError,
    EmbeddingFormatError,
    EmbeddingMeta,
    EmbeddingRecord,
    EmbeddingSet,
    InvariantViolationError,
    NonFiniteValueError,
    TruncatedFileError,
    UnsupportedVersionError,
)

from conftest import make_meta, make_set


def test_header_layout_is_21_bytes(tmp_path):
    emb = make_set(np.ones((3, 5), dtype=np.float32))
    path = tmp_path / "a.emb"
    embstore.write_embeddings(emb, path)
    raw = path.read_bytes()
    magic, version, dim, count, dtype, reserved = struct.unpack("<4sHIQBH", raw[:21])
    assert magic == b"EMB1"
    assert version == 1
    assert dim == 5
    assert count == 3
    assert dtype == 0
    assert reserved == 0
    assert len(raw) == 21 + 3 * (20 + 4 * 5)


def test_record_bytes_match_hand_packed_layout(tmp_path):
    vec = np.array([1.5, -2.25, 0.0], dtype=np.float32)
    emb = make_set(
        vec[None, :],
        sentence_ids=np.array([7], dtype=np.uint64),
        doc_ids=np.array([3], dtype=np.uint64),
        domain_ids=np.array([-1], dtype=np.int32),
    )
    path = tmp_path / "one.emb"
    embstore.write_embeddings(emb, path)
    body = path.read_bytes()[21:]
    expected = struct.pack("<QQi", 7, 3, -1) + vec.tobytes()
    assert body == expected


def test_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    emb = make_set(
        rng.normal(size=(50, 9)).astype(np.float32),
        sentence_ids=rng.permutation(50).astype(np.uint64),
        doc_ids=rng.integers(0, 5, 50).astype(np.uint64),
        domain_ids=rng.integers(-1, 3, 50).astype(np.int32),
        meta=make_meta(domain_names={0: "a", 1: "b", 2: "c"}),
    )
    path = tmp_path / "r.emb"
    embstore.write_embeddings(emb, path)
    assert embstore.read_embeddings(path) == emb


def test_mmap_read_equals_full_read(tmp_path):
    rng = np.random.default_rng(1)
    emb = make_set(rng.normal(size=(20, 4)).astype(np.float32))
    path = tmp_path / "m.emb"
    embstore.write_embeddings(emb, path)
    full = embstore.read_embeddings(path, mmap=False)
    mapped = embstore.read_embeddings(path, mmap=True)
    assert np.array_equal(np.asarray(mapped.vectors), full.vectors)
    assert np.array_equal(mapped.sentence_ids, full.sentence_ids)


def test_streaming_matches_full_read_in_order(tmp_path):
    rng = np.random.default_rng(2)
    emb = make_set(rng.normal(size=(33, 7)).astype(np.float32))
    path = tmp_path / "s.emb"
    embstore.write_embeddings(emb, path)
    streamed = list(embstore.iter_embeddings(path, block_records=8))
    assert len(streamed) == 33
    for i, rec in enumerate(streamed):
        assert rec.sentence_id == int(emb.sentence_ids[i])
        assert rec.doc_id == int(emb.doc_ids[i])
        assert rec.domain_id == int(emb.domain_ids[i])
        assert np.array_equal(rec.vector, emb.vectors[i])


def test_from_records_round_trip():
    recs = [
        EmbeddingRecord(5, 1, 0, np.array([1.0, 2.0], dtype=np.float32)),
        EmbeddingRecord(6, 1, -1, np.array([3.0, 4.0], dtype=np.float32)),
    ]
    emb = EmbeddingSet.from_records(recs, dim=2)
    back = list(emb.records())
    assert [r.sentence_id for r in back] == [5, 6]
    assert np.array_equal(back[1].vector, [3.0, 4.0])


def test_sidecar_metadata_round_trip(tmp_path):
    meta = EmbeddingMeta("enc-x", 7, embstore.LEVEL_DOCUMENT, "et", {0: "legal"})
    emb = make_set(np.zeros((2, 3), dtype=np.float32), doc_ids=[0, 1], meta=meta)
    path = tmp_path / "meta.emb"
    embstore.write_embeddings(emb, path)
    sidecar = json.loads(embstore.meta_path(path).read_text())
    assert sidecar["model_name"] == "enc-x"
    assert sidecar["layer"] == 7
    assert sidecar["domain_names"] == {"0": "legal"}
    assert embstore.read_meta(path) == meta


def test_missing_sidecar_gives_default_meta(tmp_path):
    emb = make_set(np.zeros((2, 3), dtype=np.float32))
    path = tmp_path / "nosidecar.emb"
    embstore.write_embeddings(emb, path)
    embstore.meta_path(path).unlink()
    assert embstore.read_meta(path) == EmbeddingMeta()


def test_empty_set_round_trip(tmp_path):
    emb = make_set(np.zeros((0, 4), dtype=np.float32))
    path = tmp_path / "empty.emb"
    embstore.write_embeddings(emb, path)
    back = embstore.read_embeddings(path)
    assert len(back) == 0
    assert back.dim == 4


def test_u64_boundary_ids_round_trip(tmp_path):
    big = np.uint64(2**64 - 1)
    emb = make_set(
        np.ones((1, 2), dtype=np.float32),
        sentence_ids=np.array([big], dtype=np.uint64),
        doc_ids=np.array([big], dtype=np.uint64),
    )
    path = tmp_path / "big.emb"
    embstore.write_embeddings(emb, path)
    back = embstore.read_embeddings(path)
    assert back.sentence_ids[0] == big
    assert back.doc_ids[0] == big


def test_f64_vectors_narrow_to_f32_on_disk(tmp_path):
    emb = make_set(np.array([[0.1, 0.2]], dtype=np.float64))
    path = tmp_path / "narrow.emb"
    embstore.write_embeddings(emb, path)
    back = embstore.read_embeddings(path)
    assert back.vectors.dtype == np.float32
    assert np.array_equal(back.vectors[0], emb.vectors[0].astype(np.float32))


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.emb"
    path.write_bytes(b"XXXX" + b"\x00" * 30)
    with pytest.raises(BadMagicError):
        embstore.read_embeddings(path)


def test_unsupported_version_rejected(tmp_path):
    path = tmp_path / "v9.emb"
    path.write_bytes(struct.pack("<4sHIQBH", b"EMB1", 9, 2, 0, 0, 0))
    with pytest.raises(UnsupportedVersionError):
        embstore.read_embeddings(path)


def test_unsupported_dtype_and_reserved_rejected(tmp_path):
    path = tmp_path / "d.emb"
    path.write_bytes(struct.pack("<4sHIQBH", b"EMB1", 1, 2, 0, 3, 0))
    with pytest.raises(EmbeddingFormatError):
        embstore.read_embeddings(path)
    path.write_bytes(struct.pack("<4sHIQBH", b"EMB1", 1, 2, 0, 0, 5))
    with pytest.raises(EmbeddingFormatError):
        embstore.read_embeddings(path)


def test_zero_dim_header_rejected(tmp_path):
    path = tmp_path / "z.emb"
    path.write_bytes(struct.pack("<4sHIQBH", b"EMB1", 1, 0, 0, 0, 0))
    with pytest.raises(EmbeddingFormatError):
        embstore.read_embeddings(path)


def test_truncation_reports_record_index(tmp_path):
    emb = make_set(np.ones((4, 3), dtype=np.float32))
    path = tmp_path / "t.emb"
    embstore.write_embeddings(emb, path)
    raw = path.read_bytes()
    stride = 20 + 4 * 3
    # cut in the middle of the third record
    path.write_bytes(raw[: 21 + 2 * stride + 5])
    with pytest.raises(TruncatedFileError) as err:
        embstore.read_embeddings(path)
    assert err.value.record_index == 2
    assert embstore.validate_file(path) != []


def test_header_shorter_than_21_bytes(tmp_path):
    path = tmp_path / "short.emb"
    path.write_bytes(b"EMB1\x01")
    with pytest.raises(TruncatedFileError):
        embstore.read_embeddings(path)


def test_non_finite_vector_rejected_on_write_and_read(tmp_path):
    vecs = np.ones((3, 2), dtype=np.float32)
    emb = make_set(vecs.copy())
    emb.vectors[1, 0] = np.nan
    with pytest.raises(NonFiniteValueError, match="record 1"):
        embstore.write_embeddings(emb, tmp_path / "nan.emb")
    # write a clean file, then corrupt one float on disk
    good = make_set(vecs)
    path = tmp_path / "inf.emb"
    embstore.write_embeddings(good, path)
    raw = bytearray(path.read_bytes())
    stride = 20 + 4 * 2
    offset = 21 + 2 * stride + 20  # first vector component of record 2
    raw[offset : offset + 4] = struct.pack("<f", np.inf)
    path.write_bytes(bytes(raw))
    with pytest.raises(NonFiniteValueError, match="record 2"):
        embstore.read_embeddings(path)
    assert embstore.validate_file(path) != []


def test_duplicate_sentence_ids_rejected(tmp_path):
    emb = make_set(
        np.ones((3, 2), dtype=np.float32),
        sentence_ids=np.array([1, 2, 1], dtype=np.uint64),
    )
    with pytest.raises(InvariantViolationError, match="duplicate sentence_id 1") as err:
        embstore.write_embeddings(emb, tmp_path / "dup.emb")
    assert err.value.record_index == 2


def test_unknown_level_rejected(tmp_path):
    emb = make_set(np.ones((1, 2), dtype=np.float32), meta=make_meta(level="tokens"))
    with pytest.raises(InvariantViolationError, match="level"):
        embstore.write_embeddings(emb, tmp_path / "lvl.emb")


def test_domain_names_must_cover_present_domains(tmp_path):
    emb = make_set(
        np.ones((2, 2), dtype=np.float32),
        domain_ids=np.array([0, 1], dtype=np.int32),
        meta=make_meta(domain_names={0: "only-zero"}),
    )
    with pytest.raises(InvariantViolationError, match="domain_id 1"):
        embstore.write_embeddings(emb, tmp_path / "dn.emb")


def test_unknown_domain_minus_one_is_allowed(tmp_path):
    emb = make_set(
        np.ones((2, 2), dtype=np.float32),
        domain_ids=np.array([-1, 0], dtype=np.int32),
        meta=make_meta(domain_names={0: "known"}),
    )
    path = tmp_path / "unk.emb"
    embstore.write_embeddings(emb, path)
    assert embstore.validate_file(path) == []


def test_validate_file_ok_and_missing(tmp_path):
    emb = make_set(np.ones((2, 2), dtype=np.float32))
    path = tmp_path / "ok.emb"
    embstore.write_embeddings(emb, path)
    assert embstore.validate_file(path) == []
    assert embstore.validate_file(tmp_path / "absent.emb") != []


def test_vector_shape_mismatch_rejected():
    emb = EmbeddingSet(
        dim=3,
        sentence_ids=np.arange(2, dtype=np.uint64),
        doc_ids=np.arange(2, dtype=np.uint64),
        domain_ids=np.zeros(2, dtype=np.int32),
        vectors=np.ones((2, 4), dtype=np.float32),
    )
    with pytest.raises(embstore.DimensionMismatchError):
        emb.validate()


def test_with_meta_replaces_only_given_fields(small_set):
    changed = embstore.with_meta(small_set, layer=9)
    assert changed.meta.layer == 9
    assert changed.meta.model_name == small_set.meta.model_name
    assert changed.vectors is small_set.vectors
    assert small_set.meta.layer == 4
