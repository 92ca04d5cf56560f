"""Tests for the EMB1 container, manifests, and column utilities."""

import io

import numpy as np
import pytest

from ccup import (
    BadMagicError,
    ClassManifest,
    EmbeddingIOError,
    EmbeddingMatrix,
    LabeledDataset,
    ManifestMismatchError,
    TruncatedPayloadError,
    load_embeddings_csv,
    load_labels,
    normalize_columns,
    partition_columns,
    read_emb1,
    read_embeddings,
    save_labels,
    write_emb1,
    write_embeddings,
)
from helpers import alternating_manifest, f32_matrix


class TestEmb1Format:
    def test_single_column_layout(self, tmp_path):
        matrix = EmbeddingMatrix(2, 1, np.array([[1.0], [0.0]]))
        path = tmp_path / "one.emb1"
        write_emb1(matrix, path)
        raw = path.read_bytes()
        assert len(raw) == 16 + 8  # header + 2 float32 values
        assert raw[:4] == b"EMB1"
        back = read_emb1(path)
        assert np.array_equal(back.values, matrix.values)
        assert back.dim == 2 and back.count == 1

    def test_roundtrip_with_manifest(self, tmp_path):
        rng = np.random.default_rng(11)
        cols = rng.standard_normal((512, 101)).astype(np.float32)
        cols /= np.linalg.norm(cols, axis=0)
        matrix = EmbeddingMatrix(512, 101, cols.astype(np.float64), normalized=True)
        manifest = alternating_manifest(101)
        path = tmp_path / "texts.emb1"
        write_embeddings(matrix, manifest, path)
        back, back_manifest = read_embeddings(path)
        assert np.array_equal(back.values, matrix.values)
        assert back.normalized == matrix.normalized
        assert back_manifest == manifest

    def test_column_major_payload(self, tmp_path):
        # Column j must occupy a contiguous stride of the payload.
        matrix = EmbeddingMatrix(2, 2, np.array([[1.0, 3.0], [2.0, 4.0]]))
        path = tmp_path / "cm.emb1"
        write_emb1(matrix, path)
        payload = np.frombuffer(path.read_bytes()[16:], dtype="<f4")
        assert payload.tolist() == [1.0, 2.0, 3.0, 4.0]

    def test_file_like_roundtrip(self):
        rng = np.random.default_rng(3)
        matrix = f32_matrix(rng, 7, 5)
        sink = io.BytesIO()
        write_emb1(matrix, sink)
        back = read_emb1(io.BytesIO(sink.getvalue()))
        assert np.array_equal(back.values, matrix.values)

    def test_nonfinite_rejected_at_construction(self):
        values = np.ones((2, 2))
        values[0, 1] = np.nan
        with pytest.raises(ValueError, match="finite"):
            EmbeddingMatrix(2, 2, values)

    def test_overflow_rejected_before_any_bytes(self, tmp_path):
        # Finite in float64 but infinite after float32 narrowing.
        matrix = EmbeddingMatrix(2, 1, np.array([[1e300], [0.0]]))
        path = tmp_path / "never.emb1"
        with pytest.raises(ValueError, match="32-bit"):
            write_emb1(matrix, path)
        assert not path.exists()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.emb1"
        path.write_bytes(b"NOPE" + b"\x00" * 20)
        with pytest.raises(BadMagicError):
            read_emb1(path)

    def test_truncated_payload(self, tmp_path):
        matrix = f32_matrix(np.random.default_rng(5), 4, 3)
        path = tmp_path / "t.emb1"
        write_emb1(matrix, path)
        whole = path.read_bytes()
        path.write_bytes(whole[:-5])
        with pytest.raises(TruncatedPayloadError):
            read_emb1(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        matrix = f32_matrix(np.random.default_rng(5), 4, 3)
        path = tmp_path / "t.emb1"
        write_emb1(matrix, path)
        path.write_bytes(path.read_bytes() + b"\x00\x00")
        with pytest.raises(EmbeddingIOError, match="trailing"):
            read_emb1(path)

    def test_manifest_count_mismatch(self, tmp_path):
        matrix = f32_matrix(np.random.default_rng(5), 4, 2)
        path = tmp_path / "texts.emb1"
        write_emb1(matrix, path)
        alternating_manifest(3).save(tmp_path / "texts.manifest.json")
        with pytest.raises(ManifestMismatchError):
            read_embeddings(path)

    def test_write_embeddings_requires_matching_counts(self, tmp_path):
        matrix = f32_matrix(np.random.default_rng(5), 4, 2)
        with pytest.raises(ManifestMismatchError):
            write_embeddings(matrix, alternating_manifest(3), tmp_path / "x.emb1")

    def test_bad_flag_and_padding(self, tmp_path):
        matrix = f32_matrix(np.random.default_rng(5), 2, 1)
        path = tmp_path / "f.emb1"
        write_emb1(matrix, path)
        raw = bytearray(path.read_bytes())
        raw[12] = 7
        path.write_bytes(bytes(raw))
        with pytest.raises(EmbeddingIOError, match="flag"):
            read_emb1(path)
        raw[12] = 0
        raw[13] = 1
        path.write_bytes(bytes(raw))
        with pytest.raises(EmbeddingIOError, match="padding"):
            read_emb1(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_emb1(tmp_path / "absent.emb1")


class TestEmbeddingMatrix:
    def test_shape_validation(self):
        with pytest.raises(ValueError, match="shape"):
            EmbeddingMatrix(3, 2, np.ones((2, 3)))

    def test_dim_positive(self):
        with pytest.raises(ValueError, match="dim"):
            EmbeddingMatrix(0, 0, np.ones((0, 0)))

    def test_normalized_flag_checked(self):
        with pytest.raises(ValueError, match="norm"):
            EmbeddingMatrix(2, 1, np.array([[3.0], [4.0]]), normalized=True)

    def test_values_read_only(self):
        matrix = EmbeddingMatrix(2, 1, np.array([[1.0], [2.0]]))
        with pytest.raises(ValueError):
            matrix.values[0, 0] = 9.0

    def test_empty_count_allowed(self):
        matrix = EmbeddingMatrix(4, 0, np.empty((4, 0)))
        assert matrix.count == 0


class TestManifest:
    def test_duplicate_names_rejected(self):
        with pytest.raises(ValueError, match="unique"):
            ClassManifest.from_pairs([("a", "forget"), ("a", "retain")])

    def test_bad_partition_rejected(self):
        with pytest.raises(ValueError, match="partition"):
            ClassManifest.from_pairs([("a", "delete")])

    def test_counts_and_indices(self):
        manifest = ClassManifest.from_pairs(
            [("a", "forget"), ("b", "retain"), ("c", "forget")]
        )
        assert manifest.forget_count == 2
        assert manifest.retain_count == 1
        assert manifest.forget_indices == (0, 2)
        assert manifest.retain_indices == (1,)
        assert manifest.names == ("a", "b", "c")

    def test_save_load_roundtrip(self, tmp_path):
        manifest = alternating_manifest(7)
        path = tmp_path / "m.manifest.json"
        manifest.save(path)
        assert ClassManifest.load(path) == manifest

    def test_missing_manifest_names_path(self, tmp_path):
        missing = tmp_path / "nope.manifest.json"
        with pytest.raises(FileNotFoundError, match="nope.manifest.json"):
            ClassManifest.load(missing)


class TestNormalizeColumns:
    def test_three_four_five(self):
        matrix = EmbeddingMatrix(2, 1, np.array([[3.0], [4.0]]))
        result = normalize_columns(matrix)
        assert np.allclose(result.values[:, 0], [0.6, 0.8], atol=1e-15)
        assert result.normalized

    def test_idempotent(self):
        rng = np.random.default_rng(2)
        matrix = EmbeddingMatrix(8, 5, rng.standard_normal((8, 5)))
        once = normalize_columns(matrix)
        twice = normalize_columns(once)
        assert np.max(np.abs(twice.values - once.values)) <= 1e-12

    def test_zero_column_names_index(self):
        values = np.ones((3, 4))
        values[:, 2] = 0.0
        with pytest.raises(ValueError, match=r"\[2\]"):
            normalize_columns(EmbeddingMatrix(3, 4, values))

    def test_empty_matrix(self):
        result = normalize_columns(EmbeddingMatrix(3, 0, np.empty((3, 0))))
        assert result.normalized


class TestCsvLoader:
    def test_basic_fixture(self, tmp_path):
        path = tmp_path / "f.csv"
        path.write_text("dim,count\n3,2\n1.0,0.0,0.0\n0.5,0.5,0.0\n")
        matrix = load_embeddings_csv(path)
        assert matrix.dim == 3 and matrix.count == 2
        assert np.allclose(matrix.values[:, 1], [0.5, 0.5, 0.0])

    def test_missing_header(self, tmp_path):
        path = tmp_path / "f.csv"
        path.write_text("3,2\n1.0,0.0,0.0\n0.5,0.5,0.0\n")
        with pytest.raises(EmbeddingIOError, match="dim,count"):
            load_embeddings_csv(path)

    def test_wrong_entry_count(self, tmp_path):
        path = tmp_path / "f.csv"
        path.write_text("dim,count\n3,1\n1.0,0.0\n")
        with pytest.raises(EmbeddingIOError, match="entries"):
            load_embeddings_csv(path)


class TestLabelsAndDataset:
    def test_label_roundtrip(self, tmp_path):
        path = tmp_path / "x.labels.json"
        save_labels([0, 1, 1, 2], path)
        assert load_labels(path) == (0, 1, 1, 2)

    def test_label_file_validation(self, tmp_path):
        path = tmp_path / "x.labels.json"
        path.write_text('["a", "b"]')
        with pytest.raises(ValueError, match="integers"):
            load_labels(path)

    def test_dataset_length_check(self):
        features = f32_matrix(np.random.default_rng(1), 4, 3)
        with pytest.raises(ValueError, match="label count"):
            LabeledDataset(features=features, labels=(0, 1))

    def test_dataset_range_check(self):
        features = f32_matrix(np.random.default_rng(1), 4, 3)
        dataset = LabeledDataset(features=features, labels=(0, 1, 5))
        with pytest.raises(ValueError, match="out of range"):
            dataset.validate_against(alternating_manifest(3))


def test_partition_columns():
    matrix = EmbeddingMatrix(2, 3, np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]))
    manifest = ClassManifest.from_pairs(
        [("a", "forget"), ("b", "retain"), ("c", "forget")]
    )
    forget, retain = partition_columns(matrix, manifest)
    assert forget.count == 2 and retain.count == 1
    assert np.array_equal(forget.values, [[1.0, 3.0], [4.0, 6.0]])
    assert np.array_equal(retain.values, [[2.0], [5.0]])
