import pytest

from smoothgen.errors import SchemaError
from smoothgen.ingest import ModelRecord
from smoothgen.tables import (
    AccuracyRow,
    ScoreRow,
    build_matrix,
    read_accuracies_csv,
    read_scores_csv,
    write_accuracies_csv,
    write_scores_csv,
)

MANIFEST = [
    ModelRecord("d0-m0", "mlp", "d0", {}, True),
    ModelRecord("d0-m1", "mlp", "d0", {}, True),
    ModelRecord("d1-m0", "mlp", "d1", {}, True),
    ModelRecord("d1-m1", "mlp", "d1", {}, False),  # never enters the matrix
]

SCORES = [
    ScoreRow("d0-m0", "d0", "d1", "ms_x", 0.25),
    ScoreRow("d0-m1", "d0", "d1", "ms_x", 0.5),
    ScoreRow("d1-m0", "d1", "d1", "ms_x", 1.0 / 3.0),
    ScoreRow("d1-m1", "d1", "d1", "ms_x", 0.9),  # unconverged: dropped
]

ACCURACIES = [
    AccuracyRow("d0-m0", "d1", 0.7),
    AccuracyRow("d0-m1", "d1", 0.8),
    AccuracyRow("d1-m0", "d1", 0.9),
]


class TestCsvRoundTrip:
    def test_scores(self, tmp_path):
        path = tmp_path / "scores.csv"
        write_scores_csv(SCORES, path, meta={"run": "t1"})
        back = read_scores_csv(path)
        assert sorted(back, key=lambda r: r.model_id) == sorted(
            SCORES, key=lambda r: r.model_id)

    def test_float_values_survive_exactly(self, tmp_path):
        path = tmp_path / "scores.csv"
        write_scores_csv(SCORES, path)
        back = {r.model_id: r.value for r in read_scores_csv(path)}
        assert back["d1-m0"] == 1.0 / 3.0  # repr round-trip, no decimal loss

    def test_accuracies(self, tmp_path):
        path = tmp_path / "acc.csv"
        write_accuracies_csv(ACCURACIES, path)
        assert read_accuracies_csv(path) == ACCURACIES

    def test_header_comment_present_and_skipped(self, tmp_path):
        path = tmp_path / "scores.csv"
        write_scores_csv(SCORES, path, meta={"seed": 7})
        first = path.read_text().splitlines()[0]
        assert first.startswith("# smoothgen")
        assert "seed=7" in first
        read_scores_csv(path)  # comments must not confuse the reader

    def test_wrong_columns_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(SchemaError, match="unexpected columns"):
            read_scores_csv(path)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(SchemaError, match="empty"):
            read_scores_csv(path)

    def test_rows_sorted_deterministically(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_scores_csv(SCORES, a)
        write_scores_csv(list(reversed(SCORES)), b)
        assert a.read_bytes() == b.read_bytes()


class TestBuildMatrix:
    def test_join(self):
        matrix = build_matrix(MANIFEST, SCORES, ACCURACIES)
        assert {m.model_id for m in matrix.models} == {"d0-m0", "d0-m1", "d1-m0"}
        assert ("d1-m1", "d1", "ms_x") not in matrix.measures
        assert matrix.measures[("d0-m0", "d1", "ms_x")] == 0.25
        assert matrix.accuracies[("d0-m1", "d1")] == 0.8

    def test_domain_flags(self):
        matrix = build_matrix(MANIFEST, SCORES, ACCURACIES)
        flags = {d.domain_id: d.is_training for d in matrix.domains}
        assert flags == {"d0": True, "d1": True}

    def test_test_only_domain_not_marked_training(self):
        scores = SCORES + [ScoreRow("d0-m0", "d0", "far", "ms_x", 0.1)]
        accs = ACCURACIES + [AccuracyRow("d0-m0", "far", 0.2)]
        matrix = build_matrix(MANIFEST, scores, accs)
        flags = {d.domain_id: d.is_training for d in matrix.domains}
        assert flags["far"] is False

    def test_missing_accuracy_lists_offenders(self):
        with pytest.raises(SchemaError, match="d0-m1/d1"):
            build_matrix(MANIFEST, SCORES, ACCURACIES[:1])

    def test_foreign_model_scores_ignored(self):
        scores = SCORES + [ScoreRow("ghost", "d9", "d1", "ms_x", 0.4)]
        matrix = build_matrix(MANIFEST, scores, ACCURACIES)
        assert all(mid != "ghost" for mid, _, _ in matrix.measures)
