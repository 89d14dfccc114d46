import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mia_audit.grid import GridFormatError, MiaGrid, load_grid, save_grid, subset_models


def small_grid():
    scores = np.array([[0.1, 0.2], [0.3, 0.4]])
    mask = np.array([[True, False], [False, True]])
    return MiaGrid(scores, mask, sample_ids=["a", "b"], meta={"source": "test"})


class TestConstruction:
    def test_minimal(self):
        g = small_grid()
        assert g.n_models == 2 and g.n_samples == 2

    def test_shape_mismatch(self):
        with pytest.raises(GridFormatError, match="shape mismatch"):
            MiaGrid(np.zeros((2, 3)), np.zeros((2, 2), dtype=bool))

    def test_non_finite(self):
        scores = np.array([[0.1, np.nan], [0.3, 0.4]])
        with pytest.raises(GridFormatError, match=r"non-finite score at \(0,1\)"):
            MiaGrid(scores, np.zeros((2, 2), dtype=bool))

    def test_empty(self):
        with pytest.raises(GridFormatError):
            MiaGrid(np.zeros((0, 2)), np.zeros((0, 2), dtype=bool))

    def test_bad_ids(self):
        with pytest.raises(GridFormatError):
            MiaGrid(np.zeros((2, 2)), np.zeros((2, 2), dtype=bool), sample_ids=["x"])

    def test_column_counts(self):
        g = small_grid()
        n_in = g.mask.sum(axis=0)
        assert ((n_in >= 0) & (n_in <= g.n_models)).all()


class TestBinaryFormat:
    def test_round_trip(self, tmp_path):
        g = small_grid()
        path = tmp_path / "g.miag"
        save_grid(g, path, format="binary")
        back = load_grid(path, format="binary")
        assert back == g
        assert back.meta["source"] == "test"

    def test_byte_deterministic(self, tmp_path):
        g = small_grid()
        save_grid(g, tmp_path / "a.miag")
        save_grid(g, tmp_path / "b.miag")
        assert (tmp_path / "a.miag").read_bytes() == (tmp_path / "b.miag").read_bytes()

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.miag"
        p.write_bytes(b"NOPE" + b"\0" * 40)
        with pytest.raises(GridFormatError, match="bad magic"):
            load_grid(p, format="binary")

    def test_bad_version(self, tmp_path):
        g = small_grid()
        p = tmp_path / "g.miag"
        save_grid(g, p)
        blob = bytearray(p.read_bytes())
        blob[4] = 99
        p.write_bytes(bytes(blob))
        with pytest.raises(GridFormatError, match="version"):
            load_grid(p)

    def test_truncated(self, tmp_path):
        g = small_grid()
        p = tmp_path / "g.miag"
        save_grid(g, p)
        p.write_bytes(p.read_bytes()[:30])
        with pytest.raises(GridFormatError, match="truncated"):
            load_grid(p)

    def test_mask_byte_out_of_range(self, tmp_path):
        g = small_grid()
        p = tmp_path / "g.miag"
        save_grid(g, p)
        blob = bytearray(p.read_bytes())
        blob[24 + 4 * 8] = 7  # first mask byte
        p.write_bytes(bytes(blob))
        with pytest.raises(GridFormatError, match="mask byte"):
            load_grid(p)

    @settings(max_examples=30)
    @given(st.data())
    def test_round_trip_property(self, tmp_path_factory, data):
        m = data.draw(st.integers(1, 8))
        n = data.draw(st.integers(1, 8))
        rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
        scores = rng.standard_normal((m, n)) * 10.0 ** rng.integers(-8, 8)
        mask = rng.random((m, n)) < 0.5
        g = MiaGrid(scores, mask)
        path = tmp_path_factory.mktemp("rt") / "g.miag"
        save_grid(g, path)
        back = load_grid(path)
        assert np.array_equal(back.scores, g.scores)
        assert np.array_equal(back.mask, g.mask)


class TestCsvFormat:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        g = MiaGrid(
            rng.standard_normal((5, 3)) * 1e-7,
            rng.random((5, 3)) < 0.5,
            sample_ids=["x", "y", "z"],
            meta={"k": 1},
        )
        d = tmp_path / "grid"
        save_grid(g, d, format="csv")
        back = load_grid(d, format="csv")
        # 17 significant digits round-trip doubles exactly
        assert np.array_equal(back.scores, g.scores)
        assert np.array_equal(back.mask, g.mask)
        assert back.sample_ids == g.sample_ids
        assert back.meta == g.meta

    def test_no_header(self, tmp_path):
        d = tmp_path / "grid"
        d.mkdir()
        (d / "scores.csv").write_text("0.1,0.2\n0.3,0.4\n")
        (d / "mask.csv").write_text("1,0\n0,1\n")
        g = load_grid(d, format="csv")
        assert g.sample_ids is None
        assert g.scores[0, 1] == 0.2

    def test_nan_cell(self, tmp_path):
        d = tmp_path / "grid"
        d.mkdir()
        (d / "scores.csv").write_text("0.1,nan\n0.3,0.4\n")
        (d / "mask.csv").write_text("1,0\n0,1\n")
        with pytest.raises(GridFormatError, match=r"non-finite score at \(0,1\)"):
            load_grid(d, format="csv")

    def test_bad_mask_value(self, tmp_path):
        d = tmp_path / "grid"
        d.mkdir()
        (d / "scores.csv").write_text("0.1,0.2\n")
        (d / "mask.csv").write_text("1,2\n")
        with pytest.raises(GridFormatError, match="mask cells"):
            load_grid(d, format="csv")

    def test_shape_mismatch(self, tmp_path):
        d = tmp_path / "grid"
        d.mkdir()
        (d / "scores.csv").write_text("0.1,0.2\n0.3,0.4\n")
        (d / "mask.csv").write_text("1,0\n")
        with pytest.raises(GridFormatError, match="shape mismatch"):
            load_grid(d, format="csv")

    def test_unwritable_path(self):
        g = small_grid()
        with pytest.raises(OSError):
            save_grid(g, "/proc/definitely/not/writable/grid.miag", format="binary")


class TestSubsetModels:
    def test_identity(self):
        g = small_grid()
        sub = subset_models(g, g.n_models, "first")
        assert sub == g

    def test_first_row(self):
        g = small_grid()
        sub = subset_models(g, 1, "first")
        assert sub.n_models == 1
        assert np.array_equal(sub.scores, g.scores[:1])

    def test_seeded_reproducible(self):
        rng = np.random.default_rng(9)
        g = MiaGrid(rng.standard_normal((20, 4)), rng.random((20, 4)) < 0.5)
        a = subset_models(g, 7, "random", seed=42)
        b = subset_models(g, 7, "random", seed=42)
        assert a == b
        c = subset_models(g, 7, "random", seed=43)
        assert not np.array_equal(a.scores, c.scores)

    def test_preserves_columns(self):
        rng = np.random.default_rng(10)
        g = MiaGrid(rng.standard_normal((20, 6)), rng.random((20, 6)) < 0.5)
        sub = subset_models(g, 5, "random", seed=1)
        assert sub.n_samples == g.n_samples
        assert sub.mask.shape == sub.scores.shape

    def test_out_of_range(self):
        g = small_grid()
        for bad in (0, 3, -1):
            with pytest.raises(ValueError):
                subset_models(g, bad)

    def test_random_needs_seed(self):
        with pytest.raises(ValueError, match="seed"):
            subset_models(small_grid(), 1, "random")
