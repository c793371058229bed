import numpy as np
import pytest
from hypothesis import given, strategies as st

from concavefusion.errors import NonFiniteError, RankDeficientZ, ShapeMismatch, ZeroVarianceColumn
from concavefusion.model import load_csv, make_dataset, standardize, unstandardize


def raw(n=20, seed=0):
    rng = np.random.default_rng(seed)
    Z = rng.normal(3.0, 2.0, (n, 2))
    X = rng.normal(0.5, 1.5, (n, 1))
    y = rng.standard_normal(n)
    return y, X, Z


class TestMakeDataset:
    def test_intercept_prepended(self):
        y, X, Z = raw()
        d = make_dataset(y, X, Z)
        assert d.q == 3 and d.p == 1
        assert np.all(d.Z[:, 0] == 1.0)
        assert d.z_names[0] == "intercept"

    def test_existing_intercept_moved_first(self):
        y, X, Z = raw()
        Z = np.column_stack([Z[:, 0], np.ones(len(y)), Z[:, 1]])
        d = make_dataset(y, X, Z, z_names=["a", "one", "b"])
        assert d.z_names == ("one", "a", "b")
        assert d.q == 3

    def test_no_covariates(self):
        y, X, _ = raw()
        d = make_dataset(y, X)
        assert d.q == 1

    def test_nonfinite(self):
        y, X, Z = raw()
        X[4, 0] = np.nan
        with pytest.raises(NonFiniteError) as info:
            make_dataset(y, X, Z)
        assert (info.value.name, info.value.row) == ("X", 4)

    def test_rank_deficient(self):
        y, X, Z = raw()
        Z[:, 1] = 2 * Z[:, 0]
        with pytest.raises(RankDeficientZ):
            make_dataset(y, X, Z)

    def test_shape_mismatch(self):
        y, X, Z = raw()
        with pytest.raises(ShapeMismatch):
            make_dataset(y[:-1], X, Z)

    def test_fitted(self):
        y, X, Z = raw(n=5)
        d = make_dataset(y, X, Z)
        eta = np.array([1.0, 0.0, 0.0])
        beta = np.full((5, 1), 2.0)
        np.testing.assert_allclose(d.fitted(eta, beta), 1.0 + 2.0 * d.X[:, 0])


class TestStandardize:
    def test_column_moments(self):
        d, _ = standardize(make_dataset(*raw()))
        np.testing.assert_allclose(d.Z[:, 1:].mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(np.sum(d.Z[:, 1:] ** 2, axis=0), d.n)
        np.testing.assert_allclose(np.sum(d.X**2, axis=0), d.n)

    def test_idempotent(self):
        d1, _ = standardize(make_dataset(*raw()))
        d2, info = standardize(d1)
        np.testing.assert_array_equal(d1.Z, d2.Z)
        np.testing.assert_array_equal(d1.X, d2.X)
        np.testing.assert_array_equal(info.column_scales, 1.0)

    def test_zero_variance(self):
        y, X, Z = raw()
        Z[:, 1] = 5.0
        Z[0, 1] = 5.0
        with pytest.raises((ZeroVarianceColumn, RankDeficientZ)):
            standardize(make_dataset(y, X, Z))

    @given(st.integers(0, 10_000))
    def test_round_trip_preserves_fit(self, seed):
        # fitting on the standardized scale and mapping back reproduces the same fitted values
        d = make_dataset(*raw(seed=seed))
        ds, info = standardize(d)
        rng = np.random.default_rng(seed)
        eta_s = rng.standard_normal(ds.q)
        labels = np.arange(d.n) % 2
        alpha_s = rng.standard_normal((2, 1))
        eta, alpha = unstandardize(eta_s, alpha_s, info)
        np.testing.assert_allclose(d.fitted(eta, alpha[labels]), ds.fitted(eta_s, alpha_s[labels]), atol=1e-9)


class TestLoadCsv:
    def test_round_trip(self, tmp_path):
        y, X, Z = raw(n=6)
        f = tmp_path / "d.csv"
        lines = ["y,x,z1,z2"] + [",".join(repr(float(v)) for v in (y[i], X[i, 0], Z[i, 0], Z[i, 1])) for i in range(6)]
        f.write_text("\n".join(lines) + "\n")
        d = load_csv(f, "y", ["x"], ["z1", "z2"])
        np.testing.assert_array_equal(d.y, y)
        np.testing.assert_array_equal(d.X[:, 0], X[:, 0])
        assert d.z_names == ("intercept", "z1", "z2")

    def test_missing_column(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("y,x\n1,2\n3,4\n")
        with pytest.raises(ShapeMismatch, match="w"):
            load_csv(f, "y", ["w"])

    def test_non_numeric(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("y,x\n1,2\n3,abc\n")
        with pytest.raises(ShapeMismatch):
            load_csv(f, "y", ["x"])
