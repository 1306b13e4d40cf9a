import io
import textwrap

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gfepanel import (
    PanelDataset,
    add_lagged_outcome,
    detect_separation,
    individual_means,
    load_csv,
    restrict_periods,
    select_covariates,
    write_csv,
)
from gfepanel.errors import (
    EmptyPeriodRange,
    MissingColumn,
    NonBinaryOutcome,
    NonFiniteCovariate,
    PanelTooShort,
    UnbalancedPanel,
)

from conftest import make_panel


def _csv(text):
    return io.StringIO(textwrap.dedent(text))


class TestLoadCsv:
    def test_two_by_two_panel(self):
        data = load_csv(_csv("""\
            unit,time,y
            1,1,1
            1,2,0
            2,1,1
            2,2,1
        """))
        assert data.n_units == 2
        assert data.n_periods == 2
        assert data.time_ids == (1, 2)
        np.testing.assert_array_equal(data.y, [[1, 0], [1, 1]])

    def test_unbalanced_unit_rejected(self):
        with pytest.raises(UnbalancedPanel) as err:
            load_csv(_csv("""\
                unit,time,y
                A,1,1
                A,2,0
                A,3,1
                B,1,0
                B,2,1
            """))
        assert "A" in str(err.value) or "B" in str(err.value)

    def test_nonbinary_outcome_reports_row(self):
        with pytest.raises(NonBinaryOutcome) as err:
            load_csv(_csv("""\
                unit,time,y
                1,1,1
                1,2,2
                2,1,0
                2,2,1
            """))
        assert "row 1" in str(err.value)

    def test_missing_column(self):
        with pytest.raises(MissingColumn):
            load_csv(_csv("unit,time,outcome\n1,1,1\n1,2,0\n2,1,0\n2,2,1\n"))

    def test_nonfinite_covariate(self):
        with pytest.raises(NonFiniteCovariate):
            load_csv(_csv("""\
                unit,time,y,x
                1,1,1,0.5
                1,2,0,
                2,1,0,1.0
                2,2,1,2.0
            """))

    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        y = (rng.random((5, 4)) < 0.5).astype(float)
        X = rng.normal(size=(5, 4, 3))
        data = make_panel(y, X)
        path = tmp_path / "panel.csv"
        write_csv(data, path)
        back = load_csv(path)
        np.testing.assert_array_equal(back.y, data.y)
        np.testing.assert_allclose(back.X, data.X)
        assert back.covariate_names == data.covariate_names


class TestValidation:
    def test_nonbinary_entries_rejected(self):
        with pytest.raises(NonBinaryOutcome):
            make_panel([[1.0, 0.5], [0.0, 1.0]])

    def test_single_period_rejected(self):
        with pytest.raises(ValueError):
            PanelDataset(["a"], [1], np.array([[1.0]]), np.zeros((1, 1, 0)), ())


class TestDetectSeparation:
    def test_switching_unit_not_separated(self, table1_panel):
        report = detect_separation(table1_panel)
        assert 0 not in report.separated_units

    def test_constant_unit_separated(self, table1_panel):
        report = detect_separation(table1_panel)
        assert report.separated_units == {1}
        assert report.n_kept == 1

    def test_all_zero_panel(self):
        data = make_panel(np.zeros((4, 3)))
        report = detect_separation(data)
        assert report.separated_units == set(range(4))
        assert report.n_kept == 0
        assert report.fraction_dropped_obs == 1.0

    def test_period_subset(self):
        data = make_panel([[1.0, 1.0, 0.0], [0.0, 1.0, 1.0]])
        report = detect_separation(data, periods=[1, 2])
        assert report.separated_units == {0}

    def test_short_period_range(self, table1_panel):
        with pytest.raises(EmptyPeriodRange):
            detect_separation(table1_panel, periods=[1])

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_invariant_to_unit_order(self, seed):
        rng = np.random.default_rng(seed)
        n, t = 6, 4
        y = (rng.random((n, t)) < 0.5).astype(float)
        data = make_panel(y)
        perm = rng.permutation(n)
        permuted = make_panel(y[perm], unit_ids=[f"u{i}" for i in perm])
        base = detect_separation(data).separated_units
        shuffled = detect_separation(permuted).separated_units
        assert {int(perm[i]) for i in range(n) if i in shuffled} == set(base)


class TestLaggedOutcome:
    def test_shift_by_one(self):
        data = make_panel([[1.0, 0.0, 1.0], [0.0, 0.0, 1.0]])
        lagged = add_lagged_outcome(data)
        np.testing.assert_array_equal(lagged.X[0, :, 0], [1.0, 0.0])
        np.testing.assert_array_equal(lagged.y[0], [0.0, 1.0])
        assert lagged.time_ids == (2, 3)

    def test_too_short(self, table1_panel):
        with pytest.raises(PanelTooShort):
            add_lagged_outcome(table1_panel)

    def test_dimension_bookkeeping(self):
        rng = np.random.default_rng(1)
        data = make_panel((rng.random((3, 8)) < 0.5).astype(float),
                          rng.normal(size=(3, 8, 2)))
        lagged = add_lagged_outcome(data)
        assert lagged.n_periods == 7
        assert lagged.n_covariates == 3
        assert lagged.covariate_names[0] == "y_lag"

    def test_initial_spell_is_separated_after_lagging(self):
        # (1,0,0,...,0): constant over the estimation periods 2..T
        y = np.zeros((2, 6))
        y[0, 0] = 1.0
        y[1, 3] = 1.0
        lagged = add_lagged_outcome(make_panel(y))
        report = detect_separation(lagged)
        assert 0 in report.separated_units
        assert 1 not in report.separated_units

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_never_flags_units_with_later_variation(self, seed):
        rng = np.random.default_rng(seed)
        y = (rng.random((5, 5)) < 0.4).astype(float)
        data = make_panel(y)
        report = detect_separation(add_lagged_outcome(data))
        for i in range(5):
            if 0 < y[i, 1:].sum() < 4:
                assert i not in report.separated_units


class TestIndividualMeans:
    def test_arithmetic_mean(self):
        data = make_panel([[1.0, 0.0]], X=[[[0.0, 2.0], [2.0, 0.0]]])
        np.testing.assert_allclose(individual_means(data), [[1.0, 1.0]])

    def test_constant_covariate(self):
        data = make_panel([[1.0, 0.0]], X=np.full((1, 2, 1), 3.25))
        np.testing.assert_allclose(individual_means(data), [[3.25]])

    def test_one_through_four(self):
        data = make_panel([[1.0, 0.0, 1.0, 0.0]],
                          X=np.arange(1.0, 5.0).reshape(1, 4, 1))
        np.testing.assert_allclose(individual_means(data), [[2.5]])


class TestSlicing:
    def test_restrict_periods(self):
        data = make_panel([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0]],
                          X=np.arange(12.0).reshape(2, 3, 2))
        sub = restrict_periods(data, [2, 3])
        assert sub.time_ids == (2, 3)
        np.testing.assert_array_equal(sub.y, data.y[:, 1:])

    def test_select_covariates(self):
        rng = np.random.default_rng(2)
        data = make_panel((rng.random((3, 4)) < 0.5).astype(float),
                          rng.normal(size=(3, 4, 3)),
                          covariate_names=("a", "b", "c"))
        sub = select_covariates(data, ["c", "a"])
        assert sub.covariate_names == ("c", "a")
        np.testing.assert_array_equal(sub.X[:, :, 0], data.X[:, :, 2])
