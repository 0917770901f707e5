import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tvpolicy.panel import (
    EventWindow,
    PanelDataset,
    PanelLoadError,
    PanelObservation,
    TreatmentSchedule,
    calendar_year,
    event_time,
    load_panel_csv,
    validate_panel,
    write_panel_csv,
)


def _write(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_standin_round_trips_through_csv(tmp_path, standin):
    p = tmp_path / "panel.csv"
    write_panel_csv(standin, p)
    back = load_panel_csv(p)
    assert back.n_states * back.n_years == 900
    assert back.states == tuple(sorted(standin.states))
    i = standin.state_index("Ohio")
    np.testing.assert_array_equal(back.outcome[back.state_index("Ohio")], standin.outcome[i])


def test_empty_file_has_no_observations(tmp_path):
    p = _write(tmp_path / "e.csv", ["state,year,crude_rate,unemployment_rate"])
    with pytest.raises(PanelLoadError, match="no observations"):
        load_panel_csv(p)
    (tmp_path / "blank.csv").write_text("")
    with pytest.raises(PanelLoadError, match="no observations"):
        load_panel_csv(tmp_path / "blank.csv")


def test_duplicate_row_is_named(tmp_path):
    p = _write(
        tmp_path / "d.csv",
        [
            "state,year,crude_rate,unemployment_rate",
            "Ohio,2004,10,5",
            "Ohio,2005,11,5",
            "Ohio,2005,12,5",
        ],
    )
    with pytest.raises(PanelLoadError, match=r"row 4: duplicate \(Ohio, 2005\), first seen on row 3"):
        load_panel_csv(p)


def test_missing_column_and_bad_number(tmp_path):
    p = _write(tmp_path / "m.csv", ["state,year,crude_rate", "Ohio,2004,10"])
    with pytest.raises(PanelLoadError, match="unemployment_rate"):
        load_panel_csv(p)
    p = _write(tmp_path / "b.csv", ["state,year,crude_rate,unemployment_rate", "Ohio,2004,ten,5"])
    with pytest.raises(PanelLoadError, match="row 2: cannot parse crude_rate"):
        load_panel_csv(p)


def test_treated_column_is_honoured(tmp_path):
    p = _write(
        tmp_path / "t.csv",
        [
            "state,year,crude_rate,unemployment_rate,treated",
            "A,2000,1,1,0",
            "A,2001,1,1,1",
            "B,2000,1,1,0",
            "B,2001,1,1,0",
        ],
    )
    data = load_panel_csv(p)
    assert TreatmentSchedule.from_treated(data).adoption_year == {"A": 2001, "B": None}


def test_validate_balanced_panel_ok(standin):
    assert validate_panel(standin).ok


def test_validate_reports_gap_and_negative():
    obs = [PanelObservation(s, y, 1.0, 1.0) for s in ("Utah", "Ohio") for y in (2009, 2010, 2011)]
    obs = [o for o in obs if not (o.state == "Utah" and o.year == 2010)]
    rep = validate_panel(obs)
    assert "unbalanced: Utah missing 2010" in rep.violations

    obs = [PanelObservation("Ohio", 2009, -1.0, 1.0), PanelObservation("Ohio", 2010, 1.0, 1.0)]
    rep = validate_panel(obs)
    assert not rep.ok
    assert any(v.startswith("negative outcome") for v in rep.violations)


def test_validate_non_absorbing_treatment():
    obs = [PanelObservation("A", 2000, 1, 1, True), PanelObservation("A", 2001, 1, 1, False)]
    assert "non-absorbing treatment: A" in validate_panel(obs).violations


def test_event_time_examples():
    sched = TreatmentSchedule({"A": 2005, "B": None})
    assert event_time("A", 2005, sched) == 1
    assert event_time("A", 2003, sched) == -2
    assert event_time("B", 2010, sched) is None
    with pytest.raises(KeyError):
        event_time("Z", 2005, sched)


def test_event_window_invariants():
    with pytest.raises(ValueError):
        EventWindow(-1, 5)
    with pytest.raises(ValueError):
        EventWindow(-3, 4)
    np.testing.assert_array_equal(EventWindow(-3, 5).clip(np.array([-9, -2, 0, 7])), [-3, -2, 0, 5])


def test_dataset_arrays_are_read_only(standin):
    with pytest.raises(ValueError):
        standin.outcome[0, 0] = 1.0


@given(adopt=st.integers(1999, 2016), year=st.integers(1999, 2016))
def test_event_matrix_agrees_with_scalar_event_time(adopt, year):
    data = PanelDataset(("A", "B"), range(1999, 2017), np.ones((2, 18)), np.ones((2, 18)))
    sched = TreatmentSchedule({"A": adopt, "B": None})
    et = sched.event_time_matrix(data)
    assert et[0, year - 1999] == event_time("A", year, sched)
    assert np.isnan(et[1]).all()
    # absorbing: treated flags never switch off
    tr = sched.treated_matrix(data)[0]
    assert np.all(np.diff(tr.astype(int)) >= 0)


@given(adopt=st.integers(2000, 2020), j=st.integers(-15, 15).filter(lambda j: j != 0))
def test_calendar_year_inverts_event_time(adopt, j):
    year = int(calendar_year(adopt, j))
    assert event_time("A", year, TreatmentSchedule({"A": adopt})) == j
