import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tvpolicy.dgp import (
    EFFECT_SCENARIOS,
    Scenario,
    apply_effects,
    draw_treatment,
    effect_profile,
    synthesize_states,
)
from tvpolicy.panel import PanelDataset, TreatmentSchedule, validate_panel


def test_profiles():
    up = effect_profile("RampUp").percents
    np.testing.assert_allclose(up, [1.6666667, 3.3333333, 5.0, 6.6666667, 8.3333333], atol=1e-6)
    np.testing.assert_allclose(effect_profile(Scenario.RAMP_DOWN).percents, up[::-1])
    for sc in EFFECT_SCENARIOS:
        assert np.mean(effect_profile(sc).percents) == pytest.approx(5.0)
    assert effect_profile("Null").percents == (0, 0, 0, 0, 0)


def test_scenario_parse_rejects_unknown():
    with pytest.raises(ValueError, match="RampUp"):
        Scenario.parse("Ramp")


def test_draw_treatment_counts_and_determinism(standin):
    s1 = draw_treatment(standin, 25, np.random.default_rng(11))
    s2 = draw_treatment(standin, 25, np.random.default_rng(11))
    assert s1 == s2
    assert len(s1.adopters()) == 25 and len(s1.never_treated()) == 25
    assert all(2002 <= s1.adoption_year[s] <= 2011 for s in s1.adopters())
    with pytest.raises(ValueError, match="never-treated"):
        draw_treatment(standin, 50, np.random.default_rng(0))


def _one_state(y=20.0, adopt=2001):
    data = PanelDataset(("A", "B"), range(2000, 2010), np.full((2, 10), y), np.ones((2, 10)))
    return data, TreatmentSchedule({"A": adopt, "B": None})


def test_apply_effects_examples():
    data, sched = _one_state()
    out, truth = apply_effects(data, sched, effect_profile("RampUp"), Scenario.RAMP_UP)
    # adoption 2001 -> event time 3 is 2003
    assert out.outcome[0, 3] == pytest.approx(19.0)
    assert truth.truth(3) == pytest.approx(-1.0)
    np.testing.assert_array_equal(out.outcome[1], data.outcome[1])

    out, _ = apply_effects(data, sched, effect_profile("RampDown"), Scenario.RAMP_DOWN)
    assert out.outcome[0, 7] == pytest.approx(20.0 * (1 - 0.0166666667), rel=1e-8)

    out, truth = apply_effects(data, sched, effect_profile("Null"))
    np.testing.assert_array_equal(out.outcome, data.outcome)
    assert all(v == 0 for v in truth.by_event_time.values())


def test_apply_effects_marks_treatment(standin):
    sched = draw_treatment(standin, 10, np.random.default_rng(2))
    out, _ = apply_effects(standin, sched, effect_profile("Temporary"), Scenario.TEMPORARY)
    assert TreatmentSchedule.from_treated(out) == TreatmentSchedule(
        {s: sched.adoption_year[s] for s in out.states}
    )


@given(seed=st.integers(0, 2**32 - 1), sc=st.sampled_from(list(Scenario)))
def test_effects_never_raise_outcomes(seed, sc):
    data, _ = _one_state()
    rng = np.random.default_rng(seed)
    data = data.replace(outcome=rng.uniform(0, 50, size=(2, 10)))
    sched = TreatmentSchedule({"A": int(rng.integers(2000, 2010)), "B": None})
    out, truth = apply_effects(data, sched, effect_profile(sc), sc)
    assert np.all(out.outcome <= data.outcome)
    assert np.all(truth.effect <= 0)
    assert np.all(truth.effect[~out.treated] == 0)


def test_synthesize_states(standin):
    out = synthesize_states(standin, 28, np.random.default_rng(0))
    assert out.n_states == 78
    assert validate_panel(out).ok
    one = synthesize_states(standin, 1, np.random.default_rng(0))
    new = set(one.states) - set(standin.states)
    assert len(new) == 1
    with pytest.raises(ValueError):
        synthesize_states(standin, 0, np.random.default_rng(0))
