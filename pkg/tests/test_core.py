"""Scenario model: validation, serialization, subset enumeration."""

import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from segauction.core import (
    Ad,
    CombinatorialConfig,
    Mechanism,
    NegativePaymentPolicy,
    RelevanceVector,
    Scenario,
    ScenarioValidationError,
    all_subsets,
    parse_mechanism,
    scenario_from_dict,
    scenario_to_dict,
    validate_scenario,
)


def make_scenario(**overrides):
    base = dict(
        query="which mattress should I buy?",
        ads=(
            Ad(id="A", bid=2.0, value=2.0),
            Ad(id="B", bid=1.0, value=1.0),
            Ad(id="C", bid=3.0, value=3.0),
        ),
        relevance=RelevanceVector(q=(0.4, 0.9, 0.2), delta=None),
        segments=2,
        slots=1,
        mechanism=Mechanism.SINGLE_WITH_REPLACEMENT,
        trials=10,
        seed=0,
    )
    base.update(overrides)
    return Scenario(**base)


class TestValidation:
    def test_valid_scenario_passes(self):
        sc = validate_scenario(make_scenario())
        assert sc.n == 3

    def test_all_violations_collected(self):
        sc = make_scenario(
            ads=(Ad(id="", bid=-1.0, value=1.0), Ad(id="B", bid=1.0, value=1.0)),
            relevance=RelevanceVector(q=(0.4,), delta=None),
            segments=0,
        )
        with pytest.raises(ScenarioValidationError) as err:
            validate_scenario(sc)
        codes = {v.code for v in err.value.violations}
        assert "empty_ad_id" in codes
        assert "negative_bid" in codes
        assert "relevance_length_mismatch" in codes
        assert "invalid_segments" in codes

    def test_duplicate_ids_rejected(self):
        sc = make_scenario(ads=(
            Ad(id="A", bid=1.0, value=1.0), Ad(id="A", bid=2.0, value=2.0),
            Ad(id="B", bid=1.0, value=1.0),
        ))
        with pytest.raises(ScenarioValidationError) as err:
            validate_scenario(sc)
        assert any(v.code == "duplicate_ad_id" for v in err.value.violations)

    def test_relevance_range(self):
        sc = make_scenario(relevance=RelevanceVector(q=(0.4, 1.5, 0.2), delta=None))
        with pytest.raises(ScenarioValidationError) as err:
            validate_scenario(sc)
        assert any(v.code == "relevance_out_of_range" for v in err.value.violations)

    def test_all_zero_relevance_rejected(self):
        sc = make_scenario(relevance=RelevanceVector(q=(0.0, 0.0, 0.0), delta=None))
        with pytest.raises(ScenarioValidationError) as err:
            validate_scenario(sc)
        assert any(v.code == "all_relevance_zero" for v in err.value.violations)

    def test_delta_must_be_nonincreasing_positive(self):
        sc = make_scenario(relevance=RelevanceVector(q=(0.4, 0.9, 0.2),
                                                     delta=(0.5, 1.0)))
        with pytest.raises(ScenarioValidationError) as err:
            validate_scenario(sc)
        assert any(v.code == "delta_increasing" for v in err.value.violations)

    def test_without_replacement_needs_enough_ads(self):
        sc = make_scenario(
            mechanism=Mechanism.SINGLE_WITHOUT_REPLACEMENT, segments=4,
        )
        with pytest.raises(ScenarioValidationError) as err:
            validate_scenario(sc)
        codes = {v.code for v in err.value.violations}
        assert "without_replacement_infeasible" in codes

    def test_combinatorial_roster_cap(self):
        n = 21
        sc = make_scenario(
            ads=tuple(Ad(id=f"a{i}", bid=1.0, value=1.0) for i in range(n)),
            relevance=RelevanceVector(q=tuple([0.5] * n), delta=None),
            mechanism=Mechanism.COMBINATORIAL,
            slots=2,
            combinatorial=CombinatorialConfig(),
        )
        with pytest.raises(ScenarioValidationError) as err:
            validate_scenario(sc)
        codes = {v.code for v in err.value.violations}
        assert "combinatorial_roster_too_large" in codes

    def test_pairwise_required_when_beta_positive(self):
        sc = make_scenario(
            mechanism=Mechanism.COMBINATORIAL,
            slots=2,
            combinatorial=CombinatorialConfig(alpha=1.0, beta=0.5, pairwise=None),
        )
        with pytest.raises(ScenarioValidationError) as err:
            validate_scenario(sc)
        assert any(v.code == "pairwise_missing" for v in err.value.violations)


class TestMechanismParsing:
    def test_aliases(self):
        assert parse_mechanism("with_replacement") is Mechanism.SINGLE_WITH_REPLACEMENT
        assert parse_mechanism("naive2") is Mechanism.NAIVE_II
        assert parse_mechanism("multi") is Mechanism.MULTI_ALLOCATION

    def test_canonical_names(self):
        for mech in Mechanism:
            assert parse_mechanism(mech.value) is mech

    def test_unknown_raises(self):
        with pytest.raises(ValueError):
            parse_mechanism("dutch")


class TestSerialization:
    def test_unknown_field_rejected(self):
        payload = scenario_to_dict(make_scenario())
        payload["surprise"] = 1
        with pytest.raises(ScenarioValidationError) as err:
            scenario_from_dict(payload)
        assert any(v.code == "unknown_field" for v in err.value.violations)

    def test_value_defaults_to_bid(self):
        payload = scenario_to_dict(make_scenario())
        for ad in payload["ads"]:
            ad.pop("value", None)
        sc = scenario_from_dict(payload)
        assert all(ad.value == ad.bid for ad in sc.ads)

    def test_round_trip_exact(self):
        sc = make_scenario(
            relevance=RelevanceVector(q=(0.4, 0.9, 0.2), delta=(1.0, 0.5)),
            mechanism=Mechanism.COMBINATORIAL,
            slots=2,
            combinatorial=CombinatorialConfig(
                alpha=0.7, beta=0.0,
                negative_payment=NegativePaymentPolicy.ALLOW,
            ),
        )
        again = scenario_from_dict(scenario_to_dict(sc))
        assert again == sc

    def test_json_round_trip(self):
        payload = scenario_to_dict(make_scenario())
        text = json.dumps(payload)
        sc = scenario_from_dict(json.loads(text))
        assert sc == make_scenario()

    @given(
        n=st.integers(2, 6),
        bids=st.lists(st.floats(0.01, 100.0, allow_nan=False), min_size=6,
                      max_size=6),
        qs=st.lists(st.floats(0.01, 1.0, allow_nan=False), min_size=6,
                    max_size=6),
        segments=st.integers(1, 4),
        trials=st.integers(1, 50),
        seed=st.integers(0, 2**31 - 1),
    )
    @settings(max_examples=60, deadline=None)
    def test_round_trip_property(self, n, bids, qs, segments, trials, seed):
        sc = make_scenario(
            ads=tuple(Ad(id=f"ad{i}", bid=bids[i], value=bids[i])
                      for i in range(n)),
            relevance=RelevanceVector(q=tuple(qs[:n]), delta=None),
            segments=segments,
            trials=trials,
            seed=seed,
        )
        validate_scenario(sc)
        assert scenario_from_dict(scenario_to_dict(sc)) == sc


class TestSubsets:
    def test_enumeration_order_matches_combinations(self):
        got = all_subsets(4, 2)
        assert got == ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))

    def test_count(self):
        import math
        for n in range(1, 8):
            for k in range(1, n + 1):
                assert len(all_subsets(n, k)) == math.comb(n, k)

    def test_scenario_helpers(self):
        sc = make_scenario()
        np.testing.assert_array_equal(sc.bids(), [2.0, 1.0, 3.0])
        np.testing.assert_array_equal(sc.values(), [2.0, 1.0, 3.0])
        assert sc.ad_ids() == ("A", "B", "C")
