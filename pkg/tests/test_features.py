import numpy as np
import pytest

from simlab.acts import parse_act
from simlab.corpus import Vocab, VALUE_IN_GOAL
from simlab.features import FeatureExtractor, context_dim
from simlab.ontology import UserGoal


@pytest.fixture
def fx():
    user_vocab = Vocab([f"inform(food):{VALUE_IN_GOAL}", "request(address)", "bye()"])
    sys_vocab = Vocab(["request(food)", "offer(name):VALUE_OTHER", "inform(pricerange):VALUE_IN_GOAL", "inform(pricerange):VALUE_OTHER"])
    return FeatureExtractor(user_vocab, sys_vocab, ("food", "area", "pricerange"))


GOAL = UserGoal({"pricerange": "cheap"}, ("address",))


class TestContextDim:
    def test_layout_arithmetic(self):
        assert context_dim(20, 15, 3) == 39
        assert context_dim(20, 15, 0) == 36

    def test_matches_vector_length(self, fx):
        x = fx.featurize([], [], GOAL, True)
        assert len(x) == fx.dim == context_dim(len(fx.vocab), len(fx.sys_vocab), 3)


class TestFeaturize:
    def test_first_turn_empty_history(self, fx):
        x = fx.featurize([], [], GOAL, True)
        assert x[-1] == 1.0
        assert x[:-1].sum() == 0.0

    def test_inconsistency_flag_set(self, fx):
        x = fx.featurize([], [parse_act("inform(pricerange=expensive)")], GOAL, False)
        off = len(fx.vocab) + len(fx.sys_vocab)
        assert x[off + 2] == 1.0  # pricerange is the third slot

    def test_consistent_inform_no_flag(self, fx):
        x = fx.featurize([], [parse_act("inform(pricerange=cheap)")], GOAL, False)
        off = len(fx.vocab) + len(fx.sys_vocab)
        assert x[off : off + 3].sum() == 0.0

    def test_dontcare_constraint_never_inconsistent(self, fx):
        goal = UserGoal({"pricerange": "dontcare"}, ("address",))
        x = fx.featurize([], [parse_act("inform(pricerange=expensive)")], goal, False)
        off = len(fx.vocab) + len(fx.sys_vocab)
        assert x[off : off + 3].sum() == 0.0

    def test_multi_hot_entries_binary(self, fx):
        x = fx.featurize(
            [f"inform(food):{VALUE_IN_GOAL}", "bye()"],
            [parse_act("request(food)")],
            GOAL,
            False,
        )
        assert set(np.unique(x)) <= {0.0, 1.0}

    def test_pure_function(self, fx):
        args = (["bye()"], [parse_act("request(food)")], GOAL, False)
        assert np.array_equal(fx.featurize(*args), fx.featurize(*args))

    def test_order_free_within_turn(self, fx):
        a = fx.featurize(
            [f"inform(food):{VALUE_IN_GOAL}", "bye()"],
            [parse_act("request(food)"), parse_act("inform(pricerange=cheap)")],
            GOAL,
            False,
        )
        b = fx.featurize(
            ["bye()", f"inform(food):{VALUE_IN_GOAL}"],
            [parse_act("inform(pricerange=cheap)"), parse_act("request(food)")],
            GOAL,
            False,
        )
        assert np.array_equal(a, b)

    def test_oov_tallied_on_unk(self, fx):
        before = fx.oov_count
        x = fx.featurize(["martian_token"], [], GOAL, False)
        assert fx.oov_count == before + 1
        assert x[fx.vocab.unk] == 1.0

    def test_layout_round_trip(self, fx):
        clone = FeatureExtractor.from_layout(fx.layout())
        assert clone.vocab.tokens == fx.vocab.tokens
        assert clone.sys_vocab.tokens == fx.sys_vocab.tokens
        assert clone.slots == fx.slots
