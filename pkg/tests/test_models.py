import math

import numpy as np
import pytest

from simlab.corpus import EOS, PAD, SOS, UNK, Vocab, VALUE_IN_GOAL
from simlab.features import FeatureExtractor
from simlab.models import (
    DiscriminatorModel,
    GeneratorModel,
    ModelFormatError,
    decode_walk,
    discriminate,
    encode_turn,
    generate_response,
    load_model,
    save_model,
    sequence_logprob,
)
from simlab.nnet import RecurrentState
from simlab.ontology import UserGoal


TOKENS = [f"inform(food):{VALUE_IN_GOAL}", "request(address)", "bye()", "hello()"]


@pytest.fixture
def fx():
    return FeatureExtractor(Vocab(TOKENS), Vocab(["request(food)"]), ("food",))


@pytest.fixture
def gen(fx):
    return GeneratorModel(fx, np.random.default_rng(0), hidden=8)


class TestEncode:
    def test_zero_model_zero_state(self, fx):
        g = GeneratorModel(fx, rng=None, hidden=8)
        x = np.ones(fx.dim)
        out = encode_turn(g, g.zero_state(), x)
        assert np.all(out.h == 0.0)

    def test_deterministic_and_bounded(self, gen, fx):
        x = np.zeros(fx.dim)
        x[0] = 1.0
        a = encode_turn(gen, gen.zero_state(), x)
        b = encode_turn(gen, gen.zero_state(), x)
        assert np.array_equal(a.h, b.h)
        assert np.all(np.abs(a.h) < 1.0)

    def test_width_mismatch(self, gen):
        with pytest.raises(ValueError):
            encode_turn(gen, gen.zero_state(), np.zeros(3))


class TestGenerate:
    def test_immediate_eos_empty_turn(self, gen):
        gen.params["out.b"][gen.vocab.eos] = 1e3
        out = generate_response(gen, gen.zero_state(), "greedy")
        assert out.tokens == ()
        assert out.ended_with_eos

    def test_three_token_cap_without_eos(self, gen):
        gen.params["out.b"][gen.vocab.eos] = -1e3
        out = generate_response(gen, gen.zero_state(), "greedy")
        assert len(out.tokens) == 3
        assert not out.ended_with_eos

    def test_greedy_deterministic(self, gen):
        s = gen.zero_state()
        a = generate_response(gen, s, "greedy")
        b = generate_response(gen, s, "greedy")
        assert a.tokens == b.tokens

    def test_masked_mass_exactly_zero(self, gen):
        out = generate_response(gen, gen.zero_state(), "greedy")
        for p in out.dists:
            assert p[gen.vocab.pad] == 0.0
            assert p[gen.vocab.sos] == 0.0
            assert abs(p.sum() - 1.0) < 1e-12
            assert np.all(p >= 0.0)

    def test_sampling_respects_rollout_bounds(self, gen):
        rng = np.random.default_rng(5)
        for _ in range(50):
            out = generate_response(gen, gen.zero_state(), "sample", rng)
            assert 0 <= len(out.tokens) <= 3

    def test_sample_without_rng_rejected(self, gen):
        with pytest.raises(ValueError):
            generate_response(gen, gen.zero_state(), "sample")


class TestSequenceLogprob:
    def test_uniform_model_single_token(self, fx):
        g = GeneratorModel(fx, rng=None, hidden=8)  # zero params: uniform dists
        k = len(g.vocab) - 2  # PAD and SOS masked
        lp = sequence_logprob(g, g.zero_state(), (TOKENS[0],))
        assert abs(lp - 2 * math.log(1 / k)) < 1e-12

    def test_nonpositive(self, gen):
        assert sequence_logprob(gen, gen.zero_state(), ("bye()",)) <= 0.0

    def test_matches_stepwise_product(self, gen):
        seq = (TOKENS[0], "request(address)")
        walk = decode_walk(gen, gen.zero_state(), forced=seq)
        product = 1.0
        for p, idx in zip(walk.dists, walk.token_ids):
            product *= p[idx]
        assert abs(math.exp(walk.logprob) - product) < 1e-12

    def test_full_length_reference_skips_eos_step(self, gen):
        walk3 = decode_walk(gen, gen.zero_state(), forced=tuple(TOKENS[:3]))
        assert len(walk3.token_ids) == 3
        walk2 = decode_walk(gen, gen.zero_state(), forced=tuple(TOKENS[:2]))
        assert len(walk2.token_ids) == 3  # two content + EOS
        assert walk2.token_ids[-1] == gen.vocab.eos

    def test_unknown_token_rejected(self, gen):
        with pytest.raises(KeyError):
            sequence_logprob(gen, gen.zero_state(), ("martian()",))

    def test_overlong_reference_rejected(self, gen):
        with pytest.raises(ValueError):
            sequence_logprob(gen, gen.zero_state(), tuple(TOKENS[:4]))


class TestDiscriminator:
    def test_zero_weights_give_half(self, fx):
        d = DiscriminatorModel(fx, rng=None)
        assert discriminate(d, np.zeros(fx.dim), ("bye()",)) == 0.5

    def test_probabilities_complementary(self, fx):
        d = DiscriminatorModel(fx, np.random.default_rng(1))
        p, _ = d.forward(np.ones(fx.dim), ("bye()", "hello()"))
        assert abs(p.sum() - 1.0) < 1e-12

    def test_too_many_tokens(self, fx):
        d = DiscriminatorModel(fx, np.random.default_rng(1))
        with pytest.raises(ValueError):
            discriminate(d, np.zeros(fx.dim), tuple(TOKENS))


class TestSerialization:
    def test_save_load_bit_identical_forward(self, gen, tmp_path):
        p = tmp_path / "gen.json"
        save_model(gen, p, meta={"note": "test"})
        clone = load_model(p)
        x = np.zeros(gen.fx.dim)
        x[1] = 1.0
        a = encode_turn(gen, gen.zero_state(), x)
        b = encode_turn(clone, clone.zero_state(), x)
        assert np.array_equal(a.h, b.h)
        ra = generate_response(gen, a, "greedy")
        rb = generate_response(clone, b, "greedy")
        assert ra.tokens == rb.tokens
        assert ra.logps == rb.logps

    def test_save_deterministic_bytes(self, gen, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        save_model(gen, a)
        save_model(gen, b)
        assert a.read_bytes() == b.read_bytes()

    def test_layout_version_checked(self, gen, tmp_path):
        import json

        p = tmp_path / "gen.json"
        save_model(gen, p)
        doc = json.loads(p.read_text())
        doc["layout_version"] = 99
        p.write_text(json.dumps(doc))
        with pytest.raises(ModelFormatError):
            load_model(p)

    def test_discriminator_round_trip(self, fx, tmp_path):
        d = DiscriminatorModel(fx, np.random.default_rng(3))
        p = tmp_path / "disc.json"
        save_model(d, p)
        clone = load_model(p)
        x = np.ones(fx.dim) * 0.5
        assert discriminate(d, x, ("bye()",)) == discriminate(clone, x, ("bye()",))
