import math

import pytest

import mtlm


def test_wer_fixture():
    w = mtlm.wer("play the beatles".split(), "play beatles".split())
    assert w["deletions"] == 1
    assert w["wer"] == pytest.approx(1 / 3, abs=1e-15)


def test_metric_fixtures():
    assert mtlm.intent_error_rate(["a", "b", "c", "d"], ["a", "b", "c", "x"]) == 0.25
    assert mtlm.werr(0.2, 0.1) == pytest.approx(-0.5)


def test_combined_score_fixture():
    assert mtlm.combined_score(-4.0, 2, -3.0, 0.006) == pytest.approx(-2.018, abs=1e-12)
    assert mtlm.combined_score(-4.2, 2, -1.0, 0.006) == pytest.approx(-2.106, abs=1e-12)


def test_rwma_weights_stay_clamped():
    r = mtlm.Rwma()
    assert r.eta == pytest.approx(math.sqrt(2 * math.log(3) / 50))
    for t in range(40):
        weights, _, _ = r.step([3.0 - 0.01 * t, 1.0 + 0.02 * t, 2.0])
        assert sum(weights) == pytest.approx(1.0, abs=1e-9)
        assert all(0.2 - 1e-12 <= w <= 0.6 + 1e-12 for w in weights)


def test_generate_and_model_round_trip(tmp_path):
    data = mtlm.generate(train_nlu=20, dev=5, test_gen=5, test_rare=3)
    assert len(data["train_nlu"]) == 20
    assert len(data["train_trans"]) == 160
    words = sorted({t for u in data["train_nlu"] for t in u["tokens"]})
    model = mtlm.Model.create(words, data["intents"], data["slot_labels"], embedding=8, hidden=8)
    sentence = data["dev"][0]["tokens"]
    assert model.logprob(sentence) < 0
    assert model.predict_intent(sentence) in data["intents"]
    assert len(model.predict_slots(sentence)) == len(sentence)
    path = tmp_path / "m.ckpt"
    model.save(path)
    again = mtlm.Model.load(path)
    assert again.logprob(sentence) == model.logprob(sentence)


def test_rescore_prefers_first_on_ties():
    model = mtlm.Model.create(["a", "b"], ["x", "y"], ["other", "s"], embedding=4, hidden=4, layers=1)
    chosen, lm, combined = model.rescore([(["a"], -1.0), (["a"], -1.0)], lam=0.5)
    assert chosen == 0
    assert combined[0] == combined[1]


def test_errors_carry_their_kind(tmp_path):
    with pytest.raises(mtlm.MtlmError, match="^io:"):
        mtlm.Model.load(tmp_path / "missing.ckpt")
    with pytest.raises(mtlm.MtlmError, match="^domain:"):
        mtlm.wer([], ["a"])
