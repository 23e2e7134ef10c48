import json
import math

import pytest

import l2lws


LEXICON = {"good": [0.8, 0.1, 0.1], "bad": [0.1, 0.8, 0.1]}


def test_annotate_mean_with_unknown_as_neutral():
    probs = l2lws.annotate(["good", "zzz"], LEXICON)
    assert probs == pytest.approx([0.4, 0.05, 0.55])


def test_annotate_empty_raises():
    with pytest.raises(l2lws.InputError):
        l2lws.annotate([], LEXICON)


def test_annotate_file(tmp_path):
    path = tmp_path / "lex.tsv"
    path.write_text("# token\tpos\tneg\tneu\ngood\t0.8\t0.1\t0.1\n")
    out = l2lws.annotate_file(str(path), [["good"], []])
    assert out[0] == pytest.approx([0.8, 0.1, 0.1])
    assert out[1] is None


def test_confidence_target():
    assert l2lws.confidence_target(0, [1, 0, 0]) == 1.0
    assert l2lws.confidence_target(0, [0, 1, 0]) == pytest.approx(1 / 3)
    assert l2lws.confidence_target(0, [1 / 3, 1 / 3, 1 / 3]) == pytest.approx(5 / 9)


def test_macro_f1():
    assert l2lws.macro_f1([0, 0, 0, 1, 1, 1], [0, 0, 1, 1, 1, 0], num_classes=2) == pytest.approx(2 / 3)
    with pytest.raises(l2lws.ValidationError):
        l2lws.macro_f1([0], [0, 1])


def test_generate_synthetic_is_deterministic():
    spec = dict(u_size=50, v_size=10, val_size=10, test_size=10, vocab_size=200, seed=4)
    a = l2lws.generate_synthetic(**spec)
    b = l2lws.generate_synthetic(**spec)
    assert a == b
    assert len(a["u"]) == 50 and len(a["test"]) == 10
    assert a["u"][0]["label"] is None
    assert math.isclose(sum(a["u"][0]["weak"]), 1.0)
    assert a["v"][0]["label"] in ("positive", "negative", "neutral")


def small_config(methods):
    return {
        "methods": methods,
        "seeds": [0],
        "architecture": {"embedding_dim": 8, "conv": [{"filters": 8, "width": 3}],
                         "target_hidden": [8], "confidence_hidden": [8], "dropout": 0.0},
        "train": {"optimizer": "adam", "lr": 0.003, "max_steps": 20, "batch_size": 16,
                  "ratio": [1, 3], "eval_every": 10},
        "data": {"synthetic": {"vocab_size": 150, "u_size": 200, "v_size": 40,
                               "val_size": 40, "test_size": 40}},
    }


def test_train_and_evaluate_checkpoint(tmp_path):
    ckpt = tmp_path / "model.ckpt"
    run = l2lws.train(small_config(["L2LWS"]), "L2LWS", seed=0, checkpoint=ckpt)
    assert run["error"] is None
    assert run["steps"] == 20
    assert 0.0 <= run["test_macro_f1"] <= 1.0
    assert run["records"][-1]["step"] == 20

    syn = l2lws.generate_synthetic(vocab_size=150, u_size=200, v_size=40, val_size=40,
                                   test_size=40, seed=0)
    data = tmp_path / "test.jsonl"
    data.write_text("".join(json.dumps({"id": r["id"], "tokens": r["tokens"], "label": r["label"]}) + "\n"
                            for r in syn["test"]))
    ev = l2lws.evaluate(str(ckpt), str(data))
    assert ev["macro_f1"] == pytest.approx(run["test_macro_f1"])
    assert sum(map(sum, ev["confusion"])) == 40


def test_run_experiment_writes_summary(tmp_path):
    report = l2lws.run_experiment(small_config(["WA", "WSO"]), tmp_path)
    assert (tmp_path / "summary.tsv").exists()
    assert len(report["runs"]) == 2


def test_unknown_config_key():
    cfg = small_config(["WSO"])
    cfg["bogus"] = 1
    with pytest.raises(l2lws.ConfigError):
        l2lws.train(cfg, "WSO")
