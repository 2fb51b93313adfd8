import math

import pytest

import wagcn


def test_compute_k():
    assert wagcn.compute_k(150) == 19
    assert wagcn.compute_k(100) == 13
    assert wagcn.compute_k(8) == 2
    assert wagcn.compute_k(1) == 1


def test_temporal_adjacency_spot_values():
    a = wagcn.temporal_adjacency(5)
    assert a[0][0] == 1.0
    assert a[1][2] == pytest.approx(math.exp(-1), abs=0)
    assert a[0][2] == pytest.approx(math.exp(-2), abs=0)
    assert a[3][1] == a[1][3]


def test_uniform_sample_indices():
    assert wagcn.uniform_sample_indices(100, 4) == [0, 25, 50, 75]
    assert wagcn.uniform_sample_indices(3, 6) == [0, 0, 1, 1, 2, 2]


def test_expand_scores():
    frames = wagcn.expand_scores([0.25, 0.75], 40)
    assert len(frames) == 40
    assert frames[:16] == [0.25] * 16
    assert frames[16:32] == [0.75] * 16
    assert frames[32:] == [0.75] * 8  # tail padded with the last segment


def test_roc_auc_perfect_and_reversed():
    res = wagcn.roc_auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])
    assert res["auc"] == 1.0
    assert res["num_frames"] == 4
    assert res["num_positive_frames"] == 2
    res = wagcn.roc_auc([0.1, 0.2, 0.8, 0.9], [1, 1, 0, 0])
    assert res["auc"] == 0.0


def test_roc_auc_rejects_single_class():
    with pytest.raises(ValueError):
        wagcn.roc_auc([0.5, 0.6], [1, 1])


def test_gradcheck_small_model_passes():
    report = wagcn.gradcheck({"t": 4, "d": 8, "dims": [8, 4, 1], "embed_dim": 8})
    assert report["pass"] is True
    assert report["max_rel_err"] < 1e-4
    assert any(p["name"] == "fc.w" for p in report["params"])


def test_end_to_end_pipeline(tmp_path):
    ds = wagcn.synth_generate(
        {
            "num_normal": 4,
            "num_abnormal": 4,
            "test_normal": 2,
            "test_abnormal": 2,
            "d": 8,
            "segments_min": 12,
            "segments_max": 20,
            "burst_min": 3,
            "burst_max": 6,
            "seed": 7,
        },
        str(tmp_path / "ds"),
    )
    summary = wagcn.train(
        ds["train_manifest"],
        {
            "t": 12,
            "epochs": 4,
            "batch_size": 4,
            "dims": [16, 8, 4, 1],
            "embed_dim": 16,
            "eval_every": 2,
            "seed": 7,
        },
        str(tmp_path / "run"),
        eval_manifest=ds["test_manifest"],
    )
    assert summary["final_auc"] is not None
    assert len(summary["log"]) == 4
    assert summary["log"][1]["loss"] <= summary["log"][0]["loss"] * 1.5

    scores = wagcn.score_videos(summary["checkpoint"], ds["test_manifest"])
    assert len(scores) == 4
    assert all(0.0 < s < 1.0 for v in scores.values() for s in v)

    metrics = wagcn.evaluate(ds["test_manifest"], scores)
    assert metrics["auc"] == pytest.approx(summary["final_auc"])
    assert metrics["num_frames"] == sum(
        16 * len(v) for v in scores.values()
    )


def test_train_rejects_bad_config(tmp_path):
    with pytest.raises(ValueError):
        wagcn.train("missing.jsonl", {"t": 0}, str(tmp_path / "x"))
