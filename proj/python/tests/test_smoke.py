import json

import pytest

import doge


def tiny_cfg(seed=3, mode="doge"):
    d = json.loads(doge.RunConfig.preset("toy").to_json())
    d.update(seed=seed, mode=mode, rounds=1, warmup_steps=2)
    d["stage1"].update(steps=2, batch_size=4)
    d["stage2"].update(steps=3, batch_size=4)
    d["curriculum"].update(suite_size=6, knowledge_records=12)
    return doge.RunConfig.from_json(json.dumps(d))


def test_normalize_advantages_properties():
    rewards = [0.1, 0.9, 0.4, 0.4]
    adv = doge.normalize_advantages(rewards)
    assert abs(sum(adv)) < 1e-9
    shifted = doge.normalize_advantages([r + 2.5 for r in rewards])
    assert all(abs(a - b) < 1e-9 for a, b in zip(adv, shifted))
    assert doge.normalize_advantages([0.5] * 6) == [0.0] * 6
    assert doge.normalize_advantages([1.0]) == [0.0]
    with pytest.raises(ValueError):
        doge.normalize_advantages([])


def test_config_json_roundtrip():
    cfg = doge.RunConfig.preset("toy")
    assert cfg.rounds == 1
    d = json.loads(cfg.to_json())
    d["stage2"]["steps"] = 5
    cfg2 = doge.RunConfig.from_json(json.dumps(d))
    assert json.loads(cfg2.to_json())["stage2"]["steps"] == 5
    cfg2.mode = "baseline"
    assert cfg2.mode == "baseline"
    with pytest.raises(ValueError):
        doge.RunConfig.preset("nope")
    with pytest.raises(ValueError):
        doge.RunConfig.from_json("{}")


def test_gradcheck_small():
    res = doge.gradcheck(trials=20, seed=7)
    assert res["instances"] == 20
    assert res["max_rel_err"] <= 1e-5
    assert res["flat_tokens"] > 0
    assert res["slope_tokens"] > 0


def test_train_artifacts_and_eval(tmp_path):
    out = tmp_path / "run"
    res = doge.train(tiny_cfg(), str(out))

    stages = [r["stage"] for r in res["rows"]]
    assert stages.count("warmup") == 2
    assert stages.count("stage1") == 2
    assert stages.count("stage2") == 3
    assert stages.count("eval") == 1

    (h,) = res["handoffs"]
    assert h["thinker_start"] == h["solver_start"] == h["base"]
    assert h["solver_end"] == h["solver_start"]
    assert h["stage2_start"] == h["stage1_end"]
    assert res["final_digest"] == h["stage2_end"]
    assert 0.0 <= res["final_eval"] <= 1.0

    for name in ("metrics.csv", "manifest.json", "final.ckpt.json", "suite_round0.ldjson"):
        assert (out / name).exists()

    report = doge.eval_checkpoint(
        str(out / "final.ckpt.json"), str(out / "suite_round0.ldjson"), k=2
    )
    assert report["tasks"] == 6
    assert 0.0 <= report["aggregate"] <= 1.0
    assert set(report["per_family"]) <= {"lookup", "arith"}


def test_baseline_has_no_stage1(tmp_path):
    res = doge.train(tiny_cfg(mode="baseline"), str(tmp_path / "run"))
    assert all(r["stage"] != "stage1" for r in res["rows"])


def test_determinism(tmp_path):
    r1 = doge.train(tiny_cfg(seed=11), str(tmp_path / "a"))
    r2 = doge.train(tiny_cfg(seed=11), str(tmp_path / "b"))
    assert r1["final_digest"] == r2["final_digest"]

    def strip(rows):
        return [{k: v for k, v in r.items() if k != "wall_ms"} for r in rows]

    assert strip(r1["rows"]) == strip(r2["rows"])
