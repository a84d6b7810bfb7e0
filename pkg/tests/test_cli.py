import csv
import json

import pytest

from pvos import dataset as ds
from pvos.cli import bundled_scenarios, main, render_stats
from pvos.dataset import Manifest, VideoRecord


def gen(tmp_path, name, *extra):
    out = tmp_path / name
    assert main(["gen-scenario", name, "--out", str(out), *extra]) == 0
    return out


def events(out_dir):
    rows = {}
    for p in sorted((out_dir / "logs").glob("*.jsonl")):
        rows[p.stem] = [json.loads(line) for line in p.read_text().splitlines()]
    return rows


def eval_rows(out_dir, gt, pred):
    assert main(["eval", str(gt), str(pred), "--out", str(out_dir)]) == 0
    with open(out_dir / "eval.csv") as fh:
        return list(csv.DictReader(fh))


def test_bundled_list():
    assert bundled_scenarios() == ["drift", "hallucination", "negatives", "visual"]


class TestGenScenario:
    def test_drift_manifest(self, tmp_path):
        out = gen(tmp_path, "drift")
        m = ds.read_manifest(out / "manifest.json")
        (v,) = m.videos
        assert len(v.masklets) == 1
        assert [p.modality for p in v.prompts] == ["text"]

    def test_same_seed_same_bytes(self, tmp_path):
        a = gen(tmp_path, "drift") / "manifest.json"
        b = tmp_path / "again"
        assert main(["gen-scenario", "drift", "--out", str(b)]) == 0
        assert a.read_bytes() == (b / "manifest.json").read_bytes()
        c = tmp_path / "reseeded"
        assert main(["gen-scenario", "drift", "--out", str(c), "--seed", "99"]) == 0
        assert a.read_bytes() != (c / "manifest.json").read_bytes()

    def test_malformed_json(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"seed": 1,\n  "frame_size": [4, 4],,}')
        assert main(["gen-scenario", str(bad), "--out", str(tmp_path)]) == 2
        assert "line 2" in capsys.readouterr().err

    def test_invalid_scene(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"frame_size": [4, 4]}')
        assert main(["gen-scenario", str(bad), "--out", str(tmp_path)]) == 2

    def test_unknown_file(self, tmp_path):
        assert main(["gen-scenario", str(tmp_path / "nope.json")]) == 2


class TestRunEval:
    def test_drift_exit_gate_contrast(self, tmp_path):
        gt = gen(tmp_path, "drift") / "manifest.json"
        on, off = tmp_path / "on", tmp_path / "off"
        assert main(["run", str(gt), "--out", str(on)]) == 0
        assert main(["run", str(gt), "--out", str(off), "--no-exit-gate"]) == 0
        assert any(e["event"] == "fallback" for e in events(on)["drift__text"])
        assert not any(e["event"] == "fallback" for e in events(off)["drift__text"])
        jf_on = float(eval_rows(on, gt, on / "predictions.json")[0]["JF"])
        jf_off = float(eval_rows(off, gt, off / "predictions.json")[0]["JF"])
        assert jf_on > jf_off

    def test_visual_modality_skips_entry_gate(self, tmp_path):
        gt = gen(tmp_path, "visual") / "manifest.json"
        out = tmp_path / "run"
        assert main(["run", str(gt), "--out", str(out), "--modality", "visual"]) == 0
        logs = events(out)
        assert set(logs) == {"visual__points", "visual__box"}
        for rows in logs.values():
            kinds = {e["event"] for e in rows}
            assert "visual_init" in kinds
            assert not kinds & {"detect", "activation", "check", "fallback"}

    def test_perfect_oracle_rows(self, tmp_path, capsys):
        gt = gen(tmp_path, "visual") / "manifest.json"
        out = tmp_path / "run"
        assert main(["run", str(gt), "--out", str(out), "--dump-memory"]) == 0
        assert "FPS" in capsys.readouterr().err
        assert list((out / "logs").glob("*.memory.json"))
        rows = eval_rows(out, gt, out / "predictions.json")
        assert [r["JF"] for r in rows] == ["100.0"] * len(rows)
        assert rows[-1]["video"] == "ALL"

    def test_missing_prediction_file(self, tmp_path):
        gt = gen(tmp_path, "drift") / "manifest.json"
        assert main(["eval", str(gt), str(tmp_path / "missing.json")]) == 3

    def test_missing_manifest(self, tmp_path):
        assert main(["run", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 3
        assert main(["run", "--out", str(tmp_path)]) == 2

    def test_bad_overrides(self, tmp_path):
        gt = gen(tmp_path, "drift") / "manifest.json"
        assert main(["run", str(gt), "--ast", "window_size=0"]) == 2
        assert main(["run", str(gt), "--ast", "bogus=1"]) == 2
        assert main(["run", str(gt), "--memory", "capacity"]) == 2

    def test_run_config_file(self, tmp_path):
        gt = gen(tmp_path, "drift") / "manifest.json"
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"manifest": str(gt), "exit_gate": False, "out": str(tmp_path / "cfg")}))
        assert main(["run", "--config", str(cfg)]) == 0
        assert not any(e["event"] == "fallback" for e in events(tmp_path / "cfg")["drift__text"])
        cfg.write_text('{"manifest": 3')
        assert main(["run", "--config", str(cfg)]) == 2

    def test_protocol_flag_changes_only_late_prompts(self, tmp_path):
        gt = gen(tmp_path, "visual") / "manifest.json"
        out = tmp_path / "run"
        main(["run", str(gt), "--out", str(out)])
        pred = str(out / "predictions.json")
        tables = {}
        for proto in ("auto", "first-frame"):
            path = out / f"{proto}.csv"
            assert main(["eval", str(gt), pred, "--protocol", proto, "--csv", str(path)]) == 0
            with open(path) as fh:
                tables[proto] = {r["masklet_id"]: r for r in csv.DictReader(fh) if r["video"] != "ALL"}
        auto, first = tables["auto"], tables["first-frame"]
        # Point prompt on frame 10 gains the ten leading frames; the frame-0 box prompt is unchanged.
        assert (auto["1@points"]["frames"], first["1@points"]["frames"]) == ("70", "80")
        assert auto["2@box"] == first["2@box"]
        assert auto["1@text"] == first["1@text"]


class TestStats:
    def test_table1(self, tmp_path, table1, capsys):
        path = tmp_path / "t1.json"
        ds.write_manifest(table1, path)
        assert main(["stats", str(path)]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[1].split() == ["surgical-test", "15", "1784", "15", "1784", "0", "0", "119"]

    def test_empty_manifest(self, tmp_path, capsys):
        path = tmp_path / "e.json"
        ds.write_manifest(Manifest("empty"), path)
        assert main(["stats", str(path)]) == 0
        assert capsys.readouterr().out.splitlines()[1].split() == ["empty", "0", "0", "0", "0", "0", "0", "0"]

    def test_two_datasets(self):
        m = Manifest("a", [VideoRecord("v1", 4, 4, 10), VideoRecord("v2", 4, 4, 30, dataset="b")])
        lines = render_stats(ds.dataset_stats(m)).splitlines()
        assert [l.split()[0] for l in lines[1:]] == ["a", "b", "Total"]
        assert lines[-1].split() == ["Total", "2", "40", "0", "0", "0", "0", "20"]


def test_validate(tmp_path, capsys):
    gt = gen(tmp_path, "hallucination") / "manifest.json"
    assert main(["validate", str(gt)]) == 0
    d = json.loads(gt.read_text())
    d["videos"][0]["prompts"][0]["masklet_id"] = "nope"
    gt.write_text(json.dumps(d))
    assert main(["validate", str(gt)]) == 3
    gt.write_text("[")
    assert main(["validate", str(gt)]) == 3
