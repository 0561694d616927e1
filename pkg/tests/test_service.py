import json

import pytest
from fastapi.testclient import TestClient

from vidtext.service.app import app


@pytest.fixture(scope="module")
def client():
    with TestClient(app, raise_server_exceptions=False) as c:
        yield c


def run_config(tmp, **kw):
    cfg = {
        "corpus": {"size": 4, "canvas_size": 16, "frame_count": 4, "train_fraction": 0.75, "seed": 1},
        "model": {"hidden_size": 16, "vt_layers": 1, "vt_heads": 2, "ct_layers": 1, "ct_heads": 2, "patch_size": 8},
        "steps": 2,
        "batch_size": 2,
        "frames_per_sample": 2,
    }
    cfg.update(kw)
    return cfg


class TestEndpoints:
    def test_health(self, client):
        body = client.get("/health").json()
        assert body["status"] == "ok"

    def test_corpus_generate(self, client, tmp_path):
        response = client.post(
            "/corpus/generate",
            json={"config": {"size": 3, "canvas_size": 16, "frame_count": 3}, "out_dir": str(tmp_path / "c")},
        )
        assert response.status_code == 200
        body = response.json()
        assert body["num_clips"] == 3
        manifest = json.loads(open(body["manifest"]).read())
        assert len(manifest["clip_ids"]) == 3

    def test_pretrain_evaluate_roundtrip(self, client, tmp_path):
        cfg = run_config(tmp_path)
        response = client.post("/pretrain", json={"config": cfg, "out_dir": str(tmp_path / "run")})
        assert response.status_code == 200, response.text
        checkpoint = response.json()["checkpoint"]
        ev = client.post(
            "/evaluate",
            json={"config": cfg, "checkpoint": checkpoint, "task": "retrieval", "split": "val"},
        )
        assert ev.status_code == 200, ev.text
        assert "recall_at_1" in ev.json()["metrics"]

    def test_finetune_endpoint(self, client, tmp_path):
        cfg = run_config(tmp_path)
        pre = client.post("/pretrain", json={"config": cfg, "out_dir": str(tmp_path / "pre")}).json()
        ft = client.post(
            "/finetune",
            json={
                "config": cfg,
                "checkpoint": pre["checkpoint"],
                "task": "retrieval",
                "out_dir": str(tmp_path / "ft"),
            },
        )
        assert ft.status_code == 200, ft.text

    def test_bad_config_is_400(self, client, tmp_path):
        response = client.post(
            "/pretrain", json={"config": {"bogus_key": 1}, "out_dir": str(tmp_path)}
        )
        assert response.status_code == 400
        assert "bogus_key" in response.json()["detail"]

    def test_schema_violation_is_422(self, client):
        response = client.post("/pretrain", json={"config": {}, "out_dir": "/tmp/x", "extra": 1})
        assert response.status_code == 422

    def test_missing_checkpoint_is_400(self, client, tmp_path):
        cfg = run_config(tmp_path)
        response = client.post(
            "/evaluate",
            json={"config": cfg, "checkpoint": str(tmp_path / "nope"), "task": "retrieval", "split": "val"},
        )
        assert response.status_code == 400

    def test_runtime_failure_is_500(self, client, tmp_path):
        # vq codebook cannot be filled from a tiny uniform corpus: a runtime
        # (data-dependent) failure, not a schema error
        cfg = run_config(tmp_path, mvm_targets=["vq"], codebook_size=64)
        response = client.post("/pretrain", json={"config": cfg, "out_dir": str(tmp_path / "run")})
        assert response.status_code == 500

    def test_gradcheck_endpoint(self, client):
        response = client.post("/gradcheck", json={"seed": 0, "coords_per_param": 1})
        assert response.status_code == 200
        assert response.json()["max_rel_err"] < 1e-4

    def test_sweep_endpoint(self, client, tmp_path):
        cfg = run_config(tmp_path, steps=1)
        response = client.post(
            "/sweep",
            json={"config": cfg, "out_dir": str(tmp_path / "sweep"), "targets": [["pixel"]]},
        )
        assert response.status_code == 200, response.text
        body = response.json()
        assert [row["cell"] for row in body["rows"]] == ["baseline", "pixel"]
        assert "recall_at_1" in body["table"]


class TestCli:
    def invoke(self, args):
        from click.testing import CliRunner

        from vidtext.cli import main

        return CliRunner().invoke(main, args)

    def test_gen_corpus_and_exit_codes(self, tmp_path):
        cfg_path = tmp_path / "corpus.json"
        cfg_path.write_text(json.dumps({"size": 3, "canvas_size": 16, "frame_count": 3}))
        ok = self.invoke(["gen-corpus", "--config", str(cfg_path), "--out", str(tmp_path / "c")])
        assert ok.exit_code == 0
        event = json.loads(ok.output.splitlines()[0])
        assert event["event"] == "corpus"

    def test_config_error_exit_2(self, tmp_path):
        cfg_path = tmp_path / "bad.json"
        cfg_path.write_text(json.dumps({"not_a_key": True}))
        result = self.invoke(["pretrain", "--config", str(cfg_path), "--out", str(tmp_path / "o")])
        assert result.exit_code == 2
        assert json.loads(result.output.splitlines()[0])["event"] == "error"

    def test_missing_config_file_exit_2(self, tmp_path):
        result = self.invoke(["pretrain", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path)])
        assert result.exit_code == 2

    def test_runtime_error_exit_3(self, tmp_path):
        cfg_path = tmp_path / "run.json"
        cfg_path.write_text(json.dumps(run_config(tmp_path, mvm_targets=["vq"], codebook_size=64)))
        result = self.invoke(["pretrain", "--config", str(cfg_path), "--out", str(tmp_path / "o")])
        assert result.exit_code == 3

    def test_pretrain_then_evaluate(self, tmp_path):
        cfg = run_config(tmp_path)
        cfg_path = tmp_path / "run.json"
        cfg_path.write_text(json.dumps(cfg))
        pre = self.invoke(["pretrain", "--config", str(cfg_path), "--out", str(tmp_path / "run")])
        assert pre.exit_code == 0, pre.output
        checkpoint = json.loads(pre.output.splitlines()[0])["checkpoint"]
        ev = self.invoke(
            ["evaluate", "--config", str(cfg_path), "--checkpoint", checkpoint, "--task", "captioning", "--split", "val"]
        )
        assert ev.exit_code == 0, ev.output
        metrics = json.loads(ev.output.splitlines()[0])
        assert metrics["event"] == "metrics"

    def test_seed_override(self, tmp_path):
        cfg_path = tmp_path / "run.json"
        cfg_path.write_text(json.dumps(run_config(tmp_path)))
        a = self.invoke(["pretrain", "--config", str(cfg_path), "--seed", "7", "--out", str(tmp_path / "a")])
        assert a.exit_code == 0
        meta = json.loads((tmp_path / "a" / "checkpoint" / "meta.json").read_text())
        assert meta["step"] == 2
