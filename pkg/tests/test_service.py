import json

import pytest
from fastapi.testclient import TestClient

from neuroswarm import pipeline as pl
from neuroswarm.service import create_app

DADA = [(0.0, 15.0, "Disperse"), (15.0, 30.0, "Aggregate"),
        (30.0, 45.0, "Disperse"), (45.0, 60.0, "Aggregate")]


def dada_spec_dict():
    return {
        "duration_s": 60.0,
        "segments": [
            {"start_s": s, "end_s": e,
             "mean": pl.THOUGHT_METRIC_MEANS[lab], "sigma": 0.05}
            for s, e, lab in DADA
        ],
        "noise_uv": 10.0,
    }


@pytest.fixture(scope="module")
def model_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("svc") / "model.txt"
    cfg = pl.SessionConfig(mode="train",
                           synth_spec=pl.SynthSpecModel(**dada_spec_dict()),
                           model_path=str(path), seed=7)
    pl.run_training_session(cfg, DADA)
    return str(path)


@pytest.fixture()
def client():
    with TestClient(create_app(console_dir=None)) as c:
        yield c


def live_config(model_path, duration=60.0, rate=30.0):
    spec = {
        "duration_s": duration,
        "segments": [{"start_s": 0.0, "end_s": duration,
                      "mean": pl.THOUGHT_METRIC_MEANS["Disperse"],
                      "sigma": 0.02}],
    }
    return {
        "mode": "live-sim",
        "synth_spec": spec,
        "model_path": model_path,
        "preset": {"table": {"Aggregate": [4.0, 8.0], "Disperse": [2.0, 8.0]}},
        "drive_speed": 0.5,
        "loop_rate_hz": rate,
        "robots": 3,
        "initial_spacing": 3.0,
        "seed": 1,
    }


def recv_frames(ws, n):
    frames = []
    while len(frames) < n:
        msg = json.loads(ws.receive_text())
        if msg.get("type") == "frame":
            frames.append(msg)
    return frames


class TestRest:
    def test_health(self, client):
        r = client.get("/health")
        assert r.status_code == 200
        assert r.json()["status"] == "ok"

    def test_synth_endpoint(self, client, tmp_path):
        out = tmp_path / "t.trace"
        r = client.post("/synth", json={
            "spec": {"duration_s": 2.0}, "out_path": str(out), "seed": 4})
        assert r.status_code == 200
        body = r.json()
        assert body["eog_frames"] == 256
        assert out.exists()

    def test_train_endpoint(self, client, tmp_path):
        out = tmp_path / "m.txt"
        config = {"mode": "train", "synth_spec": dada_spec_dict(),
                  "model_path": str(out), "seed": 7}
        schedule = [{"start_s": s, "end_s": e, "thought": lab}
                    for s, e, lab in DADA]
        r = client.post("/train", json={"config": config,
                                        "schedule": schedule})
        assert r.status_code == 200
        assert r.json()["agreement"] >= 0.95
        assert out.exists()

    def test_train_validation_maps_to_400(self, client):
        config = {"mode": "train", "synth_spec": dada_spec_dict(), "seed": 7}
        schedule = [{"start_s": 0.0, "end_s": 60.0, "thought": "Disperse"}]
        r = client.post("/train", json={"config": config,
                                        "schedule": schedule})
        assert r.status_code == 400

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/nope").status_code == 404


class TestLiveSession:
    def test_session_lifecycle(self, client, model_path):
        r = client.post("/sessions", json={"config": live_config(model_path)})
        assert r.status_code == 200
        sid = r.json()["session_id"]
        status = client.get(f"/sessions/{sid}").json()
        assert status["state"] == "running"
        stopped = client.delete(f"/sessions/{sid}").json()
        assert stopped["state"] == "stopped"

    def test_frames_stream_and_command_round_trip(self, client, model_path):
        r = client.post("/sessions",
                        json={"config": live_config(model_path, rate=60.0)})
        sid = r.json()["session_id"]
        with client.websocket_connect(f"/ws/{sid}") as ws:
            first = recv_frames(ws, 1)[0]
            assert first["type"] == "frame"
            assert len(first["robots"]) == 3
            assert first["theta"]["v"] == [0.0, 0.0]

            ws.send_text(json.dumps({"type": "eye", "dir": "Left"}))
            nxt = recv_frames(ws, 2)  # reflected within 2 ticks
            assert nxt[-1]["theta"]["v"] == [-0.5, 0.0]
            assert nxt[-1]["theta"]["source"] == "operator-injected"
            assert nxt[-1]["eye"] == "Left"

            ws.send_text(json.dumps({"type": "halt"}))
            nxt = recv_frames(ws, 2)
            assert nxt[-1]["theta"]["v"] == [0.0, 0.0]

            ws.send_text(json.dumps({"type": "gains", "a": 3.0, "b": 6.0,
                                     "mystery_field": 1}))
            ws.send_text(json.dumps({"type": "mode", "value": "manual"}))
            nxt = recv_frames(ws, 3)
            assert (nxt[-1]["theta"]["a"], nxt[-1]["theta"]["b"]) == (3.0, 6.0)
        client.delete(f"/sessions/{sid}")

    def test_error_replies(self, client, model_path):
        r = client.post("/sessions",
                        json={"config": live_config(model_path, rate=5.0)})
        sid = r.json()["session_id"]
        with client.websocket_connect(f"/ws/{sid}") as ws:
            ws.send_text("this is not json")
            reply = None
            for _ in range(20):
                msg = json.loads(ws.receive_text())
                if msg.get("type") == "error":
                    reply = msg
                    break
            assert reply is not None

            ws.send_text(json.dumps({"type": "warp-drive"}))
            reply = None
            for _ in range(20):
                msg = json.loads(ws.receive_text())
                if msg.get("type") == "error":
                    reply = msg
                    break
            assert "unknown type" in reply["error"]
        client.delete(f"/sessions/{sid}")

    def test_disconnect_leaves_session_running(self, client, model_path):
        r = client.post("/sessions", json={"config": live_config(model_path)})
        sid = r.json()["session_id"]
        with client.websocket_connect(f"/ws/{sid}") as ws:
            recv_frames(ws, 2)
        status = client.get(f"/sessions/{sid}").json()
        assert status["state"] == "running"
        assert status["clients"] == 0
        client.delete(f"/sessions/{sid}")

    def test_default_ws_attaches_latest_session(self, client, model_path):
        r = client.post("/sessions", json={"config": live_config(model_path)})
        sid = r.json()["session_id"]
        with client.websocket_connect("/ws") as ws:
            frame = recv_frames(ws, 1)[0]
            assert frame["type"] == "frame"
        client.delete(f"/sessions/{sid}")

    def test_frame_rate_within_ten_percent_at_desk_scale(self, client,
                                                         model_path):
        import time
        config = live_config(model_path)
        config["robots"] = 128
        config["initial_spacing"] = None
        r = client.post("/sessions", json={"config": config})
        sid = r.json()["session_id"]
        with client.websocket_connect(f"/ws/{sid}") as ws:
            recv_frames(ws, 5)  # warm-up
            n = 45
            t0 = time.monotonic()
            recv_frames(ws, n)
            elapsed = time.monotonic() - t0
        client.delete(f"/sessions/{sid}")
        rate = n / elapsed
        assert abs(rate - 30.0) <= 3.0, f"frame rate {rate:.2f} Hz"
