"""HTTP control plane and the interactive WebSocket stream."""

import json
import math

import numpy as np
import pytest
from fastapi.testclient import TestClient

from neurotrack import generate_wn_bank
from neurotrack.service import create_app
from neurotrack.trca import MODEL_MAGIC


@pytest.fixture(scope="module")
def client():
    with TestClient(create_app()) as c:
        yield c


def make_session(client, body=None):
    resp = client.post("/sessions", json=body or {})
    assert resp.status_code == 200
    return resp.json()["session_id"]


def train(client, sid):
    resp = client.post(f"/sessions/{sid}/train")
    assert resp.status_code == 200
    return resp.json()


class TestSessionLifecycle:
    def test_create_defaults(self, client):
        resp = client.post("/sessions", json={})
        assert resp.status_code == 200
        body = resp.json()
        assert body["phase"] == "idle"
        assert body["config"]["screen_width_px"] == 800
        assert len(body["session_id"]) == 16

    def test_create_with_subject_params(self, client):
        sid = make_session(client, {"subject": {"seed": 5, "noise_amplitude": 0.3}})
        state = client.get(f"/sessions/{sid}/state").json()
        assert state["phase"] == "idle"
        assert state["trained"] is False

    def test_create_invalid_config(self, client):
        resp = client.post("/sessions", json={"config": {"n_regions": 1}})
        assert resp.status_code == 422
        resp = client.post("/sessions", json={"config": {"bogus_key": 3}})
        assert resp.status_code == 422

    def test_create_invalid_subject(self, client):
        resp = client.post("/sessions", json={"subject": {"bogus": 1}})
        assert resp.status_code == 422

    def test_create_invalid_filter_bank(self, client):
        resp = client.post("/sessions", json={"filter_bank": {"n_subbands": 4}})
        assert resp.status_code == 422

    def test_unknown_session_is_404(self, client):
        assert client.get("/sessions/feedbeef/state").status_code == 404
        assert client.post("/sessions/feedbeef/train").status_code == 404
        assert client.post("/sessions/feedbeef/tasks",
                           json={"task": "fixed"}).status_code == 404
        assert client.get("/sessions/feedbeef/export",
                          params={"what": "log"}).status_code == 404

    def test_task_requires_training(self, client):
        sid = make_session(client)
        resp = client.post(f"/sessions/{sid}/tasks", json={"task": "fixed"})
        assert resp.status_code == 409

    def test_unknown_task_rejected(self, client):
        sid = make_session(client)
        resp = client.post(f"/sessions/{sid}/tasks", json={"task": "teleport"})
        assert resp.status_code == 422

    def test_idle_without_interactive_phase(self, client):
        sid = make_session(client)
        resp = client.post(f"/sessions/{sid}/tasks", json={"task": "idle"})
        assert resp.status_code == 409

    def test_untrained_exports(self, client):
        sid = make_session(client)
        for what in ("metrics", "log", "jitter", "model", "model_meta",
                     "painting", "snake"):
            resp = client.get(f"/sessions/{sid}/export", params={"what": what})
            assert resp.status_code == 409, what
        resp = client.get(f"/sessions/{sid}/export", params={"what": "nonsense"})
        assert resp.status_code == 422

    def test_wn_bank_export_matches_seed(self, client):
        sid = make_session(client)
        resp = client.get(f"/sessions/{sid}/export", params={"what": "wn_bank"})
        assert resp.status_code == 200
        doc = resp.json()
        assert doc["frames"] == 60
        reference = generate_wn_bank(8, 60, 1)
        for values, seq in zip(doc["sequences"], reference):
            np.testing.assert_array_equal(np.asarray(values), seq.values)

    def test_config_export(self, client):
        sid = make_session(client)
        doc = client.get(f"/sessions/{sid}/export", params={"what": "config"}).json()
        assert doc["session"]["n_regions"] == 8
        assert doc["filter_bank"]["n_subbands"] == 5


class TestBatchFlow:
    def test_train_run_export(self, client):
        sid = make_session(client)

        trained = train(client, sid)
        assert trained["n_regression_rows"] == 192
        assert trained["n_templates"] == 8
        assert len(trained["filter_norms"]) == 5
        for norm in trained["filter_norms"]:
            assert norm == pytest.approx(1.0, abs=1e-9)
        assert trained["regression_residual"] >= 0.0

        fixed = client.post(f"/sessions/{sid}/tasks", json={"task": "fixed"}).json()
        assert fixed["task"] == "fixed"
        assert fixed["n_trials"] == 96
        assert 0 <= fixed["n_hits"] <= 96
        assert fixed["phase"] == "idle"

        state = client.get(f"/sessions/{sid}/state").json()
        assert state["trained"] is True
        assert state["n_records"] == 96
        assert state["tasks_run"] == ["fixed"]

        log = client.get(f"/sessions/{sid}/export", params={"what": "log"})
        assert log.status_code == 200
        lines = log.text.splitlines()
        assert len(lines) == 96
        first = json.loads(lines[0])
        assert first["task"] == "fixed"
        assert first["start_px"] == [0.0, 0.0]

        metrics = client.get(f"/sessions/{sid}/export",
                             params={"what": "metrics"}).json()
        assert metrics["n_trials"] == 96
        assert 0.0 <= metrics["success_rate"] <= 1.0

        model = client.get(f"/sessions/{sid}/export", params={"what": "model"})
        assert model.status_code == 200
        assert model.content[:8] == MODEL_MAGIC

        meta = client.get(f"/sessions/{sid}/export",
                          params={"what": "model_meta"}).json()
        assert meta["n_subbands"] == 5
        assert meta["n_channels"] == 21
        assert meta["velocity_weight_kind"] == "corrected"

        random_resp = client.post(f"/sessions/{sid}/tasks",
                                  json={"task": "random"}).json()
        assert random_resp["n_trials"] == 12
        state = client.get(f"/sessions/{sid}/state").json()
        assert state["n_records"] == 108
        assert state["tasks_run"] == ["fixed", "random"]

        jitter_resp = client.post(f"/sessions/{sid}/tasks",
                                  json={"task": "jitter"}).json()
        assert jitter_resp["n_traces"] == 27
        jitter = client.get(f"/sessions/{sid}/export",
                            params={"what": "jitter"}).json()
        assert jitter["n_traces"] == 27
        assert len(jitter["within_raw"]) == 600
        assert len(client.get(f"/sessions/{sid}/export",
                              params={"what": "log"}).text.splitlines()) == 135


class TestPaintingStream:
    def test_gaze_driven_convergence(self, client):
        sid = make_session(client)
        train(client, sid)
        resp = client.post(f"/sessions/{sid}/tasks", json={"task": "painting"})
        assert resp.status_code == 200
        assert resp.json()["phase"] == "painting"

        gaze = (-200.0, 150.0)
        with client.websocket_connect(f"/sessions/{sid}/stream") as ws:
            ws.send_json({"type": "gaze", "x": gaze[0], "y": gaze[1]})
            ws.send_json({"type": "brush", "down": True})
            ack = ws.receive_json()
            assert ack["type"] == "paint_state"
            assert ack["brush_down"] is True

            fresh_steps = 0
            cursor = (0.0, 0.0)
            for expected_index in range(5):
                ws.send_json({"type": "command", "action": "step"})
                frame = ws.receive_json()
                assert frame["type"] == "frame"
                assert frame["step_index"] == expected_index
                assert frame["stale_gaze"] is False
                assert len(frame["rho"]) == 8
                paint = ws.receive_json()
                assert paint["type"] == "paint_state"
                cursor = tuple(frame["cursor"])
                fresh_steps += 1
                if math.hypot(cursor[0] - gaze[0], cursor[1] - gaze[1]) <= 40.0:
                    break
            assert math.hypot(cursor[0] - gaze[0], cursor[1] - gaze[1]) <= 40.0

            # no further gaze samples: the stream goes stale once the last
            # sample is more than two steps old, and the cursor stops moving
            stale_seen = False
            last_cursor = cursor
            for _ in range(4):
                ws.send_json({"type": "command", "action": "step"})
                frame = ws.receive_json()
                ws.receive_json()  # paint state
                if frame["stale_gaze"]:
                    stale_seen = True
                    assert tuple(frame["cursor"]) == last_cursor
                else:
                    fresh_steps += 1
                last_cursor = tuple(frame["cursor"])
            assert stale_seen

            # malformed traffic produces an error frame, not a closed stream
            ws.send_text("{oops")
            err = ws.receive_json()
            assert err["type"] == "error"
            ws.send_json({"kind": "gaze"})
            err = ws.receive_json()
            assert err["type"] == "error"
            ws.send_json({"type": "gaze", "x": "wat", "y": 0})
            err = ws.receive_json()
            assert err["type"] == "error"

            ws.send_json({"type": "command", "action": "warp"})
            err = ws.receive_json()
            assert err["type"] == "error"

            ws.send_json({"type": "command", "action": "stop"})
            done = ws.receive_json()
            assert done == {"type": "trial_event", "event": "stopped"}

        state = client.get(f"/sessions/{sid}/state").json()
        assert state["phase"] == "idle"
        assert state["painting"]["n_strokes"] == 1

        painting = client.get(f"/sessions/{sid}/export",
                              params={"what": "painting"}).json()
        assert len(painting["strokes"]) == 1
        assert len(painting["strokes"][0]) == fresh_steps * 60

        svg = client.get(f"/sessions/{sid}/export", params={"what": "painting_svg"})
        assert svg.status_code == 200
        assert svg.text.startswith("<svg")
        assert "polyline" in svg.text

    def test_step_outside_interactive_phase(self, client):
        sid = make_session(client)
        with client.websocket_connect(f"/sessions/{sid}/stream") as ws:
            ws.send_json({"type": "command", "action": "step"})
            err = ws.receive_json()
            assert err["type"] == "error"

    def test_unknown_session_stream(self, client):
        with client.websocket_connect("/sessions/nope/stream") as ws:
            err = ws.receive_json()
            assert err["type"] == "error"
            assert "no session" in err["message"]


class TestSnakeStream:
    def test_diagonal_holds_and_axis_moves(self, client):
        sid = make_session(client)
        train(client, sid)
        resp = client.post(f"/sessions/{sid}/tasks",
                           json={"task": "snake",
                                 "options": {"grid": 16, "food_seed": 0}})
        assert resp.status_code == 200
        initial = resp.json()["snake"]
        assert initial["snake"][0] == [8, 8]

        with client.websocket_connect(f"/sessions/{sid}/stream") as ws:
            # brush controls only exist while painting
            ws.send_json({"type": "brush", "down": True})
            err = ws.receive_json()
            assert err["type"] == "error"

            # diagonal gaze: confident argmax on region 1, which has no
            # movement mapping, so the snake stays put
            ws.send_json({"type": "gaze", "x": 250.0, "y": 250.0})
            ws.send_json({"type": "command", "action": "step"})
            frame = ws.receive_json()
            assert frame["type"] == "frame"
            snake = ws.receive_json()
            assert snake["type"] == "snake_state"
            assert snake["state"]["snake"] == initial["snake"]
            assert snake["state"]["alive"] is True

            # gaze straight up: axis region 2 moves the head one cell up
            ws.send_json({"type": "gaze", "x": 0.0, "y": 250.0})
            ws.send_json({"type": "command", "action": "step"})
            ws.receive_json()
            snake = ws.receive_json()
            assert snake["state"]["snake"][0] == [8, 9]
            assert snake["state"]["snake"] == [[8, 9], [8, 8], [7, 8]]

        # the game survives the stream: a fresh connection sees the same state
        state = client.get(f"/sessions/{sid}/state").json()
        assert state["phase"] == "snake"
        assert state["snake"]["snake"][0] == [8, 9]
        assert state["step_index"] == 2

        exported = client.get(f"/sessions/{sid}/export",
                              params={"what": "snake"}).json()
        assert exported["snake"][0] == [8, 9]

        with client.websocket_connect(f"/sessions/{sid}/stream") as ws:
            ws.send_json({"type": "command", "action": "stop"})
            done = ws.receive_json()
            assert done["event"] == "stopped"
        assert client.get(f"/sessions/{sid}/state").json()["phase"] == "idle"
