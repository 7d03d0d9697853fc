import io
import json
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from subjecttune.adapters import load_checkpoint
from subjecttune.imaging import save_png, to_numpy_image
from subjecttune.service import ServiceSettings, create_app

from conftest import random_image

TERMINAL = ("stopped_by_user", "converged", "failed", "accepted")


@pytest.fixture
def service(tmp_path):
    settings = ServiceSettings(session_root=tmp_path / "sessions", workers=2)
    app = create_app(settings)
    with TestClient(app) as client:
        yield client, settings


@pytest.fixture
def subject_png(tmp_path):
    path = tmp_path / "subject.png"
    save_png(path, random_image((16, 16), seed=33))
    return path


def toy_request(subject_png, **overrides):
    body = {
        "task": "generate",
        "backbone": "toy",
        "subject_path": str(subject_png),
        "class_label": "dog",
        "target_prompts": ["a dog in paris"],
        "config": {
            "seed": 3,
            "learning_rate": 0.02,
            "rank": 2,
            "max_iterations": 10,
            "early_stop": {"min_improvement_pct": 3.0, "window": 10},
        },
    }
    body.update(overrides)
    return body


def wait_terminal(client, session_id, timeout=30.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        payload = client.get(f"/sessions/{session_id}").json()
        if payload["status"] in TERMINAL:
            return payload
        time.sleep(0.03)
    raise AssertionError("session did not finish in time")


def parse_sse(text):
    events = []
    for block in text.strip().split("\n\n"):
        lines = block.strip().split("\n")
        event = {"event": None, "data": None}
        for line in lines:
            if line.startswith("event: "):
                event["event"] = line[len("event: ") :]
            elif line.startswith("data: "):
                event["data"] = json.loads(line[len("data: ") :])
        events.append(event)
    return events


class TestCreate:
    def test_valid_toy_job_accepted(self, service, subject_png):
        client, _ = service
        response = client.post("/sessions", json=toy_request(subject_png))
        assert response.status_code == 201
        body = response.json()
        assert body["status"] in ("pending", "running")
        assert body["session_id"]
        wait_terminal(client, body["session_id"])

    def test_two_creates_distinct_ids(self, service, subject_png):
        client, _ = service
        a = client.post("/sessions", json=toy_request(subject_png)).json()["session_id"]
        b = client.post("/sessions", json=toy_request(subject_png)).json()["session_id"]
        assert a != b
        wait_terminal(client, a)
        wait_terminal(client, b)

    def test_malformed_weights_rejected(self, service, subject_png):
        client, _ = service
        body = toy_request(subject_png)
        body["config"]["loss_weights"] = {"dino": "not-a-number", "ir": 1, "background": 10}
        response = client.post("/sessions", json=body)
        assert response.status_code == 422
        assert "dino" in response.json()["detail"]

    def test_missing_subject_rejected(self, service, tmp_path):
        client, _ = service
        response = client.post(
            "/sessions", json=toy_request(tmp_path / "nope.png")
        )
        assert response.status_code == 422

    def test_unknown_session_404(self, service):
        client, _ = service
        assert client.get("/sessions/doesnotexist").status_code == 404


class TestStream:
    def test_ten_step_session_streams_ten_frames_then_end(self, service, subject_png):
        client, _ = service
        session_id = client.post("/sessions", json=toy_request(subject_png)).json()["session_id"]
        with client.stream("GET", f"/sessions/{session_id}/frames") as response:
            text = "".join(chunk for chunk in response.iter_text())
        events = parse_sse(text)
        frames = [e for e in events if e["event"] == "frame"]
        ends = [e for e in events if e["event"] == "end"]
        assert len(frames) == 10
        assert [f["data"]["index"] for f in frames] == list(range(10))
        assert len(ends) == 1
        assert ends[0]["data"]["status"] == "converged"
        assert ends[0]["data"]["decision"]["reason"] == "max_iterations"

    def test_subscribe_after_completion_replays_everything(self, service, subject_png):
        client, _ = service
        session_id = client.post("/sessions", json=toy_request(subject_png)).json()["session_id"]
        wait_terminal(client, session_id)
        with client.stream("GET", f"/sessions/{session_id}/frames") as response:
            events = parse_sse("".join(response.iter_text()))
        frames = [e for e in events if e["event"] == "frame"]
        assert [f["data"]["index"] for f in frames] == list(range(10))
        assert events[-1]["event"] == "end"

    def test_stream_unknown_session_404(self, service):
        client, _ = service
        assert client.get("/sessions/missing/frames").status_code == 404

    def test_frame_images_served_as_png(self, service, subject_png):
        client, _ = service
        session_id = client.post("/sessions", json=toy_request(subject_png)).json()["session_id"]
        wait_terminal(client, session_id)
        image = client.get(f"/sessions/{session_id}/frames/0/image")
        thumb = client.get(f"/sessions/{session_id}/frames/0/thumb")
        assert image.status_code == 200
        assert image.headers["content-type"] == "image/png"
        assert thumb.status_code == 200
        assert client.get(f"/sessions/{session_id}/frames/999/image").status_code == 404


class TestStop:
    def test_stop_overruns_at_most_one_frame(self, service, subject_png):
        client, _ = service
        body = toy_request(subject_png)
        body["config"]["max_iterations"] = 30
        body["config"]["early_stop"] = {"min_improvement_pct": 3.0, "window": 30}
        session_id = client.post("/sessions", json=body).json()["session_id"]

        # let a few frames land first
        deadline = time.time() + 20
        while time.time() < deadline:
            if len(client.get(f"/sessions/{session_id}").json()["frames"]) >= 3:
                break
            time.sleep(0.02)

        ack = client.post(f"/sessions/{session_id}/stop").json()
        assert ack["acknowledged"]
        frames_at_ack = len(client.get(f"/sessions/{session_id}").json()["frames"])
        final = wait_terminal(client, session_id)
        assert final["status"] == "stopped_by_user"
        total = len(final["frames"])
        assert total - frames_at_ack <= 1
        assert final["decision"]["reason"] == "user_stop"
        assert final["decision"]["stop_index"] in (frames_at_ack - 1, frames_at_ack)
        assert final["decision"]["stop_index"] == total - 1

    def test_stop_on_terminal_session_is_idempotent(self, service, subject_png):
        client, _ = service
        session_id = client.post("/sessions", json=toy_request(subject_png)).json()["session_id"]
        wait_terminal(client, session_id)
        first = client.post(f"/sessions/{session_id}/stop").json()
        second = client.post(f"/sessions/{session_id}/stop").json()
        assert first["already_terminal"] and second["already_terminal"]
        assert first["decision"] == second["decision"]

    def test_stop_unknown_session_404(self, service):
        client, _ = service
        assert client.post("/sessions/missing/stop").status_code == 404


class TestAdapterExport:
    def test_default_export_is_best_frame(self, service, subject_png, tmp_path):
        client, _ = service
        session_id = client.post("/sessions", json=toy_request(subject_png)).json()["session_id"]
        final = wait_terminal(client, session_id)
        response = client.get(f"/sessions/{session_id}/adapter")
        assert response.status_code == 200
        path = tmp_path / "downloaded.npz"
        path.write_bytes(response.content)
        _adapters, metadata = load_checkpoint(path)
        assert metadata["step_index"] == final["best_index"]
        assert metadata["backbone_id"] == "toy"

    def test_frame_zero_export_has_zero_up_projections(self, service, subject_png, tmp_path):
        client, _ = service
        session_id = client.post("/sessions", json=toy_request(subject_png)).json()["session_id"]
        wait_terminal(client, session_id)
        response = client.get(f"/sessions/{session_id}/adapter", params={"frame_index": 0})
        assert response.status_code == 200
        path = tmp_path / "frame0.npz"
        path.write_bytes(response.content)
        adapters, metadata = load_checkpoint(path)
        assert metadata["step_index"] == 0
        for _name, pair in adapters.iter_named():
            assert np.array_equal(pair.up.numpy(), np.zeros_like(pair.up.numpy()))

    def test_out_of_range_export_rejected(self, service, subject_png):
        client, _ = service
        session_id = client.post("/sessions", json=toy_request(subject_png)).json()["session_id"]
        wait_terminal(client, session_id)
        response = client.get(f"/sessions/{session_id}/adapter", params={"frame_index": 99})
        assert response.status_code == 400

    def test_accept_requires_terminal_then_transitions(self, service, subject_png):
        client, _ = service
        body = toy_request(subject_png)
        body["config"]["max_iterations"] = 40
        body["config"]["early_stop"] = {"min_improvement_pct": 3.0, "window": 40}
        session_id = client.post("/sessions", json=body).json()["session_id"]
        deadline = time.time() + 20
        while time.time() < deadline:
            if len(client.get(f"/sessions/{session_id}").json()["frames"]) >= 3:
                break
            time.sleep(0.02)
        running_attempt = client.post(f"/sessions/{session_id}/accept", json={"frame_index": 0})
        # the run may already have finished on a fast machine; only assert when mid-run
        if running_attempt.status_code != 409:
            assert running_attempt.status_code == 200
        client.post(f"/sessions/{session_id}/stop")
        wait_terminal(client, session_id)
        response = client.post(f"/sessions/{session_id}/accept", json={"frame_index": 2})
        assert response.status_code == 200
        accepted = response.json()
        assert accepted["status"] == "accepted"
        assert accepted["frame_index"] == 2
        assert client.get(f"/sessions/{session_id}").json()["status"] == "accepted"


class TestPersistence:
    def test_restart_lists_and_replays_sessions(self, service, subject_png, tmp_path):
        client, settings = service
        session_id = client.post("/sessions", json=toy_request(subject_png)).json()["session_id"]
        final = wait_terminal(client, session_id)
        session_dir = settings.session_root / session_id
        losses_before = (session_dir / "losses.jsonl").read_bytes()
        frame0_before = (session_dir / "frame_0000.png").read_bytes()

        restarted = create_app(ServiceSettings(session_root=settings.session_root))
        with TestClient(restarted) as client2:
            listed = client2.get("/sessions").json()
            assert any(s["session_id"] == session_id for s in listed)
            replay = client2.get(f"/sessions/{session_id}").json()
            assert replay["status"] == final["status"]
            assert len(replay["frames"]) == len(final["frames"])
            with client2.stream("GET", f"/sessions/{session_id}/frames") as response:
                events = parse_sse("".join(response.iter_text()))
            frames = [e for e in events if e["event"] == "frame"]
            assert [f["data"]["index"] for f in frames] == list(range(10))
            image = client2.get(f"/sessions/{session_id}/frames/0/image")
            assert image.content == frame0_before

        assert (session_dir / "losses.jsonl").read_bytes() == losses_before

    def test_restarted_service_serves_best_checkpoint(self, service, subject_png, tmp_path):
        client, settings = service
        session_id = client.post("/sessions", json=toy_request(subject_png)).json()["session_id"]
        wait_terminal(client, session_id)
        direct = client.get(f"/sessions/{session_id}/adapter").content

        restarted = create_app(ServiceSettings(session_root=settings.session_root))
        with TestClient(restarted) as client2:
            replayed = client2.get(f"/sessions/{session_id}/adapter")
            assert replayed.status_code == 200
            assert replayed.content == direct


class TestUiMount:
    def test_ui_served_when_directory_present(self, tmp_path):
        ui_dir = tmp_path / "ui"
        ui_dir.mkdir()
        (ui_dir / "index.html").write_text("<html><body>steering</body></html>")
        settings = ServiceSettings(session_root=tmp_path / "sessions", ui_dir=ui_dir)
        with TestClient(create_app(settings)) as client:
            response = client.get("/ui/")
            assert response.status_code == 200
            assert "steering" in response.text

    def test_no_ui_mount_without_directory(self, tmp_path):
        settings = ServiceSettings(session_root=tmp_path / "sessions", ui_dir=None)
        with TestClient(create_app(settings)) as client:
            assert client.get("/ui/").status_code == 404
