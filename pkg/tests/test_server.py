import json
import time
from pathlib import Path

import numpy as np
import pytest
from websockets.sync.client import connect

from eastsplat.datagen import toy_scene
from eastsplat.features import default_network
from eastsplat.render import rasterize, to_uint8
from eastsplat.scene import TrainingDataset, load_scene
from eastsplat.server import (BinaryFrame, ClientState, CommandProcessor,
                              ControlMessage, decode_message, encode_message,
                              serve)
from eastsplat.server.service import camera_from_pose
from eastsplat.style import TrainConfig, Trainer

from builders import front_camera

FIXTURES = Path(__file__).parent / "fixtures"
BG = (1.0, 1.0, 1.0)


def fixture_scene():
    return load_scene(FIXTURES / "toy_scene.esplat")


def make_trainer(phase2_iters=50, **cfg_kwargs):
    scene = toy_scene(spacing=0.6, scale=-0.7, opacity=0.97)
    cams = [front_camera(width=48, height=48, focal=45.0, distance=2.2)]
    views = [(c, rasterize(scene, c, background=BG).image) for c in cams]
    ds = TrainingDataset(views=views,
                         sfm_points=scene.gaussians.positions.astype(np.float64),
                         sfm_colors=np.full((9, 3), 0.5))
    style = np.full((64, 64, 3), [0.85, 0.3, 0.1], dtype=np.float32)
    cfg = TrainConfig(phase1_iters=0, phase2_iters=phase2_iters, background=BG,
                      **cfg_kwargs)
    return Trainer(ds, scene, default_network(0), style, cfg)


class TestCommandProcessor:
    def test_hello_ack_carries_version_and_scene_summary(self):
        proc = CommandProcessor(scene=fixture_scene())
        replies = proc.process(ControlMessage("hello", {"protocol": 1}),
                               ClientState(1))
        assert len(replies) == 1
        ack = replies[0]
        assert ack.type == "ack"
        assert ack.payload["of"] == "hello"
        assert ack.payload["protocol"] == 1
        assert ack.payload["gaussians"] == 9
        assert "min" in ack.payload["bounds"] and "max" in ack.payload["bounds"]

    def test_version_mismatch_is_an_error(self):
        proc = CommandProcessor(scene=fixture_scene())
        replies = proc.process(ControlMessage("hello", {"protocol": 99}),
                               ClientState(1))
        assert replies[0].type == "error"
        assert replies[0].payload["code"] == "VERSION"

    def test_render_matches_direct_rasterize_call(self):
        scene = fixture_scene()
        proc = CommandProcessor(scene=scene, background=BG)
        client = ClientState(1)
        pose = {"position": [0.1, -0.2, -3.0], "rotation": [1.0, 0.0, 0.0, 0.0],
                "fov_y": 55.0}
        proc.process(ControlMessage("camera_update", pose), client)
        replies = proc.process(
            ControlMessage("render_request",
                           {"width": 256, "height": 256, "encoding": "raw"}), client)
        frame, ack = replies
        assert isinstance(frame, BinaryFrame)
        assert ack.payload["sequence"] == 1

        camera = camera_from_pose(pose["position"], pose["rotation"],
                                  pose["fov_y"], 256, 256)
        direct = to_uint8(rasterize(scene, camera, background=BG).image)
        got = np.frombuffer(frame.payload, dtype=np.uint8).reshape(256, 256, 3)
        assert np.array_equal(got, direct)

    def test_every_command_gets_exactly_one_ack_or_error(self):
        proc = CommandProcessor(scene=fixture_scene())
        client = ClientState(1)
        commands = [
            ControlMessage("hello", {"protocol": 1}),
            ControlMessage("camera_update", {"position": [0, 0, -3],
                                             "rotation": [1, 0, 0, 0], "fov_y": 60}),
            ControlMessage("set_weights", {"w_c": 1.0, "w_s": 2.0}),
            ControlMessage("train_control", {"action": "start"}),
            ControlMessage("render_request", {"width": 8, "height": 8,
                                              "encoding": "raw"}),
        ]
        for cmd in commands:
            replies = proc.process(cmd, client)
            terminal = [r for r in replies
                        if not isinstance(r, BinaryFrame)]
            assert len(terminal) == 1
            assert terminal[0].type in ("ack", "error")

    def test_frame_sequence_strictly_increases_per_client(self):
        proc = CommandProcessor(scene=fixture_scene())
        a, b = ClientState(1), ClientState(2)
        seqs = []
        for client in (a, a, b, a, b):
            replies = proc.process(
                ControlMessage("render_request",
                               {"width": 4, "height": 4, "encoding": "raw"}), client)
            seqs.append((client.client_id, replies[1].payload["sequence"]))
        assert seqs == [(1, 1), (1, 2), (2, 1), (1, 3), (2, 2)]

    def test_preview_resolution_is_capped(self):
        proc = CommandProcessor(scene=fixture_scene())
        replies = proc.process(
            ControlMessage("render_request",
                           {"width": 4096, "height": 4096, "encoding": "raw"}),
            ClientState(1))
        frame = replies[0]
        assert frame.width == 1024 and frame.height == 1024

    def test_train_control_state_machine(self):
        proc = CommandProcessor(scene=None, trainer=make_trainer())
        client = ClientState(1)

        def act(action):
            return proc.process(ControlMessage("train_control",
                                               {"action": action}), client)[0]

        assert act("pause").type == "error"  # not running yet
        started = act("start")
        assert started.type == "ack" and started.payload["state"] == "running"
        paused = act("pause")
        assert paused.payload["state"] == "paused"
        resumed = act("resume")
        assert resumed.payload["state"] == "running"

    def test_snapshot_writes_scene_file(self, tmp_path):
        proc = CommandProcessor(scene=None, trainer=make_trainer(),
                                snapshot_dir=tmp_path)
        reply = proc.process(ControlMessage("train_control",
                                            {"action": "snapshot"}), ClientState(1))[0]
        assert reply.type == "ack"
        load_scene(reply.payload["path"]).validate()

    def test_set_style_binary_upload(self):
        proc = CommandProcessor(scene=None, trainer=make_trainer())
        style = np.full((64, 64, 3), 128, dtype=np.uint8)
        frame = BinaryFrame(0, 64, 64, 0, style.tobytes())
        reply = proc.process(frame, ClientState(1))[0]
        assert reply.type == "ack"
        assert reply.payload["of"] == "set_style"


class TestGoldenTranscript:
    def test_replay_is_byte_identical(self):
        lines = (FIXTURES / "transcripts" / "basic_session.hex").read_text().splitlines()
        proc = CommandProcessor(scene=fixture_scene())
        client = ClientState(1)
        pending = []
        for line in lines:
            if line.startswith("#") or not line.strip():
                continue
            tag, hexdata = line.split(" ", 1)
            data = bytes.fromhex(hexdata)
            if tag == "C":
                assert not pending, "transcript desync: unconsumed server bytes"
                replies = proc.process(decode_message(data), client)
                pending = [encode_message(r) for r in replies]
            else:
                expected = pending.pop(0)
                assert expected == data
        assert not pending


class TestWebSocketService:
    @pytest.fixture
    def view_server(self):
        handle = serve(scene=fixture_scene(), background=BG)
        yield handle
        handle.close()

    def test_handshake_over_socket(self, view_server):
        with connect(view_server.url) as ws:
            ws.send(encode_message(ControlMessage("hello", {"protocol": 1})).decode())
            reply = json.loads(ws.recv(timeout=5))
            assert reply["type"] == "ack"
            assert reply["gaussians"] == 9

    def test_three_strikes_disconnects(self, view_server):
        with connect(view_server.url) as ws:
            for _ in range(3):
                ws.send("this is not json")
                err = json.loads(ws.recv(timeout=5))
                assert err["type"] == "error"
            with pytest.raises(Exception):
                ws.send('{"type":"hello","protocol":1}')
                ws.recv(timeout=5)

    def test_render_over_socket(self, view_server):
        with connect(view_server.url) as ws:
            ws.send(encode_message(ControlMessage(
                "render_request", {"width": 32, "height": 32,
                                   "encoding": "raw"})).decode())
            first = ws.recv(timeout=5)
            frame = decode_message(first)
            assert isinstance(frame, BinaryFrame)
            assert frame.width == 32
            ack = json.loads(ws.recv(timeout=5))
            assert ack["type"] == "ack" and ack["sequence"] == 1

    def test_multiple_concurrent_clients(self, view_server):
        socks = [connect(view_server.url) for _ in range(3)]
        try:
            for ws in socks:
                ws.send(encode_message(ControlMessage("hello", {"protocol": 1})).decode())
            for ws in socks:
                assert json.loads(ws.recv(timeout=5))["type"] == "ack"
        finally:
            for ws in socks:
                ws.close()

    def test_set_weights_identity_visible_in_status_stream(self):
        """With w_s=0 the streamed l_total must equal w_c * l_content."""
        handle = serve(trainer=make_trainer(phase2_iters=40), status_every=1)
        try:
            with connect(handle.url) as ws:
                ws.send(encode_message(ControlMessage(
                    "set_weights", {"w_c": 1.0, "w_s": 0.0})).decode())
                assert json.loads(ws.recv(timeout=5))["type"] == "ack"
                ws.send(encode_message(ControlMessage(
                    "train_control", {"action": "start"})).decode())
                assert json.loads(ws.recv(timeout=5))["type"] == "ack"
                statuses = []
                deadline = time.time() + 30
                while len(statuses) < 5 and time.time() < deadline:
                    msg = json.loads(ws.recv(timeout=10))
                    if msg["type"] == "status":
                        statuses.append(msg)
                assert len(statuses) >= 5
                for s in statuses:
                    assert s["l_total"] == pytest.approx(1.0 * s["l_content"], abs=1e-6)
        finally:
            handle.close()

    def test_pause_stops_iteration_progress(self):
        handle = serve(trainer=make_trainer(phase2_iters=500), status_every=1)
        try:
            with connect(handle.url) as ws:
                ws.send(encode_message(ControlMessage(
                    "train_control", {"action": "start"})).decode())
                json.loads(ws.recv(timeout=5))
                # let some steps happen, then pause
                deadline = time.time() + 20
                seen = None
                while seen is None and time.time() < deadline:
                    msg = json.loads(ws.recv(timeout=10))
                    if msg["type"] == "status":
                        seen = msg["iteration"]
                ws.send(encode_message(ControlMessage(
                    "train_control", {"action": "pause"})).decode())
                # drain until the ack arrives; statuses may be in flight
                while True:
                    msg = json.loads(ws.recv(timeout=10))
                    if msg["type"] == "ack":
                        assert msg["state"] == "paused"
                        break
                time.sleep(0.5)
                ws.send(encode_message(ControlMessage("hello", {"protocol": 1})).decode())
                while True:
                    msg = json.loads(ws.recv(timeout=10))
                    if msg["type"] == "ack" and msg.get("of") == "hello":
                        assert msg["state"] == "paused"
                        break
        finally:
            handle.close()
