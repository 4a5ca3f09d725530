"""Socket control service.

One worker thread owns the scene and the training loop; client commands
arrive through a queue and are applied between optimizer steps, so renders
and parameter changes never observe a half-updated scene. The WebSocket
layer fans status events out to every connected client and answers each
command with exactly one ack or error (render requests additionally carry
their frame).
"""

from __future__ import annotations

import asyncio
import io
import queue
import threading
from concurrent.futures import Future
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import EastsplatError, ProtocolError, TrainingAborted
from ..render import encode_png_bytes, rasterize, to_uint8
from ..scene import Camera, save_scene
from .protocol import (BinaryFrame, ControlMessage, ENCODING_PNG, ENCODING_RAW,
                       PROTOCOL_VERSION, ServerEvent, ack, encode_message,
                       error_event)

PREVIEW_CAP = 1024
STRIKE_LIMIT = 3
DEFAULT_STATUS_EVERY = 10


@dataclass
class ClientState:
    client_id: int
    camera_pose: tuple | None = None  # (position, quaternion, fov_y)
    frame_sequence: int = 0
    strikes: int = 0


@dataclass
class _Command:
    message: object
    client: ClientState
    future: Future = field(default_factory=Future)


def camera_from_pose(position, quaternion, fov_y, width, height) -> Camera:
    from ..scene.colmap import quaternion_to_rotation

    rotation = quaternion_to_rotation(np.asarray(quaternion, dtype=np.float64))
    position = np.asarray(position, dtype=np.float64)
    f = 0.5 * height / np.tan(0.5 * np.radians(float(fov_y)))
    return Camera(fx=f, fy=f, cx=width / 2, cy=height / 2, width=width,
                  height=height, rotation=rotation,
                  translation=-rotation @ position)


class CommandProcessor:
    """Pure command -> events mapping over a scene and optional trainer.

    Single-threaded by contract; the service serializes access through its
    worker. Kept transport-free so protocol transcripts can be replayed
    against it byte for byte.
    """

    def __init__(self, scene, trainer=None, background=(1.0, 1.0, 1.0),
                 snapshot_dir=None):
        self.scene = scene
        self.trainer = trainer
        self.background = np.asarray(background, dtype=np.float64)
        self.snapshot_dir = Path(snapshot_dir) if snapshot_dir else None
        self.running = False
        self.paused = False

    # -- scene access ---------------------------------------------------- #

    def _live_scene(self):
        return self.trainer.scene if self.trainer is not None else self.scene

    def default_camera(self, width: int, height: int) -> Camera:
        from ..datagen import look_at_camera

        scene = self._live_scene()
        center = scene.bounds.center
        distance = max(scene.bounds.diagonal, 1e-3) * 1.6
        eye = center + np.array([0.0, 0.0, distance])
        return look_at_camera(eye, center, width, height,
                              focal=0.9 * max(width, height))

    def state_name(self) -> str:
        if self.trainer is None:
            return "idle"
        if self.trainer.finished:
            return "finished"
        if not self.running:
            return "idle"
        return "paused" if self.paused else "running"

    # -- command handlers -------------------------------------------------- #

    def process(self, message, client: ClientState) -> list:
        try:
            if isinstance(message, BinaryFrame):
                return self._on_set_style(message, client)
            handler = getattr(self, f"_on_{message.type}", None)
            if handler is None:
                return [error_event("UNKNOWN_TYPE", f"unhandled type {message.type!r}")]
            return handler(message, client)
        except ProtocolError as exc:
            return [error_event(exc.code, str(exc))]
        except EastsplatError as exc:
            return [error_event("BAD_STATE", str(exc))]

    def _on_hello(self, message: ControlMessage, client: ClientState) -> list:
        if message.payload["protocol"] != PROTOCOL_VERSION:
            return [error_event(
                "VERSION",
                f"server speaks protocol {PROTOCOL_VERSION}, client asked for "
                f"{message.payload['protocol']}")]
        scene = self._live_scene()
        return [ack("hello", protocol=PROTOCOL_VERSION,
                    gaussians=len(scene.gaussians),
                    bounds={"min": [float(v) for v in scene.bounds.lo],
                            "max": [float(v) for v in scene.bounds.hi]},
                    state=self.state_name())]

    def _on_camera_update(self, message: ControlMessage, client: ClientState) -> list:
        p = message.payload
        client.camera_pose = (p["position"], p["rotation"], p["fov_y"])
        return [ack("camera_update")]

    def _on_set_weights(self, message: ControlMessage, client: ClientState) -> list:
        if self.trainer is None:
            return [error_event("BAD_STATE", "no training session is attached")]
        p = message.payload
        self.trainer.set_weights(p["w_c"], p["w_s"])
        return [ack("set_weights", w_c=p["w_c"], w_s=p["w_s"])]

    def _on_train_control(self, message: ControlMessage, client: ClientState) -> list:
        action = message.payload["action"]
        if self.trainer is None:
            return [error_event("BAD_STATE", "no training session is attached")]
        if action == "start":
            if self.trainer.finished:
                return [error_event("BAD_STATE", "training already finished")]
            self.running = True
            self.paused = False
        elif action == "pause":
            if not self.running:
                return [error_event("BAD_STATE", "training is not running")]
            self.paused = True
        elif action == "resume":
            if not self.running:
                return [error_event("BAD_STATE", "training is not running")]
            self.paused = False
        elif action == "snapshot":
            target = (self.snapshot_dir or Path(".")) / "snapshot.esplat"
            target.parent.mkdir(parents=True, exist_ok=True)
            save_scene(self._live_scene(), target)
            return [ack("train_control", action=action, state=self.state_name(),
                        path=str(target))]
        return [ack("train_control", action=action, state=self.state_name())]

    def _on_render_request(self, message: ControlMessage, client: ClientState) -> list:
        p = message.payload
        width = min(int(p["width"]), PREVIEW_CAP)
        height = min(int(p["height"]), PREVIEW_CAP)
        encoding = p.get("encoding", "png")
        if client.camera_pose is not None:
            position, quaternion, fov_y = client.camera_pose
            camera = camera_from_pose(position, quaternion, fov_y, width, height)
        else:
            camera = self.default_camera(width, height)
        image = rasterize(self._live_scene(), camera,
                          background=self.background).image
        if encoding == "raw":
            payload = to_uint8(image).tobytes()
            enc = ENCODING_RAW
        else:
            payload = encode_png_bytes(image)
            enc = ENCODING_PNG
        client.frame_sequence += 1
        frame = BinaryFrame(client.frame_sequence, width, height, enc, payload)
        return [frame, ack("render_request", sequence=client.frame_sequence,
                           width=width, height=height, encoding=encoding)]

    def _on_set_style(self, frame: BinaryFrame, client: ClientState) -> list:
        if self.trainer is None:
            return [error_event("BAD_STATE", "no training session is attached")]
        if frame.encoding == ENCODING_RAW:
            expected = frame.width * frame.height * 3
            if len(frame.payload) != expected:
                return [error_event("FRAMING", "style payload length mismatch")]
            arr = np.frombuffer(frame.payload, dtype=np.uint8)
            image = arr.reshape(frame.height, frame.width, 3).astype(np.float32) / 255.0
        else:
            from PIL import Image

            try:
                pil = Image.open(io.BytesIO(frame.payload)).convert("RGB")
            except Exception as exc:
                return [error_event("FRAMING", f"undecodable style image: {exc}")]
            image = np.asarray(pil, dtype=np.float32) / 255.0
        self.trainer.set_style_image(image)
        # retarget immediately when stylization is underway so the ack
        # means "the new style is live"
        if self.trainer.current_phase == 2 and self.trainer.phase2_done > 0:
            self.trainer.prepare_phase2()
        return [ack("set_style", width=image.shape[1], height=image.shape[0])]


class TrainingService:
    """Worker thread around a CommandProcessor; drains commands between steps."""

    def __init__(self, processor: CommandProcessor,
                 status_every: int = DEFAULT_STATUS_EVERY, broadcast=None):
        self.processor = processor
        self.status_every = max(1, int(status_every))
        self.broadcast = broadcast or (lambda event: None)
        self._queue: queue.Queue = queue.Queue()
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, name="eastsplat-trainer",
                                        daemon=True)

    def start(self) -> "TrainingService":
        self._thread.start()
        return self

    def submit(self, message, client: ClientState) -> Future:
        if self._stop.is_set():
            f = Future()
            f.set_result([error_event("BAD_STATE", "service is shutting down")])
            return f
        cmd = _Command(message, client)
        self._queue.put(cmd)
        return cmd.future

    def close(self) -> None:
        self._stop.set()
        self._queue.put(None)
        self._thread.join(timeout=30.0)

    def _drain(self) -> None:
        while True:
            try:
                cmd = self._queue.get_nowait()
            except queue.Empty:
                return
            if cmd is None:
                continue
            self._serve_one(cmd)

    def _serve_one(self, cmd: _Command) -> None:
        try:
            cmd.future.set_result(self.processor.process(cmd.message, cmd.client))
        except Exception as exc:  # keep the worker alive no matter what
            cmd.future.set_result([error_event("INTERNAL", str(exc))])

    def _training_active(self) -> bool:
        p = self.processor
        return (p.trainer is not None and p.running and not p.paused
                and not p.trainer.finished)

    def _run(self) -> None:
        while not self._stop.is_set():
            timeout = 0.0 if self._training_active() else 0.1
            try:
                cmd = self._queue.get(timeout=timeout)
                if cmd is not None:
                    self._serve_one(cmd)
            except queue.Empty:
                pass
            self._drain()
            if self._training_active():
                trainer = self.processor.trainer
                try:
                    report = trainer.step()
                except TrainingAborted as exc:
                    self.processor.running = False
                    self.broadcast(error_event("TRAINING_ABORTED", str(exc)))
                    continue
                if (report.iteration % self.status_every == 0
                        or trainer.finished):
                    payload = report.to_dict()
                    self.broadcast(ServerEvent("status", payload))
        # shutdown: drain whatever is still queued so in-flight renders finish
        self._drain()


class ServiceHandle:
    """Running WebSocket service; close() drains and shuts everything down."""

    def __init__(self, service, loop, thread, host, port, clients):
        self.service = service
        self._loop = loop
        self._thread = thread
        self.host = host
        self.port = port
        self._clients = clients

    @property
    def url(self) -> str:
        return f"ws://{self.host}:{self.port}"

    def close(self) -> None:
        self.service.close()
        self._loop.call_soon_threadsafe(self._loop.stop)
        self._thread.join(timeout=10.0)


def serve(scene=None, trainer=None, host="127.0.0.1", port=0,
          status_every: int = DEFAULT_STATUS_EVERY, background=(1.0, 1.0, 1.0),
          snapshot_dir=None) -> ServiceHandle:
    """Start the control service; returns once the socket is bound.

    Pass a bare scene for view-only serving or a Trainer for a steerable
    session. port=0 binds an ephemeral port (see handle.port).
    """
    import websockets.asyncio.server as ws_server

    if scene is None and trainer is None:
        raise ValueError("serve() needs a scene or a trainer")
    processor = CommandProcessor(scene=scene, trainer=trainer,
                                 background=background, snapshot_dir=snapshot_dir)

    loop = asyncio.new_event_loop()
    clients = {}  # websocket -> ClientState
    next_id = [0]

    def broadcast(event: ServerEvent) -> None:
        data = encode_message(event).decode("utf-8")

        def _send_all():
            for ws in list(clients):
                loop.create_task(_safe_send(ws, data))

        loop.call_soon_threadsafe(_send_all)

    async def _safe_send(ws, data) -> None:
        try:
            await ws.send(data)
        except Exception:
            pass

    service = TrainingService(processor, status_every=status_every,
                              broadcast=broadcast).start()

    async def handler(ws) -> None:
        next_id[0] += 1
        state = ClientState(client_id=next_id[0])
        clients[ws] = state
        try:
            async for raw in ws:
                from .protocol import decode_message

                try:
                    message = decode_message(raw)
                except ProtocolError as exc:
                    state.strikes += 1
                    await ws.send(encode_message(
                        error_event(exc.code, str(exc))).decode("utf-8"))
                    if state.strikes >= STRIKE_LIMIT:
                        await ws.close(code=1002, reason="protocol errors")
                        break
                    continue
                if isinstance(message, ServerEvent):
                    state.strikes += 1
                    await ws.send(encode_message(error_event(
                        "BAD_PAYLOAD", "clients may not send server events")).decode("utf-8"))
                    continue
                replies = await asyncio.wrap_future(service.submit(message, state))
                for reply in replies:
                    data = encode_message(reply)
                    if isinstance(reply, BinaryFrame):
                        await ws.send(data)
                    else:
                        await ws.send(data.decode("utf-8"))
        finally:
            clients.pop(ws, None)

    started = threading.Event()
    bound = {}

    async def main() -> None:
        server = await ws_server.serve(handler, host, port)
        bound["port"] = server.sockets[0].getsockname()[1]
        started.set()

    def run_loop() -> None:
        asyncio.set_event_loop(loop)
        loop.run_until_complete(main())
        loop.run_forever()
        # loop stopped: cancel tasks and close
        for task in asyncio.all_tasks(loop):
            task.cancel()
        loop.run_until_complete(asyncio.sleep(0))
        loop.close()

    thread = threading.Thread(target=run_loop, name="eastsplat-server", daemon=True)
    thread.start()
    if not started.wait(timeout=10.0):
        raise RuntimeError(f"server failed to bind {host}:{port}")
    return ServiceHandle(service, loop, thread, host, bound["port"], clients)
