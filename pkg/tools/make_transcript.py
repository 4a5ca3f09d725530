#!/usr/bin/env python3
"""Capture the golden protocol transcript.

Replays a fixed command sequence against a CommandProcessor over the
committed toy scene and records every byte exchanged, as hex dumps:

    C <hex of client frame>
    S <hex of expected server frame>

tests/test_server.py replays the C lines and requires byte-identical
responses. Regenerate (and re-review the diff) only after a deliberate
protocol change:

    python3 tools/make_transcript.py
"""

import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from eastsplat.datagen import toy_scene  # noqa: E402
from eastsplat.scene import load_scene, save_scene  # noqa: E402
from eastsplat.server import (ClientState, CommandProcessor, ControlMessage,  # noqa: E402
                              decode_message, encode_message)

COMMANDS = [
    ControlMessage("hello", {"protocol": 1}),
    ControlMessage("camera_update", {"position": [0.0, 0.0, -3.0],
                                     "rotation": [1.0, 0.0, 0.0, 0.0],
                                     "fov_y": 60.0}),
    ControlMessage("render_request", {"width": 8, "height": 8, "encoding": "raw"}),
    ControlMessage("set_weights", {"w_c": 1.0, "w_s": 0.0}),
    ControlMessage("train_control", {"action": "pause"}),
    ControlMessage("render_request", {"width": 4, "height": 4, "encoding": "raw"}),
]


def main():
    fixtures = ROOT / "tests" / "fixtures"
    fixtures.mkdir(parents=True, exist_ok=True)
    scene_path = fixtures / "toy_scene.esplat"
    if not scene_path.exists():
        save_scene(toy_scene(), scene_path)
        print(f"wrote {scene_path}")
    scene = load_scene(scene_path)

    processor = CommandProcessor(scene=scene)
    client = ClientState(client_id=1)
    lines = ["# golden transcript: protocol v1, toy scene, view-only session"]
    for command in COMMANDS:
        raw = encode_message(command)
        assert decode_message(raw).type == command.type
        lines.append("C " + raw.hex())
        for reply in processor.process(command, client):
            lines.append("S " + encode_message(reply).hex())

    out = fixtures / "transcripts"
    out.mkdir(parents=True, exist_ok=True)
    (out / "basic_session.hex").write_text("\n".join(lines) + "\n")
    print(f"wrote {out / 'basic_session.hex'} ({len(lines)} lines)")


if __name__ == "__main__":
    main()
