"""Command-line entry point: train / render / eval / serve / convert-weights
plus demo-data and bench utilities.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click
import numpy as np
from PIL import Image

from .errors import EastsplatError

DEFAULT_PORT = 8765


def _load_image(path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("RGB"), dtype=np.float32) / 255.0


def _load_net(weights_path):
    from .features import default_network, load_weights

    if weights_path is None:
        click.echo("no --weights given; using the built-in seeded extractor", err=True)
        return default_network(seed=0)
    return load_weights(weights_path)


def _config_options(fn):
    """One CLI flag per TrainConfig field."""
    options = [
        click.option("--phase1-iters", type=int, default=None, help="Reconstruction iterations."),
        click.option("--phase2-iters", type=int, default=None, help="Stylization iterations."),
        click.option("--lr-position", type=float, default=None, help="Position learning rate."),
        click.option("--lr-log-scale", type=float, default=None, help="Log-scale learning rate."),
        click.option("--lr-rotation", type=float, default=None, help="Rotation learning rate."),
        click.option("--lr-opacity", type=float, default=None, help="Opacity-logit learning rate."),
        click.option("--lr-sh", type=float, default=None, help="Color-coefficient learning rate."),
        click.option("--w-content", type=float, default=None, help="Content loss weight."),
        click.option("--w-style", type=float, default=None, help="Style loss weight."),
        click.option("--prune-every", type=int, default=None, help="Prune cadence (phase-1 iterations)."),
        click.option("--prune-opacity-below", type=float, default=None, help="Opacity threshold for pruning."),
        click.option("--split-every", type=int, default=None, help="Split cadence; 0 disables."),
        click.option("--split-scale-threshold", type=float, default=None,
                     help="Split Gaussians larger than this fraction of the scene diagonal."),
        click.option("--snapshot-every", type=int, default=None, help="Scene snapshot cadence; 0 disables."),
        click.option("--seed", type=int, default=None, help="Random seed."),
        click.option("--image-scale", type=float, default=None, help="Training-resolution factor in (0,1]."),
        click.option("--background", type=float, nargs=3, default=None, help="Background RGB."),
        click.option("--content-target-mode", type=click.Choice(["adain", "original"]),
                     default=None, help="Phase-2 content targets."),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("-v", "--verbose", count=True, help="Increase logging verbosity.")
@click.pass_context
def cli(ctx, verbose):
    """Stylized Gaussian-splatting scenes: reconstruct, stylize, inspect, serve."""
    ctx.ensure_object(dict)
    ctx.obj["verbose"] = verbose


@cli.command("train")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False),
              help="Dataset directory (COLMAP text convention + images/).")
@click.option("--style", "style_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Style image.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
              help="Output directory.")
@click.option("--weights", type=click.Path(exists=True, dir_okay=False), default=None,
              help="EASTNET/1 weights container.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="TOML config; flags override it.")
@_config_options
@click.pass_context
def train_cmd(ctx, data_dir, style_path, out_dir, weights, config_path, **flags):
    """Reconstruct a scene from a capture, then stylize it."""
    from .metrics import evaluate
    from .scene import init_scene, load_dataset, save_scene
    from .style import load_train_config, train

    config = load_train_config(config_path, overrides=flags)
    dataset = load_dataset(data_dir)
    scene = init_scene(dataset)
    net = _load_net(weights)
    style_image = _load_image(style_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    verbose = ctx.obj["verbose"]
    total = config.phase1_iters + config.phase2_iters

    def progress(report):
        if verbose and report.iteration % 50 == 0:
            click.echo(f"[{report.iteration}/{total}] phase {report.phase} "
                       f"l_total={report.l_total:.5f}", err=True)

    scene, reports = train(dataset, scene, net, style_image, config,
                           snapshot_dir=out / "snapshots", report_callback=progress)
    save_scene(scene, out / "scene.esplat")
    with open(out / "losses.jsonl", "w") as fh:
        for report in reports:
            fh.write(json.dumps(report.to_dict(), sort_keys=True) + "\n")

    report = evaluate(scene, dataset, net, background=config.background)
    (out / "metrics.json").write_text(report.to_json() + "\n")
    (out / "metrics.txt").write_text(report.to_table() + "\n")
    click.echo(report.to_table())
    click.echo(f"scene written to {out / 'scene.esplat'}")


def _slerp(q0, q1, t):
    q0 = q0 / np.linalg.norm(q0)
    q1 = q1 / np.linalg.norm(q1)
    dot = float(np.dot(q0, q1))
    if dot < 0.0:
        q1, dot = -q1, -dot
    if dot > 0.9995:
        q = q0 + t * (q1 - q0)
        return q / np.linalg.norm(q)
    theta = np.arccos(np.clip(dot, -1.0, 1.0))
    return (np.sin((1 - t) * theta) * q0 + np.sin(t * theta) * q1) / np.sin(theta)


def _camera_path_poses(path_file, frames):
    keyframes = json.loads(Path(path_file).read_text())
    if not isinstance(keyframes, list) or not keyframes:
        raise EastsplatError("camera path must be a non-empty JSON list of poses")
    poses = []
    for kf in keyframes:
        poses.append((np.asarray(kf["position"], dtype=np.float64),
                      np.asarray(kf["rotation"], dtype=np.float64),
                      float(kf.get("fov_y", 60.0))))
    if frames is None or frames == len(poses) or len(poses) == 1:
        return poses if frames is None else poses * max(1, frames // len(poses))
    out = []
    span = len(poses) - 1
    for i in range(frames):
        t = i * span / max(frames - 1, 1)
        k = min(int(t), span - 1)
        local = t - k
        p = (1 - local) * poses[k][0] + local * poses[k + 1][0]
        q = _slerp(poses[k][1], poses[k + 1][1], local)
        fov = (1 - local) * poses[k][2] + local * poses[k + 1][2]
        out.append((p, q, fov))
    return out


@cli.command("render")
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Scene file.")
@click.option("--camera-path", "camera_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="JSON list of pose keyframes {position, rotation, fov_y}.")
@click.option("--out-dir", required=True, type=click.Path(file_okay=False),
              help="Directory for rendered PNGs.")
@click.option("--width", type=int, default=512, help="Output width in pixels.")
@click.option("--height", type=int, default=512, help="Output height in pixels.")
@click.option("--frames", type=int, default=None,
              help="Total frames; keyframes are slerp-interpolated. Default: one per keyframe.")
@click.option("--background", type=float, nargs=3, default=(1.0, 1.0, 1.0),
              help="Background RGB.")
@click.option("--npy", "also_npy", is_flag=True, help="Also write float32 .npy arrays.")
def render_cmd(scene_path, camera_path, out_dir, width, height, frames,
               background, also_npy):
    """Render a saved scene along a camera path."""
    from .render import rasterize, save_npy, save_png
    from .scene import load_scene
    from .server.service import camera_from_pose

    scene = load_scene(scene_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    poses = _camera_path_poses(camera_path, frames)
    for i, (position, quaternion, fov_y) in enumerate(poses):
        camera = camera_from_pose(position, quaternion, fov_y, width, height)
        image = rasterize(scene, camera, background=background).image
        save_png(image, out / f"frame_{i:04d}.png")
        if also_npy:
            save_npy(image, out / f"frame_{i:04d}.npy")
    click.echo(f"wrote {len(poses)} frame(s) to {out}")


@cli.command("eval")
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--weights", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Write the JSON report here.")
@click.option("--background", type=float, nargs=3, default=(1.0, 1.0, 1.0))
def eval_cmd(scene_path, data_dir, weights, out_path, background):
    """Score a scene's renders against a dataset's reference views."""
    from .metrics import evaluate
    from .scene import load_dataset, load_scene

    scene = load_scene(scene_path)
    dataset = load_dataset(data_dir)
    net = _load_net(weights)
    report = evaluate(scene, dataset, net, background=background)
    click.echo(report.to_table())
    if out_path:
        Path(out_path).write_text(report.to_json() + "\n")
        click.echo(f"report written to {out_path}")


@cli.command("serve")
@click.option("--scene", "scene_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Serve a saved scene (view only).")
@click.option("--data", "data_dir", type=click.Path(exists=True, file_okay=False),
              default=None, help="Dataset for a live training session.")
@click.option("--style", "style_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Style image for the training session.")
@click.option("--weights", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=None,
              help=f"Default: $EASTSPLAT_PORT or {DEFAULT_PORT}.")
@click.option("--status-every", type=int, default=10, show_default=True,
              help="Status broadcast cadence in iterations.")
@click.option("--snapshot-dir", type=click.Path(file_okay=False), default=None)
@_config_options
def serve_cmd(scene_path, data_dir, style_path, weights, config_path, host,
              port, status_every, snapshot_dir, **flags):
    """Run the WebSocket control service."""
    from .server import serve
    from .style import load_train_config

    if port is None:
        port = int(os.environ.get("EASTSPLAT_PORT", str(DEFAULT_PORT)))

    scene = trainer = None
    config = load_train_config(config_path, overrides=flags)
    if data_dir is not None:
        from .features import default_network
        from .scene import init_scene, load_dataset
        from .style import Trainer

        dataset = load_dataset(data_dir)
        scene0 = init_scene(dataset)
        net = _load_net(weights)
        style_image = _load_image(style_path) if style_path else None
        trainer = Trainer(dataset, scene0, net, style_image, config,
                          snapshot_dir=snapshot_dir)
    elif scene_path is not None:
        from .scene import load_scene

        scene = load_scene(scene_path)
    else:
        raise click.UsageError("serve needs --scene or --data")

    handle = serve(scene=scene, trainer=trainer, host=host, port=port,
                   status_every=status_every, background=config.background,
                   snapshot_dir=snapshot_dir)
    click.echo(f"serving on {handle.url} (Ctrl-C to stop)")
    try:
        while True:
            import time

            time.sleep(3600)
    except KeyboardInterrupt:
        click.echo("shutting down")
    finally:
        handle.close()


@cli.command("convert-weights")
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False),
              help="VGG-16 checkpoint (.pth state dict or .npz with features.N.* keys).")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False),
              help="EASTNET/1 container to write.")
def convert_weights_cmd(checkpoint, out_path):
    """Convert published VGG-16 weights into the EASTNET/1 container."""
    from .features import convert_checkpoint

    net = convert_checkpoint(checkpoint, out_path)
    convs = sum(1 for l in net.layers if l.kind == "conv")
    click.echo(f"wrote {out_path}: {convs} conv layers, taps {', '.join(net.tap_points)}")


@cli.command("demo-data")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--views", type=int, default=5, show_default=True)
@click.option("--width", type=int, default=128, show_default=True)
@click.option("--height", type=int, default=96, show_default=True)
@click.option("--gaussians", type=int, default=600, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def demo_data_cmd(out_dir, views, width, height, gaussians, seed):
    """Generate a synthetic forward-facing capture for smoke runs."""
    from .datagen import make_demo_dataset

    root, _ = make_demo_dataset(out_dir, seed=seed, views=views, width=width,
                                height=height, gaussians=gaussians)
    click.echo(f"dataset written to {root}")


@cli.command("bench")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False),
              help="JSON report path.")
@click.option("--sizes", default="10000,50000,100000", show_default=True,
              help="Comma-separated Gaussian counts.")
@click.option("--resolution", type=int, default=512, show_default=True)
@click.option("--frames", type=int, default=3, show_default=True,
              help="Timed frames per size.")
@click.option("--backends", default=None,
              help="Comma-separated kernel backends (default: all available).")
@click.option("--baseline", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Baseline JSON to compare against (+/-20%).")
def bench_cmd(out_path, sizes, resolution, frames, backends, baseline):
    """Measure rasterizer throughput and write a JSON report."""
    from .bench import compare_to_baseline, run_benchmark, write_report

    size_list = tuple(int(s) for s in sizes.split(","))
    backend_list = backends.split(",") if backends else None
    result = run_benchmark(sizes=size_list, resolution=resolution,
                           frames=frames, backends=backend_list)
    write_report(result, out_path)
    for backend, per_size in result["backends"].items():
        for size, stats in per_size.items():
            click.echo(f"{backend:>7} {size:>7}: {stats['fps']:8.2f} fps")
    if baseline:
        base = json.loads(Path(baseline).read_text())
        for backend, size, cur, ref, ratio, ok in compare_to_baseline(result, base):
            status = "ok" if ok else "REGRESSION" if ratio < 1 else "faster"
            click.echo(f"vs baseline {backend}/{size}: {cur:.2f} fps "
                       f"({ratio:4.2f}x of {ref:.2f}) {status}")
    click.echo(f"report written to {out_path}")


def run(argv=None) -> int:
    """Programmatic entry point with the documented exit-code contract."""
    try:
        cli.main(args=argv, standalone_mode=False, obj={})
        return 0
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        exc.show(file=sys.stderr)
        return 1
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return 1
    except (EastsplatError, OSError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except KeyboardInterrupt:
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
