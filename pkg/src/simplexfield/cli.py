"""Command-line pipelines: generate, transform, hybridize, render,
eval-align, check-grad, serve."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from .alignment import CentroidCoordinateFeatures, multiview_alignment
from .anchors import AnchorFormatError, load_anchors, render_hybrid
from .checkpoint import CheckpointError, load_checkpoint
from .config import ConfigError, EvalRenderConfig, load_config
from .field import LatentCode
from .fixtures import orbit_camera, ring_cameras
from .gradcheck import run_gradient_check
from .images import write_view
from .render import LightSample, RayMarchConfig
from .session import eval_render, run_generate, run_transform, sweep_codes


def _fail(message: str):
    raise click.ClickException(message)


def _load_checkpoint(path):
    try:
        return load_checkpoint(path)
    except CheckpointError as exc:
        _fail(str(exc))


def _load_config(path):
    try:
        return load_config(path)
    except ConfigError as exc:
        _fail(str(exc))
    except FileNotFoundError:
        _fail(f"config file not found: {path}")


def _progress_echo(every: int):
    def progress(record):
        if record.get("skipped"):
            click.echo(f"[{record['iteration']:>6}] skipped: {record['reason']}")
        elif record["iteration"] % every == 0:
            terms = " ".join(f"{k}={v:.4g}" for k, v in record.get("terms", {}).items())
            click.echo(f"[{record['iteration']:>6}] total={record.get('total', 0.0):.4g} {terms}")

    return progress


def _parse_floats(text: str, name: str):
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        _fail(f"--{name} expects comma-separated numbers, got {text!r}")


@click.group()
def main():
    """Latent-simplex neural field engine."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--log-every", default=50, show_default=True)
def generate(config_path, log_every):
    """Jointly generate the configured prompt set into one field."""
    cfg = _load_config(config_path)
    path = run_generate(cfg, progress=_progress_echo(log_every))
    click.echo(f"checkpoint written: {path}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--log-every", default=50, show_default=True)
def transform(config_path, log_every):
    """Fit the source model photometrically, then run anchored generation."""
    cfg = _load_config(config_path)
    try:
        path = run_transform(cfg, progress=_progress_echo(log_every))
    except ValueError as exc:
        _fail(str(exc))
    click.echo(f"checkpoint written: {path}")


def _camera_from_options(azimuth_deg, elevation_deg, radius, width, height):
    return orbit_camera(
        np.deg2rad(azimuth_deg), np.deg2rad(elevation_deg), radius, width=width, height=height
    )


@main.command()
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--u", "u_text", default=None, help="fixed latent code, e.g. '1,0'")
@click.option("--sweep", default=None, help="transition sweep range, e.g. '0..1'")
@click.option("--pair", default="0,1", show_default=True, help="vertex pair for --sweep")
@click.option("--frames", default=9, show_default=True, help="frame count for --sweep")
@click.option("--turntable", default=0, help="render N azimuth steps instead of one view")
@click.option("--azimuth", default=45.0, show_default=True)
@click.option("--elevation", default=15.0, show_default=True)
@click.option("--radius", default=1.8, show_default=True)
@click.option("--width", default=256, show_default=True)
@click.option("--height", default=256, show_default=True)
@click.option("--samples", default=96, show_default=True)
@click.option("--maps", default="rgb", show_default=True, help="comma list: rgb,normal,depth,opacity")
def render(checkpoint_path, out_dir, u_text, sweep, pair, frames, turntable,
           azimuth, elevation, radius, width, height, samples, maps):
    """Render a checkpoint: fixed latent, turntable, or a transition sweep."""
    ckpt = _load_checkpoint(checkpoint_path)
    n = ckpt.params.n_objects
    maps = tuple(m.strip() for m in maps.split(",") if m.strip())
    evaluation = EvalRenderConfig(width=width, height=height, n_samples=samples)

    if sweep is not None:
        try:
            lo, hi = (float(v) for v in sweep.split(".."))
        except ValueError:
            _fail(f"--sweep expects 'a..b', got {sweep!r}")
        i, j = (int(v) for v in _parse_floats(pair, "pair"))
        if not (0 <= i < n and 0 <= j < n and i != j):
            _fail(f"--pair {pair!r} is not a valid vertex pair for {n} prompts")
        ts = np.linspace(lo, hi, frames)
        latents = sweep_codes((i, j), ts, n)
        tags = [f"sweep_{k:03d}" for k in range(frames)]
    elif u_text is not None:
        code = _parse_floats(u_text, "u")
        if len(code) != n:
            _fail(f"--u has {len(code)} components, checkpoint holds {n} prompts")
        try:
            latents = [LatentCode(code)]
        except ValueError as exc:
            _fail(f"--u: {exc}")
        tags = ["fixed"]
    else:
        latents = [LatentCode.vertex(0, n)]
        tags = ["vertex0"]

    if turntable > 0:
        cameras = ring_cameras(
            turntable, elevation=np.deg2rad(elevation), radius=radius, width=width, height=height
        )
    else:
        cameras = [_camera_from_options(azimuth, elevation, radius, width, height)]

    out_dir = Path(out_dir)
    written = []
    for tag, latent in zip(tags, latents):
        for ci, camera in enumerate(cameras):
            view = eval_render(ckpt.params, camera, latent, maps=maps, evaluation=evaluation)
            stem = f"{tag}_cam{ci:03d}" if len(cameras) > 1 else tag
            written.extend(write_view(out_dir, stem, view, maps=maps))
    click.echo(f"wrote {len(written)} files to {out_dir}")


@main.command()
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path(exists=True))
@click.option("--anchors", "anchors_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--smoothing", default=0.0, show_default=True)
@click.option("--turntable", default=0)
@click.option("--azimuth", default=45.0)
@click.option("--elevation", default=15.0)
@click.option("--radius", default=1.8)
@click.option("--width", default=256)
@click.option("--height", default=256)
@click.option("--samples", default=96)
@click.option("--maps", default="rgb")
def hybridize(checkpoint_path, anchors_path, out_dir, smoothing, turntable,
              azimuth, elevation, radius, width, height, samples, maps):
    """Render an anchor file's spatially varying latent field."""
    ckpt = _load_checkpoint(checkpoint_path)
    try:
        anchor_set = load_anchors(anchors_path, smoothing=smoothing)
    except AnchorFormatError as exc:
        _fail(f"anchor file {anchors_path}: {exc}")
    maps = tuple(m.strip() for m in maps.split(",") if m.strip())
    march = RayMarchConfig(n_samples=samples, stratified_jitter=False)
    if turntable > 0:
        cameras = ring_cameras(
            turntable, elevation=np.deg2rad(elevation), radius=radius, width=width, height=height
        )
    else:
        cameras = [_camera_from_options(azimuth, elevation, radius, width, height)]
    out_dir = Path(out_dir)
    written = []
    for ci, camera in enumerate(cameras):
        view = render_hybrid(camera, anchor_set, ckpt.params, LightSample(), march, maps=maps)
        written.extend(write_view(out_dir, f"hybrid_cam{ci:03d}", view, maps=maps))
    click.echo(f"wrote {len(written)} files to {out_dir}")


@main.command("eval-align")
@click.option("--checkpoint-a", required=True, type=click.Path(exists=True))
@click.option("--checkpoint-b", required=True, type=click.Path(exists=True))
@click.option("--vertex-a", default=0, show_default=True)
@click.option("--vertex-b", default=1, show_default=True)
@click.option("--views", default=120, show_default=True)
@click.option("--stride", default=2, show_default=True)
@click.option("--size", default=64, show_default=True)
@click.option("--samples", default=64, show_default=True)
@click.option("--out", "out_path", default=None, type=click.Path())
def eval_align(checkpoint_a, checkpoint_b, vertex_a, vertex_b, views, stride, size, samples, out_path):
    """Structural-alignment distance between two (checkpoint, vertex) objects."""
    ck_a = _load_checkpoint(checkpoint_a)
    ck_b = _load_checkpoint(checkpoint_b)
    evaluation = EvalRenderConfig(width=size, height=size, n_samples=samples)

    def provider(ckpt, vertex):
        code = LatentCode.vertex(vertex, ckpt.params.n_objects)

        def render(camera):
            view = eval_render(ckpt.params, camera, code, maps=("rgb", "opacity"), evaluation=evaluation)
            return np.asarray(view.rgb), np.asarray(view.opacity)

        return render

    cameras = ring_cameras(views, width=size, height=size)
    report = multiview_alignment(
        provider(ck_a, vertex_a),
        provider(ck_b, vertex_b),
        cameras,
        CentroidCoordinateFeatures(),
        stride=stride,
    )
    prompt_a = ck_a.prompts[vertex_a] if vertex_a < len(ck_a.prompts) else f"vertex{vertex_a}"
    prompt_b = ck_b.prompts[vertex_b] if vertex_b < len(ck_b.prompts) else f"vertex{vertex_b}"
    record = report.as_record(prompt_a, prompt_b)
    if out_path:
        with open(out_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record) + "\n")
    click.echo(f"{'pair':<40} {'mean_distance':>14} {'views':>6} {'skipped':>8}")
    click.echo(
        f"{prompt_a + ' / ' + prompt_b:<40} {report.mean_distance:>14.6f} "
        f"{len(report.per_view):>6d} {report.skipped_views:>8d}"
    )


@main.command("check-grad")
@click.option("--samples", default=100, show_default=True, help="parameter indices to probe")
@click.option("--seed", default=0, show_default=True)
@click.option("--tolerance", default=5e-3, show_default=True)
def check_grad(samples, seed, tolerance):
    """Reverse-mode vs central-difference gradients through a full render."""
    report = run_gradient_check(n_indices=samples, seed=seed)
    click.echo(str(report))
    if report.max_rel_error >= tolerance:
        _fail(f"max relative error {report.max_rel_error:.3e} exceeds {tolerance:.1e}")
    click.echo(f"OK (tolerance {tolerance:.1e})")


@main.command()
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8316, show_default=True)
def serve(checkpoint_path, host, port):
    """Serve render/steer endpoints for the studio UI."""
    import uvicorn

    from .service import ServiceState, build_app

    ckpt = _load_checkpoint(checkpoint_path)
    app = build_app(ServiceState(ckpt))
    click.echo(f"serving {checkpoint_path} on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
