"""The local render/steer service consumed by the studio UI.

All request/response bodies are JSON with declared numeric types; images
come back as PNG bodies (one map) or multipart/mixed (several maps).
Renders go through the same evaluation path as the CLI, so identical
inputs produce byte-identical images.  The checkpoint snapshot is swapped
atomically; requests in flight keep the snapshot they started with.
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .anchors import Anchor, AnchorFormatError, AnchorSet, latent_field, parse_anchor_text
from .checkpoint import Checkpoint
from .config import EvalRenderConfig
from .field import ConfigurationError, InvalidInputError, LatentCode
from .images import encode_depth_png, encode_map
from .render import Camera
from .session import eval_render

MAX_IMAGE_SIDE = 512
ALLOWED_MAPS = ("rgb", "normal", "depth", "opacity")


class ServiceState:
    """Read-only checkpoint snapshot with atomic replacement."""

    def __init__(self, checkpoint: Checkpoint):
        self._snapshot = checkpoint

    @property
    def snapshot(self) -> Checkpoint:
        return self._snapshot

    def swap(self, checkpoint: Checkpoint) -> None:
        self._snapshot = checkpoint  # single reference assignment: atomic


class CameraModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    position: tuple[float, float, float]
    target: tuple[float, float, float] = (0.0, 0.0, 0.0)
    up: tuple[float, float, float] = (0.0, 0.0, 1.0)
    fov_deg: float = Field(default=40.0, gt=0.0, lt=180.0)
    width: int = Field(default=256, ge=1, le=MAX_IMAGE_SIDE)
    height: int = Field(default=256, ge=1, le=MAX_IMAGE_SIDE)


class AnchorModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    pos: tuple[float, float, float]
    code: list[float]


class LatentModel(BaseModel):
    """Exactly one of: fixed code, sweep position on a vertex pair, anchors."""

    model_config = ConfigDict(extra="forbid")

    fixed: list[float] | None = None
    sweep_t: float | None = Field(default=None, ge=0.0, le=1.0)
    pair: tuple[int, int] | None = None
    anchors: list[AnchorModel] | None = None
    smoothing: float = Field(default=0.0, ge=0.0)

    @model_validator(mode="after")
    def _exactly_one_source(self):
        sources = [
            self.fixed is not None,
            self.sweep_t is not None or self.pair is not None,
            self.anchors is not None,
        ]
        if sum(sources) != 1:
            raise ValueError("latent needs exactly one of: fixed, sweep_t+pair, anchors")
        if (self.sweep_t is None) != (self.pair is None):
            raise ValueError("sweep latents need both sweep_t and pair")
        return self


class RenderRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    camera: CameraModel
    latent: LatentModel
    maps: list[str] = Field(default_factory=lambda: ["rgb"])
    n_samples: int = Field(default=96, ge=2, le=1024)
    background: tuple[float, float, float] = (1.0, 1.0, 1.0)


class AnchorValidateRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    text: str
    smoothing: float = Field(default=0.0, ge=0.0)


class _BadRequest(Exception):
    def __init__(self, detail):
        self.detail = detail


def _resolve_latent(latent: LatentModel, n: int):
    if latent.fixed is not None:
        if len(latent.fixed) != n:
            raise _BadRequest(
                {"loc": ["latent", "fixed"], "msg": f"needs {n} components, got {len(latent.fixed)}"}
            )
        try:
            return LatentCode(latent.fixed)
        except ValueError as exc:
            raise _BadRequest({"loc": ["latent", "fixed"], "msg": str(exc)})
    if latent.anchors is not None:
        try:
            anchors = AnchorSet(
                anchors=tuple(
                    Anchor(position=a.pos, code=LatentCode(a.code)) for a in latent.anchors
                ),
                smoothing=latent.smoothing,
            )
        except (ValueError, ConfigurationError) as exc:
            raise _BadRequest({"loc": ["latent", "anchors"], "msg": str(exc)})
        if anchors.n != n:
            raise _BadRequest(
                {"loc": ["latent", "anchors"], "msg": f"anchor codes need {n} components"}
            )
        return latent_field(anchors, np.float32)
    i, j = latent.pair
    if not (0 <= i < n and 0 <= j < n) or i == j:
        raise _BadRequest({"loc": ["latent", "pair"], "msg": f"invalid vertex pair for {n} prompts"})
    return LatentCode.edge_point(i, j, 1.0 - latent.sweep_t, n)


def _multipart(parts: list[tuple[str, bytes]]) -> Response:
    boundary = "simplexfield-map"
    chunks = []
    for name, payload in parts:
        chunks.append(
            (
                f"--{boundary}\r\ncontent-type: image/png\r\n"
                f'content-disposition: attachment; name="{name}"; filename="{name}.png"\r\n\r\n'
            ).encode()
            + payload
            + b"\r\n"
        )
    chunks.append(f"--{boundary}--\r\n".encode())
    return Response(
        content=b"".join(chunks), media_type=f"multipart/mixed; boundary={boundary}"
    )


def build_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="simplexfield service", docs_url=None, redoc_url=None)

    @app.exception_handler(_BadRequest)
    async def bad_request_handler(request: Request, exc: _BadRequest):
        return JSONResponse(status_code=400, content={"detail": [exc.detail]})

    @app.exception_handler(Exception)
    async def crash_guard(request: Request, exc: Exception):
        return JSONResponse(status_code=500, content={"detail": f"render failure: {exc}"})

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/model/info")
    def model_info():
        ckpt = state.snapshot
        grid = ckpt.params.grid_config
        return {
            "prompts": list(ckpt.prompts),
            "n": ckpt.params.n_objects,
            "bounds": [list(grid.bounds[0]), list(grid.bounds[1])],
            "iteration": ckpt.iteration,
            "image_limits": {"max_width": MAX_IMAGE_SIDE, "max_height": MAX_IMAGE_SIDE},
            "maps": list(ALLOWED_MAPS),
        }

    @app.post("/render")
    def render(req: RenderRequest):
        ckpt = state.snapshot
        for name in req.maps:
            if name not in ALLOWED_MAPS:
                raise _BadRequest({"loc": ["maps"], "msg": f"unknown map {name!r}"})
        if not req.maps:
            raise _BadRequest({"loc": ["maps"], "msg": "at least one map required"})
        latent = _resolve_latent(req.latent, ckpt.params.n_objects)
        try:
            camera = Camera(
                position=req.camera.position,
                target=req.camera.target,
                up=req.camera.up,
                vertical_fov=float(np.deg2rad(req.camera.fov_deg)),
                width=req.camera.width,
                height=req.camera.height,
            )
        except InvalidInputError as exc:
            raise _BadRequest({"loc": ["camera"], "msg": str(exc)})
        evaluation = EvalRenderConfig(
            width=req.camera.width,
            height=req.camera.height,
            n_samples=req.n_samples,
            background=req.background,
        )
        view = eval_render(ckpt.params, camera, latent, maps=tuple(req.maps), evaluation=evaluation)
        if len(req.maps) == 1:
            name = req.maps[0]
            headers = {"X-Map": name}
            if name == "depth":
                payload, sidecar = encode_depth_png(np.asarray(view.depth))
                headers["X-Max-Depth"] = repr(sidecar["max_depth"])
                return Response(content=payload, media_type="image/png", headers=headers)
            return Response(content=encode_map(view, name), media_type="image/png", headers=headers)
        return _multipart([(name, encode_map(view, name)) for name in req.maps])

    @app.post("/anchors/validate")
    def anchors_validate(req: AnchorValidateRequest):
        try:
            parsed = parse_anchor_text(req.text, smoothing=req.smoothing)
        except AnchorFormatError as exc:
            return JSONResponse(
                status_code=400,
                content={"errors": [{"line": ln, "message": msg} for ln, msg in exc.errors]},
            )
        return {
            "anchors": [
                {"position": list(a.position), "code": a.code.u.tolist()}
                for a in parsed.anchors
            ],
            "n": parsed.n,
        }

    return app
