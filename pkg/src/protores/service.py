"""HTTP/WebSocket solve service.

Endpoints:
  POST /v1/solve           one solve request -> one response
  GET  /v1/skeletons/{id}  skeleton document for a loaded model
  GET  /v1/health          status and loaded model ids
  WS   /v1/stream          ordered solve responses with latest-request-wins
                           coalescing when the client outpaces the solver

All bodies use JSON. Responses are canonically serialized (sorted keys, no
whitespace) so identical requests against an immutable model yield
byte-identical bodies apart from the latency field.
"""

from __future__ import annotations

import asyncio
import json
import time
from dataclasses import dataclass
from pathlib import Path

import torch
from fastapi import FastAPI, Response
from starlette.concurrency import run_in_threadpool
from starlette.websockets import WebSocket, WebSocketDisconnect

from .checkpoint import load_checkpoint
from .effectors import EffectorSet, effector_from_dict
from .errors import BadRequest, DomainError, NotFound, ProtoResError, ShapeError
from .kinematics import matrix_to_quaternion, matrix_to_rotation6d
from .model import build_network, load_network_parameters, model_forward
from .skeleton import SkeletonSpec

DEFAULT_MODEL_ID = "default"


@dataclass
class LoadedModel:
    model_id: str
    network: torch.nn.Module
    skeleton: SkeletonSpec


class ModelRegistry:
    """Immutable-after-startup mapping of model ids to loaded networks."""

    def __init__(self):
        self._models: dict[str, LoadedModel] = {}

    def add(self, model_id: str, checkpoint_path: str | Path,
            skeleton: SkeletonSpec | str | Path) -> LoadedModel:
        if isinstance(skeleton, (str, Path)):
            skeleton = SkeletonSpec.load(skeleton)
        params, config, model_type = load_checkpoint(checkpoint_path)
        if config.joint_count != skeleton.joint_count:
            raise ShapeError(
                f"checkpoint {checkpoint_path} built for {config.joint_count} joints, "
                f"skeleton has {skeleton.joint_count}"
            )
        network = build_network(config, model_type)
        load_network_parameters(network, params)
        network.train(False)
        model = LoadedModel(model_id, network, skeleton)
        self._models[model_id] = model
        return model

    def get(self, model_id: str) -> LoadedModel:
        if model_id not in self._models:
            raise NotFound(f"unknown model {model_id!r}")
        return self._models[model_id]

    def ids(self) -> list[str]:
        return sorted(self._models)


def canonical_json(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def parse_solve_request(payload: dict, registry: ModelRegistry
                        ) -> tuple[LoadedModel, EffectorSet, dict]:
    if not isinstance(payload, dict):
        raise BadRequest("request body must be a JSON object", field="")
    model_id = payload.get("model", DEFAULT_MODEL_ID)
    model = registry.get(model_id)
    entries = payload.get("effectors")
    if not isinstance(entries, list) or not entries:
        raise BadRequest("effectors must be a non-empty list", field="effectors")
    effectors = []
    for i, entry in enumerate(entries):
        try:
            effector = effector_from_dict(entry, model.skeleton)
            effector.validate()
            if not 0 <= effector.joint_id < model.skeleton.joint_count:
                raise DomainError(f"joint id {effector.joint_id} out of range")
            effectors.append(effector)
        except ProtoResError as exc:
            raise BadRequest(str(exc), field=f"effectors[{i}]") from exc
    try:
        effector_set = EffectorSet(effectors, model.skeleton)
    except ProtoResError as exc:
        raise BadRequest(str(exc), field="effectors") from exc
    options = payload.get("options") or {}
    if not isinstance(options, dict):
        raise BadRequest("options must be an object", field="options")
    rotation_format = options.get("rotation_format", "quaternion")
    if rotation_format not in ("quaternion", "sixd"):
        raise BadRequest(f"unknown rotation format {rotation_format!r}",
                         field="options.rotation_format")
    return model, effector_set, {
        "rotation_format": rotation_format,
        "include_global_positions": bool(options.get("include_global_positions", False)),
        "request_id": payload.get("request_id"),
    }


def solve(payload: dict, registry: ModelRegistry) -> dict:
    """Deterministic eval-mode solve; identical requests yield identical poses."""
    model, effector_set, options = parse_solve_request(payload, registry)
    started = time.perf_counter()
    output = model_forward(effector_set, model.skeleton, model.network, mode="eval")
    latency_ms = (time.perf_counter() - started) * 1000.0
    if options["rotation_format"] == "quaternion":
        rotations = matrix_to_quaternion(output.local_rotations[0].numpy())
    else:
        rotations = matrix_to_rotation6d(output.local_rotations[0]).numpy()
    response = {
        "root_position": [float(v) for v in output.draft_positions[0, 0].numpy()],
        "rotation_format": options["rotation_format"],
        "rotations": [[float(v) for v in row] for row in rotations],
        "latency_ms": latency_ms,
    }
    if options["include_global_positions"]:
        response["global_positions"] = [
            [float(v) for v in row] for row in output.global_positions[0].numpy()
        ]
    if options["request_id"] is not None:
        response["request_id"] = options["request_id"]
    return response


def _error_payload(exc: Exception) -> tuple[int, dict]:
    if isinstance(exc, NotFound):
        return 404, {"error": str(exc)}
    if isinstance(exc, BadRequest):
        return 400, {"error": str(exc), "field": exc.field}
    if isinstance(exc, ProtoResError):
        return 400, {"error": str(exc)}
    raise exc


def create_app(registry: ModelRegistry) -> FastAPI:
    app = FastAPI(title="pose solve service")

    def json_response(payload: dict, status_code: int = 200) -> Response:
        return Response(content=canonical_json(payload) + "\n",
                        media_type="application/json", status_code=status_code)

    @app.get("/v1/health")
    async def health() -> Response:
        return json_response({"status": "ok", "models": registry.ids()})

    @app.get("/v1/skeletons/{model_id}")
    async def skeleton(model_id: str) -> Response:
        try:
            model = registry.get(model_id)
        except NotFound as exc:
            status, payload = _error_payload(exc)
            return json_response(payload, status)
        return json_response(model.skeleton.to_dict())

    @app.post("/v1/solve")
    async def solve_endpoint(payload: dict) -> Response:
        try:
            response = await run_in_threadpool(solve, payload, registry)
        except ProtoResError as exc:
            status, body = _error_payload(exc)
            return json_response(body, status)
        return json_response(response)

    @app.websocket("/v1/stream")
    async def stream(ws: WebSocket) -> None:
        # One in-flight solve per connection. While a solve runs, newly
        # received requests overwrite the pending slot: latest request wins.
        await ws.accept()
        slot: dict[str, str] = {}
        wake = asyncio.Event()
        closed = False

        async def reader() -> None:
            nonlocal closed
            try:
                while True:
                    slot["pending"] = await ws.receive_text()
                    wake.set()
            except WebSocketDisconnect:
                closed = True
                wake.set()

        reader_task = asyncio.create_task(reader())
        try:
            while True:
                await wake.wait()
                wake.clear()
                message = slot.pop("pending", None)
                if message is not None:
                    try:
                        payload = json.loads(message)
                    except json.JSONDecodeError as exc:
                        await ws.send_text(canonical_json(
                            {"error": f"invalid JSON: {exc}"}))
                        continue
                    try:
                        response = await run_in_threadpool(solve, payload, registry)
                        await ws.send_text(canonical_json(response))
                    except ProtoResError as exc:
                        _, body = _error_payload(exc)
                        if isinstance(payload, dict) and payload.get("request_id") is not None:
                            body["request_id"] = payload["request_id"]
                        await ws.send_text(canonical_json(body))
                if closed:
                    break
        except WebSocketDisconnect:
            pass
        finally:
            reader_task.cancel()

    return app


def build_registry(checkpoint: str | Path, skeleton: str | Path | SkeletonSpec,
                   model_id: str = DEFAULT_MODEL_ID) -> ModelRegistry:
    registry = ModelRegistry()
    registry.add(model_id, checkpoint, skeleton)
    return registry


def run_server(registry: ModelRegistry, bind: str = "127.0.0.1:8080") -> None:
    import uvicorn

    host, _, port = bind.partition(":")
    uvicorn.run(create_app(registry), host=host or "127.0.0.1",
                port=int(port or 8080), log_level="info")
