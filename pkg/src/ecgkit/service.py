"""JSON HTTP inference service.

Endpoints:
    GET  /health    -> {"status": "ok", "models": {tag: version}}
    GET  /demo      -> {"items": [{id, label, fs, n_samples, samples}]}
    POST /classify  -> {"label", "class_index", "probabilities",
                        "model_version", "elapsed_ms"}

Request bodies are parsed by hand so the error codes stay exact: malformed
JSON is 400, field/shape problems are 422, an unknown model tag is 404.
Models and demo data are immutable shared state; handlers never write.
"""

from __future__ import annotations

import json
import time

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .errors import DegenerateSignal, ShapeError
from .nn import Network, predict


def create_app(
    models: dict[str, Network],
    versions: dict[str, str],
    demo_items: list[dict] | None = None,
) -> FastAPI:
    app = FastAPI(title="ecgkit inference service")
    demo = demo_items or []

    @app.get("/health")
    def health():
        return {"status": "ok", "models": {tag: versions.get(tag, "?") for tag in models}}

    @app.get("/demo")
    def demo_listing():
        return {
            "items": [
                {
                    "id": item["id"],
                    "label": item["label"],
                    "fs": item["fs"],
                    "n_samples": len(item["samples"]),
                    "samples": item["samples"],
                }
                for item in demo
            ]
        }

    @app.post("/classify")
    async def classify(request: Request):
        try:
            body = json.loads(await request.body())
        except json.JSONDecodeError:
            return JSONResponse({"error": "malformed JSON body"}, status_code=400)
        if not isinstance(body, dict):
            return JSONResponse({"error": "body must be a JSON object"}, status_code=422)

        tag = body.get("model")
        if not isinstance(tag, str):
            return JSONResponse({"error": "missing or non-string 'model'"}, status_code=422)
        net = models.get(tag)
        if net is None:
            return JSONResponse(
                {"error": f"unknown model {tag!r}", "available": sorted(models)},
                status_code=404,
            )

        fs = body.get("fs")
        if not isinstance(fs, (int, float)) or isinstance(fs, bool) or fs <= 0:
            return JSONResponse({"error": "'fs' must be a positive number"}, status_code=422)
        samples = body.get("samples")
        if not isinstance(samples, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in samples
        ):
            return JSONResponse({"error": "'samples' must be a numeric array"}, status_code=422)

        start = time.perf_counter()
        try:
            class_index, probs = predict(net, np.asarray(samples, dtype=np.float64), fs=fs)
        except (ShapeError, DegenerateSignal) as e:
            return JSONResponse({"error": str(e)}, status_code=422)
        elapsed_ms = (time.perf_counter() - start) * 1000.0
        return {
            "label": net.class_names[class_index],
            "class_index": class_index,
            "probabilities": probs.tolist(),
            "model_version": versions.get(tag, "?"),
            "elapsed_ms": elapsed_ms,
        }

    return app
