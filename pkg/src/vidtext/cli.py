"""Command-line client for the training service.

Each subcommand posts to the HTTP service; with no ``--server`` the app runs
in-process over an ASGI transport, so nothing needs to be deployed for local
work.  Output is JSON lines; exit codes: 0 success, 2 config/schema error,
3 runtime failure.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import httpx

CONFIG_EXIT, RUNTIME_EXIT = 2, 3


class InProcessTransport(httpx.BaseTransport):
    """Synchronous bridge into the ASGI app: one event loop per request."""

    def __init__(self, app):
        self._asgi = httpx.ASGITransport(app=app, raise_app_exceptions=False)

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        import asyncio

        content = request.read()

        async def roundtrip():
            async_request = httpx.Request(
                request.method, request.url, headers=request.headers, content=content
            )
            response = await self._asgi.handle_async_request(async_request)
            body = await response.aread()
            return response.status_code, response.headers, body

        status, headers, body = asyncio.run(roundtrip())
        return httpx.Response(status_code=status, headers=headers, content=body, request=request)


def make_client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=None)
    # default: drive the service in-process, no deployment needed
    from .service.app import app

    return httpx.Client(transport=InProcessTransport(app), base_url="http://vidtext.local")


def emit(event: str, **payload) -> None:
    click.echo(json.dumps({"event": event, **payload}))


def call(server: str | None, route: str, payload: dict) -> dict:
    try:
        with make_client(server) as client:
            response = client.post(route, json=payload)
    except httpx.HTTPError as exc:
        emit("error", detail=f"transport failure: {exc}")
        sys.exit(RUNTIME_EXIT)
    if response.status_code >= 500:
        emit("error", detail=response.json().get("detail", response.text))
        sys.exit(RUNTIME_EXIT)
    if response.status_code >= 400:
        emit("error", detail=response.json().get("detail", response.text))
        sys.exit(CONFIG_EXIT)
    return response.json()


def load_config(path: str | None, seed: int | None) -> dict:
    if path is None:
        config = {}
    else:
        try:
            config = json.loads(Path(path).read_text())
        except FileNotFoundError:
            emit("error", detail=f"config file not found: {path}")
            sys.exit(CONFIG_EXIT)
        except json.JSONDecodeError as exc:
            emit("error", detail=f"config is not valid JSON: {exc}")
            sys.exit(CONFIG_EXIT)
    if seed is not None:
        config["seed"] = seed
    return config


server_option = click.option("--server", default=None, help="Remote service URL; defaults to in-process.")
config_option = click.option("--config", "config_path", type=str, default=None, help="JSON config path.")
seed_option = click.option("--seed", type=int, default=None, help="Override the config seed.")


@click.group()
def main():
    """Video-text pre-training lab."""


@main.command()
@config_option
@seed_option
@click.option("--out", required=True, help="Corpus output directory.")
@server_option
def gen_corpus(config_path, seed, out, server):
    """Generate a synthetic corpus and persist it."""
    config = load_config(config_path, seed)
    result = call(server, "/corpus/generate", {"config": config, "out_dir": out})
    emit("corpus", **result)


@main.command()
@config_option
@seed_option
@click.option("--out", required=True, help="Run output directory.")
@click.option("--resume", default=None, help="Checkpoint directory to resume from.")
@server_option
def pretrain(config_path, seed, out, resume, server):
    """Pre-train with the configured objectives."""
    config = load_config(config_path, seed)
    result = call(server, "/pretrain", {"config": config, "out_dir": out, "resume": resume})
    emit("pretrain", **result)


@main.command()
@config_option
@seed_option
@click.option("--checkpoint", required=True, help="Source checkpoint directory.")
@click.option("--task", required=True, help="retrieval | qa_mc | qa_open | qa_fib | captioning")
@click.option("--out", required=True, help="Run output directory.")
@server_option
def finetune(config_path, seed, checkpoint, task, out, server):
    """Adapt a pre-trained checkpoint to a downstream task."""
    config = load_config(config_path, seed)
    result = call(
        server, "/finetune",
        {"config": config, "checkpoint": checkpoint, "task": task, "out_dir": out},
    )
    emit("finetune", **result)


@main.command()
@config_option
@seed_option
@click.option("--checkpoint", required=True, help="Checkpoint directory to evaluate.")
@click.option("--task", required=True, help="retrieval | qa_mc | qa_open | qa_fib | captioning | pretrain")
@click.option("--split", default="val", help="train | val")
@click.option("--out", default=None, help="Directory to write the metrics row.")
@server_option
def evaluate(config_path, seed, checkpoint, task, split, out, server):
    """Compute deterministic metrics for a checkpoint."""
    config = load_config(config_path, seed)
    result = call(
        server, "/evaluate",
        {"config": config, "checkpoint": checkpoint, "task": task, "split": split, "out_dir": out},
    )
    emit("metrics", **result)


@main.command()
@config_option
@seed_option
@click.option("--out", required=True, help="Sweep output directory.")
@server_option
def sweep(config_path, seed, out, server):
    """Run a config grid; the JSON config holds {"base": ..., "targets": ...}."""
    raw = load_config(config_path, seed)
    base = raw.get("base")
    if base is None:
        emit("error", detail='sweep config must carry a "base" run config')
        sys.exit(CONFIG_EXIT)
    if seed is not None:
        base["seed"] = seed
    payload = {"config": base, "out_dir": out}
    for key in ("targets", "masking", "ratios", "loss_kinds", "head_kinds"):
        if key in raw:
            payload[key] = raw[key]
    result = call(server, "/sweep", payload)
    emit("sweep", out_dir=result["out_dir"], rows=result["rows"])
    click.echo(result["table"])


@main.command()
@click.option("--seed", type=int, default=0)
@click.option("--coords-per-param", type=int, default=2)
@click.option("--out", default=None, help="Directory to write the report JSON.")
@server_option
def gradcheck(seed, coords_per_param, out, server):
    """Finite-difference verification of every loss gradient."""
    result = call(server, "/gradcheck", {"seed": seed, "coords_per_param": coords_per_param})
    emit("gradcheck", **result)
    if out:
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "gradcheck.json").write_text(json.dumps(result, indent=2))


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run("vidtext.service.app:app", host=host, port=port)


if __name__ == "__main__":
    main()
