"""Thin command-line client for the summarization service.

Every subcommand builds the same pydantic request the HTTP API accepts and
either posts it to a running server (``--server`` / ``SUMKIT_SERVER``) or
calls the handler in process. Exit codes: 0 success, 2 config/usage errors,
1 runtime failures.
"""

from __future__ import annotations

import json
import os
import sys

import click

from . import __version__
from .config import Config, SEED_ENV_VAR
from .errors import ConfigError, SumkitError, UsageError
from .service import handlers, schemas

SERVER_ENV_VAR = "SUMKIT_SERVER"


def _env_seed() -> int | None:
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}")


def _dispatch(ctx, endpoint: str, request, handler):
    """POST to the configured server, or run the handler in process."""
    server = ctx.obj.get("server")
    try:
        if server:
            import httpx

            resp = httpx.post(f"{server.rstrip('/')}/{endpoint}",
                              json=request.model_dump(), timeout=None)
            if resp.status_code >= 400:
                detail = resp.json().get("detail", resp.text)
                raise UsageError(f"server rejected {endpoint}: {detail}") \
                    if resp.status_code in (400, 422) else SumkitError(detail)
            payload = resp.json()
        else:
            payload = handler(request).model_dump()
    except (ConfigError, UsageError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    except SumkitError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(json.dumps(payload, indent=2))
    return payload


@click.group(invoke_without_command=True)
@click.option("--server", envvar=SERVER_ENV_VAR, default=None,
              help="Base URL of a running sumkit service; defaults to in-process execution.")
@click.option("--show-config", is_flag=True, help="Print the built-in defaults and exit.")
@click.version_option(__version__)
@click.pass_context
def main(ctx, server, show_config):
    ctx.ensure_object(dict)
    ctx.obj["server"] = server
    if show_config:
        click.echo(json.dumps(Config().to_dict(), indent=2))
        ctx.exit(0)
    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())
        ctx.exit(0)


@main.command("gen-synthetic")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", type=int, default=None, help=f"Falls back to ${SEED_ENV_VAR}, then 0.")
@click.option("--videos", type=int, default=8, show_default=True)
@click.option("--frames", type=int, default=200, show_default=True)
@click.option("--dim", type=int, default=32, show_default=True)
@click.option("--keyframe-fraction", type=float, default=0.15, show_default=True)
@click.option("--captions", type=int, default=7, show_default=True)
@click.option("--annotators", type=int, default=3, show_default=True)
@click.option("--shot-len", type=int, default=10, show_default=True)
@click.option("--text-kind", type=click.Choice(["captions", "query"]), default="captions",
              show_default=True)
@click.option("--test-fraction", type=float, default=0.25, show_default=True)
@click.option("--fps", type=float, default=2.0, show_default=True)
@click.option("--two-topic", is_flag=True,
              help="Emit the two-topic query corpus plus a held-out probe video.")
@click.pass_context
def gen_synthetic(ctx, out_dir, seed, **kw):
    """Generate a deterministic synthetic dataset for experiments and tests."""
    if seed is None:
        try:
            env = _env_seed()
        except ConfigError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        seed = env if env is not None else 0
    req = schemas.GenSyntheticRequest(out_dir=out_dir, seed=seed, **kw)
    _dispatch(ctx, "gen-synthetic", req, handlers.handle_gen_synthetic)


@main.command()
@click.option("--manifest", required=True, type=click.Path())
@click.option("--out", "checkpoint_out", required=True, type=click.Path())
@click.option("--config", "config_file", type=click.Path(), default=None,
              help="JSON config file; flags override it.")
@click.option("--mode", type=click.Choice(["supervised", "unsupervised"]), default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--embed-dim", type=int, default=None)
@click.option("--window-len", type=int, default=None)
@click.option("--split", default="train", show_default=True,
              help='Manifest split to train on; "all" uses every entry.')
@click.pass_context
def train(ctx, manifest, checkpoint_out, config_file, split, **overrides):
    """Train a scoring model on a manifest and write a checkpoint."""
    cfg_overrides = {k: v for k, v in overrides.items() if v is not None}
    req = schemas.TrainRequest(manifest=manifest, checkpoint_out=checkpoint_out,
                               config_file=config_file, config=cfg_overrides, split=split)
    _dispatch(ctx, "train", req, handlers.handle_train)


@main.command()
@click.option("--checkpoint", required=True, type=click.Path())
@click.option("--frames", required=True, type=click.Path())
@click.option("--text", required=True, type=click.Path(),
              help="Caption or query feature file.")
@click.pass_context
def score(ctx, checkpoint, frames, text):
    """Print per-frame relevance scores for one video."""
    req = schemas.ScoreRequest(checkpoint=checkpoint, frames=frames, text=text)
    _dispatch(ctx, "score", req, handlers.handle_score)


@main.command()
@click.option("--checkpoint", required=True, type=click.Path())
@click.option("--frames", required=True, type=click.Path())
@click.option("--text", required=True, type=click.Path(),
              help="Caption file for generic summaries, query file for query-focused ones.")
@click.option("--ground-truth", type=click.Path(), default=None,
              help="Optional ground-truth JSON supplying shot boundaries.")
@click.option("--budget", "budget_fraction", type=float, default=None,
              help="Fraction of frames the summary may keep; checkpoint default otherwise.")
@click.option("--out", type=click.Path(), default=None, help="Also write the summary JSON here.")
@click.pass_context
def summarize(ctx, checkpoint, frames, text, ground_truth, budget_fraction, out):
    """Build a budgeted keyshot summary for one video."""
    req = schemas.SummarizeRequest(checkpoint=checkpoint, frames=frames, text=text,
                                   ground_truth=ground_truth,
                                   budget_fraction=budget_fraction, out=out)
    _dispatch(ctx, "summarize", req, handlers.handle_summarize)


@main.command()
@click.option("--checkpoint", required=True, type=click.Path())
@click.option("--manifest", required=True, type=click.Path())
@click.option("--split", default="test", show_default=True)
@click.option("--f1-mode", type=click.Choice(["avg", "max"]), default=None)
@click.option("--budget", "budget_fraction", type=float, default=None)
@click.option("--out", type=click.Path(), default=None, help="Also write the report JSON here.")
@click.option("--csv", "csv_out", type=click.Path(), default=None,
              help="Also write a per-video CSV table here.")
@click.pass_context
def evaluate(ctx, checkpoint, manifest, split, f1_mode, budget_fraction, out, csv_out):
    """Report F1 and rank correlations for a checkpoint on a manifest split."""
    req = schemas.EvaluateRequest(checkpoint=checkpoint, manifest=manifest, split=split,
                                  f1_mode=f1_mode, budget_fraction=budget_fraction, out=out,
                                  csv_out=csv_out)
    _dispatch(ctx, "evaluate", req, handlers.handle_evaluate)


@main.command("inspect-features")
@click.argument("path", type=click.Path())
@click.pass_context
def inspect_features(ctx, path):
    """Validate a feature file and print its header plus value statistics."""
    req = schemas.InspectRequest(path=path)
    _dispatch(ctx, "inspect-features", req, handlers.handle_inspect)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8008, show_default=True)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import app

    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
