"""Offline extraction tool emitting SUMFEAT1 files for the summarizer.

Exactly one input source per run: ``--video`` (frame embeddings),
``--text-file`` (one caption sentence per line) or ``--query`` (single
sentence, query kind). Exit codes: 0 success, 2 bad usage, 1 extraction
failures such as undecodable video.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .encoders import DEFAULT_DIM, EncoderUnavailable, make_encoder
from .extract import ExtractionError, extract_frames, extract_text


@click.command()
@click.option("--video", type=click.Path(), default=None, help="Video to embed frame by frame.")
@click.option("--fps", type=float, default=2.0, show_default=True,
              help="Frame sampling rate for --video.")
@click.option("--text-file", type=click.Path(), default=None,
              help="Caption sentences, one per line.")
@click.option("--query", default=None, help="Single natural-language query sentence.")
@click.option("--out", required=True, type=click.Path(), help="Output SUMFEAT1 path.")
@click.option("--encoder", "encoder_name", type=click.Choice(["clip", "projection"]),
              default="clip", show_default=True,
              help="projection is the deterministic offline backend.")
@click.option("--dim", type=int, default=DEFAULT_DIM, show_default=True,
              help="Embedding width (projection encoder only; clip is fixed at 512).")
@click.option("--video-id", default=None, help="Identifier stored in the header.")
def main(video, fps, text_file, query, out, encoder_name, dim, video_id):
    """Turn a video or text into an embedding file the summarizer can read."""
    sources = [s for s in (video, text_file, query) if s is not None]
    if len(sources) != 1:
        click.echo("error: provide exactly one of --video, --text-file, --query", err=True)
        sys.exit(2)
    try:
        encoder = make_encoder(encoder_name, dim=dim)
    except EncoderUnavailable as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    try:
        if video is not None:
            result = extract_frames(video, out, encoder, target_fps=fps, video_id=video_id)
            click.echo(f"wrote {result.rows} frame embeddings at {result.fps} fps to {result.out}")
        elif text_file is not None:
            try:
                sentences = Path(text_file).read_text(encoding="utf-8").splitlines()
            except OSError as exc:
                click.echo(f"error: cannot read {text_file}: {exc}", err=True)
                sys.exit(2)
            rows = extract_text(sentences, out, encoder, kind="captions",
                                video_id=video_id or Path(text_file).stem)
            click.echo(f"wrote {rows} caption embeddings to {out}")
        else:
            rows = extract_text([query], out, encoder, kind="query",
                                video_id=video_id or "query")
            click.echo(f"wrote query embedding to {out}")
    except ExtractionError as exc:
        message = str(exc)
        click.echo(f"error: {message}", err=True)
        sys.exit(2 if "sentence" in message else 1)


if __name__ == "__main__":
    main()
