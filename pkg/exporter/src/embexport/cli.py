"""Command line entry: `embexport export --checkpoint <id> --audio-dir <dir>
--scores <csv> --layer 24 --out <dir>`."""

import argparse
import sys

from .export import ExportJob, export


def build_parser():
    parser = argparse.ArgumentParser(prog="embexport")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="extract frame embeddings from audio")
    p.add_argument("--checkpoint", required=True, help="encoder checkpoint id or path")
    p.add_argument("--audio-dir", required=True)
    p.add_argument("--scores", default=None, help="CSV of per-speaker scores")
    p.add_argument("--layer", type=int, default=24)
    p.add_argument("--corpus-tag", default="EXPORT")
    p.add_argument("--out", required=True)
    return parser


def run(argv):
    args = build_parser().parse_args(argv)
    job = ExportJob(checkpoint=args.checkpoint, audio_dir=args.audio_dir,
                    scores_csv=args.scores, out_dir=args.out,
                    layer=args.layer, corpus_tag=args.corpus_tag)
    manifest = export(job)
    print(f"exported {len(manifest.records)} utterances to {args.out}")
    return 0


def main():
    sys.exit(run(sys.argv[1:]))
