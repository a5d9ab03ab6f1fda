"""Run a pretrained speech encoder over a directory of audio files and write
frame embeddings in the speechscore binary format, plus a manifest joined with
a table of per-speaker scores.

Export only — the encoder is frozen and run in inference mode. Audio is
decoded with scipy (WAV), downmixed to mono and resampled to 16 kHz before
the forward pass. Files that fail to decode are skipped with a warning.
"""

import csv
import math
import os
import warnings
from dataclasses import dataclass

import numpy as np
import torch
from scipy.io import wavfile
from scipy.signal import resample_poly
from transformers import Wav2Vec2Model

from speechscore import (
    CorpusManifest,
    EmbeddingMatrix,
    UtteranceRecord,
    save_manifest,
    write_embedding,
)

SAMPLE_RATE = 16000


@dataclass
class ExportJob:
    checkpoint: str
    audio_dir: str
    scores_csv: str | None
    out_dir: str
    layer: int = 24
    corpus_tag: str = "EXPORT"


def load_scores(path):
    """speaker_id -> (intelligibility, severity); either score column may be absent."""
    table = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if "speaker_id" not in (reader.fieldnames or []):
            raise ValueError("scores CSV needs a speaker_id column")
        for row in reader:
            intel = row.get("intelligibility") or None
            sev = row.get("severity") or None
            table[row["speaker_id"]] = (
                float(intel) if intel is not None else None,
                float(sev) if sev is not None else None,
            )
    return table


def encoder_frame_rate(config, sample_rate=SAMPLE_RATE):
    """Frames per second implied by the conv feature extractor's strides."""
    hop = math.prod(config.conv_stride)
    return float(sample_rate) / float(hop)


def decode_audio(path):
    """Mono float32 waveform at 16 kHz."""
    rate, data = wavfile.read(path)
    data = np.asarray(data)
    if data.ndim == 2:
        data = data.mean(axis=1)
    if np.issubdtype(data.dtype, np.integer):
        data = data.astype(np.float32) / float(np.iinfo(data.dtype).max)
    else:
        data = data.astype(np.float32)
    if rate != SAMPLE_RATE:
        g = math.gcd(int(rate), SAMPLE_RATE)
        data = resample_poly(data, SAMPLE_RATE // g, rate // g).astype(np.float32)
    return data


def split_stem(stem):
    """speaker/utterance ids from a filename stem: 'spk01_a' -> ('spk01', 'spk01_a')."""
    speaker = stem.split("_", 1)[0]
    return speaker, stem


def export(job):
    """Run the encoder over every .wav under the audio dir; returns the manifest.

    Embedding = hidden state at `job.layer` (0 is the conv output, depth is
    the last transformer layer). One .emb file per decodable audio; rows are
    joined with the score table by speaker_id, missing scores stay empty.
    """
    model = Wav2Vec2Model.from_pretrained(job.checkpoint)
    depth = model.config.num_hidden_layers
    if not 0 <= job.layer <= depth:
        raise ValueError(f"layer {job.layer} outside encoder depth {depth}")
    model.eval()

    frame_rate = encoder_frame_rate(model.config)
    scores = load_scores(job.scores_csv) if job.scores_csv else {}
    os.makedirs(job.out_dir, exist_ok=True)

    records = []
    for name in sorted(os.listdir(job.audio_dir)):
        if not name.lower().endswith(".wav"):
            continue
        stem = os.path.splitext(name)[0]
        try:
            wave = decode_audio(os.path.join(job.audio_dir, name))
        except Exception as exc:
            warnings.warn(f"skipping undecodable audio {name}: {exc}")
            continue
        # zero-mean unit-variance input, as the standard feature extractor does
        wave = (wave - wave.mean()) / np.sqrt(wave.var() + 1e-7)
        with torch.inference_mode():
            out = model(torch.from_numpy(wave)[None, :], output_hidden_states=True)
        frames = out.hidden_states[job.layer][0].numpy().astype(np.float32)

        rel = stem + ".emb"
        write_embedding(EmbeddingMatrix(frames, frame_rate_hz=frame_rate),
                        os.path.join(job.out_dir, rel))
        speaker_id, utterance_id = split_stem(stem)
        intel, sev = scores.get(speaker_id, (None, None))
        records.append(UtteranceRecord(speaker_id, utterance_id, rel,
                                       intelligibility=intel, severity=sev,
                                       corpus_tag=job.corpus_tag))

    manifest = CorpusManifest(records=records, root=job.out_dir)
    save_manifest(manifest, os.path.join(job.out_dir, "manifest.csv"))
    return manifest
