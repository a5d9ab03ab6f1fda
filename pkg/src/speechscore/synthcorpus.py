"""Synthetic embedding corpora with controllable ground-truth scores.

Generative model per speaker:
    degradation = (10 - true_score) / 10
    frame_t = signature_perp + degradation * SHIFT_SCALE * direction + noise_t
with `direction` a fixed unit vector, `signature_perp` a per-speaker vector
orthogonal to it, and per-frame gaussian noise whose scale grows with
degradation. Pooled mean (projection on `direction`) and pooled std are
therefore both smooth monotone functions of degradation, so statistic
pooling carries the score signal in both halves.
"""

import os
from dataclasses import dataclass

import numpy as np

from .embedding_io import (
    CorpusManifest,
    EmbeddingMatrix,
    UtteranceRecord,
    save_manifest,
    write_embedding,
)

SHIFT_SCALE = 4.0
NOISE_FLOOR = 0.2  # noise std multiplier at degradation 0
NOISE_GAIN = 0.8  # extra multiplier at degradation 1
CONTENT_GAIN = 0.35  # block-offset std multiplier per unit degradation
SIGNATURE_SCALE = 0.05


@dataclass
class SpeakerProfile:
    speaker_id: str
    speaker_index: int
    true_score: float
    signature: np.ndarray  # D-dim, orthogonal to the shift direction
    noise_scale: float

    @property
    def degradation(self):
        return (10.0 - self.true_score) / 10.0


@dataclass
class SynthConfig:
    n_speakers: int = 105
    dim: int = 64
    duration_range: tuple = (22.0, 44.0)
    frame_rate: float = 50.0
    seed: int = 0
    label_noise_std: float = 0.3
    noise_scale: float = 0.5
    score_range: tuple = (0.0, 10.0)

    def __post_init__(self):
        if self.n_speakers < 1 or self.dim < 1:
            raise ValueError("n_speakers and dim must be >= 1")
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be > 0")
        if self.duration_range[0] <= 0 or self.duration_range[1] < self.duration_range[0]:
            raise ValueError("bad duration range")
        lo, hi = self.score_range
        if not (0.0 <= lo <= hi <= 10.0):
            raise ValueError("score_range must lie within [0, 10]")


def shift_direction(dim):
    """The fixed unit vector the degradation shift acts along."""
    return np.ones(dim) / np.sqrt(dim)


def gen_profile(seed, speaker_index, score_range=(0.0, 10.0), dim=64, noise_scale=0.5,
                prefix="spk", stream=0):
    """Deterministic per (seed, stream, speaker_index); signature from a seeded normal.

    `stream` separates corpora generated from the same base seed (train vs
    test vs paired) so their speakers are independent draws.
    """
    rng = np.random.default_rng([seed, stream, speaker_index, 0])
    lo, hi = score_range
    true_score = float(rng.uniform(lo, hi))
    direction = shift_direction(dim)
    raw = rng.standard_normal(dim)
    signature = raw - np.dot(raw, direction) * direction  # keep the shift axis clean
    return SpeakerProfile(
        speaker_id=f"{prefix}{speaker_index:04d}",
        speaker_index=speaker_index,
        true_score=true_score,
        signature=SIGNATURE_SCALE * signature,
        noise_scale=noise_scale,
    )


def gen_utterance(profile, duration_s, frame_rate=50.0, seed=0, utterance_index=0, stream=0):
    """One T x D embedding matrix; T = round(duration_s * frame_rate)."""
    if duration_s <= 0:
        raise ValueError("duration must be > 0")
    frames = int(round(duration_s * frame_rate))
    if frames < 1:
        raise ValueError("duration too short for one frame")
    dim = len(profile.signature)
    deg = profile.degradation
    rng = np.random.default_rng([seed, stream, profile.speaker_index, utterance_index + 1])
    direction = shift_direction(dim)
    base = profile.signature + deg * SHIFT_SCALE * direction
    noise_std = profile.noise_scale * (NOISE_FLOOR + NOISE_GAIN * deg)
    data = base[np.newaxis, :] + noise_std * rng.standard_normal((frames, dim))
    # content variation: one-second blocks drift per dimension, more so for
    # degraded speakers. Long windows absorb this as extra pooled std (the model
    # trains on it); sub-block windows miss it and look artificially clean.
    block = max(1, int(round(frame_rate)))
    n_blocks = -(-frames // block)
    offsets = profile.noise_scale * CONTENT_GAIN * deg * rng.standard_normal((n_blocks, dim))
    data += np.repeat(offsets, block, axis=0)[:frames]
    return EmbeddingMatrix(data=data.astype(np.float32), frame_rate_hz=frame_rate)


def true_score_from_pooled_mean(pooled_mean, dim):
    """Closed-form inverse of the noise-free generative map."""
    proj = float(np.dot(pooled_mean, shift_direction(dim)))
    return 10.0 - 10.0 * proj / SHIFT_SCALE


def gen_corpus(cfg, layout, out_dir):
    """Write a full corpus (embedding files + manifest.csv) and return the manifest.

    layout: "train" | "test" | "paired". Paired emits two utterances per
    speaker with content tags "seguin" and "cordonnier". Labels are
    clip(true_score + noise, 0, 10) for both tasks.
    """
    if layout not in ("train", "test", "paired"):
        raise ValueError(f"unknown layout {layout!r}")
    os.makedirs(out_dir, exist_ok=True)
    prefixes = {"train": "tr", "test": "te", "paired": "pa"}
    stream = {"train": 1, "test": 2, "paired": 3}[layout]
    label_rng = np.random.default_rng([cfg.seed, stream, 999_983])
    records = []
    for i in range(cfg.n_speakers):
        profile = gen_profile(
            cfg.seed, i, score_range=cfg.score_range, dim=cfg.dim,
            noise_scale=cfg.noise_scale, prefix=prefixes[layout], stream=stream,
        )
        dur_rng = np.random.default_rng([cfg.seed, stream, i, 777])
        contents = ["seguin", "cordonnier"] if layout == "paired" else [None]
        label = float(
            np.clip(profile.true_score + label_rng.normal(0.0, cfg.label_noise_std), 0.0, 10.0)
        )
        for utt_idx, content in enumerate(contents):
            duration = float(dur_rng.uniform(*cfg.duration_range))
            matrix = gen_utterance(
                profile, duration, cfg.frame_rate, seed=cfg.seed,
                utterance_index=utt_idx, stream=stream,
            )
            utt_id = f"{profile.speaker_id}_u{utt_idx}"
            rel_path = f"{utt_id}.emb"
            write_embedding(matrix, os.path.join(out_dir, rel_path))
            records.append(
                UtteranceRecord(
                    speaker_id=profile.speaker_id,
                    utterance_id=utt_id,
                    path=rel_path,
                    intelligibility=label,
                    severity=label,
                    corpus_tag="SYNTH",
                    content_tag=content,
                )
            )
    manifest = CorpusManifest(records=records, root=out_dir)
    save_manifest(manifest, os.path.join(out_dir, "manifest.csv"))
    return manifest
