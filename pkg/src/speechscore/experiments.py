"""Experiment protocols: speaker-level k-fold with a fixed external test set,
segment-level prediction and duration sweeps, cross-domain scale conversion,
and paired-content consistency."""

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import evaluation
from .embedding_io import EmbeddingMatrix, read_embedding
from .errors import DataValidationError
from .evaluation import ScorePair, aggregate_folds, evaluate
from .pooling_regressor import forward, predict, statistic_pooling, train


@dataclass
class FoldSplit:
    fold_index: int
    train_speakers: set
    valid_speakers: set


@dataclass
class SegmentReport:
    speaker_id: str
    duration_s: float
    segment_scores: list
    segment_mean: float
    global_prediction: float
    target: float

    @property
    def abs_error(self):
        return abs(self.segment_mean - self.target)


@dataclass
class ScaleMap:
    source_min: float
    source_max: float
    inverted: bool = False

    def __post_init__(self):
        if self.source_max <= self.source_min:
            raise ValueError("source_max must exceed source_min")


@dataclass
class KFoldResult:
    reports: list  # per-fold EvalReport on the fixed test set
    curves: list  # per-fold LossCurve
    heads: list
    aggregate: object  # FoldAggregate over test MSEs
    test_pairs: list  # per-fold list of ScorePair


def kfold_split(speakers, k, seed):
    """Seeded speaker permutation, near-equal contiguous chunks as valid sets."""
    speakers = list(speakers)
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > len(speakers):
        raise ValueError(f"k={k} exceeds {len(speakers)} speakers")
    rng = np.random.default_rng(seed)
    order = [speakers[i] for i in rng.permutation(len(speakers))]
    chunks = np.array_split(np.arange(len(order)), k)
    splits = []
    for fold, chunk in enumerate(chunks):
        valid = {order[i] for i in chunk}
        splits.append(
            FoldSplit(
                fold_index=fold,
                train_speakers=set(order) - valid,
                valid_speakers=valid,
            )
        )
    return splits


def load_dataset(manifest, task, require_scores=True):
    """Pool every utterance once; returns list of (record, pooled_vector, target)."""
    out = []
    for record in manifest.records:
        target = record.score(task)
        if target is None:
            if require_scores:
                raise DataValidationError(
                    f"missing {task} score for {record.speaker_id}/{record.utterance_id}"
                )
            continue
        matrix = read_embedding(manifest.resolve(record))
        out.append((record, statistic_pooling(matrix), float(target)))
    return out


def run_kfold(train_manifest, test_manifest, task, cfg, k=10, jobs=1):
    """Train one head per fold; every fold evaluates the same fixed test corpus.

    Folds are independent; jobs > 1 runs them on a thread pool and results
    are merged by fold index regardless of completion order.
    """
    train_speakers = train_manifest.speakers()
    test_speakers = set(test_manifest.speakers())
    overlap = set(train_speakers) & test_speakers
    if overlap:
        raise DataValidationError(f"test corpus shares speakers with train corpus: {sorted(overlap)}")
    train_data = load_dataset(train_manifest, task)
    test_data = load_dataset(test_manifest, task)
    splits = kfold_split(train_speakers, k, cfg.seed)

    def run_fold(split):
        fold_cfg = _fold_config(cfg, split.fold_index)
        train_set = [(x, t) for r, x, t in train_data if r.speaker_id in split.train_speakers]
        valid_set = [(x, t) for r, x, t in train_data if r.speaker_id in split.valid_speakers]
        head, curve = train(train_set, valid_set, fold_cfg)
        pairs = [ScorePair(r.speaker_id, forward(head, x)[0], t) for r, x, t in test_data]
        return head, curve, pairs, evaluate(pairs)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(run_fold, splits))
    else:
        outcomes = [run_fold(s) for s in splits]

    heads = [o[0] for o in outcomes]
    curves = [o[1] for o in outcomes]
    all_pairs = [o[2] for o in outcomes]
    reports = [o[3] for o in outcomes]
    return KFoldResult(
        reports=reports,
        curves=curves,
        heads=heads,
        aggregate=aggregate_folds([r.mse for r in reports]),
        test_pairs=all_pairs,
    )


def _fold_config(cfg, fold_index):
    """Same protocol per fold, fold-specific init/shuffle seed."""
    return dataclasses.replace(cfg, seed=cfg.seed * 1000 + fold_index)


def segment_predictions(head, matrix, duration_s):
    """Score consecutive non-overlapping windows; trailing remainder is dropped."""
    if duration_s <= 0:
        raise ValueError("duration must be > 0")
    window = int(round(duration_s * matrix.frame_rate_hz))
    if window < 1:
        raise ValueError("duration shorter than one frame")
    n_segments = matrix.frames // window
    if n_segments == 0:
        raise DataValidationError(
            f"audio shorter than segment: {matrix.frames} frames < window {window}"
        )
    scores = []
    for s in range(n_segments):
        chunk = EmbeddingMatrix(
            data=matrix.data[s * window : (s + 1) * window],
            frame_rate_hz=matrix.frame_rate_hz,
        )
        scores.append(predict(head, chunk))
    return scores


def severity_group(target):
    """Coarse grouping used in the duration-sweep output (by perceptual score)."""
    if target >= 9.0:
        return "control"
    if target >= 4.0:
        return "mild"
    return "severe"


def duration_sweep(head, utterances, durations=(1.0, 2.0, 5.0, 10.0, 20.0)):
    """Per speaker x duration: segment scores, their mean, and |mean - target|.

    utterances: list of (UtteranceRecord-like with a target, EmbeddingMatrix,
    target) triples. Returns a flat list of SegmentReport.
    """
    reports = []
    for record, matrix, target in utterances:
        global_pred = predict(head, matrix)
        for duration in durations:
            scores = segment_predictions(head, matrix, duration)
            reports.append(
                SegmentReport(
                    speaker_id=record.speaker_id,
                    duration_s=float(duration),
                    segment_scores=scores,
                    segment_mean=float(np.mean(scores)),
                    global_prediction=global_pred,
                    target=float(target),
                )
            )
    return reports


def convert_scale(score, scale_map):
    """Affine map from [source_min, source_max] onto [0, 10], optionally inverted."""
    if not (scale_map.source_min <= score <= scale_map.source_max):
        raise DataValidationError(
            f"score {score} outside source range [{scale_map.source_min}, {scale_map.source_max}]"
        )
    frac = (score - scale_map.source_min) / (scale_map.source_max - scale_map.source_min)
    if scale_map.inverted:
        frac = 1.0 - frac
    return 10.0 * frac


def cross_domain_eval(head, manifest, scale_map, task):
    """Evaluate on a corpus whose scores live on a foreign scale.

    Raw manifest scores are read without the usual [0,10] bound (the source
    scale may be e.g. 0-3), converted through `scale_map`, then evaluated
    normally.
    """
    pairs = []
    for record in manifest.records:
        raw = record.score(task)
        if raw is None:
            raise DataValidationError(
                f"missing {task} score for {record.speaker_id}/{record.utterance_id}"
            )
        matrix = read_embedding(manifest.resolve(record))
        target = convert_scale(float(raw), scale_map)
        pairs.append(ScorePair(record.speaker_id, predict(head, matrix), target))
    return evaluate(pairs), pairs


def content_consistency(head, manifest):
    """Spearman correlation of per-speaker predictions between two reading texts.

    Every speaker must have exactly two utterances with distinct content tags.
    """
    by_speaker = {}
    for record in manifest.records:
        by_speaker.setdefault(record.speaker_id, []).append(record)
    preds_a, preds_b = [], []
    speakers = []
    for speaker_id in sorted(by_speaker):
        recs = by_speaker[speaker_id]
        tags = {r.content_tag for r in recs}
        if len(recs) != 2 or len(tags) != 2 or None in tags:
            raise DataValidationError(f"unpaired speaker {speaker_id}")
        first, second = sorted(recs, key=lambda r: r.content_tag)
        preds_a.append(predict(head, read_embedding(manifest.resolve(first))))
        preds_b.append(predict(head, read_embedding(manifest.resolve(second))))
        speakers.append(speaker_id)
    pairs = [
        ScorePair(s, a, b) for s, a, b in zip(speakers, preds_a, preds_b)
    ]
    rho, p = evaluation.spearman(pairs)
    return rho, p
