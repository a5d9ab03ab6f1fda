import numpy as np
import pytest
from scipy.io import wavfile

from embexport import ExportJob, decode_audio, encoder_frame_rate, export, load_scores
from speechscore import load_manifest, read_embedding, validate_corpus
from speechscore.cli import run as speechscore_cli


@pytest.fixture(scope="session")
def checkpoint(tmp_path_factory):
    # randomly initialised stand-in with the large-encoder width (no hub access here)
    from transformers import Wav2Vec2Config, Wav2Vec2Model

    config = Wav2Vec2Config(hidden_size=1024, num_hidden_layers=4,
                            num_attention_heads=16, intermediate_size=1024)
    path = tmp_path_factory.mktemp("ckpt") / "surrogate"
    Wav2Vec2Model(config).save_pretrained(path)
    return str(path)


def write_tone(path, duration_s, rate=16000, stereo=False):
    t = np.arange(int(duration_s * rate)) / rate
    wave = 0.3 * np.sin(2 * np.pi * 220 * t) + 0.05 * np.random.default_rng(0).standard_normal(len(t))
    pcm = (wave * 32767).astype(np.int16)
    if stereo:
        pcm = np.stack([pcm, pcm], axis=1)
    wavfile.write(path, rate, pcm)


@pytest.fixture(scope="session")
def exported(checkpoint, tmp_path_factory):
    root = tmp_path_factory.mktemp("audio")
    write_tone(root / "spk01_a.wav", 10.0)
    write_tone(root / "spk02_a.wav", 3.0)
    write_tone(root / "spk03_a.wav", 2.0, rate=44100, stereo=True)
    (root / "scores.csv").write_text(
        "speaker_id,intelligibility,severity\n"
        "spk01,7.5,6.0\n"
        "spk02,3.0,\n"  # spk03 intentionally missing
    )
    out = tmp_path_factory.mktemp("out")
    job = ExportJob(checkpoint=checkpoint, audio_dir=str(root),
                    scores_csv=str(root / "scores.csv"), out_dir=str(out), layer=4)
    manifest = export(job)
    return manifest, out


def test_exported_corpus_validates(exported):
    manifest, out = exported
    assert validate_corpus(manifest).all_ok
    # and through the downstream command line, end to end
    assert speechscore_cli(["validate", "--manifest", str(out / "manifest.csv")]) == 0


def test_frame_count_matches_duration(exported):
    manifest, out = exported
    by_speaker = {r.speaker_id: r for r in manifest.records}
    m = read_embedding(manifest.resolve(by_speaker["spk01"]))
    assert abs(m.frames - 10.0 * m.frame_rate_hz) <= 2


def test_dimension_is_encoder_width(exported):
    manifest, _ = exported
    for r in manifest.records:
        assert read_embedding(manifest.resolve(r)).dim == 1024


def test_frame_rate_from_conv_strides(checkpoint):
    from transformers import Wav2Vec2Config

    assert encoder_frame_rate(Wav2Vec2Config()) == 50.0  # 320-sample hop at 16 kHz


def test_scores_joined_missing_left_empty(exported):
    manifest, _ = exported
    by_speaker = {r.speaker_id: r for r in manifest.records}
    assert by_speaker["spk01"].intelligibility == 7.5
    assert by_speaker["spk01"].severity == 6.0
    assert by_speaker["spk02"].severity is None
    assert by_speaker["spk03"].intelligibility is None


def test_manifest_reloads(exported):
    _, out = exported
    manifest = load_manifest(out / "manifest.csv")
    assert len(manifest.records) == 3


def test_undecodable_audio_skipped_with_warning(checkpoint, tmp_path):
    write_tone(tmp_path / "spk01_a.wav", 1.0)
    (tmp_path / "spk99_bad.wav").write_bytes(b"not audio at all")
    job = ExportJob(checkpoint=checkpoint, audio_dir=str(tmp_path),
                    scores_csv=None, out_dir=str(tmp_path / "out"), layer=0)
    with pytest.warns(UserWarning, match="spk99_bad"):
        manifest = export(job)
    assert [r.speaker_id for r in manifest.records] == ["spk01"]


def test_layer_outside_depth_rejected(checkpoint, tmp_path):
    job = ExportJob(checkpoint=checkpoint, audio_dir=str(tmp_path),
                    scores_csv=None, out_dir=str(tmp_path / "out"), layer=24)
    with pytest.raises(ValueError, match="outside encoder depth"):
        export(job)


def test_decode_resamples_and_downmixes(tmp_path):
    write_tone(tmp_path / "x.wav", 2.0, rate=44100, stereo=True)
    wave = decode_audio(tmp_path / "x.wav")
    assert wave.ndim == 1
    assert abs(len(wave) - 32000) <= 1


def test_load_scores_requires_speaker_column(tmp_path):
    (tmp_path / "bad.csv").write_text("name,intelligibility\na,5\n")
    with pytest.raises(ValueError, match="speaker_id"):
        load_scores(tmp_path / "bad.csv")


def test_cli_export(checkpoint, tmp_path, capsys):
    from embexport.cli import run

    write_tone(tmp_path / "spk01_a.wav", 1.0)
    code = run(["export", "--checkpoint", checkpoint,
                "--audio-dir", str(tmp_path), "--layer", "2",
                "--out", str(tmp_path / "out")])
    assert code == 0
    assert "exported 1 utterances" in capsys.readouterr().out
    assert (tmp_path / "out" / "manifest.csv").exists()
