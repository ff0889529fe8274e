import hashlib
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossvoice import corpus, dsp
from crossvoice.errors import ConfigError, DataError, InputError

SPEC = dsp.FrameSpec(512, 320, 16000)
SMALL = corpus.CorpusConfig(n_speakers=2, n_utts_per_speaker=2, n_prosody_utts=2,
                            n_target_utts=2)


def dir_digest(root: Path) -> str:
    h = hashlib.sha256()
    for path in sorted(root.rglob("*")):
        if path.is_file():
            h.update(path.relative_to(root).as_posix().encode())
            h.update(path.read_bytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# generation


def test_same_seed_generates_byte_identical_corpus(tmp_path):
    corpus.generate_corpus(tmp_path / "a", SMALL, SPEC, seed=5)
    corpus.generate_corpus(tmp_path / "b", SMALL, SPEC, seed=5)
    assert dir_digest(tmp_path / "a") == dir_digest(tmp_path / "b")
    corpus.generate_corpus(tmp_path / "c", SMALL, SPEC, seed=6)
    assert dir_digest(tmp_path / "a") != dir_digest(tmp_path / "c")


def test_record_counts_match_config(tmp_path):
    cfg = corpus.CorpusConfig(n_speakers=3, n_utts_per_speaker=4, n_prosody_utts=5,
                              n_target_utts=2)
    manifests = corpus.generate_corpus(tmp_path, cfg, SPEC, seed=1)
    assert len(corpus.load_manifest(manifests["pretrain"])) == 12
    assert len(corpus.load_manifest(manifests["prosody"])) == 5
    assert len(corpus.load_manifest(manifests["target"])) == 2


def test_labels_match_analyze_frame_count(tmp_path):
    manifests = corpus.generate_corpus(tmp_path, SMALL, SPEC, seed=2)
    acfg = dsp.AnalyzerConfig(SPEC, min_period=40, max_period=240)
    for record in corpus.load_manifest(manifests["pretrain"]):
        audio = dsp.wav_read(record.audio_path, expect_rate=16000)
        labels = dsp.bncf_read(record.label_path)
        assert labels.shape[0] == len(dsp.analyze(audio, acfg))


@given(window=st.sampled_from([320, 400, 512, 640]),
       hop=st.sampled_from([160, 200, 320]),
       seed=st.integers(0, 1000))
@settings(max_examples=25, deadline=None)
def test_frame_labels_match_count_formula_across_specs(window, hop, seed):
    spec = dsp.FrameSpec(window, hop, 16000)
    rng = np.random.default_rng(seed)
    speaker = corpus.prosody_speaker(seed)
    ids = corpus._random_phone_string(rng, corpus.CorpusConfig())
    rendered = corpus.render_utterance(ids, speaker, 16000, rng)
    labels = corpus.frame_labels(rendered, spec)
    assert len(labels) == spec.n_frames(len(rendered.samples))
    assert set(labels.tolist()) <= set(rendered.phone_ids)


def test_pitch_tracks_profile_f0_within_ten_percent():
    phones = corpus.phone_inventory()
    acfg = dsp.AnalyzerConfig(SPEC, min_period=40, max_period=240)
    for trial in range(3):
        speaker = corpus.pretrain_speakers(20, seed=40 + trial)[trial * 7]
        rng = np.random.default_rng(trial)
        ids = corpus._random_phone_string(rng, corpus.CorpusConfig())
        rendered = corpus.render_utterance(ids, speaker, 16000, rng)
        feats = dsp.analyze(dsp.AudioBuffer(rendered.samples, 16000), acfg)
        checked = 0
        for i in range(len(feats)):
            start, end = i * SPEC.hop_len, i * SPEC.hop_len + SPEC.window_len
            for pid, (s0, s1) in zip(rendered.phone_ids, rendered.phone_spans):
                if start >= s0 and end <= s1 and phones[pid].voiced:
                    f0_true = rendered.f0_track[start:end].mean()
                    assert feats.pitch_period[i] > 0
                    f0_est = 16000.0 / feats.pitch_period[i]
                    assert abs(f0_est - f0_true) / f0_true <= 0.10
                    checked += 1
        assert checked > 0


def test_speaker_profile_validation():
    with pytest.raises(ConfigError):
        corpus.SpeakerProfile("x", -5.0, 10.0, 0.0, 1.0)
    with pytest.raises(ConfigError):
        corpus.SpeakerProfile("x", 200.0, 10.0, 0.0, 1.5)


def test_target_speaker_is_off_the_pretrain_grid():
    for seed in range(5):
        target = corpus.target_speaker(seed)
        grid = corpus.pretrain_speakers(20, seed)
        gap = min(abs(target.f0_base - s.f0_base) for s in grid)
        assert gap > 10.0


def test_phone_separability_floor():
    acfg = dsp.AnalyzerConfig(SPEC, min_period=40, max_period=240)
    feats, labels = [], []
    for si, speaker in enumerate(corpus.pretrain_speakers(10, seed=3)):
        for ui in range(3):
            rng = np.random.default_rng(np.random.SeedSequence([3, 1, si, ui]))
            ids = corpus._random_phone_string(rng, corpus.CorpusConfig())
            rendered = corpus.render_utterance(ids, speaker, 16000, rng)
            feats.append(dsp.analyze(
                dsp.AudioBuffer(rendered.samples, 16000), acfg).matrix(240))
            labels.append(corpus.frame_labels(rendered, SPEC))
    x = np.concatenate(feats)
    y = np.concatenate(labels)
    perm = np.random.default_rng(0).permutation(len(x))
    cut = int(0.8 * len(x))
    acc = corpus.nearest_centroid_frame_accuracy(
        x[perm[:cut]], y[perm[:cut]], x[perm[cut:]], y[perm[cut:]])
    assert acc >= 0.8


# ---------------------------------------------------------------------------
# g2p


def test_g2p_empty_string():
    assert corpus.g2p("", corpus.build_lexicon()) == []


def test_g2p_boundary_insertion():
    lex = corpus.Lexicon({"ba": (0, 1)}, ("b", "a", "#"), boundary_id=2)
    assert corpus.g2p("ba ba", lex, boundary=True) == [0, 1, 2, 0, 1]
    assert corpus.g2p("ba ba", lex, boundary=False) == [0, 1, 0, 1]


def test_g2p_three_token_expansion_matches_lexicon():
    lex = corpus.build_lexicon()
    text = "ssaa iy ffuw"
    want = list(lex.words["ssaa"]) + list(lex.words["iy"]) + list(lex.words["ffuw"])
    assert corpus.g2p(text, lex) == want


def test_g2p_unknown_token():
    with pytest.raises(InputError, match="zz"):
        corpus.g2p("aa zz", corpus.build_lexicon())


def test_lexicon_rejects_out_of_inventory():
    with pytest.raises(ConfigError):
        corpus.Lexicon({"x": (0, 9)}, ("a", "b"), boundary_id=1)


# ---------------------------------------------------------------------------
# manifests and batching


def test_manifest_round_trip(tmp_path):
    manifests = corpus.generate_corpus(tmp_path, SMALL, SPEC, seed=9)
    records = corpus.load_manifest(manifests["pretrain"])
    assert all(r.audio_path.exists() for r in records)
    assert all(r.label_path.exists() for r in records)
    assert records[0].phoneme_ids


def test_manifest_missing_wav_names_path(tmp_path):
    manifests = corpus.generate_corpus(tmp_path, SMALL, SPEC, seed=9)
    records = corpus.load_manifest(manifests["pretrain"])
    records[0].audio_path.unlink()
    with pytest.raises(DataError, match=records[0].audio_path.name):
        corpus.load_manifest(manifests["pretrain"])


def test_manifest_malformed_line_reports_line_number(tmp_path):
    path = tmp_path / "m.tsv"
    path.write_text("one\tfield missing\n")
    with pytest.raises(DataError, match=":1:"):
        corpus.load_manifest(path)


def _dummy_records(n):
    return [corpus.UtteranceRecord(f"u{i:02d}", "s", (1,), Path("/dev/null"))
            for i in range(n)]


def test_batch_sizes_include_final_short_batch():
    batches = list(corpus.iterate_batches(_dummy_records(10), 4, seed=0, n_epochs=1))
    assert [len(b) for b in batches] == [4, 4, 2]


def test_batch_order_is_seed_stable():
    records = _dummy_records(10)
    a = [[r.utt_id for r in b] for b in corpus.iterate_batches(records, 3, 7, n_epochs=2)]
    b = [[r.utt_id for r in b] for b in corpus.iterate_batches(records, 3, 7, n_epochs=2)]
    c = [[r.utt_id for r in b] for b in corpus.iterate_batches(records, 3, 8, n_epochs=2)]
    assert a == b
    assert a != c


def test_batches_are_sorted_by_utt_id_internally():
    for batch in corpus.iterate_batches(_dummy_records(9), 4, seed=1, n_epochs=1):
        ids = [r.utt_id for r in batch]
        assert ids == sorted(ids)
