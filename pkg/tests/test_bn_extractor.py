import numpy as np
import pytest

from crossvoice import autodiff as ad
from crossvoice import bn_extractor, corpus, dsp
from crossvoice.config import BnSection, OptimSection
from crossvoice.errors import DataError, InputError

SPEC = dsp.FrameSpec(512, 320, 16000)
ACFG = dsp.AnalyzerConfig(SPEC, min_period=40, max_period=240)
SECTION = BnSection(steps=800, batch_size=8, eval_every=100)


def render_pairs(n_speakers=8, n_utts=8, seed=11):
    pairs = []
    cfg = corpus.CorpusConfig()
    for si, spk in enumerate(corpus.pretrain_speakers(n_speakers, seed=seed)):
        for ui in range(n_utts):
            rng = np.random.default_rng(np.random.SeedSequence([seed, 1, si, ui]))
            ids = corpus._random_phone_string(rng, cfg)
            rendered = corpus.render_utterance(ids, spk, 16000, rng)
            feats = dsp.analyze(dsp.AudioBuffer(rendered.samples, 16000), ACFG)
            pairs.append((f"s{si:02d}u{ui:02d}", feats.matrix(240),
                          corpus.frame_labels(rendered, SPEC)))
    return pairs


@pytest.fixture(scope="module")
def trained():
    pairs = render_pairs()
    model, trace, accs = bn_extractor.train_bn_extractor(
        pairs, 12, SECTION, OptimSection(), 240, seed=1)
    return pairs, model, trace, accs


def test_training_reaches_target_accuracy(trained):
    pairs, model, _, accs = trained
    assert accs[-1][1] >= 0.9
    # validity floor: the same data is nearest-centroid separable
    x = np.concatenate([p[1] for p in pairs])
    y = np.concatenate([p[2] for p in pairs])
    perm = np.random.default_rng(0).permutation(len(x))
    cut = int(0.8 * len(x))
    assert corpus.nearest_centroid_frame_accuracy(
        x[perm[:cut]], y[perm[:cut]], x[perm[cut:]], y[perm[cut:]]) >= 0.8


def test_untrained_model_is_at_chance_level():
    pairs = render_pairs(n_speakers=4, n_utts=3)
    model = bn_extractor.BnExtractorModel(pairs[0][1].shape[1], 12, SECTION, seed=3)
    stacked = np.concatenate([p[1] for p in pairs])
    model.set_feature_stats(stacked.mean(axis=0), stacked.std(axis=0))
    acc = bn_extractor.holdout_accuracy(model, pairs)
    assert abs(acc - 1.0 / 12) <= 0.1


def test_same_seed_same_parameters():
    pairs = render_pairs(n_speakers=3, n_utts=3)
    section = BnSection(steps=60, batch_size=4, eval_every=50)
    m1, t1, _ = bn_extractor.train_bn_extractor(pairs, 12, section, OptimSection(),
                                                240, seed=7)
    m2, t2, _ = bn_extractor.train_bn_extractor(pairs, 12, section, OptimSection(),
                                                240, seed=7)
    assert t1 == t2
    for name, tensor in m1.parameters().items():
        assert np.array_equal(tensor.data, m2.parameters()[name].data)


def test_extract_bn_shape_and_determinism(trained):
    pairs, model, _, _ = trained
    audio = dsp.AudioBuffer(np.zeros(16000), 16000)
    rng = np.random.default_rng(0)
    speaker = corpus.prosody_speaker(0)
    rendered = corpus.render_utterance([0, 9, 3], speaker, 16000, rng)
    feats = dsp.analyze(dsp.AudioBuffer(rendered.samples, 16000), ACFG)
    a = bn_extractor.extract_bn(model, feats, 240)
    b = bn_extractor.extract_bn(model, feats, 240)
    assert len(a) == len(feats)
    assert a.bn_dim == model.bn_dim
    assert np.array_equal(a.frames, b.frames)


def test_extract_bn_rejects_dim_mismatch(trained):
    _, model, _, _ = trained
    bad = dsp.AcousticSeq(np.zeros((4, 30)), np.zeros(4), np.zeros(4), SPEC)
    with pytest.raises(InputError):
        bn_extractor.extract_bn(model, bad, 240)


def test_mismatched_labels_raise_data_error():
    pairs = [("u0", np.zeros((5, 20)), np.zeros(4, dtype=np.int64))]
    with pytest.raises(DataError, match="u0"):
        bn_extractor.train_bn_extractor(pairs, 12, SECTION, OptimSection(), 240, 1)


def test_empty_corpus_raises():
    with pytest.raises(DataError):
        bn_extractor.train_bn_extractor([], 12, SECTION, OptimSection(), 240, 1)


def test_softmax_probabilities_sum_to_one(trained):
    pairs, model, _, _ = trained
    _, logits = model.forward(pairs[0][1][None])
    probs = ad.softmax(logits, axis=-1).data
    assert np.max(np.abs(probs.sum(axis=-1) - 1.0)) < 1e-9


def test_bn_features_are_speaker_invariant_proxies(trained):
    """Same phones rendered by two speakers align; different phones do not."""
    _, model, _, _ = trained
    speakers = corpus.pretrain_speakers(6, seed=11)[:2]
    ids_a = [0, 9, 3, 10, 5]
    ids_b = [7, 11, 1, 8, 2]

    def bn_for(ids, speaker, render_seed):
        rng = np.random.default_rng(np.random.SeedSequence([render_seed]))
        rendered = corpus.render_utterance(ids, speaker, 16000, rng)
        feats = dsp.analyze(dsp.AudioBuffer(rendered.samples, 16000), ACFG)
        return bn_extractor.extract_bn(model, feats, 240).frames

    # identical render seed => identical durations => frame-aligned
    same_a = bn_for(ids_a, speakers[0], 42)
    same_b = bn_for(ids_a, speakers[1], 42)
    diff = bn_for(ids_b, speakers[0], 42)

    def mean_cos(x, y):
        n = min(len(x), len(y))
        x, y = x[:n], y[:n]
        num = (x * y).sum(axis=1)
        den = np.linalg.norm(x, axis=1) * np.linalg.norm(y, axis=1) + 1e-12
        return float((num / den).mean())

    assert mean_cos(same_a, same_b) > mean_cos(same_a, diff)


def test_within_phone_between_speaker_distance_smaller_than_between_phone(trained):
    pairs, model, _, _ = trained
    by_phone = {}
    for utt_id, feats_mat, labels in pairs[:12]:
        seq = dsp.AcousticSeq(feats_mat[:, :-2], feats_mat[:, -2] * 240,
                              feats_mat[:, -1], SPEC)
        bn = bn_extractor.extract_bn(model, seq, 240).frames
        for phone in np.unique(labels):
            by_phone.setdefault(int(phone), []).append(bn[labels == phone].mean(axis=0))
    centroids = {p: np.mean(v, axis=0) for p, v in by_phone.items() if len(v) >= 2}
    within = [np.linalg.norm(v - centroids[p])
              for p, vs in by_phone.items() if p in centroids for v in vs]
    phones = sorted(centroids)
    between = [np.linalg.norm(centroids[a] - centroids[b])
               for a in phones for b in phones if a < b]
    assert np.mean(within) < np.mean(between)
