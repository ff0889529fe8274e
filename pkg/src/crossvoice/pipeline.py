"""End-to-end orchestration: corpus generation, the three training stages,
text-free adaptation, synthesis, and the evaluation harness with its
speaker probe. Every stage is a pure function of (config, seed, inputs) and
writes deterministic metric logs and key = value reports.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import acoustic as acoustic_mod
from . import autodiff as ad
from . import bn_extractor as bn_mod
from . import corpus as corpus_mod
from . import dsp, prosody
from .autodiff import Tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .config import PipelineConfig, config_lines, fingerprint, full_config_hash
from .errors import CompatibilityError, DataError, InputError
from .optim import AdamConfig, AdamState
from .training import apply_gradients

DTYPES = {"float64": np.float64, "float32": np.float32}


@dataclass(frozen=True)
class Paths:
    out: Path

    @property
    def corpus(self) -> Path:
        return self.out / "corpus"

    @property
    def checkpoints(self) -> Path:
        return self.out / "checkpoints"

    @property
    def logs(self) -> Path:
        return self.out / "logs"

    @property
    def reports(self) -> Path:
        return self.out / "reports"

    @property
    def synth(self) -> Path:
        return self.out / "synth"

    def ensure(self) -> "Paths":
        for p in (self.out, self.corpus, self.checkpoints, self.logs,
                  self.reports, self.synth):
            p.mkdir(parents=True, exist_ok=True)
        return self


def paths_for(out_dir) -> Paths:
    return Paths(Path(out_dir)).ensure()


# ---------------------------------------------------------------------------
# logs and reports


def write_metric_log(path, trace: list) -> None:
    lines = [f"{step}\t{value!r}" for step, value in trace]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def write_report(path, values: dict) -> None:
    lines = []
    for key in sorted(values):
        v = values[key]
        lines.append(f"{key} = {v!r}" if isinstance(v, float) else f"{key} = {v}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_report(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if " = " in line:
            key, _, value = line.partition(" = ")
            out[key] = value
    return out


# ---------------------------------------------------------------------------
# checkpoint plumbing


def save_model(path, model, cfg: PipelineConfig, kind: str, extra_meta=None) -> None:
    entries = {f"param/{name}": t.data for name, t in model.parameters().items()}
    entries.update(model.buffers())
    meta = {"kind": kind, "config_fingerprint": fingerprint(cfg),
            "full_config_hash": full_config_hash(cfg)}
    meta.update(extra_meta or {})
    save_checkpoint(path, entries, meta)


def _load_into(model, path, cfg: PipelineConfig, kind: str):
    entries, meta = load_checkpoint(path)
    if meta.get("config_fingerprint") != fingerprint(cfg):
        raise CompatibilityError(
            f"{path}: checkpoint fingerprint {meta.get('config_fingerprint')!r} "
            f"does not match the current config {fingerprint(cfg)!r}")
    if meta.get("kind") != kind:
        raise CompatibilityError(f"{path}: expected a {kind!r} checkpoint, "
                                 f"found {meta.get('kind')!r}")
    dtype = DTYPES[cfg.dtype]
    params = model.parameters()
    for name, tensor in params.items():
        key = f"param/{name}"
        if key not in entries:
            raise CompatibilityError(f"{path}: missing parameter {name!r}")
        if entries[key].shape != tensor.data.shape:
            raise CompatibilityError(f"{path}: parameter {name!r} has shape "
                                     f"{entries[key].shape}, expected {tensor.data.shape}")
        tensor.data = entries[key].astype(dtype)
    for name in list(model.buffers()):
        if name in entries:
            setattr(model, name.split("/", 1)[1], entries[name])
    return model, meta


def load_bn_model(path, cfg: PipelineConfig):
    model = bn_mod.BnExtractorModel(cfg.dsp.acoustic_dim, _n_content_phones(),
                                    cfg.bn, cfg.seed, DTYPES[cfg.dtype])
    return _load_into(model, path, cfg, "bn_extractor")


def load_prosody_model(path, cfg: PipelineConfig, kind: str = "prosody"):
    out_dim = cfg.bn.bn_dim if kind == "prosody" else cfg.dsp.acoustic_dim
    model = prosody.ProsodyModel(cfg.prosody, _inventory_size(), out_dim,
                                 cfg.seed, DTYPES[cfg.dtype])
    return _load_into(model, path, cfg, kind)


def load_acoustic_model(path, cfg: PipelineConfig, kind: str = "acoustic"):
    model = acoustic_mod.AcousticModel(cfg.bn.bn_dim, cfg.dsp.acoustic_dim,
                                       cfg.acoustic, cfg.seed, DTYPES[cfg.dtype])
    return _load_into(model, path, cfg, kind)


def _n_content_phones() -> int:
    return len(corpus_mod.phone_inventory())


def _inventory_size() -> int:
    return len(corpus_mod.build_lexicon().inventory)


# ---------------------------------------------------------------------------
# feature extraction over manifests


def analyze_record(record: corpus_mod.UtteranceRecord,
                   analyzer: dsp.AnalyzerConfig) -> dsp.AcousticSeq:
    audio = dsp.wav_read(record.audio_path, expect_rate=analyzer.frame_spec.sample_rate)
    return dsp.analyze(audio, analyzer)


def bn_training_pairs(records, analyzer: dsp.AnalyzerConfig) -> list:
    pairs = []
    for r in records:
        if r.label_path is None:
            raise DataError(f"{r.utt_id}: frame labels required for BN training")
        feats = analyze_record(r, analyzer)
        labels = dsp.bncf_read(r.label_path)[:, 0]
        pairs.append((r.utt_id, feats.matrix(analyzer.max_period), labels))
    return pairs


def acoustic_training_pairs(records, bn_model, analyzer: dsp.AnalyzerConfig) -> list:
    pairs = []
    for r in records:
        feats = analyze_record(r, analyzer)
        bn = bn_mod.extract_bn(bn_model, feats, analyzer.max_period)
        pairs.append((r.utt_id, bn.frames, feats.matrix(analyzer.max_period)))
    return pairs


def prosody_training_pairs(records, bn_model, analyzer: dsp.AnalyzerConfig) -> list:
    pairs = []
    for r in records:
        feats = analyze_record(r, analyzer)
        bn = bn_mod.extract_bn(bn_model, feats, analyzer.max_period)
        pairs.append((r.utt_id, list(r.phoneme_ids), bn.frames))
    return pairs


def baseline_training_pairs(records, analyzer: dsp.AnalyzerConfig) -> list:
    """Audio-text pairs: phonemes in, acoustic features out (the baseline)."""
    return [(r.utt_id, list(r.phoneme_ids),
             analyze_record(r, analyzer).matrix(analyzer.max_period))
            for r in records]


def _manifest_hash(records) -> str:
    blob = "\n".join(r.utt_id for r in records).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# stages


def run_gen_corpus(cfg: PipelineConfig, out_dir) -> dict:
    paths = paths_for(out_dir)
    (paths.out / "config.txt").write_text("\n".join(config_lines(cfg)) + "\n")
    spec = cfg.dsp.analyzer().frame_spec
    return corpus_mod.generate_corpus(paths.corpus, cfg.corpus, spec, cfg.seed)


def run_train_bn(cfg: PipelineConfig, out_dir) -> Path:
    paths = paths_for(out_dir)
    analyzer = cfg.dsp.analyzer()
    records = corpus_mod.load_manifest(paths.corpus / "manifest_pretrain.tsv")
    pairs = bn_training_pairs(records, analyzer)
    model, trace, acc_trace = bn_mod.train_bn_extractor(
        pairs, _n_content_phones(), cfg.bn, cfg.optim, analyzer.max_period,
        cfg.seed, DTYPES[cfg.dtype])
    write_metric_log(paths.logs / "train_bn.log", trace)
    write_metric_log(paths.logs / "train_bn_accuracy.log", acc_trace)
    ckpt = paths.checkpoints / "bn.ckpt"
    save_model(ckpt, model, cfg, "bn_extractor",
               {"holdout_accuracy": acc_trace[-1][1], "steps": len(trace)})
    return ckpt


def run_train_prosody(cfg: PipelineConfig, out_dir) -> Path:
    paths = paths_for(out_dir)
    analyzer = cfg.dsp.analyzer()
    bn_model, _ = load_bn_model(paths.checkpoints / "bn.ckpt", cfg)
    records = corpus_mod.load_manifest(paths.corpus / "manifest_prosody.tsv")
    pairs = prosody_training_pairs(records, bn_model, analyzer)
    model = prosody.ProsodyModel(cfg.prosody, _inventory_size(), cfg.bn.bn_dim,
                                 cfg.seed, DTYPES[cfg.dtype])
    trace = prosody.train_prosody(model, pairs, cfg.prosody, cfg.optim, cfg.seed)
    write_metric_log(paths.logs / "train_prosody.log", trace)
    ckpt = paths.checkpoints / "prosody.ckpt"
    save_model(ckpt, model, cfg, "prosody", {"steps": len(trace)})
    return ckpt


def run_train_acoustic(cfg: PipelineConfig, out_dir) -> Path:
    paths = paths_for(out_dir)
    analyzer = cfg.dsp.analyzer()
    bn_model, _ = load_bn_model(paths.checkpoints / "bn.ckpt", cfg)
    records = corpus_mod.load_manifest(paths.corpus / "manifest_pretrain.tsv")
    train, hold = split_pretrain_records(records)
    pairs = acoustic_training_pairs(train, bn_model, analyzer)
    model = acoustic_mod.AcousticModel(cfg.bn.bn_dim, cfg.dsp.acoustic_dim,
                                       cfg.acoustic, cfg.seed, DTYPES[cfg.dtype])
    stacked = np.concatenate([p[2] for p in pairs])
    model.set_output_stats(stacked.mean(axis=0), stacked.std(axis=0))
    trace = acoustic_mod.pretrain_acoustic(model, pairs, cfg.acoustic, cfg.optim,
                                           cfg.seed)
    write_metric_log(paths.logs / "train_acoustic.log", trace)

    hold_pairs = acoustic_training_pairs(hold, bn_model, analyzer)
    hold_loss = float(np.mean([acoustic_mod.batch_loss(model, [p]) for p in hold_pairs]))
    mean_loss = acoustic_mod.mean_predictor_loss(hold_pairs, cfg.acoustic.loss)
    ckpt = paths.checkpoints / "acoustic.ckpt"
    save_model(ckpt, model, cfg, "acoustic",
               {"steps": len(trace), "holdout_loss": hold_loss,
                "mean_predictor_loss": mean_loss})
    return ckpt


def split_pretrain_records(records):
    """Held-out split for the acoustic stage: each speaker's last utterance."""
    last = {}
    for r in records:
        last[r.speaker_id] = r.utt_id
    hold = [r for r in records if last[r.speaker_id] == r.utt_id]
    train = [r for r in records if last[r.speaker_id] != r.utt_id]
    return train, hold


def target_records(cfg: PipelineConfig, paths: Paths, trial: int = 0):
    """Adaptation split for one target-speaker trial: (adapt, held-out)."""
    manifest = paths.corpus / ("manifest_target.tsv" if trial == 0
                               else f"manifest_target_trial{trial}.tsv")
    if not manifest.exists():
        corpus_mod.generate_target_set(paths.corpus, cfg.corpus,
                                       cfg.dsp.analyzer().frame_spec, cfg.seed,
                                       trial=trial)
    records = corpus_mod.load_manifest(manifest)
    n = cfg.eval.adapt_utts
    if len(records) <= n:
        raise DataError(f"target set has {len(records)} utterances; need more "
                        f"than eval.adapt_utts={n} to keep a held-out probe")
    return records[:n], records[n:]


def run_adapt(cfg: PipelineConfig, out_dir, trial: int = 0,
              n_utts: int | None = None) -> tuple[Path, acoustic_mod.AdaptationReport]:
    paths = paths_for(out_dir)
    analyzer = cfg.dsp.analyzer()
    bn_model, _ = load_bn_model(paths.checkpoints / "bn.ckpt", cfg)
    model, base_meta = load_acoustic_model(paths.checkpoints / "acoustic.ckpt", cfg)
    adapt_recs, hold_recs = target_records(cfg, paths, trial)
    if n_utts is not None:
        adapt_recs = adapt_recs[:n_utts]
    # the text-free contract: only audio flows into adaptation
    adapt_audio = [dsp.wav_read(r.audio_path, analyzer.frame_spec.sample_rate)
                   for r in adapt_recs]
    probe_audio = [dsp.wav_read(r.audio_path, analyzer.frame_spec.sample_rate)
                   for r in hold_recs]
    adapted, report = acoustic_mod.adapt_speaker(
        model, adapt_audio, bn_model, analyzer, cfg.acoustic, cfg.optim,
        cfg.seed + trial, probe_audio=probe_audio)
    suffix = "" if trial == 0 else f"_trial{trial}"
    ckpt = paths.checkpoints / f"acoustic_adapted{suffix}.ckpt"
    save_model(ckpt, adapted, cfg, "acoustic", {
        "adapted_from": fingerprint(cfg),
        "base_checkpoint_kind": base_meta.get("kind"),
        "adaptation_steps": report.steps_run,
        "adaptation_utterances": _manifest_hash(adapt_recs),
        "trial": trial,
    })
    write_report(paths.reports / f"adaptation{suffix}.txt", {
        "steps_run": report.steps_run,
        "n_utterances": report.n_utterances,
        "pre_distance": report.pre_distance,
        "post_distance": report.post_distance,
        "parameter_change_norm": report.parameter_change_norm,
        "strict_decrease": report.post_distance < report.pre_distance,
    })
    return ckpt, report


def run_synth(cfg: PipelineConfig, out_dir, text: str, name: str = "synth",
              use_adapted: bool = True) -> dict:
    paths = paths_for(out_dir)
    analyzer = cfg.dsp.analyzer()
    lexicon = corpus_mod.build_lexicon()
    ids = corpus_mod.g2p(text, lexicon)
    if not ids:
        raise InputError("empty phoneme sequence after g2p")
    prosody_model, _ = load_prosody_model(paths.checkpoints / "prosody.ckpt", cfg)
    acoustic_path = paths.checkpoints / "acoustic_adapted.ckpt"
    if not (use_adapted and acoustic_path.exists()):
        acoustic_path = paths.checkpoints / "acoustic.ckpt"
    acoustic_model, _ = load_acoustic_model(acoustic_path, cfg)

    bn_frames, alignment, truncated = prosody.synthesize_frames(
        prosody_model, prosody.PhonemeSeq(ids), cfg.prosody.max_frames)
    bn = bn_mod.BnSeq(bn_frames) if len(bn_frames) else bn_mod.BnSeq(
        np.zeros((0, cfg.bn.bn_dim)))
    features = acoustic_mod.acoustic_forward(acoustic_model, bn,
                                             analyzer.frame_spec,
                                             analyzer.max_period)
    audio = dsp.synthesize(features, analyzer)
    wav_path = paths.synth / f"{name}.wav"
    dsp.wav_write(wav_path, audio)
    dsp.bncf_write(paths.synth / f"{name}_bn.bncf", bn_frames)
    dsp.bncf_write(paths.synth / f"{name}_features.bncf",
                   features.matrix(analyzer.max_period))
    dsp.bncf_write(paths.synth / f"{name}_alignment.bncf", alignment)
    monotonicity = prosody.alignment_monotonicity(alignment)
    report = {
        "text": text,
        "phonemes": " ".join(str(i) for i in ids),
        "acoustic_checkpoint": acoustic_path.name,
        "frames": len(bn_frames),
        "truncated": truncated,
        "alignment_monotonicity": monotonicity,
        "low_confidence_alignment": monotonicity < 0.9,
        "wav": wav_path.name,
        "analyzed_frame_count": len(dsp.analyze(audio, analyzer)),
    }
    write_report(paths.synth / f"{name}_report.txt", report)
    return report


def run_baseline(cfg: PipelineConfig, out_dir) -> Path:
    """Baseline system (audio-text pairs): phonemes -> acoustic features,
    trained on the multi-speaker corpus."""
    paths = paths_for(out_dir)
    analyzer = cfg.dsp.analyzer()
    records = corpus_mod.load_manifest(paths.corpus / "manifest_pretrain.tsv")
    train, _ = split_pretrain_records(records)
    pairs = baseline_training_pairs(train, analyzer)
    model = prosody.ProsodyModel(cfg.prosody, _inventory_size(),
                                 cfg.dsp.acoustic_dim, cfg.seed, DTYPES[cfg.dtype])
    stacked = np.concatenate([p[2] for p in pairs])
    model.set_output_stats(stacked.mean(axis=0), stacked.std(axis=0))
    trace = prosody.train_baseline(model, pairs, cfg.prosody, cfg.optim, cfg.seed,
                                   schedule=cfg.baseline.schedule,
                                   steps=cfg.baseline.steps)
    write_metric_log(paths.logs / "train_baseline.log", trace)
    ckpt = paths.checkpoints / "baseline.ckpt"
    save_model(ckpt, model, cfg, "baseline", {"steps": len(trace)})
    return ckpt


# ---------------------------------------------------------------------------
# speaker probe


def utterance_stats(seq: dsp.AcousticSeq, max_period: int,
                    sample_rate: int = 16000) -> np.ndarray:
    """Utterance-level summary: BFCC mean/std plus robust pitch statistics
    (median and IQR of log f0 over strongly voiced frames)."""
    mat = seq.matrix(max_period)
    bfcc = mat[:, :-2]
    strong = mat[:, -1] > 0.75
    if strong.any():
        periods = np.maximum(mat[strong, -2] * max_period, 1.0)
        log_f0 = np.log(sample_rate / periods)
        med = float(np.median(log_f0))
        spread = float(np.percentile(log_f0, 75) - np.percentile(log_f0, 25))
    else:
        med = spread = 0.0
    corr = float(mat[:, -1].mean())
    # spectral slope: least-squares line over the utterance-mean band log
    # energies (inverse DCT of the mean cepstrum); phone-robust tilt cue
    from scipy.fft import idct
    band_means = idct(bfcc.mean(axis=0), type=2, norm="ortho")
    idx = np.arange(len(band_means))
    slope = float(np.polyfit(idx, band_means, 1)[0]) if len(band_means) > 1 else 0.0
    return np.concatenate([bfcc.mean(axis=0), bfcc.std(axis=0),
                           [med, spread, corr, slope]])


class SpeakerProbe:
    """Small one-hidden-layer classifier on utterance statistics."""

    def __init__(self, speaker_ids: list, dim: int, seed: int, hidden: int = 48):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 41]))
        self.speaker_ids = list(speaker_ids)
        n_out = len(speaker_ids)
        lim1 = np.sqrt(6.0 / (dim + hidden))
        lim2 = np.sqrt(6.0 / (hidden + n_out))
        self.w1 = Tensor(rng.uniform(-lim1, lim1, size=(dim, hidden)),
                         requires_grad=True)
        self.b1 = Tensor(np.zeros(hidden), requires_grad=True)
        self.w2 = Tensor(rng.uniform(-lim2, lim2, size=(hidden, n_out)),
                         requires_grad=True)
        self.b2 = Tensor(np.zeros(n_out), requires_grad=True)
        self.mean = np.zeros(dim)
        self.std = np.ones(dim)

    def _logits(self, feats: np.ndarray) -> Tensor:
        x = Tensor((feats - self.mean) / self.std)
        hidden = ad.tanh(ad.add(ad.matmul(x, self.w1), self.b1))
        return ad.add(ad.matmul(hidden, self.w2), self.b2)

    def fit(self, feats: np.ndarray, labels: np.ndarray, steps: int,
            optim_cfg) -> None:
        self.mean = feats.mean(axis=0)
        self.std = np.maximum(feats.std(axis=0), 1e-6)
        onehot = np.eye(len(self.speaker_ids))[labels]
        params = {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}
        state = AdamState()
        for step in range(steps):
            logits = self._logits(feats)
            logp = ad.log(ad.add(ad.softmax(logits, axis=1), 1e-12))
            loss = ad.mul(ad.sum_(ad.mul(logp, onehot)), -1.0 / len(labels))
            loss.backward()
            apply_gradients(params, state, optim_cfg, step)

    def classify(self, feats: np.ndarray) -> list:
        logits = self._logits(np.atleast_2d(feats)).data
        return [self.speaker_ids[i] for i in np.argmax(logits, axis=1)]

    def accuracy(self, feats: np.ndarray, speaker_ids: list) -> float:
        pred = self.classify(feats)
        return float(np.mean([p == t for p, t in zip(pred, speaker_ids)]))


def train_speaker_probe(cfg: PipelineConfig, paths: Paths, trial: int = 0):
    """Fit the probe on real features of the pretraining speakers plus the
    trial's target speaker; returns (probe, validity accuracy on held-out
    real utterances)."""
    analyzer = cfg.dsp.analyzer()
    records = corpus_mod.load_manifest(paths.corpus / "manifest_pretrain.tsv")
    adapt_recs, hold_recs = target_records(cfg, paths, trial)
    train_feats, train_labels, hold_feats, hold_labels = [], [], [], []
    by_speaker = {}
    for r in records + adapt_recs + hold_recs:
        by_speaker.setdefault(r.speaker_id, []).append(r)
    speaker_ids = sorted(by_speaker)
    for sid, recs in by_speaker.items():
        cut = max(1, int(round(0.75 * len(recs))))
        for i, r in enumerate(recs):
            stats = utterance_stats(analyze_record(r, analyzer),
                                    analyzer.max_period,
                                    analyzer.frame_spec.sample_rate)
            if i < cut:
                train_feats.append(stats)
                train_labels.append(speaker_ids.index(sid))
            else:
                hold_feats.append(stats)
                hold_labels.append(sid)
    probe = SpeakerProbe(speaker_ids, len(train_feats[0]), cfg.seed)
    schedule_cfg = AdamConfig(1e-2, 1e-3, cfg.eval.probe_steps, cfg.optim.beta1,
                              cfg.optim.beta2, cfg.optim.eps)
    probe.fit(np.array(train_feats), np.array(train_labels),
              cfg.eval.probe_steps, schedule_cfg)
    validity = probe.accuracy(np.array(hold_feats), hold_labels)
    return probe, validity


def probe_reconstructions(probe: SpeakerProbe, model, bn_model,
                          records, cfg: PipelineConfig) -> float:
    """Fraction of text-free reconstructions classified as the target."""
    analyzer = cfg.dsp.analyzer()
    hits = 0
    for r in records:
        feats = analyze_record(r, analyzer)
        bn = bn_mod.extract_bn(bn_model, feats, analyzer.max_period)
        recon = acoustic_mod.acoustic_forward(model, bn, analyzer.frame_spec,
                                              analyzer.max_period)
        stats = utterance_stats(recon, analyzer.max_period,
                                analyzer.frame_spec.sample_rate)
        hits += int(probe.classify(stats)[0] == "spk_target")
    return hits / max(len(records), 1)


# ---------------------------------------------------------------------------
# evaluation harness


def run_eval(cfg: PipelineConfig, out_dir, trials: int | None = None,
             sweep: bool = False, monotonicity_sample: int | None = None) -> dict:
    paths = paths_for(out_dir)
    analyzer = cfg.dsp.analyzer()
    report: dict = {}

    bn_model, _ = load_bn_model(paths.checkpoints / "bn.ckpt", cfg)
    base_model, base_meta = load_acoustic_model(paths.checkpoints / "acoustic.ckpt", cfg)
    report["acoustic.holdout_loss"] = float(base_meta.get("holdout_loss", np.nan))
    report["acoustic.mean_predictor_loss"] = float(
        base_meta.get("mean_predictor_loss", np.nan))
    report["acoustic.holdout_ratio"] = (
        report["acoustic.holdout_loss"] / report["acoustic.mean_predictor_loss"])

    # prosody alignment diagnostics over training sentences
    prosody_path = paths.checkpoints / "prosody.ckpt"
    if prosody_path.exists():
        prosody_model, _ = load_prosody_model(prosody_path, cfg)
        records = corpus_mod.load_manifest(paths.corpus / "manifest_prosody.tsv")
        if monotonicity_sample:
            records = records[:monotonicity_sample]
        scores, terminated = [], 0
        for r in records:
            _, alignment, truncated = prosody.synthesize_frames(
                prosody_model, prosody.PhonemeSeq(list(r.phoneme_ids)),
                cfg.prosody.max_frames)
            scores.append(prosody.alignment_monotonicity(alignment))
            terminated += int(not truncated)
        scores = np.array(scores)
        report["prosody.sentences"] = len(scores)
        report["prosody.monotonicity_mean"] = float(scores.mean())
        report["prosody.monotonic_fraction"] = float((scores >= 0.9).mean())
        report["prosody.terminated_fraction"] = terminated / len(scores)

    # adaptation trials: strict L1 decrease + probe ranking per trial
    n_trials = cfg.eval.adapt_trials if trials is None else trials
    decreases = rank_wins = 0
    for trial in range(n_trials):
        _, adapt_report = run_adapt(cfg, out_dir, trial=trial)
        suffix = "" if trial == 0 else f"_trial{trial}"
        adapted_model, _ = load_acoustic_model(
            paths.checkpoints / f"acoustic_adapted{suffix}.ckpt", cfg)
        probe, validity = train_speaker_probe(cfg, paths, trial)
        _, hold_recs = target_records(cfg, paths, trial)
        acc_adapted = probe_reconstructions(probe, adapted_model, bn_model,
                                            hold_recs, cfg)
        acc_base = probe_reconstructions(probe, base_model, bn_model,
                                         hold_recs, cfg)
        decreased = adapt_report.post_distance < adapt_report.pre_distance
        decreases += int(decreased)
        rank_wins += int(acc_adapted > acc_base)
        report[f"trial{trial}.pre_distance"] = adapt_report.pre_distance
        report[f"trial{trial}.post_distance"] = adapt_report.post_distance
        report[f"trial{trial}.strict_decrease"] = decreased
        report[f"trial{trial}.probe_validity"] = validity
        report[f"trial{trial}.probe_valid"] = validity >= cfg.eval.probe_min_accuracy
        report[f"trial{trial}.probe_adapted"] = acc_adapted
        report[f"trial{trial}.probe_unadapted"] = acc_base
        report[f"trial{trial}.probe_ranks_adapted_higher"] = acc_adapted > acc_base
    report["adaptation.trials"] = n_trials
    report["adaptation.strict_decreases"] = decreases
    report["adaptation.probe_rank_wins"] = rank_wins

    write_report(paths.reports / "eval.txt", report)
    if sweep:
        report.update(run_sweep(cfg, out_dir))
    return report


def run_sweep(cfg: PipelineConfig, out_dir) -> dict:
    """Side-by-side adaptation-budget sweep: the text-free approach vs the
    audio-text baseline at each budget in eval.sweep_sizes."""
    paths = paths_for(out_dir)
    analyzer = cfg.dsp.analyzer()
    baseline_path = paths.checkpoints / "baseline.ckpt"
    if not baseline_path.exists():
        raise DataError(f"{baseline_path} missing; run the baseline command first")
    bn_model, _ = load_bn_model(paths.checkpoints / "bn.ckpt", cfg)
    base_model, _ = load_acoustic_model(paths.checkpoints / "acoustic.ckpt", cfg)
    adapt_recs, hold_recs = target_records(cfg, paths, trial=0)
    probe, validity = train_speaker_probe(cfg, paths, trial=0)

    # target-speaker references for the held-out texts
    refs = {}
    for r in hold_recs:
        refs[r.utt_id] = utterance_stats(analyze_record(r, analyzer),
                                         analyzer.max_period,
                                         analyzer.frame_spec.sample_rate)

    prosody_model, _ = load_prosody_model(paths.checkpoints / "prosody.ckpt", cfg)
    report = {"sweep.sizes": ",".join(str(n) for n in cfg.eval.sweep_sizes),
              "sweep.probe_validity": validity}
    for n in cfg.eval.sweep_sizes:
        n_used = min(n, len(adapt_recs))
        # proposed: text-free adaptation on n utterances
        audio = [dsp.wav_read(r.audio_path, analyzer.frame_spec.sample_rate)
                 for r in adapt_recs[:n_used]]
        probe_audio = [dsp.wav_read(r.audio_path, analyzer.frame_spec.sample_rate)
                       for r in hold_recs]
        adapted, adapt_report = acoustic_mod.adapt_speaker(
            base_model, audio, bn_model, analyzer, cfg.acoustic, cfg.optim,
            cfg.seed + 100 + n, probe_audio=probe_audio)
        # baseline: fine-tune on n audio-text pairs
        baseline_model, _ = load_prosody_model(baseline_path, cfg, "baseline")
        ft_pairs = baseline_training_pairs(adapt_recs[:n_used], analyzer)
        prosody.finetune(baseline_model, ft_pairs, cfg.prosody, cfg.optim,
                         cfg.seed + 200 + n, cfg.baseline.finetune_schedule,
                         cfg.baseline.finetune_steps)
        # both systems synthesize the held-out texts; compare to references
        hits_p = hits_b = 0
        dist_p, dist_b = [], []
        for r in hold_recs:
            ids = prosody.PhonemeSeq(list(r.phoneme_ids))
            bn_frames, _, _ = prosody.synthesize_frames(prosody_model, ids,
                                                        cfg.prosody.max_frames)
            if len(bn_frames):
                feats = acoustic_mod.acoustic_forward(
                    adapted, bn_mod.BnSeq(bn_frames), analyzer.frame_spec,
                    analyzer.max_period)
                stats = utterance_stats(feats, analyzer.max_period,
                                        analyzer.frame_spec.sample_rate)
                hits_p += int(probe.classify(stats)[0] == "spk_target")
                dist_p.append(np.abs(stats[:cfg.dsp.n_bfcc]
                                     - refs[r.utt_id][:cfg.dsp.n_bfcc]).mean())
            b_frames, _, _ = prosody.synthesize_frames(baseline_model, ids,
                                                       cfg.prosody.max_frames)
            if len(b_frames):
                b_feats = dsp.AcousticSeq.from_matrix(b_frames, analyzer.frame_spec,
                                                      analyzer.max_period)
                stats = utterance_stats(b_feats, analyzer.max_period,
                                        analyzer.frame_spec.sample_rate)
                hits_b += int(probe.classify(stats)[0] == "spk_target")
                dist_b.append(np.abs(stats[:cfg.dsp.n_bfcc]
                                     - refs[r.utt_id][:cfg.dsp.n_bfcc]).mean())
        n_hold = len(hold_recs)
        report[f"sweep.n{n}.proposed.recon_pre"] = adapt_report.pre_distance
        report[f"sweep.n{n}.proposed.recon_post"] = adapt_report.post_distance
        report[f"sweep.n{n}.proposed.probe_accuracy"] = hits_p / n_hold
        report[f"sweep.n{n}.proposed.bfcc_distance"] = float(np.mean(dist_p)) if dist_p else float("nan")
        report[f"sweep.n{n}.baseline.probe_accuracy"] = hits_b / n_hold
        report[f"sweep.n{n}.baseline.bfcc_distance"] = float(np.mean(dist_b)) if dist_b else float("nan")
    write_report(paths_for(out_dir).reports / "sweep.txt", report)
    return report
