"""The 32-bit training switch: models built under dtype=float32 keep their
parameters, activations and updates in float32."""

import numpy as np

from crossvoice import acoustic, prosody
from crossvoice.config import (AcousticSection, OptimSection, ProsodySection,
                               ScheduleSection)


def test_acoustic_float32_training_stays_float32():
    section = AcousticSection(prenet=(8, 6), bank_k=2, channels=4, proj=6,
                              highways=1, gru=4, steps=5, batch_size=2,
                              schedule=ScheduleSection(1e-3, 1e-3, 5))
    model = acoustic.AcousticModel(4, 6, section, seed=0, dtype=np.float32)
    assert all(t.data.dtype == np.float32 for t in model.parameters().values())
    out = model.forward(np.zeros((1, 5, 4), dtype=np.float32))
    assert out.data.dtype == np.float32
    rng = np.random.default_rng(0)
    pairs = [(f"u{i}", rng.standard_normal((5, 4)), rng.standard_normal((5, 6)))
             for i in range(3)]
    acoustic.pretrain_acoustic(model, pairs, section, OptimSection(), seed=0)
    assert all(t.data.dtype == np.float32 for t in model.parameters().values())


def test_prosody_float32_forward_and_step():
    section = ProsodySection(emb_dim=6, enc_conv_layers=1, enc_conv_width=3,
                             d_enc=6, d_dec=8, prenet=(6, 6), att_dim=6,
                             att_filters=2, att_kernel=3, steps=3, batch_size=2,
                             schedule=ScheduleSection(1e-3, 1e-3, 3))
    model = prosody.ProsodyModel(section, 13, 4, seed=0, dtype=np.float32)
    loss = prosody.teacher_forced_loss(
        model, [("u0", [1, 2], np.zeros((4, 4)))], None, 0.1)
    assert loss.data.dtype == np.float32
    rng = np.random.default_rng(1)
    pairs = [("u0", [1, 2, 3], rng.standard_normal((5, 4)))]
    prosody.train_prosody(model, pairs, section, OptimSection(), seed=0)
    assert all(t.data.dtype == np.float32 for t in model.parameters().values())
