"""Train the full three-phase pipeline on a miniature corpus (about a
minute), then decode a test utterance both offline and streamed.

The desk-scale defaults live in TrainConfig / CorpusSizes; this demo shrinks
everything so it runs quickly while exercising every phase.
"""

import numpy as np

from streamslu import data, decoder, encoder, training

params = data.GeneratorParams(n_intents=6, n_train_speakers=4,
                              n_val_speakers=2, n_test_speakers=2)
sizes = data.CorpusSizes(s1_train=240, s1_val=36, s1_test=48, multi_scale=1.0,
                         char_train=120, char_val=24, char_test=24)
corpora = data.build_corpora(seed=7, sizes=sizes, params=params)

cfg = training.TrainConfig(seed=7, mode="full", train_split="S1",
                           lr=1e-3, asr_epochs=8, ce_epochs=6, ctc_epochs=20,
                           patience=6, hidden_dim=24, proj_dim=12,
                           head_hidden=12)
print(f"training mode={cfg.mode} on S1 ({sizes.s1_train} utterances) ...")
result = training.run_pipeline(cfg, corpora)
for phase in ("asr", "ce", "ctc"):
    rows = [r for r in result.log if r.phase == phase]
    print(f"  {phase}: {len(rows)} epochs, last loss {rows[-1].train_loss:.3f}, "
          f"last val acc {rows[-1].val_accuracy:.2f}")

model = result.model
test = corpora["S1"]["test"].utterances
acc = training.sequence_accuracy_on(model, test)
print(f"\nS1 test sequence accuracy: {acc:.3f}")

# Decode one utterance online, chunk by chunk.
utt = test[0]
geometry = decoder.FrameGeometry.from_config(model.config)
enc_state = encoder.new_stream(model)
dec_state = decoder.DecoderState()
print(f"\nstreaming utterance with intents {utt.intent_labels} "
      f"(boundaries {utt.boundaries_ms} ms):")


def consume(rows):
    for row in rows:
        step = dec_state.frame_index
        fired, _ = decoder.greedy_step(row, dec_state, model.config.blank_index)
        if fired is not None:
            print(f"  step {step}: intent {fired} at {geometry.emit_ms(step):.0f} ms")


for start in range(0, utt.features.shape[0], 20):
    consume(encoder.stream_push(model, enc_state, utt.features[start:start + 20]))
consume(encoder.stream_close(model, enc_state))

offline = decoder.decode_offline(encoder.forward(model, utt.features),
                                 model.config.blank_index)
print(f"offline decode agrees: "
      f"{(dec_state.emitted, dec_state.emitted_frames) == offline}")
