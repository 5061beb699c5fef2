"""Streaming multi-intent recognition from feature sequences.

A desk-scale pipeline: a unidirectional LSTMP encoder with frame stacking
and time reduction, trained under an alignment-free lattice loss with
two-stage pre-training, decoded online by a greedy streaming decoder, and
evaluated for exact-sequence accuracy and early-spotting behavior.
"""

from . import autodiff, ctc, data, decoder, encoder, evaluation, training
from .ctc import CtcInfeasibleError, CtcResult, ctc_loss, ctc_loss_bruteforce
from .data import CorpusSizes, Dataset, GeneratorParams, Utterance, build_corpora
from .decoder import DecoderState, FrameGeometry, SpottingEvent, decode_offline
from .encoder import (
    EncoderConfig,
    EncoderModel,
    forward,
    init_model,
    load_checkpoint,
    new_stream,
    save_checkpoint,
    stream_close,
    stream_push,
)
from .evaluation import early_spotting_report, sequence_accuracy
from .training import AdamW, TrainConfig, run_pipeline

__version__ = "0.1.0"
