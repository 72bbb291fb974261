"""Synthetic-voice detection via vocoder reconstruction artifacts.

The pipeline: build a self-vocoded corpus from real recordings (every fake
differs from its real twin only by one vocoder's reconstruction artifacts),
train a raw-waveform detector whose shared encoder feeds both a real/fake
head and a vocoder-identification head, and evaluate with EER, DET tables,
confusion matrices, and a fixed degradation protocol.
"""

from .audio import (
    MelParams,
    MelSpectrogram,
    Waveform,
    degrade_roundtrip,
    fix_length,
    load_audio,
    mel_spectrogram,
    mix_noise_at_snr,
    resample,
    save_audio,
)
from .corpus import (
    AugmentPolicy,
    Manifest,
    SpeakerAllocation,
    UtteranceRecord,
    allocate_speakers,
    augment_for_eval,
    build_corpus,
    split_manifest,
)
from .detector import (
    DetectorModel,
    ModelConfig,
    init_model,
    load_checkpoint,
    save_checkpoint,
    tiny_config,
)
from .errors import (
    AudioFormatError,
    ConfigurationError,
    TrainingDivergedError,
    VocdetError,
    VocoderBackendError,
)
from .evaluation import (
    ConfusionMatrix,
    ScoreEntry,
    ScoreSet,
    compute_eer,
    confusion_matrix,
    det_curve,
    score_manifest,
)
from .training import TrainConfig, TrainState, joint_loss, run_lambda_ablation, train
from .vocoders import (
    VocoderBackend,
    VocoderRegistry,
    external_command_backend,
    griffin_lim_backend,
    self_vocode,
    spectrogram_difference,
    toy_artifact_backend,
)

__version__ = "0.1.0"
