"""Noisy-speech emotion classification with from-scratch gated recurrent nets.

The pipeline: EMO-DB ingestion -> optional noise mixing at a target SNR ->
13-coefficient MFCC features -> RNN/LSTM/GRU classifiers trained with
per-sequence SGD and BPTT -> sweep and runtime-comparison harness.
"""

from .cells import (
    CellGradients,
    GruParams,
    LstmParams,
    RnnParams,
    bptt_backward,
    grad_check,
    gru_step,
    init_params,
    load_params,
    lstm_step,
    param_count,
    readout_param_count,
    rnn_step,
    save_params,
    unroll_forward,
)
from .corpus import (
    EMODB_INVENTORY,
    LETTER_TO_LABEL,
    NOISE_KINDS,
    EmotionLabel,
    Manifest,
    ManifestEntry,
    NoiseRecording,
    Utterance,
    build_manifest,
    decode_emodb_label,
    load_noise,
    load_utterance,
    load_wav,
    read_manifest,
    stratified_split,
    write_manifest,
    write_wav,
)
from .dsp import (
    FeatureSequence,
    MfccConfig,
    dump_features,
    filter_center_frequencies,
    frame_signal,
    hamming_window,
    hz_to_mel,
    load_features,
    mel_filterbank,
    mel_to_hz,
    mfcc,
    power_spectrum,
    resample_48k_to_16k,
    zscore,
)
from .errors import (
    ConfigError,
    CorpusError,
    DivergenceError,
    EmptyCorpusError,
    FilterbankError,
    FormatError,
    GatedSerError,
    LabelDecodeError,
    NoiseLengthError,
    PairingError,
    ShapeError,
    SnrUndefinedError,
    StratificationError,
    UnsupportedFormatError,
)
from .experiment import (
    CELL_GRID,
    LEARNING_RATE_GRID,
    REFERENCE_RUNTIME_GAP_PCT,
    RESULTS_HEADER,
    ExperimentConfig,
    ExperimentResult,
    ResultRow,
    RuntimeComparison,
    compare_runtime,
    derive_seed,
    emit_plot_data,
    load_experiment_config,
    parse_config_file,
    read_results,
    run_experiment,
    sweep_cells,
    sweep_learning_rate,
    write_results,
)
from .mixer import MixedUtterance, SnrSpec, measure_power, mix, verify_snr
from .nncore import cross_entropy, matvec, sigmoid, softmax, tanh_act
from .trainer import (
    TrainConfig,
    TrainReport,
    benchmark,
    evaluate,
    gradient_norm_probe,
    train,
    write_report,
)

__version__ = "0.1.0"
