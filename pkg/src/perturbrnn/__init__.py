"""Perturbation-based learning rules for recurrent networks, with a BPTT baseline and benchmark harness."""
from .errors import (
    ConfigurationError,
    ContractError,
    DataError,
    DegenerateNoiseError,
    InstabilityError,
    PerturbRNNError,
)
from .harness import (
    LEARNERS,
    ExperimentConfig,
    RunRecord,
    load_config,
    make_config,
    read_metrics,
    run_comparison,
    run_multi_seed,
    run_scaling_sweep,
    run_training,
    write_metrics,
)
from .learning_rules import (
    UpdateSet,
    anp_update,
    bptt_gradients,
    decorrelation_update,
    np_global_update,
    np_local_update,
    rflo_update,
    wp_global_update,
    wp_local_update,
)
from .metrics import RunStatus, decorrelation_loss, detect_instability, sequence_loss, step_loss
from .rnn_core import (
    NoiseStream,
    PassTrace,
    RnnParams,
    forward_clean,
    forward_node_noisy,
    forward_weight_noisy,
    init_params,
)
from .tasks import (
    CopyingConfig,
    MackeyGlassConfig,
    SequenceDataset,
    WeatherConfig,
    copying_generate,
    mackey_glass_generate,
    train_test_split,
    weather_load,
)

__version__ = "0.1.0"
