"""Training configuration and the two-phase training loop."""
from .config import (
    DecayConfig, FoldConfig, LearningRates, OptimizerConfig, PerceptualConfig, ScorerConfig, TrainConfig,
    apply_overrides, config_from_dict, config_hash, config_to_dict, dump_config, env_overrides, load_config,
    reference_config, toy_config,
)
from .loop import (
    Batch, FoldRun, Models, TensorCorpus, build_models, build_optimizers, epoch_batches, load_models,
    lr_schedule, run_training, train_fold, train_step_frontalization, train_step_scorer, train_step_warping,
)
