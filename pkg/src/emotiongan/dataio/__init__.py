"""Dataset ingestion, pairing, synthetic non-frontal generation and folds."""
from .corpus import (
    CorpusConfig, PairedSample, SynthesisConfig, build_paired_samples, cache_key_for, load_corpus,
    stable_seed, write_corpus,
)
from .folds import FoldSplit, make_folds
from .manifest import POSE_CATEGORIES, Dataset, Sequence, load_dataset
from .pairing import FRAME_TO_FRAME, NEUTRAL_APEX, pair_frame_to_frame, pair_neutral_apex
from .synthesis import rotate_frame, rotation_matrix, synthesize_nonfrontal
from .toy import toy_corpus, toy_paired_sequences, toy_sequences, write_sequences

__all__ = [
    "CorpusConfig", "Dataset", "FRAME_TO_FRAME", "FoldSplit", "NEUTRAL_APEX", "POSE_CATEGORIES",
    "PairedSample", "Sequence", "SynthesisConfig", "build_paired_samples", "cache_key_for",
    "load_corpus", "load_dataset", "make_folds", "pair_frame_to_frame", "pair_neutral_apex",
    "rotate_frame", "rotation_matrix", "stable_seed", "synthesize_nonfrontal", "toy_corpus",
    "toy_paired_sequences", "toy_sequences", "write_corpus", "write_sequences",
]
