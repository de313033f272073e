"""Reconstruction metrics, FER cross-validation, motion transfer and ablations."""
from .ablation import VARIANT_LABELS, ablation_grid, check_variants, run_ablation
from .metrics import rmse, ssim
from .protocol import (EPE_CONVENTION, DatasetFoldResult, EvalReport, IdentityFrontalizer, average_face,
                       evaluate_fold, frontalize_flow, transfer_expression)
from .report import (ablation_table, accuracy_table, reconstruction_table, sample_mosaic, write_ablation_report,
                     write_eval_report)

__all__ = [
    "VARIANT_LABELS", "ablation_grid", "check_variants", "run_ablation", "rmse", "ssim", "EPE_CONVENTION",
    "DatasetFoldResult", "EvalReport", "IdentityFrontalizer", "average_face", "evaluate_fold", "frontalize_flow",
    "transfer_expression", "ablation_table", "accuracy_table", "reconstruction_table", "sample_mosaic",
    "write_ablation_report", "write_eval_report",
]
