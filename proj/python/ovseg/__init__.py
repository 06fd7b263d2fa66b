"""Open-vocabulary segmentation toolkit with SG-IoU evaluation."""

from ._ovseg import (
    IGNORE_LABEL,
    ConfigError,
    ContractError,
    DegenerateEmbeddingError,
    DomainError,
    EmptyProposalError,
    Error,
    ShapeError,
    ToyEncoder,
    ValidationError,
    assign_labels,
    background_patches,
    balance_factor,
    calibrate,
    classify_embedding,
    confusion_matrix,
    crop_and_mask,
    cs_embedding,
    default_config,
    ensemble_scores,
    evaluate,
    frequency_kernel,
    generate_scene,
    kernel_csv,
    low_frequency_enhance,
    replacement_count,
    replacement_plan,
    run,
    text_bank,
)

__version__ = "0.1.0"
