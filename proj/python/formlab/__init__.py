"""Python access to the formlab core: growth, rendering, features, embeddings and the record store."""

from ._formlab import (
    FEATURE_DIM,
    GENOTYPE_SIZE,
    FormatError,
    GrowthResult,
    Image,
    Model,
    Store,
    StoreError,
    ValidationError,
    extract_features,
    grow,
    parameter_names,
    pca2,
    render,
    sweep_genotypes,
    tsne,
    validate_genotype,
)

__all__ = [
    "FEATURE_DIM",
    "GENOTYPE_SIZE",
    "FormatError",
    "GrowthResult",
    "Image",
    "Model",
    "Store",
    "StoreError",
    "ValidationError",
    "extract_features",
    "grow",
    "parameter_names",
    "pca2",
    "render",
    "sweep_genotypes",
    "tsne",
    "validate_genotype",
]
