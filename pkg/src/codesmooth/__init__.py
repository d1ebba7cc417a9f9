"""Black-box randomized smoothing and certified robustness for code
classifiers: semantics-preserving identifier perturbation, majority-vote
smoothing, and certified L0 radii over identifier renamings."""

__version__ = "0.1.0"

from .adapters import (
    ClassifierAdapter,
    ClassifyItem,
    ClassifyResult,
    classify_batch,
    make_adapter,
)
from .certification import (
    Certificate,
    ConfidenceBounds,
    SmoothedClassifier,
    VoteTally,
    beta_factor,
    beta_quantile,
    certificate_row,
    certified_radius,
    certify,
    estimate_bounds,
    regularized_incomplete_beta,
    smoothed_predict,
    tally_votes,
)
from .code_model import (
    CodeSnippet,
    IdentifierEntry,
    IdentifierTable,
    Token,
    identifier_distance,
    rename_identifier,
    rename_many,
    snippet_from_source,
    tokenize,
)
from .errors import (
    AdapterError,
    AlignmentError,
    CodesmoothError,
    DataError,
    LexError,
    NumericsError,
    PerturbationError,
    ProtocolError,
    RenameError,
    TransportError,
)
from .evaluation import (
    AdvPair,
    DatasetRecord,
    EvalReport,
    abstain_rate,
    accuracy,
    attack_success_rate,
    certify_dataset,
    emit_report,
    evaluate_dataset,
    load_adv,
    load_dataset,
    mean_radius,
    naive_random_rename_attack,
    ncrr,
)
from .perturbation import (
    ALL_OPS,
    EditOp,
    SmoothingConfig,
    edit_budget,
    generate_batch,
    generate_smoothed_sample,
    mask_identifier,
    perturbed_count,
    retained_count,
)

__all__ = [
    "ALL_OPS",
    "AdapterError",
    "AdvPair",
    "AlignmentError",
    "Certificate",
    "ClassifierAdapter",
    "ClassifyItem",
    "ClassifyResult",
    "CodeSnippet",
    "CodesmoothError",
    "ConfidenceBounds",
    "DataError",
    "DatasetRecord",
    "EditOp",
    "EvalReport",
    "IdentifierEntry",
    "IdentifierTable",
    "LexError",
    "NumericsError",
    "PerturbationError",
    "ProtocolError",
    "RenameError",
    "SmoothedClassifier",
    "SmoothingConfig",
    "Token",
    "TransportError",
    "VoteTally",
    "abstain_rate",
    "accuracy",
    "attack_success_rate",
    "beta_factor",
    "beta_quantile",
    "certificate_row",
    "certified_radius",
    "certify",
    "certify_dataset",
    "classify_batch",
    "edit_budget",
    "emit_report",
    "estimate_bounds",
    "evaluate_dataset",
    "generate_batch",
    "generate_smoothed_sample",
    "identifier_distance",
    "load_adv",
    "load_dataset",
    "make_adapter",
    "mask_identifier",
    "mean_radius",
    "naive_random_rename_attack",
    "ncrr",
    "perturbed_count",
    "regularized_incomplete_beta",
    "rename_identifier",
    "rename_many",
    "retained_count",
    "smoothed_predict",
    "snippet_from_source",
    "tally_votes",
    "tokenize",
]
