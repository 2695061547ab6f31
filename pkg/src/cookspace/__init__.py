"""Cross-modal embedding of recipes and food images in one metric space.

Two encoder branches (a projection over fixed image features; recurrent
encoders over ingredient and instruction tokens) are trained jointly
with a margin-based ranking loss over triplets mined inside each batch,
then evaluated by cross-modal retrieval and queried directly in the
shared space.
"""

from .config import (
    EvalConfig,
    PathsConfig,
    RunConfig,
    dumps_config,
    load_config,
    loads_config,
    save_config,
)
from .data import (
    Dataset,
    ImageSample,
    RecipeSample,
    SynthConfig,
    Vocab,
    generate_synthetic,
    load_jsonl,
    make_splits,
    save_jsonl,
)
from .encoders import (
    IMAGE,
    RECIPE,
    Embedding,
    EncoderDims,
    EncoderParams,
    embed_single_ingredient,
    encode_image,
    encode_ingredients,
    encode_instructions,
    encode_recipe,
)
from .evaluation import (
    EmbeddingIndex,
    EvalReport,
    IndexEntry,
    RankList,
    build_index,
    evaluate_bags,
    evaluate_directions,
    format_report_table,
    median_rank,
    rank,
    recall_at_k,
    report_to_json,
)
from .exceptions import (
    BatchCompositionError,
    ConfigError,
    ContractError,
    CookspaceError,
    DatasetFormatError,
    DatasetIntegrityError,
    DegenerateRecipeError,
    DegenerateVectorError,
    DimensionError,
    EmptyInputError,
    NumericFaultError,
    OracleInvalidError,
    VocabularyError,
)
from .mining import (
    MiningResult,
    PositivePair,
    Triplet,
    compose_batch,
    hinge_loss,
    mine_triplets,
    squared_distance,
)
from .params import Parameter, ParamStore
from .plots import save_eval_figure, save_loss_curve
from .queries import (
    QueryHit,
    QueryResult,
    QuerySpec,
    class_constrained_query,
    ingredient_query,
    ingredient_vector,
    multimodal_query,
    remove_ingredient,
)
from .tape import Node, Tape, backward, grad_check
from .training import (
    AdamState,
    TrainConfig,
    TrainResult,
    adam_step,
    fit,
    sgd_step,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "BatchCompositionError",
    "ConfigError",
    "ContractError",
    "CookspaceError",
    "Dataset",
    "DatasetFormatError",
    "DatasetIntegrityError",
    "DegenerateRecipeError",
    "DegenerateVectorError",
    "DimensionError",
    "Embedding",
    "EmbeddingIndex",
    "EmptyInputError",
    "EncoderDims",
    "EncoderParams",
    "EvalConfig",
    "EvalReport",
    "IMAGE",
    "ImageSample",
    "IndexEntry",
    "MiningResult",
    "Node",
    "NumericFaultError",
    "OracleInvalidError",
    "ParamStore",
    "Parameter",
    "PathsConfig",
    "PositivePair",
    "QueryHit",
    "QueryResult",
    "QuerySpec",
    "RECIPE",
    "RankList",
    "RecipeSample",
    "RunConfig",
    "SynthConfig",
    "Tape",
    "TrainConfig",
    "TrainResult",
    "Triplet",
    "Vocab",
    "VocabularyError",
    "adam_step",
    "backward",
    "build_index",
    "class_constrained_query",
    "compose_batch",
    "dumps_config",
    "embed_single_ingredient",
    "encode_image",
    "encode_ingredients",
    "encode_instructions",
    "encode_recipe",
    "evaluate_bags",
    "evaluate_directions",
    "fit",
    "format_report_table",
    "generate_synthetic",
    "grad_check",
    "hinge_loss",
    "ingredient_query",
    "ingredient_vector",
    "load_config",
    "load_jsonl",
    "loads_config",
    "make_splits",
    "median_rank",
    "mine_triplets",
    "multimodal_query",
    "rank",
    "recall_at_k",
    "remove_ingredient",
    "report_to_json",
    "save_config",
    "save_eval_figure",
    "save_jsonl",
    "save_loss_curve",
    "sgd_step",
    "squared_distance",
]
