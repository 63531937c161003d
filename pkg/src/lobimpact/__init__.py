"""Price impact analysis for LOBSTER limit order book data."""

__version__ = "0.1.0"

from .bars import Bar, BarKind, Trades, sample_bars
from .impact import (
    ImbalanceSamples,
    ResponseMode,
    ResponseStats,
    aggregate_impact_curve,
    diffusion,
    lag1_response,
    micro_price,
    mid_price,
    order_flow_imbalance,
    spread,
    volume_conditioned_response,
)
from .ingest import (
    BookSnapshot,
    CrossedBookError,
    EventRecord,
    EventType,
    LobsterParseError,
    MergedStream,
    load_day,
    merge_streams,
    parse_message_file,
    parse_orderbook_file,
    validate_stream,
)
from .preprocess import MarketOrders, SessionWindow, clip_session, reconstruct_market_orders, remove_outliers
from .regress import (
    KyleLambdaRegressor,
    OLSRegressor,
    PowerLawRegressor,
    RegressionTree,
    SingularMatrixError,
    fit_report,
    kfold_cv,
    kyle_lambda,
    ols_fit,
    power_law_fit,
    tree_fit,
)
from .synth import KyleWorldConfig, ZiConfig, generate_kyle_world, generate_zero_intelligence

__all__ = [
    "__version__",
    "Bar",
    "BarKind",
    "Trades",
    "sample_bars",
    "ImbalanceSamples",
    "ResponseMode",
    "ResponseStats",
    "aggregate_impact_curve",
    "diffusion",
    "lag1_response",
    "micro_price",
    "mid_price",
    "order_flow_imbalance",
    "spread",
    "volume_conditioned_response",
    "BookSnapshot",
    "CrossedBookError",
    "EventRecord",
    "EventType",
    "LobsterParseError",
    "MergedStream",
    "load_day",
    "merge_streams",
    "parse_message_file",
    "parse_orderbook_file",
    "validate_stream",
    "MarketOrders",
    "SessionWindow",
    "clip_session",
    "reconstruct_market_orders",
    "remove_outliers",
    "KyleLambdaRegressor",
    "OLSRegressor",
    "PowerLawRegressor",
    "RegressionTree",
    "SingularMatrixError",
    "fit_report",
    "kfold_cv",
    "kyle_lambda",
    "ols_fit",
    "power_law_fit",
    "tree_fit",
    "KyleWorldConfig",
    "ZiConfig",
    "generate_kyle_world",
    "generate_zero_intelligence",
]
