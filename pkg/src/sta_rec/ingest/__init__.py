"""Check-in ingestion: parsing, discretization, triples, and splits."""

from .checkins import CheckIn, ParseResult, RecordFormat, parse_checkins
from .discretize import (
    Discretizer,
    FileRegions,
    KMeansRegions,
    TIME_SCHEMES,
    assign_region,
    discretize_time,
    fit_regions,
    num_time_slots,
)
from .splits import Split, SplitSpec, split_by_user
from .triples import (
    IdMap,
    TripleStore,
    Vocab,
    build_triples,
    compute_relation_stats,
    content_pattern_key,
    parse_pattern_key,
    pattern_key,
)

__all__ = [
    "CheckIn",
    "Discretizer",
    "FileRegions",
    "IdMap",
    "KMeansRegions",
    "ParseResult",
    "RecordFormat",
    "Split",
    "SplitSpec",
    "TIME_SCHEMES",
    "TripleStore",
    "Vocab",
    "assign_region",
    "build_triples",
    "compute_relation_stats",
    "content_pattern_key",
    "discretize_time",
    "fit_regions",
    "num_time_slots",
    "parse_checkins",
    "parse_pattern_key",
    "pattern_key",
    "split_by_user",
]
