"""Cohort curation: keyword classifiers, frequency tables, test splits, pairing."""
from .alignment import AlignmentResult, normalized_cross_correlation, verify_pair_alignment
from .cohort import (
    COHORT_FIELDS,
    CohortRow,
    CohortTable,
    SeriesMetadata,
    build_cohort,
    dump_cohort_csv,
    load_cohort,
    parse_cohort,
)
from .keywords import (
    LOCATIONS,
    SEQUENCE_BASES,
    BodyLocation,
    SequenceLabel,
    classify_body_location,
    classify_sequence,
)
from .splits import Selection, SplitConfig, SplitPlan, construct_test_splits, rank_sequences

__all__ = [
    "AlignmentResult", "normalized_cross_correlation", "verify_pair_alignment",
    "COHORT_FIELDS", "CohortRow", "CohortTable", "SeriesMetadata", "build_cohort",
    "dump_cohort_csv", "load_cohort", "parse_cohort",
    "LOCATIONS", "SEQUENCE_BASES", "BodyLocation", "SequenceLabel",
    "classify_body_location", "classify_sequence",
    "Selection", "SplitConfig", "SplitPlan", "construct_test_splits", "rank_sequences",
]
