"""Serial schedule generation for resource-constrained project scheduling.

Four interchangeable decoders (conventional, enhanced backward-scan,
Bloom-filter assisted, and an online hybrid that picks between the last
two), plus instance handling, a permutation-based annealing search and
benchmarking utilities.
"""

from ssgs.instance import (
    GeneratorParams,
    Instance,
    InstanceError,
    Job,
    ParseError,
    Permutation,
    Schedule,
    generate_instance,
    horizon,
    is_active,
    load_instance,
    parse_native,
    parse_psplib,
    random_topological_permutation,
    serialize_native,
    validate_schedule,
)
from ssgs.core import (
    AvailabilityProfile,
    ConventionalScheduler,
    find_conventional,
    restore_availability,
    ssgs_run,
    update_availability,
)
from ssgs.fast import EnhancedScheduler, InsufficiencyStats, preprocess, ssgs_data_run
from ssgs.bloom import BloomScheduler, BloomStructure, build_structure
from ssgs.hybrid import HybridScheduler, sign_test
from ssgs.metaheuristic import RunStats, run_metaheuristic

__all__ = [
    "AvailabilityProfile",
    "BloomScheduler",
    "BloomStructure",
    "ConventionalScheduler",
    "EnhancedScheduler",
    "GeneratorParams",
    "HybridScheduler",
    "Instance",
    "InstanceError",
    "InsufficiencyStats",
    "Job",
    "ParseError",
    "Permutation",
    "RunStats",
    "Schedule",
    "build_structure",
    "find_conventional",
    "generate_instance",
    "horizon",
    "is_active",
    "load_instance",
    "parse_native",
    "parse_psplib",
    "preprocess",
    "random_topological_permutation",
    "restore_availability",
    "run_metaheuristic",
    "serialize_native",
    "sign_test",
    "ssgs_data_run",
    "ssgs_run",
    "update_availability",
    "validate_schedule",
]
