"""Discovery spaces: configuration search with a shared, reconciled sample store."""

from .engine import DiscoverySpace, Sample, create_space, measure
from .errors import (
    ConfigurationError,
    DSpaceError,
    EncapsulationError,
    IntegrityError,
    MappingError,
    PolicyViolation,
    SpaceExhausted,
)
from .optimizers import Objective, OperationResult, make_optimizer, run_optimization, should_stop
from .space import (
    ActionSpace,
    Configuration,
    Dimension,
    Experiment,
    ProbabilitySpace,
    ValueMapping,
    canonical_id,
    cardinality,
    draw,
    enumerate_space,
    map_configuration,
)
from .store import MeasurementResult, SampleStore, StoredEntity
from .transfer import TransferReport, run_rssc

__version__ = "0.1.0"
