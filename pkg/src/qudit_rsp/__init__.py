"""Remote preparation of 4- and 8-level states and their linear-optics realization."""
from .core import (
    BasisError,
    DimensionError,
    MeasurementOutcome,
    Operator,
    StateVector,
    computational_basis,
    fidelity,
    gram_deviation,
    kron,
    measure_in_basis,
    tensor,
)
from .optical import (
    Block,
    ImperfectionParams,
    MeshPlan,
    VbsPlan,
    average_fidelity,
    block_T,
    decompose,
    embed_block,
    fidelity_surface,
    imperfect_block,
    reconstruct,
    vbs_concentrate,
)
from .protocols import (
    ChannelSpec,
    ProtocolRun,
    SampledRun,
    SpecError,
    TargetSpec,
    basis_matrix,
    correction,
    filter_unitary,
    measurement_basis,
    run_exact,
    run_sampled,
    success_probability,
)

__version__ = "0.1.0"
