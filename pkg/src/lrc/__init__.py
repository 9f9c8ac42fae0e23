"""Logical randomized compiling for qudit stabilizer codes.

Exact Weyl-operator algebra, stabilizer codes with their cospace structure,
dense channels in the natural representation, a gadget-level circuit IR,
the randomizing compilation passes, and a verification suite that checks
the construction numerically at desk scale.
"""

from .channels import (
    DensityMatrix,
    Superoperator,
    apply,
    average,
    coherent_rotation,
    compose,
    factor_noise,
    identity_channel,
    natural_rep,
    stochastic_weyl,
    twirl,
    weyl_transfer_matrix,
)
from .circuits import (
    CompiledInstance,
    Gadget,
    LogicalCircuit,
    Register,
    evaluate,
    ideal_channel,
    parse,
    serialize,
    validate,
)
from .codes import (
    StabilizerCode,
    Syndrome,
    builtin_code,
    codespace_projector,
    cospace_projector,
    enumerate_pure_errors,
    enumerate_stabilizers,
    logical_weyls,
    syndrome_of,
    trivial_code,
)
from .compiler import (
    RandomizationPolicy,
    TwirlGroupSpec,
    compile_measurement,
    compile_reset,
    compile_syndrome_extraction,
    compile_unitary,
    compute_propagation_correction,
    instantiate,
)
from .verify import (
    CoherenceReport,
    VerificationReport,
    check_measurement_rc,
    check_sampling_equivalence,
    check_theorem1,
    check_theorem2,
    coherence_metrics,
    run_all,
    run_toffoli_example,
)
from .weyl import RootPhase, WeylOperator, braiding_phase, chi

__version__ = "0.1.0"
