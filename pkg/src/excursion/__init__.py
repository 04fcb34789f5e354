"""Critical points and Euler characteristics of high excursions of
moving-average compound-Poisson random fields on [-1, 1]^d."""

from .cube import FaceDescriptor, enumerate_faces, face_by_label, membership_face
from .estimators import ExcursionStatsTransformer, LimitLawEstimator
from .field import (
    AcceptanceFloorError,
    FieldRealization,
    SimWindow,
    build_window,
    conditioned_realization,
    simulate,
    simulate_batch,
)
from .kernels import GaussianBump, Oscillating, make_kernel
from .limit import (
    LimitLaw,
    LimitQuery,
    QuadConfig,
    QuadratureError,
    SectionCatalog,
    build_catalog,
    denominator_integral,
    ec_limit_distribution,
    limit_probability,
    sample_limit,
)
from .morse import (
    CriticalSet,
    DegenerateCritical,
    euler_characteristic_cubical,
    euler_characteristic_morse,
    filter_above,
    find_critical_points,
    mark_extended_outward,
)
from .tails import ParetoTail, TypeGTail, make_tail

__version__ = "0.1.0"
