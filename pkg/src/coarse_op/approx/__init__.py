from coarse_op.approx.approximants import (
    EndCertificate,
    HaloCheck,
    approximant_end,
    approximant_mid,
    block_cutdown,
    cutdown_norms,
    defect_certificate_end,
    halo_estimate_check,
)
from coarse_op.approx.curve import METHODS, ApproximationCurve, CurveRow, roe_curve
from coarse_op.approx.decompose import (
    BandDecomposition,
    BandPart,
    PartialTranslation,
    band_decompose,
    bipartite_edge_coloring,
)
from coarse_op.approx.pipeline import PipelineReport, schedule_approximant
