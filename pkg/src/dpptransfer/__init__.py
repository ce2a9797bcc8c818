"""Count-law preserving discretization of determinantal point processes.

Build a finite-rank kernel, partition its ground space, and
:func:`~dpptransfer.transference.transference` returns a discrete kernel
whose block counts share the joint law of the cell counts.  Exact count laws,
an exact sampler and tail diagnostics are provided to check this.
"""
__version__ = "0.1.0"

from ._backend import BACKEND
from .countlaw import (CountLaw, empirical_vs_exact, joint_law, single_cell_law, tv_distance,
                       verify_transference)
from .errors import DomainError, DPPError, SizeGuardError, ToleranceError, ValidationError
from .ground import Cell, GroundSpace, Partition, Quadrature, inner_product, ladder, measure, refine
from .kernel import (CompressedKernel, SpectralKernel, compress, eval_kernel, intensity_determinant,
                     make_kernel, preset, spectrum)
from .sampling import PointConfiguration, RngStream, Sampler, discretize_for_sampling, sample, sample_counts
from .tail import (CountEvent, LEnsembleTable, TailPlan, conditional_law, downward_martingale_probe,
                   l_ensemble_enumerate, levy_convergence, tail_mixing_sweep)
from .transference import (CellBasis, TransferMap, TransferredKernel, build_cell_bases, build_transfer,
                           spectrum_check, transfer, transference)

__all__ = [
    "BACKEND", "Cell", "CellBasis", "CompressedKernel", "CountEvent", "CountLaw", "DPPError",
    "DomainError", "GroundSpace", "LEnsembleTable", "Partition", "PointConfiguration",
    "Quadrature", "RngStream", "Sampler", "SizeGuardError", "SpectralKernel", "TailPlan",
    "ToleranceError", "TransferMap", "TransferredKernel", "ValidationError", "build_cell_bases",
    "build_transfer", "compress", "conditional_law", "discretize_for_sampling",
    "downward_martingale_probe", "empirical_vs_exact", "eval_kernel", "inner_product",
    "intensity_determinant", "joint_law", "l_ensemble_enumerate", "ladder", "levy_convergence",
    "make_kernel", "measure", "preset", "refine", "sample", "sample_counts", "single_cell_law",
    "spectrum", "spectrum_check", "tail_mixing_sweep", "transfer", "transference", "tv_distance",
]
