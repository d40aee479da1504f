"""Partial GSVD of large sparse matrix pairs by a cross-product-free Jacobi-Davidson method."""

from .dense import DenseGsvd, ThinQr, dense_gsvd, jacobi_svd, qr_append_column
from .errors import (
    DegeneratePairError,
    InputError,
    MatrixMarketError,
    RankDeficiencyError,
    RegularityError,
)
from .minres import PencilOperator, ProjectedOperator, apply_projected, minres_solve
from .mmio import read_matrix_market, write_matrix_market
from .solver import ConvergedSet, RunStats, SolverConfig, run
from .sparse import MatrixPair, SparseMatrix, gen_b0, gen_b1, gen_b2, one_norm, spmv, spmv_transpose

__version__ = "0.1.0"
