"""Information-theoretic representation distillation (ITRD) in numpy.

Matrix-based Renyi entropy estimators, the correlation and mutual-information
distillation losses with analytic gradients, and a small distillation demo.
"""

from .entropy import (
    KernelSpec,
    gram_matrix,
    information_potential,
    joint_entropy,
    matrix_entropy,
    mutual_information,
    shannon_entropy_limit,
)
from .errors import (
    DegenerateKernelError,
    DimensionError,
    DomainError,
    ItrdError,
    NumericalError,
    TrainingError,
)
from .linalg import (
    SpectralDecomposition,
    batch_normalize,
    frobenius_norm_sq,
    hadamard,
    l2_normalize_rows,
    symmetric_eigenvalues,
    trace_normalize,
)
from .losses import (
    EmbeddingLayer,
    ItrdConfig,
    LossBreakdown,
    MiVariant,
    correlation_loss,
    correlation_loss_grad,
    cross_correlation_diag,
    itrd_loss,
    itrd_loss_and_grad,
    mi_loss,
    mi_loss_grad,
)

__version__ = "0.1.0"
