"""Exception hierarchy with stable, machine-readable error codes.

Every failure mode raised by this package carries a short ``code`` string
that stays fixed across releases; the CLI prints it and maps it to an exit
status.  Extra context (condition estimates, blow-up times, iteration
traces) travels in the ``details`` dict.
"""


class PowermorError(Exception):
    """Base class for all package errors."""

    code = "error"

    def __init__(self, message: str = "", **details):
        super().__init__(message or self.code)
        self.details = details


class EigNoConvergence(PowermorError):
    """The QR eigenvalue iteration failed to converge."""

    code = "eig-no-convergence"


class EvalAtPole(PowermorError):
    """Transfer-function evaluation requested at, or numerically too close to, a pole."""

    code = "eval-at-pole"


class SimulationDiverged(PowermorError):
    """State norm blew up during time integration; details carry the time."""

    code = "diverged"


class DefectiveMatrix(PowermorError):
    """Eigenvector basis too ill-conditioned to trust; details carry the estimate."""

    code = "defective-or-ill-conditioned"


class BadCriterion(PowermorError):
    """Unknown mode-ordering criterion."""

    code = "bad-criterion"


class SingularDiscard(PowermorError):
    """A mode with |Re lambda| at numerical zero landed in the discard set."""

    code = "singular-discard"


class NotConjugateClosed(PowermorError):
    """Eigenvalue list is not closed under complex conjugation."""

    code = "not-conjugate-closed"


class NotStrictlyStable(PowermorError):
    """Operation requires every eigenvalue strictly in the open left half-plane."""

    code = "not-strictly-stable"


class OrderTooLarge(PowermorError):
    """Requested reduced order exceeds what the model supports."""

    code = "order-too-large"


class BasisRankDeficient(PowermorError):
    """Projection basis lost rank during orthogonalization; details carry the achieved rank."""

    code = "basis-rank-deficient"


class ShiftHitsPole(PowermorError):
    """A shifted solve (sI - A) was numerically singular."""

    code = "shift-hits-pole"


class GramianProjectionSingular(PowermorError):
    """V'QV was numerically singular; the oblique projector is undefined."""

    code = "gramian-projection-singular"


class MimoUnsupported(PowermorError):
    """The Gramian-weighted Krylov method handles one input/output channel at a time."""

    code = "mimo-unsupported-for-svd-krylov"


class ParseError(PowermorError):
    """Malformed input file; details carry the offending field or position."""

    code = "parse-error"


class ValidationError(PowermorError):
    """Structurally valid input violating a documented invariant."""

    code = "validation-error"


class PowerFlowDiverged(PowermorError):
    """Newton iteration failed; details carry the mismatch trace."""

    code = "pf-diverged"


class DegenerateGenerator(PowermorError):
    """Generator initialization produced a zero internal EMF."""

    code = "degenerate-generator"


class KronSingular(PowermorError):
    """Interior node block was singular during network reduction."""

    code = "kron-singular"


class GridMismatch(PowermorError):
    """Trajectories live on different time grids."""

    code = "grid-mismatch"


class ZeroReference(PowermorError):
    """Relative error against a zero reference frequency is undefined."""

    code = "zero-reference"
