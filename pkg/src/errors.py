"""Exception types shared by the simulator modules."""


class SimulationError(RuntimeError):
    """Base class for failures while evaluating a model or running trials."""


class NonPhysicalStateError(SimulationError):
    """A state violates the uncertainty relation where a physical one is required."""


class DegenerateMeasurementError(SimulationError):
    """Conditioning on a quadrature whose variance is (numerically) zero."""


class ConvergenceError(SimulationError):
    """An eigensolver, root finder or quadrature routine did not converge."""


class InsufficientSamplesError(SimulationError):
    """Too few accepted trials to form the requested estimator."""


class ConfigError(ValueError):
    """Invalid or unparseable configuration.

    Carries the offending key and, when read from a file, the source line.
    """

    def __init__(self, message: str, key: str = None, line: int = None, source: str = None):
        self.key = key
        self.line = line
        self.source = source
        where = []
        if source:
            where.append(str(source))
        if line is not None:
            where.append(f"line {line}")
        if key:
            where.append(f"key '{key}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class SimulationWarning(UserWarning):
    """Soft numerical caveat raised through warnings.warn."""


class NonPhysicalOutputWarning(SimulationWarning):
    """A channel or teleporter produced a state outside the physical set."""


class AsymmetricStateWarning(SimulationWarning):
    """Entanglement of formation evaluated on a state whose reduced modes differ."""


class ClosedFormMismatchWarning(SimulationWarning):
    """A printed closed form disagrees with the numerical ground truth."""
