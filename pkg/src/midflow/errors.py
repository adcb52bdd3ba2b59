"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An operation was called with inputs outside its contract."""


class ConfigError(ValueError):
    """A configuration value or file is invalid."""


class DataError(ValueError):
    """A dataset, image, flow file or checkpoint could not be used."""


class CheckpointError(DataError):
    """A checkpoint file is corrupt, incompatible or of the wrong version."""


class TrainingDiverged(RuntimeError):
    """The training loss became non-finite."""
