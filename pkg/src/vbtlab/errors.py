"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration value is out of range or inconsistent."""


class ContractError(RuntimeError):
    """An operation was called outside its contract (e.g. stepping a finished episode)."""


class DatasetFormatError(ValueError):
    """A dataset file is malformed; message names the offending line."""


class MixError(ValueError):
    """Two datasets cannot be mixed (incompatible or empty)."""


class TrainingDiverged(RuntimeError):
    """A loss became non-finite during training; message names the step and term."""


class NoCriticError(ValueError):
    """A value-function diagnostic was requested from a model without critics."""
